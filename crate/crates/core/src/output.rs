//! Plot-ready text formats: comma-separated tables with a header row, LF line
//! endings and `%.12g` numbers, so files compare byte-for-byte across runs.

use std::fmt::Write as _;

use crate::design::LocusTable;
use crate::sde::{EnsembleStats, EquivalenceReport, Trajectory};

/// Formats `v` like C's `printf("%.12g", v)`.
pub fn fmt_g(v: f64) -> String {
    const PREC: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PREC).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (PREC - 1 - exp) as usize, v);
        strip_zeros(&fixed).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Comma-separated table with a header row and LF line endings; fields are
/// quoted only when they need it.
pub struct Csv {
    w: csv::Writer<Vec<u8>>,
}

impl Csv {
    pub fn with_header(cols: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(cols).expect("in-memory write");
        Csv { w }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn into_string(self) -> String {
        let bytes = self.w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }
}

pub fn locus_csv(table: &LocusTable) -> String {
    let mut csv = Csv::with_header(&[
        "theta",
        "theta_eval",
        "lambda",
        "alpha",
        "x_ss",
        "z_ss",
        "r_squared",
        "equator_flag",
        "errors",
    ]);
    for r in &table.rows {
        csv.row(&[
            fmt_g(r.theta),
            fmt_g(r.theta_eval),
            fmt_g(r.lambda_opt),
            fmt_g(r.alpha_opt),
            fmt_g(r.x_ss),
            fmt_g(r.z_ss),
            fmt_g(r.r_squared),
            (r.equator_flag as u8).to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    csv.into_string()
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut csv = Csv::with_header(&["t", "x", "y", "z", "r2", "dI"]);
    for ((t, b), di) in tr.times.iter().zip(&tr.states).zip(&tr.photocurrent_increments) {
        csv.row(&[
            fmt_g(*t),
            fmt_g(b.x),
            fmt_g(b.y),
            fmt_g(b.z),
            fmt_g(b.norm_squared()),
            fmt_g(*di),
        ]);
    }
    csv.into_string()
}

pub fn ensemble_csv(stats: &EnsembleStats, eq: &EquivalenceReport) -> String {
    let mut csv = Csv::with_header(&[
        "t", "mean_x", "mean_y", "mean_z", "se_x", "se_y", "se_z", "mean_r2", "det_x", "det_y",
        "det_z",
    ]);
    for j in 0..stats.times.len() {
        let m = stats.mean_bloch[j];
        let se = stats.stderr_bloch[j];
        let d = eq.deterministic[j];
        csv.row(&[
            fmt_g(stats.times[j]),
            fmt_g(m.x),
            fmt_g(m.y),
            fmt_g(m.z),
            fmt_g(se[0]),
            fmt_g(se[1]),
            fmt_g(se[2]),
            fmt_g(stats.mean_r_squared[j]),
            fmt_g(d.x),
            fmt_g(d.y),
            fmt_g(d.z),
        ]);
    }
    csv.into_string()
}

/// Human-readable key/value block used by the `design` command.
pub fn kv_block(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k:<width$}  {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        // reference strings from C printf("%.12g")
        let cases: [(f64, &str); 14] = [
            (0.0, "0"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 / 3.0, "0.666666666667"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (1e-4, "0.0001"),
            (1.5e-5, "1.5e-05"),
            (std::f64::consts::PI, "3.14159265359"),
            (-1e100, "-1e+100"),
            (999999999999.5, "1e+12"),
            (0.00012345678901234, "0.000123456789012"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_g(v), want, "{v:e}");
        }
        assert_eq!(fmt_g(f64::NAN), "nan");
        assert_eq!(fmt_g(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_quotes_free_text() {
        let mut c = Csv::with_header(&["a", "b"]);
        c.row(&["1".into(), "2".into()]);
        c.row(&["3".into(), r#"x "y", z"#.into()]);
        assert_eq!(c.into_string(), "a,b\n1,2\n3,\"x \"\"y\"\", z\"\n");
    }
}
