//! Minimal CSV output: `\n` line endings, `.` decimal separator, 17
//! significant digits.

use std::fmt::Write as _;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        // keep "-0" out of the artifacts
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    format!("{x:.16e}")
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Accumulates CSV text in memory.
#[derive(Debug, Default, Clone)]
pub struct CsvTable {
    buf: String,
}

impl CsvTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// A `# key=value ...` line describing how the data was produced.
    pub fn comment(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            let _ = writeln!(self.buf, "# {line}");
        }
        self
    }

    pub fn header(&mut self, cols: &[&str]) -> &mut Self {
        self.row(cols.iter().map(|c| c.to_string()))
    }

    pub fn row<I, S>(&mut self, fields: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let line: Vec<String> = fields.into_iter().map(|f| quote(f.as_ref())).collect();
        self.buf.push_str(&line.join(","));
        self.buf.push('\n');
        self
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn quoting() {
        let mut t = CsvTable::new();
        t.comment("a=1").header(&["x", "note"]).row(["1", "has,comma"]);
        assert_eq!(t.as_str(), "# a=1\nx,note\n1,\"has,comma\"\n");
    }
}
