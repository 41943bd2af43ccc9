//! Experiment reports and their CSV / text serialization.

use std::fmt::Write as _;
use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub description: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: String,
    pub coefficients: Vec<(String, f64)>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub parameters: Vec<(String, String)>,
    pub measurements: Vec<(String, f64)>,
    pub bounds_checked: Vec<BoundCheck>,
    pub fit: Option<Fit>,
    pub notes: Vec<String>,
    pub pass: bool,
    /// False when any solve behind the report stopped without converging.
    pub converged: bool,
    pub wall_time: f64,
}

/// Shortest round-trip-exact text for a double, with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

impl ExperimentReport {
    pub fn new(id: &str) -> Self {
        ExperimentReport {
            experiment_id: id.to_string(),
            parameters: Vec::new(),
            measurements: Vec::new(),
            bounds_checked: Vec::new(),
            fit: None,
            notes: Vec::new(),
            pass: true,
            converged: true,
            wall_time: 0.0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.push((key.to_string(), value.to_string()));
        self
    }

    pub fn measure(&mut self, name: &str, value: f64) -> &mut Self {
        self.measurements.push((name.to_string(), value));
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Record `lhs relation rhs`; NaN on either side fails.
    pub fn check(&mut self, description: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> bool {
        let pass = relation.holds(lhs, rhs);
        self.bounds_checked.push(BoundCheck { description: description.into(), lhs, relation, rhs, pass });
        self.refresh();
        pass
    }

    pub fn refresh(&mut self) {
        self.pass = self.bounds_checked.iter().all(|b| b.pass) && self.measurements.iter().all(|(_, v)| v.is_finite());
    }

    /// First 16 hex digits of SHA-256 over `key=value` lines.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.experiment_id.as_bytes());
        for (k, v) in &self.parameters {
            h.update(b"\n");
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let hash = self.param_hash();
        for b in &self.bounds_checked {
            w.write_record([
                self.experiment_id.as_str(),
                hash.as_str(),
                b.description.as_str(),
                &fmt_f64(b.lhs),
                b.relation.symbol(),
                &fmt_f64(b.rhs),
                if b.pass { "true" } else { "false" },
            ])?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        self.write_csv_rows(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Human-readable summary, including wall time.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "== {} [{}] {}", self.experiment_id, self.param_hash(), if self.pass { "PASS" } else { "FAIL" });
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "  param {k} = {v}");
        }
        for (k, v) in &self.measurements {
            let _ = writeln!(s, "  value {k} = {v:.12e}");
        }
        for b in &self.bounds_checked {
            let _ = writeln!(
                s,
                "  {} {}: {:.12e} {} {:.12e}",
                if b.pass { "ok  " } else { "FAIL" },
                b.description,
                b.lhs,
                b.relation.symbol(),
                b.rhs
            );
        }
        if let Some(f) = &self.fit {
            let coeffs: Vec<String> = f.coefficients.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
            let _ = writeln!(s, "  fit {}: {} (residual {:.3e})", f.model, coeffs.join(", "), f.residual);
        }
        if !self.converged {
            let _ = writeln!(s, "  warning: not every solve converged");
        }
        for n in &self.notes {
            let _ = writeln!(s, "  note: {n}");
        }
        let _ = writeln!(s, "  wall time {:.3} s", self.wall_time);
        s
    }
}

pub const CSV_HEADER: [&str; 7] = ["experiment_id", "param_hash", "name", "lhs", "relation", "rhs", "pass"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_conjunction() {
        let mut r = ExperimentReport::new("x");
        assert!(r.pass);
        r.check("a", 1.0, Relation::Le, 2.0);
        assert!(r.pass);
        r.check("b", 1.0, Relation::Ge, 2.0);
        assert!(!r.pass);
        let mut q = ExperimentReport::new("y");
        q.check("nan", f64::NAN, Relation::Le, 1.0);
        assert!(!q.pass);
    }

    #[test]
    fn csv_quotes_and_digits() {
        let mut r = ExperimentReport::new("id");
        r.param("s", 0.5);
        r.check("a, with comma", 0.1, Relation::Le, 1.0 / 3.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"a, with comma\""));
        assert!(text.contains("3.3333333333333331e-1"));
        let parsed: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(parsed, 1.0 / 3.0);
    }

    #[test]
    fn hash_depends_on_parameters() {
        let mut a = ExperimentReport::new("id");
        a.param("s", 0.5);
        let mut b = ExperimentReport::new("id");
        b.param("s", 0.25);
        assert_ne!(a.param_hash(), b.param_hash());
        assert_eq!(a.param_hash().len(), 16);
    }
}
