//! Condition reports and per-instance ratio tables.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A float that serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Num(pub f64);

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0 || (self.0.is_nan() && other.0.is_nan())
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num(v)
    }
}

impl From<usize> for Num {
    fn from(v: usize) -> Self {
        Num(v as f64)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                match v {
                    "inf" => Ok(Num(f64::INFINITY)),
                    "-inf" => Ok(Num(f64::NEG_INFINITY)),
                    "nan" => Ok(Num(f64::NAN)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Failed,
    /// Candidate objects witness an existential condition; failure would refute nothing.
    OneSidedCertificate,
    Errored,
    Skipped,
}

impl Verdict {
    pub fn passes(self) -> bool {
        matches!(self, Verdict::Certified | Verdict::OneSidedCertificate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub verdict: Verdict,
    pub constants: BTreeMap<String, Num>,
    pub witness: BTreeMap<String, Num>,
    pub ranges: BTreeMap<String, [Num; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition: impl Into<String>, verdict: Verdict) -> Self {
        ConditionReport {
            condition: condition.into(),
            verdict,
            constants: BTreeMap::new(),
            witness: BTreeMap::new(),
            ranges: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn errored(condition: impl Into<String>, message: impl Into<String>) -> Self {
        let mut r = Self::new(condition, Verdict::Errored);
        r.notes.push(message.into());
        r
    }

    pub fn constant(mut self, name: &str, v: f64) -> Self {
        self.constants.insert(name.into(), Num(v));
        self
    }

    pub fn witness(mut self, name: &str, v: impl Into<Num>) -> Self {
        self.witness.insert(name.into(), v.into());
        self
    }

    pub fn range(mut self, name: &str, lo: f64, hi: f64) -> Self {
        self.ranges.insert(name.into(), [Num(lo), Num(hi)]);
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.constants.get(name).map(|n| n.0)
    }
}

/// Per-instance rows backing a report, for CSV export.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RatioTable {
    pub fn new(columns: &[&str]) -> Self {
        RatioTable { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub report: ConditionReport,
    pub table: RatioTable,
}

impl CheckResult {
    pub fn new(report: ConditionReport, table: RatioTable) -> Self {
        CheckResult { report, table }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_round_trip() {
        let r = ConditionReport::new("PI", Verdict::Failed)
            .constant("C", f64::INFINITY)
            .constant("nu", f64::NAN)
            .constant("c1", 0.5)
            .witness("x0", 3usize)
            .range("r", 1.0, f64::NEG_INFINITY);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\"") && s.contains("\"nan\"") && s.contains("\"-inf\""));
        let back: ConditionReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_rows() {
        let mut t = RatioTable::new(&["t", "ratio"]);
        t.push(vec![1.0, 0.5]);
        t.push(vec![2.0, 0.25]);
        assert_eq!(t.to_csv(), "t,ratio\n1,0.5\n2,0.25\n");
    }
}
