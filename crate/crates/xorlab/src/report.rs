//! Check items and verdict reports shared by every audited operation.

use serde::Serialize;

use crate::rational::{rat_to_f64, Rat};

/// One audited comparison. `gap` is `lhs − rhs` for `le` checks and
/// `|lhs − rhs|` for `eq` checks, so a positive gap on a failing `le`
/// item is the violation magnitude.
#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub id: String,
    pub kind: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub gap: f64,
    pub pass: bool,
    pub note: String,
}

/// An ordered collection of check items with an overall verdict.
#[derive(Debug, Clone, Default, Serialize)]
pub struct VerdictReport {
    pub items: Vec<CheckItem>,
    pub pass: bool,
}

impl VerdictReport {
    pub fn new() -> Self {
        VerdictReport {
            items: Vec::new(),
            pass: true,
        }
    }

    /// lhs ≤ rhs + tol.
    pub fn check_le(&mut self, id: impl Into<String>, lhs: f64, rhs: f64, tol: f64, note: impl Into<String>) {
        let gap = lhs - rhs;
        self.push(CheckItem {
            id: id.into(),
            kind: "le",
            lhs,
            rhs,
            tol,
            gap,
            pass: gap <= tol,
            note: note.into(),
        });
    }

    /// lhs ≤ rhs, compared exactly in rationals (tol recorded as 0).
    pub fn check_le_exact(&mut self, id: impl Into<String>, lhs: &Rat, rhs: &Rat, note: impl Into<String>) {
        let l = rat_to_f64(lhs);
        let r = rat_to_f64(rhs);
        self.push(CheckItem {
            id: id.into(),
            kind: "le",
            lhs: l,
            rhs: r,
            tol: 0.0,
            gap: l - r,
            pass: lhs <= rhs,
            note: note.into(),
        });
    }

    /// |lhs − rhs| ≤ tol.
    pub fn check_eq(&mut self, id: impl Into<String>, lhs: f64, rhs: f64, tol: f64, note: impl Into<String>) {
        let gap = (lhs - rhs).abs();
        self.push(CheckItem {
            id: id.into(),
            kind: "eq",
            lhs,
            rhs,
            tol,
            gap,
            pass: gap <= tol,
            note: note.into(),
        });
    }

    /// lhs == rhs, compared exactly in rationals (tol recorded as 0).
    pub fn check_eq_exact(&mut self, id: impl Into<String>, lhs: &Rat, rhs: &Rat, note: impl Into<String>) {
        let l = rat_to_f64(lhs);
        let r = rat_to_f64(rhs);
        self.push(CheckItem {
            id: id.into(),
            kind: "eq",
            lhs: l,
            rhs: r,
            tol: 0.0,
            gap: (l - r).abs(),
            pass: lhs == rhs,
            note: note.into(),
        });
    }

    /// A bare pass/fail flag.
    pub fn flag(&mut self, id: impl Into<String>, pass: bool, note: impl Into<String>) {
        self.push(CheckItem {
            id: id.into(),
            kind: "flag",
            lhs: if pass { 0.0 } else { 1.0 },
            rhs: 0.0,
            tol: 0.0,
            gap: if pass { 0.0 } else { 1.0 },
            pass,
            note: note.into(),
        });
    }

    fn push(&mut self, item: CheckItem) {
        self.pass &= item.pass;
        self.items.push(item);
    }

    /// Appends all items of another report.
    pub fn absorb(&mut self, other: VerdictReport) {
        for item in other.items {
            self.push(item);
        }
    }

    /// Sorts items by id; the canonical form for serialization.
    pub fn finish(mut self) -> Self {
        self.items.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }

    /// Largest gap over failing items, 0.0 when everything passes.
    pub fn max_violation(&self) -> f64 {
        self.items
            .iter()
            .filter(|i| !i.pass)
            .map(|i| i.gap)
            .fold(0.0, f64::max)
    }

    /// Ids of failing items.
    pub fn failures(&self) -> Vec<&str> {
        self.items.iter().filter(|i| !i.pass).map(|i| i.id.as_str()).collect()
    }

    /// One human-readable line per item.
    pub fn lines(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            let status = if i.pass { "PASS" } else { "FAIL" };
            let rel = match i.kind {
                "le" => "<=",
                "eq" => "==",
                _ => "ok",
            };
            if i.kind == "flag" {
                out.push_str(&format!("{status} {} ({})\n", i.id, i.note));
            } else {
                out.push_str(&format!(
                    "{status} {} {:.6e} {rel} {:.6e} tol {:.1e} ({})\n",
                    i.id, i.lhs, i.rhs, i.tol, i.note
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn verdict_tracks_failures() {
        let mut r = VerdictReport::new();
        r.check_le("b/ok", 1.0, 2.0, 0.0, "fine");
        r.check_le_exact("a/bad", &rat(3, 2), &rat(1, 1), "too big");
        r.check_eq("c/close", 1.0, 1.0 + 1e-12, 1e-9, "rounding");
        assert!(!r.pass);
        assert_eq!(r.failures(), vec!["a/bad"]);
        assert!((r.max_violation() - 0.5).abs() < 1e-12);
        let sorted = r.finish();
        assert_eq!(sorted.items[0].id, "a/bad");
        assert!(sorted.lines().contains("FAIL a/bad"));
    }
}
