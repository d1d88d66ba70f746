//! Outcome bookkeeping shared by the checkers.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{MARGIN_OK, ZERO_BAND};
use crate::relation::LinearRelation;
use crate::subspace::{Subspace, CONTAIN_TOL};

/// Gaps above this but at most [`CONTAIN_TOL`]-ish are too close to the
/// containment threshold to trust either way.
pub const AMBIGUOUS_GAP_HIGH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// A hypothesis gate did not admit the instance.
    NotApplicable,
    /// Some rank or containment decision was too close to call.
    Indeterminate,
}

/// Tracks how trustworthy a sequence of numerical decisions was.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Audit {
    pub min_margin: f64,
    pub ambiguous: usize,
}

impl Default for Audit {
    fn default() -> Self {
        Self { min_margin: f64::INFINITY, ambiguous: 0 }
    }
}

impl Audit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn note_margin(&mut self, margin: f64) {
        self.min_margin = self.min_margin.min(margin);
    }

    pub fn note_subspace(&mut self, s: &Subspace) {
        self.note_margin(s.margin());
    }

    pub fn note_relation(&mut self, r: &LinearRelation) {
        self.note_margin(r.margin());
    }

    /// Records a gap that feeds a `≤ CONTAIN_TOL` decision.
    pub fn note_gap(&mut self, gap: f64) {
        if gap > ZERO_BAND && gap < AMBIGUOUS_GAP_HIGH {
            self.ambiguous += 1;
        }
    }

    /// `inner ⊆ outer` within [`CONTAIN_TOL`], recording conditioning.
    pub fn contains(&mut self, outer: &Subspace, inner: &Subspace) -> Result<bool> {
        self.note_subspace(outer);
        self.note_subspace(inner);
        let gap = inner.gap(outer)?;
        self.note_gap(gap);
        Ok(gap <= CONTAIN_TOL)
    }

    pub fn same(&mut self, a: &Subspace, b: &Subspace) -> Result<bool> {
        Ok(self.contains(a, b)? && self.contains(b, a)?)
    }

    pub fn merge(&mut self, other: &Audit) {
        self.note_margin(other.min_margin);
        self.ambiguous += other.ambiguous;
    }

    pub fn reliable(&self) -> bool {
        self.min_margin >= MARGIN_OK && self.ambiguous == 0
    }

    /// `Pass`/`Fail` from `ok`, or `Indeterminate` when unreliable.
    pub fn verdict(&self, ok: bool) -> Verdict {
        if !self.reliable() {
            Verdict::Indeterminate
        } else if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ambiguous_gap_marks_indeterminate() {
        let mut audit = Audit::new();
        audit.note_gap(1e-9);
        assert_eq!(audit.verdict(true), Verdict::Indeterminate);
        let mut clean = Audit::new();
        clean.note_gap(1e-15);
        clean.note_gap(0.5);
        assert_eq!(clean.verdict(false), Verdict::Fail);
        clean.note_margin(1e-7);
        assert_eq!(clean.verdict(true), Verdict::Indeterminate);
    }
}
