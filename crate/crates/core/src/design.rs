//! Exact designs (one sequence per subject) and approximate designs
//! (weights on sequences).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sequence::TreatmentSequence;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactDesign {
    name: Option<String>,
    t: usize,
    p: usize,
    subjects: Vec<TreatmentSequence>,
}

impl ExactDesign {
    pub fn new(t: usize, subjects: Vec<TreatmentSequence>) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::invalid("a design needs at least one subject"))?;
        let p = first.periods();
        for (i, s) in subjects.iter().enumerate() {
            if s.treatments() != t {
                return Err(Error::invalid(format!(
                    "subject {} uses t={} but the design has t={t}",
                    i + 1,
                    s.treatments()
                )));
            }
            if s.periods() != p {
                return Err(Error::invalid(format!(
                    "subject {} has {} periods, expected {p}",
                    i + 1,
                    s.periods()
                )));
            }
        }
        Ok(ExactDesign {
            name: None,
            t,
            p,
            subjects,
        })
    }

    /// Builds a design from replication counts, listing sequences in the
    /// order given.
    pub fn from_counts(t: usize, counts: &[(TreatmentSequence, usize)]) -> Result<Self> {
        let subjects = counts
            .iter()
            .flat_map(|(s, c)| std::iter::repeat_n(s.clone(), *c))
            .collect();
        ExactDesign::new(t, subjects)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn treatments(&self) -> usize {
        self.t
    }

    pub fn periods(&self) -> usize {
        self.p
    }

    pub fn subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn sequences(&self) -> &[TreatmentSequence] {
        &self.subjects
    }

    /// Replication count of every sequence used.
    pub fn counts(&self) -> BTreeMap<TreatmentSequence, usize> {
        let mut out = BTreeMap::new();
        for s in &self.subjects {
            *out.entry(s.clone()).or_insert(0) += 1;
        }
        out
    }

    /// `n_s / n` per sequence.
    pub fn to_approximate(&self) -> ApproximateDesign {
        let n = self.subjects() as f64;
        ApproximateDesign {
            t: self.t,
            weights: self
                .counts()
                .into_iter()
                .map(|(s, c)| (s, c as f64 / n))
                .collect(),
        }
    }

    /// Relabels every treatment by the 1-based permutation `sigma`.
    pub fn apply_permutation(&self, sigma: &[usize]) -> Result<Self> {
        let subjects = self
            .subjects
            .iter()
            .map(|s| s.apply_permutation(sigma))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExactDesign {
            name: self.name.clone(),
            t: self.t,
            p: self.p,
            subjects,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximateDesign {
    t: usize,
    weights: BTreeMap<TreatmentSequence, f64>,
}

impl ApproximateDesign {
    pub fn new(t: usize, weights: BTreeMap<TreatmentSequence, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid(
                "an approximate design needs at least one sequence",
            ));
        }
        let mut total = 0.0;
        for (s, &w) in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::invalid(format!(
                    "weight {w} on {s} is not a probability"
                )));
            }
            if s.treatments() != t {
                return Err(Error::invalid(format!("sequence {s} does not use t={t}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(ApproximateDesign { t, weights })
    }

    pub fn treatments(&self) -> usize {
        self.t
    }

    pub fn weights(&self) -> &BTreeMap<TreatmentSequence, f64> {
        &self.weights
    }

    pub fn weight(&self, s: &TreatmentSequence) -> f64 {
        self.weights.get(s).copied().unwrap_or(0.0)
    }
}
