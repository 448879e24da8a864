//! Treatment sequences: enumeration, incidence matrices, prefix statistics
//! and the relabeling orbits ("symmetric blocks").
//!
//! Labels are 1-based in the public API and in text form; internally each
//! entry is stored 0-based.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default cap on `t^p` for full enumeration.
pub const DEFAULT_ENUM_BUDGET: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreatmentSequence {
    t: usize,
    /// 0-based labels.
    entries: Vec<u8>,
}

/// Counts, sum of squared counts, adjacent repeats and the count of the last
/// treatment, all for a prefix of a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixStats {
    pub counts: Vec<usize>,
    pub xi: usize,
    pub rho: usize,
    pub f_last: usize,
}

/// Orbit of a sequence under all relabelings of the treatments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymmetricBlock {
    representative: TreatmentSequence,
    size: usize,
}

impl TreatmentSequence {
    /// Builds a sequence from 1-based labels.
    pub fn new(t: usize, labels: &[usize]) -> Result<Self> {
        if t == 0 || t > u8::MAX as usize {
            return Err(Error::invalid(format!("treatment count {t} out of range")));
        }
        if labels.is_empty() {
            return Err(Error::invalid("empty treatment sequence"));
        }
        let entries = labels
            .iter()
            .map(|&l| {
                if l == 0 || l > t {
                    Err(Error::invalid(format!("label {l} outside 1..={t}")))
                } else {
                    Ok((l - 1) as u8)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TreatmentSequence { t, entries })
    }

    pub(crate) fn from_zero_based(t: usize, entries: Vec<u8>) -> Self {
        debug_assert!(entries.iter().all(|&e| (e as usize) < t));
        TreatmentSequence { t, entries }
    }

    /// Parses `"1223"` (one digit per period, `t <= 9`) or `"1,2,2,3"`.
    pub fn parse(text: &str, t: usize) -> Result<Self> {
        let text = text.trim();
        let labels: Vec<usize> = if text.contains(',') {
            text.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid(format!("bad label {tok:?} in {text:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::invalid(format!("bad label {c:?} in {text:?}")))
                })
                .collect::<Result<_>>()?
        };
        TreatmentSequence::new(t, &labels)
    }

    pub fn treatments(&self) -> usize {
        self.t
    }

    pub fn periods(&self) -> usize {
        self.entries.len()
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|&e| e as usize + 1).collect()
    }

    /// `T_s`: `p x t`, row `k` has a single one in the column of its treatment.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.periods(), self.t);
        for (k, &e) in self.entries.iter().enumerate() {
            m[(k, e as usize)] = 1.0;
        }
        m
    }

    /// `F_s`: `T_s` shifted down one row with a zero first row.
    pub fn carryover_incidence(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.periods(), self.t);
        for (k, &prev) in self.entries.iter().enumerate().take(self.periods() - 1) {
            m[(k + 1, prev as usize)] = 1.0;
        }
        m
    }

    /// Statistics of the first `k` periods.
    pub fn prefix_stats(&self, k: usize) -> Result<PrefixStats> {
        if k == 0 || k > self.periods() {
            return Err(Error::invalid(format!(
                "prefix length {k} outside 1..={}",
                self.periods()
            )));
        }
        Ok(self.prefix_stats_unchecked(k))
    }

    pub(crate) fn prefix_stats_unchecked(&self, k: usize) -> PrefixStats {
        let mut counts = vec![0usize; self.t];
        for &e in &self.entries[..k] {
            counts[e as usize] += 1;
        }
        let xi = counts.iter().map(|c| c * c).sum();
        let rho = self.entries[..k]
            .windows(2)
            .filter(|w| w[0] == w[1])
            .count();
        let f_last = counts[self.entries[k - 1] as usize];
        PrefixStats {
            counts,
            xi,
            rho,
            f_last,
        }
    }

    /// `sigma s`, where `sigma` lists the images of labels `1..=t` (1-based).
    pub fn apply_permutation(&self, sigma: &[usize]) -> Result<Self> {
        validate_permutation(sigma, self.t)?;
        Ok(self.relabel_zero_based(&sigma.iter().map(|&s| (s - 1) as u8).collect::<Vec<_>>()))
    }

    pub(crate) fn relabel_zero_based(&self, sigma: &[u8]) -> Self {
        TreatmentSequence {
            t: self.t,
            entries: self.entries.iter().map(|&e| sigma[e as usize]).collect(),
        }
    }

    /// Relabels treatments in order of first appearance: the lexicographically
    /// smallest member of the orbit.
    pub fn canonical(&self) -> Self {
        let mut map = [u8::MAX; 256];
        let mut next = 0u8;
        let entries = self
            .entries
            .iter()
            .map(|&e| {
                if map[e as usize] == u8::MAX {
                    map[e as usize] = next;
                    next += 1;
                }
                map[e as usize]
            })
            .collect();
        TreatmentSequence { t: self.t, entries }
    }

    /// Number of distinct treatments used.
    pub fn distinct(&self) -> usize {
        let mut seen = [false; 256];
        self.entries
            .iter()
            .filter(|&&e| !std::mem::replace(&mut seen[e as usize], true))
            .count()
    }

    pub fn symmetric_block(&self) -> SymmetricBlock {
        let u = self.distinct();
        let size = (0..u).map(|i| self.t - i).product();
        SymmetricBlock {
            representative: self.canonical(),
            size,
        }
    }

    /// True when all periods carry different treatments.
    pub fn is_all_distinct(&self) -> bool {
        self.distinct() == self.periods()
    }

    /// True when the first `p - 1` treatments are distinct and the last one
    /// repeats period `p - 1`.
    pub fn is_distinct_then_repeat(&self) -> bool {
        let p = self.periods();
        p >= 2
            && self.entries[p - 1] == self.entries[p - 2]
            && TreatmentSequence::from_zero_based(self.t, self.entries[..p - 1].to_vec())
                .is_all_distinct()
    }
}

impl fmt::Display for TreatmentSequence {
    /// Compact digits for `t <= 9`, comma-separated labels otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.t <= 9 {
            for &e in &self.entries {
                write!(f, "{}", e + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.labels().iter().map(|l| l.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl SymmetricBlock {
    pub fn representative(&self) -> &TreatmentSequence {
        &self.representative
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// All members, sorted lexicographically.
    pub fn members(&self) -> Vec<TreatmentSequence> {
        let t = self.representative.t;
        let mut out: Vec<TreatmentSequence> = permutations(t)
            .map(|sigma| self.representative.relabel_zero_based(&sigma))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

fn validate_permutation(sigma: &[usize], t: usize) -> Result<()> {
    if sigma.len() != t {
        return Err(Error::invalid(format!(
            "permutation has {} entries, expected {t}",
            sigma.len()
        )));
    }
    let mut seen = vec![false; t];
    for &s in sigma {
        if s == 0 || s > t || std::mem::replace(&mut seen[s - 1], true) {
            return Err(Error::invalid(format!(
                "{sigma:?} is not a permutation of 1..={t}"
            )));
        }
    }
    Ok(())
}

/// All permutations of `0..t` (0-based images), in lexicographic order.
pub(crate) fn permutations(t: usize) -> impl Iterator<Item = Vec<u8>> {
    let mut current: Option<Vec<u8>> = Some((0..t as u8).collect());
    std::iter::from_fn(move || {
        let out = current.clone()?;
        // next lexicographic permutation
        let mut next = out.clone();
        let n = next.len();
        let pivot = (0..n.saturating_sub(1))
            .rev()
            .find(|&i| next[i] < next[i + 1]);
        current = pivot.map(|i| {
            let j = (i + 1..n)
                .rev()
                .find(|&j| next[j] > next[i])
                .expect("pivot has successor");
            next.swap(i, j);
            next[i + 1..].reverse();
            next
        });
        Some(out)
    })
}

/// Checks `t^p` against `budget`.
pub fn check_enumeration_budget(t: usize, p: usize, budget: u128) -> Result<u128> {
    let count = (t as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
    if count > budget {
        return Err(Error::Budget {
            what: "sequence enumeration",
            needed: count,
            budget,
            hint: "enumerate at the symmetric-block level or raise the budget",
        });
    }
    Ok(count)
}

/// All `t^p` sequences in lexicographic order.
pub fn enumerate_sequences(t: usize, p: usize) -> Result<Vec<TreatmentSequence>> {
    enumerate_sequences_with_budget(t, p, DEFAULT_ENUM_BUDGET)
}

pub fn enumerate_sequences_with_budget(
    t: usize,
    p: usize,
    budget: u128,
) -> Result<Vec<TreatmentSequence>> {
    if t < 2 || p < 2 {
        return Err(Error::invalid(format!(
            "need t >= 2 and p >= 2, got t={t}, p={p}"
        )));
    }
    if t > u8::MAX as usize {
        return Err(Error::invalid(format!("too many treatments: {t}")));
    }
    let count = check_enumeration_budget(t, p, budget)? as usize;
    let mut out = Vec::with_capacity(count);
    let mut digits = vec![0u8; p];
    for _ in 0..count {
        out.push(TreatmentSequence::from_zero_based(t, digits.clone()));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if (*d as usize) < t {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}
