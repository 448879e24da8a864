//! Per-sequence quadratics `q_s(x) = q11 + 2 q12 x + q22 x^2` and the
//! minimax problem `min_x max_s q_s(x)` whose solution `(x*, y*)` and
//! active set (the support) characterize universally optimal designs.
//!
//! The numeric route is authoritative. Three closed-form regimes are checked
//! alongside it and only label the result.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dropout::{DropoutMechanism, MechanismMatrices, MechanismSpec};
use crate::error::{Error, Result};
use crate::linalg::centering;
use crate::sequence::{
    enumerate_sequences_with_budget, SymmetricBlock, TreatmentSequence, DEFAULT_ENUM_BUDGET,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QCoefficients {
    pub q11: f64,
    pub q12: f64,
    pub q22: f64,
}

impl QCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        self.q11 + 2.0 * self.q12 * x + self.q22 * x * x
    }

    pub fn derivative(&self, x: f64) -> f64 {
        2.0 * self.q12 + 2.0 * self.q22 * x
    }

    /// Minimizer `-q12 / q22`.
    pub fn vertex(&self) -> f64 {
        -self.q12 / self.q22
    }

    /// `min_x q(x) = q11 - q12^2 / q22`.
    pub fn minimum(&self) -> f64 {
        self.q11 - self.q12 * self.q12 / self.q22
    }

    fn scaled_add(&mut self, w: f64, other: &QCoefficients) {
        self.q11 += w * other.q11;
        self.q12 += w * other.q12;
        self.q22 += w * other.q22;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `m > t`, balanced treatment counts, `x* = 0`.
    ClosedFormI,
    /// `p <= t`, `x* = 1/(p-1)`, support `<re> U <di>`.
    ClosedFormIi,
    /// Equality case of regime ii: support `<re>` only.
    ClosedFormIiBoundary,
    /// `x*` strictly between `1/(p-1)` and `1/(p-2)`, support `<re>`.
    ClosedFormIii,
    Numeric,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::ClosedFormI => "closed_form_i",
            Regime::ClosedFormIi => "closed_form_ii",
            Regime::ClosedFormIiBoundary => "closed_form_ii_boundary",
            Regime::ClosedFormIii => "closed_form_iii",
            Regime::Numeric => "numeric",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimalityCertificate {
    pub x_star: f64,
    pub y_star: f64,
    /// Sorted lexicographically.
    pub support: Vec<TreatmentSequence>,
    /// Symmetric blocks making up the support, sorted by representative.
    pub blocks: Vec<SymmetricBlock>,
    pub regime: Regime,
    pub t: usize,
    pub mechanism: MechanismSpec,
}

/// On-disk certificate form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateFile {
    pub x_star: f64,
    pub y_star: f64,
    pub regime: Regime,
    pub t: usize,
    pub support: Vec<String>,
    pub mechanism: MechanismSpec,
}

impl OptimalityCertificate {
    pub fn to_file(&self) -> CertificateFile {
        CertificateFile {
            x_star: self.x_star,
            y_star: self.y_star,
            regime: self.regime,
            t: self.t,
            support: self.support.iter().map(|s| s.to_string()).collect(),
            mechanism: self.mechanism.clone(),
        }
    }

    pub fn from_file(file: &CertificateFile) -> Result<Self> {
        let mut support = file
            .support
            .iter()
            .map(|s| TreatmentSequence::parse(s, file.t))
            .collect::<Result<Vec<_>>>()?;
        support.sort();
        support.dedup();
        let blocks = blocks_of(&support);
        Ok(OptimalityCertificate {
            x_star: file.x_star,
            y_star: file.y_star,
            support,
            blocks,
            regime: file.regime,
            t: file.t,
            mechanism: file.mechanism.clone(),
        })
    }

    pub fn contains(&self, s: &TreatmentSequence) -> bool {
        self.support.binary_search(s).is_ok()
    }

    /// `y* / (t - 1)`: every criterion's value at the approximate optimum.
    pub fn optimal_value(&self) -> f64 {
        self.y_star / (self.t as f64 - 1.0)
    }
}

fn blocks_of(support: &[TreatmentSequence]) -> Vec<SymmetricBlock> {
    let mut blocks: Vec<SymmetricBlock> = support.iter().map(|s| s.symmetric_block()).collect();
    blocks.sort();
    blocks.dedup();
    blocks
}

#[derive(Clone, Debug)]
pub struct MinimaxOptions {
    pub enumeration_budget: u128,
    /// Relative support tolerance; absolute slack is `tol * max(1, y*)`.
    pub support_tol: f64,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        MinimaxOptions {
            enumeration_budget: DEFAULT_ENUM_BUDGET,
            support_tol: 1e-9,
        }
    }
}

/// Closed-form coefficients `q_s = sum_k alpha_k q_s^k` built from prefix
/// statistics.
pub fn q_coeffs(s: &TreatmentSequence, mech: &DropoutMechanism) -> Result<QCoefficients> {
    if s.periods() != mech.periods() {
        return Err(Error::invalid(format!(
            "sequence has {} periods but the mechanism has {}",
            s.periods(),
            mech.periods()
        )));
    }
    Ok(q_coeffs_unchecked(s, mech))
}

pub(crate) fn q_coeffs_unchecked(s: &TreatmentSequence, mech: &DropoutMechanism) -> QCoefficients {
    let t = s.treatments() as f64;
    let mut out = QCoefficients {
        q11: 0.0,
        q12: 0.0,
        q22: 0.0,
    };
    for k in mech.first_support()..=mech.periods() {
        let alpha = mech.alphas()[k - 1];
        if alpha == 0.0 {
            continue;
        }
        out.scaled_add(alpha, &prefix_coeffs(s, k, t));
    }
    out
}

fn prefix_coeffs(s: &TreatmentSequence, k: usize, t: f64) -> QCoefficients {
    let st = s.prefix_stats_unchecked(k);
    let kf = k as f64;
    let xi = st.xi as f64;
    let rho = st.rho as f64;
    let f = st.f_last as f64;
    QCoefficients {
        q11: kf - xi / kf,
        q12: (kf * rho + f - xi) / kf,
        q22: (kf * t - 1.0) * (kf - 1.0) / (kf * t) - (xi - 2.0 * f + 1.0) / kf,
    }
}

/// Trace definition `q_ij = tr(G_i' A G_j)` with `G_1 = T_s B_t`,
/// `G_2 = F_s B_t`. Used as an oracle for [`q_coeffs`].
pub fn q_coeffs_by_trace(s: &TreatmentSequence, mats: &MechanismMatrices) -> QCoefficients {
    let bt = centering(s.treatments()).expect("t >= 1");
    let g1 = s.incidence() * bt.as_matrix();
    let g2 = s.carryover_incidence() * bt.as_matrix();
    let a = mats.a.as_matrix();
    QCoefficients {
        q11: (g1.transpose() * a * &g1).trace(),
        q12: (g1.transpose() * a * &g2).trace(),
        q22: (g2.transpose() * a * &g2).trace(),
    }
}

/// `q_s'(x) = 2 q12 + 2 q22 x`.
pub fn q_derivative(s: &TreatmentSequence, mech: &DropoutMechanism, x: f64) -> Result<f64> {
    Ok(q_coeffs(s, mech)?.derivative(x))
}

struct BlockTable {
    reps: Vec<TreatmentSequence>,
    coeffs: Vec<QCoefficients>,
}

impl BlockTable {
    fn build(mech: &DropoutMechanism, t: usize, budget: u128) -> Result<Self> {
        let all = enumerate_sequences_with_budget(t, mech.periods(), budget)?;
        let mut seen = HashSet::new();
        let mut reps = Vec::new();
        for s in &all {
            let c = s.canonical();
            if seen.insert(c.clone()) {
                reps.push(c);
            }
        }
        reps.sort();
        let coeffs = reps
            .par_iter()
            .map(|s| q_coeffs_unchecked(s, mech))
            .collect();
        Ok(BlockTable { reps, coeffs })
    }

    fn h(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|q| q.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Real roots of `c0 + 2 c1 x + c2 x^2`.
fn quadratic_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let scale = c0.abs().max(c1.abs()).max(c2.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if c2.abs() <= 1e-14 * scale {
        if c1.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c0 / (2.0 * c1)];
    }
    if c0 == 0.0 {
        return vec![0.0, -2.0 * c1 / c2];
    }
    let disc = c1 * c1 - c0 * c2;
    if disc < 0.0 {
        return Vec::new();
    }
    let root = disc.sqrt();
    let qv = -(c1 + c1.signum() * root);
    if qv == 0.0 {
        return vec![-c1 / c2];
    }
    vec![qv / c2, c0 / qv]
}

/// Solves `min_x max_s q_s(x)` over all `t^p` sequences.
pub fn solve_minimax(mech: &DropoutMechanism, t: usize) -> Result<OptimalityCertificate> {
    solve_minimax_with(mech, t, &MinimaxOptions::default())
}

pub fn solve_minimax_with(
    mech: &DropoutMechanism,
    t: usize,
    opts: &MinimaxOptions,
) -> Result<OptimalityCertificate> {
    if t < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 treatments, got {t}"
        )));
    }
    let table = BlockTable::build(mech, t, opts.enumeration_budget)?;

    // Golden-section search on the convex envelope.
    let x_max = 2.0
        + table
            .coeffs
            .iter()
            .map(|q| q.q12.abs() / q.q22)
            .fold(0.0_f64, f64::max);
    let (mut lo, mut hi) = (-x_max, x_max);
    let ratio = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut h1, mut h2) = (table.h(x1), table.h(x2));
    while hi - lo > 1e-13 * x_max.max(1.0) {
        if h1 <= h2 {
            hi = x2;
            x2 = x1;
            h2 = h1;
            x1 = hi - ratio * (hi - lo);
            h1 = table.h(x1);
        } else {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + ratio * (hi - lo);
            h2 = table.h(x2);
        }
    }
    let x_hat = 0.5 * (lo + hi);
    let h_hat = table.h(x_hat);

    // Refine: the minimizer of a max of convex quadratics is a vertex of an
    // active piece or a crossing of two active pieces.
    let slack = 1e-6 * h_hat.abs().max(1.0);
    let active: Vec<&QCoefficients> = table
        .coeffs
        .iter()
        .filter(|q| q.eval(x_hat) >= h_hat - slack)
        .collect();
    let mut candidates = vec![x_hat];
    for (i, a) in active.iter().enumerate() {
        candidates.push(a.vertex());
        for b in &active[i + 1..] {
            candidates.extend(quadratic_roots(a.q11 - b.q11, a.q12 - b.q12, a.q22 - b.q22));
        }
    }
    let window = 1e-4 * x_max.max(1.0);
    let (x_star, y_star) = candidates
        .into_iter()
        .filter(|x| x.is_finite() && (x - x_hat).abs() <= window)
        .map(|x| (x, table.h(x)))
        .fold(
            (x_hat, h_hat),
            |best, cand| if cand.1 < best.1 { cand } else { best },
        );

    let tol = opts.support_tol * y_star.abs().max(1.0);
    let mut blocks: Vec<SymmetricBlock> = table
        .reps
        .iter()
        .zip(&table.coeffs)
        .filter(|(_, q)| q.eval(x_star) >= y_star - tol)
        .map(|(s, _)| s.symmetric_block())
        .collect();
    blocks.sort();
    let mut support: Vec<TreatmentSequence> = blocks.iter().flat_map(|b| b.members()).collect();
    support.sort();

    let mut cert = OptimalityCertificate {
        x_star: x_star + 0.0,
        y_star,
        support,
        blocks,
        regime: Regime::Numeric,
        t,
        mechanism: mech.to_spec(),
    };
    if let Some(cf) = closed_form(mech, t) {
        if (cf.x_star - cert.x_star).abs() <= 1e-9
            && (cf.y_star - cert.y_star).abs() <= 1e-9
            && cf.support == cert.support
        {
            cert.regime = cf.regime;
        } else {
            log::warn!(
                "closed form {} disagrees with the numeric minimax: x* {} vs {}, y* {} vs {}",
                cf.regime.as_str(),
                cf.x_star,
                cert.x_star,
                cf.y_star,
                cert.y_star
            );
        }
    }
    Ok(cert)
}

/// Left-hand side minus right-hand side of the regime-i condition; the
/// regime applies when it is nonnegative.
fn regime_i_margin(mech: &DropoutMechanism, t: usize) -> f64 {
    let (m, tf) = (mech.first_support() as f64, t as f64);
    (mech.first_support()..=mech.periods())
        .map(|k| {
            let kf = k as f64;
            let r = remainder(k, t) as f64;
            mech.alphas()[k - 1] * (kf * (m * tf - tf * tf + 1.0 - kf) + tf - r * (tf - r + 1.0))
        })
        .sum()
}

/// `r` with `k = z t + r`, `0 < r <= t`.
fn remainder(k: usize, t: usize) -> usize {
    let r = k % t;
    if r == 0 {
        t
    } else {
        r
    }
}

/// `(lhs, rhs)` of the regime-ii condition `lhs <= rhs`.
fn regime_ii_sides(mech: &DropoutMechanism, t: usize) -> (f64, f64) {
    let p = mech.periods();
    let (pf, inv_t) = (p as f64, 1.0 / t as f64);
    let lhs = (mech.first_support()..p)
        .map(|k| {
            let kf = k as f64;
            mech.alphas()[k - 1] * (kf - 1.0) * (pf + inv_t - kf)
        })
        .sum();
    let rhs = mech.alphas()[p - 1] * ((pf - 1.0).powi(2) - (1.0 + inv_t) * pf + inv_t);
    (lhs, rhs)
}

/// Closed-form certificate when one of the three regimes applies.
pub fn closed_form(mech: &DropoutMechanism, t: usize) -> Option<OptimalityCertificate> {
    let p = mech.periods();
    let m = mech.first_support();
    if t < 2 {
        return None;
    }
    let alphas = mech.alphas();
    let (pf, tf) = (p as f64, t as f64);
    let build = |x_star: f64, y_star: f64, support: Vec<TreatmentSequence>, regime: Regime| {
        let mut support = support;
        support.sort();
        support.dedup();
        let blocks = blocks_of(&support);
        OptimalityCertificate {
            x_star: x_star + 0.0,
            y_star,
            support,
            blocks,
            regime,
            t,
            mechanism: mech.to_spec(),
        }
    };

    if m > t && regime_i_margin(mech, t) >= -1e-12 {
        let y_star = (m..=p)
            .map(|k| {
                let kf = k as f64;
                let r = remainder(k, t) as f64;
                alphas[k - 1] * (kf * (1.0 - 1.0 / tf) - r * (tf - r) / (kf * tf))
            })
            .sum();
        let support = balanced_sequences(t, p, m);
        return Some(build(0.0, y_star, support, Regime::ClosedFormI));
    }

    if p <= t && p >= 2 {
        let (lhs, rhs) = regime_ii_sides(mech, t);
        let scale = lhs.abs().max(rhs.abs()).max(1e-300);
        if lhs <= rhs + 1e-12 * scale {
            let y_star = (m..=p)
                .map(|k| {
                    let kf = k as f64;
                    alphas[k - 1]
                        * (kf - 1.0)
                        * (1.0 - (2.0 * pf - 1.0 - kf + 1.0 / tf) / (kf * (pf - 1.0).powi(2)))
                })
                .sum();
            let x_star = 1.0 / (pf - 1.0);
            let boundary = (rhs - lhs).abs() <= 1e-12 * scale;
            let mut support = repeat_block(t, p).members();
            let regime = if boundary {
                Regime::ClosedFormIiBoundary
            } else {
                support.extend(distinct_block(t, p).members());
                Regime::ClosedFormIi
            };
            return Some(build(x_star, y_star, support, regime));
        }
    }

    if p >= 3 && p - 1 <= t {
        let x0 = regime_iii_x0(mech, t);
        if 1.0 / (pf - 1.0) < x0 && x0 < 1.0 / (pf - 2.0) {
            let re = repeat_block(t, p);
            let y_star = q_coeffs_unchecked(re.representative(), mech).eval(x0);
            return Some(build(x0, y_star, re.members(), Regime::ClosedFormIii));
        }
    }
    None
}

/// Stationary point of the `<re>` quadratic.
fn regime_iii_x0(mech: &DropoutMechanism, t: usize) -> f64 {
    let p = mech.periods();
    let tf = t as f64;
    let alphas = mech.alphas();
    let m = mech.first_support();
    let num: f64 = (m..p)
        .map(|k| {
            let kf = k as f64;
            alphas[k - 1] * (kf - 1.0) / kf
        })
        .sum();
    let den: f64 = (m..=p)
        .map(|k| {
            let kf = k as f64;
            alphas[k - 1] * (kf - 1.0) * (kf - 1.0 - 1.0 / tf) / kf
        })
        .sum();
    num / den
}

/// Block of sequences whose `p` treatments are all distinct.
pub fn distinct_block(t: usize, p: usize) -> SymmetricBlock {
    assert!(p <= t, "all-distinct block needs p <= t");
    let labels: Vec<u8> = (0..p as u8).collect();
    TreatmentSequence::from_zero_based(t, labels).symmetric_block()
}

/// Block of sequences distinct in the first `p - 1` periods with the last
/// treatment repeated.
pub fn repeat_block(t: usize, p: usize) -> SymmetricBlock {
    assert!(p >= 2 && p - 1 <= t, "repeat block needs p - 1 <= t");
    let mut labels: Vec<u8> = (0..(p - 1) as u8).collect();
    labels.push((p - 2) as u8);
    TreatmentSequence::from_zero_based(t, labels).symmetric_block()
}

/// Sequences whose prefix counts are balanced (`z_k` or `z_k + 1`) for every
/// prefix length `k >= m`.
fn balanced_sequences(t: usize, p: usize, m: usize) -> Vec<TreatmentSequence> {
    fn rec(
        t: usize,
        p: usize,
        m: usize,
        prefix: &mut Vec<u8>,
        counts: &mut Vec<usize>,
        out: &mut Vec<TreatmentSequence>,
    ) {
        let k = prefix.len();
        if k >= m && k > 0 {
            let z = (k - remainder(k, t)) / t;
            if counts.iter().any(|&c| c != z && c != z + 1) {
                return;
            }
        }
        if k == p {
            out.push(TreatmentSequence::from_zero_based(t, prefix.clone()));
            return;
        }
        for label in 0..t {
            prefix.push(label as u8);
            counts[label] += 1;
            rec(t, p, m, prefix, counts, out);
            counts[label] -= 1;
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        t,
        p,
        m,
        &mut Vec::with_capacity(p),
        &mut vec![0; t],
        &mut out,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::enumerate_sequences;

    fn seq(text: &str, t: usize) -> TreatmentSequence {
        TreatmentSequence::parse(text, t).unwrap()
    }

    fn d2_mech() -> DropoutMechanism {
        DropoutMechanism::new(4, 16, vec![0.0, 0.0, 0.5, 0.5]).unwrap()
    }

    fn d9_mech() -> DropoutMechanism {
        DropoutMechanism::new(6, 14, vec![0.0, 0.0, 0.0, 0.0, 0.4, 0.6]).unwrap()
    }

    #[test]
    fn complete_experiment_distinct_sequence() {
        let mech = DropoutMechanism::complete(4, 16).unwrap();
        let q = q_coeffs(&seq("1234", 4), &mech).unwrap();
        assert!((q.q11 - 3.0).abs() < 1e-15);
        assert!((q.q12 + 0.75).abs() < 1e-15);
        assert!((q.q22 - 33.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn constant_sequence_has_zero_q11() {
        for mech in [d2_mech(), d9_mech()] {
            let p = mech.periods();
            let s = TreatmentSequence::new(3, &vec![2; p]).unwrap();
            assert_eq!(q_coeffs(&s, &mech).unwrap().q11, 0.0);
        }
    }

    #[test]
    fn closed_form_matches_trace() {
        let mechs = [
            d2_mech(),
            DropoutMechanism::new(4, 5, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            DropoutMechanism::new(5, 9, vec![0.0, 0.05, 0.15, 0.2, 0.6]).unwrap(),
        ];
        for mech in &mechs {
            let mats = mech.matrices();
            for t in 2..=3 {
                for s in enumerate_sequences(t, mech.periods()).unwrap() {
                    let a = q_coeffs(&s, mech).unwrap();
                    let b = q_coeffs_by_trace(&s, &mats);
                    assert!((a.q11 - b.q11).abs() < 1e-10, "{s} {a:?} {b:?}");
                    assert!((a.q12 - b.q12).abs() < 1e-10, "{s} {a:?} {b:?}");
                    assert!((a.q22 - b.q22).abs() < 1e-10, "{s} {a:?} {b:?}");
                    assert!(a.q22 > 0.0);
                }
            }
        }
        assert!(q_coeffs(&seq("123", 3), &d2_mech()).is_err());
    }

    #[test]
    fn derivative_ratio_for_two_treatment_example() {
        let mech = d9_mech();
        let s1 = q_coeffs(&seq("122121", 2), &mech).unwrap();
        let s2 = q_coeffs(&seq("122211", 2), &mech).unwrap();
        let ratio = s1.q12 / s2.q12;
        assert!((ratio + 45.0 / 7.0).abs() < 1e-5, "ratio {ratio}");
        assert!((s1.derivative(0.0) / s2.derivative(0.0) - ratio).abs() < 1e-12);
        assert!(s1.derivative(s1.vertex()).abs() < 1e-12);
        let h = 1e-3;
        let fd = (s1.eval(0.3 + h) - s1.eval(0.3 - h)) / (2.0 * h);
        assert!((fd - s1.derivative(0.3)).abs() < 1e-10);
    }

    #[test]
    fn d2_scenario_certificate() {
        let mech = d2_mech();
        let cf = closed_form(&mech, 4).expect("regime ii applies");
        assert_eq!(cf.regime, Regime::ClosedFormIi);
        assert_eq!(cf.x_star, 1.0 / 3.0);
        assert!((cf.y_star - 2.1745528).abs() < 1e-6, "{}", cf.y_star);
        let cert = solve_minimax(&mech, 4).unwrap();
        assert_eq!(cert.regime, Regime::ClosedFormIi);
        assert!((cert.x_star - cf.x_star).abs() < 1e-9);
        assert!((cert.y_star - cf.y_star).abs() < 1e-9);
        assert_eq!(cert.support, cf.support);
        assert_eq!(cert.support.len(), 48);
        assert_eq!(cert.blocks.len(), 2);
    }

    #[test]
    fn two_treatment_six_period_certificate() {
        let mech = d9_mech();
        let cert = solve_minimax(&mech, 2).unwrap();
        assert!(cert.x_star.abs() < 1e-9, "{}", cert.x_star);
        assert_eq!(cert.support.len(), 20);
        assert_eq!(cert.regime, Regime::ClosedFormI);
        for s in &cert.support {
            let c = s.prefix_stats(6).unwrap().counts;
            assert_eq!(c, vec![3, 3]);
        }
    }

    #[test]
    fn complete_experiment_certificates() {
        // p <= t: regime ii; p > t: regime i.
        let cert = solve_minimax(&DropoutMechanism::complete(4, 12).unwrap(), 4).unwrap();
        assert_eq!(cert.regime, Regime::ClosedFormIi);
        assert!((cert.x_star - 1.0 / 3.0).abs() < 1e-12);
        let cert = solve_minimax(&DropoutMechanism::complete(5, 12).unwrap(), 3).unwrap();
        assert_eq!(cert.regime, Regime::ClosedFormI);
        assert!(cert.x_star.abs() < 1e-12);
    }

    #[test]
    fn certificate_support_invariants() {
        let mechs = [
            (d2_mech(), 3),
            (
                DropoutMechanism::new(4, 6, vec![0.0, 0.3, 0.3, 0.4]).unwrap(),
                4,
            ),
            (
                DropoutMechanism::new(5, 9, vec![0.0, 0.05, 0.15, 0.2, 0.6]).unwrap(),
                3,
            ),
            (DropoutMechanism::new(3, 4, vec![0.0, 0.7, 0.3]).unwrap(), 2),
        ];
        for (mech, t) in mechs {
            let cert = solve_minimax(&mech, t).unwrap();
            assert!(cert.y_star > 0.0);
            let tol = 1e-9 * cert.y_star.max(1.0);
            for s in enumerate_sequences(t, mech.periods()).unwrap() {
                let v = q_coeffs(&s, &mech).unwrap().eval(cert.x_star);
                if cert.contains(&s) {
                    assert!((v - cert.y_star).abs() <= tol);
                } else {
                    assert!(v <= cert.y_star + tol);
                }
            }
            if let Some(cf) = closed_form(&mech, t) {
                assert!((cf.x_star - cert.x_star).abs() <= 1e-9);
                assert!((cf.y_star - cert.y_star).abs() <= 1e-9);
                assert_eq!(cf.support, cert.support);
            }
        }
    }

    #[test]
    fn envelope_is_convex() {
        let mech = DropoutMechanism::new(4, 6, vec![0.0, 0.3, 0.3, 0.4]).unwrap();
        let table = BlockTable::build(&mech, 3, DEFAULT_ENUM_BUDGET).unwrap();
        let xs = [-1.3, -0.4, 0.0, 0.2, 0.33, 0.5, 0.9, 2.0];
        for &a in &xs {
            for &b in &xs {
                let mid = table.h(0.5 * (a + b));
                assert!(mid <= 0.5 * (table.h(a) + table.h(b)) + 1e-12);
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let mech = DropoutMechanism::new(5, 7, vec![0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        for s in enumerate_sequences(3, 5).unwrap().into_iter().step_by(7) {
            let base = q_coeffs(&s, &mech).unwrap();
            for sigma in crate::sequence::permutations(3) {
                let img = s.relabel_zero_based(&sigma);
                assert_eq!(q_coeffs(&img, &mech).unwrap(), base);
            }
        }
    }

    #[test]
    fn roots() {
        assert_eq!(quadratic_roots(0.0, 1.0, 1.0), vec![0.0, -2.0]);
        let r = quadratic_roots(-1.0, 0.0, 1.0);
        assert!(r.iter().any(|x| (x - 1.0).abs() < 1e-15));
        assert!(quadratic_roots(1.0, 0.0, 1.0).is_empty());
        assert_eq!(quadratic_roots(2.0, -1.0, 0.0), vec![1.0]);
    }
}
