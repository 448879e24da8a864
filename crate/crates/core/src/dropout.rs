//! Dropout mechanisms and the matrices they induce.
//!
//! A mechanism is the distribution `a` of the number of periods a subject
//! stays in the study (`a[k-1] = P(l = k)`), shared i.i.d. by all `n`
//! subjects. From it we derive the weights `alpha_k` and `beta_k` and the
//! matrices `A = sum alpha_k B^k_p`, `B = sum beta_k B^k_p` and
//! `V = I_n (x) A - J_n (x) B / n`, the expectation of the observation
//! projector `O` that sits between the incidence matrices.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{centering, kron, padded_centering, SymMatrix};

const SUM_TOL: f64 = 1e-9;

/// Serialized form: `{"p": 4, "n": 16, "a": [0, 0, 0.5, 0.5]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub p: usize,
    pub n: usize,
    pub a: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMechanism {
    p: usize,
    n: usize,
    a: Vec<f64>,
    /// `cum[k] = a_1 + ... + a_k`, with `cum[0] = 0`.
    cum: Vec<f64>,
    m: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MechanismMatrices {
    pub a: SymMatrix,
    pub b: SymMatrix,
    pub v: SymMatrix,
}

impl DropoutMechanism {
    pub fn new(p: usize, n: usize, a: Vec<f64>) -> Result<Self> {
        if p < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 periods, got p={p}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("need at least 1 subject, got n=0"));
        }
        if a.len() != p {
            return Err(Error::invalid(format!(
                "dropout vector has length {} but p={p}",
                a.len()
            )));
        }
        if let Some((k, v)) = a
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::invalid(format!(
                "dropout probability a_{} = {v} is not a nonnegative number",
                k + 1
            )));
        }
        let total: f64 = a.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!(
                "dropout probabilities sum to {total}, expected 1"
            )));
        }
        let m = a
            .iter()
            .position(|&v| v > 0.0)
            .map(|i| i + 1)
            .ok_or_else(|| Error::invalid("dropout vector has no positive entry"))?;
        if m < 2 {
            warn!("a_1 > 0: subjects leaving after period 1 contribute no information");
        }

        let mut cum = vec![0.0; p + 1];
        for k in 1..=p {
            cum[k] = cum[k - 1] + a[k - 1];
        }
        // Force the total to exactly one so a_{1p} and a_{p+1,p} behave.
        cum[p] = 1.0;

        let mut mech = DropoutMechanism {
            p,
            n,
            a,
            cum,
            m,
            alpha: vec![0.0; p],
            beta: vec![0.0; p],
        };
        for k in 1..=p {
            mech.alpha[k - 1] = mech.alpha_formula(k);
            mech.beta[k - 1] = mech.beta_formula(k);
        }
        for k in 1..=p {
            let (al, be) = (mech.alpha[k - 1], mech.beta[k - 1]);
            if al < -1e-12 || be < -1e-12 {
                return Err(Error::invalid(format!(
                    "derived weights negative at k={k}: alpha={al}, beta={be}"
                )));
            }
        }
        Ok(mech)
    }

    pub fn from_spec(spec: &MechanismSpec) -> Result<Self> {
        DropoutMechanism::new(spec.p, spec.n, spec.a.clone())
    }

    pub fn to_spec(&self) -> MechanismSpec {
        MechanismSpec {
            p: self.p,
            n: self.n,
            a: self.a.clone(),
        }
    }

    /// Mechanism with every subject staying exactly `q` periods.
    pub fn point_mass(p: usize, n: usize, q: usize) -> Result<Self> {
        if q == 0 || q > p {
            return Err(Error::invalid(format!("stay length {q} outside 1..={p}")));
        }
        let mut a = vec![0.0; p];
        a[q - 1] = 1.0;
        DropoutMechanism::new(p, n, a)
    }

    /// No dropout at all.
    pub fn complete(p: usize, n: usize) -> Result<Self> {
        DropoutMechanism::point_mass(p, n, p)
    }

    /// Same dropout distribution with a different number of subjects.
    pub fn with_subjects(&self, n: usize) -> Result<Self> {
        DropoutMechanism::new(self.p, n, self.a.clone())
    }

    pub fn periods(&self) -> usize {
        self.p
    }

    pub fn subjects(&self) -> usize {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.a
    }

    /// `m = min{k : a_k > 0}`.
    pub fn first_support(&self) -> usize {
        self.m
    }

    /// Stay lengths with positive probability.
    pub fn support(&self) -> Vec<usize> {
        (1..=self.p).filter(|&k| self.a[k - 1] > 0.0).collect()
    }

    /// True when the stay length is deterministic.
    pub fn is_point_mass(&self) -> bool {
        self.support().len() == 1
    }

    /// `a_{jk} = a_j + ... + a_k`; zero when `j > k`.
    pub fn partial_sum(&self, j: usize, k: usize) -> f64 {
        if j > k {
            return 0.0;
        }
        debug_assert!(j >= 1 && k <= self.p);
        if j == 1 {
            self.cum[k]
        } else {
            self.cum[k] - self.cum[j - 1]
        }
    }

    fn alpha_formula(&self, k: usize) -> f64 {
        let n = self.n as f64;
        let n1 = (self.n + 1) as i32;
        let lower = self.partial_sum(1, k - 1);
        let upper = self.partial_sum(1, k);
        ((n + 1.0) * self.a[k - 1] + lower.powi(n1) - upper.powi(n1)) / n
    }

    fn beta_formula(&self, k: usize) -> f64 {
        let ni = self.n as i32;
        let tail_after = self.partial_sum(k + 1, self.p);
        let tail_from = self.partial_sum(k, self.p);
        self.a[k - 1] + tail_after * self.partial_sum(1, k).powi(ni)
            - tail_from * self.partial_sum(1, k - 1).powi(ni)
    }

    pub fn alpha(&self, k: usize) -> Result<f64> {
        self.check_period(k)?;
        Ok(self.alpha[k - 1])
    }

    pub fn beta(&self, k: usize) -> Result<f64> {
        self.check_period(k)?;
        Ok(self.beta[k - 1])
    }

    /// All `alpha_k`, index `k - 1`.
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    fn check_period(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.p {
            return Err(Error::invalid(format!("period {k} outside 1..={}", self.p)));
        }
        Ok(())
    }

    /// `A`, `B` and `V`.
    pub fn matrices(&self) -> MechanismMatrices {
        let p = self.p;
        let mut a = DMatrix::zeros(p, p);
        let mut b = DMatrix::zeros(p, p);
        for k in self.m.max(2)..=p {
            let bk = padded_centering(k, p).expect("k within 1..=p");
            a += bk.as_matrix() * self.alpha[k - 1];
            b += bk.as_matrix() * self.beta[k - 1];
        }
        let n = self.n;
        let v = kron(&DMatrix::identity(n, n), &a)
            - kron(&DMatrix::from_element(n, n, 1.0 / n as f64), &b);
        MechanismMatrices {
            a: SymMatrix::symmetrize(a),
            b: SymMatrix::symmetrize(b),
            v: SymMatrix::symmetrize(v),
        }
    }

    /// Exact expectation of the observation projector,
    /// `n/(n-1) B_n ⊗ (A - B/n)`. Its diagonal blocks agree with those of
    /// `V`; the off-diagonal blocks differ. Zero for a single subject.
    pub fn expected_projector(&self) -> SymMatrix {
        if self.n == 1 {
            return SymMatrix::zeros(self.p);
        }
        let mats = self.matrices();
        let nf = self.n as f64;
        let d = mats.a.as_matrix() - mats.b.as_matrix() / nf;
        let bn = centering(self.n).expect("n >= 2");
        SymMatrix::symmetrize(kron(bn.as_matrix(), &d) * (nf / (nf - 1.0)))
    }
}

/// Checks `S^-1 - S^-1 J S^-1 / (1' S^-1 1) = B_k` for the leading `k x k`
/// block `S` of `I + eta 1' + 1 eta' + b J`.
///
/// Returns `Ok(true)` when the identity holds to `1e-10` entrywise and an
/// error when `S` is singular.
pub fn type_h_identity_check(k: usize, eta: &[f64], b: f64) -> Result<bool> {
    if k == 0 || k > eta.len() {
        return Err(Error::invalid(format!(
            "block order {k} must lie in 1..={}",
            eta.len()
        )));
    }
    let sigma = DMatrix::from_fn(k, k, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id + eta[i] + eta[j] + b
    });
    let lu = sigma.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("type-H covariance block of order {k}")))?;
    let cond = sigma.norm() * inv.norm();
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::Singular(format!(
            "type-H covariance block of order {k} has condition number {cond:e}"
        )));
    }
    let ones = DMatrix::from_element(k, 1, 1.0);
    let inv_one = &inv * &ones;
    let denom = (ones.transpose() * &inv_one)[(0, 0)];
    if denom.abs() < 1e-12 {
        return Err(Error::Singular("1' S^-1 1 vanishes".into()));
    }
    let lhs = &inv - (&inv_one * inv_one.transpose()) / denom;
    let target = centering(k)?;
    Ok(crate::linalg::max_abs_diff(&lhs, target.as_matrix()) <= 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    #[test]
    fn complete_experiment() {
        let mech = DropoutMechanism::complete(4, 16).unwrap();
        assert_eq!(mech.first_support(), 4);
        for k in 1..4 {
            assert_eq!(mech.alpha(k).unwrap(), 0.0);
            assert_eq!(mech.beta(k).unwrap(), 0.0);
        }
        assert_eq!(mech.alpha(4).unwrap(), 1.0);
        assert_eq!(mech.beta(4).unwrap(), 1.0);

        for (p, n) in [(3, 2), (4, 16), (5, 7)] {
            let mech = DropoutMechanism::complete(p, n).unwrap();
            let mats = mech.matrices();
            let bp = centering(p).unwrap();
            assert_eq!(max_abs_diff(mats.a.as_matrix(), bp.as_matrix()), 0.0);
            assert_eq!(max_abs_diff(mats.b.as_matrix(), bp.as_matrix()), 0.0);
            let expected = kron(centering(n).unwrap().as_matrix(), bp.as_matrix());
            assert!(max_abs_diff(mats.v.as_matrix(), &expected) < 1e-15);
        }
    }

    #[test]
    fn half_half_mechanism_weights() {
        let mech = DropoutMechanism::new(4, 16, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(mech.first_support(), 3);
        let tiny = 0.5f64.powi(17);
        assert!((mech.alpha(3).unwrap() - (8.5 - tiny) / 16.0).abs() < 1e-15);
        assert!((mech.alpha(4).unwrap() - (7.5 + tiny) / 16.0).abs() < 1e-15);
        assert!((mech.alpha(3).unwrap() - 0.5312495232).abs() < 1e-10);
        assert!((mech.alpha(4).unwrap() - 0.4687504768).abs() < 1e-10);
        assert!((mech.beta(3).unwrap() - (0.5 + tiny)).abs() < 1e-15);
        assert!((mech.beta(4).unwrap() - (0.5 - 0.5 * 0.5f64.powi(16))).abs() < 1e-15);
        assert!((mech.beta(3).unwrap() - 0.5000076294).abs() < 1e-10);
        assert!((mech.beta(4).unwrap() - 0.4999923706).abs() < 1e-10);
        assert_eq!(mech.alpha(1).unwrap(), 0.0);
        assert!(mech.alpha(5).is_err());
        assert!(mech.beta(0).is_err());

        let mats = mech.matrices();
        let expected = padded_centering(3, 4).unwrap().as_matrix() * mech.alpha(3).unwrap()
            + centering(4).unwrap().as_matrix() * mech.alpha(4).unwrap();
        assert!(max_abs_diff(mats.a.as_matrix(), &expected) < 1e-15);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(DropoutMechanism::new(4, 16, vec![0.5, 0.6, -0.1, 0.0]).is_err());
        assert!(DropoutMechanism::new(4, 16, vec![0.5, 0.5]).is_err());
        assert!(DropoutMechanism::new(4, 16, vec![0.5, 0.4, 0.0, 0.0]).is_err());
        assert!(DropoutMechanism::new(1, 16, vec![1.0]).is_err());
        assert!(DropoutMechanism::new(4, 0, vec![0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(DropoutMechanism::new(2, 4, vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn zero_probability_gives_zero_weights() {
        let mech = DropoutMechanism::new(5, 9, vec![0.0, 0.3, 0.0, 0.2, 0.5]).unwrap();
        assert_eq!(mech.alpha(3).unwrap(), 0.0);
        assert_eq!(mech.beta(3).unwrap(), 0.0);
        assert_eq!(mech.alpha(1).unwrap(), 0.0);
        assert_eq!(mech.beta(1).unwrap(), 0.0);
    }

    #[test]
    fn weight_matrices_are_psd_with_zero_row_sums() {
        let cases = [
            (4, 16, vec![0.0, 0.0, 0.5, 0.5]),
            (5, 20, vec![0.0, 0.05, 0.15, 0.2, 0.6]),
            (5, 6, vec![0.1, 0.2, 0.3, 0.2, 0.2]),
            (3, 3, vec![0.2, 0.3, 0.5]),
        ];
        for (p, n, a) in cases {
            let mech = DropoutMechanism::new(p, n, a).unwrap();
            for k in 1..=p {
                assert!(mech.alpha(k).unwrap() >= -1e-12);
                assert!(mech.beta(k).unwrap() >= -1e-12);
            }
            let mats = mech.matrices();
            assert!(mats.a.min_eigenvalue() >= -1e-10);
            assert!(mats.b.min_eigenvalue() >= -1e-10);
            for r in 0..n * p {
                assert!(mats.v.row(r).sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_period_dropout_is_allowed() {
        let mech = DropoutMechanism::new(3, 4, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(mech.first_support(), 1);
    }

    #[test]
    fn type_h_identity() {
        assert!(type_h_identity_check(4, &[0.0; 4], 0.0).unwrap());
        assert!(type_h_identity_check(4, &[0.0; 4], 0.3).unwrap());
        assert!(type_h_identity_check(5, &[0.1, -0.2, 0.05, 0.15, -0.1], 0.0).unwrap());
        // Singular: I + bJ with b = -1/k.
        assert!(type_h_identity_check(4, &[0.0; 4], -0.25).is_err());
    }
}
