//! Information matrices for the direct treatment effects.
//!
//! A realized matrix comes from one dropout realization `l` (subject `i`
//! stays for the first `l_i` periods). The surrogate replaces the
//! observation projector by its expectation under the dropout mechanism.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::ExactDesign;
use crate::dropout::DropoutMechanism;
use crate::error::{Error, Result};
use crate::linalg::{centering, proj_complement, SymMatrix, DEFAULT_RANK_TOL};
use crate::sequence::TreatmentSequence;

/// Relative threshold on `λ_2` below which a design counts as disconnected.
pub const DISCONNECTED_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    A,
    D,
    E,
    T,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::A, Criterion::D, Criterion::E, Criterion::T];

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::A => "A",
            Criterion::D => "D",
            Criterion::E => "E",
            Criterion::T => "T",
        }
    }

    pub(crate) fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Criterion::A),
            "D" => Ok(Criterion::D),
            "E" => Ok(Criterion::E),
            "T" => Ok(Criterion::T),
            _ => Err(Error::invalid(format!(
                "unknown criterion {s:?}; expected a, d, e or t"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InfoMatrix {
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c22: DMatrix<f64>,
    /// `C11 - C12 C22^+ C21`.
    pub schur: SymMatrix,
    /// Eigenvalues of `schur`, ascending.
    pub eigenvalues: Vec<f64>,
}

impl InfoMatrix {
    pub fn from_blocks(c11: DMatrix<f64>, c12: DMatrix<f64>, c22: DMatrix<f64>) -> Self {
        let c22_sym = SymMatrix::symmetrize(c22.clone());
        let schur = SymMatrix::symmetrize(
            &c11 - &c12 * c22_sym.pinv(DEFAULT_RANK_TOL).as_matrix() * c12.transpose(),
        );
        let eigenvalues = schur.eigenvalues();
        InfoMatrix {
            c11,
            c12,
            c22,
            schur,
            eigenvalues,
        }
    }

    pub fn treatments(&self) -> usize {
        self.c11.nrows()
    }

    pub fn criterion(&self, which: Criterion, n: usize) -> f64 {
        criterion_from_eigenvalues(&self.eigenvalues, which, n)
    }

    /// All four criteria, indexed as [`Criterion::ALL`].
    pub fn criteria(&self, n: usize) -> [f64; 4] {
        Criterion::ALL.map(|c| self.criterion(c, n))
    }

    pub fn is_connected(&self) -> bool {
        !disconnected(&self.eigenvalues)
    }
}

fn disconnected(eigenvalues: &[f64]) -> bool {
    let t = eigenvalues.len();
    if t < 2 {
        return true;
    }
    let top = eigenvalues[t - 1];
    eigenvalues[1] <= DISCONNECTED_TOL * top.max(1.0)
}

/// Criterion value from the ascending eigenvalues of an information matrix;
/// the smallest eigenvalue is the structural zero and is skipped.
pub fn criterion_from_eigenvalues(eigenvalues: &[f64], which: Criterion, n: usize) -> f64 {
    let t = eigenvalues.len();
    let nf = n as f64;
    let tf = t as f64;
    let rest = &eigenvalues[1.min(t)..];
    if which == Criterion::T {
        return rest.iter().sum::<f64>() / (nf * (tf - 1.0));
    }
    if disconnected(eigenvalues) {
        return 0.0;
    }
    match which {
        Criterion::A => (tf - 1.0) / (nf * rest.iter().map(|l| 1.0 / l).sum::<f64>()),
        Criterion::D => (rest.iter().map(|l| l.ln()).sum::<f64>() / (tf - 1.0)).exp() / nf,
        Criterion::E => rest[0] / nf,
        Criterion::T => unreachable!(),
    }
}

/// Criterion value, checking that `info` has order `t`.
pub fn criterion(info: &InfoMatrix, which: Criterion, n: usize, t: usize) -> Result<f64> {
    if info.treatments() != t {
        return Err(Error::invalid(format!(
            "information matrix has order {} but t={t}",
            info.treatments()
        )));
    }
    Ok(info.criterion(which, n))
}

/// Stacked incidence matrices of a design.
#[derive(Clone, Debug)]
pub struct DesignMatrices {
    pub t: usize,
    pub p: usize,
    pub n: usize,
    /// `np x t`, subject blocks stacked.
    pub td: DMatrix<f64>,
    pub fd: DMatrix<f64>,
    pub tu: Vec<DMatrix<f64>>,
    pub fu: Vec<DMatrix<f64>>,
}

impl DesignMatrices {
    pub fn new(design: &ExactDesign) -> Self {
        let (t, p, n) = (design.treatments(), design.periods(), design.subjects());
        let tu: Vec<_> = design.sequences().iter().map(|s| s.incidence()).collect();
        let fu: Vec<_> = design
            .sequences()
            .iter()
            .map(|s| s.carryover_incidence())
            .collect();
        let mut td = DMatrix::zeros(n * p, t);
        let mut fd = DMatrix::zeros(n * p, t);
        for u in 0..n {
            td.view_mut((u * p, 0), (p, t)).copy_from(&tu[u]);
            fd.view_mut((u * p, 0), (p, t)).copy_from(&fu[u]);
        }
        DesignMatrices {
            t,
            p,
            n,
            td,
            fd,
            tu,
            fu,
        }
    }

    /// `T̄ = n^-1 sum_u T_u`.
    pub fn t_bar(&self) -> DMatrix<f64> {
        mean(&self.tu)
    }

    pub fn f_bar(&self) -> DMatrix<f64> {
        mean(&self.fu)
    }
}

fn mean(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(blocks[0].nrows(), blocks[0].ncols());
    for b in blocks {
        out += b;
    }
    out / blocks.len() as f64
}

fn check_stays(design: &ExactDesign, l: &[usize]) -> Result<()> {
    if l.len() != design.subjects() {
        return Err(Error::invalid(format!(
            "got {} stay lengths for {} subjects",
            l.len(),
            design.subjects()
        )));
    }
    if let Some(bad) = l.iter().find(|&&v| v == 0 || v > design.periods()) {
        return Err(Error::invalid(format!(
            "stay length {bad} outside 1..={}",
            design.periods()
        )));
    }
    Ok(())
}

/// Precomputed per-sequence Gram matrices for fast realized information.
///
/// For each distinct sequence and stay length `l`, stores the Gram matrix of
/// the within-subject centered `[Z | T | F]` restricted to the first `l`
/// rows. Summing these over subjects and sweeping out the `Z` block gives
/// the realized `C11`, `C12`, `C22`.
#[derive(Clone, Debug)]
pub struct RealizedInfoEngine {
    t: usize,
    p: usize,
    n: usize,
    sequences: Vec<TreatmentSequence>,
    /// Index into `sequences` per subject.
    subject_group: Vec<usize>,
    /// `grams[g][l - 1]`.
    grams: Vec<Vec<DMatrix<f64>>>,
}

impl RealizedInfoEngine {
    pub fn new(design: &ExactDesign) -> Self {
        let (t, p) = (design.treatments(), design.periods());
        let mut index: HashMap<&TreatmentSequence, usize> = HashMap::new();
        let mut sequences = Vec::new();
        let mut subject_group = Vec::with_capacity(design.subjects());
        for s in design.sequences() {
            let g = *index.entry(s).or_insert_with(|| {
                sequences.push(s.clone());
                sequences.len() - 1
            });
            subject_group.push(g);
        }
        let grams = sequences
            .iter()
            .map(|s| (1..=p).map(|l| subject_gram(s, l)).collect())
            .collect();
        RealizedInfoEngine {
            t,
            p,
            n: design.subjects(),
            sequences,
            subject_group,
            grams,
        }
    }

    pub fn periods(&self) -> usize {
        self.p
    }

    pub fn treatments(&self) -> usize {
        self.t
    }

    pub fn subjects(&self) -> usize {
        self.n
    }

    /// Distinct sequences, in order of first appearance.
    pub fn groups(&self) -> &[TreatmentSequence] {
        &self.sequences
    }

    /// Number of subjects assigned to each distinct sequence.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.sequences.len()];
        for &g in &self.subject_group {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn info(&self, l: &[usize]) -> InfoMatrix {
        let dim = self.p + 2 * self.t;
        let mut total = DMatrix::zeros(dim, dim);
        for (&g, &stay) in self.subject_group.iter().zip(l) {
            total += &self.grams[g][stay - 1];
        }
        self.info_from_gram(&total)
    }

    /// Information from grouped stay counts: `counts[g][l - 1]` subjects of
    /// group `g` stay for `l` periods.
    pub fn info_from_counts(&self, counts: &[Vec<usize>]) -> InfoMatrix {
        let dim = self.p + 2 * self.t;
        let mut total = DMatrix::zeros(dim, dim);
        for (g, per_l) in counts.iter().enumerate() {
            for (idx, &c) in per_l.iter().enumerate() {
                if c > 0 {
                    total += &self.grams[g][idx] * c as f64;
                }
            }
        }
        self.info_from_gram(&total)
    }

    /// Gram matrix of one subject of group `g` staying `l` periods.
    pub(crate) fn gram(&self, g: usize, l: usize) -> &DMatrix<f64> {
        &self.grams[g][l - 1]
    }

    pub(crate) fn gram_dim(&self) -> usize {
        self.p + 2 * self.t
    }

    pub(crate) fn info_from_gram(&self, g: &DMatrix<f64>) -> InfoMatrix {
        let (p, t) = (self.p, self.t);
        let gzz = SymMatrix::symmetrize(g.view((0, 0), (p, p)).into_owned());
        let gzx = g.view((0, p), (p, 2 * t)).into_owned();
        let gxx = g.view((p, p), (2 * t, 2 * t)).into_owned();
        let w = gxx - gzx.transpose() * gzz.pinv(DEFAULT_RANK_TOL).as_matrix() * &gzx;
        InfoMatrix::from_blocks(
            w.view((0, 0), (t, t)).into_owned(),
            w.view((0, t), (t, t)).into_owned(),
            w.view((t, t), (t, t)).into_owned(),
        )
    }
}

fn subject_gram(s: &TreatmentSequence, l: usize) -> DMatrix<f64> {
    let (p, t) = (s.periods(), s.treatments());
    let mut x = DMatrix::zeros(l, p + 2 * t);
    x.view_mut((0, 0), (l, p)).fill_with_identity();
    x.view_mut((0, p), (l, t))
        .copy_from(&s.incidence().rows(0, l));
    x.view_mut((0, p + t), (l, t))
        .copy_from(&s.carryover_incidence().rows(0, l));
    let xc = centering(l).expect("l >= 1").as_matrix() * x;
    xc.transpose() * xc
}

/// Realized information for stay lengths `l` (one per subject).
pub fn realized_info(design: &ExactDesign, l: &[usize]) -> Result<InfoMatrix> {
    check_stays(design, l)?;
    Ok(RealizedInfoEngine::new(design).info(l))
}

/// `O = M' pr⊥(MZ | MU) M` for stay lengths `l`, as an `np x np` matrix.
pub fn observation_projector(p: usize, l: &[usize]) -> SymMatrix {
    let n = l.len();
    let observed: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..l[u]).map(move |k| (u, k)))
        .collect();
    let rows = observed.len();
    let mut g = DMatrix::zeros(rows, p + n);
    for (r, &(u, k)) in observed.iter().enumerate() {
        g[(r, k)] = 1.0;
        g[(r, p + u)] = 1.0;
    }
    let proj = proj_complement(&g);
    let mut o = DMatrix::zeros(n * p, n * p);
    for (r, &(ur, kr)) in observed.iter().enumerate() {
        for (c, &(uc, kc)) in observed.iter().enumerate() {
            o[(ur * p + kr, uc * p + kc)] = proj[(r, c)];
        }
    }
    SymMatrix::symmetrize(o)
}

/// Information from an arbitrary `np x np` projector-like weight matrix.
pub fn info_from_weight(mats: &DesignMatrices, w: &DMatrix<f64>) -> InfoMatrix {
    let (td, fd) = (&mats.td, &mats.fd);
    InfoMatrix::from_blocks(
        td.transpose() * w * td,
        td.transpose() * w * fd,
        fd.transpose() * w * fd,
    )
}

/// Realized information through the dense projector; an independent check
/// on [`realized_info`].
pub fn realized_info_dense(design: &ExactDesign, l: &[usize]) -> Result<InfoMatrix> {
    check_stays(design, l)?;
    let mats = DesignMatrices::new(design);
    Ok(info_from_weight(
        &mats,
        observation_projector(design.periods(), l).as_matrix(),
    ))
}

fn check_dims(design: &ExactDesign, mech: &DropoutMechanism) -> Result<()> {
    if design.periods() != mech.periods() {
        return Err(Error::invalid(format!(
            "design has {} periods but the mechanism has {}",
            design.periods(),
            mech.periods()
        )));
    }
    if design.subjects() != mech.subjects() {
        return Err(Error::invalid(format!(
            "design has {} subjects but the mechanism has n={}",
            design.subjects(),
            mech.subjects()
        )));
    }
    Ok(())
}

/// Surrogate information with `V = I_n ⊗ A - n^-1 J_n ⊗ B` from the
/// mechanism.
pub fn surrogate_info(design: &ExactDesign, mech: &DropoutMechanism) -> Result<InfoMatrix> {
    check_dims(design, mech)?;
    let mats = mech.matrices();
    Ok(surrogate_from_pair(
        design,
        mats.a.as_matrix(),
        mats.b.as_matrix(),
    ))
}

/// Blocks `C_ij = sum_u G_iu' A G_ju - n Ḡ_i' B Ḡ_j`, i.e. the information
/// for `V = I_n ⊗ A - n^-1 J_n ⊗ B` without forming `V`.
pub fn surrogate_from_pair(design: &ExactDesign, a: &DMatrix<f64>, b: &DMatrix<f64>) -> InfoMatrix {
    let mats = DesignMatrices::new(design);
    let nf = mats.n as f64;
    let (tb, fb) = (mats.t_bar(), mats.f_bar());
    let mut c11 = -(tb.transpose() * b * &tb) * nf;
    let mut c12 = -(tb.transpose() * b * &fb) * nf;
    let mut c22 = -(fb.transpose() * b * &fb) * nf;
    for (tu, fu) in mats.tu.iter().zip(&mats.fu) {
        c11 += tu.transpose() * a * tu;
        c12 += tu.transpose() * a * fu;
        c22 += fu.transpose() * a * fu;
    }
    InfoMatrix::from_blocks(c11, c12, c22)
}

/// Per-sequence check matrices `Č_11 = T'(A - B)T + T̂'B T̂`, and the
/// analogues for `(T, F)` and `(F, F)`, with `T̂ = T B_t`.
#[derive(Clone, Debug)]
pub struct CheckMatrices {
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c22: DMatrix<f64>,
}

pub fn check_matrices(s: &TreatmentSequence, mech: &DropoutMechanism) -> Result<CheckMatrices> {
    if s.periods() != mech.periods() {
        return Err(Error::invalid(format!(
            "sequence has {} periods but the mechanism has {}",
            s.periods(),
            mech.periods()
        )));
    }
    let mats = mech.matrices();
    Ok(check_matrices_with(
        s,
        mats.a.as_matrix(),
        mats.b.as_matrix(),
    ))
}

pub(crate) fn check_matrices_with(
    s: &TreatmentSequence,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> CheckMatrices {
    let bt = centering(s.treatments()).expect("t >= 1");
    let (ts, fs) = (s.incidence(), s.carryover_incidence());
    let (th, fh) = (&ts * bt.as_matrix(), &fs * bt.as_matrix());
    let amb = a - b;
    CheckMatrices {
        c11: ts.transpose() * &amb * &ts + th.transpose() * b * &th,
        c12: ts.transpose() * &amb * &fs + th.transpose() * b * &fh,
        c22: fs.transpose() * &amb * &fs + fh.transpose() * b * &fh,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn design(t: usize, seqs: &[&str]) -> ExactDesign {
        ExactDesign::new(
            t,
            seqs.iter()
                .map(|s| TreatmentSequence::parse(s, t).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn williams4() -> ExactDesign {
        design(
            4,
            &[
                "1243", "2314", "3421", "4132", "1243", "2314", "3421", "4132",
            ],
        )
    }

    #[test]
    fn single_period_stays_give_zero_information() {
        let d = williams4();
        let info = realized_info(&d, &[1; 8]).unwrap();
        assert!(info.schur.iter().all(|v| v.abs() < 1e-12));
        assert!(!info.is_connected());
        assert_eq!(info.criterion(Criterion::T, 8), 0.0);
    }

    #[test]
    fn fast_path_matches_dense_projection() {
        let d = design(3, &["123", "231", "312", "132", "213", "321", "112"]);
        for l in [
            vec![3; 7],
            vec![1, 2, 3, 3, 2, 1, 3],
            vec![2; 7],
            vec![3, 3, 1, 1, 1, 1, 2],
        ] {
            let fast = realized_info(&d, &l).unwrap();
            let dense = realized_info_dense(&d, &l).unwrap();
            assert!(max_abs_diff(&fast.c11, &dense.c11) < 1e-10);
            assert!(max_abs_diff(&fast.c12, &dense.c12) < 1e-10);
            assert!(max_abs_diff(&fast.c22, &dense.c22) < 1e-10);
            assert!(max_abs_diff(fast.schur.as_matrix(), dense.schur.as_matrix()) < 1e-10);
        }
        assert!(realized_info(&d, &[4; 7]).is_err());
        assert!(realized_info(&d, &[3; 6]).is_err());
    }

    #[test]
    fn complete_data_is_connected() {
        let d = williams4();
        let info = realized_info(&d, &[4; 8]).unwrap();
        assert!(info.is_connected());
        assert!(info.eigenvalues[0].abs() < 1e-9);
        for r in 0..4 {
            assert!(info.schur.row(r).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn disconnecting_realization() {
        // Treatment 4 only appears in periods 3 and 4, and everyone leaves
        // after period 2.
        let d = design(4, &["1234", "2134", "1243", "2143"]);
        let info = realized_info(&d, &[2; 4]).unwrap();
        assert!(!info.is_connected());
        assert_eq!(info.criterion(Criterion::A, 4), 0.0);
        assert_eq!(info.criterion(Criterion::D, 4), 0.0);
        assert_eq!(info.criterion(Criterion::E, 4), 0.0);
    }

    #[test]
    fn criteria_on_completely_symmetric_matrix() {
        let (n, t, y) = (12usize, 4usize, 2.5);
        let c = centering(t).unwrap().as_matrix() * (n as f64 * y / (t as f64 - 1.0));
        let info = InfoMatrix::from_blocks(c, DMatrix::zeros(t, t), DMatrix::zeros(t, t));
        for which in Criterion::ALL {
            let v = criterion(&info, which, n, t).unwrap();
            assert!((v - y / 3.0).abs() < 1e-12, "{which}: {v}");
        }
        assert!(criterion(&info, Criterion::A, n, 3).is_err());
    }

    #[test]
    fn criteria_on_disconnected_spectrum() {
        let ev = [0.0, 0.0, 2.0, 4.0];
        assert_eq!(criterion_from_eigenvalues(&ev, Criterion::A, 2), 0.0);
        assert_eq!(criterion_from_eigenvalues(&ev, Criterion::D, 2), 0.0);
        assert_eq!(criterion_from_eigenvalues(&ev, Criterion::E, 2), 0.0);
        assert_eq!(criterion_from_eigenvalues(&ev, Criterion::T, 2), 1.0);
    }

    #[test]
    fn two_treatment_criteria_coincide() {
        let ev = [0.0, 3.0];
        let vals: Vec<f64> = Criterion::ALL
            .iter()
            .map(|&c| criterion_from_eigenvalues(&ev, c, 3))
            .collect();
        for v in vals {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn complete_experiment_surrogate_equals_realized() {
        let d = williams4();
        let mech = DropoutMechanism::complete(4, 8).unwrap();
        let s = surrogate_info(&d, &mech).unwrap();
        let r = realized_info(&d, &[4; 8]).unwrap();
        assert!(max_abs_diff(s.schur.as_matrix(), r.schur.as_matrix()) < 1e-10);
        assert!(max_abs_diff(&s.c12, &r.c12) < 1e-10);
    }

    #[test]
    fn surrogate_pair_matches_dense_v() {
        let d = design(3, &["123", "231", "312", "132", "213"]);
        let mech = DropoutMechanism::new(3, 5, vec![0.1, 0.3, 0.6]).unwrap();
        let mats = mech.matrices();
        let dense = info_from_weight(&DesignMatrices::new(&d), mats.v.as_matrix());
        let fast = surrogate_info(&d, &mech).unwrap();
        assert!(max_abs_diff(&dense.c11, &fast.c11) < 1e-12);
        assert!(max_abs_diff(&dense.c12, &fast.c12) < 1e-12);
        assert!(max_abs_diff(&dense.c22, &fast.c22) < 1e-12);
    }

    #[test]
    fn check_matrix_aggregation_identity() {
        let d = design(3, &["123", "231", "312", "112", "221", "333"]);
        let mech = DropoutMechanism::new(3, 6, vec![0.1, 0.3, 0.6]).unwrap();
        let mats = mech.matrices();
        let b = mats.b.as_matrix();
        let surrogate = surrogate_info(&d, &mech).unwrap();
        let dm = DesignMatrices::new(&d);
        let bt = centering(3).unwrap();
        let g1 = dm.t_bar() * bt.as_matrix();
        let g2 = dm.f_bar() * bt.as_matrix();
        let mut sums = [
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 3),
        ];
        for s in d.sequences() {
            let c = check_matrices(s, &mech).unwrap();
            sums[0] += c.c11;
            sums[1] += c.c12;
            sums[2] += c.c22;
        }
        let nf = 6.0;
        let rhs11 = &surrogate.c11 + g1.transpose() * b * &g1 * nf;
        let rhs12 = &surrogate.c12 + g1.transpose() * b * &g2 * nf;
        let rhs22 = &surrogate.c22 + g2.transpose() * b * &g2 * nf;
        assert!(max_abs_diff(&sums[0], &rhs11) < 1e-10);
        assert!(max_abs_diff(&sums[1], &rhs12) < 1e-10);
        assert!(max_abs_diff(&sums[2], &rhs22) < 1e-10);
    }

    #[test]
    fn check_matrix_trace_matches_q11() {
        let mech = DropoutMechanism::new(4, 6, vec![0.0, 0.2, 0.3, 0.5]).unwrap();
        let bt = centering(3).unwrap();
        for text in ["1232", "1111", "1213", "3312"] {
            let s = TreatmentSequence::parse(text, 3).unwrap();
            let c = check_matrices(&s, &mech).unwrap();
            let hatted = bt.as_matrix() * &c.c11 * bt.as_matrix();
            let q = crate::qsolver::q_coeffs(&s, &mech).unwrap();
            let mats = mech.matrices();
            let th = s.incidence() * bt.as_matrix();
            let direct = (th.transpose() * mats.a.as_matrix() * &th).trace();
            assert!((direct - q.q11).abs() < 1e-10);
            assert!((hatted.trace() - q.q11).abs() < 1e-10, "{text}");
        }
    }

    #[test]
    fn projector_expectation_by_enumeration() {
        for (p, n, a) in [
            (3, 3, vec![0.2, 0.3, 0.5]),
            (4, 3, vec![0.0, 0.0, 0.5, 0.5]),
        ] {
            let mech = DropoutMechanism::new(p, n, a.clone()).unwrap();
            let mut mean = DMatrix::zeros(n * p, n * p);
            let total = p.pow(n as u32);
            for code in 0..total {
                let mut l = Vec::with_capacity(n);
                let (mut c, mut w) = (code, 1.0);
                for _ in 0..n {
                    l.push(c % p + 1);
                    w *= a[c % p];
                    c /= p;
                }
                if w > 0.0 {
                    mean += observation_projector(p, &l).as_matrix() * w;
                }
            }
            let expected = mech.expected_projector();
            assert!(max_abs_diff(&mean, expected.as_matrix()) < 1e-12);
            let v = mech.matrices().v;
            for u in 0..n {
                let vb = v.view((u * p, u * p), (p, p)).into_owned();
                let eb = mean.view((u * p, u * p), (p, p)).into_owned();
                assert!(max_abs_diff(&vb, &eb) < 1e-12);
            }
        }
    }
}
