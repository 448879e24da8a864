//! The linear optimality system on the certificate support, verification of
//! approximate designs, integer search for exact designs and the
//! symmetric-block weight equations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{ApproximateDesign, ExactDesign};
use crate::dropout::DropoutMechanism;
use crate::error::{Error, Result};
use crate::information::check_matrices_with;
use crate::linalg::{centering, SymMatrix};
use crate::qsolver::{q_coeffs_unchecked, OptimalityCertificate};
use crate::sequence::{SymmetricBlock, TreatmentSequence};

/// `X p = Y` restricted to the support; one column per support sequence.
#[derive(Clone, Debug)]
pub struct OptimalitySystem {
    pub x: DMatrix<f64>,
    /// Right-hand side for weights summing to one.
    pub y: DVector<f64>,
    pub columns: Vec<TreatmentSequence>,
    pub t: usize,
}

impl OptimalitySystem {
    /// `||X w - Y||` for weights in column order.
    pub fn residual(&self, weights: &[f64]) -> f64 {
        (&self.x * DVector::from_column_slice(weights) - &self.y).norm()
    }

    /// `||X N - n Y||` for integer counts in column order.
    pub fn exact_residual(&self, counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let c = DVector::from_iterator(counts.len(), counts.iter().map(|&v| v as f64));
        (&self.x * c - &self.y * n as f64).norm()
    }

    pub fn column_of(&self, s: &TreatmentSequence) -> Option<usize> {
        self.columns.binary_search(s).ok()
    }

    /// Residual of an exact design, or `None` if it uses a sequence outside
    /// the support.
    pub fn design_residual(&self, design: &ExactDesign) -> Option<f64> {
        let mut counts = vec![0; self.columns.len()];
        for (s, c) in design.counts() {
            counts[self.column_of(&s)?] += c;
        }
        Some(self.exact_residual(&counts))
    }
}

fn check_certificate(cert: &OptimalityCertificate, mech: &DropoutMechanism) -> Result<()> {
    if cert.support.is_empty() {
        return Err(Error::invalid("certificate support is empty"));
    }
    if cert.mechanism.p != mech.periods() || cert.mechanism.a != mech.probabilities() {
        return Err(Error::invalid(
            "certificate was built for a different dropout mechanism",
        ));
    }
    Ok(())
}

pub fn build_system(
    cert: &OptimalityCertificate,
    mech: &DropoutMechanism,
) -> Result<OptimalitySystem> {
    check_certificate(cert, mech)?;
    let (t, p) = (cert.t, mech.periods());
    let mats = mech.matrices();
    let (a, b) = (mats.a.as_matrix(), mats.b.as_matrix());
    let bt = centering(t)?;
    let bt = bt.as_matrix();
    let x_star = cert.x_star;
    let rows = 2 * t * t + p * t;
    let mut x = DMatrix::zeros(rows, cert.support.len());
    for (col, s) in cert.support.iter().enumerate() {
        let c = check_matrices_with(s, a, b);
        let eq1 = &c.c11 + &c.c12 * bt * x_star;
        let eq2 = c.c12.transpose() + &c.c22 * bt * x_star;
        let eq3 = b * (s.incidence() * bt + s.carryover_incidence() * bt * x_star);
        let stacked = eq1.iter().chain(eq2.iter()).chain(eq3.iter());
        for (r, v) in stacked.enumerate() {
            x[(r, col)] = *v;
        }
    }
    let mut y = DVector::zeros(rows);
    let target = bt * cert.optimal_value();
    for (r, v) in target.iter().enumerate() {
        y[r] = *v;
    }
    Ok(OptimalitySystem {
        x,
        y,
        columns: cert.support.clone(),
        t,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproximateCheck {
    /// Residual of the system over the support part of the weights.
    pub residual: f64,
    /// Total weight placed outside the support.
    pub outside_mass: f64,
    pub outside: Vec<String>,
}

impl ApproximateCheck {
    pub fn is_optimal(&self, tol: f64) -> bool {
        self.residual <= tol && self.outside_mass == 0.0
    }
}

pub fn verify_approximate(
    weights: &ApproximateDesign,
    cert: &OptimalityCertificate,
    mech: &DropoutMechanism,
) -> Result<ApproximateCheck> {
    let system = build_system(cert, mech)?;
    Ok(verify_with_system(weights, &system))
}

pub fn verify_with_system(
    weights: &ApproximateDesign,
    system: &OptimalitySystem,
) -> ApproximateCheck {
    let mut w = vec![0.0; system.columns.len()];
    let mut outside_mass = 0.0;
    let mut outside = Vec::new();
    for (s, &v) in weights.weights() {
        match system.column_of(s) {
            Some(c) => w[c] = v,
            None if v > 0.0 => {
                outside_mass += v;
                outside.push(s.to_string());
            }
            None => {}
        }
    }
    ApproximateCheck {
        residual: system.residual(&w),
        outside_mass,
        outside,
    }
}

const RELAX_ITERS: usize = 20_000;
const MAX_PASSES: usize = 10_000;

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub seed: u64,
    /// Extra runs beyond the first, each with its own shuffled move order.
    pub restarts: usize,
    /// Perturb-and-descend rounds per run.
    pub iters: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            seed: 0,
            restarts: 8,
            iters: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub residual: f64,
    pub restarts_used: usize,
    pub moves: usize,
    pub seed: u64,
}

/// Heuristic minimizer of `||X N - n Y||` over integer `N >= 0` with
/// `sum N = n`.
///
/// Rounds the continuous least-squares solution, then runs iterated local
/// search over unit transfers from several seeded starting points.
pub fn exact_search(
    n: usize,
    cert: &OptimalityCertificate,
    mech: &DropoutMechanism,
    opts: &SearchOptions,
) -> Result<(ExactDesign, SearchReport)> {
    if n == 0 {
        return Err(Error::invalid("exact search needs n >= 1"));
    }
    let system = build_system(cert, mech)?;
    let (counts, report) = search_counts(&system, n, opts);
    let pairs: Vec<(TreatmentSequence, usize)> = system
        .columns
        .iter()
        .cloned()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .collect();
    Ok((ExactDesign::from_counts(cert.t, &pairs)?, report))
}

pub(crate) fn search_counts(
    system: &OptimalitySystem,
    n: usize,
    opts: &SearchOptions,
) -> (Vec<usize>, SearchReport) {
    let k = system.columns.len();
    let target = &system.y * n as f64;
    let gram = system.x.transpose() * &system.x;
    let relaxed = simplex_least_squares(&system.x, &gram, &target, n as f64, RELAX_ITERS);
    let start = largest_remainder(&relaxed, n);

    let runs: Vec<(f64, Vec<usize>, usize)> = (0..=opts.restarts)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(run as u64);
            let mut order: Vec<(usize, usize)> = (0..k)
                .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
                .collect();
            let mut current = start.clone();
            if run > 0 {
                order.shuffle(&mut rng);
                kick(&mut current, &mut rng, n.div_ceil(4));
            }
            let mut moves = local_search(system, &gram, &target, &mut current, &order, MAX_PASSES);
            let mut current_res = system.exact_residual(&current);
            let (mut best, mut best_res) = (current.clone(), current_res);
            for _ in 0..opts.iters {
                let mut trial = current.clone();
                let size = rng.random_range(1..=3);
                kick(&mut trial, &mut rng, size);
                let m = local_search(system, &gram, &target, &mut trial, &order, MAX_PASSES);
                let res = system.exact_residual(&trial);
                if res <= current_res {
                    moves += m + size;
                    current = trial;
                    current_res = res;
                    if res < best_res {
                        best = current.clone();
                        best_res = res;
                    }
                }
            }
            (best_res, best, moves)
        })
        .collect();

    let (best_idx, best) = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.0.total_cmp(&b.0).then(ia.cmp(ib)))
        .expect("at least one run");
    let report = SearchReport {
        residual: best.0,
        restarts_used: opts.restarts + 1,
        moves: best.2,
        seed: opts.seed,
    };
    log::debug!("search winner: run {best_idx}, residual {}", best.0);
    (best.1.clone(), report)
}

/// Random unit transfers.
fn kick(counts: &mut [usize], rng: &mut ChaCha8Rng, moves: usize) {
    let k = counts.len();
    if k < 2 {
        return;
    }
    for _ in 0..moves {
        let from = rng.random_range(0..k);
        if counts[from] == 0 {
            continue;
        }
        let to = rng.random_range(0..k);
        counts[from] -= 1;
        counts[to] += 1;
    }
}

/// First-improvement unit-transfer descent. Returns the number of moves.
fn local_search(
    system: &OptimalitySystem,
    gram: &DMatrix<f64>,
    target: &DVector<f64>,
    counts: &mut [usize],
    order: &[(usize, usize)],
    max_passes: usize,
) -> usize {
    let c = DVector::from_iterator(counts.len(), counts.iter().map(|&v| v as f64));
    let r = &system.x * c - target;
    let mut g = system.x.transpose() * &r;
    let mut norm2 = r.norm_squared();
    let mut moves = 0;
    for _ in 0..max_passes {
        let mut improved = false;
        for &(from, to) in order {
            if counts[from] == 0 {
                continue;
            }
            let delta = 2.0 * (g[to] - g[from]) + gram[(to, to)] + gram[(from, from)]
                - 2.0 * gram[(from, to)];
            if delta < -1e-12 * norm2.max(1.0) {
                counts[from] -= 1;
                counts[to] += 1;
                for i in 0..g.len() {
                    g[i] += gram[(i, to)] - gram[(i, from)];
                }
                norm2 += delta;
                moves += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    moves
}

/// Projected gradient for `min ||X w - y||^2` over `w >= 0`, `sum w = total`,
/// started at uniform weights.
fn simplex_least_squares(
    x: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    y: &DVector<f64>,
    total: f64,
    iters: usize,
) -> Vec<f64> {
    let k = x.ncols();
    let lipschitz = SymMatrix::symmetrize(gram.clone())
        .eigenvalues()
        .last()
        .copied()
        .unwrap_or(0.0);
    let mut w = DVector::from_element(k, total / k as f64);
    if lipschitz <= 0.0 {
        return w.as_slice().to_vec();
    }
    let xty = x.transpose() * y;
    let step = 1.0 / lipschitz;
    for _ in 0..iters {
        let grad = gram * &w - &xty;
        let next = project_simplex(&(&w - grad * step), total);
        let change = (&next - &w).amax();
        w = next;
        if change <= 1e-12 * total {
            break;
        }
    }
    w.as_slice().to_vec()
}

fn project_simplex(v: &DVector<f64>, total: f64) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let candidate = (cum - total) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

fn largest_remainder(w: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = w.iter().map(|v| v.max(0.0).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rem: Vec<(usize, f64)> = w
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v - v.floor()))
        .collect();
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if assigned <= n {
        for &(i, _) in rem.iter().cycle().take(n - assigned) {
            counts[i] += 1;
        }
    } else {
        let mut excess = assigned - n;
        for &(i, _) in rem.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

/// Block weights solving `sum w_b q_b'(x*) = 0`, `sum w_b = 1`, `w >= 0`,
/// closest to uniform; mass is spread evenly within each block.
pub fn symmetric_solve(
    cert: &OptimalityCertificate,
    mech: &DropoutMechanism,
    blocks: &[SymmetricBlock],
) -> Result<ApproximateDesign> {
    check_certificate(cert, mech)?;
    if blocks.is_empty() {
        return Err(Error::invalid("no symmetric blocks given"));
    }
    for b in blocks {
        if !cert.contains(b.representative()) {
            return Err(Error::invalid(format!(
                "block of {} lies outside the support",
                b.representative()
            )));
        }
    }
    let slopes: Vec<f64> = blocks
        .iter()
        .map(|b| q_coeffs_unchecked(b.representative(), mech).derivative(cert.x_star))
        .collect();
    let scale = slopes.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(1.0);
    let slopes: Vec<f64> = slopes
        .iter()
        .map(|&v| if v.abs() <= tol { 0.0 } else { v })
        .collect();
    if slopes.iter().all(|&v| v > 0.0) || slopes.iter().all(|&v| v < 0.0) {
        return Err(Error::Infeasible(
            "every chosen block has a derivative of the same strict sign".into(),
        ));
    }
    let w = balance_weights(&slopes);
    let mut weights = BTreeMap::new();
    for (b, wb) in blocks.iter().zip(w) {
        let members = b.members();
        let each = wb / members.len() as f64;
        for s in members {
            *weights.entry(s).or_insert(0.0) += each;
        }
    }
    ApproximateDesign::new(cert.t, weights)
}

/// Nonnegative weights with `sum w = 1`, `sum w q = 0`, nearest to uniform.
fn balance_weights(q: &[f64]) -> Vec<f64> {
    let k = q.len();
    let mut free: Vec<bool> = vec![true; k];
    loop {
        let idx: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        let m = idx.len() as f64;
        let u = 1.0 / m;
        let (s1, sq, sqq) = idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| {
            (a + 1.0, b + q[i], c + q[i] * q[i])
        });
        // Project uniform onto {1'w = 1, q'w = 0}: w = u - lam1 - lam2 q.
        let det = s1 * sqq - sq * sq;
        let mut w = vec![0.0; k];
        if det.abs() <= 1e-14 * s1 * sqq.max(1e-300) {
            for &i in &idx {
                w[i] = u;
            }
        } else {
            let r1 = 0.0;
            let r2 = u * sq;
            let lam1 = (sqq * r1 - sq * r2) / det;
            let lam2 = (s1 * r2 - sq * r1) / det;
            for &i in &idx {
                w[i] = u - lam1 - lam2 * q[i];
            }
        }
        let negative: Vec<usize> = idx.iter().copied().filter(|&i| w[i] < 0.0).collect();
        if negative.is_empty() {
            for v in w.iter_mut() {
                *v = v.max(0.0);
            }
            return w;
        }
        for i in negative {
            free[i] = false;
        }
    }
}
