//! Expected criterion values under random dropout, the surrogate value and
//! the efficiency bounds derived from them.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::ExactDesign;
use crate::dropout::DropoutMechanism;
use crate::error::{Error, Result};
use crate::information::{surrogate_info, Criterion, RealizedInfoEngine};
use crate::qsolver::{solve_minimax, OptimalityCertificate};
use crate::search::{exact_search, SearchOptions};

/// Default cap on grouped realization cells for exact evaluation.
pub const DEFAULT_EXACT_BUDGET: u128 = 1 << 20;

const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub method: Method,
    pub reps: usize,
    pub seed: u64,
    pub exact_budget: u128,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            method: Method::Exact,
            reps: 100_000,
            seed: 0,
            exact_budget: DEFAULT_EXACT_BUDGET,
        }
    }
}

/// Mean, standard error and variance of a criterion over dropout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phi0 {
    pub phi0: f64,
    pub stderr: f64,
    /// Variance of the criterion over dropout realizations.
    pub v_phi: f64,
}

impl Phi0 {
    /// Standard deviation, `sqrt(v_phi)`.
    pub fn sd(&self) -> f64 {
        self.v_phi.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub criterion: Criterion,
    pub phi0: f64,
    pub phi0_stderr: f64,
    pub v_phi: f64,
    pub sd_phi: f64,
    pub phi1: f64,
    pub gap: f64,
    pub e1_tilde: f64,
    pub ell: f64,
    pub method: Method,
    pub replications: u128,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyBounds {
    pub e1_tilde: f64,
    pub gap: f64,
    pub ell: f64,
}

fn check_dims(design: &ExactDesign, mech: &DropoutMechanism) -> Result<()> {
    if design.periods() != mech.periods() || design.subjects() != mech.subjects() {
        return Err(Error::invalid(format!(
            "design is {} periods x {} subjects but the mechanism has p={}, n={}",
            design.periods(),
            design.subjects(),
            mech.periods(),
            mech.subjects()
        )));
    }
    Ok(())
}

/// Weighted sums of the four criteria and their squares.
#[derive(Clone, Copy, Default)]
struct Moments {
    weight: f64,
    sum: [f64; 4],
    sum_sq: [f64; 4],
}

impl Moments {
    fn add(&mut self, w: f64, values: &[f64; 4]) {
        self.weight += w;
        for (i, v) in values.iter().enumerate() {
            self.sum[i] += w * v;
            self.sum_sq[i] += w * v * v;
        }
    }

    fn merge(mut self, other: &Moments) -> Moments {
        self.weight += other.weight;
        for i in 0..4 {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self
    }
}

/// One dropout pattern of a group of identical subjects: how many stay for
/// each supported length, and its multinomial probability.
struct Composition {
    gram: DMatrix<f64>,
    weight: f64,
}

fn compositions(size: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c);
            rec(left - c, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(size, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i + 1) as u128
    })
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Number of grouped cells exact evaluation would visit.
pub fn exact_cell_count(design: &ExactDesign, mech: &DropoutMechanism) -> u128 {
    let parts = mech.support().len();
    let engine_sizes = design.counts().into_values();
    engine_sizes.fold(1u128, |acc, s| {
        acc.saturating_mul(binomial(s + parts - 1, parts - 1))
    })
}

fn exact_moments(
    engine: &RealizedInfoEngine,
    mech: &DropoutMechanism,
    budget: u128,
) -> Result<(Moments, u128)> {
    let support = mech.support();
    let probs = mech.probabilities();
    let parts = support.len();
    let sizes = engine.group_sizes();
    let needed = sizes.iter().fold(1u128, |acc, &s| {
        acc.saturating_mul(binomial(s + parts - 1, parts - 1))
    });
    if needed > budget {
        return Err(Error::Budget {
            what: "exact dropout enumeration",
            needed,
            budget,
            hint: "use Monte Carlo instead",
        });
    }
    let dim = engine.gram_dim();
    let groups: Vec<Vec<Composition>> = sizes
        .iter()
        .enumerate()
        .map(|(g, &size)| {
            compositions(size, parts)
                .into_iter()
                .map(|comp| {
                    let mut gram = DMatrix::zeros(dim, dim);
                    let mut ln_w = ln_factorial(size);
                    for (&c, &k) in comp.iter().zip(&support) {
                        if c > 0 {
                            gram += engine.gram(g, k) * c as f64;
                            ln_w += c as f64 * probs[k - 1].ln() - ln_factorial(c);
                        }
                    }
                    Composition {
                        gram,
                        weight: ln_w.exp(),
                    }
                })
                .collect()
        })
        .collect();

    let n = engine.subjects();
    let total = needed as usize;
    let chunks: Vec<Moments> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut m = Moments::default();
            let mut gram = DMatrix::zeros(dim, dim);
            for cell in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                gram.fill(0.0);
                let mut w = 1.0;
                let mut rest = cell;
                for comps in &groups {
                    let c = &comps[rest % comps.len()];
                    rest /= comps.len();
                    gram += &c.gram;
                    w *= c.weight;
                }
                if w > 0.0 {
                    m.add(w, &engine.info_from_gram(&gram).criteria(n));
                }
            }
            m
        })
        .collect();
    let moments = chunks
        .iter()
        .fold(Moments::default(), |acc, m| acc.merge(m));
    Ok((moments, needed))
}

/// Stay lengths for replicate `rep`: stream `rep` of a generator seeded by
/// `seed`, one uniform draw per subject.
pub fn draw_stays(mech: &DropoutMechanism, n: usize, seed: u64, rep: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let cum: Vec<f64> = mech
        .probabilities()
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect();
    let last = mech.support().last().copied().unwrap_or(mech.periods());
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
            cum.iter()
                .position(|&c| u < c)
                .map(|k| k + 1)
                .unwrap_or(last)
        })
        .collect()
}

fn mc_values(
    engine: &RealizedInfoEngine,
    mech: &DropoutMechanism,
    reps: usize,
    seed: u64,
) -> Vec<[f64; 4]> {
    let n = engine.subjects();
    (0..reps.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|chunk| {
            (chunk * CHUNK..((chunk + 1) * CHUNK).min(reps)).map(move |rep| {
                let l = draw_stays(mech, n, seed, rep as u64);
                engine.info(&l).criteria(n)
            })
        })
        .collect()
}

/// `phi0` for all four criteria in one pass (shared realizations), indexed
/// as [`Criterion::ALL`]. Also returns the number of cells or replicates.
pub fn evaluate_phi0_all(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    opts: &EvalOptions,
) -> Result<([Phi0; 4], u128)> {
    check_dims(design, mech)?;
    let engine = RealizedInfoEngine::new(design);
    match opts.method {
        Method::Exact => {
            let (m, cells) = exact_moments(&engine, mech, opts.exact_budget)?;
            let out = std::array::from_fn(|i| {
                let mean = m.sum[i] / m.weight;
                let var = (m.sum_sq[i] / m.weight - mean * mean).max(0.0);
                Phi0 {
                    phi0: mean,
                    stderr: 0.0,
                    v_phi: var,
                }
            });
            Ok((out, cells))
        }
        Method::MonteCarlo => {
            if opts.reps < 2 {
                return Err(Error::invalid("Monte Carlo needs at least 2 replicates"));
            }
            let values = mc_values(&engine, mech, opts.reps, opts.seed);
            let r = opts.reps as f64;
            let out = std::array::from_fn(|i| {
                let mean = values.iter().map(|v| v[i]).sum::<f64>() / r;
                let var = values.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (r - 1.0);
                Phi0 {
                    phi0: mean,
                    stderr: (var / r).sqrt(),
                    v_phi: var,
                }
            });
            Ok((out, opts.reps as u128))
        }
    }
}

pub fn evaluate_phi0(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    criterion: Criterion,
    opts: &EvalOptions,
) -> Result<Phi0> {
    Ok(evaluate_phi0_all(design, mech, opts)?.0[criterion.index()])
}

/// Criterion value of the surrogate information matrix.
pub fn evaluate_phi1(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    criterion: Criterion,
) -> Result<f64> {
    Ok(surrogate_info(design, mech)?.criterion(criterion, design.subjects()))
}

fn bounds(phi0: f64, phi1: f64, cert: &OptimalityCertificate) -> EfficiencyBounds {
    let e1_tilde = phi1 / cert.optimal_value();
    let gap = phi0 / phi1;
    EfficiencyBounds {
        e1_tilde,
        gap,
        ell: e1_tilde * gap,
    }
}

fn check_cert(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    cert: &OptimalityCertificate,
) -> Result<()> {
    if cert.t != design.treatments()
        || cert.mechanism.p != mech.periods()
        || cert.mechanism.a != mech.probabilities()
    {
        return Err(Error::invalid(
            "certificate does not match the design and mechanism",
        ));
    }
    Ok(())
}

pub fn efficiency_bounds(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    criterion: Criterion,
    cert: &OptimalityCertificate,
    opts: &EvalOptions,
) -> Result<EfficiencyBounds> {
    check_cert(design, mech, cert)?;
    let phi0 = evaluate_phi0(design, mech, criterion, opts)?.phi0;
    Ok(bounds(phi0, evaluate_phi1(design, mech, criterion)?, cert))
}

/// Full reports for the requested criteria, sharing one set of realizations.
pub fn evaluate(
    design: &ExactDesign,
    mech: &DropoutMechanism,
    criteria: &[Criterion],
    cert: &OptimalityCertificate,
    opts: &EvalOptions,
) -> Result<Vec<EvaluationReport>> {
    check_cert(design, mech, cert)?;
    let (phi0, replications) = evaluate_phi0_all(design, mech, opts)?;
    let surrogate = surrogate_info(design, mech)?;
    Ok(criteria
        .iter()
        .map(|&c| {
            let p0 = phi0[c.index()];
            let phi1 = surrogate.criterion(c, design.subjects());
            let b = bounds(p0.phi0, phi1, cert);
            EvaluationReport {
                criterion: c,
                phi0: p0.phi0,
                phi0_stderr: p0.stderr,
                v_phi: p0.v_phi,
                sd_phi: p0.sd(),
                phi1,
                gap: b.gap,
                e1_tilde: b.e1_tilde,
                ell: b.ell,
                method: opts.method,
                replications,
                seed: opts.seed,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub criterion: Criterion,
    pub phi0: f64,
    pub phi0_baseline: f64,
    pub v_phi: f64,
    pub v_phi_baseline: f64,
    /// `None` when the baseline value is zero.
    pub phi0_ratio: Option<f64>,
    pub v_ratio: Option<f64>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        None
    } else {
        Some(a / b)
    }
}

/// `phi0(d)/phi0(d')` and `V(d)/V(d')`. The mechanism is rescaled to each
/// design's subject count; with equal counts both designs see the same
/// dropout draws.
pub fn compare(
    d: &ExactDesign,
    baseline: &ExactDesign,
    mech: &DropoutMechanism,
    criteria: &[Criterion],
    opts: &EvalOptions,
) -> Result<Vec<Comparison>> {
    if d.periods() != baseline.periods() || d.treatments() != baseline.treatments() {
        return Err(Error::invalid("designs to compare must share p and t"));
    }
    let (a, _) = evaluate_phi0_all(d, &mech.with_subjects(d.subjects())?, opts)?;
    let (b, _) = evaluate_phi0_all(baseline, &mech.with_subjects(baseline.subjects())?, opts)?;
    Ok(criteria
        .iter()
        .map(|&c| {
            let (x, y) = (a[c.index()], b[c.index()]);
            Comparison {
                criterion: c,
                phi0: x.phi0,
                phi0_baseline: y.phi0,
                v_phi: x.v_phi,
                v_phi_baseline: y.v_phi,
                phi0_ratio: ratio(x.phi0, y.phi0),
                v_ratio: ratio(x.v_phi, y.v_phi),
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub enum DesignSource {
    Fixed(ExactDesign),
    /// Re-run the exact search at each grid point for `n` subjects.
    Search {
        t: usize,
        n: usize,
        opts: SearchOptions,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub criterion: Criterion,
    pub phi0: f64,
    pub stderr: f64,
    pub v_phi: f64,
    pub phi1: f64,
    pub gap: f64,
    pub e1_tilde: f64,
    pub ell: f64,
}

/// Evaluates along `a = (0, ..., 0, theta, 1 - theta)` with `p` periods.
pub fn sweep_theta(
    source: &DesignSource,
    p: usize,
    criteria: &[Criterion],
    grid: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<SweepRow>> {
    if p < 2 {
        return Err(Error::invalid("sweep needs p >= 2"));
    }
    if let Some(bad) = grid.iter().find(|&&th| !(th > 0.0 && th < 1.0)) {
        return Err(Error::invalid(format!("grid value {bad} outside (0, 1)")));
    }
    let (t, n) = match source {
        DesignSource::Fixed(d) => (d.treatments(), d.subjects()),
        DesignSource::Search { t, n, .. } => (*t, *n),
    };
    let mut rows = Vec::with_capacity(grid.len() * criteria.len());
    for &theta in grid {
        let mut a = vec![0.0; p];
        a[p - 2] = theta;
        a[p - 1] = 1.0 - theta;
        let mech = DropoutMechanism::new(p, n, a)?;
        let cert = solve_minimax(&mech, t)?;
        let design = match source {
            DesignSource::Fixed(d) => d.clone(),
            DesignSource::Search { n, opts, .. } => exact_search(*n, &cert, &mech, opts)?.0,
        };
        for r in evaluate(&design, &mech, criteria, &cert, opts)? {
            rows.push(SweepRow {
                theta,
                criterion: r.criterion,
                phi0: r.phi0,
                stderr: r.phi0_stderr,
                v_phi: r.v_phi,
                phi1: r.phi1,
                gap: r.gap,
                e1_tilde: r.e1_tilde,
                ell: r.ell,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "theta,criterion,phi0,stderr,v_phi,phi1,gap,e1_tilde,ell";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.theta, r.criterion, r.phi0, r.stderr, r.v_phi, r.phi1, r.gap, r.e1_tilde, r.ell
        );
    }
    out
}

/// Parses `start:stop:step` (inclusive of `stop` up to rounding) or a
/// comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("bad number {s:?} in grid")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(Error::invalid(format!("bad grid range {text:?}")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        [_] => text.split(',').map(parse).collect(),
        _ => Err(Error::invalid(format!(
            "bad grid {text:?}; use start:stop:step or a list"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;
    use crate::information::realized_info;

    #[test]
    fn composition_enumeration() {
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(3, 3).len(), 10);
        assert_eq!(binomial(17, 2), 136);
    }

    #[test]
    fn grouped_cells_for_d2() {
        let f = fixture("d2").unwrap();
        assert_eq!(exact_cell_count(&f.design, &f.mechanism), 36864);
    }

    #[test]
    fn point_mass_has_no_variance_and_unit_gap() {
        let f = fixture("d2").unwrap();
        let mech = DropoutMechanism::point_mass(4, 16, 3).unwrap();
        let cert = solve_minimax(&mech, 4).unwrap();
        let reports = evaluate(
            &f.design,
            &mech,
            &Criterion::ALL,
            &cert,
            &EvalOptions::default(),
        )
        .unwrap();
        let direct = realized_info(&f.design, &[3; 16]).unwrap();
        for r in reports {
            assert_eq!(r.v_phi, 0.0);
            assert!((r.phi0 - direct.criterion(r.criterion, 16)).abs() < 1e-12);
            assert!((r.gap - 1.0).abs() < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn exact_and_mc_agree_on_small_design() {
        let d = crate::io::design_from_json(
            r#"{"p":3,"t":3,"n":6,"sequences":["123","231","312","132","213","321"]}"#,
        )
        .unwrap();
        let mech = DropoutMechanism::new(3, 6, vec![0.0, 0.4, 0.6]).unwrap();
        let exact = evaluate_phi0(&d, &mech, Criterion::T, &EvalOptions::default()).unwrap();
        let mc_opts = EvalOptions {
            method: Method::MonteCarlo,
            reps: 20_000,
            seed: 3,
            ..Default::default()
        };
        let mc = evaluate_phi0(&d, &mech, Criterion::T, &mc_opts).unwrap();
        assert!(
            (exact.phi0 - mc.phi0).abs() < 4.0 * mc.stderr,
            "{exact:?} {mc:?}"
        );
        assert!((exact.v_phi - mc.v_phi).abs() < 0.1 * exact.v_phi);
        let again = evaluate_phi0(&d, &mech, Criterion::T, &mc_opts).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn budget_is_enforced() {
        let f = fixture("d8").unwrap();
        let err = evaluate_phi0(
            &f.design,
            &f.mechanism,
            Criterion::T,
            &EvalOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }

    #[test]
    fn stays_follow_the_mechanism() {
        let mech = DropoutMechanism::new(4, 16, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let mut threes = 0;
        for rep in 0..200 {
            let l = draw_stays(&mech, 16, 11, rep);
            assert!(l.iter().all(|&v| v == 3 || v == 4));
            threes += l.iter().filter(|&&v| v == 3).count();
        }
        let frac = threes as f64 / 3200.0;
        assert!((frac - 0.5).abs() < 0.05);
        assert_eq!(draw_stays(&mech, 16, 11, 5), draw_stays(&mech, 16, 11, 5));
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.05:0.95:0.05").unwrap();
        assert_eq!(g.len(), 19);
        assert!((g[18] - 0.95).abs() < 1e-12);
        assert_eq!(parse_grid("0.2,0.5").unwrap(), vec![0.2, 0.5]);
        assert!(parse_grid("0.5:0.1:0.1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn compare_with_itself() {
        let f = fixture("d9").unwrap();
        let c = compare(
            &f.design,
            &f.design,
            &f.mechanism,
            &[Criterion::T],
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(c[0].phi0_ratio, Some(1.0));
        assert_eq!(c[0].v_ratio, Some(1.0));
        assert_eq!(ratio(1.0, 0.0), None);
    }
}
