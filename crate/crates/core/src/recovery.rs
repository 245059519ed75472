//! Sparse recovery from two masked sets of partial observations.
//!
//! A code `z` is observed through a dictionary as `x = M z + ξ`. Each mask of
//! a pair selects rows of `M` (coordinates of `x`); the two selections are
//! stacked into `y = A z + η` and `z` is recovered by basis-pursuit
//! denoising, with orthogonal matching pursuit as an independent oracle.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{sample_pair, MaskConfig, MaskedPair, PairKind};
use crate::seed::{self, stream};
use crate::stats;

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryInstance {
    /// `d × n`, unit-norm columns.
    pub dictionary: DMatrix<f64>,
    pub z: DVector<f64>,
    pub sigma: f64,
    pub noise: DVector<f64>,
    pub x: DVector<f64>,
}

impl RecoveryInstance {
    pub fn d(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn n(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn sparsity(&self) -> usize {
        self.z.iter().filter(|v| **v != 0.0).count()
    }

    /// Builds an instance around an explicit dictionary and code.
    pub fn with_dictionary(dictionary: DMatrix<f64>, z: DVector<f64>, noise: DVector<f64>, sigma: f64) -> Result<Self> {
        if z.len() != dictionary.ncols() || noise.len() != dictionary.nrows() {
            return Err(Error::ShapeMismatch {
                op: "recovery_instance",
                left: vec![dictionary.nrows(), dictionary.ncols()],
                right: vec![noise.len(), z.len()],
            });
        }
        let x = &dictionary * &z + &noise;
        Ok(Self {
            dictionary,
            z,
            sigma,
            noise,
            x,
        })
    }
}

pub fn gen_instance(d: usize, n: usize, k: usize, sigma: f64, seed: u64) -> Result<RecoveryInstance> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("gen_instance", "d and n must be positive"));
    }
    if k > n {
        return Err(Error::invalid("gen_instance", format!("sparsity {k} exceeds n = {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("gen_instance", format!("sigma {sigma} must be non-negative")));
    }
    let mut rng = seed::rng(seed::derive(seed, stream::DICTIONARY, 0));
    let mut m = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in m.column_iter_mut() {
        let norm = col.norm();
        col /= norm;
    }

    let mut rng = seed::rng(seed::derive(seed, stream::SAMPLE, 0));
    let mut z = DVector::zeros(n);
    for i in rand::seq::index::sample(&mut rng, n, k).iter() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        z[i] = sign * (1.0 + rng.random::<f64>());
    }

    let mut rng = seed::rng(seed::derive(seed, stream::NOISE, 0));
    let noise = DVector::from_fn(d, |_, _| {
        if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    RecoveryInstance::with_dictionary(m, z, noise, sigma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSystem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub eta: DVector<f64>,
    pub kind: PairKind,
    /// Row of the dictionary behind each row of `a`, first block then second.
    pub rows: Vec<usize>,
    /// Size of the first block.
    pub split: usize,
    /// Code the system was generated from, used to report errors.
    pub truth: DVector<f64>,
}

pub fn build_measurement(instance: &RecoveryInstance, pair: &MaskedPair) -> Result<MeasurementSystem> {
    let d = instance.d();
    for mask in pair.masks() {
        if mask.patch() != 1 || mask.len() != d {
            return Err(Error::invalid(
                "build_measurement",
                format!("masks must be coordinate masks over {d} entries, got {:?} b={}", mask.dims(), mask.patch()),
            ));
        }
    }
    let selections: Vec<Vec<usize>> = pair
        .masks()
        .iter()
        .map(|m| m.bits().iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect())
        .collect();
    if selections.iter().any(Vec::is_empty) {
        return Err(Error::invalid("build_measurement", "a mask selects no rows"));
    }
    let rows: Vec<usize> = selections.concat();
    let a = instance.dictionary.select_rows(rows.iter());
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| instance.x[i]));
    let eta = DVector::from_iterator(rows.len(), rows.iter().map(|&i| instance.noise[i]));
    Ok(MeasurementSystem {
        a,
        y,
        eta,
        kind: pair.kind(),
        split: selections[0].len(),
        rows,
        truth: instance.z.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub estimate: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub error: f64,
    pub converged: bool,
}

impl RecoveryResult {
    fn new(system: &MeasurementSystem, estimate: DVector<f64>, iterations: usize, converged: bool) -> Self {
        Self {
            residual_norm: (&system.y - &system.a * &estimate).norm(),
            error: (&estimate - &system.truth).norm(),
            estimate,
            iterations,
            converged,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpdnOptions {
    /// Proximal iterations per penalty weight.
    pub max_iters: usize,
    /// Relative change between iterates below which a solve has converged.
    pub tol: f64,
    pub max_bisections: usize,
    /// Constraint radii below `eps_floor · ‖y‖` are raised to it; the
    /// penalized form cannot reach a zero residual.
    pub eps_floor: f64,
}

impl Default for BpdnOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-10,
            max_bisections: 40,
            eps_floor: 1e-8,
        }
    }
}

struct Lasso<'a> {
    a: &'a DMatrix<f64>,
    at: DMatrix<f64>,
    y: &'a DVector<f64>,
    step: f64,
}

struct LassoSolution {
    x: DVector<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
    /// Objective after each accepted iterate.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

fn soft_threshold(v: &mut DVector<f64>, t: f64) {
    v.iter_mut().for_each(|x| *x = x.signum() * (x.abs() - t).max(0.0));
}

impl<'a> Lasso<'a> {
    fn new(a: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        let top = a.singular_values().max();
        Self {
            a,
            at: a.transpose(),
            y,
            step: if top > 0.0 { 1.0 / (top * top) } else { 1.0 },
        }
    }

    fn objective(&self, ax: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
        0.5 * (ax - self.y).norm_squared() + lambda * x.lp_norm(1)
    }

    fn prox_step(&self, from: &DVector<f64>, a_from: &DVector<f64>, lambda: f64) -> (DVector<f64>, DVector<f64>) {
        let grad = &self.at * (a_from - self.y);
        let mut next = from - grad * self.step;
        soft_threshold(&mut next, self.step * lambda);
        let a_next = self.a * &next;
        (next, a_next)
    }

    /// Accelerated proximal gradient with a function-value restart: a step
    /// that would raise the objective is replaced by a plain proximal step
    /// from the current iterate, so accepted objectives never increase.
    fn solve(&self, lambda: f64, x0: DVector<f64>, opts: &BpdnOptions) -> LassoSolution {
        let mut x = x0;
        let mut ax = self.a * &x;
        let mut f = self.objective(&ax, &x, lambda);
        let (mut z, mut az) = (x.clone(), ax.clone());
        let mut t = 1.0f64;
        let mut converged = false;
        let mut it = 0;
        let mut trace = vec![f];
        while it < opts.max_iters {
            it += 1;
            let (mut next, mut a_next) = self.prox_step(&z, &az, lambda);
            let mut f_next = self.objective(&a_next, &next, lambda);
            if f_next > f {
                (next, a_next) = self.prox_step(&x, &ax, lambda);
                f_next = self.objective(&a_next, &next, lambda);
                t = 1.0;
            }
            let change = (&next - &x).norm();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            z = &next + (&next - &x) * beta;
            az = &a_next + (&a_next - &ax) * beta;
            t = t_next;
            x = next;
            ax = a_next;
            f = f_next;
            trace.push(f);
            if change <= opts.tol * x.norm().max(1.0) {
                converged = true;
                break;
            }
        }
        LassoSolution {
            residual: (&ax - self.y).norm(),
            x,
            iterations: it,
            converged,
            trace,
        }
    }
}

/// `min ‖u‖₁ s.t. ‖y − A u‖₂ ≤ ε`, through its penalized form.
///
/// The penalty weight starts at `‖Aᵀy‖∞` (where the minimizer is 0) and is
/// reduced tenfold with warm starts until the constraint holds, then bisected
/// in log space until the residual is within 1% of ε. The result is the
/// last feasible iterate; `converged` requires both the inner solves and the
/// constraint search to have finished.
pub fn bpdn_solve(system: &MeasurementSystem, eps: f64, opts: &BpdnOptions) -> Result<RecoveryResult> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("bpdn_solve", format!("epsilon {eps} must be non-negative")));
    }
    let n = system.a.ncols();
    let y_norm = system.y.norm();
    let eps = eps.max(opts.eps_floor * y_norm);
    if y_norm <= eps {
        return Ok(RecoveryResult::new(system, DVector::zeros(n), 0, true));
    }
    let lasso = Lasso::new(&system.a, &system.y);
    let lambda_max = (&lasso.at * &system.y).amax();
    if lambda_max == 0.0 {
        return Ok(RecoveryResult::new(system, DVector::zeros(n), 0, false));
    }
    let (lo_target, hi_target) = (0.99 * eps, 1.01 * eps);
    let mut iterations = 0;
    let mut inner_ok = true;

    // Descend to a feasible penalty weight.
    let mut hi = lambda_max;
    let mut lo = lambda_max;
    let mut warm = DVector::zeros(n);
    let mut feasible = None;
    for _ in 0..16 {
        lo /= 10.0;
        let s = lasso.solve(lo, warm.clone(), opts);
        iterations += s.iterations;
        inner_ok &= s.converged;
        warm = s.x.clone();
        if s.residual <= hi_target {
            feasible = Some(s);
            break;
        }
        hi = lo;
    }
    let Some(mut best) = feasible else {
        return Ok(RecoveryResult::new(system, warm, iterations, false));
    };

    let mut found = best.residual >= lo_target;
    let mut bisections = 0;
    while !found && bisections < opts.max_bisections {
        bisections += 1;
        let mid = (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp();
        let s = lasso.solve(mid, best.x.clone(), opts);
        iterations += s.iterations;
        inner_ok &= s.converged;
        if s.residual > hi_target {
            hi = mid;
        } else {
            lo = mid;
            found = s.residual >= lo_target;
            best = s;
        }
    }
    let converged = inner_ok && found && best.converged;
    Ok(RecoveryResult::new(system, best.x, iterations, converged))
}

/// Orthogonal matching pursuit with a least-squares refit each round.
/// Atoms are scored by correlation with the residual, normalized by the
/// column norm of `A`.
pub fn omp_solve(system: &MeasurementSystem, k: usize) -> Result<RecoveryResult> {
    let a = &system.a;
    let n = a.ncols();
    if k > n {
        return Err(Error::invalid("omp_solve", format!("sparsity {k} exceeds n = {n}")));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual = system.y.clone();
    let mut coef = DVector::zeros(0);
    for _ in 0..k {
        let corr = a.tr_mul(&residual);
        let pick = (0..n)
            .filter(|j| norms[*j] > 0.0 && !support.contains(j))
            .max_by(|&i, &j| (corr[i].abs() / norms[i]).total_cmp(&(corr[j].abs() / norms[j])));
        let Some(pick) = pick else { break };
        support.push(pick);
        let sub = a.select_columns(support.iter());
        let qr = sub.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * diag_max.max(f64::MIN_POSITIVE)) {
            let mut s = support.clone();
            s.sort_unstable();
            return Err(Error::RankDeficient(s));
        }
        let qty = qr.q().tr_mul(&system.y);
        coef = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::RankDeficient(support.clone()))?;
        residual = &system.y - &sub * &coef;
    }
    let mut estimate = DVector::zeros(n);
    for (c, &j) in coef.iter().zip(&support) {
        estimate[j] = *c;
    }
    Ok(RecoveryResult::new(system, estimate, support.len(), true))
}

/// `σ_max / σ_min` of `A` restricted to random column subsets of size `s`.
pub fn restricted_condition_numbers(a: &DMatrix<f64>, s: usize, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if s == 0 || s > a.ncols() {
        return Err(Error::invalid("restricted_condition", format!("support size {s} out of range")));
    }
    let mut rng = seed::rng(seed);
    Ok((0..samples)
        .map(|_| {
            let cols = rand::seq::index::sample(&mut rng, a.ncols(), s).into_vec();
            let sv = a.select_columns(cols.iter()).singular_values();
            let lo = sv.min();
            if lo > 0.0 {
                sv.max() / lo
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// `σ √(k log(n/δ) / d)`, the recovery rate without its constant.
pub fn theory_rate(sigma: f64, k: usize, n: usize, d: usize, delta: f64) -> f64 {
    sigma * (k as f64 * (n as f64 / delta).ln() / d as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub d: usize,
    pub n: usize,
    pub sigmas: Vec<f64>,
    pub ks: Vec<usize>,
    pub trials: usize,
    /// ε = multiplier · ‖η‖₂.
    pub eps_multiplier: f64,
    pub delta: f64,
    pub solver: BpdnOptions,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            d: 128,
            n: 256,
            sigmas: vec![0.01, 0.02, 0.05, 0.1],
            ks: vec![3, 5, 8],
            trials: 200,
            eps_multiplier: 1.0,
            delta: 0.05,
            solver: BpdnOptions::default(),
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.ks.is_empty() || self.trials == 0 {
            return Err(Error::invalid("sweep", "grid must be non-empty"));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("sweep", "sigma values must be non-negative"));
        }
        if self.ks.iter().any(|&k| k > self.n) {
            return Err(Error::invalid("sweep", "sparsity exceeds n"));
        }
        if !(self.eps_multiplier >= 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("sweep", "bad epsilon multiplier or delta"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub kind: String,
    pub trial: usize,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub theory_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub k: usize,
    pub sigma: f64,
    pub kind: String,
    pub median: f64,
    pub iqr: f64,
    pub theory_rate: f64,
    pub non_converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<TrialRow>,
    pub cells: Vec<CellSummary>,
    /// Cells where the complementary median is at most the random median.
    pub complementary_wins: usize,
    pub cell_count: usize,
    pub seed: u64,
}

const SWEEP_KINDS: [PairKind; 2] = [PairKind::Complementary, PairKind::Random];

/// Both mask kinds are applied to the same instance in each trial.
pub fn sweep_compare(grid: &SweepGrid, seed: u64) -> Result<SweepReport> {
    grid.validate()?;
    let masks = MaskConfig::coordinates(&[grid.d])?;
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut wins = 0;
    let mut cell_index = 0u64;
    for &k in &grid.ks {
        for &sigma in &grid.sigmas {
            let cell_seed = seed::derive(seed, stream::TRIAL, cell_index);
            cell_index += 1;
            let rate = theory_rate(sigma, k, grid.n, grid.d, grid.delta);
            let mut errors = vec![Vec::with_capacity(grid.trials); SWEEP_KINDS.len()];
            let mut failures = [0usize; 2];
            for t in 0..grid.trials {
                let trial_seed = seed::derive(cell_seed, stream::SAMPLE, t as u64);
                let inst = gen_instance(grid.d, grid.n, k, sigma, trial_seed)?;
                for (slot, &kind) in SWEEP_KINDS.iter().enumerate() {
                    let pair = sample_pair(&masks, kind, seed::derive(trial_seed, stream::MASK_A, 0))?;
                    let sys = build_measurement(&inst, &pair)?;
                    let res = bpdn_solve(&sys, grid.eps_multiplier * sys.eta.norm(), &grid.solver)?;
                    failures[slot] += !res.converged as usize;
                    errors[slot].push(res.error);
                    rows.push(TrialRow {
                        d: grid.d,
                        n: grid.n,
                        k,
                        sigma,
                        kind: kind.label(),
                        trial: t,
                        error: res.error,
                        iterations: res.iterations,
                        converged: res.converged,
                        theory_rate: rate,
                    });
                }
            }
            let medians: Vec<f64> = errors.iter().map(|e| stats::median(e)).collect();
            wins += (medians[0] <= medians[1]) as usize;
            for (slot, kind) in SWEEP_KINDS.iter().enumerate() {
                cells.push(CellSummary {
                    k,
                    sigma,
                    kind: kind.label(),
                    median: medians[slot],
                    iqr: stats::iqr(&errors[slot]),
                    theory_rate: rate,
                    non_converged: failures[slot],
                });
            }
        }
    }
    Ok(SweepReport {
        rows,
        cells,
        complementary_wins: wins,
        cell_count: grid.ks.len() * grid.sigmas.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coord_pair(d: usize, kind: PairKind, seed: u64) -> MaskedPair {
        sample_pair(&MaskConfig::coordinates(&[d]).unwrap(), kind, seed).unwrap()
    }

    #[test]
    fn instance_construction() {
        let inst = gen_instance(32, 48, 4, 0.0, 1).unwrap();
        assert_eq!(inst.x, &inst.dictionary * &inst.z);
        assert_eq!(inst.sparsity(), 4);
        for c in inst.dictionary.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        let empty = gen_instance(16, 16, 0, 0.3, 2).unwrap();
        assert_eq!(empty.x, empty.noise);
        assert!(empty.z.iter().all(|v| *v == 0.0));
        assert!(gen_instance(8, 8, 9, 0.0, 0).is_err());
    }

    #[test]
    fn complementary_rows_partition_dictionary() {
        let inst = gen_instance(64, 80, 3, 0.1, 3).unwrap();
        let sys = build_measurement(&inst, &coord_pair(64, PairKind::Complementary, 4)).unwrap();
        let mut rows = sys.rows.clone();
        rows.sort_unstable();
        assert_eq!(rows, (0..64).collect::<Vec<_>>());
        assert!(((&sys.y - &sys.a * &sys.truth).norm() - sys.eta.norm()).abs() < 1e-9);
    }

    #[test]
    fn identity_dictionary_recovers_exactly() {
        let d = 64;
        let mut z = DVector::zeros(d);
        z[3] = 1.5;
        z[17] = -1.2;
        z[40] = 2.0;
        let inst = RecoveryInstance::with_dictionary(DMatrix::identity(d, d), z.clone(), DVector::zeros(d), 0.0).unwrap();
        let sys = build_measurement(&inst, &coord_pair(d, PairKind::Complementary, 9)).unwrap();
        let res = bpdn_solve(&sys, 0.0, &BpdnOptions::default()).unwrap();
        assert!((res.estimate - &z).amax() < 1e-6);
        let omp = omp_solve(&sys, 3).unwrap();
        let mut picked: Vec<usize> = (0..d).filter(|&i| omp.estimate[i] != 0.0).collect();
        picked.sort_unstable();
        assert_eq!(picked, vec![3, 17, 40]);
    }

    #[test]
    fn large_epsilon_gives_zero() {
        let inst = gen_instance(32, 64, 3, 0.1, 5).unwrap();
        let sys = build_measurement(&inst, &coord_pair(32, PairKind::Random, 6)).unwrap();
        let res = bpdn_solve(&sys, sys.y.norm() * 1.5, &BpdnOptions::default()).unwrap();
        assert!(res.estimate.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noisy_constraint_is_met() {
        let inst = gen_instance(64, 128, 4, 0.05, 7).unwrap();
        let sys = build_measurement(&inst, &coord_pair(64, PairKind::Complementary, 8)).unwrap();
        let eps = sys.eta.norm();
        let res = bpdn_solve(&sys, eps, &BpdnOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.residual_norm <= 1.01 * eps && res.residual_norm >= 0.99 * eps);
        assert!((res.residual_norm - (&sys.y - &sys.a * &res.estimate).norm()).abs() < 1e-9);
    }

    #[test]
    fn accepted_objective_never_increases() {
        for seed in 0..5 {
            let inst = gen_instance(48, 96, 4, 0.05, seed).unwrap();
            let sys = build_measurement(&inst, &coord_pair(48, PairKind::Random, seed + 100)).unwrap();
            let lasso = Lasso::new(&sys.a, &sys.y);
            let lambda = 0.01 * (&lasso.at * &sys.y).amax();
            let s = lasso.solve(lambda, DVector::zeros(96), &BpdnOptions::default());
            assert!(s.trace.len() > 2);
            for w in s.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn omp_rejects_duplicate_atoms() {
        let mut m = DMatrix::identity(4, 3);
        m.set_column(2, &m.column(0).clone_owned());
        let z = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let inst = RecoveryInstance::with_dictionary(m, z, DVector::zeros(4), 0.0).unwrap();
        let pair = MaskedPair::new(
            PairKind::Random,
            vec![crate::masking::PatchMask::ones(&[1, 4], 1).unwrap(); 2],
        )
        .unwrap();
        let sys = build_measurement(&inst, &pair).unwrap();
        assert!(matches!(omp_solve(&sys, 3), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn theory_rate_formula() {
        let want = 0.1 * (5.0 * (256.0f64 / 0.05).ln() / 128.0).sqrt();
        assert_eq!(theory_rate(0.1, 5, 256, 128, 0.05), want);
    }
}
