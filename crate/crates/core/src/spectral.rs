//! Eigenvalue counting and the Wegner, Minami and density-of-states
//! statistics.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;

use crate::disorder::{derive_seed, DensitySpec};
use crate::hamiltonian::{Geometry, SparseSymmetricOperator};
use crate::linalg::symmetric_eigenvalues;
use crate::resolvent::ForestSweep;
use crate::runner::TrialRunner;
use crate::stats::{mean, stderr_of_mean};
use crate::{Error, Result};

/// Sorted spectrum of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueSet {
    pub values: Vec<f64>,
    pub seed: u64,
    pub trial: u64,
}

impl EigenvalueSet {
    /// Number of eigenvalues in `[a, b)`.
    pub fn bracket_count(&self, a: f64, b: f64) -> usize {
        let lo = self.values.partition_point(|&e| e < a);
        let hi = self.values.partition_point(|&e| e < b);
        hi.saturating_sub(lo)
    }
}

pub fn eigenvalues(op: &SparseSymmetricOperator, cap: usize) -> Result<EigenvalueSet> {
    let values = symmetric_eigenvalues(&op.dense(cap)?)?;
    Ok(EigenvalueSet {
        values,
        seed: 0,
        trial: 0,
    })
}

/// Negative pivot count of `H - σ`, with the shift actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    pub below: usize,
    pub shift: f64,
    pub perturbed: bool,
}

fn perturbed_shift(sigma: f64) -> f64 {
    sigma - 1e-12 * (1.0 + sigma.abs())
}

/// Leaves-first `LDLᵀ` of `H - σ`. Writes each pivot into `pivots` and
/// returns false on an exactly vanishing or non-finite pivot.
fn tree_pivots(op: &SparseSymmetricOperator, sigma: f64, pivots: &mut [f64]) -> bool {
    let pot = op.potential();
    let parent = op.parents();
    let n = pot.len();
    let mut acc = vec![0.0; n];
    for v in (0..n).rev() {
        let d = pot[v] - sigma - acc[v];
        if d == 0.0 || !d.is_finite() {
            return false;
        }
        pivots[v] = d;
        let p = parent[v];
        if p != crate::tree::NO_PARENT {
            acc[p] += 1.0 / d;
        }
    }
    true
}

fn pivots_with_retry(op: &SparseSymmetricOperator, sigma: f64) -> Result<(Vec<f64>, f64, bool)> {
    let mut piv = vec![0.0; op.dim()];
    if tree_pivots(op, sigma, &mut piv) {
        return Ok((piv, sigma, false));
    }
    let s2 = perturbed_shift(sigma);
    if tree_pivots(op, s2, &mut piv) {
        return Ok((piv, s2, true));
    }
    Err(Error::InertiaBreakdown(sigma))
}

/// Number of eigenvalues strictly below `sigma` (Sylvester inertia).
pub fn count_below(op: &SparseSymmetricOperator, sigma: f64) -> Result<Inertia> {
    let (piv, shift, perturbed) = pivots_with_retry(op, sigma)?;
    Ok(Inertia {
        below: piv.iter().filter(|&&d| d < 0.0).count(),
        shift,
        perturbed,
    })
}

/// Eigenvalues in `[a, b)`.
pub fn count_in_interval(op: &SparseSymmetricOperator, a: f64, b: f64) -> Result<usize> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidInterval(a, b));
    }
    if a == b {
        return Ok(0);
    }
    Ok(count_below(op, b)?.below - count_below(op, a)?.below)
}

/// For every vertex `v`, the number of eigenvalues below `sigma` of the
/// restriction to the forward sub-tree of `v`. Eliminating leaves first
/// factorizes every such principal block at once.
pub fn subtree_negative_counts(op: &SparseSymmetricOperator, sigma: f64) -> Result<(Vec<u32>, Inertia)> {
    let (piv, shift, perturbed) = pivots_with_retry(op, sigma)?;
    let parent = op.parents();
    let mut neg: Vec<u32> = piv.iter().map(|&d| u32::from(d < 0.0)).collect();
    for v in (0..neg.len()).rev() {
        let p = parent[v];
        if p != crate::tree::NO_PARENT {
            neg[p] += neg[v];
        }
    }
    let below = (0..neg.len())
        .filter(|&v| parent[v] == crate::tree::NO_PARENT)
        .map(|v| neg[v] as usize)
        .sum();
    Ok((neg, Inertia { below, shift, perturbed }))
}

/// Per-trial counts of eigenvalues in one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCountStats {
    pub interval: (f64, f64),
    pub counts: Vec<usize>,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
}

impl IntervalCountStats {
    pub fn from_counts(interval: (f64, f64), counts: Vec<usize>) -> Self {
        let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let variance = crate::stats::variance(&xs);
        IntervalCountStats {
            interval,
            mean: mean(&xs),
            variance,
            stderr: stderr_of_mean(&xs),
            counts,
        }
    }

    pub fn trials(&self) -> usize {
        self.counts.len()
    }

    /// `P̂[count > m]`.
    pub fn tail(&self, m: usize) -> f64 {
        self.counts.iter().filter(|&&c| c > m).count() as f64 / self.trials() as f64
    }

    /// `Σ_{m ≥ r} P̂[count > m]`, i.e. the mean excess over `r`, with the
    /// standard error of that mean.
    pub fn excess_over(&self, r: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.counts.iter().map(|&c| c.saturating_sub(r) as f64).collect();
        (mean(&xs), stderr_of_mean(&xs))
    }
}

/// Counts in `[a, b)` over independent realizations.
pub fn sample_interval_counts<R: TrialRunner>(
    runner: &R,
    geom: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    interval: (f64, f64),
    trials: u64,
    seed: u64,
) -> Result<IntervalCountStats> {
    let (a, b) = interval;
    if !(a <= b) {
        return Err(Error::InvalidInterval(a, b));
    }
    let counts = runner.run(trials, |t| {
        let op = geom.realize(lambda, density, seed, t)?;
        count_in_interval(&op, a, b)
    })?;
    Ok(IntervalCountStats::from_counts(interval, counts))
}

/// `‖ρ_λ‖_∞ = ‖ρ‖_∞/λ`, the sup norm of the law of `λω`.
pub fn effective_sup_norm(density: &DensitySpec, lambda: f64) -> f64 {
    density.sup_norm() / lambda
}

#[derive(Debug, Clone, PartialEq)]
pub struct WegnerVerdict {
    pub stats: IntervalCountStats,
    pub volume: usize,
    pub lambda: f64,
    pub sup_norm: f64,
    pub effective_sup_norm: f64,
    /// `π ‖ρ_λ‖ |Λ| |I|`.
    pub bound: f64,
    /// Same with the coupling absorbed into the density, `π ‖ρ‖ |Λ| |I|`.
    pub bound_unscaled: f64,
    /// Per-block bound with the block rank, `π M0 ‖ρ_λ‖ |I|`.
    pub per_block_bound_rank: f64,
    /// Per-block bound with the block radius in place of the rank.
    pub per_block_bound_radius: f64,
    pub pass: bool,
}

const MIN_WEGNER_TRIALS: u64 = 100;

pub fn wegner_check<R: TrialRunner>(
    runner: &R,
    geom: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    interval: (f64, f64),
    trials: u64,
    seed: u64,
) -> Result<WegnerVerdict> {
    if trials < MIN_WEGNER_TRIALS {
        return Err(Error::InsufficientData(alloc::format!(
            "Wegner check needs at least {MIN_WEGNER_TRIALS} trials"
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("Wegner check needs lambda > 0".into()));
    }
    let stats = sample_interval_counts(runner, geom, density, lambda, interval, trials, seed)?;
    let width = interval.1 - interval.0;
    let n = geom.n_vertices();
    let eff = effective_sup_norm(density, lambda);
    let bound = PI * eff * n as f64 * width;
    let pass = stats.mean + 3.0 * stats.stderr <= bound;
    Ok(WegnerVerdict {
        volume: n,
        lambda,
        sup_norm: density.sup_norm(),
        effective_sup_norm: eff,
        bound,
        bound_unscaled: PI * density.sup_norm() * n as f64 * width,
        per_block_bound_rank: PI * geom.common_rank() as f64 * eff * width,
        per_block_bound_radius: PI * geom.tiling.block_radius() as f64 * eff * width,
        pass,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub width: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `E[count]/|I|`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

/// `E[count(I)]/|I|` for several widths around one center, each width on an
/// independent sample. `pass` iff every pair of ratios agrees within three
/// combined standard errors.
pub fn wegner_scaling<R: TrialRunner>(
    runner: &R,
    geom: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    center: f64,
    widths: &[f64],
    trials: u64,
    seed: u64,
) -> Result<(Vec<ScalingRow>, bool)> {
    let mut rows = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        if !(w > 0.0) {
            return Err(Error::InvalidInterval(center - w / 2.0, center + w / 2.0));
        }
        let st = sample_interval_counts(
            runner,
            geom,
            density,
            lambda,
            (center - w / 2.0, center + w / 2.0),
            trials,
            derive_seed(seed, i as u64 + 1),
        )?;
        rows.push(ScalingRow {
            width: w,
            mean: st.mean,
            stderr: st.stderr,
            ratio: st.mean / w,
            ratio_stderr: st.stderr / w,
        });
    }
    let mut pass = true;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let se = libm::sqrt(rows[i].ratio_stderr.powi(2) + rows[j].ratio_stderr.powi(2));
            if (rows[i].ratio - rows[j].ratio).abs() > 3.0 * se {
                pass = false;
            }
        }
    }
    Ok((rows, pass))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinamiVerdict {
    pub stats: IntervalCountStats,
    pub common_rank: usize,
    /// `Σ_{m ≥ M0} P̂[count > m]`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `(m, P̂[count > m], binomial stderr)` for `m = 0..=max count`.
    pub tail: Vec<(usize, f64, f64)>,
    /// `(π ‖ρ_λ‖ |Λ| |I|)²`.
    pub bound: f64,
    pub bound_unscaled: f64,
    /// The bound is at least one, so the check says nothing.
    pub vacuous: bool,
    pub pass: bool,
}

pub fn minami_tail_check<R: TrialRunner>(
    runner: &R,
    geom: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    interval: (f64, f64),
    trials: u64,
    seed: u64,
) -> Result<MinamiVerdict> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("Minami check needs lambda > 0".into()));
    }
    let stats = sample_interval_counts(runner, geom, density, lambda, interval, trials, seed)?;
    let m0 = geom.common_rank();
    let (lhs, lhs_stderr) = stats.excess_over(m0);
    let width = interval.1 - interval.0;
    let n = geom.n_vertices() as f64;
    let bound = (PI * effective_sup_norm(density, lambda) * n * width).powi(2);
    let max_count = stats.counts.iter().copied().max().unwrap_or(0);
    let tt = stats.trials() as f64;
    let tail = (0..=max_count)
        .map(|m| {
            let p = stats.tail(m);
            (m, p, libm::sqrt(p * (1.0 - p) / tt))
        })
        .collect();
    Ok(MinamiVerdict {
        common_rank: m0,
        lhs,
        lhs_stderr,
        tail,
        bound,
        bound_unscaled: (PI * density.sup_norm() * n * width).powi(2),
        vacuous: bound >= 1.0,
        pass: lhs - 3.0 * lhs_stderr <= bound,
        stats,
    })
}

/// Diagonal spectral distribution functions `F_x(σ) = <δ_x, E(-∞,σ) δ_x>`
/// from the resolvent along the vertical line above `σ`:
///
/// `F_x(σ) = 1/2 - (1/π) ∫_0^∞ Re G(x,x;σ+iy) dy`,
///
/// integrated by the trapezoid rule in `ln y` on `[y_min, y_max]`, with the
/// segment below `y_min` taken as constant and the `(H_xx - σ)/y` tail above
/// `y_max` added in closed form. The rule is only exponentially accurate
/// when the integrand is negligible at `y_max`, hence the large default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCdf {
    pub y_min: f64,
    pub y_max: f64,
    /// Step in `ln y`; the discretization error is about `exp(-π²/step)`.
    pub step: f64,
}

impl Default for SpectralCdf {
    fn default() -> Self {
        SpectralCdf {
            y_min: 1e-7,
            y_max: 1e6,
            step: 0.7,
        }
    }
}

impl SpectralCdf {
    pub fn validate(&self) -> Result<()> {
        if !(self.y_min > 0.0 && self.y_max > self.y_min && self.step > 0.0) {
            return Err(Error::InvalidArgument("quadrature needs 0 < y_min < y_max, step > 0".into()));
        }
        Ok(())
    }

    /// `(y_j, w_j)` with `∫_0^{y_max} g ≈ Σ w_j g(y_j)`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let t0 = libm::log(self.y_min);
        let t1 = libm::log(self.y_max);
        let m = libm::ceil((t1 - t0) / self.step).max(1.0) as usize;
        let h = (t1 - t0) / m as f64;
        (0..=m)
            .map(|j| {
                let y = libm::exp(t0 + j as f64 * h);
                let mut w = h * y;
                if j == 0 || j == m {
                    w *= 0.5;
                }
                if j == 0 {
                    w += self.y_min;
                }
                (y, w)
            })
            .collect()
    }

    /// Group averages of `F_x(σ)` for each vertex range in `groups`, one per
    /// shift in `sigmas`: `out[s][g]`.
    pub fn group_cdf(
        &self,
        sweep: &mut ForestSweep,
        potential: &[f64],
        sigmas: &[f64],
        groups: &[Range<usize>],
    ) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let n = potential.len();
        let nodes = self.nodes();
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        let diag_mean: Vec<f64> = groups
            .iter()
            .map(|r| if r.is_empty() { 0.0 } else { mean(&potential[r.clone()]) })
            .collect();
        let mut out = Vec::with_capacity(sigmas.len());
        for &sigma in sigmas {
            let mut integral = vec![0.0; groups.len()];
            for &(y, w) in &nodes {
                sweep.diagonal(potential, Complex64::new(sigma, y), &mut g)?;
                for (acc, r) in integral.iter_mut().zip(groups) {
                    if r.is_empty() {
                        continue;
                    }
                    let s: f64 = g[r.clone()].iter().map(|c| c.re).sum();
                    *acc += w * s / r.len() as f64;
                }
            }
            out.push(
                integral
                    .iter()
                    .zip(&diag_mean)
                    .map(|(i, &h)| 0.5 - (i + (h - sigma) / self.y_max) / PI)
                    .collect(),
            );
        }
        Ok(out)
    }

    /// `F_x(σ)` for every vertex.
    pub fn vertex_cdf(&self, op: &SparseSymmetricOperator, sigma: f64) -> Result<Vec<f64>> {
        let groups: Vec<Range<usize>> = (0..op.dim()).map(|v| v..v + 1).collect();
        let mut sweep = ForestSweep::new(op);
        Ok(self
            .group_cdf(&mut sweep, op.potential(), &[sigma], &groups)?
            .pop()
            .expect("one shift"))
    }
}

/// Weight `(K-1)/K · K^{-n}` of canopy layer `n`.
pub fn layer_weight(branching: usize, n: usize) -> f64 {
    let k = branching as f64;
    (k - 1.0) / k * libm::pow(k, -(n as f64))
}

/// `K^{-(n_max+1)}`: the layer weight missing after truncation at `n_max`.
pub fn weight_deficit(branching: usize, n_max: usize) -> f64 {
    libm::pow(branching as f64, -((n_max + 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosConfig {
    pub branching: usize,
    pub block_radius: usize,
    pub lambda: f64,
    pub density: DensitySpec,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub bin_width: f64,
    pub bethe_depth: usize,
    pub bethe_trials: u64,
    pub canopy_depth: usize,
    pub canopy_trials: u64,
    pub n_max: usize,
    pub seed: u64,
    pub quadrature: SpectralCdf,
}

impl DosConfig {
    /// Canopy levels kept between the deepest layer used and the top.
    pub fn depth_buffer(&self) -> usize {
        3 * self.block_radius.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.density.validate()?;
        self.quadrature.validate()?;
        if !(self.bin_width > 0.0 && self.grid_hi > self.grid_lo) {
            return Err(Error::InvalidInterval(self.grid_lo, self.grid_hi));
        }
        if self.canopy_depth < self.n_max + self.depth_buffer() {
            return Err(Error::InsufficientData(alloc::format!(
                "canopy depth {} below n_max {} + buffer {}",
                self.canopy_depth,
                self.n_max,
                self.depth_buffer()
            )));
        }
        if self.bethe_trials < 2 || self.canopy_trials < 2 {
            return Err(Error::InsufficientData("DOS needs at least two trials per side".into()));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let nb = libm::round((self.grid_hi - self.grid_lo) / self.bin_width).max(1.0) as usize;
        (0..=nb).map(|i| self.grid_lo + i as f64 * self.bin_width).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DosEstimate {
    pub edges: Vec<f64>,
    pub lhs: Vec<f64>,
    pub lhs_err: Vec<f64>,
    pub rhs: Vec<f64>,
    pub rhs_err: Vec<f64>,
    pub lhs_mass: f64,
    pub rhs_mass: f64,
    pub weight_deficit: f64,
    /// Bins where either side is nonzero.
    pub active_bins: usize,
    /// Fraction of active bins with `|lhs - rhs| ≤ 3` combined stderr.
    pub agreement: f64,
}

impl DosEstimate {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// A bin enters the agreement fraction when either side puts mass in it.
    pub fn is_active(&self, i: usize) -> bool {
        self.lhs[i] > 0.0 || self.rhs[i].abs() > 1e-5
    }

    pub fn bin_agrees(&self, i: usize) -> bool {
        let se = libm::sqrt(self.lhs_err[i].powi(2) + self.rhs_err[i].powi(2));
        (self.lhs[i] - self.rhs[i]).abs() <= 3.0 * se
    }

    /// Both sides integrate to one up to the layer truncation (plus a small
    /// quadrature allowance).
    pub fn masses_ok(&self) -> bool {
        let tol = 1e-4;
        (self.lhs_mass - 1.0).abs() <= 1e-9
            && self.rhs_mass <= 1.0 + tol
            && self.rhs_mass >= 1.0 - self.weight_deficit - tol
    }
}

fn column_stats(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
    (mean(&col), stderr_of_mean(&col))
}

/// Per-trial layer-weighted canopy mass of each interval between
/// consecutive `edges`.
pub fn canopy_weighted_masses<R: TrialRunner>(
    runner: &R,
    geom: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    edges: &[f64],
    n_max: usize,
    trials: u64,
    seed: u64,
    quad: &SpectralCdf,
) -> Result<Vec<Vec<f64>>> {
    let k = geom.tree.branching();
    let layers: Vec<Range<usize>> = (0..=n_max).map(|n| geom.tree.layer(n)).collect();
    runner.run(trials, |t| {
        let op = geom.realize(lambda, density, seed, t)?;
        let mut sweep = ForestSweep::new(&op);
        let cdf = quad.group_cdf(&mut sweep, op.potential(), edges, &layers)?;
        Ok((0..edges.len() - 1)
            .map(|i| {
                (0..=n_max)
                    .map(|n| layer_weight(k, n) * (cdf[i + 1][n] - cdf[i][n]))
                    .sum()
            })
            .collect())
    })
}

pub fn dos_compare<R: TrialRunner>(runner: &R, cfg: &DosConfig) -> Result<DosEstimate> {
    cfg.validate()?;
    let edges = cfg.edges();
    let nb = edges.len() - 1;
    let w = cfg.bin_width;

    let bethe = Geometry::bethe(cfg.branching, cfg.block_radius, cfg.bethe_depth)?;
    let n = bethe.n_vertices() as f64;
    let bseed = derive_seed(cfg.seed, 1);
    let lhs_rows: Vec<Vec<f64>> = runner.run(cfg.bethe_trials, |t| {
        let op = bethe.realize(cfg.lambda, &cfg.density, bseed, t)?;
        let below = edges
            .iter()
            .map(|&e| count_below(&op, e).map(|c| c.below))
            .collect::<Result<Vec<usize>>>()?;
        Ok(below.windows(2).map(|c| (c[1] - c[0]) as f64 / (n * w)).collect())
    })?;

    let canopy = Geometry::canopy(cfg.branching, cfg.block_radius, cfg.canopy_depth)?;
    let rhs_rows: Vec<Vec<f64>> = canopy_weighted_masses(
        runner,
        &canopy,
        &cfg.density,
        cfg.lambda,
        &edges,
        cfg.n_max,
        cfg.canopy_trials,
        derive_seed(cfg.seed, 2),
        &cfg.quadrature,
    )?
    .into_iter()
    .map(|r| r.into_iter().map(|m| m / w).collect())
    .collect();

    let mut est = DosEstimate {
        edges,
        lhs: Vec::with_capacity(nb),
        lhs_err: Vec::with_capacity(nb),
        rhs: Vec::with_capacity(nb),
        rhs_err: Vec::with_capacity(nb),
        lhs_mass: 0.0,
        rhs_mass: 0.0,
        weight_deficit: weight_deficit(cfg.branching, cfg.n_max),
        active_bins: 0,
        agreement: 0.0,
    };
    for j in 0..nb {
        let (l, le) = column_stats(&lhs_rows, j);
        let (r, re) = column_stats(&rhs_rows, j);
        est.lhs.push(l);
        est.lhs_err.push(le);
        est.rhs.push(r);
        est.rhs_err.push(re);
    }
    est.lhs_mass = est.lhs.iter().sum::<f64>() * w;
    est.rhs_mass = est.rhs.iter().sum::<f64>() * w;
    // quadrature noise of order 1e-7 is not spectral weight
    let active: Vec<usize> = (0..nb).filter(|&j| est.is_active(j)).collect();
    est.active_bins = active.len();
    let agree = active.iter().filter(|&&j| est.bin_agrees(j)).count();
    est.agreement = if active.is_empty() { 1.0 } else { agree as f64 / active.len() as f64 };
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityAt {
    pub energy: f64,
    pub half_width: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Canopy-formula mass of `[E0-h, E0+h)` divided by `2h`.
#[allow(clippy::too_many_arguments)]
pub fn dos_density_at<R: TrialRunner>(
    runner: &R,
    canopy: &Geometry,
    density: &DensitySpec,
    lambda: f64,
    energy: f64,
    half_width: f64,
    n_max: usize,
    trials: u64,
    seed: u64,
    quad: &SpectralCdf,
) -> Result<DensityAt> {
    if !(half_width > 0.0) {
        return Err(Error::InvalidArgument("half width must be positive".into()));
    }
    let rows = canopy_weighted_masses(
        runner,
        canopy,
        density,
        lambda,
        &[energy - half_width, energy + half_width],
        n_max,
        trials,
        seed,
        quad,
    )?;
    let (m, se) = column_stats(&rows, 0);
    Ok(DensityAt {
        energy,
        half_width,
        value: m / (2.0 * half_width),
        stderr: se / (2.0 * half_width),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::DENSE_CAP;
    use crate::linalg::{symmetric_eigen, Matrix};
    use crate::runner::Sequential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn star_spectrum_and_edge_free_hook() {
        let g = Geometry::bethe(2, 0, 1).unwrap();
        let op = g.realize(0.0, &DensitySpec::default(), 0, 0).unwrap();
        let ev = eigenvalues(&op, DENSE_CAP).unwrap();
        let s = 3f64.sqrt();
        for (a, b) in ev.values.iter().zip([-s, 0.0, 0.0, s]) {
            assert!((a - b).abs() < 1e-10);
        }
        let op = Geometry::bethe(2, 1, 3).unwrap().realize(2.0, &DensitySpec::default(), 5, 0).unwrap();
        let diag = eigenvalues(&op.without_edges(), DENSE_CAP).unwrap();
        let mut pot = op.potential().to_vec();
        pot.sort_by(f64::total_cmp);
        assert_eq!(diag.values, pot);
        let full = eigenvalues(&op, DENSE_CAP).unwrap();
        assert!((full.values.iter().sum::<f64>() - op.trace()).abs() < 1e-8);
    }

    #[test]
    fn inertia_matches_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Geometry::bethe(2, 1, 5).unwrap();
        for t in 0..20 {
            let op = g.realize(3.0, &DensitySpec::default(), 8, t).unwrap();
            let ev = eigenvalues(&op, DENSE_CAP).unwrap();
            for _ in 0..10 {
                let a: f64 = rng.gen_range(-4.0..7.0);
                let b = a + rng.gen_range(0.0..3.0);
                assert_eq!(count_in_interval(&op, a, b).unwrap(), ev.bracket_count(a, b));
            }
        }
    }

    #[test]
    fn interval_edge_cases() {
        let op = Geometry::bethe(2, 1, 3).unwrap().realize(1.0, &DensitySpec::default(), 1, 0).unwrap();
        assert_eq!(count_in_interval(&op, -10.0, 10.0).unwrap(), 22);
        assert_eq!(count_in_interval(&op, 0.3, 0.3).unwrap(), 0);
        assert!(matches!(count_in_interval(&op, 1.0, 0.0), Err(Error::InvalidInterval(..))));
    }

    #[test]
    fn exact_eigenvalue_shift_is_perturbed() {
        // free star has eigenvalue 0 with multiplicity 2
        let op = Geometry::bethe(2, 0, 1).unwrap().realize(0.0, &DensitySpec::default(), 0, 0).unwrap();
        let c = count_below(&op, 0.0).unwrap();
        assert!(c.perturbed);
        assert_eq!(c.below, 1);
        assert_eq!(count_in_interval(&op, 0.0, 1.0).unwrap(), 2);
    }

    #[test]
    fn subtree_counts_match_restricted_solves() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let op = g.realize(2.0, &DensitySpec::default(), 3, 0).unwrap();
        let sigma = 0.77;
        let (neg, inertia) = subtree_negative_counts(&op, sigma).unwrap();
        assert_eq!(inertia.below, count_below(&op, sigma).unwrap().below);
        for x in [0, 1, 3, 9, 20, 50] {
            let sub: Vec<usize> = g.tree.subtree_ranges(x).into_iter().flatten().collect();
            let r = op.restrict(&sub).unwrap();
            let ev = eigenvalues(&r, DENSE_CAP).unwrap();
            assert_eq!(neg[x] as usize, ev.bracket_count(f64::NEG_INFINITY, sigma));
        }
    }

    #[test]
    fn tail_sums() {
        let st = IntervalCountStats::from_counts((0.0, 1.0), vec![0, 1, 4, 2]);
        assert_eq!(st.tail(0), 0.75);
        assert_eq!(st.tail(3), 0.25);
        // Σ_{m≥1} P[count > m] = mean excess over 1
        let direct: f64 = (1..10).map(|m| st.tail(m)).sum();
        assert!((st.excess_over(1).0 - direct).abs() < 1e-15);
    }

    #[test]
    fn wegner_small_interval_and_gap() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let d = DensitySpec::default();
        let v = wegner_check(&Sequential, &g, &d, 1.0, (0.5, 0.5 + 1e-6), 100, 1).unwrap();
        assert!(v.stats.mean <= 0.01);
        let v = wegner_check(&Sequential, &g, &d, 1.0, (50.0, 60.0), 100, 1).unwrap();
        assert!(v.stats.counts.iter().all(|&c| c == 0));
        assert!(v.pass);
        assert!(wegner_check(&Sequential, &g, &d, 1.0, (0.0, 1.0), 10, 1).is_err());
    }

    #[test]
    fn minami_empty_interval() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let v = minami_tail_check(&Sequential, &g, &DensitySpec::default(), 20.0, (10.0, 10.0), 50, 1).unwrap();
        assert_eq!(v.lhs, 0.0);
        assert_eq!(v.bound, 0.0);
        assert!(v.pass);
        let r1 = Geometry::bethe(2, 0, 4).unwrap();
        let v = minami_tail_check(&Sequential, &r1, &DensitySpec::default(), 20.0, (10.0, 10.05), 500, 2).unwrap();
        assert_eq!(v.common_rank, 1);
        assert!(v.pass);
    }

    fn eigen_cdf(op: &SparseSymmetricOperator, sigma: f64) -> Vec<f64> {
        let d: Matrix<f64> = op.dense(DENSE_CAP).unwrap();
        let e = symmetric_eigen(&d, true).unwrap();
        let v = e.vectors.unwrap();
        (0..op.dim())
            .map(|x| {
                e.values
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l < sigma)
                    .map(|(k, _)| v[(x, k)] * v[(x, k)])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn contour_cdf_matches_eigenvectors() {
        let g = Geometry::canopy(2, 1, 5).unwrap();
        let quad = SpectralCdf::default();
        for (t, sigma) in [(0u64, 0.31), (1, 2.2), (2, -1.13), (3, 4.9)] {
            let op = g.realize(3.0, &DensitySpec::default(), 4, t).unwrap();
            let oracle = eigen_cdf(&op, sigma);
            let f = quad.vertex_cdf(&op, sigma).unwrap();
            for (a, b) in f.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-5, "sigma {sigma}: {a} vs {b}");
            }
            let total: f64 = f.iter().sum();
            let c = count_below(&op, sigma).unwrap().below as f64;
            assert!((total - c).abs() < 1e-3, "{total} vs {c}");
        }
    }

    #[test]
    fn layer_weights_sum_to_one() {
        for k in 2..5 {
            let s: f64 = (0..200).map(|n| layer_weight(k, n)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            let part: f64 = (0..=10).map(|n| layer_weight(k, n)).sum();
            assert!((1.0 - part - weight_deficit(k, 10)).abs() < 1e-14);
        }
    }

    fn small_dos(lambda: f64) -> DosConfig {
        DosConfig {
            branching: 2,
            block_radius: 1,
            lambda,
            density: DensitySpec::default(),
            grid_lo: -3.0,
            grid_hi: 3.0 + lambda,
            bin_width: 0.5,
            bethe_depth: 5,
            bethe_trials: 20,
            canopy_depth: 9,
            canopy_trials: 4,
            n_max: 5,
            seed: 3,
            quadrature: SpectralCdf::default(),
        }
    }

    #[test]
    fn dos_masses_and_free_determinism() {
        let est = dos_compare(&Sequential, &small_dos(0.0)).unwrap();
        assert!(est.lhs_err.iter().all(|&e| e < 1e-12));
        assert!(est.rhs_err.iter().all(|&e| e < 1e-12));
        assert!(est.masses_ok(), "{} {}", est.lhs_mass, est.rhs_mass);
        let est = dos_compare(&Sequential, &small_dos(2.0)).unwrap();
        assert!(est.masses_ok(), "{} {}", est.lhs_mass, est.rhs_mass);
        assert!(est.lhs.iter().all(|&x| x >= 0.0));
        assert!(est.rhs.iter().all(|&x| x >= -1e-6));
        let mut bad = small_dos(1.0);
        bad.canopy_depth = 6;
        assert!(dos_compare(&Sequential, &bad).is_err());
    }

    #[test]
    fn free_density_is_symmetric() {
        let c = Geometry::canopy(2, 0, 9).unwrap();
        let quad = SpectralCdf::default();
        let d = DensitySpec::default();
        for e in [0.4, 1.3, 2.1] {
            let p = dos_density_at(&Sequential, &c, &d, 0.0, e, 0.1, 6, 2, 1, &quad).unwrap();
            let m = dos_density_at(&Sequential, &c, &d, 0.0, -e, 0.1, 6, 2, 1, &quad).unwrap();
            assert!(p.value >= 0.0);
            assert!((p.value - m.value).abs() < 1e-6, "{e}: {} {}", p.value, m.value);
        }
    }
}
