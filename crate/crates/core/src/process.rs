//! The rescaled eigenvalue point process near a fixed energy, its sub-tree
//! decomposition and the compound Poisson law fitted to it.
//!
//! For a window `[a, b)` the process counts eigenvalues of the depth-`L`
//! operator in `[E0 + a/|Λ|, E0 + b/|Λ|)`. The decomposition splits the tree
//! at a block-aligned depth `l` and counts, in the same rescaled window, the
//! eigenvalues of the operator restricted to the forward sub-tree of each
//! vertex at depth `l`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::disorder::{derive_seed, DensitySpec};
use crate::hamiltonian::Geometry;
use crate::runner::TrialRunner;
use crate::spectral::{count_in_interval, effective_sup_norm, subtree_negative_counts};
use crate::stats::{bootstrap, mean, percentile_interval, replicate_sd, stderr_of_mean, variance};
use crate::tree::TreeKind;
use crate::{Error, Result};

pub const MIN_FIT_TRIALS: usize = 1000;
const PMF_TAIL_TOL: f64 = 1e-12;
const PMF_CAP_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessConfig {
    pub energy: f64,
    /// Unscaled window `[a, b)`.
    pub window: (f64, f64),
    pub alpha: f64,
    pub lambda: f64,
    pub density: DensitySpec,
    pub trials: u64,
    pub seed: u64,
    pub bootstrap_reps: usize,
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(Error::InvalidInterval(a, b));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidArgument(alloc::format!(
                "alpha must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        if !self.energy.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument("energy and lambda must be finite".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        self.density.validate()
    }

    pub fn width(&self) -> f64 {
        self.window.1 - self.window.0
    }
}

/// Depths `m0·{4,5,6,7}`, or `{4,..,7}` for rank-one blocks.
pub fn default_depths(block_radius: usize) -> Vec<usize> {
    let step = block_radius.max(1);
    (4..=7).map(|n| n * step).collect()
}

/// Split depth rounded down to a multiple of the block period `m0 + 1`, so
/// every vertex at that depth heads a block and the sub-trees share no
/// coupling.
pub fn split_depth(depth: usize, block_radius: usize, alpha: f64) -> usize {
    let period = (block_radius + 1) as f64;
    (libm::floor(alpha * depth as f64 / period) * period) as usize
}

/// `m0⌊αL/m0⌋`, or `⌊αL⌋` for `m0 = 0`. Reported alongside [`split_depth`].
pub fn split_depth_literal(depth: usize, block_radius: usize, alpha: f64) -> usize {
    let m = block_radius.max(1) as f64;
    (libm::floor(alpha * depth as f64 / m) * m) as usize
}

/// Energy window `[E0 + a/n, E0 + b/n)`.
pub fn scaled_window(energy: f64, window: (f64, f64), volume: usize) -> (f64, f64) {
    let n = volume as f64;
    (energy + window.0 / n, energy + window.1 / n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsSample {
    pub trial: u64,
    pub mu: u32,
    /// One count per sub-tree root, in root order; empty when only the full
    /// operator was counted.
    pub eta: Vec<u32>,
}

impl CountsSample {
    pub fn eta_total(&self) -> u32 {
        self.eta.iter().sum()
    }

    pub fn defect(&self) -> u32 {
        self.mu.abs_diff(self.eta_total())
    }
}

/// Paired counts for one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSamples {
    pub depth: usize,
    pub volume: usize,
    pub split_depth: usize,
    pub split_depth_literal: usize,
    pub roots: Vec<usize>,
    pub subtree_sizes: Vec<usize>,
    pub energy: f64,
    pub window: (f64, f64),
    pub seed: u64,
    pub samples: Vec<CountsSample>,
}

impl ProcessSamples {
    pub fn mu(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.mu).collect()
    }

    pub fn trials(&self) -> usize {
        self.samples.len()
    }
}

/// Counts of the full operator in the rescaled window.
pub fn sample_mu<R: TrialRunner>(runner: &R, geom: &Geometry, cfg: &ProcessConfig) -> Result<Vec<CountsSample>> {
    cfg.validate()?;
    let (lo, hi) = scaled_window(cfg.energy, cfg.window, geom.n_vertices());
    runner.run(cfg.trials, |t| {
        let mu = if lo == hi {
            0
        } else {
            let op = geom.realize(cfg.lambda, &cfg.density, cfg.seed, t)?;
            count_in_interval(&op, lo, hi)? as u32
        };
        Ok(CountsSample {
            trial: t,
            mu,
            eta: Vec::new(),
        })
    })
}

fn check_split(geom: &Geometry, split: usize) -> Result<()> {
    if geom.tree.kind() != TreeKind::BetheTruncation {
        return Err(Error::WrongTreeKind);
    }
    let depth = geom.tree.height();
    let m0 = geom.tiling.block_radius();
    if split == 0 || split > depth || depth - split < m0 {
        return Err(Error::InvalidParams(alloc::format!(
            "split depth {split} needs 1 <= l and L - l >= m0 (L = {depth}, m0 = {m0})"
        )));
    }
    for x in geom.tree.level_range(split) {
        if geom.tiling.head(geom.tiling.block_of(x)) != x {
            return Err(Error::InvalidParams(alloc::format!(
                "split depth {split} cuts through a block"
            )));
        }
    }
    Ok(())
}

/// Full-operator and sub-tree counts from the same realization of every
/// trial.
pub fn sample_eta<R: TrialRunner>(runner: &R, geom: &Geometry, cfg: &ProcessConfig) -> Result<ProcessSamples> {
    cfg.validate()?;
    let depth = geom.tree.height();
    let m0 = geom.tiling.block_radius();
    let split = split_depth(depth, m0, cfg.alpha);
    check_split(geom, split)?;
    let roots: Vec<usize> = geom.tree.level_range(split).collect();
    let subtree_sizes = roots
        .iter()
        .map(|&x| geom.tree.subtree_ranges(x).iter().map(|r| r.len()).sum())
        .collect();
    let volume = geom.n_vertices();
    let (lo, hi) = scaled_window(cfg.energy, cfg.window, volume);
    let samples = runner.run(cfg.trials, |t| {
        if lo == hi {
            return Ok(CountsSample {
                trial: t,
                mu: 0,
                eta: vec![0; roots.len()],
            });
        }
        let op = geom.realize(cfg.lambda, &cfg.density, cfg.seed, t)?;
        let (neg_lo, in_lo) = subtree_negative_counts(&op, lo)?;
        let (neg_hi, in_hi) = subtree_negative_counts(&op, hi)?;
        let mu = in_hi
            .below
            .checked_sub(in_lo.below)
            .ok_or_else(|| Error::Inconsistent("eigenvalue count decreased across the window".into()))?;
        let eta = roots
            .iter()
            .map(|&x| {
                neg_hi[x]
                    .checked_sub(neg_lo[x])
                    .ok_or_else(|| Error::Inconsistent("sub-tree count decreased across the window".into()))
            })
            .collect::<Result<Vec<u32>>>()?;
        Ok(CountsSample {
            trial: t,
            mu: mu as u32,
            eta,
        })
    })?;
    Ok(ProcessSamples {
        depth,
        volume,
        split_depth: split,
        split_depth_literal: split_depth_literal(depth, m0, cfg.alpha),
        roots,
        subtree_sizes,
        energy: cfg.energy,
        window: cfg.window,
        seed: cfg.seed,
        samples,
    })
}

/// [`sample_eta`] over several Bethe depths, each on its own derived seed.
pub fn sample_depths<R: TrialRunner>(
    runner: &R,
    branching: usize,
    block_radius: usize,
    depths: &[usize],
    cfg: &ProcessConfig,
) -> Result<Vec<ProcessSamples>> {
    depths
        .iter()
        .map(|&l| {
            let geom = Geometry::bethe(branching, block_radius, l)?;
            let c = ProcessConfig {
                seed: derive_seed(cfg.seed, l as u64),
                ..cfg.clone()
            };
            sample_eta(runner, &geom, &c)
        })
        .collect()
}

/// Estimated jump intensities `p̂_k = Σ_x P̂[η_x = k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEstimate {
    pub rank: usize,
    /// `atoms[k-1]` for every `k` from 1 up to `max(rank, largest count)`.
    pub atoms: Vec<f64>,
    pub atoms_se: Vec<f64>,
    /// Mass on `k > rank`.
    pub overflow: f64,
    pub overflow_se: f64,
    /// `Σ k p̂_k`, the mean of `Σ_x η_x`.
    pub k_weighted_total: f64,
    pub trials: usize,
}

impl AtomEstimate {
    pub fn atom(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.atoms.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn atom_se(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.atoms_se.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().sum()
    }
}

fn require_trials(n: usize) -> Result<()> {
    if n < MIN_FIT_TRIALS {
        return Err(Error::InsufficientData(alloc::format!(
            "need at least {MIN_FIT_TRIALS} trials, got {n}"
        )));
    }
    Ok(())
}

/// Atoms up to the block rank plus everything observed above it; standard
/// errors by resampling trials.
pub fn estimate_atoms(samples: &ProcessSamples, rank: usize, reps: usize, seed: u64) -> Result<AtomEstimate> {
    let n = samples.trials();
    require_trials(n)?;
    let kmax = samples
        .samples
        .iter()
        .flat_map(|s| s.eta.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    let width = kmax.max(rank);
    // per-trial number of roots with count k, columns k = 1..=width
    let table: Vec<Vec<f64>> = samples
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![0.0; width];
            for &c in &s.eta {
                if c > 0 {
                    row[c as usize - 1] += 1.0;
                }
            }
            row
        })
        .collect();
    let column_mean = |idx: &[usize], k: usize| idx.iter().map(|&i| table[i][k]).sum::<f64>() / idx.len() as f64;
    let overflow_of = |idx: &[usize]| (rank..width).fold(0.0, |acc, k| acc + column_mean(idx, k));
    let all: Vec<usize> = (0..n).collect();
    let atoms: Vec<f64> = (0..width).map(|k| column_mean(&all, k)).collect();
    let atoms_se = (0..width)
        .map(|k| replicate_sd(&bootstrap(n, reps, derive_seed(seed, k as u64), |idx| column_mean(idx, k))))
        .collect();
    let overflow = overflow_of(&all);
    let overflow_se = if width > rank {
        replicate_sd(&bootstrap(n, reps, derive_seed(seed, u64::MAX), overflow_of))
    } else {
        0.0
    };
    let k_weighted_total = atoms.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    Ok(AtomEstimate {
        rank,
        atoms,
        atoms_se,
        overflow,
        overflow_se,
        k_weighted_total,
        trials: n,
    })
}

/// Law of `Σ_k k N_k` with independent `N_k ~ Poisson(p_k)`, from `0` to
/// `cap` inclusive, by the Panjer recursion
/// `P(n) = (1/n) Σ_k k p_k P(n-k)`.
pub fn compound_poisson_pmf(atoms: &[f64], cap: usize) -> Result<Vec<f64>> {
    if atoms.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("atoms must be finite and non-negative".into()));
    }
    let total: f64 = atoms.iter().sum();
    let p0 = libm::exp(-total);
    if p0 == 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "total intensity {total} too large for the recursion"
        )));
    }
    let mut pmf = vec![0.0; cap + 1];
    pmf[0] = p0;
    for n in 1..=cap {
        let mut acc = 0.0;
        for (i, &p) in atoms.iter().enumerate().take(n) {
            let k = i + 1;
            acc += k as f64 * p * pmf[n - k];
        }
        pmf[n] = acc / n as f64;
    }
    Ok(pmf)
}

/// `exp(Σ_k p_k (e^{itk} - 1))`.
pub fn compound_poisson_cf(atoms: &[f64], t: f64) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (i, &p) in atoms.iter().enumerate() {
        let k = (i + 1) as f64;
        s += Complex64::new(libm::cos(t * k) - 1.0, libm::sin(t * k)) * p;
    }
    s.exp()
}

/// Relative frequencies of `0..=cap`.
pub fn empirical_pmf(counts: &[u32], cap: usize) -> Vec<f64> {
    let mut h = vec![0.0; cap + 1];
    for &c in counts {
        if (c as usize) <= cap {
            h[c as usize] += 1.0;
        }
    }
    let n = counts.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// `½ Σ |p - q|` plus half the mass of `q` beyond the common support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let diff: f64 = (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum();
    let missing = (1.0 - q.iter().sum::<f64>()).max(0.0) + (1.0 - p.iter().sum::<f64>()).max(0.0);
    0.5 * (diff + missing)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomBoundCheck {
    pub k: usize,
    pub atom: f64,
    pub atom_se: f64,
    /// `scale / k` with `scale = K n̂(E0) |I|`.
    pub bound: f64,
    pub bound_se: f64,
    pub pass: bool,
}

/// `p̂_k - bound_k ≤ 3 √(se_p² + se_bound²)` for `k = 1..=rank`.
pub fn atom_bound_checks(atoms: &AtomEstimate, scale: f64, scale_se: f64) -> Vec<AtomBoundCheck> {
    (1..=atoms.rank)
        .map(|k| {
            let bound = scale / k as f64;
            let bound_se = scale_se / k as f64;
            let atom = atoms.atom(k);
            let atom_se = atoms.atom_se(k);
            let pass = atom - bound <= 3.0 * libm::sqrt(atom_se * atom_se + bound_se * bound_se);
            AtomBoundCheck {
                k,
                atom,
                atom_se,
                bound,
                bound_se,
                pass,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonFit {
    pub atoms: AtomEstimate,
    pub cap: usize,
    pub pmf: Vec<f64>,
    pub empirical: Vec<f64>,
    pub tv_distance: f64,
    /// `(1/2π ∫_{-π}^{π} |φ̂(t) - φ(t)|² dt)^{1/2}`.
    pub cf_distance: f64,
    pub cf_grid: usize,
    pub bounds: Vec<AtomBoundCheck>,
    pub fitted_mean: f64,
    pub empirical_mean: f64,
    pub empirical_mean_se: f64,
}

impl CompoundPoissonFit {
    pub fn bounds_ok(&self) -> bool {
        self.bounds.iter().all(|b| b.pass)
    }
}

const CF_GRID: usize = 256;

/// Compares the counts with the compound Poisson law of the atoms.
/// `scale` and `scale_se` give the atom bound `K n̂(E0) |I|`.
pub fn fit_and_test(mu: &[u32], atoms: &AtomEstimate, scale: f64, scale_se: f64) -> Result<CompoundPoissonFit> {
    require_trials(mu.len())?;
    let fitted_mean = atoms.k_weighted_total;
    let max_obs = mu.iter().copied().max().unwrap_or(0) as usize;
    let mut cap = ((10.0 * (fitted_mean + 10.0)) as usize).max(max_obs + 1);
    let pmf = loop {
        let pmf = compound_poisson_pmf(&atoms.atoms, cap)?;
        if 1.0 - pmf.iter().sum::<f64>() <= PMF_TAIL_TOL {
            break pmf;
        }
        cap *= 2;
        if cap > PMF_CAP_LIMIT {
            return Err(Error::InvalidArgument(alloc::format!(
                "compound Poisson tail above {PMF_TAIL_TOL} at count cap {PMF_CAP_LIMIT}"
            )));
        }
    };
    let empirical = empirical_pmf(mu, cap);
    let tv_distance = total_variation(&empirical, &pmf);
    // periodic trapezoid on [-π, π): exact for the trigonometric polynomial
    // part of degree below the grid size
    let cf_distance = {
        let mut acc = 0.0;
        for j in 0..CF_GRID {
            let t = -PI + 2.0 * PI * j as f64 / CF_GRID as f64;
            let emp: Complex64 = empirical
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(n, &p)| Complex64::from_polar(p, t * n as f64))
                .sum();
            acc += (emp - compound_poisson_cf(&atoms.atoms, t)).norm_sqr();
        }
        libm::sqrt(acc / CF_GRID as f64)
    };
    let xs: Vec<f64> = mu.iter().map(|&c| c as f64).collect();
    Ok(CompoundPoissonFit {
        atoms: atoms.clone(),
        cap,
        pmf,
        empirical,
        tv_distance,
        cf_distance,
        cf_grid: CF_GRID,
        bounds: atom_bound_checks(atoms, scale, scale_se),
        fitted_mean,
        empirical_mean: mean(&xs),
        empirical_mean_se: stderr_of_mean(&xs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    pub value: f64,
    pub stderr: f64,
    /// Bootstrap 95% percentile interval.
    pub interval: (f64, f64),
}

/// Variance over mean of the counts.
pub fn dispersion_index(mu: &[u32], reps: usize, seed: u64) -> Result<Dispersion> {
    require_trials(mu.len())?;
    let xs: Vec<f64> = mu.iter().map(|&c| c as f64).collect();
    let m = mean(&xs);
    if m == 0.0 {
        return Err(Error::InsufficientData("dispersion index of all-zero counts".into()));
    }
    let stat = |idx: &[usize]| {
        let v: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
        variance(&v) / mean(&v)
    };
    let reps = bootstrap(xs.len(), reps, seed, stat);
    Ok(Dispersion {
        value: variance(&xs) / m,
        stderr: replicate_sd(&reps),
        interval: percentile_interval(&reps, 0.025),
    })
}

/// Minami allowance for the mass above the rank:
/// `Σ_x (π ‖ρ_λ‖ |Λ'(x)| |I|/|Λ|)²`.
pub fn overflow_budget(samples: &ProcessSamples, density: &DensitySpec, lambda: f64) -> f64 {
    let eff = effective_sup_norm(density, lambda);
    let w = (samples.window.1 - samples.window.0) / samples.volume as f64;
    samples
        .subtree_sizes
        .iter()
        .map(|&n| {
            let b = PI * eff * n as f64 * w;
            b * b
        })
        .sum()
}

/// `E|μ - Σ_x η_x|` with its standard error.
pub fn decomposition_defect(samples: &ProcessSamples) -> (f64, f64) {
    let d: Vec<f64> = samples.samples.iter().map(|s| s.defect() as f64).collect();
    (mean(&d), stderr_of_mean(&d))
}

/// Whether a sequence of `(value, se)` never increases by more than three
/// combined standard errors.
pub fn nonincreasing_within(seq: &[(f64, f64)]) -> bool {
    seq.windows(2)
        .all(|w| w[1].0 - w[0].0 <= 3.0 * libm::sqrt(w[0].1 * w[0].1 + w[1].1 * w[1].1))
}

/// Largest `|p̂_k(a) - p̂_k(b)|` in combined standard errors over
/// `k = 1..=rank` and the overflow bucket.
pub fn atom_drift(a: &AtomEstimate, b: &AtomEstimate) -> f64 {
    let z = |x: f64, sx: f64, y: f64, sy: f64| {
        let s = libm::sqrt(sx * sx + sy * sy);
        if s > 0.0 {
            (x - y).abs() / s
        } else if x == y {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let rank = a.rank.max(b.rank);
    let mut worst = z(a.overflow, a.overflow_se, b.overflow, b.overflow_se);
    for k in 1..=rank {
        worst = worst.max(z(a.atom(k), a.atom_se(k), b.atom(k), b.atom_se(k)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Sequential;

    fn cfg(window: (f64, f64), lambda: f64, trials: u64) -> ProcessConfig {
        ProcessConfig {
            energy: 0.0,
            window,
            alpha: 0.4,
            lambda,
            density: DensitySpec::default(),
            trials,
            seed: 5,
            bootstrap_reps: 50,
        }
    }

    fn synthetic(etas: Vec<Vec<u32>>) -> ProcessSamples {
        let n_roots = etas[0].len();
        ProcessSamples {
            depth: 5,
            volume: 94,
            split_depth: 2,
            split_depth_literal: 2,
            roots: (0..n_roots).collect(),
            subtree_sizes: vec![10; n_roots],
            energy: 0.0,
            window: (-1.0, 1.0),
            seed: 0,
            samples: etas
                .into_iter()
                .enumerate()
                .map(|(t, eta)| CountsSample {
                    trial: t as u64,
                    mu: eta.iter().sum(),
                    eta,
                })
                .collect(),
        }
    }

    #[test]
    fn split_depths() {
        assert_eq!(split_depth(5, 1, 0.4), 2);
        assert_eq!(split_depth(7, 1, 0.4), 2);
        assert_eq!(split_depth(5, 1, 0.25), 0);
        assert_eq!(split_depth(7, 0, 0.4), 2);
        assert_eq!(split_depth_literal(7, 1, 0.25), 1);
        assert_eq!(split_depth_literal(9, 0, 0.25), 2);
        assert_eq!(default_depths(0), vec![4, 5, 6, 7]);
        assert_eq!(default_depths(2), vec![8, 10, 12, 14]);
    }

    #[test]
    fn config_rejects_bad_alpha_and_window() {
        let mut c = cfg((0.0, 1.0), 1.0, 1);
        c.alpha = 0.5;
        assert!(c.validate().is_err());
        c.alpha = 0.2;
        c.window = (1.0, 0.0);
        assert!(matches!(c.validate(), Err(Error::InvalidInterval(..))));
    }

    #[test]
    fn empty_window_counts_nothing() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let c = cfg((0.3, 0.3), 1.0, 5);
        assert!(sample_mu(&Sequential, &g, &c).unwrap().iter().all(|s| s.mu == 0));
        let e = sample_eta(&Sequential, &g, &c).unwrap();
        assert!(e.samples.iter().all(|s| s.mu == 0 && s.eta.iter().all(|&x| x == 0)));
    }

    #[test]
    fn full_window_counts_everything() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let n = g.n_vertices() as f64;
        let lambda = 3.0;
        // Gershgorin: spectrum inside [-(K+1), λ + K + 1]
        let c = cfg((-n * 3.5, n * (lambda + 3.5)), lambda, 4);
        for s in sample_mu(&Sequential, &g, &c).unwrap() {
            assert_eq!(s.mu as usize, g.n_vertices());
        }
        let e = sample_eta(&Sequential, &g, &c).unwrap();
        for s in &e.samples {
            assert_eq!(s.mu as usize, g.n_vertices());
            let per: Vec<u32> = e.subtree_sizes.iter().map(|&x| x as u32).collect();
            assert_eq!(s.eta, per);
        }
    }

    #[test]
    fn paired_mu_matches_direct_count() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let c = cfg((-20.0, 30.0), 2.0, 30);
        let direct = sample_mu(&Sequential, &g, &c).unwrap();
        let paired = sample_eta(&Sequential, &g, &c).unwrap();
        assert_eq!(paired.roots.len(), 6);
        assert_eq!(paired.split_depth, 2);
        for (d, p) in direct.iter().zip(&paired.samples) {
            assert_eq!(d.mu, p.mu);
        }
    }

    #[test]
    fn rescaling_covariance() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let n = g.n_vertices() as f64;
        let base = cfg((-15.0, 25.0), 2.0, 20);
        let a = sample_mu(&Sequential, &g, &base).unwrap();
        for c in [0.5, -3.0, 7.25] {
            let shifted = ProcessConfig {
                energy: base.energy - c / n,
                window: (base.window.0 + c, base.window.1 + c),
                ..base.clone()
            };
            let b = sample_mu(&Sequential, &g, &shifted).unwrap();
            assert_eq!(a, b, "shift {c}");
        }
    }

    #[test]
    fn split_must_respect_blocks_and_depth() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let mut c = cfg((0.0, 1.0), 1.0, 1);
        c.alpha = 0.25;
        assert!(matches!(sample_eta(&Sequential, &g, &c), Err(Error::InvalidParams(_))));
        let canopy = Geometry::canopy(2, 1, 5).unwrap();
        c.alpha = 0.4;
        assert!(matches!(sample_eta(&Sequential, &canopy, &c), Err(Error::WrongTreeKind)));
        assert!(check_split(&g, 1).is_err());
        assert!(check_split(&g, 3).is_err());
        assert!(check_split(&g, 4).is_ok());
        assert!(check_split(&g, 5).is_err());
    }

    #[test]
    fn atoms_of_zero_counts_vanish() {
        let s = synthetic(vec![vec![0; 6]; 1000]);
        let a = estimate_atoms(&s, 3, 20, 1).unwrap();
        assert_eq!(a.atoms, vec![0.0; 3]);
        assert_eq!(a.overflow, 0.0);
        assert_eq!(a.k_weighted_total, 0.0);
        let fit = fit_and_test(&s.mu(), &a, 1.0, 0.0).unwrap();
        assert!(fit.tv_distance < 1e-12);
        assert!(estimate_atoms(&synthetic(vec![vec![0; 6]; 999]), 3, 20, 1).is_err());
    }

    #[test]
    fn atoms_count_roots_by_size() {
        let mut etas = vec![vec![0u32; 4]; 1000];
        etas[0] = vec![1, 0, 2, 0];
        etas[1] = vec![5, 1, 0, 0];
        let a = estimate_atoms(&synthetic(etas), 2, 20, 1).unwrap();
        assert_eq!(a.atoms.len(), 5);
        assert!((a.atom(1) - 2e-3).abs() < 1e-15);
        assert!((a.atom(2) - 1e-3).abs() < 1e-15);
        assert!((a.overflow - 1e-3).abs() < 1e-15);
        assert!((a.k_weighted_total - 9e-3).abs() < 1e-15);
    }

    #[test]
    fn delta_law_tv_is_nonzero_mass() {
        let mut mu = vec![0u32; 1000];
        mu[..37].iter_mut().for_each(|c| *c = 2);
        let a = AtomEstimate {
            rank: 3,
            atoms: vec![0.0; 3],
            atoms_se: vec![0.0; 3],
            overflow: 0.0,
            overflow_se: 0.0,
            k_weighted_total: 0.0,
            trials: 1000,
        };
        let fit = fit_and_test(&mu, &a, 1.0, 0.0).unwrap();
        assert!((fit.tv_distance - 0.037).abs() < 1e-12);
    }

    #[test]
    fn single_atom_is_poisson() {
        let p = 1.7f64;
        let pmf = compound_poisson_pmf(&[p], 40).unwrap();
        let mut term = (-p).exp();
        for (n, &q) in pmf.iter().enumerate() {
            if n > 0 {
                term *= p / n as f64;
            }
            assert!((q - term).abs() < 1e-15, "n = {n}");
        }
    }

    #[test]
    fn pmf_matches_convolution_of_poissons() {
        // independent Poisson(p_k) jump counts, convolved directly
        let atoms = [0.4, 0.25, 0.1];
        let cap = 30;
        let poisson = |p: f64| {
            let mut v = vec![0.0; cap + 1];
            v[0] = (-p).exp();
            for n in 1..=cap {
                v[n] = v[n - 1] * p / n as f64;
            }
            v
        };
        let mut law = vec![0.0; cap + 1];
        law[0] = 1.0;
        for (i, &p) in atoms.iter().enumerate() {
            let k = i + 1;
            let jumps = poisson(p);
            let mut next = vec![0.0; cap + 1];
            for (m, &q) in law.iter().enumerate() {
                for (j, &r) in jumps.iter().enumerate() {
                    if m + k * j <= cap {
                        next[m + k * j] += q * r;
                    }
                }
            }
            law = next;
        }
        let pmf = compound_poisson_pmf(&atoms, cap).unwrap();
        for n in 0..=cap {
            assert!((pmf[n] - law[n]).abs() < 1e-14);
        }
        let m: f64 = pmf.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        assert!((m - (0.4 + 0.5 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn cf_distance_satisfies_parseval() {
        let mut mu = vec![0u32; 1000];
        for (i, c) in mu.iter_mut().enumerate() {
            *c = [0, 0, 1, 0, 2, 1, 0, 3][i % 8];
        }
        let a = AtomEstimate {
            rank: 2,
            atoms: vec![0.5, 0.2],
            atoms_se: vec![0.01, 0.01],
            overflow: 0.0,
            overflow_se: 0.0,
            k_weighted_total: 0.9,
            trials: 1000,
        };
        let fit = fit_and_test(&mu, &a, 1.0, 0.0).unwrap();
        let l2: f64 = fit
            .empirical
            .iter()
            .zip(&fit.pmf)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        assert!((fit.cf_distance - l2).abs() < 1e-9, "{} vs {l2}", fit.cf_distance);
        assert!((fit.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(fit.bounds_ok());
    }

    #[test]
    fn atom_bound_uses_combined_error() {
        let a = AtomEstimate {
            rank: 2,
            atoms: vec![1.0, 0.6],
            atoms_se: vec![0.0, 0.03],
            overflow: 0.0,
            overflow_se: 0.0,
            k_weighted_total: 2.2,
            trials: 1000,
        };
        let checks = atom_bound_checks(&a, 1.0, 0.0);
        assert!(checks[0].pass);
        // 0.6 - 0.5 = 0.1 > 3·0.03
        assert!(!checks[1].pass);
        assert!(atom_bound_checks(&a, 1.0, 0.1)[1].pass);
    }

    #[test]
    fn dispersion_edge_cases() {
        let constant = vec![3u32; 1000];
        let d = dispersion_index(&constant, 50, 1).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(dispersion_index(&[0u32; 1000], 50, 1).is_err());
        assert!(dispersion_index(&[1u32; 10], 50, 1).is_err());
    }

    #[test]
    fn dispersion_of_poisson_draws_is_one() {
        use rand::Rng;
        let mut rng = crate::disorder::trial_rng(3, 0);
        // Poisson(2) by inversion
        let mu: Vec<u32> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.gen();
                let (mut n, mut p) = (0u32, (-2.0f64).exp());
                let mut c = p;
                while u > c {
                    n += 1;
                    p *= 2.0 / n as f64;
                    c += p;
                }
                n
            })
            .collect();
        let d = dispersion_index(&mu, 200, 2).unwrap();
        assert!((d.value - 1.0).abs() < 3.0 * d.stderr, "{d:?}");
        assert!(d.interval.0 < 1.0 && 1.0 < d.interval.1);
    }

    #[test]
    fn defect_and_drift_helpers() {
        let mut s = synthetic(vec![vec![1, 0]; 1000]);
        s.samples[0].mu = 3;
        let (d, _) = decomposition_defect(&s);
        assert!((d - 2e-3).abs() < 1e-15);
        assert!(nonincreasing_within(&[(1.0, 0.1), (0.8, 0.1), (0.9, 0.1)]));
        assert!(!nonincreasing_within(&[(0.1, 0.01), (0.5, 0.01)]));
        let a = estimate_atoms(&s, 1, 20, 1).unwrap();
        assert_eq!(atom_drift(&a, &a), 0.0);
        let budget = overflow_budget(&s, &DensitySpec::default(), 1.0);
        let one = PI * 10.0 * 2.0 / 94.0;
        assert!((budget - 2.0 * one * one).abs() < 1e-12);
    }

    #[test]
    fn strong_disorder_tiny_window_is_empty() {
        let g = Geometry::bethe(2, 1, 5).unwrap();
        let mut c = cfg((0.0, 1e-9), 1e6, 50);
        c.energy = -2.0e5;
        let e = sample_eta(&Sequential, &g, &c).unwrap();
        assert!(e.samples.iter().all(|s| s.mu == 0 && s.eta_total() == 0));
    }
}
