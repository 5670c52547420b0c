//! Green functions `G(x,y;z) = <δ_x, (H-z)^{-1} δ_y>`.
//!
//! Three independent routes: dense LU (the oracle), the block Schur recursion
//! over a strict tiling, and the scalar two-sweep recursion for all diagonal
//! entries of a forest operator.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::disorder::{sample_disorder, DensitySpec};
use crate::hamiltonian::{assemble, HamiltonianSpec, SparseSymmetricOperator, DENSE_CAP};
use crate::linalg::{symmetric_eigenvalues, ComplexLu, Matrix};
use crate::runner::TrialRunner;
use crate::stats::{bootstrap, replicate_sd, stderr_of_mean, weighted_line_fit, LineFit};
use crate::tree::{dist, BlockTiling, TreeIndex, NO_PARENT};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `z = E + iε` with `ε > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParameter(Complex64);

impl SpectralParameter {
    pub fn new(energy: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite() && energy.is_finite()) {
            return Err(Error::RealSpectralParameter(epsilon));
        }
        Ok(SpectralParameter(Complex64::new(energy, epsilon)))
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub fn z(&self) -> Complex64 {
        self.0
    }

    pub fn energy(&self) -> f64 {
        self.0.re
    }

    pub fn epsilon(&self) -> f64 {
        self.0.im
    }
}

fn shifted_dense(op: &SparseSymmetricOperator, z: SpectralParameter) -> Result<Matrix<Complex64>> {
    let mut m = op.dense(DENSE_CAP)?.to_complex();
    for i in 0..op.dim() {
        m[(i, i)] -= z.z();
    }
    Ok(m)
}

/// Solves `(H - z) u = δ_y` densely and returns `u[x]`.
pub fn green_dense_oracle(
    op: &SparseSymmetricOperator,
    z: SpectralParameter,
    x: usize,
    y: usize,
) -> Result<Complex64> {
    let n = op.dim();
    for v in [x, y] {
        if v >= n {
            return Err(Error::VertexOutOfRange(v, n));
        }
    }
    let lu = ComplexLu::factor(shifted_dense(op, z)?)?;
    let mut rhs = vec![ZERO; n];
    rhs[y] = ONE;
    Ok(lu.solve(&rhs)?[x])
}

/// The full dense resolvent.
pub fn green_dense_matrix(op: &SparseSymmetricOperator, z: SpectralParameter) -> Result<Matrix<Complex64>> {
    Ok(ComplexLu::factor(shifted_dense(op, z)?)?.inverse())
}

/// `P_p (H-z)^{-1} P_p` for one block, indexed by block members in the
/// tiling's member order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGreen {
    pub head: usize,
    pub members: Vec<usize>,
    pub entries: Matrix<Complex64>,
}

impl BlockGreen {
    fn local(&self, v: usize) -> Option<usize> {
        self.members.iter().position(|&m| m == v)
    }

    pub fn entry(&self, x: usize, y: usize) -> Option<Complex64> {
        Some(self.entries[(self.local(x)?, self.local(y)?)])
    }

    /// Smallest eigenvalue of `(G - G*)/(2i)`.
    pub fn min_imaginary_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_imaginary_part_eigenvalues(&self.entries)?[0])
    }
}

/// Eigenvalues of `(A - A*)/(2i)` via the real symmetric embedding of a
/// Hermitian matrix (each eigenvalue appears twice).
pub fn hermitian_imaginary_part_eigenvalues(a: &Matrix<Complex64>) -> Result<Vec<f64>> {
    let n = a.rows();
    let im = Matrix::from_fn(n, n, |j, k| {
        (a[(j, k)] - a[(k, j)].conj()) / Complex64::new(0.0, 2.0)
    });
    let emb = Matrix::from_fn(2 * n, 2 * n, |r, c| {
        let v = im[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    let ev = symmetric_eigenvalues(&emb)?;
    Ok(ev.into_iter().step_by(2).collect())
}

/// One factor `Γ` of a path product: the entry between the vertex where the
/// path enters a block and the vertex where it leaves it, in the operator
/// with everything behind the entry point cut away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFactor {
    pub block: usize,
    pub source: usize,
    pub target: usize,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathGreen {
    pub value: Complex64,
    /// Empty when both ends lie in one block and the value is a block entry.
    pub factors: Vec<GammaFactor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cut {
    None,
    /// The edge from the head to its parent.
    Parent,
    /// The edge into the given child block.
    ChildBlock(usize),
}

/// Block Schur recursion on a strict tiling.
///
/// `down[b]` is the head diagonal of the forward sub-tree below and
/// including block `b`, detached from its parent; `up[b]` is the diagonal at
/// the parent of the head of `b` in the component left after cutting that
/// edge.
#[derive(Debug, Clone)]
pub struct BlockResolvent<'a> {
    tree: &'a TreeIndex,
    tiling: &'a BlockTiling,
    potential: &'a [f64],
    z: SpectralParameter,
    down: Vec<Complex64>,
    up: Vec<Complex64>,
}

impl<'a> BlockResolvent<'a> {
    pub fn new(
        tree: &'a TreeIndex,
        tiling: &'a BlockTiling,
        op: &'a SparseSymmetricOperator,
        z: SpectralParameter,
    ) -> Result<Self> {
        if !tiling.is_strict() {
            return Err(Error::NonStrictTiling);
        }
        if op.dim() != tree.n_vertices() || tiling.block_map().len() != tree.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: tree.n_vertices(),
                got: op.dim(),
            });
        }
        if op.parents() != tree.parents() {
            return Err(Error::Inconsistent("operator edges differ from the tree".into()));
        }
        let nb = tiling.n_blocks();
        let mut r = BlockResolvent {
            tree,
            tiling,
            potential: op.potential(),
            z,
            down: vec![ZERO; nb],
            up: vec![ZERO; nb],
        };
        // child blocks always carry larger ordinals than their parent block
        for b in (0..nb).rev() {
            let h = tiling.head(b);
            let lu = ComplexLu::factor(r.block_matrix(b, Cut::Parent))?;
            let local_h = 0;
            debug_assert_eq!(tiling.members(b)[0], h);
            r.down[b] = r.solve_entry(&lu, b, local_h, local_h)?;
        }
        for b in 0..nb {
            let children = r.child_blocks(b);
            if children.is_empty() {
                continue;
            }
            let g = ComplexLu::factor(r.block_matrix(b, Cut::None))?.inverse();
            for c in children {
                let p = tree.parents()[tiling.head(c)];
                let lp = r.local(b, p);
                let gpp = g[(lp, lp)];
                r.up[c] = ONE / (ONE / gpp + r.down[c]);
            }
        }
        Ok(r)
    }

    pub fn z(&self) -> SpectralParameter {
        self.z
    }

    fn local(&self, b: usize, v: usize) -> usize {
        self.tiling
            .members(b)
            .iter()
            .position(|&m| m == v)
            .expect("vertex belongs to block")
    }

    fn child_blocks(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &v in self.tiling.members(b) {
            for c in self.tree.children(v) {
                if self.tiling.block_of(c) != b {
                    out.push(self.tiling.block_of(c));
                }
            }
        }
        out
    }

    /// `H_b - z - D` with the boundary couplings of every detached component
    /// except the one behind `cut`.
    fn block_matrix(&self, b: usize, cut: Cut) -> Matrix<Complex64> {
        let members = self.tiling.members(b);
        let m = members.len();
        let z = self.z.z();
        let mut s = Matrix::zeros(m, m);
        for (i, &v) in members.iter().enumerate() {
            let mut d = Complex64::new(self.potential[v], 0.0) - z;
            if i == 0 && cut != Cut::Parent {
                d -= self.up[b];
            }
            for c in self.tree.children(v) {
                let cb = self.tiling.block_of(c);
                if cb != b {
                    if cut != Cut::ChildBlock(cb) {
                        d -= self.down[cb];
                    }
                } else {
                    let j = self.local(b, c);
                    s[(i, j)] = ONE;
                    s[(j, i)] = ONE;
                }
            }
            s[(i, i)] = d;
        }
        s
    }

    fn solve_entry(&self, lu: &ComplexLu, b: usize, i: usize, j: usize) -> Result<Complex64> {
        let mut rhs = vec![ZERO; self.tiling.members(b).len()];
        rhs[j] = ONE;
        Ok(lu.solve(&rhs)?[i])
    }

    /// Head diagonal of every detached forward sub-tree, keyed by its head.
    pub fn subtree_boundary_green(&self) -> BTreeMap<usize, Complex64> {
        (1..self.tiling.n_blocks())
            .filter(|&b| self.tree.parent(self.tiling.head(b)).is_some())
            .map(|b| (self.tiling.head(b), self.down[b]))
            .collect()
    }

    pub fn down(&self, b: usize) -> Complex64 {
        self.down[b]
    }

    pub fn up(&self, b: usize) -> Complex64 {
        self.up[b]
    }

    /// `P_p (H-z)^{-1} P_p` for the block whose head is `head`.
    pub fn block_green(&self, head: usize) -> Result<BlockGreen> {
        self.tree.check(head)?;
        let b = self.tiling.block_of(head);
        if self.tiling.head(b) != head {
            return Err(Error::InvalidArgument(alloc::format!("vertex {head} is not a block head")));
        }
        let entries = ComplexLu::factor(self.block_matrix(b, Cut::None))?.inverse();
        Ok(BlockGreen {
            head,
            members: self.tiling.members(b).to_vec(),
            entries,
        })
    }

    /// `G(x,y)` as a signed product of one `Γ` factor per block crossed by
    /// the path. Each hop between blocks contributes a factor `-1` (unit
    /// hopping).
    pub fn path_green_product(&self, x: usize, y: usize) -> Result<PathGreen> {
        self.tree.check(x)?;
        self.tree.check(y)?;
        let bx = self.tiling.block_of(x);
        if bx == self.tiling.block_of(y) {
            let g = self.block_green(self.tiling.head(bx))?;
            return Ok(PathGreen {
                value: g.entry(x, y).expect("same block"),
                factors: Vec::new(),
            });
        }
        let path = self.tree.path(x, y)?;
        let mut factors = Vec::new();
        let mut value = ONE;
        let mut start = 0;
        while start < path.len() {
            let b = self.tiling.block_of(path[start]);
            let mut end = start;
            while end + 1 < path.len() && self.tiling.block_of(path[end + 1]) == b {
                end += 1;
            }
            let (entry, exit) = (path[start], path[end]);
            let cut = if start == 0 {
                Cut::None
            } else {
                let prev = path[start - 1];
                if self.tree.parents()[entry] == prev {
                    Cut::Parent
                } else {
                    Cut::ChildBlock(self.tiling.block_of(prev))
                }
            };
            let lu = ComplexLu::factor(self.block_matrix(b, cut))?;
            let g = self.solve_entry(&lu, b, self.local(b, entry), self.local(b, exit))?;
            if start > 0 {
                value = -value;
            }
            value *= g;
            factors.push(GammaFactor {
                block: b,
                source: entry,
                target: exit,
                value: g,
            });
            start = end + 1;
        }
        Ok(PathGreen { value, factors })
    }
}

pub fn subtree_boundary_green(
    tree: &TreeIndex,
    tiling: &BlockTiling,
    op: &SparseSymmetricOperator,
    z: SpectralParameter,
) -> Result<BTreeMap<usize, Complex64>> {
    Ok(BlockResolvent::new(tree, tiling, op, z)?.subtree_boundary_green())
}

pub fn block_schur_green(
    tree: &TreeIndex,
    tiling: &BlockTiling,
    op: &SparseSymmetricOperator,
    z: SpectralParameter,
    head: usize,
) -> Result<BlockGreen> {
    BlockResolvent::new(tree, tiling, op, z)?.block_green(head)
}

pub fn path_green_product(
    tree: &TreeIndex,
    tiling: &BlockTiling,
    op: &SparseSymmetricOperator,
    z: SpectralParameter,
    x: usize,
    y: usize,
) -> Result<PathGreen> {
    BlockResolvent::new(tree, tiling, op, z)?.path_green_product(x, y)
}

/// Children lists of a forest operator, built once and reused across many
/// spectral parameters.
#[derive(Debug, Clone)]
pub struct ForestSweep {
    parent: Vec<usize>,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
    below: Vec<Complex64>,
    acc: Vec<Complex64>,
    above: Vec<Complex64>,
}

impl ForestSweep {
    pub fn new(op: &SparseSymmetricOperator) -> Self {
        let n = op.dim();
        let parent = op.parents().to_vec();
        let mut count = vec![0usize; n + 1];
        for &p in &parent {
            if p != NO_PARENT {
                count[p + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let child_start = count.clone();
        let mut fill = count;
        let mut child_list = vec![0; child_start[n]];
        for (v, &p) in parent.iter().enumerate() {
            if p != NO_PARENT {
                child_list[fill[p]] = v;
                fill[p] += 1;
            }
        }
        ForestSweep {
            parent,
            child_start,
            child_list,
            below: vec![ZERO; n],
            acc: vec![ZERO; n],
            above: vec![ZERO; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.parent.len()
    }

    fn children(&self, v: usize) -> &[usize] {
        &self.child_list[self.child_start[v]..self.child_start[v + 1]]
    }

    /// `G(v,v;z)` for every vertex, written into `out`.
    pub fn diagonal(&mut self, potential: &[f64], z: Complex64, out: &mut [Complex64]) -> Result<()> {
        let n = self.dim();
        if potential.len() != n || out.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: potential.len().min(out.len()),
            });
        }
        for v in (0..n).rev() {
            let mut a = ZERO;
            for &c in self.children(v) {
                a += self.below[c];
            }
            self.acc[v] = a;
            self.below[v] = ONE / (Complex64::new(potential[v], 0.0) - z - a);
        }
        for v in 0..n {
            let p = self.parent[v];
            self.above[v] = if p == NO_PARENT {
                ZERO
            } else {
                // siblings summed directly; subtracting from acc[p] loses
                // accuracy near resonances
                let mut sib = ZERO;
                for &c in self.children(p) {
                    if c != v {
                        sib += self.below[c];
                    }
                }
                ONE / (Complex64::new(potential[p], 0.0) - z - sib - self.above[p])
            };
            out[v] = ONE / (Complex64::new(potential[v], 0.0) - z - self.acc[v] - self.above[v]);
        }
        Ok(())
    }
}

/// All diagonal entries `G(v,v;z)` in O(n).
pub fn diagonal_green(op: &SparseSymmetricOperator, z: SpectralParameter) -> Result<Vec<Complex64>> {
    let mut out = vec![ZERO; op.dim()];
    ForestSweep::new(op).diagonal(op.potential(), z.z(), &mut out)?;
    Ok(out)
}

/// `(0, y_d)` with `y_d` the first vertex at each level `d = 0..=height`.
pub fn root_pairs(tree: &TreeIndex) -> Vec<(usize, usize)> {
    (0..=tree.height()).map(|d| (0, tree.level_range(d).start)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracMomentConfig {
    pub s: f64,
    pub energy: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub density: DensitySpec,
    pub trials: u64,
    pub seed: u64,
    pub bootstrap_reps: usize,
}

impl FracMomentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidArgument(alloc::format!("moment exponent {} not in (0,1)", self.s)));
        }
        if self.trials < 1 {
            return Err(Error::InsufficientData("at least one trial".into()));
        }
        SpectralParameter::new(self.energy, self.epsilon)?;
        self.density.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceMoment {
    pub distance: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FracMomentEstimate {
    pub s: f64,
    pub energy: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub trials: u64,
    pub groups: Vec<DistanceMoment>,
    /// Decay rate: minus the fitted slope of `ln E|G|^s` against distance.
    pub gamma_hat: f64,
    /// Bootstrap standard error of `gamma_hat` over trials.
    pub gamma_stderr: f64,
    pub intercept: f64,
    pub fit: LineFit,
    pub root_block_size: usize,
    pub common_block_size: usize,
}

/// `|G(x,y;E+iε)|^s` for each pair, on one realization.
pub fn fractional_moment_trial(
    tree: &TreeIndex,
    tiling: &BlockTiling,
    op: &SparseSymmetricOperator,
    z: SpectralParameter,
    s: f64,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let r = BlockResolvent::new(tree, tiling, op, z)?;
    pairs
        .iter()
        .map(|&(x, y)| Ok(libm::pow(r.path_green_product(x, y)?.value.norm(), s)))
        .collect()
}

pub fn fractional_moment_estimate<R: TrialRunner>(
    runner: &R,
    tree: &TreeIndex,
    tiling: &BlockTiling,
    cfg: &FracMomentConfig,
    pairs: &[(usize, usize)],
) -> Result<FracMomentEstimate> {
    cfg.validate()?;
    let z = SpectralParameter::new(cfg.energy, cfg.epsilon)?;
    let mut group_of = Vec::with_capacity(pairs.len());
    let mut distances: Vec<usize> = Vec::new();
    for &(x, y) in pairs {
        let d = dist(tree, x, y)?;
        let g = match distances.iter().position(|&e| e == d) {
            Some(g) => g,
            None => {
                distances.push(d);
                distances.len() - 1
            }
        };
        group_of.push(g);
    }
    if distances.len() < 2 {
        return Err(Error::InsufficientData("need at least two distance groups".into()));
    }
    let ng = distances.len();

    let per_trial: Vec<Vec<f64>> = runner.run(cfg.trials, |t| {
        let dis = sample_disorder(&cfg.density, tiling.n_blocks(), cfg.seed, t)?;
        let op = assemble(&HamiltonianSpec {
            tree,
            tiling,
            lambda: cfg.lambda,
            disorder: &dis,
        })?;
        let vals = fractional_moment_trial(tree, tiling, &op, z, cfg.s, pairs)?;
        // average pairs within each distance group
        let mut sum = vec![0.0; ng];
        let mut cnt = vec![0usize; ng];
        for (v, &g) in vals.iter().zip(&group_of) {
            sum[g] += v;
            cnt[g] += 1;
        }
        Ok(sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect())
    })?;

    let n_per_group: Vec<usize> = (0..ng).map(|g| group_of.iter().filter(|&&h| h == g).count()).collect();
    let mut groups: Vec<DistanceMoment> = (0..ng)
        .map(|g| {
            let col: Vec<f64> = per_trial.iter().map(|r| r[g]).collect();
            DistanceMoment {
                distance: distances[g],
                mean: col.iter().sum::<f64>() / col.len() as f64,
                stderr: stderr_of_mean(&col),
                n_samples: col.len() * n_per_group[g],
            }
        })
        .collect();
    groups.sort_by_key(|g| g.distance);
    let order: Vec<usize> = {
        let mut o: Vec<usize> = (0..ng).collect();
        o.sort_by_key(|&g| distances[g]);
        o
    };

    let xs: Vec<f64> = groups.iter().map(|g| g.distance as f64).collect();
    let ys: Vec<f64> = groups.iter().map(|g| libm::log(g.mean)).collect();
    let any_zero_se = groups.iter().any(|g| g.stderr <= 1e-12 * g.mean);
    let ws: Vec<f64> = groups
        .iter()
        .map(|g| if any_zero_se { 1.0 } else { (g.mean / g.stderr) * (g.mean / g.stderr) })
        .collect();
    let fit = weighted_line_fit(&xs, &ys, &ws)?;

    let n = per_trial.len();
    let reps = bootstrap(n, cfg.bootstrap_reps, cfg.seed ^ 0x6672_6163_6d6f_6d, |idx| {
        let ys: Vec<f64> = order
            .iter()
            .map(|&g| libm::log(idx.iter().map(|&i| per_trial[i][g]).sum::<f64>() / idx.len() as f64))
            .collect();
        weighted_line_fit(&xs, &ys, &ws).map(|f| -f.slope).unwrap_or(f64::NAN)
    });
    let gamma_stderr = if cfg.bootstrap_reps >= 2 { replicate_sd(&reps) } else { fit.slope_se };

    let m0 = tiling.block_radius();
    let k = tree.branching();
    Ok(FracMomentEstimate {
        s: cfg.s,
        energy: cfg.energy,
        epsilon: cfg.epsilon,
        lambda: cfg.lambda,
        trials: cfg.trials,
        groups,
        gamma_hat: -fit.slope,
        gamma_stderr,
        intercept: fit.intercept,
        fit,
        root_block_size: tiling.members(0).len(),
        common_block_size: (libm::pow(k as f64, (m0 + 1) as f64) as usize - 1) / (k - 1),
    })
}
