//! Tree adjacency plus block-constant random potential.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::disorder::{sample_disorder, DensitySpec, DisorderSample};
use crate::linalg::Matrix;
use crate::tree::{
    block_tiling, build_bethe_truncation, build_canopy_truncation, BlockTiling, TilingMode, TreeIndex,
    TreeParams, NO_PARENT,
};
use crate::{Error, Result};

/// Default ceiling on dense materialization.
pub const DENSE_CAP: usize = 5000;

#[derive(Debug, Clone, Copy)]
pub struct HamiltonianSpec<'a> {
    pub tree: &'a TreeIndex,
    pub tiling: &'a BlockTiling,
    pub lambda: f64,
    pub disorder: &'a DisorderSample,
}

impl HamiltonianSpec<'_> {
    pub fn validate(&self) -> Result<()> {
        let n = self.tree.n_vertices();
        if self.tiling.block_map().len() != n {
            return Err(Error::Inconsistent(format!(
                "tiling covers {} vertices, tree has {n}",
                self.tiling.block_map().len()
            )));
        }
        if self.disorder.len() != self.tiling.n_blocks() {
            return Err(Error::Inconsistent(format!(
                "{} couplings for {} blocks",
                self.disorder.len(),
                self.tiling.n_blocks()
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Inconsistent(format!("coupling strength {}", self.lambda)));
        }
        Ok(())
    }
}

/// Symmetric operator on a forest with unit hopping along every parent edge.
///
/// Vertices are topologically ordered: `parent[v] < v` whenever the parent
/// exists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricOperator {
    potential: Vec<f64>,
    parent: Vec<usize>,
}

pub fn assemble(spec: &HamiltonianSpec<'_>) -> Result<SparseSymmetricOperator> {
    spec.validate()?;
    let potential = spec
        .tiling
        .block_map()
        .iter()
        .map(|&b| spec.lambda * spec.disorder.values[b])
        .collect();
    Ok(SparseSymmetricOperator {
        potential,
        parent: spec.tree.parents().to_vec(),
    })
}

impl SparseSymmetricOperator {
    pub fn from_parts(potential: Vec<f64>, parent: Vec<usize>) -> Result<Self> {
        if potential.len() != parent.len() {
            return Err(Error::DimensionMismatch {
                expected: potential.len(),
                got: parent.len(),
            });
        }
        for (v, &p) in parent.iter().enumerate() {
            if p != NO_PARENT && p >= v {
                return Err(Error::Inconsistent(format!("parent {p} of vertex {v} is not earlier")));
            }
        }
        Ok(SparseSymmetricOperator { potential, parent })
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Undirected edges `(parent, child)` in child order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != NO_PARENT)
            .map(|(v, &p)| (p, v))
    }

    pub fn n_edges(&self) -> usize {
        self.parent.iter().filter(|&&p| p != NO_PARENT).count()
    }

    /// Same diagonal, every edge removed.
    pub fn without_edges(&self) -> Self {
        SparseSymmetricOperator {
            potential: self.potential.clone(),
            parent: alloc::vec![NO_PARENT; self.dim()],
        }
    }

    /// Drops the edge between `v` and its parent.
    pub fn detach(&mut self, v: usize) {
        self.parent[v] = NO_PARENT;
    }

    /// Adds `shift` to the potential of each listed vertex.
    pub fn shift_potential(&mut self, vertices: &[usize], shift: f64) {
        for &v in vertices {
            self.potential[v] += shift;
        }
    }

    pub fn trace(&self) -> f64 {
        self.potential.iter().sum()
    }

    pub fn apply(&self, psi: &[Complex64]) -> Result<alloc::vec::Vec<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.len(),
            });
        }
        let mut out: Vec<Complex64> = psi.iter().zip(&self.potential).map(|(x, &v)| x * v).collect();
        for (v, &p) in self.parent.iter().enumerate() {
            if p != NO_PARENT {
                out[v] += psi[p];
                out[p] += psi[v];
            }
        }
        Ok(out)
    }

    pub fn apply_real(&self, psi: &[f64]) -> Result<Vec<f64>> {
        if psi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.len(),
            });
        }
        let mut out: Vec<f64> = psi.iter().zip(&self.potential).map(|(x, v)| x * v).collect();
        for (v, &p) in self.parent.iter().enumerate() {
            if p != NO_PARENT {
                out[v] += psi[p];
                out[p] += psi[v];
            }
        }
        Ok(out)
    }

    pub fn dense(&self, cap: usize) -> Result<Matrix<f64>> {
        let n = self.dim();
        if n > cap {
            return Err(Error::DenseCapExceeded { n, cap });
        }
        let mut m = Matrix::zeros(n, n);
        for (v, &x) in self.potential.iter().enumerate() {
            m[(v, v)] = x;
        }
        for (p, v) in self.edges() {
            m[(p, v)] = 1.0;
            m[(v, p)] = 1.0;
        }
        Ok(m)
    }

    /// Principal restriction to an ascending vertex list; vertex `i` of the
    /// result is `vertices[i]`.
    pub fn restrict(&self, vertices: &[usize]) -> Result<Self> {
        let mut local = alloc::collections::BTreeMap::new();
        for (i, &v) in vertices.iter().enumerate() {
            if v >= self.dim() {
                return Err(Error::VertexOutOfRange(v, self.dim()));
            }
            if i > 0 && vertices[i - 1] >= v {
                return Err(Error::InvalidArgument("restriction set must be ascending".into()));
            }
            local.insert(v, i);
        }
        let potential = vertices.iter().map(|&v| self.potential[v]).collect();
        let parent = vertices
            .iter()
            .map(|&v| {
                let p = self.parent[v];
                if p == NO_PARENT {
                    NO_PARENT
                } else {
                    local.get(&p).copied().unwrap_or(NO_PARENT)
                }
            })
            .collect();
        Ok(SparseSymmetricOperator { potential, parent })
    }
}

/// A tree with its block tiling; strict whenever the depth allows it,
/// clipped otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Geometry {
    pub tree: TreeIndex,
    pub tiling: BlockTiling,
}

impl Geometry {
    pub fn bethe(branching: usize, block_radius: usize, depth: usize) -> Result<Self> {
        let params = TreeParams::new(branching, block_radius, depth)?;
        let tree = build_bethe_truncation(&params)?;
        Self::tile(tree, block_radius)
    }

    pub fn canopy(branching: usize, block_radius: usize, top_distance: usize) -> Result<Self> {
        let params = TreeParams::new(branching, block_radius, top_distance)?;
        let tree = build_canopy_truncation(&params, top_distance)?;
        Self::tile(tree, block_radius)
    }

    fn tile(tree: TreeIndex, m0: usize) -> Result<Self> {
        let tiling = match block_tiling(&tree, m0, TilingMode::Strict) {
            Ok(t) => t,
            Err(Error::TilingCongruence { .. }) => block_tiling(&tree, m0, TilingMode::Clipped)?,
            Err(e) => return Err(e),
        };
        Ok(Geometry { tree, tiling })
    }

    pub fn n_vertices(&self) -> usize {
        self.tree.n_vertices()
    }

    /// `(K^{m0+1} - 1)/(K - 1)`.
    pub fn common_rank(&self) -> usize {
        let k = self.tree.branching();
        (0..=self.tiling.block_radius()).map(|i| k.pow(i as u32)).sum()
    }

    pub fn operator(&self, lambda: f64, disorder: &DisorderSample) -> Result<SparseSymmetricOperator> {
        assemble(&HamiltonianSpec {
            tree: &self.tree,
            tiling: &self.tiling,
            lambda,
            disorder,
        })
    }

    /// One sampled realization.
    pub fn realize(&self, lambda: f64, density: &DensitySpec, seed: u64, trial: u64) -> Result<SparseSymmetricOperator> {
        let d = sample_disorder(density, self.tiling.n_blocks(), seed, trial)?;
        self.operator(lambda, &d)
    }
}
