//! Level-order truncations of the rooted Bethe lattice and of the canopy tree,
//! and their tilings by radius-`m0` blocks.
//!
//! Vertices are numbered breadth first from the top vertex `0`. Siblings are
//! contiguous and every level is a contiguous id range, so the children of a
//! contiguous range of vertices are again a contiguous range. Block members,
//! sub-trees and layers are all stored as unions of such ranges.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::{Error, Result};

/// Parent sentinel for the top vertex.
pub const NO_PARENT: usize = usize::MAX;

const MAX_VERTICES: usize = 1 << 26;

/// `1 + k + ... + k^(n-1)`, `None` on overflow.
fn geometric_sum(k: usize, n: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut term: usize = 1;
    for _ in 0..n {
        total = total.checked_add(term)?;
        term = term.checked_mul(k)?;
    }
    Some(total)
}

/// Number of vertices of the Bethe truncation `Λ_L`: `1 + (K+1)(K^L-1)/(K-1)`.
pub fn bethe_volume(branching: usize, depth: usize) -> Option<usize> {
    geometric_sum(branching, depth)?
        .checked_mul(branching + 1)?
        .checked_add(1)
}

/// Number of vertices of the canopy ball of boundary distance `d`:
/// `(K^(d+1)-1)/(K-1)`.
pub fn canopy_volume(branching: usize, top_distance: usize) -> Option<usize> {
    geometric_sum(branching, top_distance + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Branching number `K`; every Bethe vertex has `K + 1` neighbours.
    pub branching: usize,
    /// Block radius `m0`.
    pub block_radius: usize,
    /// Truncation depth `L`.
    pub depth: usize,
}

impl TreeParams {
    pub fn new(branching: usize, block_radius: usize, depth: usize) -> Result<Self> {
        let p = TreeParams {
            branching,
            block_radius,
            depth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.branching < 2 {
            return Err(Error::InvalidParams(alloc::format!(
                "branching K = {} must be at least 2",
                self.branching
            )));
        }
        if self.depth < self.block_radius {
            return Err(Error::InvalidParams(alloc::format!(
                "depth L = {} must be at least m0 = {}",
                self.depth,
                self.block_radius
            )));
        }
        Ok(())
    }

    /// Common block rank `M0 = (K^(m0+1)-1)/(K-1)`.
    pub fn block_rank(&self) -> usize {
        geometric_sum(self.branching, self.block_radius + 1).unwrap_or(usize::MAX)
    }

    /// Size of the root block of a Bethe truncation, `1 + (K+1)(K^m0-1)/(K-1)`.
    /// Larger than [`block_rank`](Self::block_rank) whenever `m0 >= 1`.
    pub fn root_block_size(&self) -> usize {
        bethe_volume(self.branching, self.block_radius).unwrap_or(usize::MAX)
    }

    pub fn bethe_volume(&self) -> usize {
        bethe_volume(self.branching, self.depth).unwrap_or(usize::MAX)
    }

    /// `L = m0 (mod m0+1)`: the blocks tile `Λ_L` without clipping.
    pub fn is_strict(&self) -> bool {
        is_congruent(self.depth, self.block_radius)
    }
}

fn is_congruent(depth: usize, m0: usize) -> bool {
    depth >= m0 && (depth - m0) % (m0 + 1) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    BetheTruncation,
    CanopyTruncation,
}

/// A finite rooted tree in breadth-first order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeIndex {
    kind: TreeKind,
    branching: usize,
    parent: Vec<usize>,
    child_start: Vec<usize>,
    level: Vec<usize>,
    level_start: Vec<usize>,
}

impl TreeIndex {
    fn grow(
        kind: TreeKind,
        branching: usize,
        height: usize,
        expected: usize,
        n_children: impl Fn(usize) -> usize,
    ) -> Self {
        let mut parent = Vec::with_capacity(expected);
        let mut level = Vec::with_capacity(expected);
        let mut child_start = Vec::with_capacity(expected + 1);
        parent.push(NO_PARENT);
        level.push(0);
        let mut v = 0;
        while v < parent.len() {
            let lv = level[v];
            child_start.push(parent.len());
            if lv < height {
                for _ in 0..n_children(lv) {
                    parent.push(v);
                    level.push(lv + 1);
                }
            }
            v += 1;
        }
        child_start.push(parent.len());

        let mut level_start = vec![0; height + 2];
        for (v, &l) in level.iter().enumerate().rev() {
            level_start[l] = v;
        }
        level_start[height + 1] = parent.len();
        debug_assert_eq!(parent.len(), expected);
        TreeIndex {
            kind,
            branching,
            parent,
            child_start,
            level,
            level_start,
        }
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn n_vertices(&self) -> usize {
        self.parent.len()
    }

    /// Number of levels below the top vertex.
    pub fn height(&self) -> usize {
        self.level_start.len() - 2
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        match self.parent[v] {
            NO_PARENT => None,
            p => Some(p),
        }
    }

    /// Raw parent array, [`NO_PARENT`] for the top vertex.
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> Range<usize> {
        self.child_start[v]..self.child_start[v + 1]
    }

    /// Children of a contiguous range of vertices.
    pub fn children_of_range(&self, r: &Range<usize>) -> Range<usize> {
        if r.is_empty() {
            return self.child_start[r.start]..self.child_start[r.start];
        }
        self.child_start[r.start]..self.child_start[r.end]
    }

    /// Distance from the top vertex.
    pub fn level(&self, v: usize) -> usize {
        self.level[v]
    }

    /// Distance from the root for Bethe truncations, distance from the
    /// boundary layer for canopy truncations.
    pub fn depth(&self, v: usize) -> usize {
        match self.kind {
            TreeKind::BetheTruncation => self.level[v],
            TreeKind::CanopyTruncation => self.height() - self.level[v],
        }
    }

    pub fn level_range(&self, l: usize) -> Range<usize> {
        if l > self.height() {
            return self.n_vertices()..self.n_vertices();
        }
        self.level_start[l]..self.level_start[l + 1]
    }

    /// Vertices at distance `n` from the deepest level (the layer `C_n` for
    /// canopy truncations).
    pub fn layer(&self, n: usize) -> Range<usize> {
        if n > self.height() {
            return self.n_vertices()..self.n_vertices();
        }
        self.level_range(self.height() - n)
    }

    /// Per-level id ranges of the descendants of `v` (including `v`) that lie
    /// at most `radius` levels below it.
    pub fn descendant_ranges(&self, v: usize, radius: usize) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut r = v..v + 1;
        for _ in 0..=radius {
            if r.is_empty() {
                break;
            }
            let next = self.children_of_range(&r);
            out.push(r);
            r = next;
        }
        out
    }

    /// The whole forward sub-tree of `v`.
    pub fn subtree_ranges(&self, v: usize) -> Vec<Range<usize>> {
        self.descendant_ranges(v, self.height())
    }

    pub fn check(&self, v: usize) -> Result<()> {
        if v >= self.n_vertices() {
            return Err(Error::VertexOutOfRange(v, self.n_vertices()));
        }
        Ok(())
    }

    /// Vertices of the unique path from `x` to `y`, both included.
    pub fn path(&self, x: usize, y: usize) -> Result<Vec<usize>> {
        self.check(x)?;
        self.check(y)?;
        let mut up = Vec::new();
        let mut down = Vec::new();
        let (mut a, mut b) = (x, y);
        while self.level[a] > self.level[b] {
            up.push(a);
            a = self.parent[a];
        }
        while self.level[b] > self.level[a] {
            down.push(b);
            b = self.parent[b];
        }
        while a != b {
            up.push(a);
            down.push(b);
            a = self.parent[a];
            b = self.parent[b];
        }
        up.push(a);
        up.extend(down.into_iter().rev());
        Ok(up)
    }
}

pub fn build_bethe_truncation(params: &TreeParams) -> Result<TreeIndex> {
    if params.branching < 2 {
        return Err(Error::InvalidParams(alloc::format!(
            "branching K = {} must be at least 2",
            params.branching
        )));
    }
    let k = params.branching;
    let n = bethe_volume(k, params.depth)
        .filter(|&n| n <= MAX_VERTICES)
        .ok_or_else(|| Error::InvalidParams(alloc::format!("Λ_{} is too large", params.depth)))?;
    Ok(TreeIndex::grow(
        TreeKind::BetheTruncation,
        k,
        params.depth,
        n,
        |lv| if lv == 0 { k + 1 } else { k },
    ))
}

/// The backward ball `Λ̃_D(y)` of a canopy vertex at boundary distance `D`:
/// a full `K`-ary tree of height `D` whose leaves are boundary vertices.
pub fn build_canopy_truncation(params: &TreeParams, top_distance: usize) -> Result<TreeIndex> {
    if params.branching < 2 {
        return Err(Error::InvalidParams(alloc::format!(
            "branching K = {} must be at least 2",
            params.branching
        )));
    }
    if top_distance < params.block_radius {
        return Err(Error::InvalidParams(alloc::format!(
            "canopy depth {} is below m0 = {}",
            top_distance,
            params.block_radius
        )));
    }
    let k = params.branching;
    let n = canopy_volume(k, top_distance)
        .filter(|&n| n <= MAX_VERTICES)
        .ok_or_else(|| Error::InvalidParams(alloc::format!("canopy depth {top_distance} is too large")))?;
    Ok(TreeIndex::grow(
        TreeKind::CanopyTruncation,
        k,
        top_distance,
        n,
        |_| k,
    ))
}

/// Graph distance, by walking both vertices up to their lowest common ancestor.
pub fn dist(tree: &TreeIndex, x: usize, y: usize) -> Result<usize> {
    tree.check(x)?;
    tree.check(y)?;
    let (mut a, mut b) = (x, y);
    let mut d = 0;
    while tree.level[a] > tree.level[b] {
        a = tree.parent[a];
        d += 1;
    }
    while tree.level[b] > tree.level[a] {
        b = tree.parent[b];
        d += 1;
    }
    while a != b {
        a = tree.parent[a];
        b = tree.parent[b];
        d += 2;
    }
    Ok(d)
}

/// `y ≺ x`: `y` lies on the path from the root to `x` (ancestor or equal).
pub fn is_forward(tree: &TreeIndex, y: usize, x: usize) -> Result<bool> {
    if tree.kind != TreeKind::BetheTruncation {
        return Err(Error::WrongTreeKind);
    }
    tree.check(x)?;
    tree.check(y)?;
    let mut a = x;
    while tree.level[a] > tree.level[y] {
        a = tree.parent[a];
    }
    Ok(a == y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TilingMode {
    /// Depth must satisfy `depth = m0 (mod m0+1)`; every block is a full ball.
    Strict,
    /// Blocks are clipped at the truncation edge.
    Clipped,
}

/// Partition of the vertices into blocks `Λ'_{m0}(y)` (Bethe) or
/// `Λ̃_{m0}(y)` (canopy).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTiling {
    block_radius: usize,
    strict: bool,
    heads: Vec<usize>,
    block_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl BlockTiling {
    pub fn block_radius(&self) -> usize {
        self.block_radius
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn n_blocks(&self) -> usize {
        self.heads.len()
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn head(&self, b: usize) -> usize {
        self.heads[b]
    }

    /// Block members in level order, head first.
    pub fn members(&self, b: usize) -> &[usize] {
        &self.members[b]
    }

    pub fn block_of(&self, v: usize) -> usize {
        self.block_of[v]
    }

    pub fn block_map(&self) -> &[usize] {
        &self.block_of
    }

    /// Block containing the parent of the head of `b`.
    pub fn block_parent(&self, tree: &TreeIndex, b: usize) -> Option<usize> {
        tree.parent(self.heads[b]).map(|p| self.block_of[p])
    }
}

fn is_head(tree: &TreeIndex, v: usize, m0: usize) -> bool {
    match tree.kind {
        TreeKind::BetheTruncation => tree.level[v] % (m0 + 1) == 0,
        TreeKind::CanopyTruncation => is_congruent(tree.depth(v), m0),
    }
}

pub fn block_tiling(tree: &TreeIndex, m0: usize, mode: TilingMode) -> Result<BlockTiling> {
    let height = tree.height();
    let strict = is_congruent(height, m0);
    if mode == TilingMode::Strict && !strict {
        return Err(Error::TilingCongruence {
            depth: height,
            m0,
            period: m0 + 1,
        });
    }
    let n = tree.n_vertices();
    let mut heads = Vec::new();
    for v in 0..n {
        // A canopy truncation whose top is not in J_C gets a clipped top block.
        if is_head(tree, v, m0) || v == 0 {
            heads.push(v);
        }
    }
    let mut block_of = vec![usize::MAX; n];
    let mut members = Vec::with_capacity(heads.len());
    for (b, &h) in heads.iter().enumerate() {
        let mut list = Vec::new();
        let mut r = h..h + 1;
        for _ in 0..=m0 {
            if r.is_empty() {
                break;
            }
            let mut next_start = None;
            let mut next_end = 0;
            for v in r.clone() {
                if v != h && is_head(tree, v, m0) {
                    continue;
                }
                list.push(v);
                block_of[v] = b;
                let c = tree.children(v);
                if next_start.is_none() {
                    next_start = Some(c.start);
                }
                next_end = c.end;
            }
            r = match next_start {
                Some(s) => s..next_end,
                None => 0..0,
            };
        }
        members.push(list);
    }
    debug_assert!(block_of.iter().all(|&b| b != usize::MAX));
    Ok(BlockTiling {
        block_radius: m0,
        strict,
        heads,
        block_of,
        members,
    })
}

/// `N_y`: neighbours of `y` lying outside the block of `y`.
pub fn outside_neighbors(tree: &TreeIndex, tiling: &BlockTiling, y: usize) -> Result<Vec<usize>> {
    tree.check(y)?;
    let b = tiling.block_of[y];
    let mut out = Vec::new();
    if let Some(p) = tree.parent(y) {
        if tiling.block_of[p] != b {
            out.push(p);
        }
    }
    out.extend(tree.children(y).filter(|&c| tiling.block_of[c] != b));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Explicit adjacency lists grown recursively, independent of level order.
    fn explicit_bethe(k: usize, l: usize) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new()];
        fn grow(adj: &mut Vec<Vec<usize>>, v: usize, nc: usize, k: usize, left: usize) {
            if left == 0 {
                return;
            }
            for _ in 0..nc {
                let c = adj.len();
                adj.push(vec![v]);
                adj[v].push(c);
                grow(adj, c, k, k, left - 1);
            }
        }
        grow(&mut adj, 0, k + 1, k, l);
        adj
    }

    fn bfs_dist(adj: &[Vec<usize>], s: usize) -> Vec<usize> {
        let mut d = vec![usize::MAX; adj.len()];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if d[w] == usize::MAX {
                    d[w] = d[u] + 1;
                    q.push_back(w);
                }
            }
        }
        d
    }

    fn tree_adj(t: &TreeIndex) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); t.n_vertices()];
        for v in 1..t.n_vertices() {
            let p = t.parent(v).unwrap();
            adj[v].push(p);
            adj[p].push(v);
        }
        adj
    }

    #[test]
    fn bethe_sizes() {
        let t = build_bethe_truncation(&TreeParams::new(2, 0, 0).unwrap()).unwrap();
        assert_eq!(t.n_vertices(), 1);
        assert_eq!(t.children(0).len(), 0);
        let t = build_bethe_truncation(&TreeParams::new(2, 0, 2).unwrap()).unwrap();
        assert_eq!(t.n_vertices(), 10);
        let t = build_bethe_truncation(&TreeParams::new(3, 0, 3).unwrap()).unwrap();
        assert_eq!(t.n_vertices(), 53);
    }

    #[test]
    fn closed_forms_match_enumeration() {
        for k in 2..=4 {
            for l in 0..=8 {
                if bethe_volume(k, l).unwrap() > 200_000 {
                    continue;
                }
                let adj = explicit_bethe(k, l);
                let t = build_bethe_truncation(&TreeParams::new(k, 0, l).unwrap()).unwrap();
                assert_eq!(t.n_vertices(), adj.len(), "K={k} L={l}");
                // level by level count from BFS
                let d = bfs_dist(&adj, 0);
                for lv in 0..=l {
                    let c = d.iter().filter(|&&x| x == lv).count();
                    assert_eq!(t.level_range(lv).len(), c);
                }
                let c = build_canopy_truncation(&TreeParams::new(k, 0, 0).unwrap(), l).unwrap();
                assert_eq!(c.n_vertices(), (k.pow(l as u32 + 1) - 1) / (k - 1));
            }
        }
    }

    #[test]
    fn bethe_structure() {
        let t = build_bethe_truncation(&TreeParams::new(3, 1, 4).unwrap()).unwrap();
        assert_eq!(t.children(0).len(), 4);
        for v in 1..t.n_vertices() {
            let p = t.parent(v).unwrap();
            assert!(p < v);
            assert_eq!(t.depth(v), t.depth(p) + 1);
            let nc = t.children(v).len();
            assert!(nc == 3 || (nc == 0 && t.depth(v) == 4));
        }
    }

    #[test]
    fn canopy_structure() {
        let p = TreeParams::new(2, 0, 0).unwrap();
        assert_eq!(build_canopy_truncation(&p, 0).unwrap().n_vertices(), 1);
        let t = build_canopy_truncation(&p, 2).unwrap();
        assert_eq!(t.n_vertices(), 7);
        assert_eq!(t.layer(0).len(), 4);
        assert_eq!(t.depth(0), 2);
        for v in 1..7 {
            assert_eq!(t.depth(t.parent(v).unwrap()), t.depth(v) + 1);
        }
        let t = build_canopy_truncation(&TreeParams::new(3, 0, 0).unwrap(), 1).unwrap();
        assert_eq!(t.n_vertices(), 4);
        assert!(build_canopy_truncation(&TreeParams::new(2, 2, 2).unwrap(), 1).is_err());
    }

    #[test]
    fn invalid_params() {
        assert!(TreeParams::new(1, 0, 3).is_err());
        assert!(TreeParams::new(2, 3, 2).is_err());
        let bad = TreeParams {
            branching: 1,
            block_radius: 0,
            depth: 2,
        };
        assert!(build_bethe_truncation(&bad).is_err());
    }

    #[test]
    fn distances() {
        let t = build_bethe_truncation(&TreeParams::new(2, 0, 2).unwrap()).unwrap();
        assert_eq!(dist(&t, 0, 0).unwrap(), 0);
        let kids = t.children(1);
        assert_eq!(dist(&t, kids.start, kids.start + 1).unwrap(), 2);
        assert!(dist(&t, 0, 10).is_err());

        let t = build_bethe_truncation(&TreeParams::new(2, 0, 3).unwrap()).unwrap();
        let leaf_a = t.descendant_ranges(1, 2)[2].start;
        let leaf_b = t.descendant_ranges(2, 2)[2].start;
        assert_eq!(dist(&t, leaf_a, leaf_b).unwrap(), 6);
    }

    #[test]
    fn dist_is_bfs_metric() {
        let t = build_bethe_truncation(&TreeParams::new(3, 0, 3).unwrap()).unwrap();
        let adj = tree_adj(&t);
        let n = t.n_vertices();
        let all: Vec<Vec<usize>> = (0..n).map(|s| bfs_dist(&adj, s)).collect();
        for x in 0..n {
            for y in 0..n {
                let d = dist(&t, x, y).unwrap();
                assert_eq!(d, all[x][y]);
                assert_eq!(d, dist(&t, y, x).unwrap());
                assert_eq!(t.path(x, y).unwrap().len(), d + 1);
            }
        }
        for x in (0..n).step_by(3) {
            for y in (0..n).step_by(5) {
                for z in (0..n).step_by(7) {
                    assert!(all[x][z] <= all[x][y] + all[y][z]);
                }
            }
        }
    }

    #[test]
    fn forward_relation() {
        let t = build_bethe_truncation(&TreeParams::new(2, 0, 3).unwrap()).unwrap();
        for x in 0..t.n_vertices() {
            assert!(is_forward(&t, 0, x).unwrap());
            assert!(is_forward(&t, x, x).unwrap());
            for y in 0..t.n_vertices() {
                let via_dist = dist(&t, 0, x).unwrap()
                    == dist(&t, 0, y).unwrap() + dist(&t, y, x).unwrap();
                assert_eq!(is_forward(&t, y, x).unwrap(), via_dist);
            }
        }
        let sib = t.children(1);
        assert!(!is_forward(&t, sib.start, sib.start + 1).unwrap());
        let c = build_canopy_truncation(&TreeParams::new(2, 0, 0).unwrap(), 2).unwrap();
        assert_eq!(is_forward(&c, 0, 1), Err(Error::WrongTreeKind));
    }

    #[test]
    fn bethe_tiling_k2_m1_l3() {
        let p = TreeParams::new(2, 1, 3).unwrap();
        let t = build_bethe_truncation(&p).unwrap();
        let tl = block_tiling(&t, 1, TilingMode::Strict).unwrap();
        assert_eq!(t.n_vertices(), 22);
        assert_eq!(tl.n_blocks(), 7);
        assert!(tl.heads().iter().all(|&h| t.depth(h) % 2 == 0));
        assert_eq!(tl.members(0).len(), 4);
        assert_eq!(p.root_block_size(), 4);
        for b in 1..7 {
            assert_eq!(tl.members(b).len(), 3);
            assert_eq!(tl.members(b).len(), p.block_rank());
        }
        let total: usize = (0..tl.n_blocks()).map(|b| tl.members(b).len()).sum();
        assert_eq!(total, 22);
        for b in 0..tl.n_blocks() {
            for &v in tl.members(b) {
                assert_eq!(tl.block_of(v), b);
                assert!(is_forward(&t, tl.head(b), v).unwrap());
                assert!(dist(&t, tl.head(b), v).unwrap() <= 1);
            }
        }
    }

    #[test]
    fn rank_one_tiling_is_singletons() {
        let t = build_bethe_truncation(&TreeParams::new(2, 0, 2).unwrap()).unwrap();
        let tl = block_tiling(&t, 0, TilingMode::Strict).unwrap();
        assert_eq!(tl.n_blocks(), t.n_vertices());
        for b in 0..tl.n_blocks() {
            assert_eq!(tl.members(b), &[b]);
        }
    }

    #[test]
    fn canopy_tiling() {
        let p = TreeParams::new(2, 1, 1).unwrap();
        let t = build_canopy_truncation(&p, 3).unwrap();
        let tl = block_tiling(&t, 1, TilingMode::Strict).unwrap();
        assert_eq!(t.n_vertices(), 15);
        assert_eq!(tl.n_blocks(), 5);
        for b in 0..5 {
            let d = t.depth(tl.head(b));
            assert!(d == 1 || d == 3);
            assert_eq!(tl.members(b).len(), 3);
        }
        // depth 4 is not congruent to 1 mod 2
        let t4 = build_canopy_truncation(&p, 4).unwrap();
        assert!(matches!(
            block_tiling(&t4, 1, TilingMode::Strict),
            Err(Error::TilingCongruence { .. })
        ));
        let tl4 = block_tiling(&t4, 1, TilingMode::Clipped).unwrap();
        assert!(!tl4.is_strict());
        assert_eq!(tl4.members(0), &[0]);
        let total: usize = (0..tl4.n_blocks()).map(|b| tl4.members(b).len()).sum();
        assert_eq!(total, t4.n_vertices());
    }

    #[test]
    fn clipped_bethe_tiling_partitions() {
        for (m0, l) in [(1, 4), (2, 4), (2, 3), (3, 4)] {
            let t = build_bethe_truncation(&TreeParams::new(2, m0, l).unwrap()).unwrap();
            assert!(block_tiling(&t, m0, TilingMode::Strict).is_err());
            let tl = block_tiling(&t, m0, TilingMode::Clipped).unwrap();
            let mut seen = vec![0usize; t.n_vertices()];
            for b in 0..tl.n_blocks() {
                for &v in tl.members(b) {
                    seen[v] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn outside_neighbor_sets() {
        let t = build_bethe_truncation(&TreeParams::new(2, 1, 3).unwrap()).unwrap();
        let tl = block_tiling(&t, 1, TilingMode::Strict).unwrap();
        // deepest layer: no children, parent inside the block
        let leaf = t.level_range(3).start;
        assert!(outside_neighbors(&t, &tl, leaf).unwrap().is_empty());
        // depth-1 member of the root block: its two children are heads
        let n1 = outside_neighbors(&t, &tl, 1).unwrap();
        assert_eq!(n1, t.children(1).collect::<Vec<_>>());
        assert_eq!(n1.len(), 2);
        // head of a depth-2 block: its parent lies in the root block
        let h = t.level_range(2).start;
        assert_eq!(outside_neighbors(&t, &tl, h).unwrap(), vec![t.parent(h).unwrap()]);

        let t = build_bethe_truncation(&TreeParams::new(2, 1, 5).unwrap()).unwrap();
        let tl = block_tiling(&t, 1, TilingMode::Strict).unwrap();
        let mid = t.level_range(3).start;
        assert_eq!(outside_neighbors(&t, &tl, mid).unwrap().len(), 2);
    }

    #[test]
    fn detaching_a_block_leaves_one_neighbour_per_component() {
        let t = build_bethe_truncation(&TreeParams::new(2, 1, 5).unwrap()).unwrap();
        let tl = block_tiling(&t, 1, TilingMode::Strict).unwrap();
        let adj = tree_adj(&t);
        for b in 0..tl.n_blocks() {
            let inside: Vec<bool> = (0..t.n_vertices()).map(|v| tl.block_of(v) == b).collect();
            let mut boundary = Vec::new();
            for &y in tl.members(b) {
                boundary.extend(outside_neighbors(&t, &tl, y).unwrap());
            }
            // label components of the graph with the block removed
            let mut comp = vec![usize::MAX; t.n_vertices()];
            let mut nc = 0;
            for s in 0..t.n_vertices() {
                if inside[s] || comp[s] != usize::MAX {
                    continue;
                }
                let mut q = VecDeque::from([s]);
                comp[s] = nc;
                while let Some(u) = q.pop_front() {
                    for &w in &adj[u] {
                        if !inside[w] && comp[w] == usize::MAX {
                            comp[w] = nc;
                            q.push_back(w);
                        }
                    }
                }
                nc += 1;
            }
            assert_eq!(boundary.len(), nc);
            let mut hit = vec![0; nc];
            for &x in &boundary {
                hit[comp[x]] += 1;
            }
            assert!(hit.iter().all(|&h| h == 1));
        }
    }
}
