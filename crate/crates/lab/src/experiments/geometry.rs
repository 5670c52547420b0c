use canopy_core::hamiltonian::Geometry;
use canopy_core::tree::bethe_volume;
use serde_json::json;

use super::ExperimentOutput;
use crate::config::{ExperimentConfig, GeometryKnobs};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};

pub fn run(cfg: &ExperimentConfig, knobs: &GeometryKnobs) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let g = Geometry::bethe(m.branching, m.block_radius, m.depth)?;
    let (tree, tiling) = (&g.tree, &g.tiling);
    let n = tree.n_vertices();

    let mut table = Table::new(&["block", "head", "level", "size", "parent_block"]);
    let mut covered = vec![0usize; n];
    let mut heads_ok = true;
    for b in 0..tiling.n_blocks() {
        let head = tiling.head(b);
        for &v in tiling.members(b) {
            covered[v] += 1;
        }
        heads_ok &= tiling.block_of(head) == b && tiling.members(b)[0] == head;
        table.push([
            b.to_string(),
            head.to_string(),
            tree.level(head).to_string(),
            tiling.members(b).len().to_string(),
            tiling.block_parent(tree, b).map(|p| p.to_string()).unwrap_or_default(),
        ]);
    }
    let partition = covered.iter().all(|&c| c == 1) && heads_ok;
    let expected = bethe_volume(m.branching, m.depth);
    let level_sizes: Vec<usize> = (0..=tree.height()).map(|l| tree.level_range(l).len()).collect();

    let verdicts = vec![
        Verdict::new(
            "block_partition",
            partition,
            format!("{} blocks cover {n} vertices exactly once: {partition}", tiling.n_blocks()),
        ),
        Verdict::new(
            "vertex_count",
            expected == Some(n),
            format!("{n} vertices, closed form {expected:?}"),
        ),
    ];

    let mut extra = Vec::new();
    if knobs.export_coo {
        let op = g.realize(m.lambda, &m.density.spec(), cfg.seed, 0)?;
        let mut entries: Vec<(usize, usize, f64)> = (0..n).map(|v| (v, v, op.potential()[v])).collect();
        for (p, c) in op.edges() {
            entries.push((p, c, 1.0));
            entries.push((c, p, 1.0));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut coo = Table::new(&["row", "col", "value"]);
        for (r, c, v) in entries {
            coo.push([r.to_string(), c.to_string(), num(v)]);
        }
        extra.push(("geometry_coo.csv".to_string(), coo.to_bytes()?));
    }

    Ok(ExperimentOutput {
        table,
        results: json!({
            "vertices": n,
            "blocks": tiling.n_blocks(),
            "strict": tiling.is_strict(),
            "height": tree.height(),
            "common_rank": g.common_rank(),
            "root_block_size": tiling.members(0).len(),
            "level_sizes": level_sizes,
        }),
        verdicts,
        extra,
    })
}
