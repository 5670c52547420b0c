use std::f64::consts::PI;

use canopy_core::hamiltonian::Geometry;
use canopy_core::spectral::{effective_sup_norm, minami_tail_check};
use serde_json::json;

use super::ExperimentOutput;
use crate::config::{ExperimentConfig, MinamiKnobs};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};
use crate::runner::Pool;

/// Width with `(π ‖ρ_λ‖ |Λ| |I|)² = target`.
pub fn width_for_bound(target: f64, eff_sup_norm: f64, volume: usize) -> f64 {
    target.sqrt() / (PI * eff_sup_norm * volume as f64)
}

pub fn run(cfg: &ExperimentConfig, knobs: &MinamiKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let g = Geometry::bethe(m.branching, m.block_radius, m.depth)?;
    let density = m.density.spec();
    let width = knobs
        .width
        .unwrap_or_else(|| width_for_bound(knobs.target_bound, effective_sup_norm(&density, m.lambda), g.n_vertices()));
    let interval = (knobs.lower, knobs.lower + width);
    let v = minami_tail_check(pool, &g, &density, m.lambda, interval, knobs.trials, cfg.seed)?;

    let mut table = Table::new(&["m", "tail_probability", "stderr"]);
    for &(mm, p, se) in &v.tail {
        table.push([mm.to_string(), num(p), num(se)]);
    }
    let max_count = v.stats.counts.iter().copied().max().unwrap_or(0);
    let verdicts = vec![Verdict::new(
        "minami_tail",
        v.pass,
        format!(
            "sum_(m>={}) P[count > m] = {:.3e} ± {:.1e} vs bound {:.4}{} (max count {max_count})",
            v.common_rank,
            v.lhs,
            v.lhs_stderr,
            v.bound,
            if v.vacuous { ", vacuous" } else { "" }
        ),
    )];
    Ok(ExperimentOutput {
        table,
        results: json!({
            "volume": g.n_vertices(),
            "lambda": m.lambda,
            "interval": [interval.0, interval.1],
            "common_rank": v.common_rank,
            "mean": v.stats.mean,
            "lhs": v.lhs,
            "lhs_stderr": v.lhs_stderr,
            "bound": v.bound,
            "bound_unscaled": v.bound_unscaled,
            "vacuous": v.vacuous,
            "max_count": max_count,
        }),
        verdicts,
        extra: Vec::new(),
    })
}
