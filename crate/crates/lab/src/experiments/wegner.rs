use canopy_core::hamiltonian::Geometry;
use canopy_core::spectral::{wegner_check, wegner_scaling};
use serde_json::json;

use super::ExperimentOutput;
use crate::config::{ExperimentConfig, WegnerKnobs};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};
use crate::runner::Pool;

pub fn run(cfg: &ExperimentConfig, knobs: &WegnerKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let g = Geometry::bethe(m.branching, m.block_radius, m.depth)?;
    let density = m.density.spec();
    let interval = (knobs.interval[0], knobs.interval[1]);
    let w = wegner_check(pool, &g, &density, m.lambda, interval, knobs.trials, cfg.seed)?;

    let mut table = Table::new(&["series", "lo", "hi", "width", "trials", "mean", "stderr", "ratio", "ratio_stderr"]);
    let width = interval.1 - interval.0;
    table.push([
        "bound_check".into(),
        num(interval.0),
        num(interval.1),
        num(width),
        knobs.trials.to_string(),
        num(w.stats.mean),
        num(w.stats.stderr),
        num(w.stats.mean / width),
        num(w.stats.stderr / width),
    ]);
    let mut verdicts = vec![Verdict::new(
        "wegner_bound",
        w.pass,
        format!(
            "mean {:.4} + 3·{:.4} <= pi·{:.4}·{}·{width} = {:.4} (unscaled bound {:.4})",
            w.stats.mean, w.stats.stderr, w.effective_sup_norm, w.volume, w.bound, w.bound_unscaled
        ),
    )];

    let mut scaling = Vec::new();
    if knobs.scaling_widths.len() >= 2 {
        let (rows, pass) = wegner_scaling(pool, &g, &density, m.lambda, knobs.scaling_center, &knobs.scaling_widths, knobs.trials, cfg.seed)?;
        for r in &rows {
            let (lo, hi) = (knobs.scaling_center - r.width / 2.0, knobs.scaling_center + r.width / 2.0);
            table.push(["scaling".into(), num(lo), num(hi), num(r.width), knobs.trials.to_string(), num(r.mean), num(r.stderr), num(r.ratio), num(r.ratio_stderr)]);
            scaling.push(json!({"width": r.width, "mean": r.mean, "stderr": r.stderr, "ratio": r.ratio, "ratio_stderr": r.ratio_stderr}));
        }
        let ratios: Vec<String> = rows.iter().map(|r| format!("{:.3}±{:.3}", r.ratio, r.ratio_stderr)).collect();
        verdicts.push(Verdict::new(
            "linear_scaling",
            pass,
            format!("E[count]/|I| = {} around {}", ratios.join(", "), knobs.scaling_center),
        ));
    }

    Ok(ExperimentOutput {
        table,
        results: json!({
            "volume": w.volume,
            "lambda": w.lambda,
            "interval": knobs.interval,
            "mean": w.stats.mean,
            "variance": w.stats.variance,
            "stderr": w.stats.stderr,
            "sup_norm": w.sup_norm,
            "effective_sup_norm": w.effective_sup_norm,
            "bound": w.bound,
            "bound_unscaled": w.bound_unscaled,
            "per_block_bound_rank": w.per_block_bound_rank,
            "per_block_bound_radius": w.per_block_bound_radius,
            "scaling": scaling,
        }),
        verdicts,
        extra: Vec::new(),
    })
}
