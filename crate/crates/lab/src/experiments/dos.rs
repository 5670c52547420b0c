use canopy_core::spectral::{dos_compare, DosConfig};
use serde_json::json;

use super::ExperimentOutput;
use crate::config::{DosKnobs, ExperimentConfig};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};
use crate::runner::Pool;

/// `[λ·lo - (K+1), λ·hi + K + 1)`: holds every spectrum for the density's
/// support.
pub fn default_grid(branching: usize, lambda: f64, support: (f64, f64)) -> [f64; 2] {
    let k = branching as f64 + 1.0;
    [lambda * support.0 - k, lambda * support.1 + k]
}

pub fn run(cfg: &ExperimentConfig, knobs: &DosKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let density = m.density.spec();
    let grid = knobs.grid.unwrap_or_else(|| default_grid(m.branching, m.lambda, density.support()));
    let dc = DosConfig {
        branching: m.branching,
        block_radius: m.block_radius,
        lambda: m.lambda,
        density,
        grid_lo: grid[0],
        grid_hi: grid[1],
        bin_width: knobs.bin_width,
        bethe_depth: m.depth,
        bethe_trials: knobs.bethe_trials,
        canopy_depth: knobs.canopy_depth,
        canopy_trials: knobs.canopy_trials,
        n_max: knobs.n_max,
        seed: cfg.seed,
        quadrature: knobs.quadrature.spec(),
    };
    let e = dos_compare(pool, &dc)?;

    let mut table = Table::new(&["lo", "hi", "center", "lhs", "lhs_err", "rhs", "rhs_err", "active", "agrees"]);
    let centers = e.centers();
    for i in 0..e.lhs.len() {
        table.push([
            num(e.edges[i]),
            num(e.edges[i + 1]),
            num(centers[i]),
            num(e.lhs[i]),
            num(e.lhs_err[i]),
            num(e.rhs[i]),
            num(e.rhs_err[i]),
            e.is_active(i).to_string(),
            e.bin_agrees(i).to_string(),
        ]);
    }
    let verdicts = vec![
        Verdict::new(
            "dos_bin_agreement",
            e.agreement >= knobs.min_agreement,
            format!(
                "{:.1}% of {} active bins within 3 combined stderr (need {:.0}%)",
                100.0 * e.agreement,
                e.active_bins,
                100.0 * knobs.min_agreement
            ),
        ),
        Verdict::new(
            "dos_total_mass",
            e.masses_ok(),
            format!(
                "finite-volume mass {:.9}, canopy mass {:.6}, layer deficit {:.3e}",
                e.lhs_mass, e.rhs_mass, e.weight_deficit
            ),
        ),
    ];
    Ok(ExperimentOutput {
        table,
        results: json!({
            "grid": grid,
            "bin_width": knobs.bin_width,
            "depth_buffer": dc.depth_buffer(),
            "lhs_mass": e.lhs_mass,
            "rhs_mass": e.rhs_mass,
            "weight_deficit": e.weight_deficit,
            "active_bins": e.active_bins,
            "agreement": e.agreement,
        }),
        verdicts,
        extra: Vec::new(),
    })
}
