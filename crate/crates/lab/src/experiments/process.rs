use canopy_core::disorder::derive_seed;
use canopy_core::hamiltonian::Geometry;
use canopy_core::process::{
    atom_drift, decomposition_defect, dispersion_index, estimate_atoms, fit_and_test, nonincreasing_within,
    overflow_budget, sample_depths, AtomEstimate, ProcessConfig, ProcessSamples,
};
use canopy_core::spectral::dos_density_at;
use canopy_core::stats::{mean, stderr_of_mean};
use serde_json::json;

use super::{combined, ExperimentOutput};
use crate::config::{ExperimentConfig, ProcessKnobs};
use crate::error::LabResult;
use crate::output::{Table, Verdict};
use crate::runner::Pool;

fn depth_json(s: &ProcessSamples, a: &AtomEstimate, budget: f64) -> serde_json::Value {
    let mu: Vec<f64> = s.samples.iter().map(|c| c.mu as f64).collect();
    let (defect, defect_se) = decomposition_defect(s);
    json!({
        "depth": s.depth,
        "volume": s.volume,
        "split_depth": s.split_depth,
        "split_depth_literal": s.split_depth_literal,
        "roots": s.roots.len(),
        "subtree_sizes": s.subtree_sizes,
        "mean_count": mean(&mu),
        "mean_count_stderr": stderr_of_mean(&mu),
        "atoms": a.atoms,
        "atoms_stderr": a.atoms_se,
        "overflow": a.overflow,
        "overflow_stderr": a.overflow_se,
        "k_weighted_total": a.k_weighted_total,
        "overflow_budget": budget,
        "decomposition_defect": defect,
        "decomposition_defect_stderr": defect_se,
    })
}

pub fn run(cfg: &ExperimentConfig, knobs: &ProcessKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let density = m.density.spec();
    let pc = ProcessConfig {
        energy: knobs.energy,
        window: (knobs.window[0], knobs.window[1]),
        alpha: knobs.alpha,
        lambda: m.lambda,
        density,
        trials: knobs.trials,
        seed: cfg.seed,
        bootstrap_reps: knobs.bootstrap_reps,
    };
    let width = pc.width();
    let all = sample_depths(pool, m.branching, m.block_radius, &knobs.depths, &pc)?;
    let rank = Geometry::bethe(m.branching, m.block_radius, knobs.depths[0])?.common_rank();
    let atoms: Vec<AtomEstimate> = all
        .iter()
        .map(|s| estimate_atoms(s, rank, knobs.bootstrap_reps, derive_seed(cfg.seed, 100 + s.depth as u64)))
        .collect::<Result<_, _>>()?;
    let budgets: Vec<f64> = all.iter().map(|s| overflow_budget(s, &density, m.lambda)).collect();

    let canopy = Geometry::canopy(m.branching, m.block_radius, knobs.canopy_depth)?;
    let nhat = dos_density_at(
        pool,
        &canopy,
        &density,
        m.lambda,
        knobs.energy,
        knobs.dos_half_width,
        knobs.n_max,
        knobs.dos_trials,
        derive_seed(cfg.seed, 2),
        &knobs.quadrature.spec(),
    )?;
    let kf = m.branching as f64;
    let scale = kf * nhat.value * width;
    let scale_se = kf * nhat.stderr * width;

    let last = all.last().expect("at least one depth");
    let last_atoms = atoms.last().expect("at least one depth");
    let mu = last.mu();
    let fit = fit_and_test(&mu, last_atoms, scale, scale_se)?;
    let disp = dispersion_index(&mu, knobs.bootstrap_reps, derive_seed(cfg.seed, 3))?;

    let mut table = Table::new(&[]);
    let n_eta = all.iter().map(|s| s.roots.len()).max().unwrap_or(0);
    table.header = ["depth", "trial", "mu"].iter().map(|s| s.to_string()).collect();
    table.header.extend((0..n_eta).map(|i| format!("eta_{i}")));
    for s in &all {
        for c in &s.samples {
            let mut row = vec![s.depth.to_string(), c.trial.to_string(), c.mu.to_string()];
            row.extend((0..n_eta).map(|i| c.eta.get(i).map(|x| x.to_string()).unwrap_or_default()));
            table.rows.push(row);
        }
    }

    let mut verdicts = Vec::new();
    let unscaled = nhat.value * width;
    let unscaled_se = nhat.stderr * width;
    let mean_ok = (fit.empirical_mean - scale).abs() <= 3.0 * combined(fit.empirical_mean_se, scale_se);
    let unscaled_ok = (fit.empirical_mean - unscaled).abs() <= 3.0 * combined(fit.empirical_mean_se, unscaled_se);
    verdicts.push(Verdict::new(
        "mean_intensity",
        mean_ok,
        format!(
            "E[count] = {:.5} ± {:.5} at depth {}; K·n(E0)|I| = {:.5} ± {:.5}; without the factor K: {:.5} ({})",
            fit.empirical_mean,
            fit.empirical_mean_se,
            last.depth,
            scale,
            scale_se,
            unscaled,
            if unscaled_ok { "agrees" } else { "disagrees" }
        ),
    ));
    let diffs: Vec<f64> = last.samples.iter().map(|c| c.mu as f64 - c.eta_total() as f64).collect();
    let identity_gap = mean(&diffs);
    let identity_se = stderr_of_mean(&diffs);
    verdicts.push(Verdict::new(
        "mean_identity",
        identity_gap.abs() <= 3.0 * identity_se || identity_gap == 0.0,
        format!(
            "sum k·p_k = {:.5}, E[count] = {:.5}, paired gap {:.2e} ± {:.1e}",
            fit.fitted_mean, fit.empirical_mean, identity_gap, identity_se
        ),
    ));
    verdicts.push(Verdict::new(
        "compound_poisson_tv",
        fit.tv_distance <= knobs.max_tv,
        format!("TV {:.4} (max {}), CF distance {:.4}, cap {}", fit.tv_distance, knobs.max_tv, fit.cf_distance, fit.cap),
    ));
    let bound_text: Vec<String> = fit
        .bounds
        .iter()
        .map(|b| format!("p{} = {:.4}±{:.4} vs {:.4}", b.k, b.atom, b.atom_se, b.bound))
        .collect();
    verdicts.push(Verdict::new("atom_bounds", fit.bounds_ok(), bound_text.join("; ")));
    let budget = *budgets.last().expect("one depth");
    verdicts.push(Verdict::new(
        "overflow_budget",
        last_atoms.overflow - 3.0 * last_atoms.overflow_se <= budget,
        format!("mass above rank {rank}: {:.2e} ± {:.1e}, budget {:.3e}", last_atoms.overflow, last_atoms.overflow_se, budget),
    ));
    let drifts: Vec<f64> = atoms.windows(2).map(|w| atom_drift(&w[0], &w[1])).collect();
    let drift_text: Vec<String> = all
        .windows(2)
        .zip(&drifts)
        .map(|(w, d)| format!("{}->{}: {:.2}", w[0].depth, w[1].depth, d))
        .collect();
    verdicts.push(Verdict::new(
        "atom_stability",
        drifts.iter().all(|&d| d <= 3.0),
        format!("largest atom change in combined stderr: {}", drift_text.join(", ")),
    ));
    let defects: Vec<(f64, f64)> = all.iter().map(decomposition_defect).collect();
    let defect_text: Vec<String> = all
        .iter()
        .zip(&defects)
        .map(|(s, d)| format!("L={}: {:.4}±{:.4}", s.depth, d.0, d.1))
        .collect();
    verdicts.push(Verdict::new(
        "decomposition_defect_decreasing",
        nonincreasing_within(&defects),
        defect_text.join(", "),
    ));
    if m.block_radius == 0 {
        verdicts.push(Verdict::new(
            "dispersion_poisson",
            (0.9..=1.1).contains(&disp.value),
            format!("Var/mean = {:.4} ± {:.4}, 95% interval [{:.4}, {:.4}]", disp.value, disp.stderr, disp.interval.0, disp.interval.1),
        ));
        let higher: Vec<usize> = (2..=last_atoms.atoms.len()).collect();
        let ok = higher.iter().all(|&k| last_atoms.atom(k) <= 3.0 * last_atoms.atom_se(k));
        let text: Vec<String> = higher
            .iter()
            .map(|&k| format!("p{k} = {:.2e}±{:.1e}", last_atoms.atom(k), last_atoms.atom_se(k)))
            .collect();
        verdicts.push(Verdict::new(
            "higher_atoms_vanish",
            ok,
            if text.is_empty() { "no counts above 1 observed".into() } else { text.join("; ") },
        ));
    } else {
        verdicts.push(Verdict::new(
            "dispersion_at_least_one",
            disp.value >= 1.0 - 3.0 * disp.stderr,
            format!("Var/mean = {:.4} ± {:.4}", disp.value, disp.stderr),
        ));
    }

    let bounds: Vec<serde_json::Value> = fit
        .bounds
        .iter()
        .map(|b| json!({"k": b.k, "atom": b.atom, "atom_stderr": b.atom_se, "bound": b.bound, "bound_stderr": b.bound_se, "pass": b.pass}))
        .collect();
    Ok(ExperimentOutput {
        table,
        results: json!({
            "rank": rank,
            "window": knobs.window,
            "energy": knobs.energy,
            "depths": all.iter().zip(&atoms).zip(&budgets).map(|((s, a), &b)| depth_json(s, a, b)).collect::<Vec<_>>(),
            "density_of_states": {
                "value": nhat.value,
                "stderr": nhat.stderr,
                "half_width": nhat.half_width,
                "canopy_depth": knobs.canopy_depth,
            },
            "intensity": {"with_branching_factor": scale, "without_branching_factor": unscaled},
            "fit": {
                "depth": last.depth,
                "tv_distance": fit.tv_distance,
                "cf_distance": fit.cf_distance,
                "cf_grid": fit.cf_grid,
                "cap": fit.cap,
                "fitted_mean": fit.fitted_mean,
                "empirical_mean": fit.empirical_mean,
                "empirical_mean_stderr": fit.empirical_mean_se,
                "pmf": fit.pmf,
                "empirical": fit.empirical,
                "bounds": bounds,
            },
            "dispersion": {"value": disp.value, "stderr": disp.stderr, "interval": [disp.interval.0, disp.interval.1]},
            "atom_drift": drifts,
        }),
        verdicts,
        extra: Vec::new(),
    })
}

