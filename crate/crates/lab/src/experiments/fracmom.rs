use canopy_core::disorder::derive_seed;
use canopy_core::hamiltonian::Geometry;
use canopy_core::resolvent::{fractional_moment_estimate, root_pairs, FracMomentConfig, FracMomentEstimate};
use serde_json::json;

use super::{combined, ExperimentOutput};
use crate::config::{ExperimentConfig, FracmomKnobs};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};
use crate::runner::Pool;

/// Relative change of the decay rate allowed when `ε` is halved.
const EPSILON_DRIFT: f64 = 0.05;

fn estimate_json(e: &FracMomentEstimate) -> serde_json::Value {
    json!({
        "lambda": e.lambda,
        "epsilon": e.epsilon,
        "gamma_hat": e.gamma_hat,
        "gamma_stderr": e.gamma_stderr,
        "intercept": e.intercept,
        "slope_se_wls": e.fit.slope_se,
        "root_block_size": e.root_block_size,
        "common_block_size": e.common_block_size,
    })
}

pub fn run(cfg: &ExperimentConfig, knobs: &FracmomKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let m = &cfg.model;
    let g = Geometry::bethe(m.branching, m.block_radius, m.depth)?;
    let pairs = root_pairs(&g.tree);
    let mut lambdas = if knobs.lambdas.is_empty() { vec![m.lambda] } else { knobs.lambdas.clone() };
    lambdas.sort_by(f64::total_cmp);

    let mut table = Table::new(&["lambda", "epsilon", "distance", "mean", "stderr", "n_samples"]);
    let mut main = Vec::new();
    let mut halved = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let base = FracMomentConfig {
            s: knobs.s,
            energy: knobs.energy,
            epsilon: knobs.epsilon,
            lambda,
            density: m.density.spec(),
            trials: knobs.trials,
            seed: derive_seed(cfg.seed, i as u64),
            bootstrap_reps: knobs.bootstrap_reps,
        };
        let mut runs = vec![base.clone()];
        if knobs.halve_epsilon {
            // same disorder draws, smaller imaginary part
            runs.push(FracMomentConfig { epsilon: knobs.epsilon / 2.0, ..base });
        }
        for (j, c) in runs.iter().enumerate() {
            let e = fractional_moment_estimate(pool, &g.tree, &g.tiling, c, &pairs)?;
            for gr in &e.groups {
                table.push([num(lambda), num(c.epsilon), gr.distance.to_string(), num(gr.mean), num(gr.stderr), gr.n_samples.to_string()]);
            }
            if j == 0 {
                main.push(e);
            } else {
                halved.push(e);
            }
        }
    }

    let mut verdicts = Vec::new();
    let sig: Vec<String> = main
        .iter()
        .map(|e| format!("lambda {}: {:.4} ± {:.4}", e.lambda, e.gamma_hat, e.gamma_stderr))
        .collect();
    let decay_ok = main.iter().all(|e| {
        e.gamma_hat > 0.0 && (e.lambda < knobs.significant_from || e.gamma_hat > 3.0 * e.gamma_stderr)
    });
    verdicts.push(Verdict::new(
        "decay_rate_positive",
        decay_ok,
        format!("gamma_hat {} (3 stderr required from lambda {})", sig.join("; "), knobs.significant_from),
    ));
    let monotone = main.windows(2).all(|w| {
        w[1].gamma_hat >= w[0].gamma_hat - 2.0 * combined(w[0].gamma_stderr, w[1].gamma_stderr)
    });
    verdicts.push(Verdict::new(
        "decay_rate_nondecreasing",
        monotone,
        "gamma_hat nondecreasing in lambda within 2 combined stderr".into(),
    ));
    if knobs.halve_epsilon {
        let drifts: Vec<f64> = main
            .iter()
            .zip(&halved)
            .map(|(a, b)| (b.gamma_hat - a.gamma_hat).abs() / a.gamma_hat.abs())
            .collect();
        let worst = drifts.iter().copied().fold(0.0, f64::max);
        verdicts.push(Verdict::new(
            "epsilon_stability",
            worst <= EPSILON_DRIFT,
            format!("largest relative change under epsilon/2: {:.2}%", 100.0 * worst),
        ));
    }

    Ok(ExperimentOutput {
        table,
        results: json!({
            "s": knobs.s,
            "energy": knobs.energy,
            "volume": g.n_vertices(),
            "pairs": pairs.len(),
            "estimates": main.iter().map(estimate_json).collect::<Vec<_>>(),
            "half_epsilon_estimates": halved.iter().map(estimate_json).collect::<Vec<_>>(),
        }),
        verdicts,
        extra: Vec::new(),
    })
}
