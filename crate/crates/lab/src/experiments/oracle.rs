//! Block Schur values against dense LU, Herglotz positivity of block Green
//! matrices, and inertia counts against the dense eigensolver.

use canopy_core::disorder::{derive_seed, sample_disorder, trial_rng};
use canopy_core::hamiltonian::{Geometry, DENSE_CAP};
use canopy_core::resolvent::{green_dense_matrix, BlockResolvent, SpectralParameter};
use canopy_core::runner::TrialRunner;
use canopy_core::spectral::{count_in_interval, eigenvalues};
use canopy_core::Complex64;
use rand::Rng;
use serde_json::json;

use super::ExperimentOutput;
use crate::config::{ExperimentConfig, OracleKnobs};
use crate::error::LabResult;
use crate::output::{num, Table, Verdict};
use crate::runner::Pool;

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Worst block-entry error, worst path-product error and smallest
/// eigenvalue of any `Im` block Green matrix, for one draw.
fn equivalence_sample(g: &Geometry, lambda: f64, cfg: &ExperimentConfig, knobs: &OracleKnobs, seed: u64, t: u64) -> canopy_core::Result<[f64; 3]> {
    let k = g.tree.branching() as f64;
    let mut rng = trial_rng(seed, t);
    let energy = rng.gen_range(-(k + 1.0)..(k + 1.0 + lambda));
    let (lo, hi) = (knobs.im_z_range[0].ln(), knobs.im_z_range[1].ln());
    let eps = if hi > lo { rng.gen_range(lo..hi).exp() } else { knobs.im_z_range[0] };
    let z = SpectralParameter::new(energy, eps)?;
    let dis = sample_disorder(&cfg.model.density.spec(), g.tiling.n_blocks(), derive_seed(seed, 1), t)?;
    let op = g.operator(lambda, &dis)?;
    let dense = green_dense_matrix(&op, z)?;
    let r = BlockResolvent::new(&g.tree, &g.tiling, &op, z)?;
    let (mut block_err, mut min_im) = (0.0f64, f64::INFINITY);
    for &h in g.tiling.heads() {
        let bg = r.block_green(h)?;
        for &x in &bg.members {
            for &y in &bg.members {
                block_err = block_err.max(rel(bg.entry(x, y).expect("member"), dense[(x, y)]));
            }
        }
        min_im = min_im.min(bg.min_imaginary_eigenvalue()?);
    }
    let n = g.n_vertices();
    let mut path_err = 0.0f64;
    for x in 0..n {
        for y in 0..n {
            path_err = path_err.max(rel(r.path_green_product(x, y)?.value, dense[(x, y)]));
        }
    }
    Ok([block_err, path_err, min_im])
}

pub fn run(cfg: &ExperimentConfig, knobs: &OracleKnobs, pool: &Pool) -> LabResult<ExperimentOutput> {
    let kb = cfg.model.branching;
    let lambda = cfg.model.lambda;
    let mut table = Table::new(&["check", "block_radius", "depth", "vertices", "sample", "value", "pass"]);
    let mut configs = Vec::new();
    let mut skipped = Vec::new();
    let (mut worst_err, mut worst_im) = (0.0f64, f64::INFINITY);
    let mut tag = 0u64;
    for &m0 in &knobs.block_radii {
        for &depth in &knobs.depths {
            tag += 1;
            let g = Geometry::bethe(kb, m0, depth)?;
            if !g.tiling.is_strict() {
                skipped.push(json!({"block_radius": m0, "depth": depth, "reason": "no strict tiling"}));
                continue;
            }
            let seed = derive_seed(cfg.seed, tag);
            let rows = pool.run(knobs.samples, |t| equivalence_sample(&g, lambda, cfg, knobs, seed, t))?;
            let (mut e_cfg, mut im_cfg) = (0.0f64, f64::INFINITY);
            for (t, [be, pe, im]) in rows.iter().copied().enumerate() {
                let e = be.max(pe);
                e_cfg = e_cfg.max(e);
                im_cfg = im_cfg.min(im);
                let n = g.n_vertices().to_string();
                table.push(["equivalence".into(), m0.to_string(), depth.to_string(), n.clone(), t.to_string(), num(e), (e <= knobs.relative_tolerance).to_string()]);
                table.push(["herglotz".into(), m0.to_string(), depth.to_string(), n, t.to_string(), num(im), (im >= -knobs.herglotz_tolerance).to_string()]);
            }
            worst_err = worst_err.max(e_cfg);
            worst_im = worst_im.min(im_cfg);
            configs.push(json!({
                "block_radius": m0, "depth": depth, "vertices": g.n_vertices(),
                "max_relative_error": e_cfg, "min_imaginary_eigenvalue": im_cfg,
            }));
        }
    }

    // inertia instances cycle over the geometries that fit under the cap
    let shapes: Vec<Geometry> = [(1, 5), (0, 6), (1, 6), (0, 7), (1, 7), (2, 5)]
        .iter()
        .filter_map(|&(m0, l)| Geometry::bethe(kb, m0, l).ok())
        .filter(|g| g.n_vertices() <= knobs.inertia_max_vertices.min(DENSE_CAP))
        .collect();
    let iseed = derive_seed(cfg.seed, 1000);
    let inertia = if shapes.is_empty() {
        Vec::new()
    } else {
        pool.run(knobs.inertia_instances, |t| {
            let g = &shapes[t as usize % shapes.len()];
            let mut rng = trial_rng(iseed, t);
            let k = kb as f64;
            let lam = rng.gen_range(0.0..20.0);
            let a = rng.gen_range(-(k + 1.0)..(k + 1.0 + lam));
            let b = a + rng.gen_range(0.0..(k + 1.0));
            let op = g.realize(lam, &cfg.model.density.spec(), derive_seed(iseed, 1), t)?;
            let got = count_in_interval(&op, a, b)?;
            let want = eigenvalues(&op, DENSE_CAP)?.bracket_count(a, b);
            Ok((g.tiling.block_radius(), g.tree.height(), g.n_vertices(), got, want))
        })?
    };
    let mut inertia_ok = true;
    for (t, &(m0, l, n, got, want)) in inertia.iter().enumerate() {
        inertia_ok &= got == want;
        table.push(["inertia".into(), m0.to_string(), l.to_string(), n.to_string(), t.to_string(), format!("{got}/{want}"), (got == want).to_string()]);
    }

    let ran = !configs.is_empty();
    let verdicts = vec![
        Verdict::new(
            "oracle_equivalence",
            ran && worst_err <= knobs.relative_tolerance,
            format!("max relative error {worst_err:.3e} (tolerance {:e}) over {} geometries, {} skipped", knobs.relative_tolerance, configs.len(), skipped.len()),
        ),
        Verdict::new(
            "herglotz_positivity",
            ran && worst_im >= -knobs.herglotz_tolerance,
            format!("min eigenvalue of Im block Green {worst_im:.3e} (tolerance -{:e})", knobs.herglotz_tolerance),
        ),
        Verdict::new(
            "inertia_counting",
            !inertia.is_empty() && inertia_ok,
            format!("{} instances, all counts equal: {inertia_ok}", inertia.len()),
        ),
    ];
    Ok(ExperimentOutput {
        table,
        results: json!({
            "geometries": configs,
            "skipped": skipped,
            "max_relative_error": worst_err,
            "min_imaginary_eigenvalue": worst_im,
            "inertia_instances": inertia.len(),
        }),
        verdicts,
        extra: Vec::new(),
    })
}
