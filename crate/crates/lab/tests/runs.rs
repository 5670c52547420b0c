use std::path::Path;

use canopy_lab::config::{Experiment, ExperimentConfig, ExperimentKind};
use canopy_lab::output::Table;
use canopy_lab::plots::emit_plot_data;
use canopy_lab::run;

fn summary(dir: &Path, kind: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{kind}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn small(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(kind);
    cfg.output_dir = dir.to_path_buf();
    cfg.workers = 1;
    match &mut cfg.experiment {
        Experiment::Oracle(o) => {
            o.samples = 5;
            o.inertia_instances = 6;
        }
        Experiment::Wegner(w) => w.trials = 200,
        Experiment::Minami(m) => m.trials = 300,
        Experiment::Fracmom(f) => {
            f.trials = 60;
            f.bootstrap_reps = 30;
        }
        Experiment::Dos(d) => {
            cfg.model.depth = 5;
            d.bethe_trials = 20;
            d.canopy_depth = 7;
            d.canopy_trials = 3;
            d.n_max = 4;
            d.bin_width = 0.5;
        }
        Experiment::Process(p) => {
            p.depths = vec![5, 7];
            p.trials = 1000;
            p.bootstrap_reps = 30;
            p.dos_trials = 3;
            p.canopy_depth = 7;
            p.n_max = 4;
        }
        Experiment::Geometry(g) => g.export_coo = true,
    }
    cfg
}

#[test]
fn geometry_reference_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&small(ExperimentKind::Geometry, dir.path())).unwrap();
    assert!(m.pass);
    let s = summary(dir.path(), "geometry");
    assert_eq!(s["results"]["vertices"], 22);
    assert_eq!(s["results"]["blocks"], 7);
    assert_eq!(s["results"]["strict"], true);
    let files: Vec<&str> = m.outputs.iter().map(|d| d.file.as_str()).collect();
    assert_eq!(files, ["geometry.csv", "geometry_summary.json", "geometry_coo.csv"]);
    let coo = Table::read(&dir.path().join("geometry_coo.csv")).unwrap();
    // diagonal plus both directions of every edge
    assert_eq!(coo.rows.len(), 22 + 2 * 21);
}

#[test]
fn oracle_small_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&small(ExperimentKind::Oracle, dir.path())).unwrap();
    for v in &m.verdicts {
        assert!(v.pass, "{}: {}", v.name, v.detail);
    }
    let s = summary(dir.path(), "oracle");
    // K=2, m0=1, L=2 has no strict tiling
    assert_eq!(s["results"]["skipped"].as_array().unwrap().len(), 1);
    assert_eq!(s["results"]["geometries"].as_array().unwrap().len(), 3);
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    for kind in [ExperimentKind::Wegner, ExperimentKind::Process, ExperimentKind::Fracmom] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = small(kind, a.path());
        let mut cb = small(kind, b.path());
        ca.workers = 1;
        cb.workers = 3;
        let ma = run(&ca).unwrap();
        let mb = run(&cb).unwrap();
        assert_eq!(ma.digests(), mb.digests(), "{kind:?}");
        let mut cc = small(kind, b.path());
        cc.seed += 1;
        assert_ne!(run(&cc).unwrap().digests(), ma.digests(), "{kind:?}");
    }
}

#[test]
fn plot_tables() {
    let dir = tempfile::tempdir().unwrap();
    run(&small(ExperimentKind::Process, dir.path())).unwrap();
    let files = emit_plot_data(dir.path()).unwrap();
    assert_eq!(files[0].file, "plot_counts.csv");
    let t = Table::read(&dir.path().join("plot_counts.csv")).unwrap();
    assert_eq!(t.header, ["series", "x", "y", "yerr"]);
    let fitted: f64 = t.rows.iter().filter(|r| r[0] == "fitted").map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((fitted - 1.0).abs() < 1e-9);
    let emp: f64 = t.rows.iter().filter(|r| r[0] == "empirical").map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((emp - 1.0).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    run(&small(ExperimentKind::Dos, dir.path())).unwrap();
    emit_plot_data(dir.path()).unwrap();
    let t = Table::read(&dir.path().join("plot_dos.csv")).unwrap();
    let bins = Table::read(&dir.path().join("dos.csv")).unwrap().rows.len();
    assert_eq!(t.rows.iter().filter(|r| r[0] == "lhs").count(), bins);
    assert_eq!(t.rows.iter().filter(|r| r[0] == "rhs").count(), bins);

    let dir = tempfile::tempdir().unwrap();
    run(&small(ExperimentKind::Fracmom, dir.path())).unwrap();
    emit_plot_data(dir.path()).unwrap();
    let t = Table::read(&dir.path().join("plot_decay.csv")).unwrap();
    let moments = Table::read(&dir.path().join("fracmom.csv")).unwrap();
    assert_eq!(t.rows.len(), moments.rows.len());
    // 3 couplings x 2 epsilons
    let series: std::collections::BTreeSet<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(series.len(), 6);

    let empty = tempfile::tempdir().unwrap();
    assert!(emit_plot_data(empty.path()).is_err());
}

#[test]
fn minami_and_wegner_summaries() {
    let dir = tempfile::tempdir().unwrap();
    run(&small(ExperimentKind::Minami, dir.path())).unwrap();
    let s = summary(dir.path(), "minami");
    assert!((s["results"]["bound"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(s["results"]["common_rank"], 3);

    let dir = tempfile::tempdir().unwrap();
    let m = run(&small(ExperimentKind::Wegner, dir.path())).unwrap();
    let s = summary(dir.path(), "wegner");
    assert_eq!(s["results"]["volume"], 94);
    assert!(s["config"].get("workers").is_none());
    assert_eq!(m.config.workers, 1);
    let t = Table::read(&dir.path().join("wegner.csv")).unwrap();
    assert_eq!(t.rows.len(), 4);
}
