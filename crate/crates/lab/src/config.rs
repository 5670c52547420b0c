//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use canopy_core::disorder::DensitySpec;
use canopy_core::spectral::SpectralCdf;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Geometry,
    Oracle,
    Wegner,
    Minami,
    Fracmom,
    Dos,
    Process,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Geometry,
        ExperimentKind::Oracle,
        ExperimentKind::Wegner,
        ExperimentKind::Minami,
        ExperimentKind::Fracmom,
        ExperimentKind::Dos,
        ExperimentKind::Process,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Geometry => "geometry",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::Minami => "minami",
            ExperimentKind::Fracmom => "fracmom",
            ExperimentKind::Dos => "dos",
            ExperimentKind::Process => "process",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform { lo: f64, hi: f64 },
    TruncatedGaussian { mean: f64, sigma: f64, lo: f64, hi: f64 },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl DensityConfig {
    pub fn spec(&self) -> DensitySpec {
        match *self {
            DensityConfig::Uniform { lo, hi } => DensitySpec::Uniform { lo, hi },
            DensityConfig::TruncatedGaussian { mean, sigma, lo, hi } => {
                DensitySpec::TruncatedGaussian { mean, sigma, lo, hi }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub branching: usize,
    pub block_radius: usize,
    pub depth: usize,
    pub lambda: f64,
    #[serde(default)]
    pub density: DensityConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub y_min: f64,
    pub y_max: f64,
    pub step: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let d = SpectralCdf::default();
        QuadratureConfig {
            y_min: d.y_min,
            y_max: d.y_max,
            step: d.step,
        }
    }
}

impl QuadratureConfig {
    pub fn spec(&self) -> SpectralCdf {
        SpectralCdf {
            y_min: self.y_min,
            y_max: self.y_max,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryKnobs {
    /// Also write the sparse operator of trial 0 as `(row, col, value)`.
    pub export_coo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleKnobs {
    pub block_radii: Vec<usize>,
    pub depths: Vec<usize>,
    /// Random `(z, ω)` draws per geometry.
    pub samples: u64,
    pub im_z_range: [f64; 2],
    pub relative_tolerance: f64,
    pub herglotz_tolerance: f64,
    pub inertia_instances: u64,
    pub inertia_max_vertices: usize,
}

impl Default for OracleKnobs {
    fn default() -> Self {
        OracleKnobs {
            block_radii: vec![0, 1],
            depths: vec![2, 3],
            samples: 100,
            im_z_range: [1e-3, 1.0],
            relative_tolerance: 1e-9,
            herglotz_tolerance: 1e-12,
            inertia_instances: 100,
            inertia_max_vertices: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WegnerKnobs {
    pub interval: [f64; 2],
    pub trials: u64,
    pub scaling_center: f64,
    pub scaling_widths: Vec<f64>,
}

impl Default for WegnerKnobs {
    fn default() -> Self {
        WegnerKnobs {
            interval: [0.0, 0.5],
            trials: 2000,
            scaling_center: 0.5,
            scaling_widths: vec![0.1, 0.2, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinamiKnobs {
    pub lower: f64,
    /// Window width; when absent it is chosen so the bound equals
    /// `target_bound`.
    pub width: Option<f64>,
    pub target_bound: f64,
    pub trials: u64,
}

impl Default for MinamiKnobs {
    fn default() -> Self {
        MinamiKnobs {
            lower: 10.0,
            width: None,
            target_bound: 0.1,
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FracmomKnobs {
    pub s: f64,
    pub energy: f64,
    pub epsilon: f64,
    /// Couplings to sweep; empty means the model coupling only.
    pub lambdas: Vec<f64>,
    pub trials: u64,
    pub bootstrap_reps: usize,
    /// Rerun at `epsilon/2` and compare.
    pub halve_epsilon: bool,
    /// Couplings from here on must give a significant decay rate.
    pub significant_from: f64,
}

impl Default for FracmomKnobs {
    fn default() -> Self {
        FracmomKnobs {
            s: 0.5,
            energy: 0.0,
            epsilon: 1e-3,
            lambdas: vec![10.0, 40.0, 160.0],
            trials: 2000,
            bootstrap_reps: 200,
            halve_epsilon: true,
            significant_from: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DosKnobs {
    pub bethe_trials: u64,
    pub canopy_depth: usize,
    pub canopy_trials: u64,
    pub n_max: usize,
    pub bin_width: f64,
    /// Defaults to `[-(K+1), K+1+λ·sup supp ρ)`.
    pub grid: Option<[f64; 2]>,
    pub min_agreement: f64,
    pub quadrature: QuadratureConfig,
}

impl Default for DosKnobs {
    fn default() -> Self {
        DosKnobs {
            bethe_trials: 500,
            canopy_depth: 13,
            canopy_trials: 500,
            n_max: 10,
            bin_width: 0.25,
            grid: None,
            min_agreement: 0.9,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessKnobs {
    pub energy: f64,
    pub window: [f64; 2],
    pub alpha: f64,
    /// Depth sequence; the model depth is ignored.
    pub depths: Vec<usize>,
    pub trials: u64,
    pub bootstrap_reps: usize,
    pub max_tv: f64,
    /// Canopy-formula estimate of the density of states at `energy`.
    pub dos_half_width: f64,
    pub dos_trials: u64,
    pub canopy_depth: usize,
    pub n_max: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for ProcessKnobs {
    fn default() -> Self {
        ProcessKnobs {
            energy: 0.0,
            window: [-1.0, 1.0],
            alpha: 0.4,
            depths: vec![5, 6, 7],
            trials: 10_000,
            bootstrap_reps: 200,
            max_tv: 0.05,
            dos_half_width: 0.05,
            dos_trials: 500,
            canopy_depth: 13,
            n_max: 10,
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Geometry(GeometryKnobs),
    Oracle(OracleKnobs),
    Wegner(WegnerKnobs),
    Minami(MinamiKnobs),
    Fracmom(FracmomKnobs),
    Dos(DosKnobs),
    Process(ProcessKnobs),
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Experiment::Geometry(_) => ExperimentKind::Geometry,
            Experiment::Oracle(_) => ExperimentKind::Oracle,
            Experiment::Wegner(_) => ExperimentKind::Wegner,
            Experiment::Minami(_) => ExperimentKind::Minami,
            Experiment::Fracmom(_) => ExperimentKind::Fracmom,
            Experiment::Dos(_) => ExperimentKind::Dos,
            Experiment::Process(_) => ExperimentKind::Process,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub experiment: Experiment,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The reference setting of each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let model = |block_radius, depth, lambda| ModelConfig {
            branching: 2,
            block_radius,
            depth,
            lambda,
            density: DensityConfig::default(),
        };
        let (model, experiment) = match kind {
            ExperimentKind::Geometry => (model(1, 3, 1.0), Experiment::Geometry(Default::default())),
            ExperimentKind::Oracle => (model(1, 3, 5.0), Experiment::Oracle(Default::default())),
            ExperimentKind::Wegner => (model(1, 5, 1.0), Experiment::Wegner(Default::default())),
            ExperimentKind::Minami => (model(1, 5, 20.0), Experiment::Minami(Default::default())),
            ExperimentKind::Fracmom => (model(1, 5, 40.0), Experiment::Fracmom(Default::default())),
            ExperimentKind::Dos => (model(1, 7, 5.0), Experiment::Dos(Default::default())),
            ExperimentKind::Process => (model(1, 7, 50.0), Experiment::Process(Default::default())),
        };
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            workers: 0,
            output_dir: default_output_dir(),
            model,
            experiment,
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind()
    }

    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| LabError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The part of the configuration that determines the results: everything
    /// except worker count and output location.
    pub fn result_echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        obj.remove("workers");
        obj.remove("output_dir");
        v
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |path: &str, message: String| {
            Err(LabError::Config {
                path: path.to_string(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        let m = &self.model;
        if m.branching < 2 {
            return bad("model.branching", format!("need K >= 2, got {}", m.branching));
        }
        if !m.lambda.is_finite() || m.lambda < 0.0 {
            return bad("model.lambda", format!("need a finite lambda >= 0, got {}", m.lambda));
        }
        if let Err(e) = m.density.spec().validate() {
            return bad("model.density", e.to_string());
        }
        if let Err(e) = canopy_core::tree::TreeParams::new(m.branching, m.block_radius, m.depth) {
            return bad("model", e.to_string());
        }
        let positive = |path: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                bad(path, format!("must be finite and positive, got {x}"))
            }
        };
        let trials = |path: &str, t: u64, min: u64| {
            if t >= min {
                Ok(())
            } else {
                bad(path, format!("need at least {min} trials, got {t}"))
            }
        };
        let interval = |path: &str, i: [f64; 2]| {
            if i[0].is_finite() && i[1].is_finite() && i[0] <= i[1] {
                Ok(())
            } else {
                bad(path, format!("invalid interval [{}, {})", i[0], i[1]))
            }
        };
        let quad = |path: &str, q: &QuadratureConfig| {
            q.spec().validate().or_else(|e| bad(path, e.to_string()))
        };
        match &self.experiment {
            Experiment::Geometry(_) => Ok(()),
            Experiment::Oracle(o) => {
                if o.block_radii.is_empty() || o.depths.is_empty() {
                    return bad("experiment.oracle", "need at least one radius and depth".into());
                }
                if !(o.im_z_range[0] > 0.0 && o.im_z_range[0] <= o.im_z_range[1]) {
                    return bad("experiment.oracle.im_z_range", "need 0 < lo <= hi".into());
                }
                trials("experiment.oracle.samples", o.samples, 1)?;
                positive("experiment.oracle.relative_tolerance", o.relative_tolerance)?;
                if o.inertia_max_vertices < 4 {
                    return bad("experiment.oracle.inertia_max_vertices", "need at least 4".into());
                }
                Ok(())
            }
            Experiment::Wegner(w) => {
                positive("model.lambda", m.lambda)?;
                interval("experiment.wegner.interval", w.interval)?;
                trials("experiment.wegner.trials", w.trials, 100)?;
                for (i, &x) in w.scaling_widths.iter().enumerate() {
                    positive(&format!("experiment.wegner.scaling_widths[{i}]"), x)?;
                }
                Ok(())
            }
            Experiment::Minami(n) => {
                positive("model.lambda", m.lambda)?;
                if let Some(w) = n.width {
                    positive("experiment.minami.width", w)?;
                } else {
                    positive("experiment.minami.target_bound", n.target_bound)?;
                }
                if !n.lower.is_finite() {
                    return bad("experiment.minami.lower", "must be finite".into());
                }
                trials("experiment.minami.trials", n.trials, 1)
            }
            Experiment::Fracmom(f) => {
                if !(f.s > 0.0 && f.s < 1.0) {
                    return bad("experiment.fracmom.s", format!("need 0 < s < 1, got {}", f.s));
                }
                positive("experiment.fracmom.epsilon", f.epsilon)?;
                for (i, &l) in f.lambdas.iter().enumerate() {
                    positive(&format!("experiment.fracmom.lambdas[{i}]"), l)?;
                }
                trials("experiment.fracmom.trials", f.trials, 2)
            }
            Experiment::Dos(d) => {
                positive("experiment.dos.bin_width", d.bin_width)?;
                if let Some(g) = d.grid {
                    interval("experiment.dos.grid", g)?;
                }
                trials("experiment.dos.bethe_trials", d.bethe_trials, 2)?;
                trials("experiment.dos.canopy_trials", d.canopy_trials, 2)?;
                if !(0.0..=1.0).contains(&d.min_agreement) {
                    return bad("experiment.dos.min_agreement", format!("need a fraction in [0, 1], got {}", d.min_agreement));
                }
                quad("experiment.dos.quadrature", &d.quadrature)
            }
            Experiment::Process(p) => {
                interval("experiment.process.window", p.window)?;
                if !(p.alpha > 0.0 && p.alpha < 0.5) {
                    return bad("experiment.process.alpha", format!("need 0 < alpha < 1/2, got {}", p.alpha));
                }
                if p.depths.is_empty() {
                    return bad("experiment.process.depths", "need at least one depth".into());
                }
                for (i, &l) in p.depths.iter().enumerate() {
                    let split = canopy_core::process::split_depth(l, m.block_radius, p.alpha);
                    if split == 0 || l < split + m.block_radius {
                        return bad(
                            &format!("experiment.process.depths[{i}]"),
                            format!("depth {l} leaves no admissible split at alpha {}", p.alpha),
                        );
                    }
                }
                trials("experiment.process.trials", p.trials, canopy_core::process::MIN_FIT_TRIALS as u64)?;
                trials("experiment.process.dos_trials", p.dos_trials, 2)?;
                positive("experiment.process.dos_half_width", p.dos_half_width)?;
                if !(0.0..=1.0).contains(&p.max_tv) {
                    return bad("experiment.process.max_tv", format!("need a value in [0, 1], got {}", p.max_tv));
                }
                quad("experiment.process.quadrature", &p.quadrature)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::preset(kind);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.kind(), kind);
            assert_eq!(ExperimentKind::from_name(kind.name()), Some(kind));
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::preset(ExperimentKind::Wegner).to_json()).unwrap();
        v["experiment"]["wegner"]["trails"] = 5.into();
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        match err {
            LabError::Config { path, message } => {
                assert_eq!(path, "experiment.wegner.trails");
                assert!(message.contains("trails"), "{message}");
            }
            other => panic!("{other}"),
        }
        v["experiment"]["wegner"].as_object_mut().unwrap().remove("trails");
        v["colour"] = "red".into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(LabError::Config { .. })));
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Process);
        if let Experiment::Process(p) = &mut cfg.experiment {
            p.alpha = 0.7;
        }
        match cfg.validate().unwrap_err() {
            LabError::Config { path, .. } => assert_eq!(path, "experiment.process.alpha"),
            other => panic!("{other}"),
        }
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Wegner);
        cfg.schema_version = 9;
        assert!(matches!(cfg.validate(), Err(LabError::Config { path, .. }) if path == "schema_version"));
        let mut cfg = ExperimentConfig::preset(ExperimentKind::Process);
        if let Experiment::Process(p) = &mut cfg.experiment {
            p.depths = vec![5, 4];
        }
        assert!(matches!(cfg.validate(), Err(LabError::Config { path, .. }) if path == "experiment.process.depths[1]"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let text = r#"{"schema_version": 1, "model": {"branching": "two", "block_radius": 1, "depth": 3, "lambda": 1.0},
                       "experiment": {"geometry": {}}}"#;
        match ExperimentConfig::from_json(text).unwrap_err() {
            LabError::Config { path, .. } => assert_eq!(path, "model.branching"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn result_echo_drops_runtime_fields() {
        let mut a = ExperimentConfig::preset(ExperimentKind::Geometry);
        let mut b = a.clone();
        a.workers = 1;
        b.workers = 4;
        b.output_dir = "elsewhere".into();
        assert_eq!(a.result_echo(), b.result_echo());
    }
}
