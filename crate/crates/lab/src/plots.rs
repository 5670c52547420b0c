//! Long-format `(series, x, y, yerr)` tables for plotting, built from the
//! files of a finished run.

use std::path::Path;

use serde_json::Value;

use crate::config::ExperimentKind;
use crate::error::{LabError, LabResult};
use crate::experiments::read_manifest;
use crate::output::{num, write_file, FileDigest, Table};

const PMF_NORMALIZATION_TOL: f64 = 1e-9;

fn long_table() -> Table {
    Table::new(&["series", "x", "y", "yerr"])
}

fn read_table(dir: &Path, name: &str) -> LabResult<Table> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(LabError::MissingInput(path.display().to_string()));
    }
    Table::read(&path)
}

fn read_summary(dir: &Path, kind: &str) -> LabResult<Value> {
    let path = dir.join(format!("{kind}_summary.json"));
    let text = std::fs::read_to_string(&path).map_err(|_| LabError::MissingInput(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

fn col(t: &Table, name: &str) -> LabResult<usize> {
    t.column(name)
        .ok_or_else(|| LabError::MissingInput(format!("column `{name}`")))
}

fn f64s(v: &Value, what: &str) -> LabResult<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| LabError::MissingInput(what.to_string()))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| LabError::MissingInput(what.to_string())))
        .collect()
}

/// Reshapes the columns `x`, `y`, `yerr` of `src` under a series label
/// computed per row.
fn reshape<F: Fn(&[String]) -> String>(src: &Table, x: &str, y: &str, yerr: Option<&str>, series: F) -> LabResult<Table> {
    let (ix, iy) = (col(src, x)?, col(src, y)?);
    let ie = yerr.map(|e| col(src, e)).transpose()?;
    let mut out = long_table();
    for r in &src.rows {
        let err = ie.map(|i| r[i].clone()).unwrap_or_else(|| "0".into());
        out.push([series(r), r[ix].clone(), r[iy].clone(), err]);
    }
    Ok(out)
}

/// Writes the plot tables of the run in `dir` and returns their digests.
pub fn emit_plot_data(dir: &Path) -> LabResult<Vec<FileDigest>> {
    let manifest = read_manifest(dir)?;
    let kind = ExperimentKind::from_name(&manifest.kind)
        .ok_or_else(|| LabError::MissingInput(format!("unknown kind `{}`", manifest.kind)))?;
    let main = read_table(dir, &format!("{}.csv", kind.name()))?;
    let files: Vec<(&str, Table)> = match kind {
        ExperimentKind::Geometry => {
            let s = read_summary(dir, "geometry")?;
            let sizes = f64s(&s["results"]["level_sizes"], "results.level_sizes")?;
            let mut t = long_table();
            for (l, n) in sizes.iter().enumerate() {
                t.push(["vertices".into(), l.to_string(), num(*n), "0".into()]);
            }
            vec![("plot_levels.csv", t)]
        }
        ExperimentKind::Oracle => {
            let (ic, im, il) = (col(&main, "check")?, col(&main, "block_radius")?, col(&main, "depth")?);
            let mut src = main.clone();
            src.rows.retain(|r| r[ic] != "inertia");
            let t = reshape(&src, "sample", "value", None, |r| format!("{}_m{}_L{}", r[ic], r[im], r[il]))?;
            vec![("plot_oracle.csv", t)]
        }
        ExperimentKind::Wegner => {
            let is = col(&main, "series")?;
            vec![("plot_wegner.csv", reshape(&main, "width", "ratio", Some("ratio_stderr"), |r| r[is].clone())?)]
        }
        ExperimentKind::Minami => {
            vec![("plot_minami_tail.csv", reshape(&main, "m", "tail_probability", Some("stderr"), |_| "tail".into())?)]
        }
        ExperimentKind::Fracmom => {
            let (il, ie) = (col(&main, "lambda")?, col(&main, "epsilon")?);
            let t = reshape(&main, "distance", "mean", Some("stderr"), |r| format!("lambda={} epsilon={}", r[il], r[ie]))?;
            vec![("plot_decay.csv", t)]
        }
        ExperimentKind::Dos => {
            let mut t = reshape(&main, "center", "lhs", Some("lhs_err"), |_| "lhs".into())?;
            t.rows.extend(reshape(&main, "center", "rhs", Some("rhs_err"), |_| "rhs".into())?.rows);
            vec![("plot_dos.csv", t)]
        }
        ExperimentKind::Process => {
            let s = read_summary(dir, "process")?;
            let fit = &s["results"]["fit"];
            let pmf = f64s(&fit["pmf"], "results.fit.pmf")?;
            let emp = f64s(&fit["empirical"], "results.fit.empirical")?;
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > PMF_NORMALIZATION_TOL {
                return Err(LabError::MissingInput(format!("fitted pmf sums to {total}, not 1")));
            }
            let depth = fit["depth"].as_u64().unwrap_or(0).to_string();
            let trials = main.rows.iter().filter(|r| r[0] == depth).count().max(1) as f64;
            let mut t = long_table();
            for (n, p) in emp.iter().enumerate() {
                t.push(["empirical".into(), n.to_string(), num(*p), num((p * (1.0 - p) / trials).sqrt())]);
            }
            for (n, p) in pmf.iter().enumerate() {
                t.push(["fitted".into(), n.to_string(), num(*p), "0".into()]);
            }
            vec![("plot_counts.csv", t)]
        }
    };
    files
        .into_iter()
        .map(|(name, t)| write_file(dir, name, &t.to_bytes()?))
        .collect()
}
