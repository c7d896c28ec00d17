use crate::error::{Error, Result};
use crate::train::{read_metrics, RunConfig, Split, METRICS_FILE};
use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub dataset: String,
    pub pipeline: String,
    pub views: String,
    pub seed: u64,
    /// Final-epoch test accuracies; `None` when the metrics are absent.
    pub result: Option<(f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub dataset: String,
    pub pipeline: String,
    pub views: String,
    pub runs: usize,
    pub single: (f64, f64),
    pub agg: Option<(f64, f64)>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn dataset_name(cfg: &RunConfig) -> String {
    use crate::train::DataSpec;
    match &cfg.data {
        DataSpec::Cifar10 { .. } => "cifar10".into(),
        DataSpec::Cifar100 { .. } => "cifar100".into(),
        DataSpec::Synthetic { classes, .. } => format!("synthetic{classes}"),
    }
}

/// Run directories under `root`: `root` itself, its children, or the
/// children of `root/runs`.
fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(CONFIG_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let base = if root.join("runs").is_dir() {
        root.join("runs")
    } else {
        root.to_path_buf()
    };
    if !base.is_dir() {
        return Err(Error::Data(format!(
            "{} is not a directory",
            base.display()
        )));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&base)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(CONFIG_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn summarize(dir: &Path) -> Result<RunSummary> {
    let cfg = RunConfig::from_json(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let metrics = dir.join(METRICS_FILE);
    let result = if metrics.is_file() {
        read_metrics(&metrics)
            .ok()
            .and_then(|rows| rows.into_iter().rev().find(|r| r.split == Split::Test))
            .map(|r| (r.acc_single, r.acc_agg))
    } else {
        None
    };
    let views = match cfg.pipeline {
        crate::net::Pipeline::Supervised => "identity".to_string(),
        _ => cfg.views.to_string(),
    };
    Ok(RunSummary {
        run_id: cfg.run_id.clone(),
        dataset: dataset_name(&cfg),
        pipeline: cfg.pipeline.to_string(),
        views,
        seed: cfg.seed,
        result,
    })
}

pub fn collect(root: &Path) -> Result<(Vec<RunSummary>, Vec<GroupSummary>)> {
    let runs = run_dirs(root)?
        .iter()
        .map(|d| summarize(d))
        .collect::<Result<Vec<_>>>()?;
    let mut groups: BTreeMap<(String, String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        groups
            .entry((r.dataset.clone(), r.pipeline.clone(), r.views.clone()))
            .or_default()
            .push(r);
    }
    let summaries = groups
        .into_iter()
        .filter_map(|((dataset, pipeline, views), members)| {
            let done: Vec<(f64, Option<f64>)> = members.iter().filter_map(|r| r.result).collect();
            if done.is_empty() {
                return None;
            }
            let single: Vec<f64> = done.iter().map(|d| d.0).collect();
            let agg: Vec<f64> = done.iter().filter_map(|d| d.1).collect();
            Some(GroupSummary {
                dataset,
                pipeline,
                views,
                runs: done.len(),
                single: mean_std(&single),
                agg: (agg.len() == done.len()).then(|| mean_std(&agg)),
            })
        })
        .collect();
    Ok((runs, summaries))
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn pm((m, s): (f64, f64)) -> String {
    format!("{} ± {}", pct(m), pct(s))
}

pub fn render(runs: &[RunSummary], groups: &[GroupSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<12} {:<11} {:<28} {:>6} {:>9} {:>9}",
        "run", "dataset", "pipeline", "views", "seed", "single", "agg"
    );
    for r in runs {
        let (s, a) = match r.result {
            Some((s, a)) => (pct(s), a.map(pct).unwrap_or_else(|| "-".into())),
            None => ("absent".into(), "absent".into()),
        };
        let _ = writeln!(
            out,
            "{:<28} {:<12} {:<11} {:<28} {:>6} {:>9} {:>9}",
            r.run_id, r.dataset, r.pipeline, r.views, r.seed, s, a
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<12} {:<11} {:<28} {:>4} {:>16} {:>16}",
        "dataset", "pipeline", "views", "n", "single (%)", "agg (%)"
    );
    for g in groups {
        let _ = writeln!(
            out,
            "{:<12} {:<11} {:<28} {:>4} {:>16} {:>16}",
            g.dataset,
            g.pipeline,
            g.views,
            g.runs,
            pm(g.single),
            g.agg.map(pm).unwrap_or_else(|| "-".into())
        );
    }
    out
}

/// Writes the per-run table as CSV.
pub fn write_csv(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "run_id",
        "dataset",
        "pipeline",
        "views",
        "seed",
        "status",
        "acc_single",
        "acc_agg",
    ])?;
    for r in runs {
        let (status, s, a) = match r.result {
            Some((s, a)) => (
                "ok",
                s.to_string(),
                a.map(|v| v.to_string()).unwrap_or_default(),
            ),
            None => ("absent", String::new(), String::new()),
        };
        w.write_record([
            &r.run_id,
            &r.dataset,
            &r.pipeline,
            &r.views,
            &r.seed.to_string(),
            status,
            &s,
            &a,
        ])?;
    }
    w.flush()?;
    Ok(())
}
