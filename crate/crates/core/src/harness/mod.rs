//! Config-driven experiments: loading, running, and writing CSV and SVG output.

pub mod config;
pub mod experiment;
pub mod export;
pub mod mnist;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use config::{load_config, ExperimentConfig};
pub use experiment::{run_experiment, run_speedup, CellResult, Completion, ExperimentResult};
pub use mnist::{load_mnist_idx, MnistSubset};

use crate::error::Result;
use crate::method::Trace;
use crate::metrics::Metric;
use crate::stochastic::SpeedupCell;
use export::format_value;
use svg::{Chart, Scale, Series};

/// File-name-safe form of a label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `summary.csv`: one row per cell plus a `mean` row per stochastic label.
pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("label,method,seed,status,last_round");
    for m in &result.metrics {
        write!(s, ",{m}").unwrap();
    }
    s.push('\n');
    let mut row = |label: &str, method: &str, seed: &str, status: &str, trace: Option<&Trace>| {
        write!(s, "{label},{method},{seed},{status}").unwrap();
        match trace {
            Some(t) => {
                write!(s, ",{}", t.rounds.last().copied().unwrap_or(0)).unwrap();
                for v in t.values.last().into_iter().flatten() {
                    write!(s, ",{}", format_value(*v)).unwrap();
                }
            }
            None => {
                s.push(',');
                for _ in &result.metrics {
                    s.push(',');
                }
            }
        }
        s.push('\n');
    };
    for cell in &result.cells {
        let seed = cell.seed.map(|v| v.to_string()).unwrap_or_default();
        match &cell.outcome {
            Ok(t) => row(&cell.label, &cell.method, &seed, "ok", Some(t)),
            Err(e) => row(
                &cell.label,
                &cell.method,
                &seed,
                &format!("failed: {}", e.replace([',', '\n'], ";")),
                None,
            ),
        }
    }
    for l in result.labels.iter().filter(|l| l.stochastic) {
        let status = if l.completed == l.total {
            "ok".to_string()
        } else {
            format!("incomplete {}/{}", l.completed, l.total)
        };
        row(&l.label, &l.method, "mean", &status, l.mean.as_ref());
    }
    s
}

/// Writes per-label CSVs (seed-averaged for stochastic methods), per-seed
/// CSVs, `summary.csv`, trace metadata and the resolved config. Returns the
/// files written.
pub fn write_results(result: &ExperimentResult, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let mut metadata = BTreeMap::new();
    for l in &result.labels {
        if let Some(t) = &l.mean {
            put(format!("{}.csv", slug(&l.label)), export::trace_csv(t))?;
            metadata.insert(l.label.clone(), t.metadata.clone());
        }
    }
    for cell in &result.cells {
        if let (Some(seed), Ok(t)) = (cell.seed, &cell.outcome) {
            put(format!("{}_seed{seed}.csv", slug(&cell.label)), export::trace_csv(t))?;
        }
    }
    put("summary.csv".into(), summary_csv(result))?;
    put(
        "metadata.json".into(),
        serde_json::to_string_pretty(&metadata).expect("metadata serializes") + "\n",
    )?;
    put("config.json".into(), cfg.to_json() + "\n")?;
    Ok(written)
}

/// One log-y chart per metric with one series per label. `epoch` as the x
/// axis needs the epoch metric in the traces.
pub fn plot_metric(traces: &[(String, Trace)], metric: Metric, by_epoch: bool) -> Result<String> {
    let mut series = Vec::new();
    for (label, t) in traces {
        let Some(ys) = t.column(metric) else { continue };
        let xs = if by_epoch {
            match t.column(Metric::Epoch) {
                Some(e) => e,
                None => continue,
            }
        } else {
            t.rounds_f64()
        };
        series.push(Series::new(label.clone(), &xs, &ys));
    }
    let x_label = if by_epoch { "epochs" } else { "round" };
    svg::render(
        &Chart::log_y(format!("{metric} vs {x_label}"), x_label, metric.name()),
        &series,
    )
}

/// Writes `<metric>.svg` (and `<metric>_epochs.svg` when epochs are logged)
/// for every logged metric except `epoch`.
pub fn write_plots(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let traces: Vec<(String, Trace)> = result
        .labels
        .iter()
        .filter_map(|l| l.mean.clone().map(|t| (l.label.clone(), t)))
        .collect();
    plot_traces(&traces, &result.metrics, dir)
}

pub fn plot_traces(traces: &[(String, Trace)], metrics: &[Metric], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let has_epoch = metrics.contains(&Metric::Epoch);
    for &m in metrics.iter().filter(|&&m| m != Metric::Epoch) {
        let mut variants = vec![(false, format!("{m}.svg"))];
        if has_epoch {
            variants.push((true, format!("{m}_epochs.svg")));
        }
        for (by_epoch, name) in variants {
            match plot_metric(traces, m, by_epoch) {
                Ok(svg) => {
                    let path = dir.join(name);
                    std::fs::write(&path, svg)?;
                    out.push(path);
                }
                Err(e) => log::warn!("skipping {name}: {e}"),
            }
        }
    }
    Ok(out)
}

/// Reads a trace CSV written by [`write_results`].
pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path)?;
    let (header, rows) = export::read_csv(&text)?;
    let metrics = header[1..]
        .iter()
        .map(|h| h.parse::<Metric>())
        .collect::<Result<Vec<Metric>>>()?;
    Ok(Trace {
        method: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        metrics,
        rounds: rows.iter().map(|r| r[0] as usize).collect(),
        values: rows.iter().map(|r| r[1..].to_vec()).collect(),
        metadata: BTreeMap::new(),
    })
}

pub fn speedup_csv(cells: &[SpeedupCell]) -> String {
    let mut s = String::from("nodes,baseline_iterations,method_iterations,speedup\n");
    let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
    for c in cells {
        writeln!(
            s,
            "{},{},{},{}",
            c.nodes,
            opt(c.baseline_iterations),
            opt(c.method_iterations),
            c.speedup.map(format_value).unwrap_or_default()
        )
        .unwrap();
    }
    s
}

/// Speedup against node count, with the ideal `speedup = n` line dashed.
pub fn speedup_svg(cells: &[SpeedupCell], method: &str) -> Result<String> {
    let reached: Vec<(f64, f64)> = cells.iter().filter_map(|c| c.speedup.map(|v| (c.nodes as f64, v))).collect();
    let xs: Vec<f64> = reached.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = reached.iter().map(|p| p.1).collect();
    let ns: Vec<f64> = cells.iter().map(|c| c.nodes as f64).collect();
    let mut ideal = Series::new("linear", &ns, &ns);
    ideal.dashed = true;
    let chart = Chart {
        title: format!("{method} speedup"),
        x_label: "nodes".into(),
        y_label: "speedup".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
        markers: true,
    };
    svg::render(&chart, &[Series::new(method, &xs, &ys), ideal])
}
