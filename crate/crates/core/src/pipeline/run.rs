//! End-to-end run: data, pretraining, joint fit, spectral step, k-means,
//! metrics and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};

use super::config::{DataSource, RunConfig};
use crate::dataset::{
    generate_union_of_subspaces, load_dataset, normalize, save_rows_csv, save_rows_raw, DataMatrix,
};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::self_expression::{block_coordinate_fit, history_to_tsv, FittedModel, HistoryRecord, ProjectorP};
use crate::spectral::{cluster_embedding, spectral_embedding, SpectralDiagnostics};

/// Read one non-negative integer label per line.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::ingestion(path, format!("row {}: label is not a non-negative integer", i + 1)))
        })
        .collect()
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub data: f64,
    pub pretrain: f64,
    pub fit: f64,
    pub spectral: f64,
    pub kmeans: f64,
    pub metrics: f64,
    pub output: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.data + self.pretrain + self.fit + self.spectral + self.kmeans + self.metrics + self.output
    }
}

#[derive(Debug, Clone)]
pub struct ResultsReport {
    pub labels: Vec<usize>,
    pub truth: Option<Vec<usize>>,
    pub metrics: Option<MetricsReport>,
    pub history: Vec<HistoryRecord>,
    pub converged: bool,
    pub n: usize,
    pub dim: usize,
    pub m: usize,
    pub k: usize,
    pub diagnostics: SpectralDiagnostics,
    pub timings: StageTimings,
    pub config_echo: String,
}

impl ResultsReport {
    /// `key=value` lines followed by the verbatim config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status=ok");
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "anchors={}", self.m);
        match &self.metrics {
            Some(m) => s.push_str(&m.to_kv()),
            None => {
                let _ = writeln!(s, "n={}", self.n);
                let _ = writeln!(s, "k={}", self.k);
                let _ = writeln!(s, "metrics=unavailable");
            }
        }
        let _ = writeln!(s, "outer_iterations={}", self.history.len());
        let _ = writeln!(s, "converged={}", self.converged);
        if let Some(last) = self.history.last() {
            let _ = writeln!(s, "final_joint={}", last.joint);
            let _ = writeln!(s, "final_rel_change={}", last.rel_change);
        }
        let d = &self.diagnostics;
        let _ = writeln!(s, "spectral_mode={}", d.mode);
        let _ = writeln!(s, "eig_iterations={}", d.iterations);
        let _ = writeln!(s, "eig_converged={}", d.converged);
        let _ = writeln!(s, "negative_degrees={}", d.negative_degrees);
        if let Some(r) = d.lifted_residual {
            let _ = writeln!(s, "lifted_residual={r}");
        }
        if let Some(g) = d.eigen_gap {
            let _ = writeln!(s, "eigen_gap={g}");
        }
        let t = &self.timings;
        for (name, v) in [
            ("data", t.data),
            ("pretrain", t.pretrain),
            ("fit", t.fit),
            ("spectral", t.spectral),
            ("kmeans", t.kmeans),
            ("metrics", t.metrics),
            ("output", t.output),
            ("total", t.total),
        ] {
            let _ = writeln!(s, "time_{name}={v:.6}");
        }
        s.push_str("\n[config]\n");
        s.push_str(&self.config_echo);
        if !self.config_echo.ends_with('\n') {
            s.push('\n');
        }
        s
    }
}

fn with_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.inspect_err(|e| log::error!("stage {stage} failed: {e}"))
}

fn load_data(cfg: &RunConfig) -> Result<(DataMatrix, Option<Vec<usize>>)> {
    let (raw, truth) = match cfg.data.source {
        DataSource::Synthetic => {
            let g = cfg.data.synthetic.as_ref().expect("validated");
            let ds = generate_union_of_subspaces(g)?;
            (ds.data, Some(ds.labels))
        }
        DataSource::File => {
            let f = cfg.data.file.as_ref().expect("validated");
            let x = load_dataset(&f.path, f.format)?;
            let truth = f.labels.as_deref().map(load_labels).transpose()?;
            if let Some(t) = &truth {
                if t.len() != x.n() {
                    return Err(Error::ingestion(
                        f.labels.as_ref().unwrap(),
                        format!("{} labels for {} samples", t.len(), x.n()),
                    ));
                }
            }
            (x, truth)
        }
    };
    Ok((normalize(&raw, cfg.data.normalize)?, truth))
}

fn dump_affinity(dir: &Path, tag: &str, p: &ProjectorP) -> Result<()> {
    let c = p.values() * p.values().transpose();
    save_rows_raw(dir.join(format!("affinity_{tag}.raw")), &c)?;
    save_rows_csv(dir.join(format!("affinity_{tag}.csv")), &c)
}

fn write_outputs(cfg: &RunConfig, model: &FittedModel, labels: &[usize], embedding: &nalgebra::DMatrix<f64>) -> Result<()> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_labels(&dir.join("labels.txt"), labels)?;
    let path = dir.join("history.tsv");
    fs::write(&path, history_to_tsv(&model.history)).map_err(|e| Error::io(&path, e))?;
    save_rows_raw(dir.join("embedding.raw"), embedding)?;
    if cfg.output.save_model {
        model.save(&dir.join("model"))?;
    }
    let n = model.projector.n();
    if cfg.output.dump_affinity {
        if n <= cfg.output.dense_cap {
            for (iteration, p) in &model.snapshots {
                dump_affinity(dir, &format!("iter{iteration}"), p)?;
            }
            let missing: Vec<usize> = cfg
                .output
                .dump_epochs
                .iter()
                .copied()
                .filter(|e| !model.snapshots.iter().any(|(i, _)| i == e))
                .collect();
            if !missing.is_empty() {
                warn!("no affinity snapshot for iterations {missing:?}; the fit stopped earlier");
            }
            dump_affinity(dir, "final", &model.projector)?;
        } else {
            warn!("affinity dumps skipped: n = {n} exceeds dense cap {}", cfg.output.dense_cap);
        }
    }
    Ok(())
}

/// Run the whole pipeline and write results into `cfg.output.dir`.
/// `config_text` is echoed verbatim into the report; when absent the
/// serialized config is echoed.
pub fn run_pipeline(cfg: &RunConfig, config_text: Option<&str>) -> Result<ResultsReport> {
    let start = Instant::now();
    cfg.validate()?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (x, truth) = with_stage("data", load_data(cfg))?;
    timings.data = t.elapsed().as_secs_f64();
    info!("data: D = {}, n = {}", x.dim(), x.n());

    let k = cfg.model.clusters;
    let fit_cfg = cfg.fit_config(x.dim());
    let model = with_stage("fit", block_coordinate_fit(&x, &fit_cfg))?;
    timings.pretrain = model.pretrain_seconds;
    timings.fit = model.fit_seconds;
    if k > model.m() {
        return Err(Error::config(format!(
            "clusters k = {k} exceeds anchors m = {}; need k <= m",
            model.m()
        )));
    }

    let t = Instant::now();
    let (embedding, diagnostics) = with_stage(
        "spectral",
        spectral_embedding(&model.projector, k, cfg.seeds.base, &cfg.spectral),
    )?;
    timings.spectral = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let assignment = with_stage("kmeans", cluster_embedding(&embedding, k, cfg.seeds.base, &cfg.spectral))?;
    timings.kmeans = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let metrics = match &truth {
        Some(tr) => Some(with_stage(
            "metrics",
            MetricsReport::compute(&assignment.labels, tr, &model.projector, k, cfg.output.dense_cap),
        )?),
        None => None,
    };
    timings.metrics = t.elapsed().as_secs_f64();

    let t = Instant::now();
    with_stage("output", write_outputs(cfg, &model, &assignment.labels, &embedding.h))?;
    let mut report = ResultsReport {
        labels: assignment.labels,
        truth,
        metrics,
        history: model.history.clone(),
        converged: model.converged,
        n: x.n(),
        dim: x.dim(),
        m: model.m(),
        k,
        diagnostics,
        timings,
        config_echo: config_text.map(str::to_owned).unwrap_or_else(|| cfg.to_toml()),
    };
    let path = cfg.output.dir.join("report.txt");
    report.timings.output = t.elapsed().as_secs_f64();
    report.timings.total = start.elapsed().as_secs_f64();
    fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
