//! Joint fit of the autoencoder and the landmark factorization by block
//! coordinate descent.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::factorization::{kmeanspp_indices, landmark_update, procrustes_update, LandmarkMatrix, ProjectorP};
use crate::autoencoder::{
    backward, init_network, load_checkpoint, pretrain, reconstruction_loss, save_checkpoint, subspace_loss,
    Activation, AdamConfig, NetworkParams, OptimizerState, SubspaceTarget,
};
use crate::dataset::{load_columns_raw, load_rows_raw, save_columns_raw, save_rows_raw, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, thin_svd};
use crate::metrics::affinity_relative_change;

/// Number of landmarks: fixed, or the numerical rank of the pretrained
/// latent matrix `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AnchorRaw", into = "AnchorRaw")]
pub enum AnchorCount {
    Fixed(usize),
    Auto,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum AnchorRaw {
    Count(usize),
    Word(String),
}

impl TryFrom<AnchorRaw> for AnchorCount {
    type Error = String;

    fn try_from(raw: AnchorRaw) -> std::result::Result<Self, String> {
        match raw {
            AnchorRaw::Count(m) => Ok(AnchorCount::Fixed(m)),
            AnchorRaw::Word(w) if w == "auto" => Ok(AnchorCount::Auto),
            AnchorRaw::Word(w) => Err(format!("anchors must be an integer or \"auto\", got {w:?}")),
        }
    }
}

impl From<AnchorCount> for AnchorRaw {
    fn from(a: AnchorCount) -> Self {
        match a {
            AnchorCount::Fixed(m) => AnchorRaw::Count(m),
            AnchorCount::Auto => AnchorRaw::Word("auto".into()),
        }
    }
}

impl std::fmt::Display for AnchorCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnchorCount::Fixed(m) => write!(f, "{m}"),
            AnchorCount::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub anchors: AnchorCount,
    /// Relative singular-value threshold for `anchors = "auto"`.
    pub anchor_rank_tol: f64,
    /// `[D, h₁, …, d]`.
    pub layer_dims: Vec<usize>,
    pub latent_activation: Activation,
    pub output_activation: Activation,
    pub use_bias: bool,
    pub pretrain_epochs: usize,
    pub adam: AdamConfig,
    /// Adam steps on the network per outer iteration.
    pub adam_steps_per_iter: usize,
    pub max_outer: usize,
    /// Stop once the affinity relative change drops below this.
    pub threshold: f64,
    pub subspace_weight: f64,
    /// Skip the network block, leaving only the exact `P` and `L` updates.
    pub freeze_network: bool,
    pub seed: u64,
    /// Outer iterations whose projector is kept; 0 is the initial one.
    pub snapshot_iterations: Vec<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            anchors: AnchorCount::Fixed(50),
            anchor_rank_tol: 1e-6,
            layer_dims: Vec::new(),
            latent_activation: Activation::Relu,
            output_activation: Activation::Identity,
            use_bias: true,
            pretrain_epochs: 100,
            adam: AdamConfig::default(),
            adam_steps_per_iter: 1,
            max_outer: 50,
            threshold: 1e-3,
            subspace_weight: 1.0,
            freeze_network: false,
            seed: 0,
            snapshot_iterations: Vec::new(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config(
                "layer_dims needs at least two positive dimensions",
            ));
        }
        if let AnchorCount::Fixed(0) = self.anchors {
            return Err(Error::config("anchors must be >= 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::config("max_outer must be >= 1"));
        }
        if !(self.threshold >= 0.0) || !(self.subspace_weight >= 0.0) {
            return Err(Error::config("threshold and subspace_weight must be >= 0"));
        }
        if !(self.anchor_rank_tol > 0.0 && self.anchor_rank_tol < 1.0) {
            return Err(Error::config("anchor_rank_tol must lie in (0, 1)"));
        }
        self.adam.validate()
    }

    fn anchor_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
    }
}

/// One outer iteration of the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub joint: f64,
    pub reconstruction: f64,
    pub subspace: f64,
    pub rel_change: f64,
}

pub const HISTORY_HEADER: &str = "iteration\tjoint\trec\tsubspace\trel_change";

pub fn history_to_tsv(history: &[HistoryRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for h in history {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            h.iteration, h.joint, h.reconstruction, h.subspace, h.rel_change
        );
    }
    s
}

pub fn history_from_tsv(text: &str, path: &Path) -> Result<Vec<HistoryRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::ingestion(path, "history header missing"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::ingestion(path, format!("row {}: malformed history line", i + 2));
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(HistoryRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                joint: num(f[1])?,
                reconstruction: num(f[2])?,
                subspace: num(f[3])?,
                rel_change: num(f[4])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub params: NetworkParams,
    pub projector: ProjectorP,
    pub landmarks: LandmarkMatrix,
    /// Columns of the pretrained `Z` that seeded the landmarks.
    pub anchor_indices: Vec<usize>,
    pub history: Vec<HistoryRecord>,
    /// Joint loss right after anchor initialization.
    pub initial_joint: f64,
    pub snapshots: Vec<(usize, ProjectorP)>,
    pub converged: bool,
    pub pretrain_losses: Vec<f64>,
    pub pretrain_seconds: f64,
    pub fit_seconds: f64,
}

impl FittedModel {
    pub fn m(&self) -> usize {
        self.projector.m()
    }

    /// Writes `network.bin`, `projector.raw` (one row of `P` per record),
    /// `landmarks.raw` (one anchor per record), `anchors.txt` and
    /// `history.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&self.params, &dir.join("network.bin"))?;
        save_rows_raw(dir.join("projector.raw"), self.projector.values())?;
        save_columns_raw(dir.join("landmarks.raw"), self.landmarks.values())?;
        let anchors: String = self.anchor_indices.iter().map(|i| format!("{i}\n")).collect();
        let path = dir.join("anchors.txt");
        fs::write(&path, anchors).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("history.tsv");
        fs::write(&path, history_to_tsv(&self.history)).map_err(|e| Error::io(&path, e))
    }

    /// Inverse of [`FittedModel::save`]. Timings, snapshots and pretraining
    /// losses are not stored and come back empty.
    pub fn load(dir: &Path) -> Result<Self> {
        let params = load_checkpoint(&dir.join("network.bin"))?;
        let projector = ProjectorP::new(load_rows_raw(dir.join("projector.raw"))?)?;
        let landmarks = LandmarkMatrix::new(load_columns_raw(dir.join("landmarks.raw"))?)?;
        let path = dir.join("anchors.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let anchor_indices = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse()
                    .map_err(|_| Error::ingestion(&path, format!("row {}: not an index", i + 1)))
            })
            .collect::<Result<Vec<usize>>>()?;
        let path = dir.join("history.tsv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let history = history_from_tsv(&text, &path)?;
        let converged = false;
        Ok(Self {
            params,
            projector,
            landmarks,
            anchor_indices,
            initial_joint: f64::NAN,
            history,
            snapshots: Vec::new(),
            converged,
            pretrain_losses: Vec::new(),
            pretrain_seconds: 0.0,
            fit_seconds: 0.0,
        })
    }
}

fn resolve_anchor_count(z: &DMatrix<f64>, cfg: &FitConfig) -> Result<usize> {
    let n = z.ncols();
    let m = match cfg.anchors {
        AnchorCount::Fixed(m) => m,
        AnchorCount::Auto => {
            let sv = thin_svd(&z.transpose())?.singular_values;
            numerical_rank(&sv, cfg.anchor_rank_tol).max(1)
        }
    };
    if m > n {
        return Err(Error::config(format!("anchors m = {m} exceed sample count n = {n}")));
    }
    Ok(m)
}

/// Build the network from `cfg` and fit.
pub fn block_coordinate_fit(x: &DataMatrix, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    let mut params =
        init_network(&cfg.layer_dims, cfg.seed)?.with_activations(cfg.latent_activation, cfg.output_activation);
    if !cfg.use_bias {
        params = params.without_bias();
    }
    fit_from(x, cfg, params)
}

/// Fit starting from given network parameters; `cfg.layer_dims` and the
/// activation settings are ignored in favour of `params`.
pub fn fit_from(x: &DataMatrix, cfg: &FitConfig, mut params: NetworkParams) -> Result<FittedModel> {
    let mut check = cfg.clone();
    check.layer_dims = params.layer_dims().to_vec();
    check.validate()?;
    if x.dim() != params.input_dim() {
        return Err(Error::shape(format!(
            "data has dimension {}, network expects {}",
            x.dim(),
            params.input_dim()
        )));
    }

    let t0 = Instant::now();
    let mut optimizer = OptimizerState::new(&params, cfg.adam);
    let pretrain_losses = pretrain(&mut params, x, cfg.pretrain_epochs, &mut optimizer)?;
    let pretrain_seconds = t0.elapsed().as_secs_f64();
    if let Some(last) = pretrain_losses.last() {
        info!("pretraining: {} epochs, final reconstruction {last:.6e}", pretrain_losses.len());
    }

    let t1 = Instant::now();
    let mut z = params.encode(x)?;
    let m = resolve_anchor_count(&z, cfg)?;
    let anchor_indices = kmeanspp_indices(&z, m, cfg.anchor_seed())?;
    let seed_landmarks = LandmarkMatrix::new(z.select_columns(&anchor_indices))?;
    let mut projector = procrustes_update(&z, &seed_landmarks)?;
    let mut landmarks = landmark_update(&z, &projector)?;
    let x_hat = params.decode(&z)?;
    let initial_joint = reconstruction_loss(x.values(), &x_hat)?
        + cfg.subspace_weight * subspace_loss(&z, &landmarks, &projector)?;
    info!("anchors: m = {m}, initial joint loss {initial_joint:.6e}");

    let mut snapshots = Vec::new();
    if cfg.snapshot_iterations.contains(&0) {
        snapshots.push((0, projector.clone()));
    }
    let mut history = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_outer {
        let previous = projector.clone();
        if !cfg.freeze_network {
            for _ in 0..cfg.adam_steps_per_iter {
                let target = SubspaceTarget {
                    landmarks: &landmarks,
                    projector: &projector,
                    weight: cfg.subspace_weight,
                };
                let (grads, loss) = backward(&params, x, Some(target))?;
                if !loss.joint.is_finite() {
                    return Err(Error::Divergence { iteration });
                }
                optimizer.step(&mut params, &grads)?;
            }
            z = params.encode(x)?;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration });
        }
        projector = procrustes_update(&z, &landmarks)?;
        landmarks = landmark_update(&z, &projector)?;

        let x_hat = params.decode(&z)?;
        let reconstruction = reconstruction_loss(x.values(), &x_hat)?;
        let subspace = subspace_loss(&z, &landmarks, &projector)?;
        let joint = reconstruction + cfg.subspace_weight * subspace;
        if !joint.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        let rel_change = affinity_relative_change(&projector, &previous)?;
        debug!("outer {iteration}: joint {joint:.6e} rec {reconstruction:.6e} sub {subspace:.6e} rel {rel_change:.3e}");
        history.push(HistoryRecord {
            iteration,
            joint,
            reconstruction,
            subspace,
            rel_change,
        });
        if cfg.snapshot_iterations.contains(&iteration) {
            snapshots.push((iteration, projector.clone()));
        }
        if rel_change < cfg.threshold {
            converged = true;
            break;
        }
    }
    info!(
        "fit: {} outer iterations, converged = {converged}",
        history.len()
    );
    Ok(FittedModel {
        params,
        projector,
        landmarks,
        anchor_indices,
        history,
        initial_joint,
        snapshots,
        converged,
        pretrain_losses,
        pretrain_seconds,
        fit_seconds: t1.elapsed().as_secs_f64(),
    })
}
