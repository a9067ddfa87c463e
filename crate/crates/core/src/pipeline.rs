//! End-to-end train, predict and evaluate steps shared by the command line and the tests.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Precision, RunConfig};
use crate::data::{
    fov_strategy, load_dataset, normalize_strategy, read_f32_sidecar, sample_patches, stitch_predictions, tile_origins,
    write_probability_map, FovStrategy, GrayImage, Normalization, Origin, PatchSet, Split, PATCH_SIZE, VAL_FRACTION,
};
use crate::error::{Error, Result};
use crate::ladder::LadderNet;
use crate::metrics::{binarize, confusion, export_curve, pr_curve, roc_auc, summary_line, ConfusionCounts, Curve, Metrics};
use crate::tensor::{Real, Tensor};
use crate::train::{build_schedule, checkpoint_config, Checkpoint, HistoryRow, Trainer, CHECKPOINT_FILE};

pub const PREDICT_STRIDE: usize = 16;
pub const BINARY_THRESHOLD: f64 = 0.5;
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<HistoryRow>,
    pub parameters: usize,
    pub train_patches: usize,
    pub val_patches: usize,
    pub checkpoint: PathBuf,
}

/// `data_dir/train` when present, else `data_dir` itself.
pub fn train_dir(data_dir: &Path) -> PathBuf {
    let sub = data_dir.join("train");
    if sub.is_dir() {
        sub
    } else {
        data_dir.to_path_buf()
    }
}

/// Training images, their normalization and the sampled patch set.
pub fn prepare_patches(cfg: &RunConfig) -> Result<(Normalization, PatchSet)> {
    let images = load_dataset(&train_dir(&cfg.data_dir), fov_strategy(&cfg.fov_mode)?, true)?;
    let norm = normalize_strategy(&cfg.normalize_mode)?.fit(&images)?;
    let set = sample_patches(&images, cfg.patches, PATCH_SIZE, cfg.seed, VAL_FRACTION)?;
    Ok((norm, set))
}

fn train_typed<T: Real>(cfg: &RunConfig) -> Result<TrainReport> {
    let (norm, set) = prepare_patches(cfg)?;
    let net = LadderNet::<T>::build(&cfg.ladder(), cfg.seed)?;
    let parameters = net.count_parameters();
    let mut trainer = Trainer::new(net, cfg.schedule()?, norm, cfg.seed, cfg.batch_size)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let echo = cfg.out_dir.join(CONFIG_ECHO);
    fs::write(&echo, cfg.to_text()).map_err(|e| Error::io(&echo, e))?;
    let history = trainer.fit(&set, Some(&cfg.out_dir))?;
    Ok(TrainReport {
        history,
        parameters,
        train_patches: set.indices(Split::Train).len(),
        val_patches: set.indices(Split::Val).len(),
        checkpoint: cfg.out_dir.join(CHECKPOINT_FILE),
    })
}

/// Sample patches, train for every scheduled epoch, and leave `config.txt`, `history.csv`
/// and `model.ldnw` in `out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainReport> {
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg),
        Precision::F64 => train_typed::<f64>(cfg),
    }
}

/// A trained network in the precision its checkpoint was written in.
pub enum Model {
    F32(Trainer<f32>),
    F64(Trainer<f64>),
}

fn trainer_from<T: Real>(ckpt: &Checkpoint) -> Result<Trainer<T>> {
    let config = checkpoint_config(ckpt)?;
    let schedule = ckpt
        .tensors
        .iter()
        .find_map(|t| t.name.strip_prefix("schedule."))
        .ok_or_else(|| Error::Checkpoint("missing schedule state".into()))?;
    let net = LadderNet::<T>::build(&config, ckpt.rng)?;
    let schedule = build_schedule(schedule, vec![(0, 1.0)], ckpt.epoch.max(1) as usize)?;
    let mut t = Trainer::new(net, schedule, Normalization::IDENTITY, ckpt.rng, 2)?;
    t.restore(ckpt)?;
    Ok(t)
}

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        match ckpt.version {
            crate::train::checkpoint::VERSION_F32 => Ok(Self::F32(trainer_from(&ckpt)?)),
            _ => Ok(Self::F64(trainer_from(&ckpt)?)),
        }
    }

    pub fn predict_image(&mut self, image: &GrayImage) -> Result<Vec<f64>> {
        match self {
            Self::F32(t) => predict_image(t, image),
            Self::F64(t) => predict_image(t, image),
        }
    }
}

/// Vessel probability per pixel from overlapping 48×48 windows (stride 16, averaged),
/// rounded to the 32-bit precision of the probability sidecar files.
pub fn predict_image<T: Real>(trainer: &mut Trainer<T>, image: &GrayImage) -> Result<Vec<f64>> {
    let origins = tile_origins(image.height, image.width, PATCH_SIZE, PREDICT_STRIDE)?;
    let mut set = PatchSet { size: PATCH_SIZE, intensities: vec![], labels: vec![], origins: vec![], splits: vec![] };
    let unlabeled = [GrayImage { label: Some(vec![false; image.len()]), ..image.clone() }];
    for &(top, left) in &origins {
        set.push(&unlabeled, Origin { image: 0, top, left }, Split::Val)?;
    }
    let mut probs = Vec::new();
    let mut shape = Vec::new();
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(trainer.batch_size.max(16)) {
        let (x, _) = set.batch::<T>(chunk, &trainer.norm);
        let p = trainer.predict(&x)?;
        shape = p.shape().to_vec();
        probs.extend_from_slice(p.data());
    }
    shape[0] = origins.len();
    let probs = Tensor::new(&shape, probs)?;
    let map = stitch_predictions(&probs, &origins, image.height, image.width)?;
    Ok(map.into_iter().map(|p| f64::from(p as f32)).collect())
}

/// Predict every image and write `<stem>_prob.pgm` / `<stem>_prob.f32` into `out_dir`.
pub fn predict_files(model: &mut Model, images: &[GrayImage], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    images
        .iter()
        .map(|img| {
            let map = model.predict_image(img)?;
            write_probability_map(out_dir, &img.name, img.width, img.height, &map)
        })
        .collect()
}

/// One image's probabilities with its ground truth.
#[derive(Clone, Debug)]
pub struct ScoredMap {
    pub name: String,
    pub probs: Vec<f64>,
    pub truth: Vec<bool>,
    pub fov: Option<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    /// Scored inside field-of-view masks where present.
    pub fov_restricted: bool,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub auc: f64,
    pub average_precision: f64,
    pub roc: Curve,
    pub pr: Curve,
}

impl EvalReport {
    pub fn summary(&self) -> String {
        summary_line(&self.metrics, Some(self.auc))
    }

    /// `roc<suffix>.csv`, `pr<suffix>.csv` and `metrics<suffix>.txt` under `dir`.
    pub fn write(&self, dir: &Path, suffix: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        export_curve(&self.roc, &dir.join(format!("roc{suffix}.csv")))?;
        export_curve(&self.pr, &dir.join(format!("pr{suffix}.csv")))?;
        let path = dir.join(format!("metrics{suffix}.txt"));
        fs::write(&path, format!("{}\n", self.summary())).map_err(|e| Error::io(&path, e))
    }
}

/// Pool the scored pixels of every map and compute counts at threshold 0.5, ROC and PR.
pub fn score_maps(maps: &[ScoredMap], fov_restricted: bool) -> Result<EvalReport> {
    let mut probs = Vec::new();
    let mut truth = Vec::new();
    for m in maps {
        if m.probs.len() != m.truth.len() {
            return Err(Error::Metrics(format!("{}: prediction and truth sizes differ", m.name)));
        }
        for i in 0..m.probs.len() {
            if fov_restricted && m.fov.as_ref().is_some_and(|f| !f[i]) {
                continue;
            }
            probs.push(m.probs[i]);
            truth.push(m.truth[i]);
        }
    }
    let counts = confusion(&binarize(&probs, BINARY_THRESHOLD), &truth, None)?;
    let (roc, auc) = roc_auc(&probs, &truth, None)?;
    let (pr, average_precision) = pr_curve(&probs, &truth, None)?;
    Ok(EvalReport { fov_restricted, counts, metrics: counts.metrics(), auc, average_precision, roc, pr })
}

/// Pair `<stem>_prob.f32` files in `pred_dir` with the labelled images of `truth_dir`.
pub fn load_scored_maps(pred_dir: &Path, truth_dir: &Path, fov: &dyn FovStrategy) -> Result<Vec<ScoredMap>> {
    let truth = load_dataset(truth_dir, fov, true)?;
    truth
        .into_iter()
        .map(|img| {
            let path = pred_dir.join(format!("{}_prob.f32", img.name));
            let probs = read_f32_sidecar(&path, img.len())?;
            Ok(ScoredMap { name: img.name, probs, truth: img.label.expect("labels required"), fov: img.fov })
        })
        .collect()
}

/// Predict and score `images` without touching the file system.
pub fn evaluate_images(model: &mut Model, images: &[GrayImage], fov_restricted: bool) -> Result<EvalReport> {
    let maps = images
        .iter()
        .map(|img| {
            Ok(ScoredMap {
                name: img.name.clone(),
                probs: model.predict_image(img)?,
                truth: img.label()?.to_vec(),
                fov: img.fov.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    score_maps(&maps, fov_restricted)
}
