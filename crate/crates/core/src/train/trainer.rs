use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Normalization, PatchSet, Split};
use crate::error::{Error, Result};
use crate::ladder::{LadderConfig, LadderNet};
use crate::metrics::roc_auc;
use crate::nn::DropoutPlan;
use crate::tensor::ops::{softmax_channels, softmax_cross_entropy, BatchNormOptions};
use crate::tensor::{Mode, Real, Tape, Tensor};
use crate::train::checkpoint::{Checkpoint, NamedTensor, VERSION_F32, VERSION_F64};
use crate::train::{AdamConfig, AdamState, LrSchedule};

pub const HISTORY_HEADER: &str = "epoch,lr,train_loss,val_loss,val_auc";
pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "model.ldnw";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// NaN when there is no validation split.
    pub val_loss: f64,
    /// NaN when validation pixels hold a single class.
    pub val_auc: f64,
}

impl HistoryRow {
    pub fn csv(&self) -> String {
        format!("{},{:e},{:e},{:e},{:e}", self.epoch, self.lr, self.train_loss, self.val_loss, self.val_auc)
    }
}

/// Network, optimizer state and schedule; everything a checkpoint captures.
pub struct Trainer<T: Real> {
    pub net: LadderNet<T>,
    pub adam: AdamState<T>,
    pub schedule: Box<dyn LrSchedule>,
    pub norm: Normalization,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub batch_size: usize,
}

fn config_tensor(c: &LadderConfig) -> NamedTensor {
    let values = vec![
        c.levels as f64,
        c.pairs as f64,
        c.base_channels as f64,
        c.dropout_rate,
        c.in_channels as f64,
        c.num_classes as f64,
        c.batch_norm.momentum,
        c.batch_norm.eps,
    ];
    NamedTensor { name: "model.config".into(), shape: vec![values.len()], values }
}

/// Network layout stored in a checkpoint.
pub fn checkpoint_config(ckpt: &Checkpoint) -> Result<LadderConfig> {
    let t = ckpt.get("model.config").ok_or_else(|| Error::Checkpoint("missing tensor `model.config`".into()))?;
    let [levels, pairs, base, dropout, cin, classes, momentum, eps] = t.values[..] else {
        return Err(Error::Checkpoint("`model.config` has the wrong length".into()));
    };
    Ok(LadderConfig {
        levels: levels as usize,
        pairs: pairs as usize,
        base_channels: base as usize,
        dropout_rate: dropout,
        in_channels: cin as usize,
        num_classes: classes as usize,
        batch_norm: BatchNormOptions { momentum, eps },
    })
}

fn tensor_of<T: Real>(name: String, t: &Tensor<T>) -> NamedTensor {
    NamedTensor { name, shape: t.shape().to_vec(), values: t.data().iter().map(|v| v.to_f64()).collect() }
}

fn vec_of<T: Real>(name: String, v: &[T]) -> NamedTensor {
    NamedTensor { name, shape: vec![v.len()], values: v.iter().map(|x| x.to_f64()).collect() }
}

fn fill<T: Real>(dst: &mut [T], src: &NamedTensor) {
    for (d, &s) in dst.iter_mut().zip(&src.values) {
        *d = T::from_f64(s);
    }
}

impl<T: Real> Trainer<T> {
    pub fn new(net: LadderNet<T>, schedule: Box<dyn LrSchedule>, norm: Normalization, seed: u64, batch_size: usize) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::invalid("train", format!("batch size {batch_size} < 2")));
        }
        let adam = AdamState::new(&net.store, AdamConfig::default());
        // match what a checkpoint in this precision can hold
        let snap = |v: f64| T::from_f64(v).to_f64();
        let norm = Normalization { mean: snap(norm.mean), std: snap(norm.std) };
        Ok(Self { net, adam, schedule, norm, seed, epoch: 0, batch_size })
    }

    /// Forward, backward and one Adam update on a batch. Returns the batch loss.
    pub fn train_step(&mut self, x: &Tensor<T>, labels: &[u8], lr: f64) -> Result<f64> {
        let step = self.adam.t + 1;
        let diverged = Error::Diverged { epoch: self.epoch, step };
        let tape = Tape::new();
        let xv = tape.constant(x.clone());
        let plan = DropoutPlan::Keyed { seed: self.seed, step: self.adam.t };
        let pass = match self.net.forward(&tape, xv, Mode::Train, plan) {
            Err(Error::NonFinite { .. }) => return Err(diverged),
            r => r?,
        };
        let loss = softmax_cross_entropy(pass.logits, labels, None)?;
        let value = loss.value().data()[0].to_f64();
        if !value.is_finite() {
            return Err(diverged);
        }
        let mut grads = tape.backward(loss)?;
        let grads: Vec<_> = pass
            .bindings
            .iter()
            .map(|&(slot, var)| (slot, grads.take(var).unwrap_or_else(|| Tensor::zeros(&var.shape()))))
            .collect();
        drop(tape);
        self.adam.step(&mut self.net.store, &grads, lr)?;
        Ok(value)
    }

    /// Eval-mode class probabilities, `[n, classes, h, w]`.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Tensor<f64>> {
        let tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pass = self.net.forward(&tape, xv, Mode::Eval, DropoutPlan::Off)?;
        Ok(softmax_channels(&pass.logits.value())?.cast())
    }

    /// Mean loss and pixel AUC over `indices` of `set`, in eval mode.
    pub fn evaluate(&mut self, set: &PatchSet, indices: &[usize]) -> Result<(f64, f64)> {
        if indices.is_empty() {
            return Ok((f64::NAN, f64::NAN));
        }
        let mut loss_sum = 0.0;
        let mut scores = Vec::with_capacity(indices.len() * set.area());
        let mut truth = Vec::with_capacity(indices.len() * set.area());
        for chunk in indices.chunks(self.batch_size) {
            let (x, labels) = set.batch::<T>(chunk, &self.norm);
            let tape = Tape::new();
            let xv = tape.constant(x);
            let pass = self.net.forward(&tape, xv, Mode::Eval, DropoutPlan::Off)?;
            let loss = softmax_cross_entropy(pass.logits, &labels, None)?;
            loss_sum += loss.value().data()[0].to_f64() * chunk.len() as f64;
            let probs = softmax_channels(&pass.logits.value())?;
            let [n, k, h, w] = probs.dims4("evaluate")?;
            for b in 0..n {
                let start = (b * k + 1) * h * w;
                scores.extend(probs.data()[start..start + h * w].iter().map(|p| p.to_f64()));
            }
            truth.extend(labels.iter().map(|&l| l == 1));
        }
        let auc = roc_auc(&scores, &truth, None).map_or(f64::NAN, |r| r.1);
        Ok((loss_sum / indices.len() as f64, auc))
    }

    /// Shuffled training batches of `epoch`; a trailing batch of one patch is dropped.
    pub fn epoch_batches(&self, set: &PatchSet, epoch: usize) -> Vec<Vec<usize>> {
        let mut idx = set.indices(Split::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        idx.shuffle(&mut rng);
        idx.chunks(self.batch_size).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
    }

    pub fn run_epoch(&mut self, set: &PatchSet) -> Result<HistoryRow> {
        let epoch = self.epoch;
        let lr = self.schedule.lr_at(epoch)?;
        let batches = self.epoch_batches(set, epoch);
        if batches.is_empty() {
            return Err(Error::Data("training split holds fewer than two patches".into()));
        }
        let (mut total, mut seen) = (0.0, 0usize);
        for b in &batches {
            let (x, labels) = set.batch::<T>(b, &self.norm);
            total += self.train_step(&x, &labels, lr)? * b.len() as f64;
            seen += b.len();
        }
        let (val_loss, val_auc) = self.evaluate(set, &set.indices(Split::Val))?;
        self.schedule.observe(epoch, val_loss);
        self.epoch += 1;
        Ok(HistoryRow { epoch, lr, train_loss: total / seen as f64, val_loss, val_auc })
    }

    /// Train until the schedule ends. With `out_dir`, every epoch appends to `history.csv`
    /// and replaces `model.ldnw`; on divergence the last good checkpoint stays in place.
    pub fn fit(&mut self, set: &PatchSet, out_dir: Option<&Path>) -> Result<Vec<HistoryRow>> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(HISTORY_FILE);
            if self.epoch == 0 || !path.exists() {
                fs::write(&path, format!("{HISTORY_HEADER}\n")).map_err(|e| Error::io(&path, e))?;
            }
        }
        let mut rows = Vec::new();
        while self.epoch < self.schedule.total_epochs() {
            let row = self.run_epoch(set)?;
            if let Some(dir) = out_dir {
                let path = dir.join(HISTORY_FILE);
                let mut f = fs::OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
                writeln!(f, "{}", row.csv()).map_err(|e| Error::io(&path, e))?;
                self.checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
            }
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let store = &self.net.store;
        let mut tensors = vec![config_tensor(self.net.config())];
        for s in store.slots() {
            tensors.push(tensor_of(format!("param.{}", store.slot_name(s)), store.slot_value(s)));
        }
        for (name, st) in store.stats_entries() {
            tensors.push(vec_of(format!("stats.{name}.mean"), &st.mean));
            tensors.push(vec_of(format!("stats.{name}.var"), &st.var));
        }
        tensors.push(NamedTensor { name: "adam.t".into(), shape: vec![1], values: vec![self.adam.t as f64] });
        for s in store.slots() {
            let (m, v) = self.adam.moments(s).expect("state for every slot");
            tensors.push(tensor_of(format!("adam.m.{}", store.slot_name(s)), m));
            tensors.push(tensor_of(format!("adam.v.{}", store.slot_name(s)), v));
        }
        tensors.push(NamedTensor { name: "norm".into(), shape: vec![2], values: vec![self.norm.mean, self.norm.std] });
        let state = self.schedule.state();
        tensors.push(NamedTensor { name: format!("schedule.{}", self.schedule.name()), shape: vec![state.len()], values: state });
        Checkpoint {
            version: if T::BYTES == 4 { VERSION_F32 } else { VERSION_F64 },
            tensors,
            rng: self.seed,
            epoch: self.epoch as u32,
        }
    }

    /// Load `ckpt` after checking it against this trainer's tensor manifest; on any error
    /// nothing is modified.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let expected = self.checkpoint();
        if ckpt.version != expected.version {
            return Err(Error::Checkpoint(format!(
                "version mismatch: file has {}, a {} network needs {}",
                ckpt.version,
                T::NAME,
                expected.version
            )));
        }
        for want in &expected.tensors {
            match ckpt.get(&want.name) {
                None => return Err(Error::Checkpoint(format!("shape manifest mismatch: missing tensor `{}`", want.name))),
                Some(t) if t.shape != want.shape => {
                    return Err(Error::Checkpoint(format!(
                        "shape manifest mismatch: tensor `{}` is {:?} in the file, {:?} in the network",
                        want.name, t.shape, want.shape
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = ckpt.tensors.iter().find(|t| expected.get(&t.name).is_none()) {
            return Err(Error::Checkpoint(format!("shape manifest mismatch: unexpected tensor `{}`", extra.name)));
        }
        if ckpt.get("model.config") != expected.get("model.config") {
            return Err(Error::Checkpoint("`model.config` differs from the network".into()));
        }
        let get = |name: String| ckpt.get(&name).expect("manifest checked");
        let store = &mut self.net.store;
        let slots: Vec<_> = store.slots().collect();
        for &s in &slots {
            let name = store.slot_name(s).to_string();
            fill(store.slot_value_mut(s).data_mut(), get(format!("param.{name}")));
            let (m, v) = self.adam.moments_mut(s).expect("state for every slot");
            fill(m.data_mut(), get(format!("adam.m.{name}")));
            fill(v.data_mut(), get(format!("adam.v.{name}")));
        }
        for (name, st) in store.stats_entries_mut() {
            fill(&mut st.mean, get(format!("stats.{name}.mean")));
            fill(&mut st.var, get(format!("stats.{name}.var")));
        }
        self.adam.t = get("adam.t".into()).values[0] as u64;
        let norm = &get("norm".into()).values;
        self.norm = Normalization { mean: norm[0], std: norm[1] };
        self.schedule.restore(&get(format!("schedule.{}", self.schedule.name())).values)?;
        self.seed = ckpt.rng;
        self.epoch = ckpt.epoch as usize;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        self.restore(&Checkpoint::load(path)?)
    }
}

/// Steps `k ≥ start` where the `smooth`-step moving average of `losses` is higher at
/// `k + window` than at `k`.
pub fn monotone_violations(losses: &[f64], start: usize, window: usize, smooth: usize) -> Vec<usize> {
    let avg = |i: usize| {
        let lo = (i + 1).saturating_sub(smooth);
        losses[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
    };
    (start..losses.len().saturating_sub(window)).filter(|&k| avg(k + window) > avg(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_patches, synth::synth_image};
    use crate::train::Staged;

    fn tiny_trainer<T: Real>(epochs: usize) -> Trainer<T> {
        let config = LadderConfig { dropout_rate: 0.25, ..LadderConfig::small(2, 1, 2) };
        let net = LadderNet::build(&config, 5).unwrap();
        let schedule = Box::new(Staged::new(vec![(0, 0.01)], epochs).unwrap());
        Trainer::new(net, schedule, Normalization { mean: 0.3, std: 0.2 }, 11, 4).unwrap()
    }

    fn tiny_set() -> PatchSet {
        let images: Vec<_> = (0..3).map(|i| synth_image(1, i)).collect();
        sample_patches(&images, 10, 16, 2, 0.2).unwrap()
    }

    #[test]
    fn history_rows_and_checkpoint_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny_trainer::<f32>(2);
        let rows = t.fit(&tiny_set(), Some(dir.path())).unwrap();
        assert_eq!(rows.len(), 2);
        let text = fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert_eq!(text.lines().next(), Some(HISTORY_HEADER));
        assert_eq!(text.lines().count(), 3);
        let ckpt = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!((ckpt.version, ckpt.epoch), (VERSION_F32, 2));
        assert_eq!(t.adam.t, 4);
    }

    #[test]
    fn restore_rejects_other_layouts_untouched() {
        let small = tiny_trainer::<f64>(1).checkpoint();
        let config = LadderConfig::small(3, 1, 2);
        let net = LadderNet::<f64>::build(&config, 5).unwrap();
        let mut other = Trainer::new(net, Box::new(Staged::standard()), Normalization::IDENTITY, 0, 2).unwrap();
        let before = other.checkpoint();
        let err = other.restore(&small).unwrap_err();
        assert!(err.to_string().contains("param.up.C1-B2") || err.to_string().contains("tensor `"), "{err}");
        assert_eq!(other.checkpoint(), before);
    }

    #[test]
    fn batches_are_seeded_and_cover_train_split() {
        let t = tiny_trainer::<f32>(1);
        let set = tiny_set();
        let b0 = t.epoch_batches(&set, 0);
        assert_eq!(b0, t.epoch_batches(&set, 0));
        assert_ne!(b0, t.epoch_batches(&set, 1));
        let mut all: Vec<usize> = b0.concat();
        all.sort_unstable();
        assert_eq!(all, set.indices(Split::Train));
    }

    #[test]
    fn violations_flag_rising_windows() {
        let falling: Vec<f64> = (0..300).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert!(monotone_violations(&falling, 100, 50, 10).is_empty());
        let mut rising = falling.clone();
        rising[250..].iter_mut().for_each(|v| *v += 1.0);
        assert!(!monotone_violations(&rising, 100, 50, 10).is_empty());
    }
}
