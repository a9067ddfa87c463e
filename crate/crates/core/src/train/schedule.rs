//! Learning-rate schedules, selectable by name.

use crate::error::{Error, Result};

pub trait LrSchedule: Send {
    fn name(&self) -> &'static str;
    fn total_epochs(&self) -> usize;
    /// Rate for `epoch`, which must lie in `[0, total_epochs)`.
    fn lr_at(&self, epoch: usize) -> Result<f64>;
    /// Validation loss at the end of `epoch`.
    fn observe(&mut self, _epoch: usize, _val_loss: f64) {}
    /// Mutable state, saved with checkpoints.
    fn state(&self) -> Vec<f64> {
        Vec::new()
    }
    fn restore(&mut self, _state: &[f64]) -> Result<()> {
        Ok(())
    }
}

fn check_epoch(epoch: usize, total: usize) -> Result<()> {
    if epoch >= total {
        return Err(Error::invalid("lr_at", format!("epoch {epoch} outside [0, {total})")));
    }
    Ok(())
}

/// Piecewise constant: each stage `(first epoch, rate)` holds until the next one.
#[derive(Clone, Debug, PartialEq)]
pub struct Staged {
    pub stages: Vec<(usize, f64)>,
    pub total: usize,
}

impl Staged {
    pub fn new(stages: Vec<(usize, f64)>, total: usize) -> Result<Self> {
        let bad = |d: String| Err(Error::invalid("lr_schedule", d));
        if stages.first().map(|s| s.0) != Some(0) {
            return bad("the first stage must start at epoch 0".into());
        }
        for w in stages.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 > w[0].1 {
                return bad(format!("stages must have increasing epochs and non-increasing rates: {stages:?}"));
            }
        }
        if stages.iter().any(|s| !(s.1 > 0.0 && s.1.is_finite())) {
            return bad(format!("rates must be positive: {stages:?}"));
        }
        if total == 0 {
            return bad("total epochs must be positive".into());
        }
        Ok(Self { stages, total })
    }

    /// 0.01 from epoch 0, 0.001 from 20, 0.0001 from 150, for 250 epochs.
    pub fn standard() -> Self {
        Self::new(vec![(0, 0.01), (20, 0.001), (150, 0.0001)], 250).expect("valid stages")
    }

    /// `"0:0.01,20:0.001"`.
    pub fn parse_stages(text: &str) -> Result<Vec<(usize, f64)>> {
        text.split(',')
            .map(|s| {
                let (e, r) = s.trim().split_once(':').ok_or_else(|| {
                    Error::invalid("lr_schedule", format!("stage `{s}` is not `epoch:rate`"))
                })?;
                let e = e.trim().parse().map_err(|_| Error::invalid("lr_schedule", format!("epoch in `{s}`")))?;
                let r = r.trim().parse().map_err(|_| Error::invalid("lr_schedule", format!("rate in `{s}`")))?;
                Ok((e, r))
            })
            .collect()
    }
}

impl LrSchedule for Staged {
    fn name(&self) -> &'static str {
        "staged"
    }

    fn total_epochs(&self) -> usize {
        self.total
    }

    fn lr_at(&self, epoch: usize) -> Result<f64> {
        check_epoch(epoch, self.total)?;
        Ok(self.stages.iter().rev().find(|s| s.0 <= epoch).expect("stage at 0").1)
    }
}

/// Starts at a fixed rate and multiplies it by `factor` once validation loss has failed to
/// improve by a relative `threshold` for `patience` epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub total: usize,
    lr: f64,
    best: f64,
    wait: usize,
}

impl Plateau {
    pub fn new(initial: f64, total: usize) -> Self {
        Self { factor: 0.1, patience: 10, threshold: 1e-4, total, lr: initial, best: f64::INFINITY, wait: 0 }
    }
}

impl LrSchedule for Plateau {
    fn name(&self) -> &'static str {
        "plateau"
    }

    fn total_epochs(&self) -> usize {
        self.total
    }

    fn lr_at(&self, epoch: usize) -> Result<f64> {
        check_epoch(epoch, self.total)?;
        Ok(self.lr)
    }

    fn observe(&mut self, _epoch: usize, val_loss: f64) {
        if !val_loss.is_finite() {
            return;
        }
        if val_loss < self.best * (1.0 - self.threshold) {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr *= self.factor;
                self.wait = 0;
            }
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.lr, self.best, self.wait as f64]
    }

    fn restore(&mut self, state: &[f64]) -> Result<()> {
        let [lr, best, wait] = state[..] else {
            return Err(Error::Checkpoint(format!("plateau schedule state has {} values, expected 3", state.len())));
        };
        (self.lr, self.best, self.wait) = (lr, best, wait as usize);
        Ok(())
    }
}

type Factory = fn(stages: Vec<(usize, f64)>, total: usize) -> Result<Box<dyn LrSchedule>>;

static SCHEDULES: [(&str, Factory); 2] = [
    ("staged", |stages, total| Ok(Box::new(Staged::new(stages, total)?))),
    ("plateau", |stages, total| {
        let first = stages.first().map(|s| s.1).ok_or_else(|| Error::invalid("lr_schedule", "no stages"))?;
        Ok(Box::new(Plateau::new(first, total)))
    }),
];

pub fn schedule_names() -> Vec<&'static str> {
    SCHEDULES.iter().map(|s| s.0).collect()
}

/// Build the schedule registered as `name`. Plateau starts from the first stage's rate.
pub fn build_schedule(name: &str, stages: Vec<(usize, f64)>, total: usize) -> Result<Box<dyn LrSchedule>> {
    let (_, factory) = SCHEDULES.iter().find(|s| s.0 == name).ok_or_else(|| {
        Error::invalid("lr_schedule", format!("unknown schedule `{name}`; expected one of {:?}", schedule_names()))
    })?;
    factory(stages, total)
}

/// Rate of `schedule` at `epoch`.
pub fn lr_at(schedule: &dyn LrSchedule, epoch: usize) -> Result<f64> {
    schedule.lr_at(epoch)
}
