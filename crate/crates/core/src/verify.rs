//! Finite-difference gradient suite over every differentiable building block.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::ladder::{LadderConfig, LadderLayers};
use crate::nn::{DropoutPlan, ParamStore, Session, SharedResidualBlock, SlotId};
use crate::tensor::gradcheck::{grad_check, GradReport, DEFAULT_STEP};
use crate::tensor::ops::{self, BatchNormOptions, MaskSource, RunningStats};
use crate::tensor::{Mode, Tape, Tensor, Var};

pub const SUITE_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCase {
    pub name: &'static str,
    pub report: GradReport,
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Loss `Σ wᵢ yᵢ` with fixed random weights.
fn weigh<'t>(y: Var<'t, f64>, weights: &Tensor<f64>) -> Result<Var<'t, f64>> {
    ops::weighted_sum(y, weights)
}

fn weights_for(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    normal(rng, shape, 1.0)
}

/// Check a store-backed layer: the input and every parameter slot become probe inputs.
fn check_module<F>(h: f64, store: ParamStore<f64>, x: Tensor<f64>, weights: Tensor<f64>, mode: Mode, plan: DropoutPlan, f: F) -> Result<GradReport>
where
    F: for<'t, 's> Fn(&mut Session<'t, 's, f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let slots: Vec<SlotId> = store.slots().collect();
    let mut inputs = vec![x];
    inputs.extend(slots.iter().map(|&s| store.slot_value(s).clone()));
    let store = RefCell::new(store);
    grad_check(&inputs, h, |tape, vars| {
        let mut st = store.borrow_mut();
        let mut s = Session::new(tape, &mut st, mode, plan);
        for (&slot, &v) in slots.iter().zip(&vars[1..]) {
            s.bind(slot, v);
        }
        let y = f(&mut s, vars[0])?;
        weigh(y, &weights)
    })
}

/// Every case, checked in 64-bit precision with central differences of step 1e-5.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    gradient_suite_with_step(seed, DEFAULT_STEP)
}

pub fn gradient_suite_with_step(seed: u64, h: f64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    for (name, stride, size) in [("conv2d stride 1", 1, 5), ("conv2d stride 2", 2, 6)] {
        let x = normal(&mut rng, &[2, 2, size, size], 1.0);
        let w = normal(&mut rng, &[3, 2, 3, 3], 0.5);
        let b = normal(&mut rng, &[3], 0.5);
        let out = size.div_ceil(stride);
        let wt = weights_for(&mut rng, &[2, 3, out, out]);
        let report = grad_check(&[x, w, b], h, |_, v| weigh(ops::conv2d(v[0], v[1], v[2], stride, 1)?, &wt))?;
        cases.push(GradCase { name, report });
    }

    {
        let x = normal(&mut rng, &[2, 3, 3, 3], 1.0);
        let w = normal(&mut rng, &[3, 2, 3, 3], 0.5);
        let b = normal(&mut rng, &[2], 0.5);
        let wt = weights_for(&mut rng, &[2, 2, 6, 6]);
        let report = grad_check(&[x, w, b], h, |_, v| weigh(ops::conv_transpose2d(v[0], v[1], v[2])?, &wt))?;
        cases.push(GradCase { name: "transposed conv2d", report });
    }

    {
        let x = normal(&mut rng, &[3, 2, 3, 3], 1.0);
        let gamma = Tensor::from_fn(&[2], |_| 1.0 + 0.3 * rng.sample::<f64, _>(StandardNormal));
        let beta = normal(&mut rng, &[2], 0.3);
        let wt = weights_for(&mut rng, &[3, 2, 3, 3]);
        let report = grad_check(&[x, gamma, beta], h, |_, v| {
            let mut stats = RunningStats::new(2);
            let y = ops::batch_norm(v[0], v[1], v[2], &mut stats, Mode::Train, BatchNormOptions::default())?;
            weigh(y, &wt)
        })?;
        cases.push(GradCase { name: "batch norm (train)", report });
    }

    {
        let x = normal(&mut rng, &[2, 2, 4, 4], 1.0);
        let mask: Vec<bool> = (0..x.len()).map(|_| rng.random_bool(0.75)).collect();
        let wt = weights_for(&mut rng, &[2, 2, 4, 4]);
        let report = grad_check(&[x], h, |_, v| weigh(ops::dropout(v[0], 0.25, MaskSource::Fixed(&mask))?, &wt))?;
        cases.push(GradCase { name: "dropout (fixed mask)", report });
    }

    {
        let logits = normal(&mut rng, &[2, 3, 3, 3], 1.5);
        let labels: Vec<u8> = (0..18).map(|_| rng.random_range(0..3)).collect();
        let mask: Vec<bool> = (0..18).map(|i| i % 5 != 0).collect();
        let report = grad_check(&[logits], h, |_, v| ops::softmax_cross_entropy(v[0], &labels, Some(&mask)))?;
        cases.push(GradCase { name: "softmax cross-entropy", report });
    }

    {
        let mut store = ParamStore::<f64>::new(rng.random());
        let block = SharedResidualBlock::new(&mut store, "block", 2, 0.25, 3, BatchNormOptions::default())?;
        perturb_affine(&mut store, &mut rng);
        let x = normal(&mut rng, &[2, 2, 4, 4], 1.0);
        let wt = weights_for(&mut rng, &[2, 2, 4, 4]);
        let plan = DropoutPlan::Keyed { seed: rng.random(), step: 0 };
        let report = check_module(h, store, x, wt, Mode::Train, plan, |s, x| block.forward(s, x))?;
        cases.push(GradCase { name: "shared-weights residual block", report });
    }

    {
        let mut store = ParamStore::<f64>::new(rng.random());
        let layers = LadderLayers::build(&LadderConfig::small(2, 1, 2), &mut store)?;
        perturb_affine(&mut store, &mut rng);
        let x = normal(&mut rng, &[2, 1, 8, 8], 1.0);
        let wt = weights_for(&mut rng, &[2, 2, 8, 8]);
        let plan = DropoutPlan::Keyed { seed: rng.random(), step: 0 };
        let slots: Vec<SlotId> = store.slots().collect();
        let mut inputs = vec![x];
        inputs.extend(slots.iter().map(|&s| store.slot_value(s).clone()));
        let store = RefCell::new(store);
        let report = grad_check(&inputs, h, |tape: &Tape<f64>, vars| {
            let mut st = store.borrow_mut();
            let mut s = Session::new(tape, &mut st, Mode::Train, plan);
            for (&slot, &v) in slots.iter().zip(&vars[1..]) {
                s.bind(slot, v);
            }
            let (logits, _) = layers.forward(&mut s, vars[0])?;
            weigh(logits, &wt)
        })?;
        cases.push(GradCase { name: "ladder levels=2 pairs=1", report });
    }

    Ok(cases)
}

/// Move zero biases and unit scales off their initial values, so the check does not sit
/// at a special point.
fn perturb_affine(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    let slots: Vec<SlotId> = store.slots().collect();
    for s in slots {
        if store.slot_value(s).rank() == 1 {
            for v in store.slot_value_mut(s).data_mut() {
                *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

pub fn max_error(cases: &[GradCase]) -> f64 {
    cases.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max)
}
