use std::collections::HashMap;

use crate::nn::{ParamHandle, ParamStore, SlotId, StatsHandle};
use crate::tensor::ops::{DropoutKey, MaskSource, RunningStats};
use crate::tensor::{Mode, Real, Tape, Var};

/// How dropout layers obtain masks during one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutPlan {
    /// Masks keyed by `(seed, layer id, step)`.
    Keyed { seed: u64, step: u64 },
    /// Dropout disabled regardless of mode.
    Off,
}

/// One forward pass: binds parameter slots to tape leaves (once per slot, so tied
/// parameters share a leaf and their gradients add up) and hands out running statistics.
pub struct Session<'t, 's, T: Real> {
    tape: &'t Tape<T>,
    store: &'s mut ParamStore<T>,
    mode: Mode,
    dropout: DropoutPlan,
    bound: HashMap<SlotId, Var<'t, T>>,
    order: Vec<SlotId>,
}

impl<'t, 's, T: Real> Session<'t, 's, T> {
    pub fn new(tape: &'t Tape<T>, store: &'s mut ParamStore<T>, mode: Mode, dropout: DropoutPlan) -> Self {
        Self { tape, store, mode, dropout, bound: HashMap::new(), order: Vec::new() }
    }

    /// Use `var` for `slot` instead of a fresh leaf copied from the store.
    pub fn bind(&mut self, slot: SlotId, var: Var<'t, T>) {
        if self.bound.insert(slot, var).is_none() {
            self.order.push(slot);
        }
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn param(&mut self, h: ParamHandle) -> Var<'t, T> {
        let slot = self.store.slot_of(h);
        if let Some(&v) = self.bound.get(&slot) {
            return v;
        }
        let v = self.tape.param(self.store.slot_value(slot).clone());
        self.bind(slot, v);
        v
    }

    pub fn stats_mut(&mut self, h: StatsHandle) -> &mut RunningStats<T> {
        self.store.stats_mut(h)
    }

    pub fn mask_source(&self, layer: u64) -> MaskSource<'static> {
        match (self.mode, self.dropout) {
            (Mode::Train, DropoutPlan::Keyed { seed, step }) => MaskSource::Keyed(DropoutKey { seed, layer, step }),
            _ => MaskSource::Eval,
        }
    }

    /// Slots touched by this pass and their tape leaves, in first-use order.
    pub fn bindings(&self) -> Vec<(SlotId, Var<'t, T>)> {
        self.order.iter().map(|s| (*s, self.bound[s])).collect()
    }
}
