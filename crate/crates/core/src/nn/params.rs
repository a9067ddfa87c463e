//! Named parameter storage with aliasing ("tying") of equal-shape parameters.
//!
//! A name resolves to a handle, a handle to a storage slot. Tying redirects one name to
//! another name's slot, so every use site reads and trains the same floats. Counting and
//! optimization walk live slots, never names.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::ops::RunningStats;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamHandle(usize);

/// Index of one storage slot; tied parameters share a slot (their tie group).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StatsHandle(usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean normal with std `sqrt(2 / fan_in)`.
    HeNormal { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    slot: usize,
}

#[derive(Clone, Debug)]
struct Slot<T> {
    value: Tensor<T>,
    /// Entry that registered this slot; its name labels the slot in checkpoints.
    owner: usize,
}

#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    seed: u64,
    entries: Vec<Entry>,
    slots: Vec<Option<Slot<T>>>,
    by_name: HashMap<String, usize>,
    stats: Vec<(String, RunningStats<T>)>,
}

impl<T: Real> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self { seed, entries: Vec::new(), slots: Vec::new(), by_name: HashMap::new(), stats: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Register a trainable tensor. Initialization depends only on the store seed and the
    /// registration index.
    pub fn register(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamHandle> {
        if self.by_name.contains_key(name) || self.stats.iter().any(|(n, _)| n == name) {
            return Err(Error::Params(format!("duplicate parameter name `{name}`")));
        }
        let index = self.entries.len();
        let value = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::HeNormal { fan_in } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index as u64);
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| Error::Params(format!("init for `{name}`: {e}")))?;
                Tensor::from_fn(shape, |_| T::from_f64(dist.sample(&mut rng)))
            }
        };
        let slot = self.slots.len();
        self.slots.push(Some(Slot { value, owner: index }));
        self.entries.push(Entry { name: name.to_string(), slot });
        self.by_name.insert(name.to_string(), index);
        Ok(ParamHandle(index))
    }

    /// Make `alias` share `target`'s storage. `alias`'s previous storage is released.
    pub fn tie(&mut self, target: &str, alias: &str) -> Result<()> {
        let t = self.handle(target)?;
        let a = self.handle(alias)?;
        let (ts, as_) = (self.entries[t.0].slot, self.entries[a.0].slot);
        if ts == as_ {
            return Ok(());
        }
        let (tshape, ashape) = (self.value(t).shape().to_vec(), self.value(a).shape().to_vec());
        if tshape != ashape {
            return Err(Error::Params(format!(
                "cannot tie `{alias}` {ashape:?} to `{target}` {tshape:?}: shapes differ"
            )));
        }
        for e in &mut self.entries {
            if e.slot == as_ {
                e.slot = ts;
            }
        }
        self.slots[as_] = None;
        Ok(())
    }

    pub fn handle(&self, name: &str) -> Result<ParamHandle> {
        self.by_name
            .get(name)
            .map(|&i| ParamHandle(i))
            .ok_or_else(|| Error::Params(format!("no parameter named `{name}`")))
    }

    pub fn slot_of(&self, h: ParamHandle) -> SlotId {
        SlotId(self.entries[h.0].slot)
    }

    pub fn name(&self, h: ParamHandle) -> &str {
        &self.entries[h.0].name
    }

    pub fn value(&self, h: ParamHandle) -> &Tensor<T> {
        self.slot_value(self.slot_of(h))
    }

    pub fn value_mut(&mut self, h: ParamHandle) -> &mut Tensor<T> {
        let s = self.slot_of(h);
        self.slot_value_mut(s)
    }

    pub fn slot_value(&self, s: SlotId) -> &Tensor<T> {
        &self.slots[s.0].as_ref().expect("handles only point at live slots").value
    }

    pub fn slot_value_mut(&mut self, s: SlotId) -> &mut Tensor<T> {
        &mut self.slots[s.0].as_mut().expect("handles only point at live slots").value
    }

    /// Canonical name of a slot: the name that registered it.
    pub fn slot_name(&self, s: SlotId) -> &str {
        let owner = self.slots[s.0].as_ref().expect("live slot").owner;
        &self.entries[owner].name
    }

    /// Live slots in registration order.
    pub fn slots(&self) -> impl Iterator<Item = SlotId> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(i, _)| SlotId(i))
    }

    /// Trainable floats, each tie group counted once.
    pub fn count(&self) -> usize {
        self.slots().map(|s| self.slot_value(s).len()).sum()
    }

    /// Trainable floats reachable through the given handles, each slot counted once.
    pub fn count_of(&self, handles: &[ParamHandle]) -> usize {
        let mut seen: Vec<SlotId> = handles.iter().map(|&h| self.slot_of(h)).collect();
        seen.sort();
        seen.dedup();
        seen.iter().map(|&s| self.slot_value(s).len()).sum()
    }

    pub fn register_stats(&mut self, name: &str, channels: usize) -> Result<StatsHandle> {
        if self.by_name.contains_key(name) || self.stats.iter().any(|(n, _)| n == name) {
            return Err(Error::Params(format!("duplicate buffer name `{name}`")));
        }
        self.stats.push((name.to_string(), RunningStats::new(channels)));
        Ok(StatsHandle(self.stats.len() - 1))
    }

    pub fn stats(&self, h: StatsHandle) -> &RunningStats<T> {
        &self.stats[h.0].1
    }

    pub fn stats_mut(&mut self, h: StatsHandle) -> &mut RunningStats<T> {
        &mut self.stats[h.0].1
    }

    pub fn stats_entries(&self) -> impl Iterator<Item = (&str, &RunningStats<T>)> {
        self.stats.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn stats_entries_mut(&mut self) -> impl Iterator<Item = (&str, &mut RunningStats<T>)> {
        self.stats.iter_mut().map(|(n, s)| (n.as_str(), s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_style_init_is_ones() {
        let mut store = ParamStore::<f32>::new(0);
        let g = store.register("bn.gamma", &[5], Init::Ones).unwrap();
        assert!(store.value(g).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new(0);
        store.register("w", &[2], Init::Zeros).unwrap();
        assert!(store.register("w", &[2], Init::Zeros).is_err());
        assert!(store.register_stats("w", 2).is_err());
    }

    #[test]
    fn tied_parameters_alias_storage() {
        let mut store = ParamStore::<f64>::new(3);
        let a = store.register("a", &[2, 2], Init::HeNormal { fan_in: 4 }).unwrap();
        let b = store.register("b", &[2, 2], Init::Zeros).unwrap();
        assert_eq!(store.count(), 8);
        store.tie("a", "b").unwrap();
        assert_eq!(store.count(), 4);
        store.value_mut(a).data_mut()[1] = 42.0;
        assert_eq!(store.value(b).data()[1], 42.0);
        assert_eq!(store.slot_of(a), store.slot_of(b));
        assert_eq!(store.slot_name(store.slot_of(b)), "a");
    }

    #[test]
    fn tie_requires_equal_shapes() {
        let mut store = ParamStore::<f64>::new(0);
        store.register("a", &[2], Init::Zeros).unwrap();
        store.register("b", &[3], Init::Zeros).unwrap();
        assert!(store.tie("a", "b").is_err());
        assert!(store.tie("a", "missing").is_err());
    }

    #[test]
    fn init_is_reproducible_per_seed() {
        let build = |seed| {
            let mut s = ParamStore::<f32>::new(seed);
            let w = s.register("w", &[8, 4, 3, 3], Init::HeNormal { fan_in: 36 }).unwrap();
            s.value(w).clone()
        };
        let (a, b) = (build(9), build(9));
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, build(10));
    }

    #[test]
    fn he_init_has_expected_spread() {
        let mut s = ParamStore::<f64>::new(1);
        let w = s.register("w", &[64, 16, 3, 3], Init::HeNormal { fan_in: 144 }).unwrap();
        let d = s.value(w).data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        let want = 2.0 / 144.0;
        assert!(mean.abs() < 0.01);
        assert!((var / want - 1.0).abs() < 0.08, "var {var} want {want}");
    }
}
