use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ladder::config::{level_letter, LadderConfig};
use crate::ladder::topology::{is_encoder, EdgeKind, LadderTopology, NodeId};
use crate::nn::{Conv2d, ConvTranspose2d, DropoutPlan, ParamHandle, ParamStore, Session, SharedResidualBlock, SlotId};
use crate::tensor::ops;
use crate::tensor::{Mode, Real, Tape, Var};

/// Layer layout of a ladder; parameters live in the owning [`LadderNet`]'s store.
#[derive(Clone, Debug)]
pub struct LadderLayers {
    pub config: LadderConfig,
    pub topology: LadderTopology,
    pub stem: Conv2d,
    pub blocks: BTreeMap<NodeId, SharedResidualBlock>,
    /// Keyed by the upper (source) node of each down-edge.
    pub downs: BTreeMap<NodeId, Conv2d>,
    /// Keyed by the target node of each up- or turn-edge.
    pub ups: BTreeMap<NodeId, ConvTranspose2d>,
    pub head: Conv2d,
}

#[derive(Clone, Debug)]
pub struct LadderNet<T> {
    pub store: ParamStore<T>,
    pub layers: LadderLayers,
}

/// Output of one forward pass.
pub struct Pass<'t, T> {
    pub logits: Var<'t, T>,
    /// Parameter slots and the tape leaves they were bound to.
    pub bindings: Vec<(SlotId, Var<'t, T>)>,
    /// Output shape of every node's block.
    pub node_shapes: BTreeMap<NodeId, Vec<usize>>,
}

/// Stored floats per component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub stem: usize,
    /// Per level: (block count, floats).
    pub blocks: Vec<(usize, usize)>,
    pub down: usize,
    pub up: usize,
    pub head: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.stem + self.blocks.iter().map(|b| b.1).sum::<usize>() + self.down + self.up + self.head
    }
}

impl std::fmt::Display for ParamBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "stem conv            {:>10}", self.stem)?;
        for (level, (count, floats)) in self.blocks.iter().enumerate() {
            writeln!(f, "level {} blocks x{:<3}  {:>10}", level_letter(level), count, floats)?;
        }
        writeln!(f, "down convs           {:>10}", self.down)?;
        writeln!(f, "up convs             {:>10}", self.up)?;
        writeln!(f, "head conv            {:>10}", self.head)?;
        write!(f, "total                {:>10}", self.total())
    }
}

impl LadderLayers {
    /// Register every layer of the ladder in `store` in a fixed order.
    pub fn build<T: Real>(config: &LadderConfig, store: &mut ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let topology = LadderTopology::new(config.levels, config.pairs)?;
        let stem = Conv2d::new(store, "stem", config.in_channels, config.base_channels, 3, 1)?;
        let mut blocks = BTreeMap::new();
        for (i, &node) in topology.nodes.iter().enumerate() {
            let block = SharedResidualBlock::new(
                store,
                &format!("block.{node}"),
                config.channels(node.level),
                config.dropout_rate,
                i as u64,
                config.batch_norm,
            )?;
            blocks.insert(node, block);
        }
        let mut downs = BTreeMap::new();
        let mut ups = BTreeMap::new();
        for e in &topology.edges {
            let (cf, ct) = (config.channels(e.from.level), config.channels(e.to.level));
            match e.kind {
                EdgeKind::Down => {
                    downs.insert(e.from, Conv2d::new(store, &format!("down.{}-{}", e.from, e.to), cf, ct, 3, 2)?);
                }
                EdgeKind::Up | EdgeKind::Turn => {
                    ups.insert(e.to, ConvTranspose2d::new(store, &format!("up.{}-{}", e.from, e.to), cf, ct)?);
                }
                EdgeKind::Lateral => {}
            }
        }
        let head = Conv2d::new(store, "head", config.base_channels, config.num_classes, 1, 1)?;
        Ok(Self { config: config.clone(), topology, stem, blocks, downs, ups, head })
    }

    /// Reject inputs whose extent cannot be halved down to the bottom level.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [_, c, h, w] = shape[..] else {
            return Err(Error::shape("ladder", format!("expected [n, c, h, w], got {shape:?}")));
        };
        if c != self.config.in_channels {
            return Err(Error::shape("ladder", format!("expected {} input channels, got {c}", self.config.in_channels)));
        }
        for level in 1..self.config.levels {
            let m = 1usize << level;
            if h % m != 0 || w % m != 0 {
                return Err(Error::shape(
                    "ladder",
                    format!(
                        "input {h}x{w} cannot be halved into level {} (needs multiples of {})",
                        level_letter(level),
                        m
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn forward<'t, T: Real>(
        &self,
        s: &mut Session<'t, '_, T>,
        x: Var<'t, T>,
    ) -> Result<(Var<'t, T>, BTreeMap<NodeId, Vec<usize>>)> {
        self.check_input(&x.shape())?;
        let bottom = self.config.levels - 1;
        let mut out: BTreeMap<NodeId, Var<'t, T>> = BTreeMap::new();
        let stem = self.stem.forward(s, x)?;
        for column in 0..self.config.columns() {
            let levels: Vec<usize> = if is_encoder(column) {
                (0..=bottom).collect()
            } else {
                (0..bottom).rev().collect()
            };
            for level in levels {
                let node = NodeId::new(level, column);
                let mut terms = Vec::with_capacity(2);
                if column == 0 && level == 0 {
                    terms.push(stem);
                }
                if level < bottom && column > 0 {
                    terms.push(out[&NodeId::new(level, column - 1)]);
                }
                if is_encoder(column) && level > 0 {
                    let above = NodeId::new(level - 1, column);
                    terms.push(self.downs[&above].forward(s, out[&above])?);
                }
                if !is_encoder(column) {
                    let below = if level + 1 == bottom {
                        NodeId::new(bottom, column - 1)
                    } else {
                        NodeId::new(level + 1, column)
                    };
                    terms.push(self.ups[&node].forward(s, out[&below])?);
                }
                let input = ops::add_all(&terms)?;
                out.insert(node, self.blocks[&node].forward(s, input)?);
            }
        }
        let sink = self.topology.sink();
        let logits = self.head.forward(s, out[&sink])?;
        let shapes = out.iter().map(|(n, v)| (*n, v.shape())).collect();
        Ok((logits, shapes))
    }

    pub fn breakdown<T: Real>(&self, store: &ParamStore<T>) -> ParamBreakdown {
        let count = |hs: Vec<ParamHandle>| store.count_of(&hs);
        let mut blocks = vec![(0, 0); self.config.levels];
        for (node, b) in &self.blocks {
            blocks[node.level].0 += 1;
            blocks[node.level].1 += count(b.handles());
        }
        ParamBreakdown {
            stem: count(self.stem.handles()),
            blocks,
            down: self.downs.values().map(|d| count(d.handles())).sum(),
            up: self.ups.values().map(|u| count(u.handles())).sum(),
            head: count(self.head.handles()),
        }
    }
}

impl<T: Real> LadderNet<T> {
    pub fn build(config: &LadderConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(seed);
        let layers = LadderLayers::build(config, &mut store)?;
        Ok(Self { store, layers })
    }

    pub fn config(&self) -> &LadderConfig {
        &self.layers.config
    }

    pub fn forward<'t>(&mut self, tape: &'t Tape<T>, x: Var<'t, T>, mode: Mode, dropout: DropoutPlan) -> Result<Pass<'t, T>> {
        let mut s = Session::new(tape, &mut self.store, mode, dropout);
        let (logits, node_shapes) = self.layers.forward(&mut s, x)?;
        Ok(Pass { logits, bindings: s.bindings(), node_shapes })
    }

    /// Trainable floats, tied storage counted once.
    pub fn count_parameters(&self) -> usize {
        self.store.count()
    }

    pub fn breakdown(&self) -> ParamBreakdown {
        self.layers.breakdown(&self.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn default_config_pyramid_and_logits() {
        let mut net = LadderNet::<f32>::build(&LadderConfig::default(), 0).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, 48, 48], |i| (i % 13) as f32 / 13.0));
        let pass = net.forward(&tape, x, Mode::Eval, DropoutPlan::Off).unwrap();
        assert_eq!(pass.logits.shape(), vec![1, 2, 48, 48]);
        let sizes: Vec<usize> = (0..5).map(|l| pass.node_shapes[&NodeId::new(l, 0)][2]).collect();
        assert_eq!(sizes, vec![48, 24, 12, 6, 3]);
    }

    #[test]
    fn indivisible_size_names_level() {
        let mut net = LadderNet::<f32>::build(&LadderConfig::small(4, 1, 2), 0).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 1, 20, 20]));
        let err = net.forward(&tape, x, Mode::Eval, DropoutPlan::Off).err().unwrap();
        // 20 → 10 → 5 cannot reach level D
        assert!(err.to_string().contains("level D"), "{err}");
    }

    #[test]
    fn breakdown_sums_to_store_count() {
        let net = LadderNet::<f32>::build(&LadderConfig::default(), 0).unwrap();
        let b = net.breakdown();
        assert_eq!(b.total(), net.count_parameters());
        assert_eq!(b.blocks.iter().map(|x| x.0).sum::<usize>(), 18);
    }
}
