//! LadderNet construction and topology analysis.

mod config;
mod network;
mod topology;

pub use config::{level_letter, LadderConfig};
pub use network::{LadderLayers, LadderNet, ParamBreakdown, Pass};
pub use topology::{is_encoder, parse_path, Dag, Edge, EdgeKind, LadderTopology, NodeId};
