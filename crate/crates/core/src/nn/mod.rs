//! Parameters with weight tying, basic layers, and the shared-weights residual block.

mod block;
mod layers;
mod params;
mod session;

pub use block::SharedResidualBlock;
pub use layers::{BatchNorm2d, Conv2d, ConvTranspose2d};
pub use params::{Init, ParamHandle, ParamStore, SlotId, StatsHandle};
pub use session::{DropoutPlan, Session};
