mod conv;
mod dropout;
mod elementwise;
mod loss;
mod norm;

pub use conv::{
    conv2d, conv2d_forward, conv_transpose2d, conv_transpose2d_forward, TRANSPOSED_OUTPUT_PADDING,
    TRANSPOSED_PADDING, TRANSPOSED_STRIDE,
};
pub use dropout::{dropout, keyed_mask, DropoutKey, MaskSource};
pub use elementwise::{add, add_all, mul, relu, sum, weighted_sum};
pub use loss::{softmax_channels, softmax_cross_entropy};
pub use norm::{batch_norm, BatchNormOptions, RunningStats};
