//! Content-aware anti-aliased downsampling.
//!
//! A small convolutional block predicts a positive, unit-sum `k x k` filter
//! for every spatial location and channel group of a feature map. Applying
//! those filters before strided subsampling suppresses aliasing where the
//! content is high-frequency while keeping smooth regions sharp. The crate
//! also provides fixed-filter baselines, reverse-mode gradients for training,
//! shift-consistency metrics and filter analysis.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the usual instantiations.

pub mod adaptive;
pub mod analysis;
pub mod autograd;
pub mod conv;
pub mod error;
pub mod io;
pub mod metrics;
pub mod norm;
pub mod ops;
pub mod predictor;
pub mod scalar;
pub mod tensor;

pub use adaptive::{apply_grouped_adaptive, apply_spatial_adaptive, blur_then_downsample, BlurKind, BlurProvider};
pub use conv::{conv2d, ConvParams};
pub use error::{Error, Result};
pub use predictor::{group_of_channel, predict_filters, FilterField, PredictorConfig, PredictorParams};
pub use scalar::{Gemm, Scalar};
pub use tensor::{PadMode, Shape4, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type FilterField32 = FilterField<f32>;
pub type FilterField64 = FilterField<f64>;
pub type PredictorParams32 = PredictorParams<f32>;
pub type PredictorParams64 = PredictorParams<f64>;
pub type BlurProvider32 = BlurProvider<f32>;
pub type BlurProvider64 = BlurProvider<f64>;
pub type Tape32 = autograd::Tape<f32>;
pub type Tape64 = autograd::Tape<f64>;
