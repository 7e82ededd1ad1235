//! Reconstruction-error maps and input-gradient saliency maps for a
//! convolutional autoencoder, plus the top-K correspondence metrics used to
//! compare them.

pub mod autodiff;
pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod saliency;
pub mod tensor;

pub use autoencoder::{reconstruction_loss, reconstruction_map, AutoencoderConfig, AutoencoderModel};
pub use dataset::{LabeledImageSet, SplitConfig};
pub use error::{Error, Result};
pub use metrics::{Population, TopKSet};
pub use saliency::{NormalizedMap, PixelMap};
pub use tensor::Tensor;
