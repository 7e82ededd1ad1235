//! Convolutional autoencoder `g(f(x))`, its training loop, checkpoints and the
//! reconstruction error quantities.

mod checkpoint;
mod config;
mod train;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AutoencoderConfig, FeatureShape, LayerSpec};
pub use train::{
    evaluate_loss, select_learning_rate, train, EpochStats, LearningRateSearch, TrainConfig,
    TrainReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::saliency::PixelMap;
use crate::tensor::Tensor;

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// Encoder/decoder parameters plus the architecture they realize.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    config: AutoencoderConfig,
    params: Vec<Parameter>,
}

/// Node handles from one [`AutoencoderModel::forward`] call.
#[derive(Debug)]
pub struct Forward {
    pub output: NodeId,
    pub latent: NodeId,
    /// Graph leaves of the parameters, in [`AutoencoderModel::parameters`] order.
    pub params: Vec<NodeId>,
}

impl AutoencoderModel {
    /// Fresh model with He-style uniform weights, `U(±√(6 / fan_in))`, and
    /// zero biases, drawn from `config.init_seed`.
    pub fn build(config: AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = Vec::new();
        for (stack, layers) in [("encoder", &config.encoder), ("decoder", &config.decoder)] {
            for (i, layer) in layers.iter().enumerate() {
                let Some((w_shape, b_shape)) = layer.parameter_shapes() else {
                    continue;
                };
                let bound = (6.0 / layer.fan_in() as f64).sqrt();
                let weight = Tensor::from_fn(&w_shape, |_| rng.random_range(-bound..bound));
                params.push(Parameter { name: format!("{stack}.{i}.weight"), value: weight });
                params.push(Parameter { name: format!("{stack}.{i}.bias"), value: Tensor::zeros(&b_shape) });
            }
        }
        Ok(Self { config, params })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes
    /// against the architecture.
    pub fn from_parameters(config: AutoencoderConfig, params: Vec<Parameter>) -> Result<Self> {
        let template = Self::build(config)?;
        template.check_parameters(&params)?;
        if let Some(p) = params.iter().find(|p| !p.value.is_finite()) {
            return Err(Error::Data(format!("parameter {} is not finite", p.name)));
        }
        Ok(Self { config: template.config, params })
    }

    /// Errors naming the first parameter whose name or shape differs from
    /// this model's.
    pub fn check_parameters(&self, params: &[Parameter]) -> Result<()> {
        for (i, mine) in self.params.iter().enumerate() {
            let Some(theirs) = params.get(i) else {
                return Err(Error::Config(format!("missing parameter {}", mine.name)));
            };
            if theirs.name != mine.name {
                return Err(Error::Config(format!(
                    "parameter {} found where {} was expected",
                    theirs.name, mine.name
                )));
            }
            if theirs.value.shape() != mine.value.shape() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {:?}, architecture needs {:?}",
                    mine.name,
                    theirs.value.shape(),
                    mine.value.shape()
                )));
            }
        }
        if let Some(extra) = params.get(self.params.len()) {
            return Err(Error::Config(format!("unexpected parameter {}", extra.name)));
        }
        Ok(())
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Records `g(f(x))` for `x: [batch, C, H, W]` into `graph`.
    pub fn forward<'a>(
        &'a self,
        graph: &mut Graph<'a>,
        x: NodeId,
        params_require_grad: bool,
    ) -> Result<Forward> {
        let [c, h, w] = self.config.input_shape;
        let shape = graph.value(x).shape();
        if shape.len() != 4 || shape[1..] != [c, h, w] {
            return Err(Error::Dimension {
                op: "autoencoder forward",
                axis: "image shape",
                expected: c * h * w,
                found: shape.iter().skip(1).product(),
            });
        }
        let batch = shape[0];
        let params: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| graph.param(&p.value, params_require_grad))
            .collect();
        let mut next_param = params.iter().copied();
        let mut shape = FeatureShape::Spatial { channels: c, height: h, width: w };
        let mut node = x;
        let mut latent = None;
        for (stage, layers) in [&self.config.encoder, &self.config.decoder].into_iter().enumerate() {
            if stage == 1 {
                latent = Some(node);
            }
            for layer in layers {
                let out_shape = layer.output_shape(shape)?;
                node = apply_layer(graph, layer, node, shape, batch, &mut next_param)?;
                shape = out_shape;
            }
        }
        Ok(Forward {
            output: node,
            latent: latent.expect("decoder stage always runs"),
            params,
        })
    }

    /// `g(f(x))` for a batch, without recording gradients.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        let mut graph = Graph::new();
        let input = graph.input(x.clone(), false);
        let fwd = self.forward(&mut graph, input, false)?;
        Ok(graph.value(fwd.output).clone())
    }
}

fn apply_layer(
    graph: &mut Graph<'_>,
    layer: &LayerSpec,
    node: NodeId,
    shape: FeatureShape,
    batch: usize,
    params: &mut impl Iterator<Item = NodeId>,
) -> Result<NodeId> {
    let mut take = || params.next().ok_or_else(|| Error::Config("parameter list exhausted".into()));
    match *layer {
        LayerSpec::Conv { in_channels, stride, padding, .. }
        | LayerSpec::TransposedConv { in_channels, stride, padding, .. } => {
            let node = match shape {
                FeatureShape::Flat(n) => {
                    let side = ((n / in_channels) as f64).sqrt().round() as usize;
                    graph.reshape(node, &[batch, in_channels, side, side])?
                }
                FeatureShape::Spatial { .. } => node,
            };
            let (w, b) = (take()?, take()?);
            if matches!(layer, LayerSpec::Conv { .. }) {
                graph.conv2d(node, w, b, stride, padding)
            } else {
                graph.conv_transpose2d(node, w, b, stride, padding)
            }
        }
        LayerSpec::Dense { in_features, .. } => {
            let node = match shape {
                FeatureShape::Spatial { .. } => graph.reshape(node, &[batch, in_features])?,
                FeatureShape::Flat(_) => node,
            };
            let (w, b) = (take()?, take()?);
            graph.dense(node, w, b)
        }
        LayerSpec::Activation(kind) => Ok(graph.activation(node, kind)),
    }
}

/// `r_i = (x_i − x̂_i)²` for one single-channel image.
///
/// Both tensors hold one image: `[1, 1, H, W]`, `[1, H, W]` or `[H, W]`.
pub fn reconstruction_map(x: &Tensor, x_hat: &Tensor) -> Result<PixelMap> {
    x_hat.expect_shape("reconstruction_map", x.shape())?;
    let (h, w) = match *x.shape() {
        [1, 1, h, w] | [1, h, w] | [h, w] => (h, w),
        _ => {
            return Err(Error::Contract(format!(
                "reconstruction map needs one single-channel image, got {:?}",
                x.shape()
            )))
        }
    };
    let values = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    PixelMap::new(h, w, values)
}

/// `r̄ = (1/n) Σ r_i`.
pub fn reconstruction_loss(r: &PixelMap) -> f64 {
    r.mean()
}
