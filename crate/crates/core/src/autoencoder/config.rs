use std::fmt;
use std::str::FromStr;

use crate::autodiff::kernels::{conv_output_size, transposed_output_size};
use crate::autodiff::Activation;
use crate::error::{Error, Result};

/// One layer of the encoder or decoder stack.
///
/// A dense layer flattens a spatial input; a (transposed) convolution that
/// follows a dense layer reshapes the feature vector into a square grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    TransposedConv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Activation(Activation),
}

/// Activation shape flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureShape {
    Spatial { channels: usize, height: usize, width: usize },
    Flat(usize),
}

impl FeatureShape {
    pub fn numel(self) -> usize {
        match self {
            FeatureShape::Spatial { channels, height, width } => channels * height * width,
            FeatureShape::Flat(n) => n,
        }
    }

    /// View as `channels × s × s` for a convolution that expects `channels`.
    fn as_spatial(self, channels: usize) -> Result<(usize, usize)> {
        match self {
            FeatureShape::Spatial { channels: c, height, width } if c == channels => Ok((height, width)),
            FeatureShape::Spatial { channels: c, .. } => Err(Error::Config(format!(
                "layer expects {channels} channels, input has {c}"
            ))),
            FeatureShape::Flat(n) => {
                let side = (n / channels.max(1)) as f64;
                let side = side.sqrt().round() as usize;
                if channels * side * side != n || side == 0 {
                    return Err(Error::Config(format!(
                        "{n} features cannot be viewed as {channels} square planes"
                    )));
                }
                Ok((side, side))
            }
        }
    }
}

impl LayerSpec {
    /// Output shape for `input`, or a configuration error.
    pub fn output_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        match *self {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => {
                let (h, w) = input.as_spatial(in_channels)?;
                Ok(FeatureShape::Spatial {
                    channels: out_channels,
                    height: conv_output_size(h, kernel, stride, padding)?,
                    width: conv_output_size(w, kernel, stride, padding)?,
                })
            }
            LayerSpec::TransposedConv { in_channels, out_channels, kernel, stride, padding } => {
                let (h, w) = input.as_spatial(in_channels)?;
                Ok(FeatureShape::Spatial {
                    channels: out_channels,
                    height: transposed_output_size(h, kernel, stride, padding)?,
                    width: transposed_output_size(w, kernel, stride, padding)?,
                })
            }
            LayerSpec::Dense { in_features, out_features } => {
                if input.numel() != in_features {
                    return Err(Error::Config(format!(
                        "dense layer expects {in_features} features, input has {}",
                        input.numel()
                    )));
                }
                Ok(FeatureShape::Flat(out_features))
            }
            LayerSpec::Activation(_) => Ok(input),
        }
    }

    /// Shapes of the `(weight, bias)` parameters, if the layer has any.
    pub fn parameter_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv { in_channels, out_channels, kernel, .. } => Some((
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            )),
            LayerSpec::TransposedConv { in_channels, out_channels, kernel, .. } => Some((
                vec![in_channels, out_channels, kernel, kernel],
                vec![out_channels],
            )),
            LayerSpec::Dense { in_features, out_features } => {
                Some((vec![in_features, out_features], vec![out_features]))
            }
            LayerSpec::Activation(_) => None,
        }
    }

    /// Weight + bias element count.
    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .unwrap_or(0)
    }

    /// Inputs feeding each output unit, used to scale weight init.
    ///
    /// For a transposed convolution each output pixel sees roughly
    /// `in_channels · (kernel / stride)²` taps.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerSpec::TransposedConv { in_channels, kernel, stride, .. } => {
                (in_channels * kernel * kernel / (stride * stride)).max(1)
            }
            LayerSpec::Dense { in_features, .. } => in_features,
            LayerSpec::Activation(_) => 0,
        }
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::LeakyRelu => "leaky-relu",
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky-relu" => Ok(Activation::LeakyRelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => write!(
                f,
                "conv {in_channels} {out_channels} {kernel} {stride} {padding}"
            ),
            LayerSpec::TransposedConv { in_channels, out_channels, kernel, stride, padding } => {
                write!(
                    f,
                    "transposed-conv {in_channels} {out_channels} {kernel} {stride} {padding}"
                )
            }
            LayerSpec::Dense { in_features, out_features } => {
                write!(f, "dense {in_features} {out_features}")
            }
            LayerSpec::Activation(a) => write!(f, "activation {}", activation_name(a)),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let nums = || -> Result<Vec<usize>> {
            rest.iter()
                .map(|p| p.parse().map_err(|_| Error::Config(format!("bad number {p:?} in layer {s:?}"))))
                .collect()
        };
        let arity = |n: usize, v: Vec<usize>| -> Result<Vec<usize>> {
            if v.len() == n {
                Ok(v)
            } else {
                Err(Error::Config(format!("layer {s:?} needs {n} numbers")))
            }
        };
        match kind {
            "conv" | "transposed-conv" => {
                let v = arity(5, nums()?)?;
                let (in_channels, out_channels, kernel, stride, padding) = (v[0], v[1], v[2], v[3], v[4]);
                Ok(if kind == "conv" {
                    LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding }
                } else {
                    LayerSpec::TransposedConv { in_channels, out_channels, kernel, stride, padding }
                })
            }
            "dense" => {
                let v = arity(2, nums()?)?;
                Ok(LayerSpec::Dense { in_features: v[0], out_features: v[1] })
            }
            "activation" if rest.len() == 1 => Ok(LayerSpec::Activation(rest[0].parse()?)),
            _ => Err(Error::Config(format!("unrecognized layer {s:?}"))),
        }
    }
}

/// Architecture of the encoder/decoder pair plus the init seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutoencoderConfig {
    /// `[channels, height, width]` of one input image.
    pub input_shape: [usize; 3],
    pub latent_dim: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub init_seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self::mnist(64, 0)
    }
}

impl AutoencoderConfig {
    /// The 28×28 MNIST architecture with a `latent_dim` bottleneck.
    pub fn mnist(latent_dim: usize, init_seed: u64) -> Self {
        use Activation::*;
        let flat = 32 * 7 * 7;
        Self {
            input_shape: [1, 28, 28],
            latent_dim,
            encoder: vec![
                LayerSpec::Conv { in_channels: 1, out_channels: 16, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Activation(LeakyRelu),
                LayerSpec::Conv { in_channels: 16, out_channels: 32, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Activation(LeakyRelu),
                LayerSpec::Dense { in_features: flat, out_features: latent_dim },
            ],
            decoder: vec![
                LayerSpec::Dense { in_features: latent_dim, out_features: flat },
                LayerSpec::Activation(LeakyRelu),
                LayerSpec::TransposedConv { in_channels: 32, out_channels: 16, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Activation(LeakyRelu),
                LayerSpec::TransposedConv { in_channels: 16, out_channels: 1, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Activation(Sigmoid),
            ],
            init_seed,
        }
    }

    pub fn input_numel(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Walks both stacks, checking every layer's input against its spec, the
    /// bottleneck width and that the decoder reproduces the input shape.
    pub fn validate(&self) -> Result<()> {
        let [channels, height, width] = self.input_shape;
        if channels == 0 || height == 0 || width == 0 || self.latent_dim == 0 {
            return Err(Error::Config("input shape and latent_dim must be positive".into()));
        }
        let input = FeatureShape::Spatial { channels, height, width };
        let latent = self
            .encoder
            .iter()
            .try_fold(input, |shape, layer| layer.output_shape(shape))?;
        if latent != FeatureShape::Flat(self.latent_dim) {
            return Err(Error::Config(format!(
                "encoder ends in {latent:?}, expected {} latent features",
                self.latent_dim
            )));
        }
        let output = self
            .decoder
            .iter()
            .try_fold(latent, |shape, layer| layer.output_shape(shape))?;
        if output != input {
            return Err(Error::Config(format!(
                "decoder output {output:?} does not match input {input:?}"
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count of both stacks.
    pub fn parameter_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(LayerSpec::parameter_count)
            .sum()
    }

    /// Flat `key = value` lines, one per setting and layer.
    pub fn to_text(&self) -> String {
        let [c, h, w] = self.input_shape;
        let mut out = format!(
            "input_shape = {c} {h} {w}\nlatent_dim = {}\ninit_seed = {}\n",
            self.latent_dim, self.init_seed
        );
        for (stack, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, layer) in layers.iter().enumerate() {
                out.push_str(&format!("{stack}.{i} = {layer}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut input_shape = None;
        let mut latent_dim = None;
        let mut init_seed = None;
        let mut encoder = Vec::new();
        let mut decoder = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("expected key = value, got {line:?}")))?;
            let num = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
            };
            match key {
                "input_shape" => {
                    let dims = value
                        .split_whitespace()
                        .map(|d| num(d).map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let dims: [usize; 3] = dims
                        .try_into()
                        .map_err(|_| Error::Config("input_shape needs 3 numbers".into()))?;
                    input_shape = Some(dims);
                }
                "latent_dim" => latent_dim = Some(num(value)? as usize),
                "init_seed" => init_seed = Some(num(value)?),
                _ => {
                    let (stack, idx) = key
                        .split_once('.')
                        .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
                    let layers = match stack {
                        "encoder" => &mut encoder,
                        "decoder" => &mut decoder,
                        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                    };
                    if num(idx)? as usize != layers.len() {
                        return Err(Error::Config(format!("layer {key} out of order")));
                    }
                    layers.push(value.parse()?);
                }
            }
        }
        let missing = |k: &str| Error::Config(format!("missing key {k}"));
        Ok(Self {
            input_shape: input_shape.ok_or_else(|| missing("input_shape"))?,
            latent_dim: latent_dim.ok_or_else(|| missing("latent_dim"))?,
            init_seed: init_seed.ok_or_else(|| missing("init_seed"))?,
            encoder,
            decoder,
        })
    }
}
