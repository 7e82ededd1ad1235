//! Per-pixel maps: gradient saliency of the reconstruction loss, channel
//! reduction, unit-max scaling and squaring.

use crate::autodiff::Graph;
use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An `height × width` grid of nonnegative, finite values (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl PixelMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract("pixel map needs positive dimensions".into()));
        }
        if values.len() != height * width {
            return Err(Error::Dimension {
                op: "PixelMap::new",
                axis: "pixels",
                expected: height * width,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Contract(format!("pixel map value {v} is not finite and >= 0")));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// A [`PixelMap`] scaled into `[0, 1]`.
///
/// The maximum is exactly 1 unless the source map was all zeros, in which case
/// every value is 0 and `was_degenerate` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedMap {
    map: PixelMap,
    was_degenerate: bool,
}

impl NormalizedMap {
    pub fn map(&self) -> &PixelMap {
        &self.map
    }

    pub fn values(&self) -> &[f64] {
        self.map.values()
    }

    pub fn was_degenerate(&self) -> bool {
        self.was_degenerate
    }

    pub fn into_map(self) -> PixelMap {
        self.map
    }
}

/// `out[h, w] = max_c grad[c, h, w]`.
///
/// Accepts `[C, H, W]` or a single-image batch `[1, C, H, W]`.
pub fn channel_reduce_max(grad: &Tensor) -> Result<PixelMap> {
    let (c, h, w) = match *grad.shape() {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => {
            return Err(Error::Contract(format!(
                "expected [C, H, W], got {:?}",
                grad.shape()
            )))
        }
    };
    let plane = h * w;
    let data = grad.data();
    let mut out = data[..plane].to_vec();
    for ch in 1..c {
        for (o, &v) in out.iter_mut().zip(&data[ch * plane..(ch + 1) * plane]) {
            *o = o.max(v);
        }
    }
    PixelMap::new(h, w, out)
}

/// Absolute input gradient of the reconstruction loss for one image,
/// reduced over channels by maximum.
pub fn saliency_map(model: &AutoencoderModel, x: &Tensor) -> Result<PixelMap> {
    saliency_with_reconstruction(model, x).map(|(s, _)| s)
}

/// [`saliency_map`] plus the reconstruction from the same forward pass.
///
/// `x` must be a single image `[1, C, H, W]`. Both the encoder path and the
/// direct `x` term of `(x − g(f(x)))²` contribute to the gradient.
pub fn saliency_with_reconstruction(
    model: &AutoencoderModel,
    x: &Tensor,
) -> Result<(PixelMap, Tensor)> {
    if x.shape().first() != Some(&1) {
        return Err(Error::Contract(format!(
            "saliency is computed per image, got batch shape {:?}",
            x.shape()
        )));
    }
    let mut graph = Graph::new();
    let input = graph.input(x.clone(), true);
    let forward = model.forward(&mut graph, input, false)?;
    let loss = graph.mse(input, forward.output)?;
    let mut grads = graph.backward(loss)?;
    let grad = grads
        .take(input)
        .ok_or_else(|| Error::Contract("input gradient unavailable".into()))?;
    let saliency = channel_reduce_max(&grad.map(f64::abs))?;
    Ok((saliency, graph.value(forward.output).clone()))
}

/// Divides every value by the map's maximum.
pub fn scale_unit_max(map: &PixelMap) -> NormalizedMap {
    let max = map.max();
    if max == 0.0 {
        return NormalizedMap {
            map: map.clone(),
            was_degenerate: true,
        };
    }
    let values = map.values.iter().map(|v| v / max).collect();
    NormalizedMap {
        map: PixelMap {
            height: map.height,
            width: map.width,
            values,
        },
        was_degenerate: false,
    }
}

/// Elementwise square of a unit-scaled map; stays in `[0, 1]`.
pub fn square_map(map: &NormalizedMap) -> NormalizedMap {
    NormalizedMap {
        map: PixelMap {
            height: map.map.height,
            width: map.map.width,
            values: map.map.values.iter().map(|v| v * v).collect(),
        },
        was_degenerate: map.was_degenerate,
    }
}
