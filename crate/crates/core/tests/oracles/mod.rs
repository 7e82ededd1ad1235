//! Independent reference implementations used as test oracles. Everything
//! here is written as direct loops over the definitions, sharing no code with
//! the library kernels.
#![allow(dead_code)]

use reconsal_core::autodiff::{Graph, NodeId};
use reconsal_core::{Result, Tensor};

/// `y[n][o] = b[o] + Σ_i x[n][i]·w[i][o]`.
pub fn dense(x: &[f64], batch: usize, in_f: usize, w: &[f64], out_f: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; batch * out_f];
    for n in 0..batch {
        for o in 0..out_f {
            let mut acc = b[o];
            for i in 0..in_f {
                acc += x[n * in_f + i] * w[i * out_f + o];
            }
            y[n * out_f + o] = acc;
        }
    }
    y
}

/// Zero-padded cross-correlation; `x: [N,C,H,W]`, `w: [O,C,k,k]`.
/// Returns the output and its `[N,O,H',W']` shape.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = <[usize; 4]>::try_from(x.shape()).unwrap();
    let [o, _, kh, kw] = <[usize; 4]>::try_from(w.shape()).unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let (xd, wdat) = (x.data(), w.data());
    let mut y = vec![0.0; n * o * oh * ow];
    for bi in 0..n {
        for oc in 0..o {
            for r in 0..oh {
                for col in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for a in 0..kh {
                            for e in 0..kw {
                                let yy = (r * stride + a) as isize - pad as isize;
                                let xx = (col * stride + e) as isize - pad as isize;
                                if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
                                    continue;
                                }
                                let xv = xd[((bi * c + ic) * h + yy as usize) * wd + xx as usize];
                                acc += xv * wdat[((oc * c + ic) * kh + a) * kw + e];
                            }
                        }
                    }
                    y[((bi * o + oc) * oh + r) * ow + col] = acc;
                }
            }
        }
    }
    (y, [n, o, oh, ow])
}

/// Transposed convolution by scatter-add; `x: [N,C,H,W]`, `w: [C,O,k,k]`.
pub fn conv_transpose2d(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = <[usize; 4]>::try_from(x.shape()).unwrap();
    let [_, o, kh, kw] = <[usize; 4]>::try_from(w.shape()).unwrap();
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (wd - 1) * stride + kw - 2 * pad;
    let (xd, wdat) = (x.data(), w.data());
    let mut y = vec![0.0; n * o * oh * ow];
    for bi in 0..n {
        for oc in 0..o {
            for v in &mut y[(bi * o + oc) * oh * ow..(bi * o + oc + 1) * oh * ow] {
                *v = b[oc];
            }
        }
        for ic in 0..c {
            for i in 0..h {
                for j in 0..wd {
                    let xv = xd[((bi * c + ic) * h + i) * wd + j];
                    for oc in 0..o {
                        for a in 0..kh {
                            for e in 0..kw {
                                let yy = (i * stride + a) as isize - pad as isize;
                                let xx = (j * stride + e) as isize - pad as isize;
                                if yy < 0 || xx < 0 || yy >= oh as isize || xx >= ow as isize {
                                    continue;
                                }
                                y[((bi * o + oc) * oh + yy as usize) * ow + xx as usize] +=
                                    xv * wdat[((ic * o + oc) * kh + a) * kw + e];
                            }
                        }
                    }
                }
            }
        }
    }
    (y, [n, o, oh, ow])
}

/// Top-K coordinates by fully sorting every pixel: value descending, then
/// row-major index ascending.
pub fn top_k(values: &[f64], width: usize, k: usize) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx.into_iter().map(|i| (i / width, i % width)).collect()
}

pub fn agreement(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    a.iter().filter(|p| b.iter().any(|q| q == *p)).count()
}

/// `max_{p ∈ reference} min_{q ∈ other} ‖p − q‖₂`.
pub fn max_distance(reference: &[(usize, usize)], other: &[(usize, usize)]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in reference {
        let mut best = f64::INFINITY;
        for q in other {
            let dr = p.0 as f64 - q.0 as f64;
            let dc = p.1 as f64 - q.1 as f64;
            best = best.min((dr * dr + dc * dc).sqrt());
        }
        worst = worst.max(best);
    }
    worst
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s / a.len() as f64
}

/// Pixelwise maximum over channels of `[C,H,W]` data.
pub fn channel_max(data: &[f64], c: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; hw];
    for ch in 0..c {
        for i in 0..hw {
            out[i] = out[i].max(data[ch * hw + i]);
        }
    }
    out
}

/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `(analytic, central difference)` for every coordinate of every leaf.
/// `build` receives the graph and one leaf per tensor in `leaves` and returns
/// a scalar node.
pub fn gradient_pairs<F>(build: F, leaves: &[Tensor], eps: f64) -> Vec<(f64, f64)>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    let value = |ts: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ts.iter().map(|t| g.input(t.clone(), false)).collect();
        let out = build(&mut g, &ids).unwrap();
        g.value(out).data()[0]
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = build(&mut g, &ids).unwrap();
    let grads = g.backward(out).unwrap();

    let mut pairs = Vec::new();
    let mut probe = leaves.to_vec();
    for (li, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).cloned().unwrap_or_else(|| Tensor::zeros(leaves[li].shape()));
        for i in 0..leaves[li].numel() {
            let orig = leaves[li].data()[i];
            probe[li].data_mut()[i] = orig + eps;
            let up = value(&probe);
            probe[li].data_mut()[i] = orig - eps;
            let down = value(&probe);
            probe[li].data_mut()[i] = orig;
            pairs.push((analytic.data()[i], (up - down) / (2.0 * eps)));
        }
    }
    pairs
}

/// Worst [`relative_error`] over every coordinate of every leaf.
pub fn gradient_check<F>(build: F, leaves: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    gradient_pairs(build, leaves, eps)
        .into_iter()
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// A small conv → transposed-conv → dense network with a squared-error loss
/// against a fixed target.
#[derive(Clone, Debug)]
pub struct NetSpec {
    pub batch: usize,
    pub channels: usize,
    pub side: usize,
    /// `(out_channels, kernel, stride, padding)`.
    pub conv: (usize, usize, usize, usize),
    pub tconv: (usize, usize, usize, usize),
    pub dense_out: usize,
    pub activations: [reconsal_core::autodiff::Activation; 3],
}

impl NetSpec {
    pub fn random(rng: &mut impl rand::Rng) -> Self {
        use reconsal_core::autodiff::Activation::*;
        let acts = [LeakyRelu, Sigmoid, Identity];
        let k = rng.random_range(1..=3);
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..k);
        let tk = rng.random_range(1..=3);
        let tstride = rng.random_range(1..=2);
        let spec = Self {
            batch: rng.random_range(1..=2),
            channels: rng.random_range(1..=2),
            side: rng.random_range(k.max(3)..=5),
            conv: (rng.random_range(1..=3), k, stride, pad),
            tconv: (rng.random_range(1..=2), tk, tstride, rng.random_range(0..tk.min(2))),
            dense_out: rng.random_range(1..=3),
            activations: [0; 3].map(|_| acts[rng.random_range(0..3)]),
        };
        // A padded transposed conv of a 1x1 map can come out empty; redraw.
        if spec.output_side() == 0 {
            return Self::random(rng);
        }
        spec
    }

    fn output_side(&self) -> usize {
        let (_, k, s, p) = self.conv;
        let h1 = (self.side + 2 * p - k) / s + 1;
        let (_, tk, ts, tp) = self.tconv;
        ((h1 - 1) * ts + tk).saturating_sub(2 * tp)
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let (co, k, _, _) = self.conv;
        let (to, tk, _, _) = self.tconv;
        let h2 = self.output_side();
        let flat = to * h2 * h2;
        vec![
            vec![self.batch, self.channels, self.side, self.side],
            vec![co, self.channels, k, k],
            vec![co],
            vec![co, to, tk, tk],
            vec![to],
            vec![flat, self.dense_out],
            vec![self.dense_out],
            vec![self.batch, self.dense_out],
        ]
    }

    /// Input, parameters and target, in the order [`NetSpec::build`] expects.
    pub fn leaves(&self, rng: &mut impl rand::Rng) -> Vec<Tensor> {
        self.shapes()
            .iter()
            .map(|s| Tensor::from_fn(s, |_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    pub fn build(&self, g: &mut Graph<'_>, ids: &[NodeId]) -> Result<NodeId> {
        let (_, _, s, p) = self.conv;
        let (_, _, ts, tp) = self.tconv;
        let h = g.conv2d(ids[0], ids[1], ids[2], s, p)?;
        let h = g.activation(h, self.activations[0]);
        let h = g.conv_transpose2d(h, ids[3], ids[4], ts, tp)?;
        let h = g.activation(h, self.activations[1]);
        let flat = g.value(h).numel() / self.batch;
        let h = g.reshape(h, &[self.batch, flat])?;
        let h = g.dense(h, ids[5], ids[6])?;
        let h = g.activation(h, self.activations[2]);
        g.mse(h, ids[7])
    }
}
