//! Forward and backward kernels for the layer ops.
//!
//! Convolutions go through im2col/col2im and a row-major GEMM. A transposed
//! convolution reuses the convolution geometry with the roles of the image and
//! the column grid swapped: its output plays the "image" and its input the
//! column grid.

use crate::error::{Error, Result};

/// `c = a · b + beta · c` for row-major operands with explicit strides.
///
/// `a` is `m × k` with strides `(rsa, csa)`, `b` is `k × n` with `(rsb, csb)`
/// and `c` is a contiguous `m × n` block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output size of a strided, zero-padded convolution along one axis:
/// `⌊(input + 2·padding − kernel) / stride⌋ + 1`.
///
/// Trailing rows/columns a window never reaches are ignored, as in the usual
/// deep-learning convention.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Config("kernel size and stride must be positive".into()));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::Config(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output size of a transposed convolution along one axis.
pub fn transposed_output_size(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return Err(Error::Config("input, kernel size and stride must be positive".into()));
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * padding {
        return Err(Error::Config(format!(
            "padding {padding} consumes the whole transposed output ({full})"
        )));
    }
    Ok(full - 2 * padding)
}

/// Sliding-window layout shared by convolution and its transpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    /// Channels on the image side.
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// Window positions (the column grid).
    pub grid_h: usize,
    pub grid_w: usize,
}

impl ConvGeometry {
    /// Geometry of a convolution reading a `channels × height × width` image.
    pub fn for_conv(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            grid_h: conv_output_size(height, kernel_h, stride, padding)?,
            grid_w: conv_output_size(width, kernel_w, stride, padding)?,
        })
    }

    /// Geometry of a transposed convolution writing `channels` output maps
    /// from an `in_h × in_w` input grid.
    pub fn for_transposed(
        channels: usize,
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            channels,
            height: transposed_output_size(in_h, kernel_h, stride, padding)?,
            width: transposed_output_size(in_w, kernel_w, stride, padding)?,
            kernel_h,
            kernel_w,
            stride,
            padding,
            grid_h: in_h,
            grid_w: in_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn grid_len(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Image coordinate hit by kernel tap `kk` at grid position `g`, if inside.
    #[inline]
    fn source(&self, g: usize, kk: usize, limit: usize) -> Option<usize> {
        let pos = (g * self.stride + kk) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Unfolds `image` into a `patch_len × grid_len` column matrix.
pub(crate) fn im2col(geom: &ConvGeometry, image: &[f64], cols: &mut [f64]) {
    debug_assert_eq!(image.len(), geom.image_len());
    debug_assert_eq!(cols.len(), geom.patch_len() * geom.grid_len());
    let grid = geom.grid_len();
    let mut row = 0;
    for c in 0..geom.channels {
        let plane = &image[c * geom.height * geom.width..(c + 1) * geom.height * geom.width];
        for ki in 0..geom.kernel_h {
            for kj in 0..geom.kernel_w {
                let dst = &mut cols[row * grid..(row + 1) * grid];
                for gi in 0..geom.grid_h {
                    let out = &mut dst[gi * geom.grid_w..(gi + 1) * geom.grid_w];
                    match geom.source(gi, ki, geom.height) {
                        Some(y) => {
                            let src = &plane[y * geom.width..(y + 1) * geom.width];
                            for (gj, o) in out.iter_mut().enumerate() {
                                *o = geom.source(gj, kj, geom.width).map_or(0.0, |x| src[x]);
                            }
                        }
                        None => out.fill(0.0),
                    }
                }
                row += 1;
            }
        }
    }
}

/// Folds a column matrix back onto `image`, accumulating overlaps.
pub(crate) fn col2im(geom: &ConvGeometry, cols: &[f64], image: &mut [f64]) {
    debug_assert_eq!(image.len(), geom.image_len());
    debug_assert_eq!(cols.len(), geom.patch_len() * geom.grid_len());
    let grid = geom.grid_len();
    let mut row = 0;
    for c in 0..geom.channels {
        let plane = &mut image[c * geom.height * geom.width..(c + 1) * geom.height * geom.width];
        for ki in 0..geom.kernel_h {
            for kj in 0..geom.kernel_w {
                let src = &cols[row * grid..(row + 1) * grid];
                for gi in 0..geom.grid_h {
                    let Some(y) = geom.source(gi, ki, geom.height) else {
                        continue;
                    };
                    let dst = &mut plane[y * geom.width..(y + 1) * geom.width];
                    for gj in 0..geom.grid_w {
                        if let Some(x) = geom.source(gj, kj, geom.width) {
                            dst[x] += src[gi * geom.grid_w + gj];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `out[b, j] = Σ_i x[b, i] · w[i, j] + bias[j]`.
pub(crate) fn dense_forward(
    batch: usize,
    in_f: usize,
    out_f: usize,
    x: &[f64],
    w: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
    gemm(batch, in_f, out_f, x, (in_f, 1), w, (out_f, 1), 1.0, &mut out);
    out
}

pub(crate) struct DenseGrads {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn dense_backward(
    batch: usize,
    in_f: usize,
    out_f: usize,
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
) -> DenseGrads {
    let mut input = vec![0.0; batch * in_f];
    // dx = dY · Wᵀ
    gemm(batch, out_f, in_f, grad_out, (out_f, 1), w, (1, out_f), 0.0, &mut input);
    let mut weights = vec![0.0; in_f * out_f];
    // dW = Xᵀ · dY
    gemm(in_f, batch, out_f, x, (1, in_f), grad_out, (out_f, 1), 0.0, &mut weights);
    let mut bias = vec![0.0; out_f];
    for row in grad_out.chunks_exact(out_f) {
        for (b, g) in bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    DenseGrads { input, weights, bias }
}

/// Cross-correlation of `[batch, C_in, H, W]` with `[C_out, C_in, kH, kW]`.
pub(crate) fn conv2d_forward(
    geom: &ConvGeometry,
    batch: usize,
    c_out: usize,
    x: &[f64],
    w: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (patch, grid) = (geom.patch_len(), geom.grid_len());
    let mut out = vec![0.0; batch * c_out * grid];
    let mut cols = vec![0.0; patch * grid];
    for (img, dst) in x
        .chunks_exact(geom.image_len())
        .zip(out.chunks_exact_mut(c_out * grid))
    {
        for (plane, &b) in dst.chunks_exact_mut(grid).zip(bias) {
            plane.fill(b);
        }
        im2col(geom, img, &mut cols);
        gemm(c_out, patch, grid, w, (patch, 1), &cols, (grid, 1), 1.0, dst);
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernels: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    geom: &ConvGeometry,
    c_out: usize,
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    want: [bool; 3],
) -> ConvGrads {
    let (patch, grid) = (geom.patch_len(), geom.grid_len());
    let mut dx = want[0].then(|| vec![0.0; x.len()]);
    let mut dw = want[1].then(|| vec![0.0; w.len()]);
    let db = want[2].then(|| channel_sums(grad_out, c_out, grid));
    let mut cols = vec![0.0; patch * grid];
    for (b, dy) in grad_out.chunks_exact(c_out * grid).enumerate() {
        let img = &x[b * geom.image_len()..(b + 1) * geom.image_len()];
        if let Some(dw) = dw.as_mut() {
            im2col(geom, img, &mut cols);
            // dW += dY · colsᵀ
            gemm(c_out, grid, patch, dy, (grid, 1), &cols, (1, grid), 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · dY
            gemm(patch, c_out, grid, w, (1, patch), dy, (grid, 1), 0.0, &mut cols);
            let dst = &mut dx[b * geom.image_len()..(b + 1) * geom.image_len()];
            col2im(geom, &cols, dst);
        }
    }
    ConvGrads { input: dx, kernels: dw, bias: db }
}

/// Transposed convolution of `[batch, C_in, h, w]` with `[C_in, C_out, kH, kW]`.
///
/// `geom.channels` is `C_out`; the grid is the input plane.
pub(crate) fn conv_transpose2d_forward(
    geom: &ConvGeometry,
    batch: usize,
    c_in: usize,
    x: &[f64],
    w: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (patch, grid) = (geom.patch_len(), geom.grid_len());
    let plane = geom.height * geom.width;
    let mut out = vec![0.0; batch * geom.image_len()];
    let mut cols = vec![0.0; patch * grid];
    for (img, dst) in x
        .chunks_exact(c_in * grid)
        .zip(out.chunks_exact_mut(geom.image_len()))
    {
        // cols = Wᵀ · x, W viewed as [C_in, patch]
        gemm(patch, c_in, grid, w, (1, patch), img, (grid, 1), 0.0, &mut cols);
        col2im(geom, &cols, dst);
        for (p, &b) in dst.chunks_exact_mut(plane).zip(bias) {
            for v in p {
                *v += b;
            }
        }
    }
    out
}

pub(crate) fn conv_transpose2d_backward(
    geom: &ConvGeometry,
    c_in: usize,
    x: &[f64],
    w: &[f64],
    grad_out: &[f64],
    want: [bool; 3],
) -> ConvGrads {
    let (patch, grid) = (geom.patch_len(), geom.grid_len());
    let mut dx = want[0].then(|| vec![0.0; x.len()]);
    let mut dw = want[1].then(|| vec![0.0; w.len()]);
    let db = want[2].then(|| channel_sums(grad_out, geom.channels, geom.height * geom.width));
    let mut cols = vec![0.0; patch * grid];
    for (b, dy) in grad_out.chunks_exact(geom.image_len()).enumerate() {
        im2col(geom, dy, &mut cols);
        let in_range = b * c_in * grid..(b + 1) * c_in * grid;
        if let Some(dx) = dx.as_mut() {
            // dx = W · dcols
            gemm(c_in, patch, grid, w, (patch, 1), &cols, (grid, 1), 0.0, &mut dx[in_range.clone()]);
        }
        if let Some(dw) = dw.as_mut() {
            // dW += x · dcolsᵀ
            gemm(c_in, grid, patch, &x[in_range], (grid, 1), &cols, (1, grid), 1.0, dw);
        }
    }
    ConvGrads { input: dx, kernels: dw, bias: db }
}

fn channel_sums(grad: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    let mut sums = vec![0.0; channels];
    for item in grad.chunks_exact(channels * plane) {
        for (s, p) in sums.iter_mut().zip(item.chunks_exact(plane)) {
            *s += p.iter().sum::<f64>();
        }
    }
    sums
}
