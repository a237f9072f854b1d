//! The fixed layer set: dense, 2-d convolution (cross-correlation, zero
//! padding), layer normalization, and ReLU. Every layer implements an exact
//! backward pass; the finite-difference suite in `nn::fd` checks them all.

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Fully-connected layer `y = x W + b`, `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            w: Array2::zeros((in_dim, out_dim)),
            b: Array1::zeros(out_dim),
        }
    }
}

/// Convolution over channel-last `(h, w, c)` inputs flattened to rows.
/// Implemented as im2col followed by a matrix product; kernels are applied
/// as cross-correlation (no flip) with zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[k*k*c_in, c_out]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub h_out: usize,
    pub w_out: usize,
}

/// Output size of one convolution axis: `(n + 2p - k) / s + 1`.
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

impl Conv2d {
    pub fn new(
        h_in: usize,
        w_in: usize,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let h_out = conv_out_size(h_in, k, stride, pad);
        let w_out = conv_out_size(w_in, k, stride, pad);
        Conv2d {
            w: Array2::zeros((k * k * c_in, c_out)),
            b: Array1::zeros(c_out),
            k,
            stride,
            pad,
            c_in,
            h_in,
            w_in,
            c_out,
            h_out,
            w_out,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.h_in * self.w_in * self.c_in
    }

    pub fn out_dim(&self) -> usize {
        self.h_out * self.w_out * self.c_out
    }

    fn im2col(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let batch = x.nrows();
        let patch = self.h_out * self.w_out;
        let kdim = self.k * self.k * self.c_in;
        let mut cols = Array2::zeros((batch * patch, kdim));
        let xs = x.as_slice().expect("contiguous input");
        let cs = cols.as_slice_mut().expect("contiguous cols");
        for b in 0..batch {
            let xrow = &xs[b * self.in_dim()..(b + 1) * self.in_dim()];
            for oy in 0..self.h_out {
                for ox in 0..self.w_out {
                    let row = ((b * self.h_out + oy) * self.w_out + ox) * kdim;
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as i64 - self.pad as i64;
                        if iy < 0 || iy >= self.h_in as i64 {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as i64 - self.pad as i64;
                            if ix < 0 || ix >= self.w_in as i64 {
                                continue;
                            }
                            let src = ((iy as usize * self.w_in) + ix as usize) * self.c_in;
                            let dst = row + (ky * self.k + kx) * self.c_in;
                            cs[dst..dst + self.c_in]
                                .copy_from_slice(&xrow[src..src + self.c_in]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, batch: usize) -> Array2<f64> {
        let kdim = self.k * self.k * self.c_in;
        let mut dx = Array2::zeros((batch, self.in_dim()));
        let ds = dcols.as_slice().expect("contiguous dcols");
        let xs = dx.as_slice_mut().expect("contiguous dx");
        for b in 0..batch {
            let xrow = &mut xs[b * self.in_dim()..(b + 1) * self.in_dim()];
            for oy in 0..self.h_out {
                for ox in 0..self.w_out {
                    let row = ((b * self.h_out + oy) * self.w_out + ox) * kdim;
                    for ky in 0..self.k {
                        let iy = (oy * self.stride + ky) as i64 - self.pad as i64;
                        if iy < 0 || iy >= self.h_in as i64 {
                            continue;
                        }
                        for kx in 0..self.k {
                            let ix = (ox * self.stride + kx) as i64 - self.pad as i64;
                            if ix < 0 || ix >= self.w_in as i64 {
                                continue;
                            }
                            let dst = ((iy as usize * self.w_in) + ix as usize) * self.c_in;
                            let src = row + (ky * self.k + kx) * self.c_in;
                            for c in 0..self.c_in {
                                xrow[dst + c] += ds[src + c];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Per-row normalization `y = gain * (x - mean) / sqrt(var + eps) + bias`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }
}

/// Normalize a single vector; the scalar reference used by tests.
pub fn layer_norm_forward(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean: f64 = x.iter().sum::<f64>() / d;
    let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    x.iter()
        .enumerate()
        .map(|(i, &v)| gain[i] * (v - mean) * inv + bias[i])
        .collect()
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    LayerNorm(LayerNorm),
    Relu,
}

impl Layer {
    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Layer::Dense(d) => d.w.ncols(),
            Layer::Conv2d(c) => c.out_dim(),
            Layer::LayerNorm(_) | Layer::Relu => in_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.w.len() + d.b.len(),
            Layer::Conv2d(c) => c.w.len() + c.b.len(),
            Layer::LayerNorm(l) => l.gain.len() + l.bias.len(),
            Layer::Relu => 0,
        }
    }
}

/// Saved forward state needed by the backward pass.
#[derive(Debug)]
pub enum LayerCache {
    Dense { x: Array2<f64> },
    Conv { cols: Array2<f64>, batch: usize },
    LayerNorm { x_hat: Array2<f64>, inv_std: Vec<f64> },
    Relu { mask: Array2<f64> },
}

pub fn layer_forward(layer: &Layer, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
    match layer {
        Layer::Dense(d) => {
            let mut y = x.dot(&d.w);
            y += &d.b;
            (y, LayerCache::Dense { x })
        }
        Layer::Conv2d(c) => {
            let batch = x.nrows();
            let cols = c.im2col(&x.view());
            let mut out = cols.dot(&c.w);
            out += &c.b;
            let y = out
                .into_shape_with_order((batch, c.out_dim()))
                .expect("conv output reshape");
            (y, LayerCache::Conv { cols, batch })
        }
        Layer::LayerNorm(l) => {
            let d = x.ncols() as f64;
            let mut x_hat = x;
            let mut inv_std = Vec::with_capacity(x_hat.nrows());
            for mut row in x_hat.rows_mut() {
                let mean: f64 = row.iter().sum::<f64>() / d;
                let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                inv_std.push(inv);
                row.mapv_inplace(|v| (v - mean) * inv);
            }
            let mut y = x_hat.clone();
            y *= &l.gain;
            y += &l.bias;
            (y, LayerCache::LayerNorm { x_hat, inv_std })
        }
        Layer::Relu => {
            let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let y = &x * &mask;
            (y, LayerCache::Relu { mask })
        }
    }
}

/// Backward through one layer. Parameter gradients are accumulated into
/// `grads` (layout: weights then biases); returns the input gradient.
pub fn layer_backward(
    layer: &Layer,
    cache: &LayerCache,
    gout: Array2<f64>,
    grads: &mut [f64],
) -> Array2<f64> {
    match (layer, cache) {
        (Layer::Dense(d), LayerCache::Dense { x }) => {
            let dw = x.t().dot(&gout);
            let db = gout.sum_axis(Axis(0));
            accumulate(grads, dw.as_slice().unwrap(), 0);
            accumulate(grads, db.as_slice().unwrap(), dw.len());
            gout.dot(&d.w.t())
        }
        (Layer::Conv2d(c), LayerCache::Conv { cols, batch }) => {
            let patch = c.h_out * c.w_out;
            let g = gout
                .into_shape_with_order((batch * patch, c.c_out))
                .expect("conv grad reshape");
            let dw = cols.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            accumulate(grads, dw.as_slice().unwrap(), 0);
            accumulate(grads, db.as_slice().unwrap(), dw.len());
            let dcols = g.dot(&c.w.t());
            c.col2im(&dcols, *batch)
        }
        (Layer::LayerNorm(l), LayerCache::LayerNorm { x_hat, inv_std }) => {
            let d = x_hat.ncols() as f64;
            // dgain = sum_rows gout * x_hat ; dbias = sum_rows gout
            let dgain = (&gout * x_hat).sum_axis(Axis(0));
            let dbias = gout.sum_axis(Axis(0));
            accumulate(grads, dgain.as_slice().unwrap(), 0);
            accumulate(grads, dbias.as_slice().unwrap(), dgain.len());
            let mut dxhat = gout;
            dxhat *= &l.gain;
            let mut dx = dxhat.clone();
            for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
                let dh = dxhat.row(i);
                let xh = x_hat.row(i);
                let mean_dh: f64 = dh.iter().sum::<f64>() / d;
                let mean_dh_xh: f64 = dh
                    .iter()
                    .zip(xh.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / d;
                for (j, v) in row.iter_mut().enumerate() {
                    *v = inv_std[i] * (dh[j] - mean_dh - xh[j] * mean_dh_xh);
                }
            }
            dx
        }
        (Layer::Relu, LayerCache::Relu { mask }) => gout * mask,
        _ => panic!("layer/cache mismatch"),
    }
}

fn accumulate(grads: &mut [f64], src: &[f64], offset: usize) {
    for (g, s) in grads[offset..offset + src.len()].iter_mut().zip(src) {
        *g += s;
    }
}

/// Copy layer parameters into a flat slice (weights first, then biases).
pub fn read_layer_params(layer: &Layer, out: &mut [f64]) {
    match layer {
        Layer::Dense(d) => {
            let n = d.w.len();
            out[..n].copy_from_slice(d.w.as_slice().unwrap());
            out[n..].copy_from_slice(d.b.as_slice().unwrap());
        }
        Layer::Conv2d(c) => {
            let n = c.w.len();
            out[..n].copy_from_slice(c.w.as_slice().unwrap());
            out[n..].copy_from_slice(c.b.as_slice().unwrap());
        }
        Layer::LayerNorm(l) => {
            let n = l.gain.len();
            out[..n].copy_from_slice(l.gain.as_slice().unwrap());
            out[n..].copy_from_slice(l.bias.as_slice().unwrap());
        }
        Layer::Relu => {}
    }
}

/// Load layer parameters from a flat slice.
pub fn write_layer_params(layer: &mut Layer, src: &[f64]) {
    match layer {
        Layer::Dense(d) => {
            let n = d.w.len();
            d.w.as_slice_mut().unwrap().copy_from_slice(&src[..n]);
            d.b.as_slice_mut().unwrap().copy_from_slice(&src[n..]);
        }
        Layer::Conv2d(c) => {
            let n = c.w.len();
            c.w.as_slice_mut().unwrap().copy_from_slice(&src[..n]);
            c.b.as_slice_mut().unwrap().copy_from_slice(&src[n..]);
        }
        Layer::LayerNorm(l) => {
            let n = l.gain.len();
            l.gain.as_slice_mut().unwrap().copy_from_slice(&src[..n]);
            l.bias.as_slice_mut().unwrap().copy_from_slice(&src[n..]);
        }
        Layer::Relu => {}
    }
}
