//! Layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`, so a
//! backward call always refers to the most recent forward call. Parameter
//! gradients accumulate until [`Param::zero_grad`] is called.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A named tensor owned by a layer. Buffers (`trainable == false`) are
/// saved in checkpoints but never touched by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: vec![v; n],
            grad: Vec::new(),
            trainable: true,
        }
    }

    pub fn gaussian(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            value: (0..n).map(|_| dist.sample(rng)).collect(),
            grad: Vec::new(),
            trainable: true,
        }
    }

    pub fn buffer(shape: &[usize], v: f64) -> Self {
        Self {
            trainable: false,
            ..Self::filled(shape, v)
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.value.len() {
            self.grad = vec![0.0; self.value.len()];
        }
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    fn matrix(&self, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.value).expect("parameter shape")
    }
}

/// Uniform access to the parameters of a module tree.
pub trait Parameterized {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>);
    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>);

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = Vec::new();
        self.collect_params("", &mut v);
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut v = Vec::new();
        self.collect_params_mut("", &mut v);
        v
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    fn num_trainable(&self) -> usize {
        self.named_params()
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.len())
            .sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Geometry of a strided square-kernel sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, o: usize, k: usize, len: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
    }

    /// Unfolds `src` `(C, H, W)` into `(C*k*k, OH*OW)`.
    fn im2col(&self, src: &[f64], cols: &mut [f64]) {
        let n = self.cols();
        let plane = self.height * self.width;
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        match self.source(oy, ki, self.height) {
                            None => line.fill(0.0),
                            Some(iy) => {
                                let srow = &src[c * plane + iy * self.width..c * plane + (iy + 1) * self.width];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kj, self.width) {
                                        Some(ix) => srow[ix],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters `cols` back, accumulating
    /// into `dst` `(C, H, W)`.
    fn col2im(&self, cols: &[f64], dst: &mut [f64]) {
        let n = self.cols();
        let plane = self.height * self.width;
        for c in 0..self.channels {
            for ki in 0..self.kernel {
                for kj in 0..self.kernel {
                    let row = (c * self.kernel + ki) * self.kernel + kj;
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ki, self.height) else {
                            continue;
                        };
                        let drow = &mut dst[c * plane + iy * self.width..c * plane + (iy + 1) * self.width];
                        for ox in 0..self.out_w {
                            if let Some(ix) = self.source(ox, kj, self.width) {
                                drow[ix] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_out(n: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = n + 2 * pad;
    if padded < kernel {
        return Err(Error::shape(format!("input extent {n} too small for kernel {kernel}")));
    }
    Ok((padded - kernel) / stride + 1)
}

fn sample_slice(x: &Array4<f64>, b: usize) -> &[f64] {
    let (_, c, h, w) = x.dim();
    let n = c * h * w;
    &x.as_slice().expect("standard layout")[b * n..(b + 1) * n]
}

fn sample_slice_mut(x: &mut Array4<f64>, b: usize) -> &mut [f64] {
    let (_, c, h, w) = x.dim();
    let n = c * h * w;
    &mut x.as_slice_mut().expect("standard layout")[b * n..(b + 1) * n]
}

fn standard(x: &Array4<f64>) -> Array4<f64> {
    x.as_standard_layout().into_owned()
}

/// 2-D convolution, weight `(out, in, k, k)`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    frozen: bool,
    input: Option<Array4<f64>>,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            weight: Param::gaussian(&[out_ch, in_ch, kernel, kernel], std, rng),
            bias: Param::filled(&[out_ch], 0.0),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            frozen: false,
            input: None,
        }
    }

    /// Freezes the parameters: backward still propagates to the input but
    /// parameter gradients are never accumulated.
    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self.weight.trainable = false;
        self.bias.trainable = false;
        self
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_size(&self, n: usize) -> Result<usize> {
        conv_out(n, self.kernel, self.stride, self.pad)
    }

    fn window(&self, h: usize, w: usize) -> Result<Window> {
        Ok(Window {
            channels: self.in_ch,
            height: h,
            width: w,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            out_h: self.output_size(h)?,
            out_w: self.output_size(w)?,
        })
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Result<Array4<f64>> {
        let (bsz, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(Error::shape(format!("conv expects {} channels, got {c}", self.in_ch)));
        }
        let win = self.window(h, w)?;
        let x = standard(x);
        let mut y = Array4::zeros((bsz, self.out_ch, win.out_h, win.out_w));
        let mut cols = vec![0.0; win.rows() * win.cols()];
        let wmat = self.weight.matrix(self.out_ch, win.rows());
        for b in 0..bsz {
            win.im2col(sample_slice(&x, b), &mut cols);
            let cview = ArrayView2::from_shape((win.rows(), win.cols()), &cols).expect("cols");
            let out = sample_slice_mut(&mut y, b);
            for (o, chunk) in out.chunks_mut(win.cols()).enumerate() {
                chunk.fill(self.bias.value[o]);
            }
            let mut yview = ArrayViewMut2::from_shape((self.out_ch, win.cols()), out).expect("out");
            general_mat_mul(1.0, &wmat, &cview, 1.0, &mut yview);
        }
        self.input = Some(x);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Result<Array4<f64>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::shape("conv backward before forward"))?;
        let (bsz, _, h, w) = x.dim();
        let win = self.window(h, w)?;
        if dy.dim() != (bsz, self.out_ch, win.out_h, win.out_w) {
            return Err(Error::shape(format!("conv upstream gradient {:?}", dy.dim())));
        }
        let dy = standard(dy);
        let mut dx = Array4::zeros(x.dim());
        let mut cols = vec![0.0; win.rows() * win.cols()];
        let mut dcols = Array2::zeros((win.rows(), win.cols()));
        let mut dw = Array2::zeros((self.out_ch, win.rows()));
        let mut db = vec![0.0; self.out_ch];
        for b in 0..bsz {
            let g = ArrayView2::from_shape((self.out_ch, win.cols()), sample_slice(&dy, b)).expect("dy");
            if !self.frozen {
                win.im2col(sample_slice(&x, b), &mut cols);
                let cview = ArrayView2::from_shape((win.rows(), win.cols()), &cols).expect("cols");
                general_mat_mul(1.0, &g, &cview.t(), 1.0, &mut dw);
                for (o, row) in g.outer_iter().enumerate() {
                    db[o] += row.sum();
                }
            }
            let wmat = self.weight.matrix(self.out_ch, win.rows());
            general_mat_mul(1.0, &wmat.t(), &g, 0.0, &mut dcols);
            win.col2im(dcols.as_slice().expect("dcols"), sample_slice_mut(&mut dx, b));
        }
        if !self.frozen {
            add_into(self.weight.grad_mut(), dw.as_slice().expect("dw"));
            add_into(self.bias.grad_mut(), &db);
        }
        self.input = Some(x);
        Ok(dx)
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Transposed 2-D convolution, weight `(in, out, k, k)`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: Option<Array4<f64>>,
}

impl ConvTranspose2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            weight: Param::gaussian(&[in_ch, out_ch, kernel, kernel], std, rng),
            bias: Param::filled(&[out_ch], 0.0),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            input: None,
        }
    }

    pub fn output_size(&self, n: usize) -> Result<usize> {
        let full = (n - 1) * self.stride + self.kernel;
        full.checked_sub(2 * self.pad)
            .filter(|&o| o > 0)
            .ok_or_else(|| Error::shape(format!("transposed conv output for extent {n} is empty")))
    }

    // The output plays the role of the convolution input.
    fn window(&self, h: usize, w: usize) -> Result<Window> {
        Ok(Window {
            channels: self.out_ch,
            height: self.output_size(h)?,
            width: self.output_size(w)?,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            out_h: h,
            out_w: w,
        })
    }

    pub fn forward(&mut self, x: &Array4<f64>) -> Result<Array4<f64>> {
        let (bsz, c, h, w) = x.dim();
        if c != self.in_ch {
            return Err(Error::shape(format!(
                "transposed conv expects {} channels, got {c}",
                self.in_ch
            )));
        }
        let win = self.window(h, w)?;
        let x = standard(x);
        let mut y = Array4::zeros((bsz, self.out_ch, win.height, win.width));
        let mut cols = Array2::zeros((win.rows(), win.cols()));
        let wmat = self.weight.matrix(self.in_ch, win.rows());
        for b in 0..bsz {
            let xb = ArrayView2::from_shape((self.in_ch, h * w), sample_slice(&x, b)).expect("x");
            general_mat_mul(1.0, &wmat.t(), &xb, 0.0, &mut cols);
            let out = sample_slice_mut(&mut y, b);
            for (o, chunk) in out.chunks_mut(win.height * win.width).enumerate() {
                chunk.fill(self.bias.value[o]);
            }
            win.col2im(cols.as_slice().expect("cols"), out);
        }
        self.input = Some(x);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Result<Array4<f64>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::shape("transposed conv backward before forward"))?;
        let (bsz, _, h, w) = x.dim();
        let win = self.window(h, w)?;
        if dy.dim() != (bsz, self.out_ch, win.height, win.width) {
            return Err(Error::shape(format!(
                "transposed conv upstream gradient {:?}",
                dy.dim()
            )));
        }
        let dy = standard(dy);
        let mut dx = Array4::zeros(x.dim());
        let mut dcols = vec![0.0; win.rows() * win.cols()];
        let mut dw = Array2::zeros((self.in_ch, win.rows()));
        let mut db = vec![0.0; self.out_ch];
        let wmat = self.weight.matrix(self.in_ch, win.rows());
        for b in 0..bsz {
            let gb = sample_slice(&dy, b);
            for (o, chunk) in gb.chunks(win.height * win.width).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
            win.im2col(gb, &mut dcols);
            let dview = ArrayView2::from_shape((win.rows(), win.cols()), &dcols).expect("dcols");
            let xb = ArrayView2::from_shape((self.in_ch, h * w), sample_slice(&x, b)).expect("x");
            general_mat_mul(1.0, &xb, &dview.t(), 1.0, &mut dw);
            let mut dxb = ArrayViewMut2::from_shape((self.in_ch, h * w), sample_slice_mut(&mut dx, b)).expect("dx");
            general_mat_mul(1.0, &wmat, &dview, 0.0, &mut dxb);
        }
        add_into(self.weight.grad_mut(), dw.as_slice().expect("dw"));
        add_into(self.bias.grad_mut(), &db);
        self.input = Some(x);
        Ok(dx)
    }
}

/// Fully connected layer, weight `(out, in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
    input: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Param::gaussian(&[out_features, in_features], std, rng),
            bias: Param::filled(&[out_features], 0.0),
            in_features,
            out_features,
            input: None,
        }
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (bsz, f) = x.dim();
        if f != self.in_features {
            return Err(Error::shape(format!(
                "linear layer expects {} features, got {f}",
                self.in_features
            )));
        }
        let bias = ArrayView2::from_shape((1, self.out_features), &self.bias.value).expect("bias");
        let mut y = Array2::zeros((bsz, self.out_features));
        y += &bias;
        let wmat = self.weight.matrix(self.out_features, self.in_features);
        general_mat_mul(1.0, x, &wmat.t(), 1.0, &mut y);
        self.input = Some(x.to_owned());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::shape("linear backward before forward"))?;
        if dy.dim() != (x.nrows(), self.out_features) {
            return Err(Error::shape(format!("linear upstream gradient {:?}", dy.dim())));
        }
        let mut dw = Array2::zeros((self.out_features, self.in_features));
        general_mat_mul(1.0, &dy.t(), x, 0.0, &mut dw);
        add_into(self.weight.grad_mut(), dw.as_slice().expect("dw"));
        let db = dy.sum_axis(Axis(0));
        add_into(self.bias.grad_mut(), db.as_slice().expect("db"));
        let wmat = self.weight.matrix(self.out_features, self.in_features);
        Ok(dy.dot(&wmat))
    }
}

/// Batch normalisation over `(batch, channel, positions)` data; used for
/// both feature maps and fully connected activations.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    channels: usize,
    momentum: f64,
    eps: f64,
    cache: Option<(Array3<f64>, Vec<f64>, Mode)>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::filled(&[channels], 0.0),
            running_mean: Param::buffer(&[channels], 0.0),
            running_var: Param::buffer(&[channels], 1.0),
            channels,
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    fn forward3(&mut self, x: Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (bsz, c, m) = x.dim();
        if c != self.channels {
            return Err(Error::shape(format!(
                "batch norm expects {} channels, got {c}",
                self.channels
            )));
        }
        let count = (bsz * m) as f64;
        let mut x_hat = x;
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut lane = x_hat.slice_mut(s![.., ch, ..]);
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = lane.sum() / count;
                    let var = lane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
                    let unbiased = if count > 1.0 { var * count / (count - 1.0) } else { var };
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (1.0 - self.momentum) * *rm + self.momentum * mean;
                    let rv = &mut self.running_var.value[ch];
                    *rv = (1.0 - self.momentum) * *rv + self.momentum * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.value[ch], self.running_var.value[ch]),
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = is;
            lane.mapv_inplace(|v| (v - mean) * is);
        }
        let mut y = x_hat.clone();
        for ch in 0..c {
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            y.slice_mut(s![.., ch, ..]).mapv_inplace(|v| g * v + bt);
        }
        self.cache = Some((x_hat, inv_std, mode));
        Ok(y)
    }

    fn backward3(&mut self, dy: &Array3<f64>) -> Result<Array3<f64>> {
        let (x_hat, inv_std, mode) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::shape("batch norm backward before forward"))?;
        if dy.dim() != x_hat.dim() {
            return Err(Error::shape(format!("batch norm upstream gradient {:?}", dy.dim())));
        }
        let (bsz, c, m) = dy.dim();
        let count = (bsz * m) as f64;
        let mut dx = Array3::zeros(dy.dim());
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for ch in 0..c {
            let g = dy.slice(s![.., ch, ..]);
            let xh = x_hat.slice(s![.., ch, ..]);
            let sum_g = g.sum();
            let sum_gx = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
            dgamma[ch] = sum_gx;
            dbeta[ch] = sum_g;
            let scale = self.gamma.value[ch] * inv_std[ch];
            let mut out = dx.slice_mut(s![.., ch, ..]);
            match mode {
                Mode::Train => {
                    ndarray::Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| {
                        *o = scale * (gi - sum_g / count - xi * sum_gx / count);
                    });
                }
                Mode::Eval => {
                    ndarray::Zip::from(&mut out).and(&g).for_each(|o, &gi| *o = scale * gi);
                }
            }
        }
        add_into(self.gamma.grad_mut(), &dgamma);
        add_into(self.beta.grad_mut(), &dbeta);
        Ok(dx)
    }

    pub fn forward4(&mut self, x: &Array4<f64>, mode: Mode) -> Result<Array4<f64>> {
        let (b, c, h, w) = x.dim();
        let x3 = standard(x).into_shape_with_order((b, c, h * w)).expect("reshape");
        Ok(self
            .forward3(x3, mode)?
            .into_shape_with_order((b, c, h, w))
            .expect("reshape"))
    }

    pub fn backward4(&mut self, dy: &Array4<f64>) -> Result<Array4<f64>> {
        let (b, c, h, w) = dy.dim();
        let d3 = standard(dy).into_shape_with_order((b, c, h * w)).expect("reshape");
        Ok(self
            .backward3(&d3)?
            .into_shape_with_order((b, c, h, w))
            .expect("reshape"))
    }

    pub fn forward2(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let (b, f) = x.dim();
        let x3 = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, f, 1))
            .expect("reshape");
        Ok(self.forward3(x3, mode)?.into_shape_with_order((b, f)).expect("reshape"))
    }

    pub fn backward2(&mut self, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let (b, f) = dy.dim();
        let d3 = dy
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((b, f, 1))
            .expect("reshape");
        Ok(self.backward3(&d3)?.into_shape_with_order((b, f)).expect("reshape"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation that remembers its last output.
#[derive(Debug, Clone)]
pub struct ActivationLayer<A> {
    kind: Activation,
    output: Option<A>,
}

impl<D: ndarray::Dimension> ActivationLayer<ndarray::Array<f64, D>> {
    pub fn new(kind: Activation) -> Self {
        Self { kind, output: None }
    }

    pub fn kind(&self) -> Activation {
        self.kind
    }

    pub fn forward(&mut self, x: ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        let kind = self.kind;
        let y = x.mapv_into(|v| kind.apply(v));
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&self, dy: &ndarray::Array<f64, D>) -> Result<ndarray::Array<f64, D>> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::shape("activation backward before forward"))?;
        if y.shape() != dy.shape() {
            return Err(Error::shape("activation upstream gradient shape"));
        }
        let kind = self.kind;
        let mut dx = dy.to_owned();
        ndarray::Zip::from(&mut dx)
            .and(y)
            .for_each(|d, &yv| *d *= kind.slope_from_output(yv));
        Ok(dx)
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - p)` at train time
/// and the layer is the identity in eval mode.
#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
    mask: Option<Array4<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self { p, mask: None }
    }

    pub fn forward(&mut self, x: Array4<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> Array4<f64> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = 1.0 / (1.0 - self.p);
        let p = self.p;
        let mask = Array4::from_shape_simple_fn(x.dim(), || if rng.random::<f64>() < p { 0.0 } else { keep });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&self, dy: &Array4<f64>) -> Array4<f64> {
        match &self.mask {
            Some(m) => dy * m,
            None => dy.clone(),
        }
    }
}

/// Concatenates two `NCHW` maps along channels.
pub fn concat_channels(a: &Array4<f64>, b: &Array4<f64>) -> Result<Array4<f64>> {
    let (ba, ca, ha, wa) = a.dim();
    let (bb, cb, hb, wb) = b.dim();
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(Error::shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut out = Array4::zeros((ba, ca + cb, ha, wa));
    out.slice_mut(s![.., ..ca, .., ..]).assign(a);
    out.slice_mut(s![.., ca.., .., ..]).assign(b);
    Ok(out)
}

pub fn split_channels(x: &Array4<f64>, first: usize) -> (Array4<f64>, Array4<f64>) {
    (
        x.slice(s![.., ..first, .., ..]).to_owned(),
        x.slice(s![.., first.., .., ..]).to_owned(),
    )
}

pub fn flatten(x: &Array4<f64>) -> Array2<f64> {
    let (b, c, h, w) = x.dim();
    standard(x).into_shape_with_order((b, c * h * w)).expect("reshape")
}

pub fn unflatten(x: &Array2<f64>, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order(shape)
        .expect("reshape")
}
