//! The layer zoo: exactly the pieces the layout networks need, each with a
//! hand-derived backward pass.
//!
//! Layers cache forward activations, so one instance serves one data path at
//! a time. `forward` then `backward` returns the input gradient and
//! accumulates parameter gradients with `+=` (callers zero grads per step).

use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, Tensor};
use crate::{Error, Result};

/// Train mode uses batch statistics in BatchNorm; eval mode uses running
/// statistics and keeps forward passes deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn need_cache<T>(cache: &Option<T>, who: &'static str) -> Result<()> {
    if cache.is_none() {
        return Err(Error::NoForwardCache(who));
    }
    Ok(())
}

/// Fully connected layer: `[n, in] -> [n, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    pub in_dim: usize,
    pub out_dim: usize,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Param::new(
                format!("{name}.weight"),
                Tensor::glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng),
            ),
            b: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.shape.len() != 2 || x.shape[1] != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "linear expects [n, {}], got {:?}",
                self.in_dim, x.shape
            )));
        }
        let n = x.shape[0];
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        for i in 0..n {
            let xi = &x.data[i * self.in_dim..(i + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let wo = &self.w.value.data[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.b.value.data[o];
                for k in 0..self.in_dim {
                    acc += xi[k] * wo[k];
                }
                y.data[i * self.out_dim + o] = acc;
            }
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "Linear")?;
        let x = self.cache.as_ref().unwrap();
        let n = x.shape[0];
        if gy.shape != [n, self.out_dim] {
            return Err(Error::ShapeMismatch(format!(
                "linear backward expects [{n}, {}], got {:?}",
                self.out_dim, gy.shape
            )));
        }
        let mut gx = Tensor::zeros(&[n, self.in_dim]);
        for i in 0..n {
            let xi = &x.data[i * self.in_dim..(i + 1) * self.in_dim];
            let gyi = &gy.data[i * self.out_dim..(i + 1) * self.out_dim];
            for o in 0..self.out_dim {
                let g = gyi[o];
                self.b.grad.data[o] += g;
                let wo = &self.w.value.data[o * self.in_dim..(o + 1) * self.in_dim];
                let gwo = &mut self.w.grad.data[o * self.in_dim..(o + 1) * self.in_dim];
                for k in 0..self.in_dim {
                    gwo[k] += g * xi[k];
                    gx.data[i * self.in_dim + k] += g * wo[k];
                }
            }
        }
        Ok(gx)
    }
}

/// Elementwise max(0, x).
#[derive(Debug, Clone, Default)]
pub struct ReLU {
    cache: Option<Vec<bool>>,
}

impl ReLU {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mask: Vec<bool> = x.data.iter().map(|&v| v > 0.0).collect();
        let mut y = x.clone();
        for (v, &m) in y.data.iter_mut().zip(mask.iter()) {
            if !m {
                *v = 0.0;
            }
        }
        self.cache = Some(mask);
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "ReLU")?;
        let mask = self.cache.as_ref().unwrap();
        if mask.len() != gy.numel() {
            return Err(Error::ShapeMismatch("relu grad size".into()));
        }
        let mut gx = gy.clone();
        for (g, &m) in gx.data.iter_mut().zip(mask.iter()) {
            if !m {
                *g = 0.0;
            }
        }
        Ok(gx)
    }
}

/// Elementwise logistic function; outputs strictly inside (0, 1).
#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    cache: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        for v in y.data.iter_mut() {
            *v = 1.0 / (1.0 + (-*v).exp());
        }
        self.cache = Some(y.clone());
        y
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "Sigmoid")?;
        let y = self.cache.as_ref().unwrap();
        if y.numel() != gy.numel() {
            return Err(Error::ShapeMismatch("sigmoid grad size".into()));
        }
        let mut gx = gy.clone();
        for (g, &s) in gx.data.iter_mut().zip(y.data.iter()) {
            *g *= s * (1.0 - s);
        }
        Ok(gx)
    }
}

/// 2-D convolution, stride 1. Kernel 3 uses padding 1, kernel 1 uses no
/// padding, so spatial dimensions are preserved either way.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel == 1 || kernel == 3, "only 1x1 and 3x3 kernels");
        let fan_in = c_in * kernel * kernel;
        let fan_out = c_out * kernel * kernel;
        Self {
            w: Param::new(
                format!("{name}.weight"),
                Tensor::glorot_uniform(&[c_out, c_in, kernel, kernel], fan_in, fan_out, rng),
            ),
            b: Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out])),
            c_in,
            c_out,
            kernel,
            cache: None,
        }
    }

    fn pad(&self) -> isize {
        if self.kernel == 3 {
            1
        } else {
            0
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = dims4(x, "conv input")?;
        if c != self.c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {c}",
                self.c_in
            )));
        }
        let k = self.kernel as isize;
        let pad = self.pad();
        let mut y = Tensor::zeros(&[n, self.c_out, h, w]);
        for b in 0..n {
            for co in 0..self.c_out {
                for oy in 0..h as isize {
                    for ox in 0..w as isize {
                        let mut acc = self.b.value.data[co];
                        for ci in 0..self.c_in {
                            for ky in 0..k {
                                let iy = oy + ky - pad;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = ox + kx - pad;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = x.data[idx4(b, ci, iy as usize, ix as usize, c, h, w)];
                                    let wv = self.w.value.data
                                        [((co * self.c_in + ci) * self.kernel + ky as usize)
                                            * self.kernel
                                            + kx as usize];
                                    acc += xv * wv;
                                }
                            }
                        }
                        y.data[idx4(b, co, oy as usize, ox as usize, self.c_out, h, w)] = acc;
                    }
                }
            }
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "Conv2d")?;
        let x = self.cache.as_ref().unwrap();
        let [n, c, h, w] = dims4(x, "conv cache")?;
        let [gn, gc, gh, gw] = dims4(gy, "conv upstream grad")?;
        if gn != n || gc != self.c_out || gh != h || gw != w {
            return Err(Error::ShapeMismatch(format!(
                "conv backward expects [{n}, {}, {h}, {w}], got {:?}",
                self.c_out, gy.shape
            )));
        }
        let k = self.kernel as isize;
        let pad = self.pad();
        let mut gx = Tensor::zeros(&x.shape);
        for b in 0..n {
            for co in 0..self.c_out {
                for oy in 0..h as isize {
                    for ox in 0..w as isize {
                        let g = gy.data[idx4(b, co, oy as usize, ox as usize, self.c_out, h, w)];
                        if g == 0.0 {
                            continue;
                        }
                        self.b.grad.data[co] += g;
                        for ci in 0..self.c_in {
                            for ky in 0..k {
                                let iy = oy + ky - pad;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = ox + kx - pad;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = idx4(b, ci, iy as usize, ix as usize, c, h, w);
                                    let wi = ((co * self.c_in + ci) * self.kernel + ky as usize)
                                        * self.kernel
                                        + kx as usize;
                                    self.w.grad.data[wi] += g * x.data[xi];
                                    gx.data[xi] += g * self.w.value.data[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Per-channel batch normalization over `[n, c, h, w]`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
    pub channels: usize,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: 1e-5,
            momentum: 0.1,
            channels,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [n, c, h, w] = dims4(x, "batchnorm input")?;
        if c != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "batchnorm expects {} channels, got {c}",
                self.channels
            )));
        }
        let count = (n * h * w) as f64;
        let mut y = Tensor::zeros(&x.shape);
        let mut x_hat = Tensor::zeros(&x.shape);
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for b in 0..n {
                        for yy in 0..h {
                            for xx in 0..w {
                                sum += x.data[idx4(b, ch, yy, xx, c, h, w)];
                            }
                        }
                    }
                    let mean = sum / count;
                    let mut var = 0.0;
                    for b in 0..n {
                        for yy in 0..h {
                            for xx in 0..w {
                                let d = x.data[idx4(b, ch, yy, xx, c, h, w)] - mean;
                                var += d * d;
                            }
                        }
                    }
                    var /= count;
                    self.running_mean.data[ch] =
                        (1.0 - self.momentum) * self.running_mean.data[ch] + self.momentum * mean;
                    self.running_var.data[ch] =
                        (1.0 - self.momentum) * self.running_var.data[ch] + self.momentum * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.data[ch], self.running_var.data[ch]),
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let g = self.gamma.value.data[ch];
            let be = self.beta.value.data[ch];
            for b in 0..n {
                for yy in 0..h {
                    for xx in 0..w {
                        let i = idx4(b, ch, yy, xx, c, h, w);
                        let xh = (x.data[i] - mean) * istd;
                        x_hat.data[i] = xh;
                        y.data[i] = g * xh + be;
                    }
                }
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std, mode });
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "BatchNorm2d")?;
        let cache = self.cache.as_ref().unwrap();
        let x_hat = &cache.x_hat;
        if gy.shape != x_hat.shape {
            return Err(Error::ShapeMismatch("batchnorm grad shape".into()));
        }
        let [n, c, h, w] = dims4(x_hat, "batchnorm cache")?;
        let count = (n * h * w) as f64;
        let mut gx = Tensor::zeros(&x_hat.shape);
        for ch in 0..c {
            let istd = cache.inv_std[ch];
            let g = self.gamma.value.data[ch];
            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for b in 0..n {
                for yy in 0..h {
                    for xx in 0..w {
                        let i = idx4(b, ch, yy, xx, c, h, w);
                        sum_gy += gy.data[i];
                        sum_gy_xhat += gy.data[i] * x_hat.data[i];
                    }
                }
            }
            self.beta.grad.data[ch] += sum_gy;
            self.gamma.grad.data[ch] += sum_gy_xhat;
            for b in 0..n {
                for yy in 0..h {
                    for xx in 0..w {
                        let i = idx4(b, ch, yy, xx, c, h, w);
                        gx.data[i] = match cache.mode {
                            // Batch statistics participated in the forward
                            // pass, so their gradient terms appear here.
                            Mode::Train => {
                                g * istd / count
                                    * (count * gy.data[i]
                                        - sum_gy
                                        - x_hat.data[i] * sum_gy_xhat)
                            }
                            Mode::Eval => g * istd * gy.data[i],
                        };
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Nearest-neighbor 2x spatial upsampling.
#[derive(Debug, Clone, Default)]
pub struct Upsample2x {
    cache: Option<Vec<usize>>,
}

impl Upsample2x {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n, c, h, w] = dims4(x, "upsample input")?;
        let mut y = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        for b in 0..n {
            for ch in 0..c {
                for yy in 0..2 * h {
                    for xx in 0..2 * w {
                        y.data[idx4(b, ch, yy, xx, c, 2 * h, 2 * w)] =
                            x.data[idx4(b, ch, yy / 2, xx / 2, c, h, w)];
                    }
                }
            }
        }
        self.cache = Some(x.shape.clone());
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        need_cache(&self.cache, "Upsample2x")?;
        let in_shape = self.cache.as_ref().unwrap().clone();
        let [n, c, h, w] = [in_shape[0], in_shape[1], in_shape[2], in_shape[3]];
        if gy.shape != [n, c, 2 * h, 2 * w] {
            return Err(Error::ShapeMismatch("upsample grad shape".into()));
        }
        let mut gx = Tensor::zeros(&in_shape);
        for b in 0..n {
            for ch in 0..c {
                for yy in 0..2 * h {
                    for xx in 0..2 * w {
                        gx.data[idx4(b, ch, yy / 2, xx / 2, c, h, w)] +=
                            gy.data[idx4(b, ch, yy, xx, c, 2 * h, 2 * w)];
                    }
                }
            }
        }
        Ok(gx)
    }
}

/// Uniform wrapper so sequential stacks and the gradient checker can treat
/// every layer kind alike.
#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    ReLU(ReLU),
    Sigmoid(Sigmoid),
    Conv3x3(Conv2d),
    Conv1x1(Conv2d),
    BatchNorm(BatchNorm2d),
    UpsampleNearest2x(Upsample2x),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::ReLU(l) => Ok(l.forward(x)),
            Layer::Sigmoid(l) => Ok(l.forward(x)),
            Layer::Conv3x3(l) | Layer::Conv1x1(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::UpsampleNearest2x(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, gy: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Linear(l) => l.backward(gy),
            Layer::ReLU(l) => l.backward(gy),
            Layer::Sigmoid(l) => l.backward(gy),
            Layer::Conv3x3(l) | Layer::Conv1x1(l) => l.backward(gy),
            Layer::BatchNorm(l) => l.backward(gy),
            Layer::UpsampleNearest2x(l) => l.backward(gy),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Linear(l) => vec![&mut l.w, &mut l.b],
            Layer::Conv3x3(l) | Layer::Conv1x1(l) => vec![&mut l.w, &mut l.b],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Linear(l) => vec![&l.w, &l.b],
            Layer::Conv3x3(l) | Layer::Conv1x1(l) => vec![&l.w, &l.b],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }
}

/// Runs a layer stack in order; backward walks it in reverse.
pub fn forward_stack(layers: &mut [Layer], x: &Tensor, mode: Mode) -> Result<Tensor> {
    let mut h = x.clone();
    for layer in layers.iter_mut() {
        h = layer.forward(&h, mode)?;
    }
    Ok(h)
}

pub fn backward_stack(layers: &mut [Layer], gy: &Tensor) -> Result<Tensor> {
    let mut g = gy.clone();
    for layer in layers.iter_mut().rev() {
        g = layer.backward(&g)?;
    }
    Ok(g)
}

pub(crate) fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    if t.shape.len() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "{what} must be 4-d, got {:?}",
            t.shape
        )));
    }
    Ok([t.shape[0], t.shape[1], t.shape[2], t.shape[3]])
}

#[inline]
pub(crate) fn idx4(n: usize, c: usize, y: usize, x: usize, cs: usize, h: usize, w: usize) -> usize {
    ((n * cs + c) * h + y) * w + x
}
