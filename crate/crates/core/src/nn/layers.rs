//! Layer specifications and their forward/backward implementations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SELU_LAMBDA: f64 = 1.0507009873554805;
const SELU_ALPHA: f64 = 1.6732632423543772;

// ---------------------------------------------------------------------------
// LayerSpec
// ---------------------------------------------------------------------------

/// Declarative layer description; shapes are resolved when a network is
/// built.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2D {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    },
    Dense {
        out_features: usize,
    },
    ReLU,
    ELU,
    SELU,
    AveragePool {
        window: (usize, usize),
    },
    Flatten,
    Dropout {
        p: f64,
    },
    Softmax,
}

impl LayerSpec {
    /// Output shape given an input shape, or why the pair does not compose.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [_, h, w] = three_d(input, "conv2d")?;
                let (kh, kw) = *kernel;
                if *stride == 0 || kh == 0 || kw == 0 || *out_channels == 0 {
                    return Err(Error::Config("conv2d parameters must be positive".into()));
                }
                let ph = h + 2 * padding;
                let pw = w + 2 * padding;
                if kh > ph || kw > pw {
                    return Err(Error::Config(format!(
                        "conv2d kernel {kh}x{kw} larger than padded input {ph}x{pw}"
                    )));
                }
                Ok(vec![
                    *out_channels,
                    (ph - kh) / stride + 1,
                    (pw - kw) / stride + 1,
                ])
            }
            LayerSpec::Dense { out_features } => {
                if input.len() != 1 {
                    return Err(Error::Config(format!(
                        "dense expects flat input, got {input:?} (insert flatten)"
                    )));
                }
                if *out_features == 0 {
                    return Err(Error::Config("dense output must be positive".into()));
                }
                Ok(vec![*out_features])
            }
            LayerSpec::ReLU | LayerSpec::ELU | LayerSpec::SELU | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
            LayerSpec::AveragePool { window } => {
                let [c, h, w] = three_d(input, "avgpool")?;
                let (wh, ww) = *window;
                if wh == 0 || ww == 0 || wh > h || ww > w {
                    return Err(Error::Config(format!(
                        "avgpool window {wh}x{ww} invalid for input {h}x{w}"
                    )));
                }
                Ok(vec![c, h / wh, w / ww])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(Error::Config("softmax expects flat input".into()));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Canonical single-line form used in config files and digests.
    pub fn canonical_line(&self) -> String {
        match self {
            LayerSpec::Conv2D {
                out_channels,
                kernel,
                stride,
                padding,
            } => format!(
                "conv2d {out_channels} {}x{} stride {stride} pad {padding}",
                kernel.0, kernel.1
            ),
            LayerSpec::Dense { out_features } => format!("dense {out_features}"),
            LayerSpec::ReLU => "relu".into(),
            LayerSpec::ELU => "elu".into(),
            LayerSpec::SELU => "selu".into(),
            LayerSpec::AveragePool { window } => format!("avgpool {}x{}", window.0, window.1),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dropout { p } => format!("dropout {p}"),
            LayerSpec::Softmax => "softmax".into(),
        }
    }
}

fn three_d(input: &[usize], what: &str) -> Result<[usize; 3]> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Config(format!(
            "{what} expects (C, H, W) input, got {input:?}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Runtime layers
// ---------------------------------------------------------------------------

/// Gradients of one layer's parameters.
#[derive(Debug, Clone)]
pub(crate) struct ParamGrads<F> {
    pub w: Vec<F>,
    pub b: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseLayer<F> {
    pub w: Vec<F>, // out × in, row-major
    pub b: Vec<F>,
    pub in_features: usize,
    pub out_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer<F> {
    pub w: Vec<F>, // oc × ic × kh × kw
    pub b: Vec<F>,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PoolLayer {
    pub c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub wh: usize,
    pub ww: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// A layer with resolved shapes and (where applicable) parameters.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer<F> {
    Dense(DenseLayer<F>),
    Conv(ConvLayer<F>),
    ReLU { len: usize },
    ELU { len: usize },
    SELU { len: usize },
    AvgPool(PoolLayer),
    Flatten { len: usize },
    Dropout { p: f64, len: usize },
}

/// Forward mode: evaluation is deterministic; training samples dropout
/// masks from the supplied stream.
pub(crate) enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl<F: Scalar> Layer<F> {
    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv(_))
    }

    /// Draw fresh parameters: weights uniform in ±INIT_GAIN/sqrt(fan_in),
    /// zero biases. The small gain keeps the untrained response to
    /// out-of-bound inputs low; null embeddings are not learnable when the
    /// initial OOB response swamps the task signal.
    pub fn init_params(&mut self, rng: &mut ChaCha8Rng) {
        const INIT_GAIN: f64 = 0.1;
        match self {
            Layer::Dense(d) => {
                let bound = INIT_GAIN / (d.in_features as f64).sqrt();
                for w in d.w.iter_mut() {
                    *w = F::cast(rng.gen::<f64>() * 2.0 * bound - bound);
                }
                d.b.iter_mut().for_each(|b| *b = F::zero());
            }
            Layer::Conv(c) => {
                let bound = INIT_GAIN / ((c.in_c * c.kh * c.kw) as f64).sqrt();
                for w in c.w.iter_mut() {
                    *w = F::cast(rng.gen::<f64>() * 2.0 * bound - bound);
                }
                c.b.iter_mut().for_each(|b| *b = F::zero());
            }
            _ => {}
        }
    }

    /// Forward a batch. Returns the output and, for dropout in train mode,
    /// the multiplier mask needed by backward.
    pub fn forward(&self, x: &[F], batch: usize, mode: &mut Mode) -> (Vec<F>, Option<Vec<F>>) {
        match self {
            Layer::Dense(d) => (dense_forward(d, x, batch), None),
            Layer::Conv(c) => (conv_forward(c, x, batch), None),
            Layer::ReLU { .. } => (
                x.iter().map(|&v| if v > F::zero() { v } else { F::zero() }).collect(),
                None,
            ),
            Layer::ELU { .. } => (
                x.iter()
                    .map(|&v| if v > F::zero() { v } else { v.exp() - F::one() })
                    .collect(),
                None,
            ),
            Layer::SELU { .. } => {
                let lambda = F::cast(SELU_LAMBDA);
                let alpha = F::cast(SELU_ALPHA);
                (
                    x.iter()
                        .map(|&v| {
                            if v > F::zero() {
                                lambda * v
                            } else {
                                lambda * alpha * (v.exp() - F::one())
                            }
                        })
                        .collect(),
                    None,
                )
            }
            Layer::AvgPool(p) => (pool_forward(p, x, batch), None),
            Layer::Flatten { .. } => (x.to_vec(), None),
            Layer::Dropout { p, .. } => match mode {
                Mode::Eval => (x.to_vec(), None),
                Mode::Train(rng) => {
                    let keep = 1.0 - *p;
                    let scale = F::cast(1.0 / keep);
                    let mask: Vec<F> = x
                        .iter()
                        .map(|_| {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                F::zero()
                            }
                        })
                        .collect();
                    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    (out, Some(mask))
                }
            },
        }
    }

    /// Backward a batch: given the cached input and the loss gradient at the
    /// output, produce the gradient at the input and any parameter
    /// gradients. `need_grad_in` skips the input gradient for layer 0.
    pub fn backward(
        &self,
        x: &[F],
        grad_out: &[F],
        batch: usize,
        mask: Option<&[F]>,
        need_grad_in: bool,
    ) -> (Vec<F>, Option<ParamGrads<F>>) {
        match self {
            Layer::Dense(d) => dense_backward(d, x, grad_out, batch, need_grad_in),
            Layer::Conv(c) => conv_backward(c, x, grad_out, batch, need_grad_in),
            Layer::ReLU { .. } => (
                x.iter()
                    .zip(grad_out)
                    .map(|(&v, &g)| if v > F::zero() { g } else { F::zero() })
                    .collect(),
                None,
            ),
            Layer::ELU { .. } => (
                x.iter()
                    .zip(grad_out)
                    .map(|(&v, &g)| if v > F::zero() { g } else { g * v.exp() })
                    .collect(),
                None,
            ),
            Layer::SELU { .. } => {
                let lambda = F::cast(SELU_LAMBDA);
                let alpha = F::cast(SELU_ALPHA);
                (
                    x.iter()
                        .zip(grad_out)
                        .map(|(&v, &g)| {
                            if v > F::zero() {
                                g * lambda
                            } else {
                                g * lambda * alpha * v.exp()
                            }
                        })
                        .collect(),
                    None,
                )
            }
            Layer::AvgPool(p) => (pool_backward(p, grad_out, batch), None),
            Layer::Flatten { .. } => (grad_out.to_vec(), None),
            Layer::Dropout { .. } => match mask {
                Some(m) => (
                    grad_out.iter().zip(m).map(|(&g, &m)| g * m).collect(),
                    None,
                ),
                None => (grad_out.to_vec(), None),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

fn dense_forward<F: Scalar>(d: &DenseLayer<F>, x: &[F], batch: usize) -> Vec<F> {
    let (nin, nout) = (d.in_features, d.out_features);
    let mut out = vec![F::zero(); batch * nout];
    for s in 0..batch {
        let xs = &x[s * nin..(s + 1) * nin];
        let os = &mut out[s * nout..(s + 1) * nout];
        for (o, out_v) in os.iter_mut().enumerate() {
            let row = &d.w[o * nin..(o + 1) * nin];
            let mut acc = d.b[o];
            for (wv, xv) in row.iter().zip(xs) {
                acc = acc + *wv * *xv;
            }
            *out_v = acc;
        }
    }
    out
}

fn dense_backward<F: Scalar>(
    d: &DenseLayer<F>,
    x: &[F],
    grad_out: &[F],
    batch: usize,
    need_grad_in: bool,
) -> (Vec<F>, Option<ParamGrads<F>>) {
    let (nin, nout) = (d.in_features, d.out_features);
    let mut gw = vec![F::zero(); nout * nin];
    let mut gb = vec![F::zero(); nout];
    let mut gx = vec![F::zero(); if need_grad_in { batch * nin } else { 0 }];
    for s in 0..batch {
        let xs = &x[s * nin..(s + 1) * nin];
        let gs = &grad_out[s * nout..(s + 1) * nout];
        for (o, &g) in gs.iter().enumerate() {
            gb[o] += g;
            let wrow = &d.w[o * nin..(o + 1) * nin];
            let grow = &mut gw[o * nin..(o + 1) * nin];
            if need_grad_in {
                let gxs = &mut gx[s * nin..(s + 1) * nin];
                for i in 0..nin {
                    grow[i] += g * xs[i];
                    gxs[i] += g * wrow[i];
                }
            } else {
                for i in 0..nin {
                    grow[i] += g * xs[i];
                }
            }
        }
    }
    (gx, Some(ParamGrads { w: gw, b: gb }))
}

// ---------------------------------------------------------------------------
// Conv2D
// ---------------------------------------------------------------------------

fn conv_forward<F: Scalar>(c: &ConvLayer<F>, x: &[F], batch: usize) -> Vec<F> {
    let in_len = c.in_c * c.in_h * c.in_w;
    let out_len = c.out_c * c.out_h * c.out_w;
    let ksz = c.kh * c.kw;
    let mut out = vec![F::zero(); batch * out_len];
    for s in 0..batch {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let os = &mut out[s * out_len..(s + 1) * out_len];
        for oc in 0..c.out_c {
            let w_oc = &c.w[oc * c.in_c * ksz..(oc + 1) * c.in_c * ksz];
            for oh in 0..c.out_h {
                for ow in 0..c.out_w {
                    let mut acc = c.b[oc];
                    for ic in 0..c.in_c {
                        let w_ic = &w_oc[ic * ksz..(ic + 1) * ksz];
                        let x_ic = &xs[ic * c.in_h * c.in_w..(ic + 1) * c.in_h * c.in_w];
                        for r in 0..c.kh {
                            let ih = (oh * c.stride + r) as isize - c.pad as isize;
                            if ih < 0 || ih >= c.in_h as isize {
                                continue;
                            }
                            let xrow = &x_ic[ih as usize * c.in_w..(ih as usize + 1) * c.in_w];
                            let wrow = &w_ic[r * c.kw..(r + 1) * c.kw];
                            for (q, &wv) in wrow.iter().enumerate() {
                                let iw = (ow * c.stride + q) as isize - c.pad as isize;
                                if iw < 0 || iw >= c.in_w as isize {
                                    continue;
                                }
                                acc = acc + wv * xrow[iw as usize];
                            }
                        }
                    }
                    os[oc * c.out_h * c.out_w + oh * c.out_w + ow] = acc;
                }
            }
        }
    }
    out
}

fn conv_backward<F: Scalar>(
    c: &ConvLayer<F>,
    x: &[F],
    grad_out: &[F],
    batch: usize,
    need_grad_in: bool,
) -> (Vec<F>, Option<ParamGrads<F>>) {
    let in_len = c.in_c * c.in_h * c.in_w;
    let out_len = c.out_c * c.out_h * c.out_w;
    let ksz = c.kh * c.kw;
    let mut gw = vec![F::zero(); c.w.len()];
    let mut gb = vec![F::zero(); c.out_c];
    let mut gx = vec![F::zero(); if need_grad_in { batch * in_len } else { 0 }];
    for s in 0..batch {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let gs = &grad_out[s * out_len..(s + 1) * out_len];
        for oc in 0..c.out_c {
            for oh in 0..c.out_h {
                for ow in 0..c.out_w {
                    let g = gs[oc * c.out_h * c.out_w + oh * c.out_w + ow];
                    if g == F::zero() {
                        continue;
                    }
                    gb[oc] += g;
                    for ic in 0..c.in_c {
                        let w_base = oc * c.in_c * ksz + ic * ksz;
                        let x_base = ic * c.in_h * c.in_w;
                        for r in 0..c.kh {
                            let ih = (oh * c.stride + r) as isize - c.pad as isize;
                            if ih < 0 || ih >= c.in_h as isize {
                                continue;
                            }
                            let ih = ih as usize;
                            for q in 0..c.kw {
                                let iw = (ow * c.stride + q) as isize - c.pad as isize;
                                if iw < 0 || iw >= c.in_w as isize {
                                    continue;
                                }
                                let iw = iw as usize;
                                let xi = x_base + ih * c.in_w + iw;
                                gw[w_base + r * c.kw + q] += g * xs[xi];
                                if need_grad_in {
                                    gx[s * in_len + xi] += g * c.w[w_base + r * c.kw + q];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, Some(ParamGrads { w: gw, b: gb }))
}

// ---------------------------------------------------------------------------
// AveragePool
// ---------------------------------------------------------------------------

fn pool_forward<F: Scalar>(p: &PoolLayer, x: &[F], batch: usize) -> Vec<F> {
    let in_len = p.c * p.in_h * p.in_w;
    let out_len = p.c * p.out_h * p.out_w;
    let inv = F::cast(1.0 / (p.wh * p.ww) as f64);
    let mut out = vec![F::zero(); batch * out_len];
    for s in 0..batch {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let os = &mut out[s * out_len..(s + 1) * out_len];
        for ch in 0..p.c {
            let x_ch = &xs[ch * p.in_h * p.in_w..(ch + 1) * p.in_h * p.in_w];
            for oh in 0..p.out_h {
                for ow in 0..p.out_w {
                    let mut acc = F::zero();
                    for r in 0..p.wh {
                        let row = (oh * p.wh + r) * p.in_w;
                        for q in 0..p.ww {
                            acc = acc + x_ch[row + ow * p.ww + q];
                        }
                    }
                    os[ch * p.out_h * p.out_w + oh * p.out_w + ow] = acc * inv;
                }
            }
        }
    }
    out
}

fn pool_backward<F: Scalar>(p: &PoolLayer, grad_out: &[F], batch: usize) -> Vec<F> {
    let in_len = p.c * p.in_h * p.in_w;
    let out_len = p.c * p.out_h * p.out_w;
    let inv = F::cast(1.0 / (p.wh * p.ww) as f64);
    let mut gx = vec![F::zero(); batch * in_len];
    for s in 0..batch {
        let gs = &grad_out[s * out_len..(s + 1) * out_len];
        let gxs = &mut gx[s * in_len..(s + 1) * in_len];
        for ch in 0..p.c {
            let g_ch = &gs[ch * p.out_h * p.out_w..(ch + 1) * p.out_h * p.out_w];
            let gx_ch = &mut gxs[ch * p.in_h * p.in_w..(ch + 1) * p.in_h * p.in_w];
            for oh in 0..p.out_h {
                for ow in 0..p.out_w {
                    let g = g_ch[oh * p.out_w + ow] * inv;
                    for r in 0..p.wh {
                        let row = (oh * p.wh + r) * p.in_w;
                        for q in 0..p.ww {
                            gx_ch[row + ow * p.ww + q] += g;
                        }
                    }
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_inference_composes() {
        let spec = LayerSpec::Conv2D {
            out_channels: 8,
            kernel: (3, 3),
            stride: 1,
            padding: 0,
        };
        assert_eq!(spec.output_shape(&[1, 8, 64]).unwrap(), vec![8, 6, 62]);
        let pool = LayerSpec::AveragePool { window: (2, 2) };
        assert_eq!(pool.output_shape(&[8, 6, 62]).unwrap(), vec![8, 3, 31]);
        let flat = LayerSpec::Flatten;
        assert_eq!(flat.output_shape(&[8, 3, 31]).unwrap(), vec![744]);
    }

    #[test]
    fn dense_rejects_unflattened_input() {
        let spec = LayerSpec::Dense { out_features: 4 };
        assert!(spec.output_shape(&[2, 3, 4]).is_err());
    }

    #[test]
    fn conv_with_padding_keeps_size() {
        let spec = LayerSpec::Conv2D {
            out_channels: 4,
            kernel: (3, 3),
            stride: 1,
            padding: 1,
        };
        assert_eq!(spec.output_shape(&[2, 5, 5]).unwrap(), vec![4, 5, 5]);
    }

    #[test]
    fn dense_forward_matches_hand_multiply() {
        // 2x3 weights, bias (0.5, -0.5), input (1, 2, 3)
        let d = DenseLayer {
            w: vec![1.0f64, 0.0, 2.0, -1.0, 1.0, 0.5],
            b: vec![0.5, -0.5],
            in_features: 3,
            out_features: 2,
        };
        let out = dense_forward(&d, &[1.0, 2.0, 3.0], 1);
        assert_eq!(out, vec![1.0 + 6.0 + 0.5, -1.0 + 2.0 + 1.5 - 0.5]);
    }

    #[test]
    fn pool_forward_averages_windows() {
        let p = PoolLayer {
            c: 1,
            in_h: 2,
            in_w: 4,
            wh: 2,
            ww: 2,
            out_h: 1,
            out_w: 2,
        };
        let out = pool_forward(&p, &[1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 1);
        assert_eq!(out, vec![(1.0 + 2.0 + 5.0 + 6.0) / 4.0, (3.0 + 4.0 + 7.0 + 8.0) / 4.0]);
    }

    #[test]
    fn conv_forward_single_kernel_hand_check() {
        // one 2x2 kernel of ones over a 2x3 input, stride 1, no padding
        let c = ConvLayer {
            w: vec![1.0f64; 4],
            b: vec![0.0],
            in_c: 1,
            in_h: 2,
            in_w: 3,
            out_c: 1,
            kh: 2,
            kw: 2,
            stride: 1,
            pad: 0,
            out_h: 1,
            out_w: 2,
        };
        let out = conv_forward(&c, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1);
        assert_eq!(out, vec![12.0, 16.0]);
    }
}
