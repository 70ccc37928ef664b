//! Layers, forward/backward passes and the model container.
//!
//! Spatial activations are kept channel-major (C, N, H, W) so convolutions
//! are one GEMM per layer over the whole batch; flat activations are (N, F).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::float::{gemm, Float, Mat};
use crate::spec::{LayerSpec, ModelSpec, Padding};
use crate::tensor::{softmax_rows, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active (mask drawn from `seed`), batch statistics in batch norm.
    Train { seed: u64 },
    /// Dropout off, running statistics in batch norm.
    Infer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    fn size(self) -> usize {
        match self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(f) => f,
        }
    }

    fn public(self, n: usize) -> Vec<usize> {
        match self {
            Shape::Spatial { c, h, w } => vec![n, c, h, w],
            Shape::Flat(f) => vec![n, f],
        }
    }
}

/// Free-form model annotations stored with the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Feature layout the model was trained on.
    pub layout: String,
    pub task: String,
    /// Training hyperparameters and provenance.
    #[serde(default)]
    pub train: serde_json::Value,
}

#[derive(Clone, Debug)]
enum Layer<F> {
    Conv {
        c: usize,
        h: usize,
        w: usize,
        o: usize,
        kh: usize,
        kw: usize,
        pt: usize,
        pl: usize,
        oh: usize,
        ow: usize,
        /// (o, c·kh·kw)
        weight: Vec<F>,
    },
    Bn {
        ch: usize,
        eps: F,
        momentum: F,
        gamma: Vec<F>,
        beta: Vec<F>,
        mean: Vec<F>,
        var: Vec<F>,
    },
    Relu,
    Dropout {
        rate: F,
    },
    Flatten {
        c: usize,
        p: usize,
    },
    Dense {
        i: usize,
        o: usize,
        /// (o, i)
        weight: Vec<F>,
        bias: Vec<F>,
    },
    Softmax,
}

/// Per-layer values kept from the forward pass for backprop.
enum Cache<F> {
    None,
    Conv { cols: Vec<F> },
    /// `batch`: statistics came from the batch (train) rather than the running averages.
    Bn { xhat: Vec<F>, inv_std: Vec<F>, batch: bool },
    Relu { out: Vec<F> },
    Dropout { mask: Vec<F> },
    Dense { input: Vec<F> },
}

/// Per-channel batch statistics observed in one training forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<F> {
    layer: usize,
    mean: Vec<F>,
    var: Vec<F>,
}

pub struct LossGrads<F> {
    pub loss: F,
    /// One gradient per parameter tensor, in `Model::params` order.
    pub grads: Vec<Vec<F>>,
    /// d loss / d input, in the public (N, C, H, W) layout, when requested.
    pub input_grad: Option<Vec<F>>,
    pub stats: Vec<BatchStats<F>>,
}

#[derive(Clone, Debug)]
pub struct Model<F> {
    spec: ModelSpec,
    layers: Vec<Layer<F>>,
    shapes: Vec<Shape>,
    classes: usize,
    pub meta: ModelMeta,
}

fn uniform<F: Float>(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| F::of(rng.gen_range(-bound..bound))).collect()
}

fn dropout_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl<F: Float> Model<F> {
    /// Build with fan-in-scaled uniform weights drawn from `seed`, zero dense
    /// biases, batch-norm scale 1 and shift 0.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Model<F>, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c0, h0, w0] = spec.input;
        let mut shape = Shape::Spatial { c: c0, h: h0, w: w0 };
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut shapes = Vec::with_capacity(spec.layers.len());
        let n_layers = spec.layers.len();
        for (li, ls) in spec.layers.iter().enumerate() {
            let err = |msg: String| NnError::Shape {
                layer: li,
                kind: ls.kind(),
                msg,
            };
            let layer = match (*ls).clone() {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    padding,
                } => {
                    let Shape::Spatial { c, h, w } = shape else {
                        return Err(err("needs a spatial input".into()));
                    };
                    if out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(err("zero-sized convolution".into()));
                    }
                    let (oh, ow, pt, pl) = match padding {
                        Padding::Valid => {
                            if kernel_h > h || kernel_w > w {
                                return Err(err(format!("kernel {kernel_h}x{kernel_w} larger than input {h}x{w}")));
                            }
                            (h - kernel_h + 1, w - kernel_w + 1, 0, 0)
                        }
                        Padding::Same => (h, w, (kernel_h - 1) / 2, (kernel_w - 1) / 2),
                    };
                    shape = Shape::Spatial { c: out_channels, h: oh, w: ow };
                    let fan_in = c * kernel_h * kernel_w;
                    Layer::Conv {
                        c,
                        h,
                        w,
                        o: out_channels,
                        kh: kernel_h,
                        kw: kernel_w,
                        pt,
                        pl,
                        oh,
                        ow,
                        weight: uniform(&mut rng, out_channels * fan_in, fan_in),
                    }
                }
                LayerSpec::BatchNorm {
                    channels,
                    epsilon,
                    momentum,
                } => {
                    let ch = match shape {
                        Shape::Spatial { c, .. } => c,
                        Shape::Flat(f) => f,
                    };
                    if ch != channels {
                        return Err(err(format!("declared {channels} channels, input has {ch}")));
                    }
                    Layer::Bn {
                        ch,
                        eps: F::of(epsilon),
                        momentum: F::of(momentum),
                        gamma: vec![F::one(); ch],
                        beta: vec![F::zero(); ch],
                        mean: vec![F::zero(); ch],
                        var: vec![F::one(); ch],
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(err(format!("rate {rate} outside [0, 1)")));
                    }
                    Layer::Dropout { rate: F::of(rate) }
                }
                LayerSpec::Flatten => {
                    let Shape::Spatial { c, h, w } = shape else {
                        return Err(err("input already flat".into()));
                    };
                    shape = Shape::Flat(c * h * w);
                    Layer::Flatten { c, p: h * w }
                }
                LayerSpec::Dense { out_features } => {
                    let Shape::Flat(i) = shape else {
                        return Err(err("needs a flat input; add flatten".into()));
                    };
                    shape = Shape::Flat(out_features);
                    Layer::Dense {
                        i,
                        o: out_features,
                        weight: uniform(&mut rng, out_features * i, i),
                        bias: vec![F::zero(); out_features],
                    }
                }
                LayerSpec::Softmax => {
                    if li + 1 != n_layers {
                        return Err(err("softmax must be the last layer".into()));
                    }
                    if !matches!(shape, Shape::Flat(_)) {
                        return Err(err("needs a flat input".into()));
                    }
                    Layer::Softmax
                }
            };
            layers.push(layer);
            shapes.push(shape);
        }
        let Shape::Flat(classes) = shape else {
            return Err(NnError::Shape {
                layer: n_layers.saturating_sub(1),
                kind: "output",
                msg: "model must end in a flat layer".into(),
            });
        };
        Ok(Model {
            spec,
            layers,
            shapes,
            classes,
            meta: ModelMeta::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.spec.input
    }

    /// Output shape of every layer for a batch of `n`, in (N, C, H, W) / (N, F).
    pub fn layer_shapes(&self, n: usize) -> Vec<Vec<usize>> {
        self.shapes.iter().map(|s| s.public(n)).collect()
    }

    /// Trainable tensors: conv weight; bn gamma, beta; dense weight, bias.
    pub fn params(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { weight, .. } => out.push(weight),
                Layer::Bn { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { weight, .. } => out.push(weight),
                Layer::Bn { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Batch-norm running statistics: mean, var per batch-norm layer.
    pub fn buffers(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for l in &self.layers {
            if let Layer::Bn { mean, var, .. } = l {
                out.push(mean);
                out.push(var);
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<F>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::Bn { mean, var, .. } = l {
                out.push(mean);
                out.push(var);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Same architecture and values in another precision.
    pub fn cast<G: Float>(&self) -> Model<G> {
        let conv = |v: &Vec<F>| v.iter().map(|x| G::of(x.f64())).collect::<Vec<G>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv {
                    c,
                    h,
                    w,
                    o,
                    kh,
                    kw,
                    pt,
                    pl,
                    oh,
                    ow,
                    weight,
                } => Layer::Conv {
                    c: *c,
                    h: *h,
                    w: *w,
                    o: *o,
                    kh: *kh,
                    kw: *kw,
                    pt: *pt,
                    pl: *pl,
                    oh: *oh,
                    ow: *ow,
                    weight: conv(weight),
                },
                Layer::Bn {
                    ch,
                    eps,
                    momentum,
                    gamma,
                    beta,
                    mean,
                    var,
                } => Layer::Bn {
                    ch: *ch,
                    eps: G::of(eps.f64()),
                    momentum: G::of(momentum.f64()),
                    gamma: conv(gamma),
                    beta: conv(beta),
                    mean: conv(mean),
                    var: conv(var),
                },
                Layer::Relu => Layer::Relu,
                Layer::Dropout { rate } => Layer::Dropout { rate: G::of(rate.f64()) },
                Layer::Flatten { c, p } => Layer::Flatten { c: *c, p: *p },
                Layer::Dense { i, o, weight, bias } => Layer::Dense {
                    i: *i,
                    o: *o,
                    weight: conv(weight),
                    bias: conv(bias),
                },
                Layer::Softmax => Layer::Softmax,
            })
            .collect();
        Model {
            spec: self.spec.clone(),
            layers,
            shapes: self.shapes.clone(),
            classes: self.classes,
            meta: self.meta.clone(),
        }
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<usize, NnError> {
        let s = x.shape();
        let [c, h, w] = self.spec.input;
        if s.len() != 4 || s[1..] != [c, h, w] {
            return Err(NnError::Input {
                got: s.to_vec(),
                want: vec![0, c, h, w],
            });
        }
        Ok(s[0])
    }

    /// Run all layers up to (not including) a terminal softmax.
    fn run(&self, x: &Tensor<F>, mode: Mode, keep: bool) -> Result<(Vec<F>, Vec<Cache<F>>, Vec<BatchStats<F>>), NnError> {
        let n = self.check_input(x)?;
        let [c0, h0, w0] = self.spec.input;
        let p0 = h0 * w0;
        // (N, C, P) → (C, N, P)
        let mut a = vec![F::zero(); x.data().len()];
        for i in 0..n {
            for c in 0..c0 {
                let src = &x.data()[(i * c0 + c) * p0..(i * c0 + c + 1) * p0];
                a[(c * n + i) * p0..(c * n + i + 1) * p0].copy_from_slice(src);
            }
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let (next, cache) = match layer {
                Layer::Conv {
                    c,
                    h,
                    w,
                    o,
                    kh,
                    kw,
                    pt,
                    pl,
                    oh,
                    ow,
                    weight,
                } => {
                    let g = ConvGeom {
                        c: *c,
                        h: *h,
                        w: *w,
                        kh: *kh,
                        kw: *kw,
                        pt: *pt,
                        pl: *pl,
                        oh: *oh,
                        ow: *ow,
                        n,
                    };
                    let cols = g.im2col(&a);
                    let np = n * oh * ow;
                    let ckk = c * kh * kw;
                    let mut out = vec![F::zero(); o * np];
                    gemm(*o, ckk, np, F::one(), Mat::rows(weight, ckk), Mat::rows(&cols, np), F::zero(), &mut out);
                    (out, if keep { Cache::Conv { cols } } else { Cache::None })
                }
                Layer::Bn {
                    ch,
                    eps,
                    gamma,
                    beta,
                    mean,
                    var,
                    ..
                } => {
                    let (cs, ts, m) = bn_strides(self.shape_before(li), *ch, n);
                    let mut out = vec![F::zero(); a.len()];
                    match mode {
                        Mode::Infer => {
                            let mut xhat = if keep { vec![F::zero(); a.len()] } else { Vec::new() };
                            let mut inv_std = vec![F::zero(); *ch];
                            for k in 0..*ch {
                                let inv = F::one() / (var[k] + *eps).sqrt();
                                inv_std[k] = inv;
                                for t in 0..m {
                                    let i = k * cs + t * ts;
                                    let xh = (a[i] - mean[k]) * inv;
                                    if keep {
                                        xhat[i] = xh;
                                    }
                                    out[i] = xh * gamma[k] + beta[k];
                                }
                            }
                            let cache = if keep {
                                Cache::Bn {
                                    xhat,
                                    inv_std,
                                    batch: false,
                                }
                            } else {
                                Cache::None
                            };
                            (out, cache)
                        }
                        Mode::Train { .. } => {
                            let mut xhat = vec![F::zero(); a.len()];
                            let mut inv_std = vec![F::zero(); *ch];
                            let mut bm = vec![F::zero(); *ch];
                            let mut bv = vec![F::zero(); *ch];
                            let mf = F::of(m as f64);
                            for k in 0..*ch {
                                let mut s = F::zero();
                                for t in 0..m {
                                    s += a[k * cs + t * ts];
                                }
                                let mu = s / mf;
                                let mut v = F::zero();
                                for t in 0..m {
                                    let d = a[k * cs + t * ts] - mu;
                                    v += d * d;
                                }
                                let v = v / mf;
                                let inv = F::one() / (v + *eps).sqrt();
                                for t in 0..m {
                                    let i = k * cs + t * ts;
                                    let xh = (a[i] - mu) * inv;
                                    xhat[i] = xh;
                                    out[i] = xh * gamma[k] + beta[k];
                                }
                                inv_std[k] = inv;
                                bm[k] = mu;
                                bv[k] = v;
                            }
                            stats.push(BatchStats { layer: li, mean: bm, var: bv });
                            let cache = if keep {
                                Cache::Bn {
                                    xhat,
                                    inv_std,
                                    batch: true,
                                }
                            } else {
                                Cache::None
                            };
                            (out, cache)
                        }
                    }
                }
                Layer::Relu => {
                    let out: Vec<F> = a.iter().map(|&v| if v > F::zero() { v } else { F::zero() }).collect();
                    let cache = if keep { Cache::Relu { out: out.clone() } } else { Cache::None };
                    (out, cache)
                }
                Layer::Dropout { rate } => match mode {
                    Mode::Infer => (std::mem::take(&mut a), Cache::None),
                    Mode::Train { seed } => {
                        let mut rng = dropout_rng(seed, li);
                        let keep_p = F::one() - *rate;
                        let scale = F::one() / keep_p;
                        let p = keep_p.f64();
                        let mask: Vec<F> = (0..a.len())
                            .map(|_| if rng.gen::<f64>() < p { scale } else { F::zero() })
                            .collect();
                        let out = a.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        (out, if keep { Cache::Dropout { mask } } else { Cache::None })
                    }
                },
                Layer::Flatten { c, p } => {
                    let f = c * p;
                    let mut out = vec![F::zero(); a.len()];
                    for k in 0..*c {
                        for i in 0..n {
                            out[i * f + k * p..i * f + (k + 1) * p].copy_from_slice(&a[(k * n + i) * p..(k * n + i + 1) * p]);
                        }
                    }
                    (out, Cache::None)
                }
                Layer::Dense { i, o, weight, bias } => {
                    let mut out = vec![F::zero(); n * o];
                    for r in out.chunks_exact_mut(*o) {
                        r.copy_from_slice(bias);
                    }
                    gemm(n, *i, *o, F::one(), Mat::rows(&a, *i), Mat::t(weight, *i), F::one(), &mut out);
                    (out, if keep { Cache::Dense { input: a } } else { Cache::None })
                }
                Layer::Softmax => break,
            };
            debug_assert!(next.iter().all(|v| v.is_finite()), "non-finite activation after layer {li}");
            a = next;
            caches.push(cache);
        }
        Ok((a, caches, stats))
    }

    fn shape_before(&self, li: usize) -> Shape {
        if li == 0 {
            let [c, h, w] = self.spec.input;
            Shape::Spatial { c, h, w }
        } else {
            self.shapes[li - 1]
        }
    }

    /// Head logits, shape (N, classes).
    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<Tensor<F>, NnError> {
        let n = self.check_input(x)?;
        let (out, _, _) = self.run(x, mode, false)?;
        Ok(Tensor::new(vec![n, self.classes], out))
    }

    /// Class probabilities in inference mode, shape (N, classes).
    pub fn predict_proba(&self, x: &Tensor<F>) -> Result<Tensor<F>, NnError> {
        let logits = self.forward(x, Mode::Infer)?;
        let p = softmax_rows(logits.data(), self.classes);
        Ok(Tensor::new(logits.shape().to_vec(), p))
    }

    /// Mean softmax cross-entropy and its gradients. `class_weights`, when
    /// given, weights each sample by the weight of its label.
    pub fn loss_and_grads(
        &self,
        x: &Tensor<F>,
        labels: &[usize],
        mode: Mode,
        class_weights: Option<&[f64]>,
        want_input_grad: bool,
    ) -> Result<LossGrads<F>, NnError> {
        let n = self.check_input(x)?;
        if labels.len() != n {
            return Err(NnError::LabelCount {
                labels: labels.len(),
                batch: n,
            });
        }
        let k = self.classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(NnError::Label { label: bad, classes: k });
        }
        if let Some(w) = class_weights {
            if w.len() != k {
                return Err(NnError::Shape {
                    layer: self.layers.len(),
                    kind: "loss",
                    msg: format!("{} class weights for {k} classes", w.len()),
                });
            }
        }
        let (logits, caches, stats) = self.run(x, mode, true)?;
        let probs = softmax_rows(&logits, k);
        let wts: Vec<F> = labels
            .iter()
            .map(|&l| F::of(class_weights.map_or(1.0, |w| w[l])))
            .collect();
        let total: F = wts.iter().copied().sum();
        let mut loss = F::zero();
        let mut d = probs;
        for (i, &l) in labels.iter().enumerate() {
            let row = &mut d[i * k..(i + 1) * k];
            let p = row[l].max(F::min_positive_value());
            loss -= wts[i] * p.ln();
            row[l] -= F::one();
            for v in row.iter_mut() {
                *v *= wts[i] / total;
            }
        }
        let loss = loss / total;
        if !loss.is_finite() {
            return Err(NnError::NonFinite("loss".into()));
        }
        let (grads, input_grad) = self.backward(d, &caches, n, want_input_grad);
        Ok(LossGrads {
            loss,
            grads,
            input_grad,
            stats,
        })
    }

    fn backward(&self, mut d: Vec<F>, caches: &[Cache<F>], n: usize, want_input: bool) -> (Vec<Vec<F>>, Option<Vec<F>>) {
        let mut grads_rev: Vec<Vec<F>> = Vec::new();
        let ran = caches.len();
        for li in (0..ran).rev() {
            let need_dx = want_input || li > 0;
            match (&self.layers[li], &caches[li]) {
                (Layer::Dense { i, o, weight, .. }, Cache::Dense { input }) => {
                    let mut dw = vec![F::zero(); o * i];
                    gemm(*o, n, *i, F::one(), Mat::t(&d, *o), Mat::rows(input, *i), F::zero(), &mut dw);
                    let mut db = vec![F::zero(); *o];
                    for r in d.chunks_exact(*o) {
                        for (b, &v) in db.iter_mut().zip(r) {
                            *b += v;
                        }
                    }
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    if need_dx {
                        let mut dx = vec![F::zero(); n * i];
                        gemm(n, *o, *i, F::one(), Mat::rows(&d, *o), Mat::rows(weight, *i), F::zero(), &mut dx);
                        d = dx;
                    }
                }
                (Layer::Flatten { c, p }, _) => {
                    let f = c * p;
                    let mut dx = vec![F::zero(); d.len()];
                    for k in 0..*c {
                        for i in 0..n {
                            dx[(k * n + i) * p..(k * n + i + 1) * p].copy_from_slice(&d[i * f + k * p..i * f + (k + 1) * p]);
                        }
                    }
                    d = dx;
                }
                (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                    for (v, &m) in d.iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                (Layer::Dropout { .. }, _) => {}
                (Layer::Relu, Cache::Relu { out }) => {
                    for (v, &y) in d.iter_mut().zip(out) {
                        if y <= F::zero() {
                            *v = F::zero();
                        }
                    }
                }
                (Layer::Bn { ch, gamma, .. }, Cache::Bn { xhat, inv_std, batch }) => {
                    let (cs, ts, m) = bn_strides(self.shape_before(li), *ch, n);
                    let mf = F::of(m as f64);
                    let mut dg = vec![F::zero(); *ch];
                    let mut dbeta = vec![F::zero(); *ch];
                    for k in 0..*ch {
                        let (mut sg, mut sb) = (F::zero(), F::zero());
                        for t in 0..m {
                            let i = k * cs + t * ts;
                            sg += d[i] * xhat[i];
                            sb += d[i];
                        }
                        dg[k] = sg;
                        dbeta[k] = sb;
                        if need_dx {
                            // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂)); running
                            // statistics are constants, so only γ/σ remains.
                            let scale = gamma[k] * inv_std[k];
                            let (mb, mg) = if *batch { (sb / mf, sg / mf) } else { (F::zero(), F::zero()) };
                            for t in 0..m {
                                let i = k * cs + t * ts;
                                d[i] = scale * (d[i] - mb - xhat[i] * mg);
                            }
                        }
                    }
                    grads_rev.push(dbeta);
                    grads_rev.push(dg);
                }
                (
                    Layer::Conv {
                        c,
                        h,
                        w,
                        o,
                        kh,
                        kw,
                        pt,
                        pl,
                        oh,
                        ow,
                        weight,
                    },
                    Cache::Conv { cols },
                ) => {
                    let np = n * oh * ow;
                    let ckk = c * kh * kw;
                    let mut dw = vec![F::zero(); o * ckk];
                    gemm(*o, np, ckk, F::one(), Mat::rows(&d, np), Mat::t(cols, np), F::zero(), &mut dw);
                    grads_rev.push(dw);
                    if need_dx {
                        let mut dcols = vec![F::zero(); ckk * np];
                        gemm(ckk, *o, np, F::one(), Mat::t(weight, ckk), Mat::rows(&d, np), F::zero(), &mut dcols);
                        let g = ConvGeom {
                            c: *c,
                            h: *h,
                            w: *w,
                            kh: *kh,
                            kw: *kw,
                            pt: *pt,
                            pl: *pl,
                            oh: *oh,
                            ow: *ow,
                            n,
                        };
                        d = g.col2im(&dcols);
                    }
                }
                (l, _) => unreachable!("layer {li} has no cache for {:?}", std::mem::discriminant(l)),
            }
        }
        grads_rev.reverse();
        let input_grad = want_input.then(|| {
            let [c0, h0, w0] = self.spec.input;
            let p0 = h0 * w0;
            let mut g = vec![F::zero(); d.len()];
            for i in 0..n {
                for c in 0..c0 {
                    g[(i * c0 + c) * p0..(i * c0 + c + 1) * p0].copy_from_slice(&d[(c * n + i) * p0..(c * n + i + 1) * p0]);
                }
            }
            g
        });
        (grads_rev, input_grad)
    }

    /// Fold batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[BatchStats<F>]) {
        for s in stats {
            if let Layer::Bn { momentum, mean, var, .. } = &mut self.layers[s.layer] {
                let keep = F::one() - *momentum;
                for k in 0..mean.len() {
                    mean[k] = keep * mean[k] + *momentum * s.mean[k];
                    var[k] = keep * var[k] + *momentum * s.var[k];
                }
            }
        }
    }
}

/// (channel stride, sample stride, samples per channel) for batch norm.
fn bn_strides(shape: Shape, ch: usize, n: usize) -> (usize, usize, usize) {
    match shape {
        Shape::Spatial { .. } => {
            let m = n * shape.size() / ch;
            (m, 1, m)
        }
        Shape::Flat(f) => (1, f, n),
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pt: usize,
    pl: usize,
    oh: usize,
    ow: usize,
    n: usize,
}

impl ConvGeom {
    /// (C, N, H, W) → columns (C·kh·kw, N·oh·ow).
    fn im2col<F: Float>(&self, x: &[F]) -> Vec<F> {
        let np = self.n * self.oh * self.ow;
        let mut cols = vec![F::zero(); self.c * self.kh * self.kw * np];
        self.walk(|r, col, src| cols[r * np + col] = x[src]);
        cols
    }

    fn col2im<F: Float>(&self, cols: &[F]) -> Vec<F> {
        let np = self.n * self.oh * self.ow;
        let mut x = vec![F::zero(); self.c * self.n * self.h * self.w];
        self.walk(|r, col, src| x[src] += cols[r * np + col]);
        x
    }

    /// Visit every (column row, column index, input index) pair that lands
    /// inside the input; padded positions are skipped.
    fn walk(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w, oh, ow) = (self.h as isize, self.w as isize, self.oh, self.ow);
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let r = (c * self.kh + i) * self.kw + j;
                    for n in 0..self.n {
                        let base = (c * self.n + n) * self.h * self.w;
                        for y in 0..oh {
                            let sy = y as isize + i as isize - self.pt as isize;
                            if sy < 0 || sy >= h {
                                continue;
                            }
                            for xo in 0..ow {
                                let sx = xo as isize + j as isize - self.pl as isize;
                                if sx < 0 || sx >= w {
                                    continue;
                                }
                                f(r, (n * oh + y) * ow + xo, base + (sy * w + sx) as usize);
                            }
                        }
                    }
                }
            }
        }
    }
}
