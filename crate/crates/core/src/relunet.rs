//! Fully connected ReLU networks: evaluation, activation patterns, a small
//! Adam trainer and the JSON weight format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};

pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Layer<T> {
    #[serde(rename = "W")]
    pub weight: Matrix<T>,
    #[serde(rename = "w")]
    pub bias: Vec<T>,
}

/// `x⁽ⁱ⁾ = max(W⁽ⁱ⁾ x⁽ⁱ⁻¹⁾ + w⁽ⁱ⁾, 0)` for hidden layers, affine output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork<T> {
    layers: Vec<Layer<T>>,
}

/// Per hidden layer, `true` where the preactivation is `>= 0`.
pub type ActivationPattern = Vec<Vec<bool>>;

impl<T: Scalar> ReluNetwork<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            Error::check_dim("layer bias", l.weight.nrows(), l.bias.len())?;
            if i > 0 {
                Error::check_dim("layer input width", layers[i - 1].weight.nrows(), l.weight.ncols())?;
            }
        }
        Ok(Self { layers })
    }

    /// Zero weights and biases with the given widths `n⁽⁰⁾..n⁽ᵈ⁾`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Input("need input and output widths".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Layer { weight: Matrix::zeros(w[1], w[0]), bias: vec![T::zero(); w[1]] })
            .collect();
        Self::new(layers)
    }

    /// He-uniform initialization, reproducible per seed.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut net.layers {
            let fan_in = l.weight.ncols().max(1) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for i in 0..l.weight.nrows() {
                for j in 0..l.weight.ncols() {
                    l.weight[(i, j)] = T::lit(rng.gen_range(-bound..bound));
                }
            }
            for b in &mut l.bias {
                *b = T::lit(rng.gen_range(-0.1..0.1));
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.weight.nrows())).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    pub fn num_hidden(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.nrows()).sum()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Error::check_dim("network input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z: Vec<T> = l.weight.rows_iter().zip(&l.bias).map(|(r, &b)| dot(r, &a) + b).collect();
            if i < last {
                for v in &mut z {
                    *v = v.max(T::zero());
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Preactivation signs of every hidden neuron; an exact zero counts as active.
    pub fn activation_pattern(&self, x: &[T]) -> Result<ActivationPattern> {
        Error::check_dim("network input", self.input_dim(), x.len())?;
        let mut a = x.to_vec();
        let mut pattern = Vec::with_capacity(self.layers.len() - 1);
        for l in &self.layers[..self.layers.len() - 1] {
            let z: Vec<T> = l.weight.rows_iter().zip(&l.bias).map(|(r, &b)| dot(r, &a) + b).collect();
            pattern.push(z.iter().map(|&v| v >= T::zero()).collect());
            a = z.into_iter().map(|v| v.max(T::zero())).collect();
        }
        Ok(pattern)
    }

    /// Affine maps valid on the cell of `pattern`: for each hidden layer the
    /// preactivation `(G, h)` as a function of the network input, then the
    /// output map `(C, d)`.
    pub fn masked_affine_maps(&self, pattern: &ActivationPattern) -> Result<(Vec<(Matrix<T>, Vec<T>)>, (Matrix<T>, Vec<T>))> {
        Error::check_dim("pattern layers", self.layers.len() - 1, pattern.len())?;
        let n0 = self.input_dim();
        // Current post-activation map x ↦ g x + h.
        let mut g = Matrix::identity(n0);
        let mut h = vec![T::zero(); n0];
        let mut pre = Vec::with_capacity(pattern.len());
        for (l, mask) in self.layers.iter().zip(pattern) {
            Error::check_dim("pattern width", l.weight.nrows(), mask.len())?;
            let zg = l.weight.matmul(&g);
            let zh: Vec<T> = l.weight.matvec(&h).iter().zip(&l.bias).map(|(&a, &b)| a + b).collect();
            let mut ng = zg.clone();
            let mut nh = zh.clone();
            for (i, &on) in mask.iter().enumerate() {
                if !on {
                    ng.row_mut(i).iter_mut().for_each(|v| *v = T::zero());
                    nh[i] = T::zero();
                }
            }
            pre.push((zg, zh));
            g = ng;
            h = nh;
        }
        let out = self.layers.last().expect("nonempty");
        let c = out.weight.matmul(&g);
        let d: Vec<T> = out.weight.matvec(&h).iter().zip(&out.bias).map(|(&a, &b)| a + b).collect();
        Ok((pre, (c, d)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WeightFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightFile<T> = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn cast<U: Scalar>(&self) -> ReluNetwork<U> {
        ReluNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: l.weight.cast(), bias: l.bias.iter().map(|&x| U::lit(x.to_f64_lossy())).collect() })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct WeightFile<T> {
    widths: Vec<usize>,
    layers: Vec<Layer<T>>,
    version: u32,
}

impl<T: Scalar> From<&ReluNetwork<T>> for WeightFile<T> {
    fn from(net: &ReluNetwork<T>) -> Self {
        WeightFile { widths: net.widths(), layers: net.layers.clone(), version: WEIGHT_FILE_VERSION }
    }
}

impl<T: Scalar> TryFrom<WeightFile<T>> for ReluNetwork<T> {
    type Error = Error;
    fn try_from(f: WeightFile<T>) -> Result<Self> {
        if f.version != WEIGHT_FILE_VERSION {
            return Err(Error::Format(format!("weight file version {} (expected {WEIGHT_FILE_VERSION})", f.version)));
        }
        let net = ReluNetwork::new(f.layers)?;
        if net.widths() != f.widths {
            return Err(Error::Format(format!("declared widths {:?} disagree with layers {:?}", f.widths, net.widths())));
        }
        Ok(net)
    }
}

/// Supervised data: feature rows `k` and label rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainingSet<T> {
    pub features: Vec<Vec<T>>,
    pub labels: Vec<Vec<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(features: Vec<Vec<T>>, labels: Vec<Vec<T>>) -> Result<Self> {
        Error::check_dim("training rows", features.len(), labels.len())?;
        if features.is_empty() {
            return Err(Error::Input("empty training set".into()));
        }
        let (nf, nl) = (features[0].len(), labels[0].len());
        for (f, l) in features.iter().zip(&labels) {
            Error::check_dim("feature width", nf, f.len())?;
            Error::check_dim("label width", nl, l.len())?;
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn label_dim(&self) -> usize {
        self.labels[0].len()
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Hidden widths; input/output widths come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Datasets at least this large are trained in mini-batches of `batch_size`.
    pub full_batch_below: usize,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn new(hidden: Vec<usize>, epochs: usize, seed: u64) -> Self {
        Self { hidden, epochs, seed, learning_rate: 1e-3, full_batch_below: 10_000, batch_size: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport<T> {
    pub net: ReluNetwork<T>,
    /// Full-data MSE (normalized units) at the start of each epoch and after the last.
    pub loss_history: Vec<f64>,
    /// Mean squared error of the returned network in raw label units.
    pub final_mse: f64,
}

/// Fits a ReLU network with Adam on MSE. Inputs are scaled to `[-1, 1]` and
/// labels standardized during training; both affine maps are folded into the
/// first and last layers afterwards, so the returned network consumes raw
/// features and produces raw labels.
pub fn train<T: Scalar>(data: &TrainingSet<T>, cfg: &TrainConfig) -> Result<TrainReport<T>> {
    if data.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let nf = data.feature_dim();
    let nl = data.label_dim();
    let widths: Vec<usize> = std::iter::once(nf).chain(cfg.hidden.iter().copied()).chain(std::iter::once(nl)).collect();
    let mut net = ReluNetwork::<T>::random(&widths, cfg.seed)?;

    let in_norm = Normalizer::inputs(&data.features);
    let out_norm = Normalizer::outputs(&data.labels);
    let xs: Vec<Vec<T>> = data.features.iter().map(|f| in_norm.apply(f)).collect();
    let ys: Vec<Vec<T>> = data.labels.iter().map(|l| out_norm.apply(l)).collect();

    let mut adam = Adam::new(&net, cfg.learning_rate);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed0fba7c4);
    let batch = if xs.len() < cfg.full_batch_below { xs.len() } else { cfg.batch_size.max(1) };
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        history.push(mse(&net, &xs, &ys));
        if batch < xs.len() {
            shuffle(&mut order, &mut rng);
        }
        for chunk in order.chunks(batch) {
            let grads = gradients(&net, &xs, &ys, chunk);
            if grads.iter().any(|(gw, gb)| gw.as_slice().iter().chain(gb).any(|v| !v.is_finite())) {
                return Err(Error::Training("non-finite gradient".into()));
            }
            adam.step(&mut net, &grads);
        }
    }
    let last = mse(&net, &xs, &ys);
    if !last.is_finite() {
        return Err(Error::Training("loss is NaN".into()));
    }
    history.push(last);

    let net = if cfg.epochs == 0 { net } else { fold_normalization(net, &in_norm, &out_norm) };
    let final_mse = if cfg.epochs == 0 {
        f64::NAN
    } else {
        let raw: f64 = data
            .features
            .iter()
            .zip(&data.labels)
            .map(|(f, l)| {
                let y = net.forward(f).expect("dims checked");
                y.iter().zip(l).map(|(&a, &b)| (a - b).to_f64_lossy().powi(2)).sum::<f64>()
            })
            .sum();
        raw / (data.len() * nl) as f64
    };
    Ok(TrainReport { net, loss_history: history, final_mse })
}

fn shuffle<R: Rng>(v: &mut [usize], rng: &mut R) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Per-channel affine map `x ↦ (x − shift) / scale`.
struct Normalizer<T> {
    shift: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    /// Maps the data range of each feature onto `[-1, 1]`.
    fn inputs(rows: &[Vec<T>]) -> Self {
        let n = rows[0].len();
        let mut lo = vec![T::infinity(); n];
        let mut hi = vec![T::neg_infinity(); n];
        for r in rows {
            for i in 0..n {
                lo[i] = lo[i].min(r[i]);
                hi[i] = hi[i].max(r[i]);
            }
        }
        let two = T::lit(2.0);
        let shift = lo.iter().zip(&hi).map(|(&l, &h)| (l + h) / two).collect();
        let scale = lo.iter().zip(&hi).map(|(&l, &h)| if h > l { (h - l) / two } else { T::one() }).collect();
        Self { shift, scale }
    }

    /// Standardizes each label channel.
    fn outputs(rows: &[Vec<T>]) -> Self {
        let n = rows[0].len();
        let count = T::lit(rows.len() as f64);
        let mut mean = vec![T::zero(); n];
        for r in rows {
            for i in 0..n {
                mean[i] += r[i];
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![T::zero(); n];
        for r in rows {
            for i in 0..n {
                let d = r[i] - mean[i];
                var[i] += d * d;
            }
        }
        let scale = var.iter().map(|&v| {
            let s = (v / count).sqrt();
            if s > T::tol(1e-12) { s } else { T::one() }
        });
        Self { shift: mean, scale: scale.collect() }
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(self.shift.iter().zip(&self.scale)).map(|(&v, (&s, &c))| (v - s) / c).collect()
    }
}

/// Rewrites `y = out⁻¹(net(in(x)))` as a single network on raw units.
fn fold_normalization<T: Scalar>(mut net: ReluNetwork<T>, inp: &Normalizer<T>, out: &Normalizer<T>) -> ReluNetwork<T> {
    let first = &mut net.layers[0];
    // W (x − s)/c + b = (W / c) x + (b − W (s / c))
    for i in 0..first.weight.nrows() {
        let mut shift = T::zero();
        for j in 0..first.weight.ncols() {
            let w = first.weight[(i, j)] / inp.scale[j];
            first.weight[(i, j)] = w;
            shift += w * inp.shift[j];
        }
        first.bias[i] -= shift;
    }
    let last = net.layers.last_mut().expect("nonempty");
    for i in 0..last.weight.nrows() {
        for v in last.weight.row_mut(i) {
            *v *= out.scale[i];
        }
        last.bias[i] = last.bias[i] * out.scale[i] + out.shift[i];
    }
    net
}

fn mse<T: Scalar>(net: &ReluNetwork<T>, xs: &[Vec<T>], ys: &[Vec<T>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let p = net.forward(x).expect("dims checked");
        total += p.iter().zip(y).map(|(&a, &b)| (a - b).to_f64_lossy().powi(2)).sum::<f64>();
    }
    total / (xs.len() * ys[0].len()) as f64
}

/// Batch gradients of the mean squared error, per layer `(dW, db)`.
fn gradients<T: Scalar>(net: &ReluNetwork<T>, xs: &[Vec<T>], ys: &[Vec<T>], idx: &[usize]) -> Vec<(Matrix<T>, Vec<T>)> {
    let layers = &net.layers;
    let mut grads: Vec<(Matrix<T>, Vec<T>)> =
        layers.iter().map(|l| (Matrix::zeros(l.weight.nrows(), l.weight.ncols()), vec![T::zero(); l.bias.len()])).collect();
    let norm = T::lit(2.0 / (idx.len() * ys[0].len()) as f64);
    let last = layers.len() - 1;
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(layers.len() + 1);
    for &s in idx {
        acts.clear();
        acts.push(xs[s].clone());
        for (i, l) in layers.iter().enumerate() {
            let prev = acts.last().expect("input pushed");
            let mut z: Vec<T> = l.weight.rows_iter().zip(&l.bias).map(|(r, &b)| dot(r, prev) + b).collect();
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            acts.push(z);
        }
        let mut delta: Vec<T> = acts[layers.len()].iter().zip(&ys[s]).map(|(&p, &t)| (p - t) * norm).collect();
        for i in (0..layers.len()).rev() {
            let input = &acts[i];
            let (gw, gb) = &mut grads[i];
            for (r, &dv) in delta.iter().enumerate() {
                if dv == T::zero() {
                    continue;
                }
                gb[r] += dv;
                for (g, &a) in gw.row_mut(r).iter_mut().zip(input) {
                    *g += dv * a;
                }
            }
            if i == 0 {
                break;
            }
            let w = &layers[i].weight;
            let mut next = vec![T::zero(); w.ncols()];
            for (r, &dv) in delta.iter().enumerate() {
                if dv == T::zero() {
                    continue;
                }
                for (n, &wv) in next.iter_mut().zip(w.row(r)) {
                    *n += dv * wv;
                }
            }
            // ReLU derivative: the post-activation is positive exactly where the unit passes gradient.
            for (n, &a) in next.iter_mut().zip(&acts[i]) {
                if a <= T::zero() {
                    *n = T::zero();
                }
            }
            delta = next;
        }
    }
    grads
}

struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: i32,
    m: Vec<(Matrix<T>, Vec<T>)>,
    v: Vec<(Matrix<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    fn new(net: &ReluNetwork<T>, lr: f64) -> Self {
        let zeros: Vec<(Matrix<T>, Vec<T>)> =
            net.layers.iter().map(|l| (Matrix::zeros(l.weight.nrows(), l.weight.ncols()), vec![T::zero(); l.bias.len()])).collect();
        Self { lr: T::lit(lr), beta1: T::lit(0.9), beta2: T::lit(0.999), eps: T::lit(1e-8), t: 0, m: zeros.clone(), v: zeros }
    }

    fn step(&mut self, net: &mut ReluNetwork<T>, grads: &[(Matrix<T>, Vec<T>)]) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[li];
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            for i in 0..layer.weight.nrows() {
                for j in 0..layer.weight.ncols() {
                    update(&mut layer.weight[(i, j)], gw[(i, j)], &mut mw[(i, j)], &mut vw[(i, j)]);
                }
            }
            for i in 0..layer.bias.len() {
                update(&mut layer.bias[i], gb[i], &mut mb[i], &mut vb[i]);
            }
        }
    }
}
