use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::loss::{check_labels, loss_grad_logits, sample_loss};
use super::{Activation, Architecture, LayerSlice, LossKind, Scalar};
use crate::error::{Error, Result};

/// Rows of a mini-batch together with their global sample ids and weights.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub features: Array2<S>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<usize>,
    pub weights: Vec<S>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(
        features: Array2<S>,
        labels: Vec<usize>,
        sample_ids: Vec<usize>,
        weights: Vec<S>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || sample_ids.len() != n || weights.len() != n {
            return Err(Error::invalid(format!(
                "batch has {n} rows but {} labels, {} ids, {} weights",
                labels.len(),
                sample_ids.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= S::zero())) {
            return Err(Error::invalid(format!("batch weight {i} is negative or NaN")));
        }
        Ok(Batch {
            features,
            labels,
            sample_ids,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parameters of a classifier plus the descriptor that gives them shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<S> {
    arch: Architecture,
    theta: Vec<S>,
    layout: Vec<LayerSlice>,
    seed: Option<u64>,
}

struct Trace<S> {
    /// post-activation output of each hidden layer
    hidden: Vec<Array2<S>>,
    probs: Array2<S>,
}

impl<S: Scalar> ModelState<S> {
    /// He-normal weights on ReLU layers, Glorot-normal elsewhere, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut theta = vec![S::zero(); arch.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layout.len() - 1;
        for (l, layer) in layout.iter().enumerate() {
            let std = if l < last && arch.activation == Activation::Relu {
                (2.0 / layer.fan_in as f64).sqrt()
            } else {
                (2.0 / (layer.fan_in + layer.fan_out) as f64).sqrt()
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for v in &mut theta[layer.weights.clone()] {
                *v = S::lit(normal.sample(&mut rng));
            }
        }
        Ok(ModelState {
            arch,
            theta,
            layout,
            seed: Some(seed),
        })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let theta = vec![S::zero(); arch.param_count()];
        Self::from_theta(arch, theta)
    }

    pub fn from_theta(arch: Architecture, theta: Vec<S>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.param_count();
        if theta.len() != expected {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, architecture needs {expected}",
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        let layout = arch.layout();
        Ok(ModelState {
            arch,
            theta,
            layout,
            seed: None,
        })
    }

    pub(crate) fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn theta(&self) -> &[S] {
        &self.theta
    }

    pub fn layout(&self) -> &[LayerSlice] {
        &self.layout
    }

    /// Seed the parameters were initialized from, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Same parameters in another precision.
    pub fn cast<T: Scalar>(&self) -> ModelState<T> {
        ModelState {
            arch: self.arch.clone(),
            theta: self
                .theta
                .iter()
                .map(|v| T::lit(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
            layout: self.layout.clone(),
            seed: self.seed,
        }
    }

    /// `theta -= step * grad`
    pub fn apply_update(&mut self, grad: &[S], step: S) -> Result<()> {
        if grad.len() != self.theta.len() {
            return Err(Error::invalid(format!(
                "gradient has {} entries, model has {}",
                grad.len(),
                self.theta.len()
            )));
        }
        for (t, g) in self.theta.iter_mut().zip(grad) {
            *t = *t - step * *g;
        }
        Ok(())
    }

    fn weights(&self, layer: &LayerSlice) -> ArrayView2<'_, S> {
        ArrayView2::from_shape((layer.fan_in, layer.fan_out), &self.theta[layer.weights.clone()])
            .expect("layout matches theta")
    }

    fn bias(&self, layer: &LayerSlice) -> Option<ArrayView1<'_, S>> {
        layer
            .bias
            .as_ref()
            .map(|r| ArrayView1::from(&self.theta[r.clone()]))
    }

    fn check_input(&self, x: &ArrayView2<'_, S>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    fn affine(&self, layer: &LayerSlice, input: &ArrayView2<'_, S>) -> Array2<S> {
        let mut z = Array2::zeros((input.nrows(), layer.fan_out));
        general_mat_mul(S::one(), input, &self.weights(layer), S::zero(), &mut z);
        if let Some(b) = self.bias(layer) {
            z += &b;
        }
        z
    }

    fn trace(&self, x: ArrayView2<'_, S>) -> Trace<S> {
        let last = self.layout.len() - 1;
        let mut hidden: Vec<Array2<S>> = Vec::with_capacity(last);
        for (l, layer) in self.layout.iter().enumerate() {
            let mut z = match l {
                0 => self.affine(layer, &x),
                _ => self.affine(layer, &hidden[l - 1].view()),
            };
            if l < last {
                match self.arch.activation {
                    Activation::Relu => z.mapv_inplace(|v| v.max(S::zero())),
                    Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
                }
                hidden.push(z);
            } else {
                softmax_rows(&mut z);
                return Trace { hidden, probs: z };
            }
        }
        unreachable!("architecture has an output layer")
    }

    /// Class probabilities, one softmax row per input row.
    pub fn forward(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        self.check_input(&x)?;
        Ok(self.trace(x).probs)
    }

    pub fn predict(&self, x: ArrayView2<'_, S>) -> Result<Vec<usize>> {
        let probs = self.forward(x)?;
        Ok(probs
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, S::neg_infinity()), |best, (k, &p)| {
                        if p > best.1 {
                            (k, p)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    /// Per-sample losses, evaluated in row chunks to bound memory.
    pub fn losses(&self, x: ArrayView2<'_, S>, labels: &[usize], kind: LossKind) -> Result<Vec<S>> {
        self.check_input(&x)?;
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        check_labels(labels, self.arch.num_classes)?;
        const CHUNK: usize = 2048;
        let mut out = Vec::with_capacity(labels.len());
        for start in (0..labels.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(labels.len());
            let probs = self.trace(x.slice(ndarray::s![start..end, ..])).probs;
            out.extend(
                probs
                    .outer_iter()
                    .zip(&labels[start..end])
                    .map(|(p, &y)| sample_loss(p, y, kind)),
            );
        }
        Ok(out)
    }

    /// Backpropagates `dz_out` (gradient w.r.t. output logits).
    fn backward(
        &self,
        x: ArrayView2<'_, S>,
        trace: &Trace<S>,
        mut dz: Array2<S>,
        want_params: bool,
        want_input: bool,
    ) -> (Option<Vec<S>>, Option<Array2<S>>) {
        let mut grad = want_params.then(|| vec![S::zero(); self.theta.len()]);
        let mut input_grad = None;
        for (l, layer) in self.layout.iter().enumerate().rev() {
            if let Some(g) = grad.as_mut() {
                let input = match l {
                    0 => x.view(),
                    _ => trace.hidden[l - 1].view(),
                };
                let mut dw = ArrayViewMut2::from_shape(
                    (layer.fan_in, layer.fan_out),
                    &mut g[layer.weights.clone()],
                )
                .expect("layout matches gradient");
                general_mat_mul(S::one(), &input.t(), &dz, S::zero(), &mut dw);
                if let Some(r) = layer.bias.as_ref() {
                    for (gb, s) in g[r.clone()].iter_mut().zip(dz.sum_axis(Axis(0))) {
                        *gb = s;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            let mut da = Array2::zeros((dz.nrows(), layer.fan_in));
            general_mat_mul(S::one(), &dz, &self.weights(layer).t(), S::zero(), &mut da);
            if l == 0 {
                input_grad = Some(da);
                break;
            }
            let post = &trace.hidden[l - 1];
            match self.arch.activation {
                Activation::Relu => {
                    ndarray::Zip::from(&mut da).and(post).for_each(|d, &a| {
                        if a <= S::zero() {
                            *d = S::zero();
                        }
                    });
                }
                Activation::Tanh => {
                    ndarray::Zip::from(&mut da)
                        .and(post)
                        .for_each(|d, &a| *d = *d * (S::one() - a * a));
                }
            }
            dz = da;
        }
        (grad, input_grad)
    }

    fn output_grad(
        &self,
        probs: &Array2<S>,
        labels: &[usize],
        weights: Option<&[S]>,
        kind: LossKind,
    ) -> Array2<S> {
        let mut dz = Array2::zeros(probs.raw_dim());
        for (i, (p, mut out)) in probs.outer_iter().zip(dz.outer_iter_mut()).enumerate() {
            let w = weights.map_or(S::one(), |w| w[i]);
            if w != S::zero() {
                loss_grad_logits(p, labels[i], kind, w, out.view_mut());
            } else {
                out.fill(S::zero());
            }
        }
        dz
    }

    fn check_rows(&self, x: &ArrayView2<'_, S>, labels: &[usize]) -> Result<()> {
        self.check_input(x)?;
        if labels.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        check_labels(labels, self.arch.num_classes)
    }

    /// `sum_i w_i * grad_theta J(theta; x_i, y_i)` over the rows of `x`.
    pub fn grad_params_rows(
        &self,
        x: ArrayView2<'_, S>,
        labels: &[usize],
        weights: &[S],
        kind: LossKind,
    ) -> Result<Vec<S>> {
        self.check_rows(&x, labels)?;
        if weights.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} weights",
                labels.len(),
                weights.len()
            )));
        }
        let trace = self.trace(x);
        let dz = self.output_grad(&trace.probs, labels, Some(weights), kind);
        let grad = self.backward(x, &trace, dz, true, false).0.expect("requested");
        ensure_finite(&grad, "parameter gradient")?;
        Ok(grad)
    }

    pub fn grad_params_weighted(&self, batch: &Batch<S>, kind: LossKind) -> Result<Vec<S>> {
        self.grad_params_rows(batch.features.view(), &batch.labels, &batch.weights, kind)
    }

    /// Gradient of the mean loss over the rows of `x`.
    pub fn grad_params_mean(
        &self,
        x: ArrayView2<'_, S>,
        labels: &[usize],
        kind: LossKind,
    ) -> Result<Vec<S>> {
        self.check_rows(&x, labels)?;
        let trace = self.trace(x);
        let dz = self.output_grad(&trace.probs, labels, None, kind);
        let mut grad = self.backward(x, &trace, dz, true, false).0.expect("requested");
        let inv = S::one() / S::lit(labels.len() as f64);
        grad.iter_mut().for_each(|g| *g = *g * inv);
        ensure_finite(&grad, "parameter gradient")?;
        Ok(grad)
    }

    /// Row `i` holds `grad_x J(theta; x_i, y_i)`.
    pub fn input_gradients(
        &self,
        x: ArrayView2<'_, S>,
        labels: &[usize],
        kind: LossKind,
    ) -> Result<Array2<S>> {
        self.check_rows(&x, labels)?;
        let trace = self.trace(x);
        let dz = self.output_grad(&trace.probs, labels, None, kind);
        let g = self.backward(x, &trace, dz, false, true).1.expect("requested");
        ensure_finite(g.as_slice().unwrap_or(&[]), "input gradient")?;
        Ok(g)
    }

    pub fn grad_input(&self, x: &[S], y: usize, kind: LossKind) -> Result<Vec<S>> {
        let row = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.input_gradients(row, &[y], kind)?.into_raw_vec_and_offset().0)
    }

    /// Smallest `|pre-activation|` over hidden units; `None` without hidden layers.
    pub fn min_hidden_margin(&self, x: ArrayView2<'_, S>) -> Result<Option<S>> {
        self.check_input(&x)?;
        let last = self.layout.len() - 1;
        let mut act: Option<Array2<S>> = None;
        let mut margin: Option<S> = None;
        for layer in self.layout.iter().take(last) {
            let mut z = match act.as_ref() {
                None => self.affine(layer, &x),
                Some(a) => self.affine(layer, &a.view()),
            };
            let m = z.iter().fold(S::infinity(), |m, v| m.min(v.abs()));
            margin = Some(margin.map_or(m, |old: S| old.min(m)));
            match self.arch.activation {
                Activation::Relu => z.mapv_inplace(|v| v.max(S::zero())),
                Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
            }
            act = Some(z);
        }
        Ok(margin)
    }
}

fn softmax_rows<S: Scalar>(z: &mut Array2<S>) {
    for mut row in z.outer_iter_mut() {
        let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn ensure_finite<S: Scalar>(values: &[S], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{what} entry {i} is not finite ({})",
            values[i]
        )));
    }
    Ok(())
}
