//! Feedforward networks mixing spectral and dense layers.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{DenseWeights, SpectralLayer, SpectralMode};

/// Probabilities are clamped here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerKind {
    Spectral(SpectralLayer),
    Dense(DenseWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        match &self.kind {
            LayerKind::Spectral(s) => s.n_in(),
            LayerKind::Dense(d) => d.n_in(),
        }
    }

    pub fn n_out(&self) -> usize {
        match &self.kind {
            LayerKind::Spectral(s) => s.n_out(),
            LayerKind::Dense(d) => d.n_out(),
        }
    }

    pub fn as_spectral(&self) -> Option<&SpectralLayer> {
        match &self.kind {
            LayerKind::Spectral(s) => Some(s),
            LayerKind::Dense(_) => None,
        }
    }

    fn weights(&self) -> Result<DenseWeights> {
        match &self.kind {
            LayerKind::Spectral(s) => s.materialize(),
            LayerKind::Dense(d) => Ok(d.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralLayers {
    /// Only the input layer is spectral.
    #[default]
    First,
    All,
}

/// Layer widths and which layers carry a spectral parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
    pub spectral: SpectralLayers,
    pub mode: SpectralMode,
}

impl Architecture {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.n_classes);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyScope {
    /// Every spectral layer's eigenvalues.
    #[default]
    All,
    /// Only the first layer's eigenvalues.
    First,
}

/// L2 penalty `coefficient · Σ λ²` over spectral eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub coefficient: f64,
    pub scope: PenaltyScope,
}

impl Penalty {
    pub const NONE: Penalty = Penalty {
        coefficient: 0.0,
        scope: PenaltyScope::All,
    };

    fn applies_to(&self, layer_index: usize) -> bool {
        self.coefficient != 0.0 && (self.scope == PenaltyScope::All || layer_index == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `activations[0]` is the batch, `activations[k + 1]` the output of layer `k`.
    pub activations: Vec<Array2<f64>>,
    /// Dense weights each layer used, materialized once per pass.
    pub weights: Vec<Array2<f64>>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("forward pass has at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad {
    Spectral {
        lambda_in: Array1<f64>,
        /// Present for full-mode layers only.
        lambda_out: Option<Array1<f64>>,
        psi: Array2<f64>,
        bias: Array1<f64>,
    },
    Dense {
        w: Array2<f64>,
        bias: Array1<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    /// ∂L/∂W for the materialized weights, excluding the penalty.
    pub weight: Array2<f64>,
    pub params: ParamGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Flattened in the same order as [`Network::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            match &g.params {
                ParamGrad::Spectral {
                    lambda_in,
                    lambda_out,
                    psi,
                    bias,
                } => {
                    out.extend(lambda_in.iter());
                    if let Some(lo) = lambda_out {
                        out.extend(lo.iter());
                    }
                    out.extend(psi.iter());
                    out.extend(bias.iter());
                }
                ParamGrad::Dense { w, bias } => {
                    out.extend(w.iter());
                    out.extend(bias.iter());
                }
            }
        }
        out
    }
}

fn he_normal(n_in: usize) -> Normal<f64> {
    Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std")
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].n_out(),
                    k + 1,
                    pair[1].n_in()
                )));
            }
        }
        for l in &layers {
            if let LayerKind::Spectral(s) = &l.kind {
                s.check()?;
            }
        }
        Ok(Self { layers })
    }

    /// Random initialization: eigenvalues uniform in [−1, 1], eigenvectors and
    /// dense weights zero-mean Gaussian with std `sqrt(2 / n_in)`, zero biases.
    /// Hidden layers use ReLU, the output layer softmax.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let widths = arch.widths();
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let n_layers = widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let (n, m) = (widths[k], widths[k + 1]);
            let normal = he_normal(n);
            let spectral = k == 0 || arch.spectral == SpectralLayers::All;
            let kind = if spectral {
                let lambda_in = Array1::from_iter((0..n).map(|_| unit.sample(rng)));
                let lambda_out = match arch.mode {
                    SpectralMode::Reduced => Array1::zeros(m),
                    SpectralMode::Full => Array1::from_iter((0..m).map(|_| unit.sample(rng))),
                };
                let psi = Array2::from_shape_simple_fn((m, n), || normal.sample(rng));
                LayerKind::Spectral(SpectralLayer::new(
                    lambda_in,
                    lambda_out,
                    psi,
                    Array1::zeros(m),
                    arch.mode,
                )?)
            } else {
                let w = Array2::from_shape_simple_fn((m, n), || normal.sample(rng));
                LayerKind::Dense(DenseWeights::new(w, Array1::zeros(m))?)
            };
            let activation = if k + 1 == n_layers {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            layers.push(Layer { kind, activation });
        }
        Network::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::n_out).unwrap_or(0)
    }

    pub fn first_spectral(&self) -> Option<&SpectralLayer> {
        self.layers.first().and_then(Layer::as_spectral)
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<ForwardPass> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features but the network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut weights = Vec::with_capacity(self.layers.len());
        activations.push(batch.to_owned());
        for (k, layer) in self.layers.iter().enumerate() {
            let dw = layer.weights()?;
            let mut z = activations[k].dot(&dw.w.t());
            z += &dw.bias.view().insert_axis(Axis(0));
            apply_activation(&mut z, layer.activation);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: None,
                    layer: k,
                });
            }
            activations.push(z);
            weights.push(dw.w);
        }
        Ok(ForwardPass {
            activations,
            weights,
        })
    }

    /// Output probabilities only.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut pass = self.forward(batch)?;
        Ok(pass.activations.pop().expect("non-empty"))
    }

    /// `coefficient · Σ λ²` over the eigenvalues in the penalty's scope.
    pub fn penalty_value(&self, penalty: &Penalty) -> f64 {
        self.layers
            .iter()
            .enumerate()
            .filter(|(k, _)| penalty.applies_to(*k))
            .filter_map(|(_, l)| l.as_spectral())
            .map(|s| {
                let sq = |a: &Array1<f64>| a.iter().map(|v| v * v).sum::<f64>();
                sq(&s.lambda_in) + sq(&s.lambda_out)
            })
            .sum::<f64>()
            * penalty.coefficient
    }

    /// Gradients of mean crossentropy plus the eigenvalue penalty.
    ///
    /// Requires a softmax output layer and the [`ForwardPass`] for this batch.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        labels: &[usize],
        penalty: &Penalty,
    ) -> Result<Gradients> {
        let probs = pass.probabilities();
        let (b, c) = probs.dim();
        if labels.len() != b {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {b}",
                labels.len()
            )));
        }
        if self.layers.last().map(|l| l.activation) != Some(Activation::Softmax) {
            return Err(Error::InvalidArgument(
                "backward requires a softmax output layer".into(),
            ));
        }
        let mut delta = probs.clone();
        for (row, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range for {c} classes"
                )));
            }
            delta[[row, y]] -= 1.0;
        }
        delta /= b as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k + 1 != self.layers.len() {
                match layer.activation {
                    Activation::Relu => Zip::from(&mut delta)
                        .and(&pass.activations[k + 1])
                        .for_each(|d, &a| {
                            if a <= 0.0 {
                                *d = 0.0
                            }
                        }),
                    Activation::Identity => {}
                    Activation::Softmax => {
                        return Err(Error::InvalidArgument(
                            "softmax is only supported on the output layer".into(),
                        ))
                    }
                }
            }
            let weight = delta.t().dot(&pass.activations[k]);
            let bias = delta.sum_axis(Axis(0));
            let next_delta = if k > 0 {
                Some(delta.dot(&pass.weights[k]))
            } else {
                None
            };
            let params = match &layer.kind {
                LayerKind::Dense(_) => ParamGrad::Dense {
                    w: weight.clone(),
                    bias,
                },
                LayerKind::Spectral(s) => {
                    let two_c = if penalty.applies_to(k) {
                        2.0 * penalty.coefficient
                    } else {
                        0.0
                    };
                    spectral_grads(s, &weight, bias, two_c)
                }
            };
            grads.push(LayerGrad { weight, params });
            if let Some(d) = next_delta {
                delta = d;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.kind {
                LayerKind::Spectral(s) => {
                    let lo = if s.mode == SpectralMode::Full {
                        s.n_out()
                    } else {
                        0
                    };
                    s.n_in() + lo + s.psi.len() + s.bias.len()
                }
                LayerKind::Dense(d) => d.w.len() + d.bias.len(),
            })
            .sum()
    }

    /// All trainable scalars, layer by layer: spectral layers as
    /// `λ_in, [λ_out if full], ψ (row-major), bias`; dense as `w, bias`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            match &l.kind {
                LayerKind::Spectral(s) => {
                    out.extend(s.lambda_in.iter());
                    if s.mode == SpectralMode::Full {
                        out.extend(s.lambda_out.iter());
                    }
                    out.extend(s.psi.iter());
                    out.extend(s.bias.iter());
                }
                LayerKind::Dense(d) => {
                    out.extend(d.w.iter());
                    out.extend(d.bias.iter());
                }
            }
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for v in dst {
                *v = it.next().expect("length checked");
            }
        };
        for l in &mut self.layers {
            match &mut l.kind {
                LayerKind::Spectral(s) => {
                    fill(&mut s.lambda_in.iter_mut());
                    if s.mode == SpectralMode::Full {
                        fill(&mut s.lambda_out.iter_mut());
                    }
                    fill(&mut s.psi.iter_mut());
                    fill(&mut s.bias.iter_mut());
                }
                LayerKind::Dense(d) => {
                    fill(&mut d.w.iter_mut());
                    fill(&mut d.bias.iter_mut());
                }
            }
        }
        Ok(())
    }
}

/// Contracts ∂L/∂W onto the spectral parameters and adds `two_c · λ`.
fn spectral_grads(s: &SpectralLayer, g: &Array2<f64>, bias: Array1<f64>, two_c: f64) -> ParamGrad {
    let gp = g * &s.psi;
    let mut lambda_in = gp.sum_axis(Axis(0));
    lambda_in.scaled_add(two_c, &s.lambda_in);
    match s.mode {
        SpectralMode::Reduced => {
            let psi = g * &s.lambda_in.view().insert_axis(Axis(0));
            ParamGrad::Spectral {
                lambda_in,
                lambda_out: None,
                psi,
                bias,
            }
        }
        SpectralMode::Full => {
            let mut lambda_out = -gp.sum_axis(Axis(1));
            lambda_out.scaled_add(two_c, &s.lambda_out);
            let mut psi = g.clone();
            for ((j, i), v) in psi.indexed_iter_mut() {
                *v *= s.lambda_in[i] - s.lambda_out[j];
            }
            ParamGrad::Spectral {
                lambda_in,
                lambda_out: Some(lambda_out),
                psi,
                bias,
            }
        }
    }
}

fn apply_activation(z: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Identity => {}
        Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        Activation::Softmax => {
            for mut row in z.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row /= sum;
            }
        }
    }
}

/// Mean sparse categorical crossentropy plus the eigenvalue penalty.
pub fn loss(
    probabilities: ArrayView2<f64>,
    labels: &[usize],
    net: &Network,
    penalty: &Penalty,
) -> Result<f64> {
    Ok(crossentropy(probabilities, labels)? + net.penalty_value(penalty))
}

/// Mean of `−ln max(p[label], 1e-12)` over the batch.
pub fn crossentropy(probabilities: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let (b, c) = probabilities.dim();
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &y) in probabilities.rows().into_iter().zip(labels) {
        if y >= c {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {c} classes"
            )));
        }
        total -= row[y].max(PROB_FLOOR).ln();
    }
    Ok(total / b as f64)
}
