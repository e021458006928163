//! Mini-batch Adam training and accuracy evaluation.

use std::fmt;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{split, LabeledDataset};
use crate::error::{Error, Result};
use crate::network::{crossentropy, Architecture, Network, Penalty, PenaltyScope};
use crate::optim::{adam_step, AdamConfig, AdamState};

/// Independent random streams derived from one run seed.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Size(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(BatchSize::Size(n as usize)),
            Raw::Str(s) if s == "full" => Ok(BatchSize::Full),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a positive integer or \"full\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    /// Coefficient of `Σ λ²`.
    pub eigenvalue_penalty: f64,
    pub penalty_scope: PenaltyScope,
    pub validation_fraction: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1000,
            batch_size: BatchSize::Full,
            eigenvalue_penalty: 1e-3,
            penalty_scope: PenaltyScope::All,
            validation_fraction: 0.1,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainingConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn penalty(&self) -> Penalty {
        Penalty {
            coefficient: self.eigenvalue_penalty,
            scope: self.penalty_scope,
        }
    }

    /// Checks value ranges; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            );
        }
        if let BatchSize::Size(0) = self.batch_size {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.eigenvalue_penalty >= 0.0 && self.eigenvalue_penalty.is_finite()) {
            return bad(
                "eigenvalue_penalty",
                format!("must be nonnegative, got {}", self.eigenvalue_penalty),
            );
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(
                "validation_fraction",
                format!("must be in [0, 1), got {}", self.validation_fraction),
            );
        }
        for (key, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(key, format!("must be in (0, 1), got {v}"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad(
                "adam_epsilon",
                format!("must be positive, got {}", self.adam_epsilon),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    /// `None` when no validation split was taken.
    pub val_loss: Vec<Option<f64>>,
    pub val_accuracy: Vec<Option<f64>>,
}

impl TrainingHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in 0..self.epochs() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e + 1,
                self.train_loss[e],
                opt(self.val_loss[e]),
                opt(self.val_accuracy[e])
            ));
        }
        out
    }
}

/// Fresh network for `arch` drawn from the run seed's init stream.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<Network> {
    Network::init(arch, &mut rng_for(seed, stream::INIT))
}

/// Trains for exactly `config.epochs` epochs.
///
/// The validation split (if any) is drawn once from the run seed before the
/// first epoch; mini-batch order is reshuffled every epoch.
pub fn train(
    mut net: Network,
    dataset: &LabeledDataset,
    config: &TrainingConfig,
) -> Result<(Network, TrainingHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if dataset.n_features() != net.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features but the network expects {}",
            dataset.n_features(),
            net.input_dim()
        )));
    }
    if let Some(&y) = dataset.labels.iter().find(|&&y| y >= net.output_dim()) {
        return Err(Error::Data(format!(
            "label {y} exceeds the network's {} outputs",
            net.output_dim()
        )));
    }
    let mut history = TrainingHistory::default();
    if config.epochs == 0 {
        return Ok((net, history));
    }

    let (train_set, val_set) = if config.validation_fraction > 0.0 {
        let (a, b) = split(
            dataset,
            config.validation_fraction,
            rng_seed(config.seed, stream::SPLIT),
        )?;
        (a, Some(b))
    } else {
        (dataset.clone(), None)
    };

    let n = train_set.len();
    let batch = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let penalty = config.penalty();
    let adam = config.adam();
    let mut state = AdamState::new(net.param_count());
    let mut params = net.params();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_for(config.seed, stream::SHUFFLE);
    let diverged = |epoch: usize, e: Error| match e {
        Error::Divergence { layer, .. } => Error::Divergence {
            epoch: Some(epoch),
            layer,
        },
        other => other,
    };

    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut shuffle_rng);
        }
        let mut ce_sum = 0.0;
        for chunk in order.chunks(batch) {
            let (x, y) = if batch == n {
                (
                    train_set.features.view().to_owned(),
                    train_set.labels.clone(),
                )
            } else {
                (
                    train_set.features.select(Axis(0), chunk),
                    chunk.iter().map(|&i| train_set.labels[i]).collect(),
                )
            };
            let pass = net.forward(x.view()).map_err(|e| diverged(epoch, e))?;
            ce_sum += crossentropy(pass.probabilities().view(), &y)? * chunk.len() as f64;
            let grads = net.backward(&pass, &y, &penalty)?.flatten();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch: Some(epoch),
                    layer: 0,
                });
            }
            adam_step(&mut params, &grads, &mut state, &adam);
            net.set_params(&params)?;
        }
        history
            .train_loss
            .push(ce_sum / n as f64 + net.penalty_value(&penalty));
        match &val_set {
            Some(v) => {
                let probs =
                    predict_batched(&net, v.features.view()).map_err(|e| diverged(epoch, e))?;
                history
                    .val_loss
                    .push(Some(crossentropy(probs.view(), &v.labels)?));
                history
                    .val_accuracy
                    .push(Some(accuracy(probs.view(), &v.labels)));
            }
            None => {
                history.val_loss.push(None);
                history.val_accuracy.push(None);
            }
        }
    }
    Ok((net, history))
}

fn rng_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    rng_for(seed, stream).next_u64()
}

const EVAL_CHUNK: usize = 4096;

fn predict_batched(net: &Network, features: ArrayView2<f64>) -> Result<ndarray::Array2<f64>> {
    if features.nrows() <= EVAL_CHUNK {
        return net.predict(features);
    }
    let parts = features
        .axis_chunks_iter(Axis(0), EVAL_CHUNK)
        .map(|c| net.predict(c))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn accuracy(probabilities: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let hits = probabilities
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Fraction of rows whose argmax matches the label.
pub fn evaluate(net: &Network, dataset: &LabeledDataset) -> Result<f64> {
    evaluate_features(net, dataset.features.view(), &dataset.labels)
}

pub fn evaluate_features(
    net: &Network,
    features: ArrayView2<f64>,
    labels: &[usize],
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let probs = predict_batched(net, features)?;
    Ok(accuracy(probs.view(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_independent_spec, gen_independent_gaussians};
    use crate::network::{Activation, Layer, LayerKind, SpectralLayers};
    use crate::spectral::{SpectralLayer, SpectralMode};
    use ndarray::{array, Array1, Array2};

    fn arch(d: usize) -> Architecture {
        Architecture {
            input_dim: d,
            hidden: vec![8],
            n_classes: 2,
            spectral: SpectralLayers::First,
            mode: SpectralMode::Reduced,
        }
    }

    fn uniform_net(d: usize) -> Network {
        Network::new(vec![Layer {
            kind: LayerKind::Spectral(
                SpectralLayer::reduced(Array1::zeros(d), Array2::ones((2, d))).unwrap(),
            ),
            activation: Activation::Softmax,
        }])
        .unwrap()
    }

    #[test]
    fn uniform_output_ties_go_to_class_zero() {
        let f = Array2::from_shape_fn((10, 3), |(i, j)| (i + j) as f64);
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let d = LabeledDataset::new("t", f, labels, None).unwrap();
        assert_eq!(evaluate(&uniform_net(3), &d).unwrap(), 0.5);
        let ones = d.subset(&[1, 3]);
        assert_eq!(evaluate(&uniform_net(3), &ones).unwrap(), 0.0);
    }

    #[test]
    fn single_correct_sample() {
        let mut net = uniform_net(1);
        if let LayerKind::Spectral(s) = &mut net.layers[0].kind {
            s.bias = array![0.0, 1.0];
        }
        let d = LabeledDataset::new("t", array![[0.3]], vec![1], None).unwrap();
        assert_eq!(evaluate(&net, &d).unwrap(), 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = LabeledDataset::new("t", Array2::zeros((0, 2)), vec![], None).unwrap();
        assert!(evaluate(&uniform_net(2), &d).is_err());
    }

    #[test]
    fn zero_epochs_returns_input_network() {
        let d = gen_independent_gaussians(&default_independent_spec(), 20, 1).unwrap();
        let net = init_network(&arch(20), 4).unwrap();
        let cfg = TrainingConfig {
            epochs: 0,
            ..Default::default()
        };
        let (out, hist) = train(net.clone(), &d, &cfg).unwrap();
        assert_eq!(out, net);
        assert_eq!(hist.epochs(), 0);
    }

    #[test]
    fn deterministic_and_learns() {
        let d = gen_independent_gaussians(&default_independent_spec(), 200, 1).unwrap();
        let cfg = TrainingConfig {
            epochs: 30,
            batch_size: BatchSize::Size(64),
            seed: 9,
            ..Default::default()
        };
        let run = || train(init_network(&arch(20), cfg.seed).unwrap(), &d, &cfg).unwrap();
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs(), 30);
        assert!(ha.train_loss[29] < ha.train_loss[0]);
        assert!(ha.val_accuracy[29].unwrap() > 0.8);
    }

    #[test]
    fn config_validation_names_key() {
        let cfg = TrainingConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "learning_rate"),
            other => panic!("{other:?}"),
        }
        let cfg = TrainingConfig {
            adam_beta2: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn batch_size_serde() {
        #[derive(Serialize, Deserialize)]
        struct W {
            b: BatchSize,
        }
        assert_eq!(
            serde_json::to_string(&W { b: BatchSize::Full }).unwrap(),
            r#"{"b":"full"}"#
        );
        assert_eq!(
            serde_json::from_str::<W>(r#"{"b":128}"#).unwrap().b,
            BatchSize::Size(128)
        );
        assert!(serde_json::from_str::<W>(r#"{"b":"half"}"#).is_err());
    }

    #[test]
    fn argmax_tie_break() {
        assert_eq!(argmax(array![0.5, 0.5].view()), 0);
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
    }
}
