//! Mini-batch training.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetRecord;
use crate::eval::{confusion, metrics, Confusion, GraphOutcome};
use crate::gcn::{compute_gradients, model_forward, Architecture, GcnError, ModelParams, NormalizedAdjacency, Real};
use crate::graph::CodeGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    BadHyperparameters(String),
    #[error(transparent)]
    Numeric(#[from] GcnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: usize,
    /// Graphs per batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Per-class loss weights `[clean, vulnerable]`; `None` is unweighted.
    pub class_weights: Option<[f64; 2]>,
    pub architecture: Architecture,
}

impl Hyperparameters {
    /// 1600 epochs, 100 graphs per batch, Adam at 1e-4.
    pub fn paper() -> Self {
        Self {
            epochs: 1600,
            batch_size: 100,
            learning_rate: 1e-4,
            seed: 0,
            class_weights: None,
            architecture: Architecture::paper(),
        }
    }

    /// The `paper` profile cut to 200 epochs.
    pub fn quick() -> Self {
        Self { epochs: 200, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadHyperparameters(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return bad("class weights must be positive");
            }
        }
        self.architecture.validate()?;
        Ok(())
    }
}

/// Disjoint union of several graphs.
#[derive(Debug, Clone)]
pub struct BatchGraph {
    pub features: Array2<f32>,
    pub adjacency: NormalizedAdjacency,
    pub labels: Vec<bool>,
    /// First node of each member graph.
    pub offsets: Vec<usize>,
    /// Index of each member in the source record list.
    pub members: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl BatchGraph {
    pub fn new(records: &[DatasetRecord], members: Vec<usize>) -> Self {
        let graphs: Vec<&CodeGraph> = members.iter().map(|&i| &records[i].graph).collect();
        let (union, offsets) = CodeGraph::disjoint_union(graphs);
        let views: Vec<_> = members.iter().map(|&i| records[i].features.view()).collect();
        let features = if views.is_empty() {
            Array2::zeros((0, crate::features::FEATURE_DIM))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("feature widths agree")
        };
        let labels = members.iter().flat_map(|&i| records[i].labels.0.iter().copied()).collect();
        let adjacency = NormalizedAdjacency::from_graph(&union);
        Self { features, adjacency, labels, offsets, members, edges: union.edges().to_vec() }
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Node range of member `k`.
    pub fn member_nodes(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(k + 1).copied().unwrap_or(self.node_count());
        self.offsets[k]..end
    }
}

/// Shuffles the records with `seed` and groups them into unions of at most
/// `batch_size` graphs.
pub fn make_batches(records: &[DatasetRecord], batch_size: usize, seed: u64) -> Result<Vec<BatchGraph>, TrainError> {
    if records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(TrainError::BadHyperparameters("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch_size).map(|c| BatchGraph::new(records, c.to_vec())).collect())
}

/// Batches in record order, for evaluation.
pub fn ordered_batches(records: &[DatasetRecord], batch_size: usize) -> Vec<BatchGraph> {
    let order: Vec<usize> = (0..records.len()).collect();
    order.chunks(batch_size.max(1)).map(|c| BatchGraph::new(records, c.to_vec())).collect()
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(arch: &Architecture, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: ModelParams::zeros(arch),
            v: ModelParams::zeros(arch),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ModelParams<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &ModelParams<T> {
        &self.v
    }

    /// One bias-corrected update of `params` along `grads`.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<(), GcnError> {
        let arch = self.m.architecture();
        if params.architecture() != arch || grads.architecture() != arch {
            return Err(GcnError::ShapeMismatch("optimizer state and parameters differ".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let cast = |x: f64| T::from_f64(x).unwrap();
        let (b1, b2) = (cast(self.beta1), cast(self.beta2));
        let (c1, c2) = (cast(1.0 - self.beta1), cast(1.0 - self.beta2));
        let correction1 = cast(1.0 - self.beta1.powi(t));
        let correction2 = cast(1.0 - self.beta2.powi(t));
        let lr = cast(self.learning_rate);
        let eps = cast(self.epsilon);
        let layers = params.layers_mut().zip(grads.layers()).zip(self.m.layers_mut().zip(self.v.layers_mut()));
        for ((p, g), (m, v)) in layers {
            let update = |p: &mut T, g: &T, m: &mut T, v: &mut T| {
                *m = b1 * *m + c1 * *g;
                *v = b2 * *v + c2 * *g * *g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(update);
            ndarray::Zip::from(&mut p.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(update);
        }
        Ok(())
    }
}

/// Free-function form of [`Adam::step`].
pub fn adam_step<T: Real>(params: &mut ModelParams<T>, grads: &ModelParams<T>, state: &mut Adam<T>) -> Result<(), GcnError> {
    state.step(params, grads)
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EpochMetrics {
    fn new(epoch: usize, split: &str, loss: f64, c: Confusion) -> Self {
        let m = metrics(c).unwrap_or_default();
        Self {
            epoch,
            split: split.to_string(),
            loss,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: ModelParams<f32>,
    /// Parameters from the epoch with the best validation node F1 (training
    /// F1 when there is no validation split).
    pub best_params: ModelParams<f32>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub log: Vec<EpochMetrics>,
}

/// Seed of the batch shuffle in `epoch`.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Loss and node confusion of `params` over `batches`.
pub fn evaluate_batches(
    batches: &[BatchGraph],
    params: &ModelParams<f32>,
    class_weights: Option<[f64; 2]>,
) -> Result<(f64, Confusion), GcnError> {
    let mut total = Confusion::default();
    let mut loss_sum = 0.0;
    let mut nodes = 0usize;
    for b in batches {
        let pred = model_forward(b.features.view(), &b.adjacency, params)?;
        loss_sum += crate::gcn::cross_entropy_loss(&pred, &b.labels, class_weights)? * b.node_count() as f64;
        nodes += b.node_count();
        total += confusion(&pred.labels(), &b.labels).expect("aligned");
    }
    Ok((if nodes == 0 { 0.0 } else { loss_sum / nodes as f64 }, total))
}

/// Node predictions of `params` for each record, in record order.
pub fn predict_outcomes(
    records: &[DatasetRecord],
    params: &ModelParams<f32>,
    batch_size: usize,
) -> Result<Vec<GraphOutcome>, GcnError> {
    let mut out = Vec::with_capacity(records.len());
    for b in ordered_batches(records, batch_size) {
        let predicted = model_forward(b.features.view(), &b.adjacency, params)?.labels();
        for (k, &i) in b.members.iter().enumerate() {
            let nodes = b.member_nodes(k);
            out.push(GraphOutcome {
                subtype: records[i].subtype.to_string(),
                predicted: predicted[nodes.clone()].to_vec(),
                truth: b.labels[nodes].to_vec(),
            });
        }
    }
    Ok(out)
}

/// Runs `hyper.epochs` passes over `train`. `on_epoch` receives the metric
/// records of each epoch as soon as they are computed.
pub fn train(
    train: &[DatasetRecord],
    validation: &[DatasetRecord],
    hyper: &Hyperparameters,
    initial: ModelParams<f32>,
    mut on_epoch: impl FnMut(&[EpochMetrics]),
) -> Result<TrainOutcome, TrainError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if initial.architecture() != &hyper.architecture {
        return Err(GcnError::ShapeMismatch("initial parameters do not match the architecture".into()).into());
    }
    let val_batches = ordered_batches(validation, hyper.batch_size);
    let mut params = initial;
    let mut adam = Adam::new(&hyper.architecture, hyper.learning_rate);
    let mut best: Option<(usize, f64, ModelParams<f32>)> = None;
    let mut log = Vec::with_capacity(hyper.epochs * 2);

    for epoch in 1..=hyper.epochs {
        let mut train_conf = Confusion::default();
        let mut loss_sum = 0.0;
        let mut nodes = 0usize;
        for batch in make_batches(train, hyper.batch_size, epoch_seed(hyper.seed, epoch))? {
            let g = compute_gradients(&params, batch.features.view(), &batch.adjacency, &batch.labels, hyper.class_weights)
                .map_err(|e| match e {
                    GcnError::NonFiniteValue(_) => TrainError::DivergedLoss { epoch },
                    other => other.into(),
                })?;
            if !g.loss.is_finite() {
                return Err(TrainError::DivergedLoss { epoch });
            }
            adam.step(&mut params, &g.grads)?;
            loss_sum += g.loss * batch.node_count() as f64;
            nodes += batch.node_count();
            train_conf += confusion(&g.prediction.labels(), &batch.labels).expect("aligned");
        }
        let mut records = vec![EpochMetrics::new(epoch, "train", loss_sum / nodes.max(1) as f64, train_conf)];
        let score = if val_batches.is_empty() {
            records[0].f1
        } else {
            let (loss, conf) = evaluate_batches(&val_batches, &params, hyper.class_weights)?;
            records.push(EpochMetrics::new(epoch, "validation", loss, conf));
            records[1].f1
        };
        if best.as_ref().is_none_or(|(_, f1, _)| score > *f1) {
            best = Some((epoch, score, params.clone()));
        }
        on_epoch(&records);
        log.extend(records);
    }
    let (best_epoch, best_f1, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome { final_params: params, best_params, best_epoch, best_f1, log })
}
