//! The four policy heads: training, evaluation metrics and prediction.

use std::path::Path;

use houou_core::dataset::{Sample, Task};
use houou_core::features::{PlaneStack, HAND, LAYOUT_TAG, SAMPLE_CELLS};
use houou_nn::model::Mode;
use houou_nn::{train_step, Model, ModelSpec, OptimState, Optimizer, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, PolicyError};

/// Network input as (planes, rows, columns).
pub const INPUT: [usize; 3] = [86, 34, 4];
pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Three 100-filter 5×2 VALID blocks, dense 300.
    Paper,
    /// Two 32-filter blocks, dense 64.
    Small,
}

impl Preset {
    pub fn spec(self, classes: usize) -> ModelSpec {
        match self {
            Preset::Paper => ModelSpec::paper(INPUT, classes),
            Preset::Small => ModelSpec::small(INPUT, classes),
        }
    }

    pub fn from_name(s: &str) -> Option<Preset> {
        match s {
            "paper" => Some(Preset::Paper),
            "small" => Some(Preset::Small),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub preset: Preset,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Per-class loss weights; off by default (plain cross-entropy).
    pub class_weights: Option<Vec<f64>>,
    /// Stop as soon as training agreement reaches this.
    pub stop_at_train_agreement: Option<f64>,
    /// Measure training agreement on at most this many samples.
    pub train_eval_limit: Option<usize>,
    /// Free-form corpus identifier kept in the training record.
    pub corpus: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: Preset::Paper,
            epochs: 20,
            batch_size: 256,
            optimizer: Optimizer::default(),
            seed: 0,
            class_weights: None,
            stop_at_train_agreement: None,
            train_eval_limit: None,
            corpus: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_agreement: f64,
    pub val_loss: Option<f64>,
    pub val_agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config: TrainConfig,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs_run: usize,
    /// Epoch whose weights were kept (best validation agreement, or the last).
    pub kept_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct PolicyHead {
    pub task: Task,
    pub model: Model<f32>,
    pub record: Option<TrainRecord>,
}

impl PolicyHead {
    /// Freshly initialised, untrained head.
    pub fn untrained(task: Task, preset: Preset, seed: u64) -> PolicyHead {
        let mut model = Model::new(preset.spec(task.num_classes()), seed).expect("presets are well formed");
        model.meta.layout = LAYOUT_TAG.to_string();
        model.meta.task = task.name().to_string();
        PolicyHead { task, model, record: None }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        houou_nn::io::to_bytes(&self.model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PolicyHead, PolicyError> {
        let model: Model<f32> = houou_nn::io::from_bytes(bytes, Some(LAYOUT_TAG))?;
        let task = Task::from_name(&model.meta.task).ok_or_else(|| PolicyError::Task {
            expected: "discard|pon|chi|riichi".into(),
            found: model.meta.task.clone(),
        })?;
        if model.classes() != task.num_classes() {
            return Err(PolicyError::Width {
                task: task.name().into(),
                expected: task.num_classes(),
                found: model.classes(),
            });
        }
        let record = serde_json::from_value(model.meta.train.clone()).ok();
        Ok(PolicyHead { task, model, record })
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PolicyHead, PolicyError> {
        PolicyHead::from_bytes(&std::fs::read(path)?)
    }
}

/// Stack plane encodings into an (N, 86, 34, 4) batch.
pub fn batch_tensor(stacks: &[&PlaneStack]) -> Tensor<f32> {
    let mut data = vec![0.0f32; stacks.len() * SAMPLE_CELLS];
    for (s, chunk) in stacks.iter().zip(data.chunks_exact_mut(SAMPLE_CELLS)) {
        s.write_f32(chunk);
    }
    Tensor::new(vec![stacks.len(), INPUT[0], INPUT[1], INPUT[2]], data)
}

/// Class probabilities for each stack, inference mode, in batches.
pub fn predict_stacks(model: &Model<f32>, stacks: &[&PlaneStack]) -> Result<Vec<Vec<f32>>, PolicyError> {
    let mut out = Vec::with_capacity(stacks.len());
    for chunk in stacks.chunks(EVAL_BATCH) {
        let p = model.predict_proba(&batch_tensor(chunk))?;
        out.extend((0..chunk.len()).map(|i| p.row(i).to_vec()));
    }
    Ok(out)
}

pub fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f32>,
    pub argmax: usize,
}

pub fn predict(head: &PolicyHead, stack: &PlaneStack) -> Result<Prediction, PolicyError> {
    let probs = predict_stacks(&head.model, &[stack])?.remove(0);
    let argmax = argmax(&probs);
    Ok(Prediction { probs, argmax })
}

pub fn predict_batch(head: &PolicyHead, stacks: &[&PlaneStack]) -> Result<Vec<Prediction>, PolicyError> {
    Ok(predict_stacks(&head.model, stacks)?
        .into_iter()
        .map(|probs| {
            let argmax = argmax(&probs);
            Prediction { probs, argmax }
        })
        .collect())
}

fn check_task(task: Task, samples: &[Sample]) -> Result<(), PolicyError> {
    match samples.iter().find(|s| s.task != task) {
        Some(s) => Err(PolicyError::Task {
            expected: task.name().into(),
            found: s.task.name().into(),
        }),
        None => Ok(()),
    }
}

/// (mean loss, agreement) in inference mode.
fn loss_and_agreement(model: &Model<f32>, samples: &[&Sample]) -> Result<(f64, f64), PolicyError> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut loss, mut hits) = (0.0, 0usize);
    for chunk in samples.chunks(EVAL_BATCH) {
        let stacks: Vec<&PlaneStack> = chunk.iter().map(|s| &s.input).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label as usize).collect();
        let x = batch_tensor(&stacks);
        let logits = model.forward(&x, Mode::Infer)?;
        hits += logits.argmax_rows().iter().zip(&labels).filter(|(a, b)| a == b).count();
        let p = houou_nn::tensor::softmax_rows(logits.data(), model.classes());
        for (i, &l) in labels.iter().enumerate() {
            loss -= (p[i * model.classes() + l].max(f32::MIN_POSITIVE) as f64).ln();
        }
    }
    Ok((loss / samples.len() as f64, hits as f64 / samples.len() as f64))
}

/// Train a head with minibatch steps over shuffled epochs. Returns the head
/// holding the weights of the best validation epoch (the last epoch when
/// there is no validation set) and the per-epoch curves.
pub fn train_head(task: Task, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(PolicyHead, Vec<EpochRecord>), PolicyError> {
    check_task(task, train)?;
    check_task(task, val)?;
    if train.is_empty() {
        return Err(PolicyError::NoSamples);
    }
    let mut head = PolicyHead::untrained(task, cfg.preset, cfg.seed);
    let mut optim = OptimState::new(cfg.optimizer, &head.model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_7EA1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let train_eval: Vec<&Sample> = train.iter().take(cfg.train_eval_limit.unwrap_or(train.len())).collect();
    let val_refs: Vec<&Sample> = val.iter().collect();
    let weights = cfg.class_weights.as_deref();
    let mut curves = Vec::new();
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let stacks: Vec<&PlaneStack> = chunk.iter().map(|&i| &train[i].input).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train[i].label as usize).collect();
            let x = batch_tensor(&stacks);
            step += 1;
            let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ step;
            let loss = train_step(&mut head.model, &mut optim, &x, &labels, seed, weights)?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let (_, train_agreement) = loss_and_agreement(&head.model, &train_eval)?;
        let (val_loss, val_agreement) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = loss_and_agreement(&head.model, &val_refs)?;
            (Some(l), Some(a))
        };
        curves.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_agreement,
            val_loss,
            val_agreement,
        });
        if let Some(a) = val_agreement {
            if best.as_ref().is_none_or(|b| a > b.0) {
                best = Some((a, epoch, head.model.clone()));
            }
        }
        if cfg.stop_at_train_agreement.is_some_and(|t| train_agreement >= t) {
            break;
        }
    }
    let epochs_run = curves.len();
    let kept_epoch = match best {
        Some((_, e, m)) => {
            head.model = m;
            e
        }
        None => epochs_run,
    };
    let record = TrainRecord {
        config: cfg.clone(),
        train_samples: train.len(),
        val_samples: val.len(),
        epochs_run,
        kept_epoch,
    };
    head.model.meta.train = serde_json::to_value(&record).expect("record serializes");
    head.record = Some(record);
    Ok((head, curves))
}

/// Training curves as CSV.
pub fn curves_csv(curves: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut s = String::from("epoch,train_loss,train_agreement,val_loss,val_agreement\n");
    for c in curves {
        s.push_str(&format!(
            "{},{:.6},{:.6},{},{}\n",
            c.epoch,
            c.train_loss,
            c.train_agreement,
            opt(c.val_loss),
            opt(c.val_agreement)
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// None when the class was never predicted.
    pub precision: Option<f64>,
    /// None when the class never occurs.
    pub recall: Option<f64>,
}

/// Metrics of a confusion matrix with rows = truth, columns = prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Binary matrices only: the "action taken" class.
    pub positive: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Precision and recall if the matrix were read with rows = prediction.
    pub transposed_precision: Option<f64>,
    pub transposed_recall: Option<f64>,
    /// Call-type matrices (class 0 = pass): among rows with a call, the
    /// share of call predictions that pick the right call.
    pub call_type_accuracy: Option<f64>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn harmonic(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    }
}

/// Accuracy, per-class precision/recall, and for 2×2 matrices precision,
/// recall and f1 of `positive`. Undefined ratios are `None`, never 0.
pub fn metrics_from_matrix(m: &[Vec<u64>], positive: usize) -> Result<Metrics, MetricsError> {
    let k = m.len();
    if k == 0 {
        return Err(MetricsError::Empty);
    }
    for (row, r) in m.iter().enumerate() {
        if r.len() != k {
            return Err(MetricsError::NotSquare { row, len: r.len(), want: k });
        }
    }
    if positive >= k {
        return Err(MetricsError::Positive { positive, classes: k });
    }
    let total: u64 = m.iter().flatten().sum();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let correct: u64 = (0..k).map(|i| m[i][i]).sum();
    let row = |i: usize| m[i].iter().sum::<u64>();
    let col = |j: usize| m.iter().map(|r| r[j]).sum::<u64>();
    let per_class = (0..k)
        .map(|i| ClassMetrics {
            precision: ratio(m[i][i], col(i)),
            recall: ratio(m[i][i], row(i)),
        })
        .collect::<Vec<_>>();
    let binary = k == 2;
    let (precision, recall) = if binary {
        (per_class[positive].precision, per_class[positive].recall)
    } else {
        (None, None)
    };
    let (tp, tr) = if binary { (recall, precision) } else { (None, None) };
    let call_type_accuracy = (k > 2).then(|| {
        let hit: u64 = (1..k).map(|i| m[i][i]).sum();
        let all: u64 = (1..k).flat_map(|i| (1..k).map(move |j| (i, j))).map(|(i, j)| m[i][j]).sum();
        ratio(hit, all)
    });
    Ok(Metrics {
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        per_class,
        positive: binary.then_some(positive),
        precision,
        recall,
        f1: harmonic(precision, recall),
        transposed_precision: tp,
        transposed_recall: tr,
        call_type_accuracy: call_type_accuracy.flatten(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub count: usize,
    /// rows = truth, columns = prediction.
    pub matrix: Vec<Vec<u64>>,
    pub metrics: Metrics,
    /// Discard only: share of argmax kinds present in the hand (no masking).
    pub legality_rate: Option<f64>,
}

impl EvalReport {
    pub fn agreement(&self) -> f64 {
        self.metrics.accuracy
    }

    /// One JSON object per line: the summary, then one line per class.
    pub fn metrics_lines(&self) -> String {
        let mut s = serde_json::json!({
            "task": self.task,
            "count": self.count,
            "accuracy": self.metrics.accuracy,
            "precision": self.metrics.precision,
            "recall": self.metrics.recall,
            "f1": self.metrics.f1,
            "orientation": "rows=truth,cols=prediction",
            "transposed_precision": self.metrics.transposed_precision,
            "transposed_recall": self.metrics.transposed_recall,
            "call_type_accuracy": self.metrics.call_type_accuracy,
            "legality_rate": self.legality_rate,
        })
        .to_string();
        s.push('\n');
        for (i, c) in self.metrics.per_class.iter().enumerate() {
            s.push_str(&serde_json::json!({"class": i, "precision": c.precision, "recall": c.recall, "support": self.matrix[i].iter().sum::<u64>()}).to_string());
            s.push('\n');
        }
        s
    }

    /// Human-readable summary with the confusion matrix.
    pub fn table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
        let mut s = format!("task {} — {} samples\naccuracy {}\n", self.task.name(), self.count, pct(Some(self.metrics.accuracy)));
        if self.metrics.positive.is_some() {
            s.push_str(&format!(
                "precision {}  recall {}  f1 {}\n",
                pct(self.metrics.precision),
                pct(self.metrics.recall),
                self.metrics.f1.map_or("n/a".into(), |f| format!("{f:.3}"))
            ));
        }
        if let Some(c) = self.metrics.call_type_accuracy {
            s.push_str(&format!("call-type accuracy {}\n", pct(Some(c))));
        }
        if let Some(l) = self.legality_rate {
            s.push_str(&format!("legality rate {}\n", pct(Some(l))));
        }
        if self.matrix.len() <= 4 {
            s.push_str("truth\\pred");
            for j in 0..self.matrix.len() {
                s.push_str(&format!("{j:>9}"));
            }
            s.push('\n');
            for (i, r) in self.matrix.iter().enumerate() {
                s.push_str(&format!("{i:>10}"));
                for v in r {
                    s.push_str(&format!("{v:>9}"));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Confusion matrix and metrics of `head` on `samples` (inference mode,
/// no legality masking).
pub fn evaluate(head: &PolicyHead, samples: &[Sample]) -> Result<EvalReport, PolicyError> {
    check_task(head.task, samples)?;
    let k = head.task.num_classes();
    let mut matrix = vec![vec![0u64; k]; k];
    let stacks: Vec<&PlaneStack> = samples.iter().map(|s| &s.input).collect();
    let probs = predict_stacks(&head.model, &stacks)?;
    let mut legal = 0usize;
    for (s, p) in samples.iter().zip(&probs) {
        let a = argmax(p);
        matrix[s.label as usize][a] += 1;
        if s.input.row_count(HAND, a) > 0 {
            legal += 1;
        }
    }
    let positive = if k == 2 { 1 } else { 0 };
    let metrics = if samples.is_empty() {
        Metrics {
            total: 0,
            correct: 0,
            accuracy: 0.0,
            per_class: vec![
                ClassMetrics {
                    precision: None,
                    recall: None
                };
                k
            ],
            positive: None,
            precision: None,
            recall: None,
            f1: None,
            transposed_precision: None,
            transposed_recall: None,
            call_type_accuracy: None,
        }
    } else {
        metrics_from_matrix(&matrix, positive)?
    };
    let legality_rate = (head.task == Task::Discard && !samples.is_empty()).then(|| legal as f64 / samples.len() as f64);
    Ok(EvalReport {
        task: head.task,
        count: samples.len(),
        matrix,
        metrics,
        legality_rate,
    })
}
