//! Labelled training samples for the four policy heads, extracted by
//! replaying canonical logs, plus splits and the on-disk sample format.
//!
//! A sample is taken at each decision point of the followed seat:
//! - discard: every own discard before riichi, including the declaring
//!   discard; label = kind index of the discarded tile.
//! - pon: every opponent discard the seat could pon; label 1 if it did.
//! - chi: every left-neighbour discard the seat could chi; label 0 = pass,
//!   1/2/3 = called tile is the low/middle/high tile of the run.
//! - riichi: every own turn where riichi is legal; label 1 if declared.
//!
//! Subgames in which the seat's net score change (riichi deposits included)
//! is below -1500 are skipped. Decision points where the seat took a
//! different call (say, an open kan where pon was also legal) are not sampled
//! for the task they do not answer.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::features::{encode, read_dump, write_dump, PlaneStack, LAYOUT_TAG};
use crate::records::{replay_visit, Corpus, EventLog};
use crate::rules::{chi_position, Action, ChiPosition, Phase};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Discard,
    Pon,
    Chi,
    Riichi,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Discard, Task::Pon, Task::Chi, Task::Riichi];

    pub fn num_classes(self) -> usize {
        match self {
            Task::Discard => 34,
            Task::Pon | Task::Riichi => 2,
            Task::Chi => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Discard => "discard",
            Task::Pon => "pon",
            Task::Chi => "chi",
            Task::Riichi => "riichi",
        }
    }

    pub fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

/// Where a sample came from. Unique per task.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub game: String,
    pub subgame: u32,
    pub seat: u8,
    pub turn: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: PlaneStack,
    pub label: u8,
    pub task: Task,
    pub key: SampleKey,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Keep the riichi declaration's discard as a discard sample.
    pub include_riichi_discard: bool,
    /// Skip a seat's subgame when its net change is below this.
    pub min_score_change: i32,
    /// Follow one seat per subgame, chosen with this seed, instead of all four.
    pub one_seat: Option<u64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            include_riichi_discard: true,
            min_score_change: -1500,
            one_seat: None,
        }
    }
}

fn chi_label(p: ChiPosition) -> u8 {
    match p {
        ChiPosition::Low => 1,
        ChiPosition::Mid => 2,
        ChiPosition::High => 3,
    }
}

/// Samples for one task and one seat of a log.
pub fn extract(log: &EventLog, task: Task, seat: u8, opts: &ExtractOptions) -> Result<Vec<Sample>, DatasetError> {
    if log.score_changes()[seat as usize] < opts.min_score_change {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let key = |turn: u32| SampleKey {
        game: log.header.game.clone(),
        subgame: log.header.subgame,
        seat,
        turn,
    };
    replay_visit(log, |st, who, action| {
        if who != seat {
            return;
        }
        let label = match (task, st.phase()) {
            (Task::Discard, Phase::AwaitingDiscard) => {
                if st.riichi(seat).is_declared() {
                    return;
                }
                match action {
                    Action::Discard(t) => t.kind().index() as u8,
                    Action::Riichi(t) if opts.include_riichi_discard => t.kind().index() as u8,
                    _ => return,
                }
            }
            (Task::Riichi, Phase::AwaitingDiscard) => {
                if !st.legal_actions(seat).iter().any(|a| matches!(a, Action::Riichi(_))) {
                    return;
                }
                match action {
                    Action::Riichi(_) => 1,
                    Action::Discard(_) => 0,
                    _ => return,
                }
            }
            (Task::Pon, Phase::AwaitingCalls) => {
                if !st.legal_actions(seat).iter().any(|a| matches!(a, Action::Pon(_))) {
                    return;
                }
                match action {
                    Action::Pon(_) => 1,
                    Action::Pass => 0,
                    _ => return,
                }
            }
            (Task::Chi, Phase::AwaitingCalls) => {
                if !st.legal_actions(seat).iter().any(|a| matches!(a, Action::Chi(_))) {
                    return;
                }
                match action {
                    Action::Chi(tiles) => {
                        let (_, called) = st.pending_discard().expect("call window has a discard");
                        chi_label(chi_position(called.kind(), *tiles))
                    }
                    Action::Pass => 0,
                    _ => return,
                }
            }
            _ => return,
        };
        out.push(Sample {
            input: encode(&st.view(seat)),
            label,
            task,
            key: key(st.turn()),
        });
    })?;
    Ok(out)
}

pub fn extract_discard(log: &EventLog, seat: u8) -> Result<Vec<Sample>, DatasetError> {
    extract(log, Task::Discard, seat, &ExtractOptions::default())
}

pub fn extract_pon(log: &EventLog, seat: u8) -> Result<Vec<Sample>, DatasetError> {
    extract(log, Task::Pon, seat, &ExtractOptions::default())
}

pub fn extract_chi(log: &EventLog, seat: u8) -> Result<Vec<Sample>, DatasetError> {
    extract(log, Task::Chi, seat, &ExtractOptions::default())
}

pub fn extract_riichi(log: &EventLog, seat: u8) -> Result<Vec<Sample>, DatasetError> {
    extract(log, Task::Riichi, seat, &ExtractOptions::default())
}

fn followed_seats(log: &EventLog, opts: &ExtractOptions) -> Vec<u8> {
    match opts.one_seat {
        None => vec![0, 1, 2, 3],
        Some(seed) => {
            let h = log.content_hash();
            let mix = u64::from_le_bytes(h[..8].try_into().expect("eight bytes"));
            vec![ChaCha8Rng::seed_from_u64(seed ^ mix).gen_range(0..4)]
        }
    }
}

/// Samples for one task over a whole corpus, in corpus order.
pub fn extract_corpus(corpus: &Corpus, task: Task, opts: &ExtractOptions) -> Result<Vec<Sample>, DatasetError> {
    let mut out = Vec::new();
    for log in &corpus.logs {
        for seat in followed_seats(log, opts) {
            out.extend(extract(log, task, seat, opts)?);
        }
    }
    Ok(out)
}

/// Label counts, for class-balance telemetry.
pub fn label_histogram(samples: &[Sample]) -> Vec<usize> {
    let n = samples.first().map_or(0, |s| s.task.num_classes());
    let mut h = vec![0; n];
    for s in samples {
        h[s.label as usize] += 1;
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Source tag the test corpus must carry; the training corpus must not.
    pub test_source: String,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_source: &str, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: 0.9,
            val_fraction: 0.1,
            test_source: test_source.into(),
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Shuffle `samples` with the seed and carve validation from them.
pub fn split_train_val(mut samples: Vec<Sample>, spec: &SplitSpec) -> Result<(Vec<Sample>, Vec<Sample>), DatasetError> {
    let (t, v) = (spec.train_fraction, spec.val_fraction);
    if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&v) || (t + v - 1.0).abs() > 1e-9 {
        return Err(DatasetError::Fractions(t, v));
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_val = (samples.len() as f64 * v).round() as usize;
    let val = samples.split_off(samples.len() - n_val);
    Ok((samples, val))
}

/// Keep one random sample per subgame.
pub fn one_per_subgame(samples: Vec<Sample>, seed: u64) -> Vec<Sample> {
    let mut groups: HashMap<(String, u32), Vec<Sample>> = HashMap::new();
    for s in samples {
        groups.entry((s.key.game.clone(), s.key.subgame)).or_default().push(s);
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.into_iter()
        .map(|k| {
            let mut g = groups.remove(&k).expect("key present");
            let i = rng.gen_range(0..g.len());
            g.swap_remove(i)
        })
        .collect()
}

/// Train/validation from `train`, test from `test` with at most one sample
/// per subgame.
pub fn build_splits(train: &Corpus, test: &Corpus, task: Task, opts: &ExtractOptions, spec: &SplitSpec) -> Result<Splits, DatasetError> {
    let src = |c: &Corpus| c.provenance.as_ref().map(|p| p.source.clone()).unwrap_or_default();
    let (train_src, test_src) = (src(train), src(test));
    if train_src == test_src || train_src == spec.test_source {
        return Err(DatasetError::OverlappingSources(train_src));
    }
    if test_src != spec.test_source {
        return Err(DatasetError::OverlappingSources(test_src));
    }
    let (tr, val) = split_train_val(extract_corpus(train, task, opts)?, spec)?;
    let test = one_per_subgame(extract_corpus(test, task, opts)?, spec.seed);
    Ok(Splits { train: tr, val, test })
}

// Sample files: `<name>.planes` is a feature dump; `<name>.labels.jsonl`
// has a header line then one line per sample in the same order.

pub const LABELS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LabelsHeader {
    v: u32,
    task: Task,
    layout: String,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct LabelLine {
    label: u8,
    #[serde(flatten)]
    key: SampleKey,
}

/// Serialize samples of one task as (planes bytes, labels bytes).
pub fn encode_samples(task: Task, samples: &[Sample]) -> (Vec<u8>, Vec<u8>) {
    let stacks: Vec<PlaneStack> = samples.iter().map(|s| s.input.clone()).collect();
    let mut labels = Vec::new();
    let header = LabelsHeader {
        v: LABELS_VERSION,
        task,
        layout: LAYOUT_TAG.into(),
        count: samples.len(),
    };
    serde_json::to_writer(&mut labels, &header).expect("header serializes");
    labels.push(b'\n');
    for s in samples {
        serde_json::to_writer(
            &mut labels,
            &LabelLine {
                label: s.label,
                key: s.key.clone(),
            },
        )
        .expect("label serializes");
        labels.push(b'\n');
    }
    (write_dump(&stacks), labels)
}

pub fn decode_samples(planes: &[u8], labels: &[u8]) -> Result<(Task, Vec<Sample>), DatasetError> {
    let stacks = read_dump(planes)?;
    let text = std::str::from_utf8(labels).map_err(|_| DatasetError::Labels {
        line: 0,
        msg: "invalid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let bad = |line: usize, msg: String| DatasetError::Labels { line: line + 1, msg };
    let (i, first) = lines.next().ok_or_else(|| bad(0, "missing header".into()))?;
    let header: LabelsHeader = serde_json::from_str(first).map_err(|e| bad(i, e.to_string()))?;
    if header.v != LABELS_VERSION {
        return Err(bad(i, format!("unsupported labels version {}", header.v)));
    }
    if header.layout != LAYOUT_TAG {
        return Err(bad(i, format!("feature layout {:?} does not match {LAYOUT_TAG:?}", header.layout)));
    }
    let mut out = Vec::with_capacity(stacks.len());
    let mut stacks = stacks.into_iter();
    let planes = stacks.len();
    for (i, line) in lines {
        let l: LabelLine = serde_json::from_str(line).map_err(|e| bad(i, e.to_string()))?;
        if l.label as usize >= header.task.num_classes() {
            return Err(bad(i, format!("label {} out of range for {}", l.label, header.task.name())));
        }
        let Some(input) = stacks.next() else {
            return Err(DatasetError::Mismatch {
                planes,
                labels: out.len() + 1,
            });
        };
        out.push(Sample {
            input,
            label: l.label,
            task: header.task,
            key: l.key,
        });
    }
    if out.len() != planes || out.len() != header.count {
        return Err(DatasetError::Mismatch { planes, labels: out.len() });
    }
    Ok((header.task, out))
}

pub fn save_samples(dir: &Path, name: &str, task: Task, samples: &[Sample]) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir)?;
    let (planes, labels) = encode_samples(task, samples);
    std::fs::write(dir.join(format!("{name}.planes")), planes)?;
    std::fs::write(dir.join(format!("{name}.labels.jsonl")), labels)?;
    Ok(())
}

pub fn load_samples(dir: &Path, name: &str) -> Result<(Task, Vec<Sample>), DatasetError> {
    let planes = std::fs::read(dir.join(format!("{name}.planes")))?;
    let labels = std::fs::read(dir.join(format!("{name}.labels.jsonl")))?;
    decode_samples(&planes, &labels)
}
