//! `houou`: ingest, extract, train, eval, simulate, replay-check, serve,
//! encode-dump. Failures print one JSON line on stderr and exit 1; usage
//! errors exit 2.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use houou_core::dataset::{extract_corpus, label_histogram, load_samples, one_per_subgame, save_samples, split_train_val, ExtractOptions, SplitSpec, Task};
use houou_core::features::{encode, write_dump};
use houou_core::records::tenhou::ingest_tenhou;
use houou_core::records::{emit_canonical, parse_canonical, parse_canonical_unchecked, replay_visit, Corpus, Provenance};
use houou_core::rules::Action;
use houou_play::policies::curves_csv;
use houou_play::*;
use houou_server::{http, Service};
use houou_nn::Optimizer;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "houou", version, about = "Riichi mahjong AI workbench")]
struct Cli {
    /// TOML file with defaults for `seed`, `models` and `listen`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert Tenhou XML (plain or gzip) or canonical logs into a checked canonical corpus.
    Ingest(IngestArgs),
    /// Extract training samples for one task.
    Extract(ExtractArgs),
    /// Train one policy head.
    Train(TrainArgs),
    /// Evaluate a head on a sample set.
    Eval(EvalArgs),
    /// Play full games between agents.
    Simulate(SimulateArgs),
    /// Replay every log of a corpus through the rules engine.
    ReplayCheck(ReplayCheckArgs),
    /// Run the play service.
    Serve(ServeArgs),
    /// Encode every decision point of a corpus into a packed plane dump.
    EncodeDump(EncodeDumpArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Files or directories.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "tenhou", value_parser = ["tenhou", "canonical"])]
    adapter: String,
    /// Provenance source tag written into the corpus.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    year: Option<u32>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    corpus: PathBuf,
    /// Output prefix: writes `<out>.planes` and `<out>.labels.jsonl`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Follow one seat per subgame instead of all four.
    #[arg(long)]
    one_seat: bool,
    #[arg(long, default_value_t = -1500, allow_hyphen_values = true)]
    min_score_change: i32,
    /// Do not sample the riichi declaration's discard.
    #[arg(long)]
    no_riichi_discard: bool,
    /// Also split: writes `<out>-train` and `<out>-val`.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Keep at most one sample per subgame (test sets).
    #[arg(long)]
    one_per_subgame: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: String,
    /// Sample prefix written by `extract`.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "paper", value_parser = ["paper", "small"])]
    preset: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value = "adam", value_parser = ["adam", "sgd"])]
    optimizer: String,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight classes by inverse frequency.
    #[arg(long)]
    balanced: bool,
    #[arg(long)]
    stop_at: Option<f64>,
    /// Learning curves as CSV.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    /// Keep one sample per subgame, chosen with this seed, before evaluating.
    #[arg(long)]
    one_per_subgame: Option<u64>,
    /// Write the metrics as JSON lines here.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Four agents, comma separated: random, greedy, network.
    #[arg(long, value_delimiter = ',', default_value = "network,random,random,random")]
    agents: Vec<String>,
    #[arg(long, default_value_t = 4)]
    games: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory with discard/pon/chi/riichi `.honn` heads.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Transcripts as a canonical corpus.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-agent metrics as JSON lines.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    no_duplicate: bool,
    #[arg(long)]
    check_invariants: bool,
    /// Network agents play the raw argmax discard (legality telemetry).
    #[arg(long)]
    unmasked: bool,
}

#[derive(Args)]
struct ReplayCheckArgs {
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    listen: Option<SocketAddr>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EncodeDumpArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    seed: Option<u64>,
    models: Option<PathBuf>,
    listen: Option<SocketAddr>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn task(name: &str) -> Result<Task> {
    Task::from_name(name).ok_or_else(|| anyhow!("unknown task {name:?} (discard, pon, chi, riichi)"))
}

fn prefix(p: &Path) -> (PathBuf, String) {
    let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (dir, name)
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_canonical(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn files_under(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut fs: Vec<PathBuf> = std::fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
            fs.sort();
            out.extend(fs);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut corpus = Corpus {
        provenance: a.source.map(|source| Provenance { source, year: a.year, filter: None }),
        logs: Vec::new(),
    };
    let mut quarantined = 0;
    for f in files_under(&a.input)? {
        let bytes = std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?;
        let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if a.adapter == "tenhou" {
            let r = ingest_tenhou(&bytes, &id);
            for q in &r.quarantined {
                println!("{}", serde_json::json!({"quarantined": q.game, "subgame": q.subgame, "reason": q.reason}));
            }
            quarantined += r.quarantined.len();
            corpus.logs.extend(r.corpus.logs);
        } else {
            let c = parse_canonical_unchecked(&bytes).with_context(|| format!("parsing {}", f.display()))?;
            for log in c.logs {
                match replay_check(&log) {
                    Ok(()) => corpus.logs.push(log),
                    Err(e) => {
                        println!("{}", serde_json::json!({"quarantined": log.header.game, "subgame": log.header.subgame, "reason": e.to_string()}));
                        quarantined += 1;
                    }
                }
            }
        }
    }
    let dropped = corpus.dedup();
    std::fs::write(&a.out, emit_canonical(&corpus)).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", serde_json::json!({"logs": corpus.logs.len(), "quarantined": quarantined, "duplicates_dropped": dropped}));
    Ok(())
}

fn extract(a: ExtractArgs, seed: u64) -> Result<()> {
    let t = task(&a.task)?;
    let corpus = read_corpus(&a.corpus)?;
    let opts = ExtractOptions {
        include_riichi_discard: !a.no_riichi_discard,
        min_score_change: a.min_score_change,
        one_seat: a.one_seat.then_some(seed),
    };
    let mut samples = extract_corpus(&corpus, t, &opts)?;
    if a.one_per_subgame {
        samples = one_per_subgame(samples, seed);
    }
    let (dir, name) = prefix(&a.out);
    let hist = label_histogram(&samples);
    match a.val_fraction {
        None => {
            save_samples(&dir, &name, t, &samples)?;
            println!("{}", serde_json::json!({"task": t.name(), "samples": samples.len(), "labels": hist}));
        }
        Some(v) => {
            let spec = SplitSpec {
                train_fraction: 1.0 - v,
                val_fraction: v,
                test_source: String::new(),
                seed,
            };
            let (tr, val) = split_train_val(samples, &spec)?;
            save_samples(&dir, &format!("{name}-train"), t, &tr)?;
            save_samples(&dir, &format!("{name}-val"), t, &val)?;
            println!("{}", serde_json::json!({"task": t.name(), "train": tr.len(), "val": val.len(), "labels": hist}));
        }
    }
    Ok(())
}

fn samples_at(p: &Path, want: Task) -> Result<Vec<houou_core::dataset::Sample>> {
    let (dir, name) = prefix(p);
    let (t, s) = load_samples(&dir, &name).with_context(|| format!("loading samples {}", p.display()))?;
    if t != want {
        bail!("{} holds {} samples, expected {}", p.display(), t.name(), want.name());
    }
    Ok(s)
}

fn train(a: TrainArgs, seed: u64) -> Result<()> {
    let t = task(&a.task)?;
    let tr = samples_at(&a.train, t)?;
    let val = match &a.val {
        Some(p) => samples_at(p, t)?,
        None => Vec::new(),
    };
    let optimizer = match (a.optimizer.as_str(), a.lr) {
        ("sgd", lr) => Optimizer::Sgd {
            lr: lr.unwrap_or(0.01),
            momentum: 0.9,
        },
        (_, Some(lr)) => match Optimizer::default() {
            Optimizer::Adam { beta1, beta2, epsilon, .. } => Optimizer::Adam { lr, beta1, beta2, epsilon },
            o => o,
        },
        _ => Optimizer::default(),
    };
    let class_weights = a.balanced.then(|| {
        let h = label_histogram(&tr);
        let n = tr.len() as f64 / h.len() as f64;
        h.iter().map(|&c| if c > 0 { n / c as f64 } else { 0.0 }).collect()
    });
    let cfg = TrainConfig {
        preset: Preset::from_name(&a.preset).expect("validated by clap"),
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer,
        seed,
        class_weights,
        stop_at_train_agreement: a.stop_at,
        corpus: a.train.display().to_string(),
        ..TrainConfig::default()
    };
    let (head, curves) = train_head(t, &tr, &val, &cfg)?;
    for c in &curves {
        println!("{}", serde_json::to_string(c)?);
    }
    if let Some(p) = &a.curves {
        std::fs::write(p, curves_csv(&curves))?;
    }
    head.save(&a.out)?;
    println!("{}", serde_json::json!({"model": a.out, "task": t.name(), "parameters": head.model.num_params()}));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let head = PolicyHead::load(&a.model)?;
    let mut s = samples_at(&a.samples, head.task)?;
    if let Some(seed) = a.one_per_subgame {
        s = one_per_subgame(s, seed);
    }
    let r = evaluate(&head, &s)?;
    print!("{}", r.table());
    if let Some(p) = &a.metrics_out {
        std::fs::write(p, r.metrics_lines())?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64, models: Option<PathBuf>) -> Result<()> {
    if a.agents.len() != 4 {
        bail!("--agents takes exactly four names, got {}", a.agents.len());
    }
    let names: [&str; 4] = std::array::from_fn(|i| a.agents[i].as_str());
    for n in names {
        if !["random", "greedy", "network"].contains(&n) {
            bail!("unknown agent {n:?} (random, greedy, network)");
        }
    }
    let heads = if names.contains(&"network") {
        let dir = models.ok_or_else(|| anyhow!("network agents need --models"))?;
        Some(Arc::new(PolicySet::load(&HeadPaths::in_dir(&dir)).with_context(|| format!("loading the model set from {}", dir.display()))?))
    } else {
        None
    };
    let mut spec = MatchSpec::new(names, a.games, seed);
    spec.duplicate_seating = !a.no_duplicate;
    spec.check_invariants = a.check_invariants;
    let mask = !a.unmasked;
    let report = run_match(&spec, |k, s| -> Box<dyn Player> {
        match names[k] {
            "random" => Box::new(RandomLegal::new(s)),
            "greedy" => Box::new(GreedyShanten::new(s)),
            _ => Box::new(Agent::new(
                heads.clone().expect("loaded above"),
                AgentConfig {
                    mask_discards: mask,
                    seed: s,
                    ..AgentConfig::default()
                },
            )),
        }
    });
    print!("{}", report.summary());
    if let Some(p) = &a.metrics {
        std::fs::write(p, report.metrics_lines())?;
    }
    if let Some(p) = &a.out {
        let corpus = Corpus {
            provenance: Some(Provenance {
                source: format!("selfplay-{seed}"),
                year: None,
                filter: None,
            }),
            logs: report.games.iter().flat_map(|g| g.logs.clone()).collect(),
        };
        std::fs::write(p, emit_canonical(&corpus))?;
    }
    Ok(())
}

fn replay_check_cmd(a: ReplayCheckArgs) -> Result<()> {
    let bytes = std::fs::read(&a.corpus).with_context(|| format!("reading {}", a.corpus.display()))?;
    let corpus = parse_canonical_unchecked(&bytes)?;
    let mut bad = 0;
    for log in &corpus.logs {
        if let Err(e) = replay_check(log) {
            bad += 1;
            println!("{}", serde_json::json!({"game": log.header.game, "subgame": log.header.subgame, "event": e.event, "seat": e.seat, "turn": e.turn, "rule": e.rule}));
        }
    }
    println!("{}", serde_json::json!({"logs": corpus.logs.len(), "violations": bad}));
    if bad > 0 {
        bail!("{bad} of {} logs fail replay", corpus.logs.len());
    }
    Ok(())
}

fn encode_dump(a: EncodeDumpArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let mut stacks = Vec::new();
    for log in &corpus.logs {
        replay_visit(log, |state, seat, action| {
            if *action != Action::Draw {
                stacks.push(encode(&state.view(seat)));
            }
        })?;
    }
    std::fs::write(&a.out, write_dump(&stacks))?;
    println!("{}", serde_json::json!({"logs": corpus.logs.len(), "samples": stacks.len()}));
    Ok(())
}

fn serve(a: ServeArgs, seed: u64, models: Option<PathBuf>, listen: Option<SocketAddr>) -> Result<()> {
    let listen = a.listen.or(listen).unwrap_or_else(|| "127.0.0.1:8642".parse().expect("valid address"));
    let models = a.models.or(models);
    let service = Service::new(models.as_deref(), seed).with_context(|| format!("loading the model set from {}", models.as_deref().unwrap_or(Path::new("")).display()))?;
    let service = Arc::new(service);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!(%listen, "serving");
        println!("{}", serde_json::json!({"listen": listener.local_addr()?.to_string()}));
        axum::serve(listener, http::router(service)).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed_of = |s: Option<u64>| {
        let seed = s.or(cfg.seed).unwrap_or(0);
        eprintln!("seed={seed}");
        seed
    };
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Extract(a) => {
            let s = seed_of(a.seed);
            extract(a, s)
        }
        Command::Train(a) => {
            let s = seed_of(a.seed);
            train(a, s)
        }
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => {
            let s = seed_of(a.seed);
            let m = a.models.clone().or(cfg.models.clone());
            simulate(a, s, m)
        }
        Command::ReplayCheck(a) => replay_check_cmd(a),
        Command::Serve(a) => {
            let s = seed_of(a.seed);
            serve(a, s, cfg.models.clone(), cfg.listen)
        }
        Command::EncodeDump(a) => encode_dump(a),
    }
}

fn main() {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Extract(_) => "extract",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Simulate(_) => "simulate",
        Command::ReplayCheck(_) => "replay-check",
        Command::Serve(_) => "serve",
        Command::EncodeDump(_) => "encode-dump",
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", serde_json::json!({"error": format!("{e:#}"), "command": name}));
        std::process::exit(1);
    }
}
