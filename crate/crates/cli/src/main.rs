//! `planlink` — batch front end: dataset generation, training, ablations
//! and the diagnostic analyses. Every command writes into a run directory
//! (`--out`) holding the resolved config, a git-describe string and a seed
//! manifest next to its CSV reports.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use planlink::analysis::{correlation_experiment, mean_std, CorrelationPoint, ProbeConfig, ProbeSource};
use planlink::synth::{
    dataset_stats, generate_dataset, load_dataset, parse_key_values, serialize_dataset, DatasetSplit, GameConfig,
    GameSession, ToMKind,
};
use planlink::tasks::{
    ablation_matrix, ablation_overall_checks, ablation_records, correlation_points, correlation_points_with,
    dataset_num_tools, instance_records, model_seed, parse_tom_kinds, published_overall_checks, read_records,
    report_from_records, run_parallel, subset_label, tom_f1_from_records, tom_instance_records,
    tom_instance_scores, train_cpa_on, train_tom_on, train_tom_stage, write_ablation_table, write_records,
    AblationMode, AblationReport, Column, CpaProbeModel, CpaSetup, CpaTask, FeatureBanks, FitOptions,
    InstanceRecord, MetricRecord, ProbeModels, Sampling, TomSetup, TomStage, TrainConfig,
};
use serde::Serialize;

/// Exit code for usage errors (bad flags, unknown config keys, conflicting
/// options). Runtime and data errors exit with 1.
const USAGE: u8 = 2;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<planlink::Error> for Failure {
    fn from(e: planlink::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "planlink", version, about = "Collaborative plan acquisition experiments on synthetic crafting games")]
struct Cli {
    /// Worker threads for parallel runs (default: $PLANLINK_THREADS, else
    /// the number of logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (JSON lines) and its statistics.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of sessions.
        #[arg(long)]
        sessions: Option<usize>,
        /// Game seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train question-answering (ToM) models on one question type.
    TrainTom {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// status | knowledge | intention
        #[arg(long)]
        task: String,
        /// Observation streams, e.g. `M`, `M,D`, `M,D,V`.
        #[arg(long)]
        modalities: Option<String>,
    },
    /// Train missing-knowledge (CPA) models.
    TrainCpa {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// omk | pmk
        #[arg(long)]
        task: String,
        /// Learned ToM features to feed, e.g. `s,k,i`.
        #[arg(long)]
        tom_features: Option<String>,
        /// candidate | naive
        #[arg(long)]
        sampling: Option<String>,
        /// Feed ground-truth question/answer one-hots instead of learned
        /// features (all kinds when given without a value).
        #[arg(long, num_args = 0..=1, default_missing_value = "s,k,i")]
        tom_ground_truth: Option<String>,
        #[command(flatten)]
        modalities: ModalitiesArg,
    },
    /// Run the 8-subset feature ablation with paired t-tests.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Inject ground-truth question/answer one-hots instead of learned
        /// ToM features.
        #[arg(long)]
        tom_ground_truth: bool,
        #[command(flatten)]
        modalities: ModalitiesArg,
    },
    /// Logistic-regression probes of ToM, CPA-hidden and noise features.
    Probe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        modalities: ModalitiesArg,
    },
    /// Correlate per-instance ToM F1 with the CPA gain from ToM features.
    Correlate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        /// Reuse the reports of a learned-feature `ablate` run directory
        /// instead of training.
        #[arg(long)]
        from: Option<PathBuf>,
        #[command(flatten)]
        modalities: ModalitiesArg,
    },
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` config file (`#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; every output path is relative to it.
    #[arg(long)]
    out: PathBuf,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated training seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    plan_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct DataArg {
    /// Dataset file written by `gen` (or the `data` config key).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModalitiesArg {
    /// Observation streams of the ToM models, e.g. `M,D,V`.
    #[arg(long)]
    modalities: Option<String>,
}

/// Resolved experiment configuration: game, training and run keys.
#[derive(Clone, Debug)]
struct Experiment {
    name: String,
    sessions: usize,
    data: Option<String>,
    game: GameConfig,
    train: TrainConfig,
}

impl Experiment {
    const KEYS: &'static [&'static str] = &["name", "sessions", "data"];

    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            sessions: 150,
            data: None,
            game: GameConfig::default(),
            train: TrainConfig::default(),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let config_err = |e: planlink::Error| Failure::Usage(e.to_string());
        let known = match key {
            "name" => {
                self.name = value.into();
                true
            }
            "sessions" => {
                self.sessions = value
                    .parse()
                    .map_err(|_| Failure::Usage(format!("invalid value {value:?} for sessions")))?;
                true
            }
            "data" => {
                self.data = Some(value.into());
                true
            }
            _ => self.game.set(key, value).map_err(config_err)? || self.train.set(key, value).map_err(config_err)?,
        };
        if known {
            Ok(())
        } else {
            usage(format!("unknown config key {key:?}"))
        }
    }

    fn key_values(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("name".to_string(), self.name.clone()),
            ("sessions".to_string(), self.sessions.to_string()),
            ("data".to_string(), self.data.clone().unwrap_or_default()),
        ];
        out.extend(self.game.to_key_values());
        out.extend(self.train.to_key_values());
        debug_assert_eq!(out.len(), Self::KEYS.len() + GameConfig::KEYS.len() + TrainConfig::KEYS.len());
        out
    }
}

/// Reads the config file, then applies `--set` pairs and explicit flags,
/// later sources overriding earlier ones.
fn resolve(name: &str, common: &Common, flags: &[(&str, Option<String>)]) -> CliResult<Experiment> {
    let mut exp = Experiment::new(name);
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let entries = parse_key_values(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        for e in entries {
            exp.set(&e.key, &e.value)
                .map_err(|f| match f {
                    Failure::Usage(m) => Failure::Usage(format!("{} line {}: {m}", path.display(), e.line)),
                    other => other,
                })?;
        }
    }
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else {
            return usage(format!("--set expects KEY=VALUE, got {kv:?}"));
        };
        exp.set(k.trim(), v.trim())?;
    }
    let common_flags = [
        ("seeds", common.seeds.clone()),
        ("epochs", common.epochs.map(|v| v.to_string())),
        ("lr", common.lr.map(|v| v.to_string())),
        ("model_dim", common.model_dim.map(|v| v.to_string())),
        ("ff_dim", common.ff_dim.map(|v| v.to_string())),
        ("plan_dim", common.plan_dim.map(|v| v.to_string())),
        ("dropout", common.dropout.map(|v| v.to_string())),
    ];
    for (k, v) in common_flags.iter().chain(flags) {
        if let Some(v) = v {
            exp.set(k, v)?;
        }
    }
    exp.game.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    exp.train.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(exp)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Creates the run directory and writes the resolved config, the
/// git-describe string and the seed manifest.
fn open_run(dir: &Path, command: &str, exp: &Experiment) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut config = format!("# planlink {command}: resolved configuration\n");
    for (k, v) in exp.key_values() {
        config.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(dir.join("config.txt"), config)?;
    fs::write(dir.join("git-describe.txt"), format!("{}\n", git_describe()))?;
    let mut manifest = String::from("role,seed,derived\n");
    manifest.push_str(&format!("game,{},\n", exp.game.seed));
    for &s in &exp.train.seeds {
        manifest.push_str(&format!("train,{s},{}\n", model_seed(s)));
    }
    fs::write(dir.join("seeds.csv"), manifest)?;
    Ok(())
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, records: &[T]) -> CliResult<()> {
    let path = dir.join(name);
    let f = BufWriter::new(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_records(f, records)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_csv<T: for<'de> serde::Deserialize<'de>>(dir: &Path, name: &str) -> CliResult<Vec<T>> {
    let path = dir.join(name);
    let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_records(f)?)
}

fn load_data(exp: &Experiment, data: &DataArg) -> CliResult<DatasetSplit> {
    let path = match (&data.data, &exp.data) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return usage("a dataset is required (--data or the `data` config key)"),
    };
    let data = load_dataset(&path).with_context(|| format!("loading {}", path.display()))?;
    if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
        return Err(anyhow::anyhow!("dataset {} needs train, val and test sessions", path.display()).into());
    }
    Ok(data)
}

fn threads(flag: Option<usize>) -> CliResult<usize> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var("PLANLINK_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .or_else(|_| usage(format!("PLANLINK_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn refs(v: &[GameSession]) -> Vec<&GameSession> {
    v.iter().collect()
}

fn checkpoint(dir: &Path, name: &str, model: &planlink::nn::Model, meta: serde_json::Value) -> CliResult<()> {
    let ckpt = dir.join("checkpoints");
    fs::create_dir_all(&ckpt)?;
    model.save(&ckpt.join(name), meta)?;
    Ok(())
}

fn pp(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn cmd_gen(common: &Common, sessions: Option<usize>, seed: Option<u64>) -> CliResult<()> {
    let exp = resolve(
        "gen",
        common,
        &[("sessions", sessions.map(|v| v.to_string())), ("seed", seed.map(|v| v.to_string()))],
    )?;
    open_run(&common.out, "gen", &exp)?;
    let data = generate_dataset(&exp.game, exp.sessions)?;
    serialize_dataset(&data, &common.out.join("dataset.jsonl"))?;
    let stats = dataset_stats(&data);
    fs::write(common.out.join("stats.json"), serde_json::to_string_pretty(&stats).map_err(anyhow::Error::from)? + "\n")?;
    println!(
        "{} sessions ({} train / {} val / {} test), mean length {:.1}, {} questions",
        stats.sessions, stats.train, stats.val, stats.test, stats.mean_length, stats.questions
    );
    Ok(())
}

fn parse_kind(s: &str) -> CliResult<ToMKind> {
    match parse_tom_kinds(s) {
        Ok(k) if k.len() == 1 => Ok(k[0]),
        _ => usage(format!("--task expects one of status, knowledge, intention; got {s:?}")),
    }
}

fn cmd_train_tom(common: &Common, data: &DataArg, task: &str, modalities: Option<String>, threads: usize) -> CliResult<()> {
    let kind = parse_kind(task)?;
    let exp = resolve("train-tom", common, &[("modalities", modalities)])?;
    let data = load_data(&exp, data)?;
    open_run(&common.out, "train-tom", &exp)?;
    let cfg = &exp.train;
    let setup = TomSetup::new(kind, cfg, dataset_num_tools(data.all()))?;
    let (train, val, test) = (refs(&data.train), refs(&data.val), refs(&data.test));
    let runs = run_parallel(threads, &cfg.seeds, |&seed| {
        log::info!("training {} ToM model, seed {seed}", kind.name());
        train_tom_on(&setup, cfg, seed, &train, &val, &test, FitOptions::default())
    })?;
    let label = cfg.modalities.label();
    let mut records = Vec::new();
    let mut instances = Vec::new();
    for run in &runs {
        for (split, value) in [("val", run.val_f1), ("test", run.test_f1)] {
            records.push(MetricRecord {
                task: kind.name().into(),
                subset: label.clone(),
                seed: run.seed,
                split: split.into(),
                metric: "macro_f1".into(),
                value,
            });
        }
        for s in tom_instance_scores(kind, &run.test_predictions)? {
            instances.push(InstanceRecord {
                task: kind.name().into(),
                subset: label.clone(),
                seed: run.seed,
                session: s.session,
                player: s.player,
                f1: s.f1,
            });
        }
        checkpoint(
            &common.out,
            &format!("tom_{}_seed{}.ckpt", kind.name(), run.seed),
            &run.model,
            serde_json::json!({"task": kind.name(), "modalities": label, "seed": run.seed, "best_epoch": run.fit.best_epoch}),
        )?;
    }
    let (mean, std) = mean_std(&runs.iter().map(|r| r.test_f1).collect::<Vec<_>>());
    let table = format!("modalities,{k}_mean,{k}_std\n{label},{},{}\n", pp(mean), pp(std), k = kind.name());
    fs::write(common.out.join("table.csv"), table)?;
    write_csv(&common.out, "records.csv", &records)?;
    write_csv(&common.out, "instances.csv", &instances)?;
    println!("{} ({label}): test macro-F1 {} ± {}", kind.name(), pp(mean), pp(std));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_cpa(
    common: &Common,
    data: &DataArg,
    task: &str,
    tom_features: Option<String>,
    sampling: Option<String>,
    tom_ground_truth: Option<String>,
    modalities: Option<String>,
    threads: usize,
) -> CliResult<()> {
    if tom_features.is_some() && tom_ground_truth.is_some() {
        return usage("--tom-ground-truth and --tom-features are mutually exclusive");
    }
    let task = CpaTask::parse(task).map_err(|e| Failure::Usage(e.to_string()))?;
    let exp = resolve(
        "train-cpa",
        common,
        &[
            ("tom_features", tom_features),
            ("ground_truth_tom", tom_ground_truth),
            ("sampling", sampling),
            ("modalities", modalities),
        ],
    )?;
    let data = load_data(&exp, data)?;
    open_run(&common.out, "train-cpa", &exp)?;
    let cfg = &exp.train;
    let stage = if cfg.tom_features.is_empty() {
        TomStage::default()
    } else {
        train_tom_stage(&data, cfg, &cfg.tom_features, threads)?
    };
    let column = match (task, cfg.sampling) {
        (CpaTask::Omk, Sampling::Naive) => Column::OmkNaive,
        (CpaTask::Omk, Sampling::Candidate) => Column::Omk,
        (CpaTask::Pmk, _) => Column::Pmk,
    };
    let subset = if cfg.ground_truth_tom.is_empty() {
        subset_label(&cfg.tom_features)
    } else {
        format!("gt:{}", subset_label(&cfg.ground_truth_tom))
    };
    let num_tools = dataset_num_tools(data.all());
    let (train, val, test) = (refs(&data.train), refs(&data.val), refs(&data.test));
    let runs = run_parallel(threads, &cfg.seeds, |&seed| {
        let banks: Option<&FeatureBanks> = stage.banks.get(&seed);
        let setup = CpaSetup::new(task, cfg, num_tools, banks)?;
        log::info!("training {} ({subset}), seed {seed}", column.name());
        train_cpa_on(&setup, cfg, seed, &train, &val, &test, FitOptions::default())
    })?;
    let mut records = Vec::new();
    let mut instances = Vec::new();
    for run in &runs {
        for (split, metric, value) in [
            ("val", "f1", run.val_f1),
            ("test", "f1", run.test_f1),
            ("val", "best_epoch", run.fit.best_epoch as f64),
        ] {
            records.push(MetricRecord {
                task: column.name().into(),
                subset: subset.clone(),
                seed: run.seed,
                split: split.into(),
                metric: metric.into(),
                value,
            });
        }
        instances.extend(run.test_scores.iter().map(|s| InstanceRecord {
            task: column.name().into(),
            subset: subset.clone(),
            seed: run.seed,
            session: s.session,
            player: s.player,
            f1: s.f1,
        }));
        checkpoint(
            &common.out,
            &format!("cpa_{}_seed{}.ckpt", column.name(), run.seed),
            &run.model,
            serde_json::json!({"task": column.name(), "subset": subset, "seed": run.seed, "best_epoch": run.fit.best_epoch}),
        )?;
    }
    let (mean, std) = mean_std(&runs.iter().map(|r| r.test_f1).collect::<Vec<_>>());
    let summary = format!(
        "task,sampling,subset,f1_mean,f1_std\n{},{},{subset},{},{}\n",
        task.name(),
        cfg.sampling.name(),
        pp(mean),
        pp(std)
    );
    fs::write(common.out.join("summary.csv"), summary)?;
    write_csv(&common.out, "records.csv", &records)?;
    write_csv(&common.out, "instances.csv", &instances)?;
    println!("{} ({subset}, {}): test F1 {} ± {}", task.name(), cfg.sampling.name(), pp(mean), pp(std));
    Ok(())
}

/// ToM test F1 per (kind, seed) and per instance.
fn write_tom_stage(dir: &Path, stage: &TomStage) -> CliResult<()> {
    let records: Vec<MetricRecord> = stage
        .runs
        .iter()
        .flat_map(|r| {
            [("val", r.val_f1), ("test", r.test_f1)].map(|(split, value)| MetricRecord {
                task: r.kind.name().into(),
                subset: "tom".into(),
                seed: r.seed,
                split: split.into(),
                metric: "macro_f1".into(),
                value,
            })
        })
        .collect();
    write_csv(dir, "tom_records.csv", &records)?;
    write_csv(dir, "tom_instances.csv", &tom_instance_records(stage)?)
}

#[derive(Serialize)]
struct CheckRecord {
    source: String,
    row: String,
    consistent: bool,
}

fn write_ablation(dir: &Path, report: &AblationReport) -> CliResult<()> {
    let path = dir.join("table.csv");
    write_ablation_table(BufWriter::new(fs::File::create(&path)?), report)?;
    write_csv(dir, "records.csv", &ablation_records(report))?;
    write_csv(dir, "instances.csv", &instance_records(report))?;
    let mut checks: Vec<CheckRecord> = ablation_overall_checks(report)
        .into_iter()
        .map(|(row, consistent)| CheckRecord {
            source: "this_run".into(),
            row,
            consistent,
        })
        .collect();
    checks.extend(published_overall_checks().into_iter().map(|c| CheckRecord {
        source: format!("published_{}", c.model),
        row: c.subset.to_string(),
        consistent: c.pass,
    }));
    write_csv(dir, "overall_checks.csv", &checks)?;
    for r in &report.runs {
        if let Some(model) = &r.model {
            checkpoint(
                dir,
                &format!("cpa_{}_none_seed{}.ckpt", r.column.name(), r.seed),
                model,
                serde_json::json!({"task": r.column.name(), "subset": "none", "seed": r.seed, "best_epoch": r.best_epoch}),
            )?;
        }
    }
    Ok(())
}

fn print_table(report: &AblationReport) {
    for row in &report.rows {
        let cells: Vec<String> = row
            .cells()
            .into_iter()
            .map(|(name, c)| format!("{name} {}±{}", pp(c.mean), pp(c.std)))
            .collect();
        println!("{:<6} {}  {}", row.label, cells.join("  "), row.note());
    }
}

fn learned_ablation(data: &DatasetSplit, cfg: &TrainConfig, threads: usize) -> CliResult<(TomStage, AblationReport)> {
    let stage = train_tom_stage(data, cfg, &ToMKind::ALL, threads)?;
    let report = ablation_matrix(data, cfg, AblationMode::Learned, Some(&stage), threads)?;
    Ok((stage, report))
}

fn ablation_config(exp: &Experiment) -> CliResult<()> {
    if !exp.train.tom_features.is_empty() || !exp.train.ground_truth_tom.is_empty() {
        return usage("the ablation sweeps every feature subset; drop tom_features / ground_truth_tom");
    }
    Ok(())
}

fn cmd_ablate(common: &Common, data: &DataArg, ground_truth: bool, modalities: Option<String>, threads: usize) -> CliResult<()> {
    let exp = resolve("ablate", common, &[("modalities", modalities)])?;
    ablation_config(&exp)?;
    let data = load_data(&exp, data)?;
    open_run(&common.out, "ablate", &exp)?;
    let report = if ground_truth {
        ablation_matrix(&data, &exp.train, AblationMode::GroundTruth, None, threads)?
    } else {
        let (stage, report) = learned_ablation(&data, &exp.train, threads)?;
        write_tom_stage(&common.out, &stage)?;
        report
    };
    write_ablation(&common.out, &report)?;
    print_table(&report);
    Ok(())
}

#[derive(Serialize)]
struct ProbeRecord {
    source: String,
    kind: String,
    seed: u64,
    f1: f64,
}

fn cmd_probe(common: &Common, data: &DataArg, modalities: Option<String>, threads: usize) -> CliResult<()> {
    let exp = resolve("probe", common, &[("modalities", modalities)])?;
    ablation_config(&exp)?;
    let data = load_data(&exp, data)?;
    open_run(&common.out, "probe", &exp)?;
    let cfg = &exp.train;
    let stage = train_tom_stage(&data, cfg, &ToMKind::ALL, threads)?;
    write_tom_stage(&common.out, &stage)?;
    let num_tools = dataset_num_tools(data.all());
    let mut base = cfg.clone();
    base.sampling = Sampling::Candidate;
    let setups = [
        CpaSetup::new(CpaTask::Omk, &base, num_tools, None)?,
        CpaSetup::new(CpaTask::Pmk, &base, num_tools, None)?,
    ];
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| [(s, 0), (s, 1)]).collect();
    let (train, val, test) = (refs(&data.train), refs(&data.val), refs(&data.test));
    let runs = run_parallel(threads, &jobs, |&(seed, i)| {
        log::info!("training {} probe source, seed {seed}", setups[i].task.name());
        train_cpa_on(&setups[i], &base, seed, &train, &val, &test, FitOptions::default())
    })?;
    let models: Vec<ProbeModels> = runs
        .chunks(2)
        .map(|pair| ProbeModels {
            seed: pair[0].seed,
            omk: CpaProbeModel {
                setup: setups[0].clone(),
                model: &pair[0].model,
            },
            pmk: CpaProbeModel {
                setup: setups[1].clone(),
                model: &pair[1].model,
            },
        })
        .collect();
    let cells = planlink::tasks::probe_report(&data, &stage, &models, &ToMKind::ALL, &ProbeConfig::default())?;
    let mut records = Vec::new();
    for c in &cells {
        for (seed, f1) in c.seeds.iter().zip(&c.f1) {
            records.push(ProbeRecord {
                source: c.source.name().into(),
                kind: c.kind.name().into(),
                seed: *seed,
                f1: *f1,
            });
        }
    }
    write_csv(&common.out, "probe_records.csv", &records)?;
    let mut table = String::from("source");
    for k in ToMKind::ALL {
        table.push_str(&format!(",{n}_mean,{n}_std", n = k.name()));
    }
    table.push('\n');
    for source in ProbeSource::ALL {
        table.push_str(source.name());
        for k in ToMKind::ALL {
            let c = cells
                .iter()
                .find(|c| c.source == source && c.kind == k)
                .ok_or_else(|| anyhow::anyhow!("missing probe cell {} {}", source.name(), k.name()))?;
            table.push_str(&format!(",{},{}", pp(c.mean), pp(c.std)));
        }
        table.push('\n');
    }
    fs::write(common.out.join("probe.csv"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct PointRecord {
    session: u64,
    player: usize,
    tom_f1: f64,
    delta_f1: f64,
    flagged: bool,
}

fn cmd_correlate(
    common: &Common,
    data: &DataArg,
    from: Option<&Path>,
    modalities: Option<String>,
    threads: usize,
) -> CliResult<()> {
    let exp = resolve("correlate", common, &[("modalities", modalities)])?;
    ablation_config(&exp)?;
    let (subset, points): (String, Vec<CorrelationPoint>) = match from {
        Some(dir) => {
            open_run(&common.out, "correlate", &exp)?;
            let records: Vec<MetricRecord> = read_csv(dir, "records.csv")?;
            let instances: Vec<InstanceRecord> = read_csv(dir, "instances.csv")?;
            let tom = read_csv(dir, "tom_instances.csv")?;
            let report = report_from_records(&records, &instances)?;
            if report.mode != AblationMode::Learned {
                return Err(anyhow::anyhow!("{} is not a learned-feature ablation", dir.display()).into());
            }
            correlation_points_with(&report, |seed, kinds| tom_f1_from_records(&tom, seed, kinds))?
        }
        None => {
            let data = load_data(&exp, data)?;
            open_run(&common.out, "correlate", &exp)?;
            let (stage, report) = learned_ablation(&data, &exp.train, threads)?;
            write_tom_stage(&common.out, &stage)?;
            write_ablation(&common.out, &report)?;
            correlation_points(&report, &stage)?
        }
    };
    let rows: Vec<PointRecord> = points
        .iter()
        .map(|p| PointRecord {
            session: p.session,
            player: p.player,
            tom_f1: p.tom_f1,
            delta_f1: p.delta_f1,
            flagged: p.flagged(),
        })
        .collect();
    write_csv(&common.out, "correlation_points.csv", &rows)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let summary = match correlation_experiment(&points) {
        Ok(c) => {
            println!("{subset}: r = {:.4}, p = {:.4}, n = {}, flagged = {flagged}", c.result.r, c.result.p, c.result.n);
            format!("{subset},{},{},{},{flagged},ok\n", c.result.n, c.result.r, c.result.p)
        }
        Err(e) => {
            eprintln!("correlation undefined: {e}");
            format!("{subset},{},,,{flagged},no variance\n", points.len())
        }
    };
    fs::write(common.out.join("correlation.csv"), format!("subset,n,r,p,flagged,status\n{summary}"))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = threads(cli.threads)?;
    match cli.command {
        Command::Gen { common, sessions, seed } => cmd_gen(&common, sessions, seed),
        Command::TrainTom {
            common,
            data,
            task,
            modalities,
        } => cmd_train_tom(&common, &data, &task, modalities, threads),
        Command::TrainCpa {
            common,
            data,
            task,
            tom_features,
            sampling,
            tom_ground_truth,
            modalities,
        } => cmd_train_cpa(
            &common,
            &data,
            &task,
            tom_features,
            sampling,
            tom_ground_truth,
            modalities.modalities,
            threads,
        ),
        Command::Ablate {
            common,
            data,
            tom_ground_truth,
            modalities,
        } => cmd_ablate(&common, &data, tom_ground_truth, modalities.modalities, threads),
        Command::Probe {
            common,
            data,
            modalities,
        } => cmd_probe(&common, &data, modalities.modalities, threads),
        Command::Correlate {
            common,
            data,
            from,
            modalities,
        } => cmd_correlate(&common, &data, from.as_deref(), modalities.modalities, threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
