//! Command-line front end.
//!
//! Config files are TOML. `--set key=value` overrides address nested keys
//! with dots (`regulation.f_max=3.0`, `enable_sear=false`); values are
//! parsed as TOML literals and fall back to plain strings. Keys that do not
//! exist in the config schema are rejected.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::{gen_synthetic, load_features, load_pairs, save_features, save_pairs, SynthConfig};
use crate::diagnostics::{codebook_report, export_landscape, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::sid_table::SidTable;
use crate::trainer::{encode_corpus, load_checkpoint, save_checkpoint, train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "adasid", version, about = "Semantic-ID tokenizer training and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable): `--set regulation.f_max=3.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (or file, for `encode` and `diagnose`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate clustered synthetic items and collaborative pairs.
    GenSynth(CommonArgs),
    /// Train a tokenizer and write checkpoint, loss log, SIDs and report.
    Train(CommonArgs),
    /// Encode a feature file into a SID table with a trained checkpoint.
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a landscape CSV from one or more SID tables.
    Diagnose {
        #[arg(required = true)]
        tables: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and diagnose once per value along one hyperparameter axis.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// One of f_max, eta_set, schedule, lambda_col_min, lambda_cf_max.
        #[arg(long)]
        axis: String,
        /// TOML literal per sweep point, e.g. `3.0` or `[0.14,0.19,0.24]`.
        #[arg(long = "value")]
        values: Vec<String>,
    },
}

/// Paths to the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub features: PathBuf,
    pub pairs: PathBuf,
}

/// Full training-run config: data paths plus every training setting at the
/// top level.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataPaths,
    pub train: TrainConfig,
}

impl RunConfig {
    fn default_tree() -> Table {
        let mut t = to_table(&TrainConfig::default());
        t.insert("data".into(), Value::Table(to_table(&DataPaths::default())));
        t
    }

    fn from_tree(mut tree: Table) -> Result<Self> {
        let data = match tree.remove("data") {
            Some(v) => v
                .try_into::<DataPaths>()
                .map_err(|e| Error::Config(format!("data: {e}")))?,
            None => DataPaths::default(),
        };
        let train: TrainConfig = Value::Table(tree)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        train.validate()?;
        Ok(Self { data, train })
    }

    pub fn to_toml(&self) -> String {
        let mut t = to_table(&self.train);
        t.insert("data".into(), Value::Table(to_table(&self.data)));
        toml::to_string(&t).expect("config serializes")
    }
}

fn to_table<T: Serialize>(v: &T) -> Table {
    match Value::try_from(v).expect("config serializes") {
        Value::Table(t) => t,
        _ => unreachable!("configs are structs"),
    }
}

fn read_tree(path: Option<&Path>) -> Result<Table> {
    match path {
        None => Ok(Table::new()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Checks that every key in `tree` exists in `schema`.
fn check_known_keys(tree: &Table, schema: &Table, prefix: &str) -> Result<()> {
    for (k, v) in tree {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (schema.get(k), v) {
            (None, _) => return Err(Error::Usage(format!("unknown config key `{path}`"))),
            (Some(Value::Table(s)), Value::Table(t)) => check_known_keys(t, s, &path)?,
            _ => {}
        }
    }
    Ok(())
}

/// Sets `key` (dotted path) in `tree`, which must exist in `schema`.
fn apply_override(tree: &mut Table, schema: &Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    let mut schema_node = schema;
    for (depth, part) in parts.iter().enumerate() {
        let known = schema_node
            .get(*part)
            .ok_or_else(|| Error::Usage(format!("unknown config key `{key}`")))?;
        if depth + 1 == parts.len() {
            let value = match (known, value) {
                (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
                (Value::Array(_), Value::Array(a)) => Value::Array(
                    a.into_iter()
                        .map(|x| match x {
                            Value::Integer(i)
                                if known.as_array().is_some_and(|s| s.first().is_some_and(Value::is_float)) =>
                            {
                                Value::Float(i as f64)
                            }
                            x => x,
                        })
                        .collect(),
                ),
                (Value::String(_), v @ Value::String(_)) => v,
                (Value::String(_), v) => Value::String(v.to_string()),
                (_, v) => v,
            };
            node.insert((*part).to_string(), value);
            return Ok(());
        }
        let Value::Table(next_schema) = known else {
            return Err(Error::Usage(format!("config key `{key}` is not a table")));
        };
        schema_node = next_schema;
        node = match node
            .entry((*part).to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(Error::Usage(format!("config key `{key}` is not a table"))),
        };
    }
    Ok(())
}

fn apply_overrides(tree: &mut Table, schema: &Table, overrides: &[String]) -> Result<()> {
    for raw in overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{raw}` is not KEY=VALUE")))?;
        apply_override(tree, schema, k.trim(), parse_literal(v.trim()))?;
    }
    Ok(())
}

pub fn resolve_run_config(args: &CommonArgs) -> Result<RunConfig> {
    let schema = RunConfig::default_tree();
    let mut tree = read_tree(args.config.as_deref())?;
    check_known_keys(&tree, &schema, "")?;
    apply_overrides(&mut tree, &schema, &args.overrides)?;
    if let Some(seed) = args.seed {
        tree.insert("seed".into(), Value::Integer(seed as i64));
    }
    RunConfig::from_tree(tree)
}

pub fn resolve_synth_config(args: &CommonArgs) -> Result<SynthConfig> {
    let schema = to_table(&SynthConfig::default());
    let mut tree = read_tree(args.config.as_deref())?;
    check_known_keys(&tree, &schema, "")?;
    apply_overrides(&mut tree, &schema, &args.overrides)?;
    if let Some(seed) = args.seed {
        tree.insert("seed".into(), Value::Integer(seed as i64));
    }
    let cfg: SynthConfig = Value::Table(tree)
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn run_gen_synth(args: &CommonArgs) -> Result<()> {
    let cfg = resolve_synth_config(args)?;
    let data = gen_synthetic(&cfg)?;
    create_dir(&args.out)?;
    save_features(&data.table, &args.out.join("features.bin"))?;
    save_pairs(&data.pairs, &data.table, &args.out.join("pairs.tsv"))?;
    let labels: String = data
        .table
        .ids
        .iter()
        .zip(&data.labels)
        .map(|(id, c)| format!("{id}\t{c}\n"))
        .collect();
    write_file(&args.out.join("labels.tsv"), labels)?;
    write_file(
        &args.out.join("effective_config.toml"),
        toml::to_string(&cfg).expect("config serializes"),
    )
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: DiagnosticsReport,
    pub sids: SidTable,
}

/// Trains with a resolved config and writes `checkpoint.bin`,
/// `loss_log.ndjson`, `sids.tsv`, `report.json` and `effective_config.toml`
/// into `out`.
pub fn train_into(run: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let table = load_features(&run.data.features)?;
    let pairs = load_pairs(&run.data.pairs, &table)?;
    create_dir(out)?;
    write_file(&out.join("effective_config.toml"), run.to_toml())?;
    let log_path = out.join("loss_log.ndjson");
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    let checkpoint = train(&run.train, &table, &pairs, |b| {
        let line = serde_json::to_string(b).expect("breakdown serializes");
        writeln!(log, "{line}").map_err(|e| Error::io(&log_path, e))
    })?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    drop(log);
    save_checkpoint(&checkpoint, &out.join("checkpoint.bin"))?;
    let sids = encode_corpus(&checkpoint.model, &table)?;
    sids.save(&out.join("sids.tsv"))?;
    let report = codebook_report(&sids)?;
    write_file(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(TrainOutcome { report, sids })
}

pub fn run_train(args: &CommonArgs) -> Result<TrainOutcome> {
    let run = resolve_run_config(args)?;
    train_into(&run, &args.out)
}

pub fn run_encode(checkpoint: &Path, features: &Path, out: &Path) -> Result<SidTable> {
    let ck = load_checkpoint(checkpoint)?;
    let table = load_features(features)?;
    let sids = encode_corpus(&ck.model, &table)?;
    sids.save(out)?;
    Ok(sids)
}

pub fn run_diagnose(tables: &[PathBuf], out: &Path) -> Result<Vec<(String, DiagnosticsReport)>> {
    if tables.is_empty() {
        return Err(Error::Usage("diagnose needs at least one SID table".into()));
    }
    let stem = |path: &Path| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    };
    // rows are named by file stem unless two tables share one
    let stems: Vec<String> = tables.iter().map(|p| stem(p)).collect();
    let unique = stems.iter().collect::<std::collections::HashSet<_>>().len() == stems.len();
    let mut reports = Vec::with_capacity(tables.len());
    for (path, short) in tables.iter().zip(stems) {
        let table = SidTable::load(path).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        let name = if unique { short } else { path.display().to_string() };
        reports.push((name, codebook_report(&table)?));
    }
    export_landscape(&reports, out)?;
    Ok(reports)
}

pub const SWEEP_AXES: [&str; 5] = ["f_max", "eta_set", "schedule", "lambda_col_min", "lambda_cf_max"];

/// Config overrides for one sweep point.
pub fn sweep_overrides(axis: &str, raw: &str) -> Result<Vec<(String, Value)>> {
    let v = parse_literal(raw);
    let bad = || Error::Usage(format!("invalid value `{raw}` for sweep axis `{axis}`"));
    Ok(match axis {
        "f_max" => vec![("regulation.f_max".into(), v)],
        "eta_set" => {
            if !v.is_array() {
                return Err(bad());
            }
            vec![("regulation.eta".into(), v)]
        }
        "schedule" => {
            let arr = v.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
            vec![
                ("schedule.t_start".into(), arr[0].clone()),
                ("schedule.t_end".into(), arr[1].clone()),
            ]
        }
        "lambda_col_min" => vec![("schedule.lambda_col_min".into(), v)],
        "lambda_cf_max" => vec![("schedule.lambda_cf_max".into(), v)],
        other => {
            return Err(Error::Usage(format!(
                "unknown sweep axis `{other}`; expected one of {}",
                SWEEP_AXES.join(", ")
            )))
        }
    })
}

pub fn run_sweep(args: &CommonArgs, axis: &str, values: &[String]) -> Result<Vec<(String, DiagnosticsReport)>> {
    if !SWEEP_AXES.contains(&axis) {
        sweep_overrides(axis, "0")?;
    }
    if values.is_empty() {
        return Err(Error::Usage("sweep needs at least one --value".into()));
    }
    let schema = RunConfig::default_tree();
    let mut base = read_tree(args.config.as_deref())?;
    check_known_keys(&base, &schema, "")?;
    apply_overrides(&mut base, &schema, &args.overrides)?;
    if let Some(seed) = args.seed {
        base.insert("seed".into(), Value::Integer(seed as i64));
    }
    create_dir(&args.out)?;
    let mut rows = Vec::with_capacity(values.len());
    let mut csv = String::from("axis,value,sid_entropy,avg_ppl,min_ppl,mean_top1\n");
    for (k, raw) in values.iter().enumerate() {
        let mut tree = base.clone();
        for (key, v) in sweep_overrides(axis, raw)? {
            apply_override(&mut tree, &schema, &key, v)?;
        }
        let run = RunConfig::from_tree(tree)?;
        let outcome = train_into(&run, &args.out.join(format!("point_{k}")))?;
        let r = &outcome.report;
        csv.push_str(&format!(
            "{axis},\"{raw}\",{},{},{},{}\n",
            r.sid_entropy, r.avg_perplexity, r.min_perplexity, r.mean_top1_load
        ));
        rows.push((format!("{axis}={raw}"), outcome.report));
    }
    write_file(&args.out.join("sweep.csv"), csv)?;
    export_landscape(&rows, &args.out.join("landscape.csv"))?;
    Ok(rows)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(args) => run_gen_synth(&args),
        Command::Train(args) => run_train(&args).map(|_| ()),
        Command::Encode {
            checkpoint,
            features,
            out,
        } => run_encode(&checkpoint, &features, &out).map(|_| ()),
        Command::Diagnose { tables, out } => run_diagnose(&tables, &out).map(|_| ()),
        Command::Sweep { common, axis, values } => run_sweep(&common, &axis, &values).map(|_| ()),
    }
}
