//! `retain`: retention-prediction pipeline over game telemetry, exposed
//! as subcommands. Every run writes a manifest recording resolved
//! parameters and content digests, so artifacts are reproducible.

mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use retain_core::evaluation::{
    cross_validate, feature_report, longterm_analysis, make_folds, robustness_study, CvOutcome,
};
use retain_core::featurize::{
    build_rows, encode_all, read_features_csv, write_features_csv, EvalWindow, FeatureVector,
    FeatureWindow,
};
use retain_core::learners::logistic::fit_full;
use retain_core::learners::rule_tree::{export_rules, train_rule_tree};
use retain_core::learners::tune::{tune_forest, tune_svm, ForestGrid, SvmGrid, TUNE_SUBSAMPLE};
use retain_core::learners::{train_forest, ForestParams, ModelEnvelope, ModelSpec};
use retain_core::synthcohort::{calibrate, generate, GeneratorConfig};
use retain_core::telemetry::{
    apply_cohort_filter, cohort_summary, parse_events_csv, parse_events_jsonl, write_events_jsonl,
    write_rejected_sidecar, EventLog, ParseOptions,
};
use retain_core::RetainError;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "retain", version, about = "Retention prediction over game telemetry")]
struct Cli {
    /// Flat key-value config file mirroring every flag; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; falls back to config, then RETAIN_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker pool size (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic telemetry cohort with a ground-truth sidecar.
    Synth {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        corruption_rate: Option<f64>,
        /// Bisect the hazard scale to hit the retention targets first.
        #[arg(long)]
        calibrate: bool,
        #[arg(long)]
        target_short: Option<f64>,
        #[arg(long)]
        target_long: Option<f64>,
    },
    /// Validate raw events into a clean log plus a rejected-line sidecar.
    Ingest {
        /// JSONL event stream.
        #[arg(long, conflicts_with_all = ["installs", "sessions", "rounds"])]
        input: Option<PathBuf>,
        /// CSV alternative: three files.
        #[arg(long, requires_all = ["sessions", "rounds"])]
        installs: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<PathBuf>,
        /// Reject installs outside this epoch-second range.
        #[arg(long, value_name = "START:END")]
        study_period: Option<String>,
        /// Keep only players with a prompt, played first session.
        #[arg(long)]
        cohort_filter: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute windowed features and labels into a CSV.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        #[arg(long)]
        long_window: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on all rows and export it as JSON.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        /// heuristic, lr, svm, rf, or ensemble.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search hyperparameters on a subsample.
    Tune {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        /// svm or rf.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate model families over one or more feature windows.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated list, e.g. session,day,7d.
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        /// Comma-separated families, e.g. lr,svm,rf,ensemble.
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        cv: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also render SVG charts.
        #[arg(long)]
        svg: bool,
    },
    /// Train the small rule tree and export its portable rule document.
    Heuristic {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        #[arg(long)]
        max_rules: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
        #[arg(long)]
        export: PathBuf,
    },
    /// Chunked-training nearest-neighbor perturbation study.
    Robustness {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        feature_window: Option<String>,
        #[arg(long)]
        eval_window: Option<String>,
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long)]
        max_level: Option<usize>,
        #[arg(long)]
        max_rules: Option<usize>,
        #[arg(long)]
        min_leaf: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        svg: bool,
    },
    /// Cohort funnel, daily activity series, long-term cross-tab, and
    /// feature-strength tables.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Held-out predictions CSV from `evaluate`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Features CSV; enables the feature-strength tables.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        eval_window: Option<String>,
        #[arg(long)]
        long_window: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        process::exit(exit_code(&err));
    }
}

/// 1 for bad inputs or configuration, 2 for internal failures.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(re) = cause.downcast_ref::<RetainError>() {
            return match re {
                RetainError::Io(_)
                | RetainError::Schema(_)
                | RetainError::InvalidArgument(_)
                | RetainError::Infeasible(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn load_config(path: Option<&Path>) -> anyhow::Result<BTreeMap<String, String>> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", no + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn resolve_seed(flag: Option<u64>, cfg: &BTreeMap<String, String>) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.get("seed") {
        return s.parse().map_err(|_| anyhow!("config seed {s:?} is not an integer"));
    }
    if let Ok(s) = std::env::var("RETAIN_SEED") {
        return s
            .trim()
            .parse()
            .map_err(|_| anyhow!("RETAIN_SEED {s:?} is not an integer"));
    }
    Ok(0)
}

/// Precedence: command-line flag, then config key, then default.
struct Ctx {
    cfg: BTreeMap<String, String>,
    manifest: RunManifest,
    threads: usize,
}

impl Ctx {
    fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let v = match flag {
            Some(v) => v,
            None => match self.cfg.get(key) {
                Some(s) => s
                    .parse::<T>()
                    .map_err(|e| anyhow!("config {key} = {s:?}: {e}"))?,
                None => default,
            },
        };
        self.manifest.param(key, v.to_string());
        Ok(v)
    }

    fn resolve_bool(&mut self, key: &str, flag: bool) -> bool {
        let v = flag
            || self
                .cfg
                .get(key)
                .map(|s| s == "true" || s == "1")
                .unwrap_or(false);
        self.manifest.param(key, v);
        v
    }
}

fn write_artifact(m: &mut RunManifest, path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
    m.record_output(path)?;
    Ok(())
}

fn read_log(m: &mut RunManifest, path: &Path) -> anyhow::Result<EventLog> {
    m.record_input(path)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(parse_events_jsonl(BufReader::new(file), ParseOptions::default())?)
}

fn read_features(m: &mut RunManifest, path: &Path) -> anyhow::Result<Vec<FeatureVector>> {
    m.record_input(path)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_features_csv(BufReader::new(file))?)
}

fn parse_window(s: &str) -> anyhow::Result<FeatureWindow> {
    Ok(FeatureWindow::from_str(s)?)
}

fn parse_eval(s: &str) -> anyhow::Result<EvalWindow> {
    Ok(EvalWindow::from_str(s)?)
}

fn model_spec(name: &str) -> anyhow::Result<ModelSpec> {
    match name {
        "heuristic" => Ok(ModelSpec::default_heuristic()),
        "lr" => Ok(ModelSpec::default_lr()),
        "svm" => Ok(ModelSpec::default_svm()),
        "rf" => Ok(ModelSpec::default_rf()),
        "ensemble" => Ok(ModelSpec::default_ensemble()),
        other => Err(RetainError::InvalidArgument(format!(
            "unknown model {other:?}: expected heuristic, lr, svm, rf, or ensemble"
        ))
        .into()),
    }
}

/// Run `f(0..n)` on a pool of `threads` workers; the result order is by
/// index, so the output is independent of scheduling.
fn pooled<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("worker filled every slot"))
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &cfg)?;
    let threads = match cli.threads {
        Some(t) if t >= 1 => t,
        Some(_) => bail!(RetainError::InvalidArgument("threads must be >= 1".into())),
        None => match cfg.get("threads") {
            Some(s) => s.parse().map_err(|_| anyhow!("config threads {s:?}"))?,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        },
    };
    let name = match &cli.cmd {
        Cmd::Synth { .. } => "synth",
        Cmd::Ingest { .. } => "ingest",
        Cmd::Featurize { .. } => "featurize",
        Cmd::Train { .. } => "train",
        Cmd::Tune { .. } => "tune",
        Cmd::Evaluate { .. } => "evaluate",
        Cmd::Heuristic { .. } => "heuristic",
        Cmd::Robustness { .. } => "robustness",
        Cmd::Report { .. } => "report",
    };
    let mut manifest = RunManifest::start(name, seed);
    manifest.param("seed", seed);
    manifest.param("threads", threads);
    let mut ctx = Ctx { cfg, manifest, threads };

    match cli.cmd {
        Cmd::Synth { players, out, corruption_rate, calibrate: do_cal, target_short, target_long } => {
            cmd_synth(&mut ctx, players, &out, corruption_rate, do_cal, target_short, target_long, seed)
        }
        Cmd::Ingest { input, installs, sessions, rounds, study_period, cohort_filter, out } => {
            cmd_ingest(&mut ctx, input, installs, sessions, rounds, study_period, cohort_filter, &out)
        }
        Cmd::Featurize { input, feature_window, eval_window, long_window, out } => {
            cmd_featurize(&mut ctx, &input, feature_window, eval_window, long_window, &out)
        }
        Cmd::Train { features, feature_window, eval_window, model, out } => {
            cmd_train(&mut ctx, &features, feature_window, eval_window, model, &out, seed)
        }
        Cmd::Tune { features, feature_window, eval_window, family, subsample, out } => {
            cmd_tune(&mut ctx, &features, feature_window, eval_window, family, subsample, &out, seed)
        }
        Cmd::Evaluate { input, feature_window, eval_window, models, cv, out_dir, svg } => {
            cmd_evaluate(&mut ctx, &input, feature_window, eval_window, models, cv, &out_dir, svg, seed)
        }
        Cmd::Heuristic { features, feature_window, eval_window, max_rules, min_leaf, export } => {
            cmd_heuristic(&mut ctx, &features, feature_window, eval_window, max_rules, min_leaf, &export)
        }
        Cmd::Robustness { features, feature_window, eval_window, chunks, max_level, max_rules, min_leaf, out_dir, svg } => {
            cmd_robustness(&mut ctx, &features, feature_window, eval_window, chunks, max_level, max_rules, min_leaf, &out_dir, svg, seed)
        }
        Cmd::Report { input, predictions, features, eval_window, long_window, out_dir, svg } => {
            cmd_report(&mut ctx, &input, predictions, features, eval_window, long_window, &out_dir, svg)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    ctx: &mut Ctx,
    players: Option<usize>,
    out: &Path,
    corruption_rate: Option<f64>,
    do_calibrate: bool,
    target_short: Option<f64>,
    target_long: Option<f64>,
    seed: u64,
) -> anyhow::Result<()> {
    let mut cfg = GeneratorConfig::default();
    cfg.n_players = ctx.resolve("players", players, cfg.n_players)?;
    cfg.corruption_rate = ctx.resolve("corruption-rate", corruption_rate, cfg.corruption_rate)?;
    cfg.target_short = ctx.resolve("target-short", target_short, cfg.target_short)?;
    cfg.target_long = ctx.resolve("target-long", target_long, cfg.target_long)?;
    let do_calibrate = ctx.resolve_bool("calibrate", do_calibrate);
    if do_calibrate {
        cfg = calibrate(&cfg)?;
    }
    ctx.manifest.param("hazard-scale", cfg.hazard_scale);

    let output = generate(&cfg, seed)?;
    write_artifact(&mut ctx.manifest, out, &output.events)?;
    let mut truth_name = out.file_name().unwrap_or_default().to_os_string();
    truth_name.push(".truth.jsonl");
    let truth_path = out.with_file_name(truth_name);
    write_artifact(&mut ctx.manifest, &truth_path, &output.truth)?;
    println!(
        "synth: {} players, {} event lines ({} corrupt) -> {}",
        cfg.n_players,
        output.n_valid_lines + output.n_corrupt_lines,
        output.n_corrupt_lines,
        out.display()
    );
    ctx.manifest.clone().finish(out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ingest(
    ctx: &mut Ctx,
    input: Option<PathBuf>,
    installs: Option<PathBuf>,
    sessions: Option<PathBuf>,
    rounds: Option<PathBuf>,
    study_period: Option<String>,
    cohort_filter: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let study_period = match study_period.or_else(|| ctx.cfg.get("study-period").cloned()) {
        Some(s) => {
            ctx.manifest.param("study-period", &s);
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| anyhow!("bad study period {s:?}: expected start:end"))?;
            Some((a.parse::<i64>()?, b.parse::<i64>()?))
        }
        None => None,
    };
    let opts = ParseOptions { study_period };
    let cohort_filter = ctx.resolve_bool("cohort-filter", cohort_filter);

    let log = match (&input, &installs) {
        (Some(path), None) => {
            ctx.manifest.record_input(path)?;
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            parse_events_jsonl(BufReader::new(f), opts)?
        }
        (None, Some(inst)) => {
            let sess = sessions.as_ref().unwrap();
            let rnds = rounds.as_ref().unwrap();
            for p in [inst, sess, rnds] {
                ctx.manifest.record_input(p)?;
            }
            parse_events_csv(File::open(inst)?, File::open(sess)?, File::open(rnds)?, opts)?
        }
        _ => bail!(RetainError::InvalidArgument(
            "pass either --input or --installs/--sessions/--rounds".into()
        )),
    };
    let n_rejected = log.rejected.len();
    let filtered = if cohort_filter { apply_cohort_filter(&log) } else { log };

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let f = BufWriter::new(File::create(out)?);
    write_events_jsonl(&filtered, f)?;
    ctx.manifest.record_output(out)?;
    let mut rej_name = out.file_name().unwrap_or_default().to_os_string();
    rej_name.push(".rejected.jsonl");
    let rej_path = out.with_file_name(rej_name);
    let f = BufWriter::new(File::create(&rej_path)?);
    write_rejected_sidecar(&filtered, f)?;
    ctx.manifest.record_output(&rej_path)?;

    println!(
        "ingest: {} players, {} sessions, {} rounds kept; {} lines rejected -> {}",
        filtered.installs.len(),
        filtered.sessions.len(),
        filtered.rounds.len(),
        n_rejected,
        out.display()
    );
    ctx.manifest.clone().finish(out)?;
    Ok(())
}

fn cmd_featurize(
    ctx: &mut Ctx,
    input: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    long_window: Option<String>,
    out: &Path,
) -> anyhow::Result<()> {
    let window = parse_window(&ctx.resolve("feature-window", feature_window, "day".into())?)?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let long = parse_eval(&ctx.resolve("long-window", long_window, "60:67".into())?)?;

    let log = read_log(&mut ctx.manifest, input)?;
    let cohort = apply_cohort_filter(&log);
    let rows = build_rows(&cohort, window, eval, long);

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let f = BufWriter::new(File::create(out)?);
    write_features_csv(&rows, f)?;
    ctx.manifest.record_output(out)?;
    let retained = rows.iter().filter(|r| r.retained_short == 1).count();
    println!(
        "featurize: {} rows ({} retained short-term) -> {}",
        rows.len(),
        retained,
        out.display()
    );
    ctx.manifest.clone().finish(out)?;
    Ok(())
}

fn cmd_train(
    ctx: &mut Ctx,
    features: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    model: Option<String>,
    out: &Path,
    seed: u64,
) -> anyhow::Result<()> {
    let window = parse_window(&ctx.resolve("feature-window", feature_window, "day".into())?)?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let model_name = ctx.resolve("model", model, "rf".into())?;
    let spec = model_spec(&model_name)?;

    let rows = read_features(&mut ctx.manifest, features)?;
    let data = encode_all(window, eval, &rows)?;
    let trained = spec.train(&data, seed)?;
    let envelope = ModelEnvelope::new(trained, &data);
    write_artifact(&mut ctx.manifest, out, &envelope.to_json())?;
    println!("train: {} on {} rows -> {}", model_name, rows.len(), out.display());
    ctx.manifest.clone().finish(out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_tune(
    ctx: &mut Ctx,
    features: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    family: Option<String>,
    subsample: Option<usize>,
    out: &Path,
    seed: u64,
) -> anyhow::Result<()> {
    let window = parse_window(&ctx.resolve("feature-window", feature_window, "day".into())?)?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let family = ctx.resolve("family", family, "svm".into())?;
    let subsample = ctx.resolve("subsample", subsample, TUNE_SUBSAMPLE)?;

    let rows = read_features(&mut ctx.manifest, features)?;
    let json = match family.as_str() {
        "svm" => {
            let outcome = tune_svm(&rows, window, eval, &SvmGrid::default(), subsample, seed)?;
            println!("tune: svm best {:?} (cv accuracy {:.4})", outcome.best, outcome.cv_accuracy);
            serde_json::to_string_pretty(&outcome)?
        }
        "rf" => {
            let p = encode_all(window, eval, &rows)?.columns.len();
            let grid = ForestGrid::default_for(p);
            let outcome = tune_forest(&rows, window, eval, &grid, subsample, seed)?;
            println!("tune: rf best {:?} (cv accuracy {:.4})", outcome.best, outcome.cv_accuracy);
            serde_json::to_string_pretty(&outcome)?
        }
        other => bail!(RetainError::InvalidArgument(format!(
            "unknown family {other:?}: expected svm or rf"
        ))),
    };
    write_artifact(&mut ctx.manifest, out, &json)?;
    ctx.manifest.clone().finish(out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    ctx: &mut Ctx,
    input: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    models: Option<String>,
    cv: Option<usize>,
    out_dir: &Path,
    svg: bool,
    seed: u64,
) -> anyhow::Result<()> {
    let windows_arg = ctx.resolve("feature-window", feature_window, "day".into())?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let models_arg = ctx.resolve("models", models, "lr,svm,rf,ensemble".into())?;
    let n_folds = ctx.resolve("cv", cv, 10usize)?;
    let svg = ctx.resolve_bool("svg", svg);

    let windows: Vec<FeatureWindow> = windows_arg
        .split(',')
        .map(|s| parse_window(s.trim()))
        .collect::<anyhow::Result<_>>()?;
    let specs: Vec<ModelSpec> = models_arg
        .split(',')
        .map(|s| model_spec(s.trim()))
        .collect::<anyhow::Result<_>>()?;

    let log = read_log(&mut ctx.manifest, input)?;
    let cohort = apply_cohort_filter(&log);
    let players: Vec<String> = cohort.installs.iter().map(|i| i.player_id.clone()).collect();
    let plan = make_folds(&players, n_folds, seed)?;

    // Windows are independent; fan them out over the worker pool.
    let results: Vec<retain_core::error::Result<Vec<CvOutcome>>> = pooled(windows.len(), ctx.threads, |wi| {
        let rows = build_rows(&cohort, windows[wi], eval, EvalWindow::long_term());
        cross_validate(&rows, windows[wi], eval, &specs, &plan, seed)
    });

    fs::create_dir_all(out_dir)?;
    let mut pooled_rows = Vec::new();
    let mut fold_rows = Vec::new();
    let window_labels: Vec<String> = windows.iter().map(|w| w.label()).collect();
    let model_names: Vec<String> = specs.iter().map(|s| s.name().to_string()).collect();
    for (wi, result) in results.into_iter().enumerate() {
        let outcomes = result?;
        for outcome in &outcomes {
            let wl = window_labels[wi].clone();
            let mn = outcome.spec.name().to_string();
            pooled_rows.push((wl.clone(), mn.clone(), outcome.pooled));
            for (fi, m) in outcome.per_fold.iter().enumerate() {
                fold_rows.push((wl.clone(), mn.clone(), fi, *m));
            }
            let base = format!("{}_{}", window_labels[wi], outcome.spec.name());
            write_artifact(
                &mut ctx.manifest,
                &out_dir.join(format!("predictions_{base}.csv")),
                &report::predictions_csv(outcome),
            )?;
            let pairs: Vec<(u8, f64)> =
                outcome.predictions.iter().map(|p| (p.1, p.3)).collect();
            write_artifact(
                &mut ctx.manifest,
                &out_dir.join(format!("roc_{base}.csv")),
                &report::roc_csv(&pairs),
            )?;
            if svg {
                let pts: Vec<(f64, f64)> = report::roc_points(&pairs);
                write_artifact(
                    &mut ctx.manifest,
                    &out_dir.join(format!("roc_{base}.svg")),
                    &report::svg_line_chart(
                        &format!("ROC: {} / {}", window_labels[wi], outcome.spec.name()),
                        &[(outcome.spec.name().to_string(), pts)],
                    ),
                )?;
            }
        }
    }

    write_artifact(&mut ctx.manifest, &out_dir.join("metrics.csv"), &report::metrics_csv(&pooled_rows))?;
    write_artifact(
        &mut ctx.manifest,
        &out_dir.join("accuracy_by_window.csv"),
        &report::accuracy_by_window_csv(&window_labels, &model_names, &pooled_rows),
    )?;
    write_artifact(&mut ctx.manifest, &out_dir.join("per_fold.csv"), &report::per_fold_csv(&fold_rows))?;

    let mut md = String::from("# Model comparison\n\n");
    md.push_str(&format!(
        "{} players, {}-fold cross-validation, eval window {}:{}, seed {}.\n\n",
        players.len(),
        n_folds,
        eval.start_day,
        eval.end_day,
        seed
    ));
    let table_rows: Vec<Vec<String>> = pooled_rows
        .iter()
        .map(|(w, m, s)| {
            vec![
                w.clone(),
                m.clone(),
                format!("{:.4}", s.accuracy),
                format!("{:.4}", s.precision),
                format!("{:.4}", s.recall),
                format!("{:.4}", s.f1),
                s.auc.map(|a| format!("{a:.4}")).unwrap_or_default(),
            ]
        })
        .collect();
    md.push_str(&report::md_table(
        &["window", "model", "accuracy", "precision", "recall", "f1", "auc"],
        &table_rows,
    ));
    md.push_str("\nManifest: manifest.json\n");
    write_artifact(&mut ctx.manifest, &out_dir.join("report.md"), &md)?;

    for (w, m, s) in &pooled_rows {
        println!("evaluate: {w:>8} {m:<9} accuracy {:.4} auc {}", s.accuracy,
            s.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into()));
    }
    ctx.manifest.clone().finish(out_dir)?;
    Ok(())
}

fn cmd_heuristic(
    ctx: &mut Ctx,
    features: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    max_rules: Option<usize>,
    min_leaf: Option<usize>,
    export: &Path,
) -> anyhow::Result<()> {
    let window = parse_window(&ctx.resolve("feature-window", feature_window, "day".into())?)?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let max_rules = ctx.resolve("max-rules", max_rules, 4usize)?;
    let min_leaf = ctx.resolve("min-leaf", min_leaf, 50usize)?;

    let rows = read_features(&mut ctx.manifest, features)?;
    let data = encode_all(window, eval, &rows)?;
    let tree = train_rule_tree(&data, max_rules, min_leaf)?;
    let doc = export_rules(&tree);

    // The exported document must agree with the in-memory tree on every
    // training row before it leaves the process.
    for (i, raw) in data.x_raw.iter().enumerate() {
        let (class, _) = doc.classify(&data.columns, raw)?;
        let tree_class = (tree.score_row(raw) >= 0.5) as u8;
        if class != tree_class {
            bail!(RetainError::Training(format!(
                "exported rules disagree with the tree on row {i}"
            )));
        }
    }

    write_artifact(&mut ctx.manifest, export, &doc.to_json())?;
    println!("heuristic: {} rules on {} rows -> {}", doc.rules.len(), rows.len(), export.display());
    for rule in &doc.rules {
        let conds: Vec<String> = rule
            .conditions
            .iter()
            .map(|c| format!("{} {} {:.4}", c.column, c.op, c.threshold))
            .collect();
        let cond = if conds.is_empty() { "always".to_string() } else { conds.join(" and ") };
        println!("  if {cond} then class {} (p={:.3}, n={})", rule.class, rule.probability, rule.support);
    }
    ctx.manifest.clone().finish(export)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_robustness(
    ctx: &mut Ctx,
    features: &Path,
    feature_window: Option<String>,
    eval_window: Option<String>,
    chunks: Option<usize>,
    max_level: Option<usize>,
    max_rules: Option<usize>,
    min_leaf: Option<usize>,
    out_dir: &Path,
    svg: bool,
    seed: u64,
) -> anyhow::Result<()> {
    let window = parse_window(&ctx.resolve("feature-window", feature_window, "day".into())?)?;
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let n_chunks = ctx.resolve("chunks", chunks, 11usize)?;
    let max_level = ctx.resolve("max-level", max_level, 9usize)?;
    let max_rules = ctx.resolve("max-rules", max_rules, 4usize)?;
    let min_leaf = ctx.resolve("min-leaf", min_leaf, 50usize)?;
    let svg = ctx.resolve_bool("svg", svg);

    let rows = read_features(&mut ctx.manifest, features)?;
    let data = encode_all(window, eval, &rows)?;
    let rep = robustness_study(&data, max_rules, min_leaf, n_chunks, max_level, seed)?;

    fs::create_dir_all(out_dir)?;
    write_artifact(&mut ctx.manifest, &out_dir.join("robustness.csv"), &report::robustness_csv(&rep))?;

    let mut md = String::from("# Perturbation robustness\n\n");
    md.push_str(&format!(
        "{} rows, {} chunks (chunk 0 held out), perturbation levels 0..={}, seed {}.\n\n",
        rows.len(),
        n_chunks,
        max_level,
        seed
    ));
    let table_rows: Vec<Vec<String>> = rep
        .levels
        .iter()
        .map(|l| {
            vec![
                l.level.to_string(),
                format!("{:.4}", l.mean),
                format!("{:.4}", l.std),
                format!("{:.4}", l.min),
                format!("{:.4}", l.max),
            ]
        })
        .collect();
    md.push_str(&report::md_table(&["level", "mean", "std", "min", "max"], &table_rows));
    md.push_str("\nManifest: manifest.json\n");
    write_artifact(&mut ctx.manifest, &out_dir.join("report.md"), &md)?;

    if svg {
        let series: Vec<(String, Vec<(f64, f64)>)> = [
            ("mean", rep.levels.iter().map(|l| (l.level as f64, l.mean)).collect::<Vec<_>>()),
            ("min", rep.levels.iter().map(|l| (l.level as f64, l.min)).collect()),
            ("max", rep.levels.iter().map(|l| (l.level as f64, l.max)).collect()),
        ]
        .into_iter()
        .map(|(n, p)| (n.to_string(), p))
        .collect();
        write_artifact(
            &mut ctx.manifest,
            &out_dir.join("robustness.svg"),
            &report::svg_line_chart("Misclassification by perturbation level", &series),
        )?;
    }
    for l in &rep.levels {
        println!("robustness: level {} mean {:.4} std {:.4}", l.level, l.mean, l.std);
    }
    ctx.manifest.clone().finish(out_dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    ctx: &mut Ctx,
    input: &Path,
    predictions: Option<PathBuf>,
    features: Option<PathBuf>,
    eval_window: Option<String>,
    long_window: Option<String>,
    out_dir: &Path,
    svg: bool,
) -> anyhow::Result<()> {
    let eval = parse_eval(&ctx.resolve("eval-window", eval_window, "8:14".into())?)?;
    let long = parse_eval(&ctx.resolve("long-window", long_window, "60:67".into())?)?;
    let svg = ctx.resolve_bool("svg", svg);

    let log = read_log(&mut ctx.manifest, input)?;
    let summary = cohort_summary(&log);
    fs::create_dir_all(out_dir)?;

    let funnel = format!(
        "stage,players\ninstalled,{}\nopened,{}\nplayed,{}\npassed_filter,{}\n",
        summary.installed, summary.opened, summary.played, summary.passed_filter
    );
    write_artifact(&mut ctx.manifest, &out_dir.join("funnel.csv"), &funnel)?;
    let active: Vec<f64> = summary.active_by_day.iter().map(|&n| n as f64).collect();
    write_artifact(
        &mut ctx.manifest,
        &out_dir.join("active_by_day.csv"),
        &report::day_series_csv("active_players", &active),
    )?;
    write_artifact(
        &mut ctx.manifest,
        &out_dir.join("rounds_per_active_by_day.csv"),
        &report::day_series_csv("rounds_per_active", &summary.rounds_per_active_by_day),
    )?;

    let mut md = String::from("# Cohort report\n\n## Funnel\n\n");
    md.push_str(&report::md_table(
        &["stage", "players"],
        &[
            vec!["installed".into(), summary.installed.to_string()],
            vec!["opened".into(), summary.opened.to_string()],
            vec!["played".into(), summary.played.to_string()],
            vec!["passed_filter".into(), summary.passed_filter.to_string()],
        ],
    ));

    let cohort = apply_cohort_filter(&log);
    if let Some(pred_path) = predictions {
        ctx.manifest.record_input(&pred_path)?;
        ctx.manifest.param("predictions", pred_path.display().to_string());
        let mut predicted = BTreeMap::new();
        let mut rdr = csv::ReaderBuilder::new().from_reader(File::open(&pred_path)?);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| RetainError::Schema(e.to_string()))?;
            let pid = rec.get(0).unwrap_or_default().to_string();
            let class: u8 = rec
                .get(2)
                .unwrap_or_default()
                .parse()
                .map_err(|_| RetainError::Schema("bad class column".into()))?;
            predicted.insert(pid, class);
        }
        match longterm_analysis(&cohort, &predicted, eval, long) {
            Ok(lt) => {
                let csv = format!(
                    "n_players,base_rate_long,p_long_given_predicted,p_long_given_actual\n{},{:.6},{:.6},{:.6}\n",
                    lt.n_players, lt.base_rate_long, lt.p_long_given_predicted, lt.p_long_given_actual
                );
                write_artifact(&mut ctx.manifest, &out_dir.join("longterm.csv"), &csv)?;
                md.push_str("\n## Long-term retention\n\n");
                md.push_str(&report::md_table(
                    &["measure", "value"],
                    &[
                        vec!["players".into(), lt.n_players.to_string()],
                        vec!["base rate (long)".into(), format!("{:.4}", lt.base_rate_long)],
                        vec![
                            "P(long given predicted short-term)".into(),
                            format!("{:.4}", lt.p_long_given_predicted),
                        ],
                        vec![
                            "P(long given actual short-term)".into(),
                            format!("{:.4}", lt.p_long_given_actual),
                        ],
                    ],
                ));
            }
            Err(RetainError::InvalidArgument(msg)) => {
                md.push_str(&format!("\n## Long-term retention\n\nSkipped: {msg}.\n"));
            }
            Err(e) => return Err(e.into()),
        }
    }

    if let Some(feat_path) = features {
        let rows = read_features(&mut ctx.manifest, &feat_path)?;
        let data = encode_all(FeatureWindow::FirstDay, eval, &rows)?;
        let lr = fit_full(&data)?;
        let seed = ctx.manifest.master_seed;
        let rf = train_forest(&data, ForestParams::new(64, 4, seed))?;
        let rep = feature_report(&data, &lr, &rf);

        let mut csv = String::from("column,correlation,constant\n");
        for (c, r, k) in &rep.correlations {
            csv.push_str(&format!("{c},{r:.6},{k}\n"));
        }
        write_artifact(&mut ctx.manifest, &out_dir.join("correlations.csv"), &csv)?;
        let mut csv = String::from("term,coefficient,std_error\n");
        for (t, w, se) in &rep.lr_coefficients {
            csv.push_str(&format!("{t},{w:.6},{se:.6}\n"));
        }
        write_artifact(&mut ctx.manifest, &out_dir.join("lr_coefficients.csv"), &csv)?;
        let mut csv = String::from("column,importance\n");
        for (c, v) in &rep.rf_importance {
            csv.push_str(&format!("{c},{v:.6}\n"));
        }
        write_artifact(&mut ctx.manifest, &out_dir.join("rf_importance.csv"), &csv)?;

        md.push_str("\n## Feature strength (top forest importances)\n\n");
        let top: Vec<Vec<String>> = rep
            .rf_importance
            .iter()
            .take(8)
            .map(|(c, v)| vec![c.clone(), format!("{v:.4}")])
            .collect();
        md.push_str(&report::md_table(&["column", "importance"], &top));

        if svg {
            let bars: Vec<(String, f64)> = rep.rf_importance.iter().take(10).cloned().collect();
            write_artifact(
                &mut ctx.manifest,
                &out_dir.join("rf_importance.svg"),
                &report::svg_bar_chart("Forest feature importance", &bars),
            )?;
        }
    }

    if svg {
        let pts: Vec<(f64, f64)> = active.iter().enumerate().map(|(d, &v)| (d as f64, v)).collect();
        write_artifact(
            &mut ctx.manifest,
            &out_dir.join("active_by_day.svg"),
            &report::svg_line_chart("Active players by relative day", &[("active".to_string(), pts)]),
        )?;
        let bars: Vec<(String, f64)> = summary
            .rounds_per_active_by_day
            .iter()
            .enumerate()
            .map(|(d, &v)| (d.to_string(), v))
            .collect();
        write_artifact(
            &mut ctx.manifest,
            &out_dir.join("rounds_per_active_by_day.svg"),
            &report::svg_bar_chart("Rounds per active player by relative day", &bars),
        )?;
    }

    md.push_str("\nManifest: manifest.json\n");
    write_artifact(&mut ctx.manifest, &out_dir.join("report.md"), &md)?;
    println!(
        "report: {} installed, {} passed filter -> {}",
        summary.installed,
        summary.passed_filter,
        out_dir.display()
    );
    ctx.manifest.clone().finish(out_dir)?;
    Ok(())
}
