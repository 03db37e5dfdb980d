//! The `dch` command line: train, round, recommend, evaluate, bench and
//! generate.
//!
//! A model directory holds `users.tsv` and `items.tsv` (relaxed factors keyed
//! by external id), `loss_trace.csv`, `model.json` and, after `round`,
//! `users.codes` and `items.codes` with their `.ids` sidecars.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use dch_core::model::round_codes;
use dch_core::retrieval::{Method, Query, Recommender};
use dch_core::{CodeSet, Dataset, FactorMatrices, RatingScale};
use serde::{Deserialize, Serialize};

use crate::bench::{training_sweep, write_ranking_csv, write_training_csv, RankingBench};
use crate::config::{ObjectiveKind, RunConfig};
use crate::eval::{evaluate, reports_to_csv, reports_to_json, EvalReport, ModelOutputs, SplitSpec};
use crate::io::{
    load_codes, load_factors, load_ratings, save_codes, save_factors, write_trace, write_tsv,
    LoadedRatings, RatingsFile,
};
use crate::runtime::{train, TrainingConfig, TrainingOutput};
use crate::synth::{generate, SynthSpec};

/// Command-line arguments.
#[derive(Debug, Parser)]
#[command(name = "dch", version, about = "Distributed collaborative hashing")]
pub struct Cli {
    /// Subcommand.
    #[command(subcommand)]
    pub command: Command,
}

/// Subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train relaxed factors on a ratings file.
    Train(Common),
    /// Round saved factors to binary codes.
    Round(Common),
    /// Recommend items for users from a model directory.
    Recommend(RecommendArgs),
    /// Precision@k and DCG@k on a held-out split.
    Evaluate(EvaluateArgs),
    /// Ranking and training timing sweeps.
    Bench(BenchArgs),
    /// Write a synthetic ratings file.
    Generate(GenerateArgs),
}

/// Flags shared by every subcommand; each overrides the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ratings file or directory.
    #[arg(long)]
    pub input: Option<String>,
    /// Output file or directory.
    #[arg(long)]
    pub output: Option<String>,
    /// Model directory.
    #[arg(long)]
    pub model: Option<String>,
    /// Ratings layout: tsv or netflix.
    #[arg(long)]
    pub format: Option<String>,
    /// Rating scale: MIN-MAX or binary.
    #[arg(long)]
    pub scale: Option<String>,
    /// Share of ratings used for training.
    #[arg(long)]
    pub train_fraction: Option<String>,
    /// Objective: dch or mf.
    #[arg(long)]
    pub objective: Option<String>,
    /// Schedule: deterministic or threaded.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Code length.
    #[arg(long)]
    pub k: Option<String>,
    /// Regularization weight.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Learning rate.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Projection parameter; factors are kept within radius 1/sqrt(gamma).
    #[arg(long)]
    pub gamma: Option<String>,
    /// Minibatch size per worker operation.
    #[arg(long)]
    pub batch_size: Option<String>,
    /// Worker count.
    #[arg(long)]
    pub workers: Option<String>,
    /// Server shard count.
    #[arg(long)]
    pub servers: Option<String>,
    /// Operations per worker between barriers.
    #[arg(long)]
    pub staleness: Option<String>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<String>,
    /// Seed for every random choice.
    #[arg(long)]
    pub seed: Option<String>,
    /// Retrieval method: linear, lookup, rank, multi-index or real.
    #[arg(long)]
    pub method: Option<String>,
    /// Results per query.
    #[arg(long)]
    pub top_k: Option<String>,
    /// Hamming radius.
    #[arg(long)]
    pub radius: Option<String>,
    /// Substrings for multi-index hashing.
    #[arg(long)]
    pub subcodes: Option<String>,
}

impl Common {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("input", &self.input),
            ("output", &self.output),
            ("model", &self.model),
            ("format", &self.format),
            ("scale", &self.scale),
            ("train-fraction", &self.train_fraction),
            ("objective", &self.objective),
            ("schedule", &self.schedule),
            ("k", &self.k),
            ("lambda", &self.lambda),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("batch-size", &self.batch_size),
            ("workers", &self.workers),
            ("servers", &self.servers),
            ("staleness", &self.staleness),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("method", &self.method),
            ("top-k", &self.top_k),
            ("radius", &self.radius),
            ("subcodes", &self.subcodes),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            config.set(k, v)?;
        }
        Ok(config)
    }
}

/// `recommend` arguments.
#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// Shared flags; `--input` names a ratings file whose items are excluded.
    #[command(flatten)]
    pub common: Common,
    /// External user ids to answer for.
    #[arg(required = true)]
    pub users: Vec<String>,
}

/// `evaluate` arguments.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Shared flags.
    #[command(flatten)]
    pub common: Common,
    /// Cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
    /// Report layout: csv or json.
    #[arg(long, default_value = "csv")]
    pub report: String,
}

/// `bench` arguments.
#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Shared flags; `--k` is the fixed code length of the N sweep.
    #[command(flatten)]
    pub common: Common,
    /// Code lengths of the K sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,15,25,35")]
    pub ks: Vec<usize>,
    /// Item counts of the N sweep.
    #[arg(long, value_delimiter = ',', default_value = "2000,5000,10000,17770")]
    pub ns: Vec<usize>,
    /// Fixed item count of the K sweep.
    #[arg(long, default_value_t = 17_770)]
    pub n: usize,
    /// Queries per repetition.
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    /// Timed repetitions (at least 5).
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Worker counts of the training sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub worker_counts: Vec<usize>,
    /// Skip the training sweep.
    #[arg(long)]
    pub skip_training: bool,
}

/// `generate` arguments.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output TSV path.
    #[arg(long)]
    pub output: PathBuf,
    /// Preset: movielens-100k, toy or implicit.
    #[arg(long, default_value = "toy")]
    pub preset: String,
    /// Users for toy and implicit.
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    /// Items for toy and implicit.
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    /// Observed share of all pairs for toy and implicit.
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    /// Seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Metadata written beside the factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// `dch` or `mf`.
    pub objective: String,
    /// Ratings the model was trained on.
    pub input: Option<PathBuf>,
    /// `tsv` or `netflix`.
    pub format: String,
    /// `MIN-MAX` or `binary`.
    pub scale: String,
    /// Share of ratings used for training; 1 means no held-out set.
    pub train_fraction: f64,
    /// Seed of the run and of the split.
    pub seed: u64,
    /// Code length.
    pub k: usize,
    /// Regularization weight.
    pub lambda: f64,
    /// Learning rate.
    pub alpha: f64,
    /// Projection parameter.
    pub gamma: f64,
    /// Minibatch size.
    pub batch_size: usize,
    /// Workers.
    pub workers: usize,
    /// Server shards.
    pub servers: usize,
    /// Operations between barriers.
    pub staleness: usize,
    /// Epoch budget.
    pub epochs: usize,
    /// Barriers run.
    pub barriers: u64,
    /// Loss after the last barrier.
    pub final_loss: f64,
}

impl ModelMeta {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        for (k, v) in [
            ("objective", self.objective.clone()),
            ("format", self.format.clone()),
            ("scale", self.scale.clone()),
            ("train-fraction", self.train_fraction.to_string()),
            ("seed", self.seed.to_string()),
            ("k", self.k.to_string()),
            ("lambda", self.lambda.to_string()),
            ("alpha", self.alpha.to_string()),
            ("gamma", self.gamma.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("workers", self.workers.to_string()),
            ("servers", self.servers.to_string()),
            ("staleness", self.staleness.to_string()),
            ("epochs", self.epochs.to_string()),
        ] {
            c.set(k, &v)?;
        }
        c.input = self.input.clone();
        Ok(c)
    }
}

fn scale_name(scale: RatingScale) -> String {
    match scale {
        RatingScale::Binary => "binary".into(),
        RatingScale::Stars { min, max } => format!("{min}-{max}"),
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => cmd_train(&c.resolve()?),
        Command::Round(c) => cmd_round(&c.resolve()?),
        Command::Recommend(a) => cmd_recommend(&a.common.resolve()?, &a.users),
        Command::Evaluate(a) => cmd_evaluate(&a.common.resolve()?, &a.ks, &a.report),
        Command::Bench(a) => cmd_bench(&a),
        Command::Generate(a) => cmd_generate(&a),
    }
}

fn load(config: &RunConfig) -> Result<LoadedRatings> {
    let path = config.input.clone().context("--input is required")?;
    let file = RatingsFile {
        format: config.format,
        path,
    };
    load_ratings(&file, config.scale).with_context(|| format!("loading {}", file.path.display()))
}

fn split(config: &RunConfig, data: &Dataset, fraction: f64) -> Result<(Dataset, Dataset)> {
    ensure!(
        fraction > 0.0 && fraction < 1.0,
        "--train-fraction must lie in (0, 1) to hold out a test set, got {fraction}"
    );
    Ok(SplitSpec {
        train_fraction: fraction,
        seed: config.hyper.seed,
    }
    .apply(data)?)
}

fn training_config(config: &RunConfig) -> TrainingConfig {
    let mut t = TrainingConfig::dch(config.hyper.clone());
    t.objective = config.objective();
    if config.threaded {
        t = t.threaded(Duration::ZERO);
    }
    t
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output.clone().context("--output is required")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_model(
    dir: &Path,
    ratings: &LoadedRatings,
    out: &TrainingOutput,
    meta: &ModelMeta,
) -> Result<()> {
    let dim = meta.k;
    save_factors(
        &dir.join("users.tsv"),
        dim,
        &ratings.user_ids,
        out.factors.users(),
    )?;
    save_factors(
        &dir.join("items.tsv"),
        dim,
        &ratings.item_ids,
        out.factors.items(),
    )?;
    let trace = BufWriter::new(fs::File::create(dir.join("loss_trace.csv"))?);
    write_trace(&out.trace, trace)?;
    fs::write(
        dir.join("model.json"),
        serde_json::to_string_pretty(meta)? + "\n",
    )?;
    Ok(())
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    let ratings = load(config)?;
    let fraction = config.train_fraction.unwrap_or(1.0);
    let train_set = if fraction == 1.0 {
        ratings.data.clone()
    } else {
        split(config, &ratings.data, fraction)?.0
    };
    let dir = output_dir(config)?;
    let out = train(&train_set, &training_config(config))?;
    let h = &config.hyper;
    let meta = ModelMeta {
        objective: match config.objective {
            ObjectiveKind::Dch => "dch".into(),
            ObjectiveKind::Mf => "mf".into(),
        },
        input: config.input.clone(),
        format: match config.format {
            crate::io::RatingsFormat::Tsv => "tsv".into(),
            crate::io::RatingsFormat::NetflixPrize => "netflix".into(),
        },
        scale: scale_name(config.scale),
        train_fraction: fraction,
        seed: h.seed,
        k: h.code_bits,
        lambda: h.lambda,
        alpha: h.learning_rate,
        gamma: h.gamma,
        batch_size: h.batch_size,
        workers: h.workers,
        servers: h.servers,
        staleness: h.sync_period,
        epochs: h.epochs,
        barriers: out.stats.barriers,
        final_loss: out.trace.last().map_or(f64::NAN, |p| p.loss),
    };
    write_model(&dir, &ratings, &out, &meta)?;
    eprintln!(
        "trained {} users x {} items over {} ratings: {} barriers, loss {:.6} ({:?})",
        ratings.data.num_users(),
        ratings.data.num_items(),
        train_set.len(),
        out.stats.barriers,
        meta.final_loss,
        out.stats.stop
    );
    Ok(())
}

fn model_dir(config: &RunConfig) -> Result<PathBuf> {
    config.model.clone().context("--model is required")
}

fn read_model(dir: &Path) -> Result<(FactorMatrices, Vec<String>, Vec<String>)> {
    let users = load_factors(&dir.join("users.tsv"))?;
    let items = load_factors(&dir.join("items.tsv"))?;
    ensure!(
        users.dim == items.dim,
        "user factors have {} columns but item factors {}",
        users.dim,
        items.dim
    );
    let fm = FactorMatrices::from_rows(users.dim, users.values, items.values);
    Ok((fm, users.ids, items.ids))
}

fn cmd_round(config: &RunConfig) -> Result<()> {
    let dir = config
        .model
        .clone()
        .or_else(|| config.input.clone())
        .context("--model is required")?;
    let out = config.output.clone().unwrap_or_else(|| dir.clone());
    fs::create_dir_all(&out)?;
    let (fm, user_ids, item_ids) = read_model(&dir)?;
    let (users, items) = round_codes(&fm);
    let k = dch_core::FactorView::dim(&fm);
    save_codes(
        &CodeSet::from_codes(k, &users, Some(user_ids))?,
        &out.join("users.codes"),
    )?;
    save_codes(
        &CodeSet::from_codes(k, &items, Some(item_ids))?,
        &out.join("items.codes"),
    )?;
    Ok(())
}

fn cmd_recommend(config: &RunConfig, users: &[String]) -> Result<()> {
    let dir = model_dir(config)?;
    let method = config.method;
    let params = config.query;

    // Real-valued ranking needs no codes; the facade still wants an item
    // universe, so the ids ride on empty 1-bit codes.
    let (user_ids, user_codes, item_codes, factors) = if method == Method::Real {
        let (fm, user_ids, item_ids) = read_model(&dir)?;
        let blank = vec![dch_core::HashCode::zeros(1); item_ids.len()];
        let items = CodeSet::from_codes(1, &blank, Some(item_ids))?;
        (user_ids, None, items, Some(fm))
    } else {
        let users = load_codes(&dir.join("users.codes"))?;
        let items = load_codes(&dir.join("items.codes"))?;
        (users.ids().to_vec(), Some(users), items, None)
    };
    let user_pos: std::collections::HashMap<&str, usize> = user_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let seen_by_user = match &config.input {
        Some(_) => {
            let ratings = load(config)?;
            let mut seen: std::collections::HashMap<String, Vec<u32>> = Default::default();
            for t in ratings.data.triples() {
                let item = &ratings.item_ids[t.item as usize];
                if let Some(p) = item_codes.position_of(item) {
                    seen.entry(ratings.user_ids[t.user as usize].clone())
                        .or_default()
                        .push(p as u32);
                }
            }
            for v in seen.values_mut() {
                v.sort_unstable();
                v.dedup();
            }
            seen
        }
        None => Default::default(),
    };

    let mut recommender = Recommender::new(&item_codes);
    match method {
        Method::Lookup => recommender = recommender.with_hash_index(),
        Method::MultiIndex => recommender = recommender.with_multi_index(params.subcodes)?,
        Method::Real => {
            recommender =
                recommender.with_item_vectors(factors.as_ref().expect("loaded above").items())
        }
        Method::Linear | Method::Rank => {}
    }

    let mut out: Box<dyn Write> = match &config.output {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(out, "user\trank\titem\tscore")?;
    for user in users {
        let Some(&pos) = user_pos.get(user.as_str()) else {
            bail!("unknown user id {user:?}");
        };
        let code;
        let query = match &factors {
            Some(fm) => {
                let d = dch_core::FactorView::dim(fm);
                Query::Vector(&fm.users()[pos * d..(pos + 1) * d])
            }
            None => {
                code = user_codes.as_ref().expect("loaded above").code(pos);
                Query::Code(&code)
            }
        };
        let seen = seen_by_user.get(user).map_or(&[][..], Vec::as_slice);
        let recs = recommender.recommend(query, method, &params, seen)?;
        for (rank, r) in recs.iter().enumerate() {
            writeln!(
                out,
                "{user}\t{}\t{}\t{}",
                rank + 1,
                item_codes.id(r.position),
                r.score
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn check_ids(ratings: &LoadedRatings, users: &[String], items: &[String]) -> Result<()> {
    ensure!(
        ratings.user_ids == users && ratings.item_ids == items,
        "model ids do not match the ratings file; was it trained on different input?"
    );
    Ok(())
}

fn evaluate_factors(
    objective: &str,
    fm: &FactorMatrices,
    train_set: &Dataset,
    test: &Dataset,
    ks: &[usize],
) -> Result<Vec<EvalReport>> {
    let (users, items) = round_codes(fm);
    let codes = ModelOutputs::Codes {
        users: &users,
        items: &items,
    };
    Ok(match objective {
        "mf" => vec![
            evaluate(ModelOutputs::vectors(fm), train_set, test, ks, "MF")?,
            evaluate(codes, train_set, test, ks, "MFH")?,
        ],
        _ => vec![evaluate(codes, train_set, test, ks, "DCH")?],
    })
}

fn cmd_evaluate(config: &RunConfig, ks: &[usize], report: &str) -> Result<()> {
    ensure!(
        report == "csv" || report == "json",
        "--report must be csv or json"
    );
    let reports = match &config.model {
        Some(dir) => {
            let meta: ModelMeta = serde_json::from_str(
                &fs::read_to_string(dir.join("model.json")).context("reading model.json")?,
            )?;
            ensure!(
                meta.train_fraction < 1.0,
                "the model was trained on every rating; retrain with --train-fraction below 1"
            );
            let mut stored = meta.run_config()?;
            if config.input.is_some() {
                stored.input = config.input.clone();
                stored.format = config.format;
                stored.scale = config.scale;
            }
            let ratings = load(&stored)?;
            let (train_set, test) = split(&stored, &ratings.data, meta.train_fraction)?;
            let (fm, users, items) = read_model(dir)?;
            check_ids(&ratings, &users, &items)?;
            evaluate_factors(&meta.objective, &fm, &train_set, &test, ks)?
        }
        None => {
            let ratings = load(config)?;
            let fraction = config.train_fraction.unwrap_or(0.8);
            let (train_set, test) = split(config, &ratings.data, fraction)?;
            let mut reports = Vec::new();
            for (name, kind) in [("dch", ObjectiveKind::Dch), ("mf", ObjectiveKind::Mf)] {
                let mut c = config.clone();
                c.objective = kind;
                let out = train(&train_set, &training_config(&c))?;
                reports.extend(evaluate_factors(name, &out.factors, &train_set, &test, ks)?);
            }
            reports
        }
    };
    let text = if report == "json" {
        reports_to_json(&reports) + "\n"
    } else {
        reports_to_csv(&reports)
    };
    match &config.output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let dir = output_dir(&config)?;
    let bench = RankingBench {
        queries: args.queries,
        reps: args.reps,
        top_k: config.query.top_k,
        radius: config.query.radius,
        seed: config.hyper.seed,
    };
    ensure!(args.reps >= 5, "--reps must be at least 5");
    let by_k = bench.sweep_k(&args.ks, args.n);
    write_ranking_csv(
        &by_k,
        BufWriter::new(fs::File::create(dir.join("ranking_vs_k.csv"))?),
    )?;
    let by_n = bench.sweep_n(config.hyper.code_bits, &args.ns);
    write_ranking_csv(
        &by_n,
        BufWriter::new(fs::File::create(dir.join("ranking_vs_n.csv"))?),
    )?;
    if !args.skip_training {
        let data = match &config.input {
            Some(_) => load(&config)?.data,
            None => generate(&SynthSpec::toy(500, 300, 0.05, config.hyper.seed))?,
        };
        let rows = training_sweep(&data, &config.hyper, &args.worker_counts, args.reps)?;
        write_training_csv(
            &rows,
            BufWriter::new(fs::File::create(dir.join("training_vs_workers.csv"))?),
        )?;
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = match args.preset.as_str() {
        "movielens-100k" => SynthSpec::movielens_100k(args.seed),
        "toy" => SynthSpec::toy(args.users, args.items, args.density, args.seed),
        "implicit" => SynthSpec::implicit(args.users, args.items, args.density, args.seed),
        other => bail!("unknown preset {other:?}"),
    };
    let data = generate(&spec)?;
    let users: Vec<String> = (0..data.num_users()).map(|i| format!("u{i}")).collect();
    let items: Vec<String> = (0..data.num_items()).map(|j| format!("i{j}")).collect();
    let out = BufWriter::new(fs::File::create(&args.output)?);
    write_tsv(&data, &users, &items, out)?;
    Ok(())
}
