//! Command-line front end: training, evaluation, angle analysis, dataset
//! generation, fiber projection, gradient checking, and relation statistics.
//!
//! Numeric options may come from a JSON config file (`--config`); explicit
//! flags override file values. Exit code 2 marks a configuration error, 1 a
//! runtime failure. `HOPFE_LOG` in {error, info, debug} controls logging.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::data::{self, FilterIndex, Split, TripleStore};
use crate::error::{HopfeError, Result};
use crate::eval::{self, RelationSet};
use crate::hopf;
use crate::model::{
    self, load_checkpoint, save_checkpoint, Matching, ModelConfig, ModelParams, Variant,
};
use crate::training::{self, TrainConfig};

#[derive(Parser)]
#[command(name = "hopfe", about = "Knowledge-graph embeddings on the Hopf fibration", version)]
struct Cli {
    /// Worker threads for batch gradients and evaluation (1 = bit-exact).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Hopfe,
    NoHopf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchingArg {
    Sinkhorn,
    Min,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint plus JSON-lines log.
    Train(TrainArgs),
    /// Evaluate a checkpoint with filtered ranking.
    Eval(EvalArgs),
    /// Write wrapped-angle and norm histograms for relation sets.
    Analyze(AnalyzeArgs),
    /// Generate a random graph dataset.
    Generate(GenerateArgs),
    /// Write stereographic fiber projections for chosen entities.
    Project(ProjectArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Relation category statistics over the train split.
    Stats(StatsArgs),
}

/// Options shared between the config file and flags; every field optional so
/// flag-vs-file precedence is visible.
#[derive(Args, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelOpts {
    /// Embedding dimension k.
    #[arg(long)]
    dim: Option<usize>,
    /// Attribute heads H.
    #[arg(long)]
    heads: Option<usize>,
    /// Triples per step.
    #[arg(long)]
    batch: Option<usize>,
    /// Negatives per positive.
    #[arg(long)]
    neg: Option<usize>,
    /// Self-adversarial temperature.
    #[arg(long)]
    alpha: Option<f64>,
    /// Loss margin.
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Learning-rate decay factor reached at the final step.
    #[arg(long)]
    decay: Option<f64>,
    /// Training steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Steps between validation logs.
    #[arg(long, value_name = "N")]
    valid_every: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(default)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    #[serde(default)]
    matching: Option<MatchingArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steps between finite-difference spot checks (0 = off).
    #[arg(long, value_name = "N")]
    grad_check_interval: Option<usize>,
}

// Serde needs the enums too when they appear in a config file.
impl<'de> Deserialize<'de> for VariantArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "hopfe" => Ok(VariantArg::Hopfe),
            "no-hopf" => Ok(VariantArg::NoHopf),
            other => Err(serde::de::Error::custom(format!("unknown variant '{other}'"))),
        }
    }
}

impl<'de> Deserialize<'de> for MatchingArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "sinkhorn" => Ok(MatchingArg::Sinkhorn),
            "min" => Ok(MatchingArg::Min),
            other => Err(serde::de::Error::custom(format!("unknown matching '{other}'"))),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Directory with train.txt / valid.txt / test.txt.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint and log.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attribute text file for semantic phase initialization.
    #[arg(long)]
    semantics: Option<PathBuf>,
    /// Token vector file accompanying --semantics.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Named preset; `paper` applies the published hyperparameters
    /// (dim 100, batch 512, neg 64, 100k steps) for benchmark-scale runs.
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "min")]
    matching: MatchingArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Inverse pair `r1,r2`; repeatable.
    #[arg(long, value_name = "R1,R2")]
    inverse: Vec<String>,
    /// Composition triple `r1,r2,r3`; repeatable.
    #[arg(long, value_name = "R1,R2,R3")]
    compose: Vec<String>,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    avg_degree: f64,
    #[arg(long, default_value_t = 1)]
    relations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated entity names.
    #[arg(long, value_delimiter = ',')]
    entities: Vec<String>,
    /// Samples along each fiber.
    #[arg(long, default_value_t = 128)]
    count: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses argv, dispatches, and maps errors to exit codes.
pub fn run() -> i32 {
    let env = env_logger::Env::new().filter_or("HOPFE_LOG", "info");
    let _ = env_logger::Builder::from_env(env).try_init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads < 1 {
            eprintln!("error: --threads must be >= 1");
            return 2;
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Project(args) => cmd_project(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HopfeError::InvalidConfig(_) => 2,
                _ => 1,
            }
        }
    }
}

fn merge(file: ModelOpts, flags: ModelOpts) -> ModelOpts {
    ModelOpts {
        dim: flags.dim.or(file.dim),
        heads: flags.heads.or(file.heads),
        batch: flags.batch.or(file.batch),
        neg: flags.neg.or(file.neg),
        alpha: flags.alpha.or(file.alpha),
        gamma: flags.gamma.or(file.gamma),
        lr: flags.lr.or(file.lr),
        decay: flags.decay.or(file.decay),
        steps: flags.steps.or(file.steps),
        valid_every: flags.valid_every.or(file.valid_every),
        variant: flags.variant.or(file.variant),
        matching: flags.matching.or(file.matching),
        seed: flags.seed.or(file.seed),
        grad_check_interval: flags.grad_check_interval.or(file.grad_check_interval),
    }
}

fn resolve_configs(opts: &ModelOpts) -> Result<(ModelConfig, TrainConfig)> {
    let variant = match opts.variant.unwrap_or(VariantArg::Hopfe) {
        VariantArg::Hopfe => Variant::Hopfe,
        VariantArg::NoHopf => Variant::NoHopf,
    };
    let heads = opts.heads.unwrap_or(1);
    if variant == Variant::NoHopf && heads > 1 {
        return Err(HopfeError::InvalidConfig(
            "--heads > 1 requires the fibration; drop --variant no-hopf or use --heads 1".into(),
        ));
    }
    let model_cfg = ModelConfig {
        dim: opts.dim.unwrap_or(100),
        heads,
        variant,
        matching: match opts.matching.unwrap_or(MatchingArg::Min) {
            MatchingArg::Sinkhorn => Matching::Sinkhorn,
            MatchingArg::Min => Matching::Min,
        },
        gamma: opts.gamma.unwrap_or(12.0),
        alpha: opts.alpha.unwrap_or(1.0),
    };
    let steps = opts.steps.unwrap_or(1000);
    let train_cfg = TrainConfig {
        batch_size: opts.batch.unwrap_or(512),
        neg_samples: opts.neg.unwrap_or(64),
        learning_rate: opts.lr.unwrap_or(0.1),
        decay_rate: opts.decay.unwrap_or(0.1),
        max_steps: steps,
        seed: opts.seed.unwrap_or(0),
        valid_every: opts.valid_every.unwrap_or((steps / 5).max(1)),
        grad_check_interval: opts.grad_check_interval.unwrap_or(0),
    };
    model_cfg.validate()?;
    train_cfg.validate()?;
    Ok((model_cfg, train_cfg))
}

fn load_config_file(path: &Path) -> Result<ModelOpts> {
    let text = std::fs::read_to_string(path)?;
    let opts: ModelOpts = serde_json::from_str(&text)
        .map_err(|e| HopfeError::InvalidConfig(format!("--config {}: {e}", path.display())))?;
    Ok(opts)
}

fn load_data(dir: &Path) -> Result<(TripleStore, data::LoadReport)> {
    data::load_triples(
        &dir.join("train.txt"),
        &dir.join("valid.txt"),
        &dir.join("test.txt"),
    )
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(p, content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn infer_vector_width(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)?;
    for line in text.lines() {
        let n = line.split_whitespace().count();
        if n > 1 {
            return Ok(n - 1);
        }
    }
    Err(HopfeError::ParseError {
        file: path.display().to_string(),
        line: 1,
        msg: "no vector lines found".into(),
    })
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let file_opts = match &args.config {
        Some(p) => load_config_file(p)?,
        None => ModelOpts::default(),
    };
    let mut opts = merge(file_opts, args.opts);
    if args.profile == Some(Profile::Paper) {
        // Benchmark-scale preset. Place the published benchmark split files
        // (e.g. WN18RR, FB15k-237) under --data; expect hours of CPU time.
        opts.dim = opts.dim.or(Some(100));
        opts.batch = opts.batch.or(Some(512));
        opts.neg = opts.neg.or(Some(64));
        opts.steps = opts.steps.or(Some(100_000));
        log::info!(
            "profile=paper: benchmark preset; this is a long run intended for \
             full benchmark splits placed in {}",
            args.data.display()
        );
    }
    let (model_cfg, train_cfg) = resolve_configs(&opts)?;
    let (store, report) = load_data(&args.data)?;
    log::info!(
        "loaded {} entities, {} relations, {} triples ({} duplicates dropped)",
        store.num_entities(),
        store.num_relations(),
        store.triples.len(),
        report.duplicates_dropped
    );

    let semantic_phases = match (&args.semantics, &args.vectors) {
        (Some(attrs), Some(vecs)) => {
            let width = infer_vector_width(vecs)?;
            let (table, rep) = data::load_attributes(attrs, vecs, width)?;
            if rep.oov_attributes > 0 {
                log::warn!("{} attributes had no in-vocabulary tokens", rep.oov_attributes);
            }
            let proj = data::SemanticProjection::init(
                model_cfg.dim,
                model_cfg.heads,
                width,
                train_cfg.seed,
            );
            Some((table, proj))
        }
        (None, None) => None,
        _ => {
            return Err(HopfeError::InvalidConfig(
                "--semantics and --vectors must be given together".into(),
            ))
        }
    };

    std::fs::create_dir_all(&args.out)?;
    let (params, log_records) = if let Some((table, proj)) = semantic_phases {
        train_with_semantic_init(&store, &train_cfg, &model_cfg, &table, &proj)?
    } else {
        training::train(&store, &train_cfg, &model_cfg)?
    };

    let ckpt = args.out.join("model.ckpt");
    save_checkpoint(&params, model_cfg.variant, &ckpt)?;
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(args.out.join("train.log.jsonl"))?);
    for record in &log_records {
        serde_json::to_writer(&mut log_file, record)?;
        log_file.write_all(b"\n")?;
    }
    log_file.flush()?;
    if let Some(last) = log_records.last() {
        println!(
            "final step {}: loss {:.6} mrr {:.4} hits@10 {:.4}",
            last.step, last.loss, last.mrr, last.hits10
        );
    }
    log::info!("checkpoint written to {}", ckpt.display());
    Ok(0)
}

/// Training with entity phases seeded from attribute semantics before the
/// usual loop takes over.
fn train_with_semantic_init(
    store: &TripleStore,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    table: &data::AttributeTable,
    proj: &data::SemanticProjection,
) -> Result<(ModelParams, Vec<training::LogRecord>)> {
    // Mirror train(): same init and sampling stream, phases overridden where
    // semantics exist.
    let mut params = model::init_model(
        store.num_entities(),
        store.num_relations(),
        model_cfg,
        train_cfg.seed,
    )?;
    let mut seeded = 0usize;
    for (e, name) in store.entity_names.iter().enumerate() {
        if let Some(phases) = data::attribute_phases(table, proj, name)? {
            let base = e * model_cfg.dim * model_cfg.heads;
            params.entity_phases[base..base + phases.len()].copy_from_slice(&phases);
            seeded += 1;
        }
    }
    log::info!("semantic phase init for {seeded} of {} entities", store.num_entities());
    training::resume(store, train_cfg, model_cfg, params)
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let (params, variant) = load_checkpoint(&args.checkpoint)?;
    let (store, _) = load_data(&args.data)?;
    if store.num_entities() != params.num_entities || store.num_relations() != params.num_relations
    {
        return Err(HopfeError::ShapeMismatch(format!(
            "checkpoint has {} entities / {} relations, data has {} / {}",
            params.num_entities,
            params.num_relations,
            store.num_entities(),
            store.num_relations()
        )));
    }
    let cfg = ModelConfig {
        dim: params.dim,
        heads: params.heads,
        variant,
        matching: match args.matching {
            MatchingArg::Sinkhorn => Matching::Sinkhorn,
            MatchingArg::Min => Matching::Min,
        },
        ..ModelConfig::default()
    };
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    };
    let filter = FilterIndex::build(&store);
    let report = eval::evaluate_split(split, &params, &store, &filter, &cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    write_or_print(args.out.as_deref(), &format!("{json}\n"))?;
    Ok(0)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<i32> {
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let (store, _) = load_data(&args.data)?;
    let mut sets = Vec::new();
    for pair in &args.inverse {
        let parts: Vec<&str> = pair.split(',').collect();
        if parts.len() != 2 {
            return Err(HopfeError::InvalidConfig(format!(
                "--inverse expects R1,R2 but got '{pair}'"
            )));
        }
        sets.push(RelationSet::InversePair(parts[0].into(), parts[1].into()));
    }
    for triple in &args.compose {
        let parts: Vec<&str> = triple.split(',').collect();
        if parts.len() != 3 {
            return Err(HopfeError::InvalidConfig(format!(
                "--compose expects R1,R2,R3 but got '{triple}'"
            )));
        }
        sets.push(RelationSet::CompositionTriple(
            parts[0].into(),
            parts[1].into(),
            parts[2].into(),
        ));
    }
    if sets.is_empty() {
        return Err(HopfeError::InvalidConfig(
            "give at least one --inverse or --compose set".into(),
        ));
    }
    if args.bins < 2 {
        return Err(HopfeError::InvalidConfig("--bins must be >= 2".into()));
    }
    let hists = eval::angle_histograms(&params, &store, &sets, args.bins)?;
    write_or_print(args.out.as_deref(), &eval::histograms_to_csv(&hists))?;
    Ok(0)
}

fn cmd_generate(args: GenerateArgs) -> Result<i32> {
    let store = data::generate_er_graph(args.n, args.avg_degree, args.relations, args.seed)?;
    data::save_store(&store, &args.out)?;
    println!(
        "wrote {} triples over {} entities to {}",
        store.triples.len(),
        store.num_entities(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_project(args: ProjectArgs) -> Result<i32> {
    if args.entities.is_empty() {
        return Err(HopfeError::InvalidConfig("--entities must not be empty".into()));
    }
    if args.count < 2 {
        return Err(HopfeError::InvalidConfig("--count must be >= 2".into()));
    }
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let (store, _) = load_data(&args.data)?;
    let mut csv = String::from("entity,dim,t,x,y,z\n");
    for name in &args.entities {
        let e = store.entity_id(name)?;
        for d in 0..params.dim {
            let p = params.entity_point(e, d);
            let unit = p.scaled(1.0 / p.norm().max(1e-300));
            let unit = if unit.norm().is_finite() && unit.norm() > 0.5 {
                unit
            } else {
                crate::quat::Vec3::new(1.0, 0.0, 0.0)
            };
            for (t, q) in hopf::project_fiber(unit, args.count)? {
                csv.push_str(&format!("{name},{d},{t},{},{},{}\n", q.x, q.y, q.z));
            }
        }
    }
    write_or_print(args.out.as_deref(), &csv)?;
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    let rows: Vec<(String, String, String)> = (0..4)
        .map(|i| {
            (
                format!("e{i}"),
                format!("r{}", i % 2),
                format!("e{}", (i + 1) % 4),
            )
        })
        .collect();
    let (store, _) = data::build_store(rows, Vec::new(), Vec::new())?;
    let filter = FilterIndex::build(&store);
    let mut worst: f64 = 0.0;
    for variant in [Variant::Hopfe, Variant::NoHopf] {
        for matching in [Matching::Min, Matching::Sinkhorn] {
            let heads = if variant == Variant::NoHopf { 1 } else { 2 };
            let cfg = ModelConfig {
                dim: 2,
                heads,
                variant,
                matching,
                gamma: 12.0,
                alpha: 1.0,
            };
            let params = model::init_model(4, 2, &cfg, args.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let batch = training::sample_batch(&store, &filter, 2, 2, &mut rng);
            let err = training::finite_difference_check(&batch, &params, &cfg, 1e-6)?;
            println!("{variant:?}/{matching:?}: max relative error {err:.3e}");
            worst = worst.max(err);
        }
    }
    println!("max relative error {worst:.3e}");
    if worst < 1e-4 {
        Ok(0)
    } else {
        eprintln!("gradient check failed: {worst:.3e} >= 1e-4");
        Ok(1)
    }
}

fn cmd_stats(args: StatsArgs) -> Result<i32> {
    let (store, _) = load_data(&args.data)?;
    let stats = data::relation_category_stats(&store);
    let per_relation: serde_json::Map<String, serde_json::Value> = store
        .relation_names
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let (tph, hpt, cat) = stats.per_relation[r];
            (
                name.clone(),
                serde_json::json!({
                    "tails_per_head": tph,
                    "heads_per_tail": hpt,
                    "category": cat.label(),
                }),
            )
        })
        .collect();
    let out = serde_json::json!({
        "per_relation": per_relation,
        "fractions": {
            "1-1": stats.fractions[0],
            "1-N": stats.fractions[1],
            "N-1": stats.fractions[2],
            "N-N": stats.fractions[3],
        },
    });
    write_or_print(
        args.out.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&out)?),
    )?;
    Ok(0)
}
