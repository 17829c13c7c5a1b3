//! Command-line surface: train/eval/grid experiments, synthetic data
//! generation, feature dumps, and the averaged-Hausdorff diagnostic.
//!
//! Exit codes: 0 success, 1 data or runtime error, 2 usage error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adan::checkpoint::Checkpoint;
use adan::config::{apply_model_keys, apply_train_keys, parse_config_file, reject_unknown_keys};
use adan::error::AdanError;
use adan::metrics::{averaged_hausdorff, dump_features, PointSet, Probe};
use adan::model::{build_model, ModelConfig, ModelMode};
use adan::synth::{gen_synthetic, SynthConfig};
use adan::text::{check_same_dim, load_corpus, save_corpus, Corpus, EmbeddingTable, Language};
use adan::trainer::{grid_search, grid_to_tsv, train, TrainConfig, TrainData};

#[derive(Parser)]
#[command(
    name = "adan",
    about = "Adversarial deep averaging network for cross-lingual text classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the best-epoch checkpoint plus history TSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled corpus.
    Eval(EvalArgs),
    /// Grid search over k and lambda; one full training per cell.
    Grid(GridArgs),
    /// Generate the synthetic two-language benchmark.
    GenSynth(GenSynthArgs),
    /// Dump per-document feature vectors at a probe point.
    Features(FeaturesArgs),
    /// Averaged Hausdorff distance between two point-set TSV files.
    Ahd(AhdArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Labeled source-language training corpus.
    #[arg(long)]
    src_train: PathBuf,
    /// Unlabeled target-language corpus (required for adan/grl).
    #[arg(long)]
    tgt_unlabeled: Option<PathBuf>,
    /// Labeled dev corpus for early stopping.
    #[arg(long)]
    dev: PathBuf,
    /// Which embedding table the dev corpus uses: source or target.
    #[arg(long, default_value = "target")]
    dev_lang: String,
    /// Source-language embedding file.
    #[arg(long)]
    src_emb: PathBuf,
    /// Target-language embedding file.
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Labeled target corpus for the semi-supervised mode.
    #[arg(long)]
    tgt_train: Option<PathBuf>,
}

#[derive(Args)]
struct HyperArgs {
    /// Flat key = value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lr_fp: Option<f64>,
    #[arg(long)]
    lr_q: Option<f64>,
    #[arg(long)]
    clip_bound: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    f_depth: Option<usize>,
    #[arg(long)]
    p_depth: Option<usize>,
    #[arg(long)]
    q_depth: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    /// Leave batch-norm gamma/beta out of the critic weight clip.
    #[arg(long)]
    clip_exempt_norm: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// adan, grl, dan, or logreg.
    #[arg(long)]
    mode: String,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// History TSV path (default: <out>.history.tsv).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    emb: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated critic iteration counts, e.g. 1,2,4,8,16.
    #[arg(long)]
    k_list: String,
    /// Comma-separated lambda values.
    #[arg(long)]
    lambda_list: String,
    #[arg(long)]
    mode: String,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Grid TSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    vocab_per_class: usize,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 5000)]
    src_train_docs: usize,
    #[arg(long, default_value_t = 5000)]
    tgt_unlabeled_docs: usize,
    #[arg(long, default_value_t = 1000)]
    src_dev_docs: usize,
    #[arg(long, default_value_t = 1000)]
    tgt_dev_docs: usize,
    #[arg(long, default_value_t = 5)]
    doc_len_min: usize,
    #[arg(long, default_value_t = 20)]
    doc_len_max: usize,
    /// Rotation angle in radians applied to target vectors.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    rotation: f64,
    #[arg(long, default_value_t = 0.25)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write tgt_train.tsv, the labeled twin of the unlabeled split,
    /// for semi-supervised experiments.
    #[arg(long, default_value_t = false)]
    write_tgt_labeled: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    /// avg, F, or P_last.
    #[arg(long)]
    probe: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AhdArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

enum CliError {
    Usage(String),
    Run(AdanError),
}

impl From<AdanError> for CliError {
    fn from(e: AdanError) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Grid(args) => cmd_grid(args),
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::Features(args) => cmd_features(args),
        Command::Ahd(args) => cmd_ahd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

struct LoadedData {
    src_table: EmbeddingTable,
    tgt_table: EmbeddingTable,
    src_train: Corpus,
    tgt_unlabeled: Option<Corpus>,
    dev: Corpus,
    dev_is_target: bool,
    tgt_train: Option<Corpus>,
}

fn load_data(args: &DataArgs, mode: ModelMode) -> CliResult<LoadedData> {
    if matches!(mode, ModelMode::Adan | ModelMode::Grl) && args.tgt_unlabeled.is_none() {
        return Err(usage(format!("--tgt-unlabeled is required for {mode} mode")));
    }
    let dev_is_target = match args.dev_lang.as_str() {
        "target" => true,
        "source" => false,
        other => {
            return Err(usage(format!(
                "--dev-lang must be source or target, got {other}"
            )))
        }
    };

    let src_table = EmbeddingTable::load(&args.src_emb, Language::Source)?;
    let tgt_table = EmbeddingTable::load(&args.tgt_emb, Language::Target)?;
    check_same_dim(&src_table, &tgt_table)?;

    let src_train = load_corpus(&args.src_train, &src_table, true)?;
    let tgt_unlabeled = args
        .tgt_unlabeled
        .as_ref()
        .map(|p| load_corpus(p, &tgt_table, false))
        .transpose()?;
    let dev_table = if dev_is_target { &tgt_table } else { &src_table };
    let dev = load_corpus(&args.dev, dev_table, true)?;
    let tgt_train = args
        .tgt_train
        .as_ref()
        .map(|p| load_corpus(p, &tgt_table, true))
        .transpose()?;

    Ok(LoadedData {
        src_table,
        tgt_table,
        src_train,
        tgt_unlabeled,
        dev,
        dev_is_target,
        tgt_train,
    })
}

fn build_configs(
    mode: ModelMode,
    hyper: &HyperArgs,
    loaded: &LoadedData,
) -> CliResult<(ModelConfig, TrainConfig)> {
    let file_map: BTreeMap<String, String> = match &hyper.config {
        Some(path) => {
            let map = parse_config_file(path)?;
            reject_unknown_keys(&map)?;
            map
        }
        None => BTreeMap::new(),
    };

    let mut train_cfg = TrainConfig::new(mode);
    apply_train_keys(&file_map, &mut train_cfg)?;
    if let Some(v) = hyper.seed {
        train_cfg.seed = v;
    }
    if let Some(v) = hyper.lambda {
        train_cfg.lambda = v;
    }
    if let Some(v) = hyper.k {
        train_cfg.k = v;
    }
    if let Some(v) = hyper.lr_fp {
        train_cfg.lr_fp = v;
    }
    if let Some(v) = hyper.lr_q {
        train_cfg.lr_q = v;
    }
    if let Some(v) = hyper.clip_bound {
        train_cfg.clip_bound = v;
    }
    if let Some(v) = hyper.epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = hyper.batch_size {
        train_cfg.batch_size = v;
    }
    if hyper.clip_exempt_norm {
        train_cfg.clip_exempt_norm = true;
    }

    let observed_classes = loaded
        .src_train
        .num_classes
        .max(loaded.dev.num_classes)
        .max(loaded.tgt_train.as_ref().map_or(0, |c| c.num_classes));
    let mut model_cfg = ModelConfig::new(loaded.src_table.dim(), observed_classes, mode);
    apply_model_keys(&file_map, &mut model_cfg)?;
    if let Some(v) = hyper.hidden_width {
        model_cfg.hidden_width = v;
    }
    if let Some(v) = hyper.f_depth {
        model_cfg.f_depth = v;
    }
    if let Some(v) = hyper.p_depth {
        model_cfg.p_depth = v;
    }
    if let Some(v) = hyper.q_depth {
        model_cfg.q_depth = v;
    }
    if let Some(v) = hyper.num_classes {
        model_cfg.num_classes = v;
    }
    if mode == ModelMode::LogReg {
        model_cfg.f_depth = 0;
    }
    Ok((model_cfg, train_cfg))
}

fn train_data_view(loaded: &LoadedData) -> TrainData<'_> {
    TrainData {
        src_labeled: &loaded.src_train,
        src_table: &loaded.src_table,
        tgt_unlabeled: loaded.tgt_unlabeled.as_ref(),
        tgt_table: &loaded.tgt_table,
        dev: &loaded.dev,
        dev_table: if loaded.dev_is_target {
            &loaded.tgt_table
        } else {
            &loaded.src_table
        },
        semi_labeled_tgt: loaded.tgt_train.as_ref(),
    }
}

fn parse_mode(mode: &str) -> CliResult<ModelMode> {
    mode.parse::<ModelMode>()
        .map_err(|_| usage(format!("unknown mode {mode} (expected adan, grl, dan, or logreg)")))
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let mode = parse_mode(&args.mode)?;
    let loaded = load_data(&args.data, mode)?;
    let (model_cfg, train_cfg) = build_configs(mode, &args.hyper, &loaded)?;

    let model = build_model(&model_cfg, train_cfg.seed)?;
    let data = train_data_view(&loaded);
    let (best_model, history) = train(model, &data, &train_cfg)?;

    let ckpt = Checkpoint::from_model(
        &best_model,
        &train_cfg,
        history.best_epoch,
        history.best_accuracy(),
    );
    ckpt.save(&args.out)?;
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| append_ext(&args.out, "history.tsv"));
    history.save_tsv(&history_path)?;

    println!("dev_accuracy={:.4}", history.best_accuracy());
    Ok(())
}

fn append_ext(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let table = EmbeddingTable::load(&args.emb, Language::Target)?;
    if table.dim() != ckpt.model_config.embed_dim {
        return Err(CliError::Run(AdanError::DimMismatch {
            expected: ckpt.model_config.embed_dim,
            got: table.dim(),
        }));
    }
    let corpus = load_corpus(&args.data, &table, true)?;
    let model = ckpt.restore_model()?;
    let accuracy = adan::trainer::evaluate(&model, &corpus, &table)?;
    println!("accuracy={accuracy:.4}");
    Ok(())
}

fn parse_list<T: std::str::FromStr>(list: &str, what: &str) -> CliResult<Vec<T>> {
    let items: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(usage(format!("--{what} must be a nonempty list")));
    }
    items
        .into_iter()
        .map(|token| {
            token
                .parse::<T>()
                .map_err(|_| usage(format!("bad token {token} in --{what}")))
        })
        .collect()
}

fn cmd_grid(args: GridArgs) -> CliResult<()> {
    let mode = parse_mode(&args.mode)?;
    let k_set: Vec<usize> = parse_list(&args.k_list, "k-list")?;
    let lambda_set: Vec<f64> = parse_list(&args.lambda_list, "lambda-list")?;
    if k_set.iter().any(|&k| k == 0) {
        return Err(usage("--k-list entries must be positive"));
    }
    if lambda_set.iter().any(|&l| l <= 0.0) {
        return Err(usage("--lambda-list entries must be positive"));
    }
    let loaded = load_data(&args.data, mode)?;
    let (model_cfg, train_cfg) = build_configs(mode, &args.hyper, &loaded)?;
    let data = train_data_view(&loaded);
    let cells = grid_search(&model_cfg, &train_cfg, &k_set, &lambda_set, &data)?;
    std::fs::write(&args.out, grid_to_tsv(&cells)).map_err(AdanError::from)?;
    println!("cells={}", cells.len());
    Ok(())
}

fn cmd_gen_synth(args: GenSynthArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        num_classes: args.classes,
        vocab_per_class: args.vocab_per_class,
        dim: args.dim,
        src_train_docs: args.src_train_docs,
        tgt_unlabeled_docs: args.tgt_unlabeled_docs,
        src_dev_docs: args.src_dev_docs,
        tgt_dev_docs: args.tgt_dev_docs,
        doc_len_min: args.doc_len_min,
        doc_len_max: args.doc_len_max,
        rotation_angle: args.rotation,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
    };
    let data = gen_synthetic(&cfg)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(AdanError::from)?;

    data.src_table.save(&dir.join("src_emb.txt"))?;
    data.tgt_table.save(&dir.join("tgt_emb.txt"))?;
    save_corpus(&data.src_train, &data.src_table, &dir.join("src_train.tsv"))?;
    save_corpus(
        &data.tgt_unlabeled,
        &data.tgt_table,
        &dir.join("tgt_unlabeled.tsv"),
    )?;
    save_corpus(&data.src_dev, &data.src_table, &dir.join("src_dev.tsv"))?;
    save_corpus(&data.tgt_dev, &data.tgt_table, &dir.join("tgt_dev.tsv"))?;
    if args.write_tgt_labeled {
        save_corpus(
            &data.tgt_labeled_pool,
            &data.tgt_table,
            &dir.join("tgt_train.tsv"),
        )?;
    }

    let manifest = format!(
        "classes={}\ndim={}\ndoc_len_max={}\ndoc_len_min={}\nnoise_sigma={}\nrotation={}\nseed={}\nsrc_dev_docs={}\nsrc_train_docs={}\ntgt_dev_docs={}\ntgt_unlabeled_docs={}\nvocab_per_class={}\n",
        cfg.num_classes,
        cfg.dim,
        cfg.doc_len_max,
        cfg.doc_len_min,
        cfg.noise_sigma,
        cfg.rotation_angle,
        cfg.seed,
        cfg.src_dev_docs,
        cfg.src_train_docs,
        cfg.tgt_dev_docs,
        cfg.tgt_unlabeled_docs,
        cfg.vocab_per_class,
    );
    std::fs::write(dir.join("manifest.txt"), manifest).map_err(AdanError::from)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> CliResult<()> {
    let probe = args
        .probe
        .parse::<Probe>()
        .map_err(|e| usage(e.to_string()))?;
    let ckpt = Checkpoint::load(&args.ckpt)?;
    let table = EmbeddingTable::load(&args.emb, Language::Target)?;
    if table.dim() != ckpt.model_config.embed_dim {
        return Err(CliError::Run(AdanError::DimMismatch {
            expected: ckpt.model_config.embed_dim,
            got: table.dim(),
        }));
    }
    let corpus = load_corpus(&args.data, &table, false)?;
    let model = ckpt.restore_model()?;
    let points = dump_features(&model, &corpus, &table, probe)?;
    points.save_tsv(&args.out)?;
    println!("rows={} dims={}", points.len(), points.dim());
    Ok(())
}

fn cmd_ahd(args: AhdArgs) -> CliResult<()> {
    let a = PointSet::load_tsv(&args.a)?;
    let b = PointSet::load_tsv(&args.b)?;
    let d = averaged_hausdorff(&a, &b)?;
    println!("ahd={d:.4}");
    Ok(())
}
