use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmrec_core::features::{self, Preprocess};
use mmrec_core::fusion::{fuse_features, FusionMethod, RepresentationKind, RepresentationMode};
use mmrec_core::ingest::{self, FilterReport};
use mmrec_core::models::persist::{load_model, save_model, Manifest};
use mmrec_core::runner::report::{self, read_results_csv, read_timings, timings_markdown};
use mmrec_core::runner::{self, DatasetTable, ExperimentConfig, HyperPoint, ReportFormat, NO_FEATURES_TAG};
use mmrec_core::split::{self, write_atomic, SplitConfig};
use mmrec_core::synthetic::{self, SyntheticConfig};
use mmrec_core::{evaluate, Error, FeatureMatrix, Modality, Result, Target};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

/// Multimodal recommendation benchmark toolkit.
#[derive(Parser)]
#[command(name = "mmrec", version)]
struct Cli {
    /// Experiment configuration (YAML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for training and evaluation.
    #[arg(long, global = true, env = "MMREC_WORKERS")]
    workers: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop items without a usable image URL or description.
    Prefilter {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        /// Iterated k-core after filtering, as USERS,ITEMS.
        #[arg(long, value_parser = parse_pair)]
        k_core: Option<(usize, usize)>,
    },
    /// Per-user random holdout into train/validation/test.
    Split {
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_ratio: f64,
        #[arg(long, default_value_t = 0.1)]
        val_ratio: f64,
    },
    /// Inspect and transform feature files.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Fuse row-aligned feature files into one.
    Fuse {
        /// concat, sum, mul or avg. Element-wise methods need equal dims.
        #[arg(long, default_value = "concat")]
        method: FusionMethod,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train one configured model at one grid point and save it.
    Train {
        /// Model name as listed in the configuration.
        #[arg(long)]
        model: String,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        reg: Option<f64>,
        /// Feature set for multimodal models; defaults to the first.
        #[arg(long)]
        extractor_tag: Option<String>,
    },
    /// Score a saved model on the configured split.
    Evaluate {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value = "test")]
        target: Target,
    },
    /// Run the full grid for every configured model.
    Benchmark,
    /// Tables from results files.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Write a synthetic dataset with informative and noise features.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Validate feature files and print their shape.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    Preprocess {
        #[arg(long)]
        method: Preprocess,
        input: PathBuf,
    },
    /// Convert `item<TAB>v1<TAB>v2...` text to the binary format.
    Import {
        #[arg(long)]
        modality: Modality,
        input: PathBuf,
    },
    /// Convert a binary feature file to tab-separated text.
    Export { input: PathBuf },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// One table over results files given as PATH or DATASET=PATH.
    Table {
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(required = true)]
        inputs: Vec<String>,
    },
    /// Metric deltas of variant runs against a baseline run.
    Variation {
        #[arg(long)]
        baseline: PathBuf,
        /// NAME=PATH, repeatable.
        #[arg(long = "variant", required = true)]
        variants: Vec<String>,
    },
    /// Markdown table of extraction timings.
    Timings { input: PathBuf },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    users: usize,
    #[arg(long, default_value_t = 120)]
    items: usize,
    #[arg(long, default_value_t = 3)]
    min_per_user: usize,
    #[arg(long, default_value_t = 6)]
    max_per_user: usize,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected USERS,ITEMS")?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((num(a)?, num(b)?))
}

fn named_path(s: &str) -> (Option<String>, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) => (Some(name.to_string()), PathBuf::from(path)),
        None => (None, PathBuf::from(s)),
    }
}

impl Cli {
    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("this command needs --out".into()))
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_atomic(path, text.as_bytes())
}

/// Print to stdout, or write to `--out` when given.
fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_filter(report: &FilterReport) {
    eprintln!(
        "removed {} of {} items ({} missing visual, {} missing textual, {} without metadata); \
         dropped {} interactions; users {} -> {}",
        report.items_removed,
        report.items_before,
        report.items_removed_missing_visual,
        report.items_removed_missing_textual,
        report.items_removed_no_metadata,
        report.interactions_dropped,
        report.users_before,
        report.users_after,
    );
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Prefilter {
            interactions,
            metadata,
            k_core,
        } => {
            let out = cli.out()?;
            let set = ingest::parse_interactions(interactions)?;
            let meta = ingest::parse_item_metadata(metadata)?;
            let (mut kept, report) = ingest::prefilter(&set, &meta, ingest::syntactic_oracle(&meta));
            print_filter(&report);
            if let Some((u, i)) = k_core {
                kept = ingest::k_core(&kept, *u, *i);
            }
            let text: String = kept.iter().map(|(u, i)| format!("{u}\t{i}\n")).collect();
            write_text(out, &text)
        }
        Command::Split {
            interactions,
            test_ratio,
            val_ratio,
        } => {
            let cfg = SplitConfig {
                test_ratio: *test_ratio,
                val_ratio_of_train: *val_ratio,
                seed: cli.seed.unwrap_or(SplitConfig::default().seed),
                ..SplitConfig::default()
            };
            let set = ingest::parse_interactions(interactions)?;
            let bundle = split::split(&set, &cfg)?;
            split::save_bundle(&bundle, cli.out()?)?;
            eprintln!(
                "{} users, {} items; train {}, validation {}, test {}",
                bundle.index.num_users(),
                bundle.index.num_items(),
                bundle.train.len(),
                bundle.validation.len(),
                bundle.test.len()
            );
            Ok(())
        }
        Command::Features(cmd) => features_command(cli, cmd),
        Command::Fuse { method, inputs } => {
            let blocks: Vec<FeatureMatrix> = inputs.iter().map(features::read_features).collect::<Result<_>>()?;
            let mode = match method {
                FusionMethod::Concat => RepresentationMode::joint(),
                _ => blocks.iter().fold(
                    RepresentationMode::coordinate(RepresentationKind::CoordinateEarly),
                    |mode, b| mode.with_identity(b.modality(), b.dim()),
                ),
            };
            let fused = fuse_features(&blocks, &mode, *method)?;
            features::write_features(&fused, cli.out()?)
        }
        Command::Train {
            model,
            lr,
            reg,
            extractor_tag,
        } => train(cli, model, *lr, *reg, extractor_tag.as_deref()),
        Command::Evaluate { model_dir, target } => {
            let cfg = cli.experiment()?;
            let data = runner::prepare(&cfg)?;
            let (manifest, model) = load_model::<f64>(model_dir, &data.train)?;
            let tag = manifest.settings.get("extractor_tag").map_or(NO_FEATURES_TAG, String::as_str);
            let report = evaluate(&model, &data.bundle, *target, cfg.k)?.tagged(&manifest.name, tag, manifest.seed);
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            emit(cli, &format!("{json}\n"))
        }
        Command::Benchmark => {
            let cfg = cli.experiment()?;
            let report = runner::run_benchmark(&cfg)?;
            let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            report.write(&dir)?;
            print!("{}", report.markdown()?);
            eprintln!("wrote {}", dir.display());
            Ok(())
        }
        Command::Report(cmd) => report_command(cli, cmd),
        Command::Synth(args) => {
            let cfg = SyntheticConfig {
                users: args.users,
                items: args.items,
                min_per_user: args.min_per_user,
                max_per_user: args.max_per_user,
                seed: args.data_seed,
                ..SyntheticConfig::default()
            };
            let files = synthetic::write_dataset(&cfg, cli.out()?)?;
            eprintln!("wrote {} and {} feature files", files.interactions.display(), files.features.len());
            Ok(())
        }
    }
}

fn features_command(cli: &Cli, cmd: &FeaturesCommand) -> Result<()> {
    match cmd {
        FeaturesCommand::Check { files } => {
            for f in files {
                let m = features::read_features(f)?;
                println!("{}\t{}\t{}\t{}", f.display(), m.modality(), m.len(), m.dim());
            }
            Ok(())
        }
        FeaturesCommand::Preprocess { method, input } => {
            let m = features::read_features(input)?;
            features::write_features(&features::preprocess(&m, *method), cli.out()?)
        }
        FeaturesCommand::Import { modality, input } => {
            let m = features::read_features_tsv(input, *modality)?;
            features::write_features(&m, cli.out()?)
        }
        FeaturesCommand::Export { input } => {
            let m = features::read_features(input)?;
            features::write_features_tsv(&m, cli.out()?)
        }
    }
}

fn train(cli: &Cli, name: &str, lr: Option<f64>, reg: Option<f64>, tag: Option<&str>) -> Result<()> {
    let cfg = cli.experiment()?;
    let spec = cfg
        .models
        .iter()
        .find(|m| m.display_name() == name)
        .ok_or_else(|| Error::Config(format!("no model named {name:?} in the configuration")))?;
    let point = HyperPoint {
        learning_rate: lr.or(cfg.grid.learning_rates.first().copied()).unwrap_or_default(),
        reg: reg.or(cfg.grid.regs.first().copied()).unwrap_or_default(),
    };
    let data = runner::prepare(&cfg)?;
    let features = if spec.kind.is_multimodal() {
        let found = match tag {
            Some(t) => data.features.iter().find(|f| f.extractor_tag == t),
            None => data.features.first(),
        };
        Some(found.ok_or_else(|| Error::Config(format!("no feature set {:?}", tag.unwrap_or_default())))?)
    } else {
        None
    };
    let seed = cfg.seeds[0];
    let model = runner::train_model(spec, &cfg, &data.train, features, point, seed)?;
    let mut settings = BTreeMap::new();
    settings.insert("k_neighbors".to_string(), spec.k_neighbors.to_string());
    settings.insert("layers".to_string(), spec.layers.to_string());
    settings.insert("graph_k".to_string(), spec.graph_k.to_string());
    settings.insert("graph_layers".to_string(), spec.graph_layers.to_string());
    let extractor = features.map_or(NO_FEATURES_TAG, |f| f.extractor_tag.as_str());
    settings.insert("extractor_tag".to_string(), extractor.to_string());
    let manifest = Manifest {
        model: spec.kind,
        name: spec.display_name(),
        seed,
        hyper: spec
            .kind
            .uses_grid()
            .then(|| cfg.hyper(point.learning_rate, point.reg, seed, spec.latent_dim)),
        settings,
        modalities: Vec::new(),
        blocks: Vec::new(),
    };
    let dir = cli.out()?;
    save_model(&model, manifest, dir)?;
    eprintln!("saved {} to {}", spec.display_name(), dir.display());
    Ok(())
}

fn report_command(cli: &Cli, cmd: &ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Table { format, inputs } => {
            let mut tables = Vec::new();
            for input in inputs {
                let (name, path) = named_path(input);
                let dataset = name.unwrap_or_else(|| {
                    path.parent()
                        .and_then(Path::file_name)
                        .map_or_else(|| "dataset".to_string(), |n| n.to_string_lossy().into_owned())
                });
                tables.push(DatasetTable {
                    dataset,
                    reports: read_results_csv(&path)?,
                });
            }
            emit(cli, &runner::emit_report(&tables, *format)?)
        }
        ReportCommand::Variation { baseline, variants } => {
            let base = read_results_csv(baseline)?;
            let mut named = Vec::new();
            for v in variants {
                let (name, path) = named_path(v);
                let name = name.ok_or_else(|| Error::Config(format!("variant {v:?} is not NAME=PATH")))?;
                named.push((name, read_results_csv(&path)?));
            }
            emit(cli, &report::emit_variation_data(&base, &named)?)
        }
        ReportCommand::Timings { input } => emit(cli, &timings_markdown(&read_timings(input)?)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}
