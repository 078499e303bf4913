//! End-to-end benchmark: ingestion, split, features, fusion, grid training,
//! selection on validation and final test evaluation.

pub mod config;
pub mod grid;
pub mod report;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, FeatureSet, GridConfig, ModelSpec, RepresentationConfig, TrainingConfig};
pub use grid::{enumerate_grid, select_best, select_best_index, HyperPoint, RunRecord};
pub use report::{
    emit_report, emit_variation_data, DatasetTable, ProtocolHeader, ReportFormat, SummaryRow, TimingRow,
};

use crate::data::{build_interaction_matrix, FeatureMatrix, InteractionMatrix, SplitBundle};
use crate::error::{Error, Result, StageExt};
use crate::eval::{evaluate_matrices, MetricReport};
use crate::features::{preprocess, read_features};
use crate::fusion::{fuse_features, projection_from_features, RepresentationKind, RepresentationMode};
use crate::ingest::{self, FilterReport};
use crate::models::{
    build_item_graph, build_item_graph_late, fit_itemknn, train_bprmf, train_frozen_graph_rec, train_lightgcn,
    train_vbpr_m, ItemGraph, ModelKind, TrainedModel, VbprScorer,
};
use crate::split;

/// Extractor tag of runs that use no content features.
pub const NO_FEATURES_TAG: &str = "none";

/// Feature blocks of one extractor, aligned to the dense item index.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFeatures {
    pub extractor_tag: String,
    /// One block per modality, after remapping and preprocessing.
    pub blocks: Vec<FeatureMatrix>,
    /// What the multimodal models consume: a single fused block, or one block
    /// per modality in the late-coordinate mode.
    pub model_input: Vec<FeatureMatrix>,
}

impl PreparedFeatures {
    pub fn item_graph(&self, k: usize, cfg: &ExperimentConfig) -> Result<ItemGraph> {
        match self.model_input.as_slice() {
            [single] => Ok(build_item_graph(single, k)),
            many => build_item_graph_late(many, k, cfg.representation.late),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub filter: Option<FilterReport>,
    pub bundle: SplitBundle,
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub features: Vec<PreparedFeatures>,
}

pub fn load_interactions(cfg: &ExperimentConfig) -> Result<(crate::data::InteractionSet, Option<FilterReport>)> {
    let ds = &cfg.dataset;
    let interactions = ingest::parse_interactions(&ds.interactions)?;
    let (mut kept, report) = match &ds.metadata {
        Some(path) => {
            let metadata = ingest::parse_item_metadata(path)?;
            let (kept, report) = ingest::prefilter(&interactions, &metadata, ingest::syntactic_oracle(&metadata));
            (kept, Some(report))
        }
        None => (interactions, None),
    };
    if let Some((min_user, min_item)) = ds.k_core {
        kept = ingest::k_core(&kept, min_user, min_item);
    }
    Ok((kept, report))
}

pub fn representation_mode(cfg: &ExperimentConfig) -> Result<RepresentationMode<f64>> {
    let rep = &cfg.representation;
    let mut mode = match rep.kind {
        RepresentationKind::Joint => RepresentationMode::joint(),
        kind => RepresentationMode::coordinate(kind),
    };
    for (&modality, path) in &rep.projections {
        mode = mode.with_projection(modality, projection_from_features(&read_features(path)?));
    }
    Ok(mode)
}

/// Read, align and preprocess one feature set.
pub fn load_feature_blocks(set: &FeatureSet, bundle: &SplitBundle, cfg: &ExperimentConfig) -> Result<Vec<FeatureMatrix>> {
    set.files
        .iter()
        .map(|(&modality, path)| {
            let raw = read_features(path)?;
            if raw.modality() != modality {
                return Err(Error::Config(format!(
                    "{} holds {} features, configured as {modality}",
                    path.display(),
                    raw.modality()
                )));
            }
            Ok(preprocess(&split::remap_features(&raw, &bundle.index)?, cfg.preprocess))
        })
        .collect()
}

/// Apply the configured representation to aligned blocks.
pub fn fuse_blocks(blocks: &[FeatureMatrix], mode: &RepresentationMode<f64>, cfg: &ExperimentConfig) -> Result<Vec<FeatureMatrix>> {
    match mode.kind {
        RepresentationKind::CoordinateLate => {
            let mut early = RepresentationMode::coordinate(RepresentationKind::CoordinateEarly);
            for m in mode.modalities() {
                early = early.with_projection(m, mode.projection(m).expect("listed").clone());
            }
            blocks
                .iter()
                .map(|b| match mode.projection(b.modality()) {
                    Some(_) => fuse_features(std::slice::from_ref(b), &early, cfg.representation.fusion),
                    None => Ok(b.clone()),
                })
                .collect()
        }
        _ => Ok(vec![fuse_features(blocks, mode, cfg.representation.fusion)?]),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (interactions, filter) = load_interactions(cfg).stage("ingestion")?;
    let bundle = split::split(&interactions, &cfg.split).stage("splitter")?;
    let (nu, ni) = (bundle.index.num_users(), bundle.index.num_items());
    let encode = |set| -> Result<InteractionMatrix> {
        Ok(InteractionMatrix::from_pairs(nu, ni, &bundle.index.encode(set)?))
    };
    let train = build_interaction_matrix(&bundle.train, &bundle.index).stage("splitter")?;
    let validation = encode(&bundle.validation).stage("splitter")?;
    let test = encode(&bundle.test).stage("splitter")?;
    let mode = if cfg.feature_sets.is_empty() {
        RepresentationMode::joint()
    } else {
        representation_mode(cfg).stage("fusion")?
    };
    let mut features = Vec::new();
    for set in &cfg.feature_sets {
        let blocks = load_feature_blocks(set, &bundle, cfg).stage("feature-store")?;
        let model_input = fuse_blocks(&blocks, &mode, cfg).stage("fusion")?;
        features.push(PreparedFeatures {
            extractor_tag: set.extractor_tag.clone(),
            blocks,
            model_input,
        });
    }
    Ok(PreparedData {
        filter,
        bundle,
        train,
        validation,
        test,
        features,
    })
}

/// Model-side state shared by every grid point of one job.
enum JobInput<'a> {
    Plain,
    Features(&'a PreparedFeatures),
    Graph(ItemGraph),
}

pub fn train_model(
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    train: &InteractionMatrix,
    features: Option<&PreparedFeatures>,
    point: HyperPoint,
    seed: u64,
) -> Result<TrainedModel<f64>> {
    let input = match (spec.kind, features) {
        (ModelKind::FrozenGraph, Some(f)) => JobInput::Graph(f.item_graph(spec.graph_k, cfg)?),
        (_, Some(f)) => JobInput::Features(f),
        (_, None) => JobInput::Plain,
    };
    train_with(spec, cfg, train, &input, point, seed)
}

fn train_with(
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    train: &InteractionMatrix,
    input: &JobInput<'_>,
    point: HyperPoint,
    seed: u64,
) -> Result<TrainedModel<f64>> {
    let hp = cfg.hyper(point.learning_rate, point.reg, seed, spec.latent_dim);
    let factors = |params| TrainedModel::Factors { kind: spec.kind, params };
    match (spec.kind, input) {
        (ModelKind::ItemKnn, _) => Ok(TrainedModel::ItemKnn(fit_itemknn(train, spec.k_neighbors)?)),
        (ModelKind::Bprmf, _) => Ok(factors(train_bprmf(train, &hp)?)),
        (ModelKind::LightGcn, _) => Ok(factors(train_lightgcn(train, &hp, spec.layers)?)),
        (ModelKind::Vbpr, JobInput::Features(f)) => {
            let (mf, mm) = train_vbpr_m(train, &f.model_input, &hp)?;
            Ok(TrainedModel::Vbpr(VbprScorer::new(mf, mm, &f.model_input)?))
        }
        (ModelKind::FrozenGraph, JobInput::Graph(g)) => {
            Ok(factors(train_frozen_graph_rec(train, g, &hp, spec.graph_layers)?))
        }
        (kind, _) => Err(Error::Config(format!("{kind} needs item features"))),
    }
}

/// Everything a benchmark run produces.
#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub header: ProtocolHeader,
    pub filter: Option<FilterReport>,
    /// Every trained grid point, in job order.
    pub records: Vec<RunRecord>,
    /// Test scores of the selected configuration, one per (seed, model, extractor).
    pub results: Vec<MetricReport>,
    pub summary: Vec<SummaryRow>,
    pub timings: Option<Vec<TimingRow>>,
}

impl BenchmarkReport {
    pub fn results_csv(&self) -> Result<String> {
        report::results_csv(&self.header, &self.results)
    }

    pub fn markdown(&self) -> Result<String> {
        let mut out = format!("# Benchmark: {}\n\n", self.dataset);
        for line in self.header.lines() {
            out.push_str(&format!("- {line}\n"));
        }
        let table = DatasetTable {
            dataset: self.dataset.clone(),
            reports: self.summary.iter().map(SummaryRow::as_report).collect(),
        };
        out.push_str("\nTest metrics (%), mean over seeds. Best in bold, runner-up underlined.\n\n");
        out.push_str(&emit_report(&[table], ReportFormat::Markdown)?);
        if let Some(f) = &self.filter {
            out.push_str(&format!(
                "\nPre-filter: {} of {} items removed ({} no image URL, {} no description, {} no metadata), \
                 {} interactions dropped, {} of {} users kept.\n",
                f.items_removed,
                f.items_before,
                f.items_removed_missing_visual,
                f.items_removed_missing_textual,
                f.items_removed_no_metadata,
                f.interactions_dropped,
                f.users_after,
                f.users_before
            ));
        }
        if let Some(t) = &self.timings {
            out.push_str("\nExtraction timings (seconds)\n\n");
            out.push_str(&report::timings_markdown(t));
        }
        Ok(out)
    }

    /// Write `results.csv`, `runs.csv`, `summary.csv` and `report.md` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("results.csv", self.results_csv()?),
            ("runs.csv", report::runs_csv(&self.records)?),
            ("summary.csv", report::summary_csv(&self.summary)?),
            ("report.md", self.markdown()?),
        ];
        for (name, text) in files {
            split::write_atomic(&dir.join(name), text.as_bytes())?;
        }
        Ok(())
    }
}

pub fn protocol_header(cfg: &ExperimentConfig) -> ProtocolHeader {
    ProtocolHeader {
        reference: cfg.is_reference_protocol(),
        batch_size: cfg.training.batch_size,
        epochs: cfg.training.epochs,
        grid_points: cfg.grid.learning_rates.len() * cfg.grid.regs.len(),
        k: cfg.k,
        split: cfg.split,
        seeds: cfg.seeds.clone(),
    }
}

struct Job<'a> {
    spec: &'a ModelSpec,
    features: Option<&'a PreparedFeatures>,
    seed: u64,
    points: Vec<HyperPoint>,
}

impl Job<'_> {
    fn tag(&self) -> &str {
        self.features.map_or(NO_FEATURES_TAG, |f| f.extractor_tag.as_str())
    }
}

struct PointOutcome {
    validation: MetricReport,
    test: MetricReport,
    seconds: f64,
}

fn run_point(job: &Job<'_>, input: &JobInput<'_>, point: HyperPoint, cfg: &ExperimentConfig, data: &PreparedData) -> Result<PointOutcome> {
    let start = Instant::now();
    let model = train_with(job.spec, cfg, &data.train, input, point, job.seed).stage("recommenders")?;
    let name = job.spec.display_name();
    let eval = |target| -> Result<MetricReport> {
        Ok(evaluate_matrices(&model, &data.train, target, cfg.k)
            .stage("evaluator")?
            .tagged(name.clone(), job.tag(), job.seed))
    };
    // test scores of non-selected points are never looked at
    let validation = eval(&data.validation)?;
    let test = eval(&data.test)?;
    Ok(PointOutcome {
        validation,
        test,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Train the grid for every configured model, select on validation recall and
/// report test metrics of the selected point.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    run_prepared(cfg, &data)
}

pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData) -> Result<BenchmarkReport> {
    let grid = enumerate_grid(&cfg.grid)?;
    let single = vec![HyperPoint { learning_rate: 0.0, reg: 0.0 }];
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for spec in &cfg.models {
            let points = if spec.kind.uses_grid() { grid.clone() } else { single.clone() };
            if spec.kind.is_multimodal() {
                for f in &data.features {
                    jobs.push(Job { spec, features: Some(f), seed, points: points.clone() });
                }
            } else {
                jobs.push(Job { spec, features: None, seed, points });
            }
        }
    }
    let timings = cfg.timings.as_ref().map(report::read_timings).transpose().stage("runner")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Result<Vec<RunRecord>>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let input = match (job.spec.kind, job.features) {
                    (ModelKind::FrozenGraph, Some(f)) => JobInput::Graph(f.item_graph(job.spec.graph_k, cfg).stage("recommenders")?),
                    (_, Some(f)) => JobInput::Features(f),
                    (_, None) => JobInput::Plain,
                };
                let points: Vec<PointOutcome> = job
                    .points
                    .par_iter()
                    .map(|&p| run_point(job, &input, p, cfg, data))
                    .collect::<Result<_>>()?;
                let mut records: Vec<RunRecord> = job
                    .points
                    .iter()
                    .zip(&points)
                    .map(|(&point, o)| RunRecord {
                        point,
                        seed: job.seed,
                        validation: o.validation.clone(),
                        test: None,
                        seconds: o.seconds,
                    })
                    .collect();
                let best = select_best_index(&records)?;
                records[best].test = Some(points[best].test.clone());
                Ok(records)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut results = Vec::new();
    for job_records in outcomes {
        let job_records = job_records?;
        results.extend(job_records.iter().filter_map(|r| r.test.clone()));
        records.extend(job_records);
    }
    Ok(BenchmarkReport {
        dataset: cfg.dataset.name.clone(),
        header: protocol_header(cfg),
        filter: data.filter.clone(),
        summary: report::summarize(&results),
        records,
        results,
        timings,
    })
}
