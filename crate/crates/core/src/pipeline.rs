//! Stage functions over a run directory.
//!
//! Each stage reads upstream artifacts (after checking their hash chain),
//! writes its own outputs atomically and records a `<stage>.meta.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{read_json, sha256_hex, ArtifactError, StageMeta, Workspace};
use crate::clustering::{
    average_link, cut_dendrogram, hdbscan, ClusteringError, Dendrogram, DensityParams, LowLevelCluster,
    LowLevelClustering,
};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{parse_corpus, render_context, ContextDocument, CorpusError, CorpusFormat, Dialogue};
use crate::embedding::{
    embed_spans, load_embeddings, project_spans, read_coordinates, write_refs, write_vectors, EmbedOptions,
    EmbeddedSpan, EmbeddingBackend, EmbeddingError, FamilyRule, FileEmbedder, HttpEmbedder, MockEmbedder,
};
use crate::evaluation::{align_gold, classification_report, classify_all, load_gold, EvaluationError, EvaluationReport};
use crate::extraction::{
    extract_corpus, read_candidates, write_candidates, CandidateSpan, ExtractionError, HttpQaBackend, QaBackend,
    ReplayBackend, SpanRef,
};
use crate::landscape::{
    attach_dialogues, estimate_volumes, force_assign, scheme_recall, source_counts, top_representatives, Assignment,
    IntentMapping, LandscapeError, SourceCounts, Volumes,
};
use crate::validation::{
    read_valid_spans, run_funnel, write_valid_spans, BaselineTagger, FunnelReport, HttpTagger, Tagger,
    ValidatedSpan, ValidationError,
};

pub const CORPUS: &str = "corpus.json";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const VALID_SPANS: &str = "valid_spans.jsonl";
pub const FUNNEL: &str = "funnel.json";
pub const EMBEDDINGS: &str = "embeddings.ilem";
pub const EMBEDDING_REFS: &str = "embeddings.refs.jsonl";
pub const CLUSTERS: &str = "clusters.json";
pub const DENDROGRAM: &str = "dendrogram.json";
pub const TAXONOMY: &str = "taxonomy.json";
pub const MAPPING: &str = "mapping.json";
pub const LANDSCAPE: &str = "landscape.json";
pub const REPORT: &str = "report.json";
pub const REVIEW_EXPORT: &str = "review_export.json";

/// The shared top-level cut rule, spelled out for consumers of the export.
pub const CUT_RULE: &str = "apply merges in order while distance < threshold";

const PRODUCERS: [(&str, &str); 13] = [
    (CORPUS, "ingest"),
    (CANDIDATES, "extract"),
    (VALID_SPANS, "validate"),
    (FUNNEL, "validate"),
    (EMBEDDINGS, "embed"),
    (EMBEDDING_REFS, "embed"),
    (CLUSTERS, "cluster"),
    (DENDROGRAM, "cluster"),
    (TAXONOMY, "cluster"),
    (MAPPING, "mapping"),
    (LANDSCAPE, "landscape"),
    (REPORT, "evaluate"),
    (REVIEW_EXPORT, "export_review"),
];

pub fn workspace(root: impl Into<PathBuf>, force: bool) -> Workspace {
    let mut ws = Workspace::new(root, &PRODUCERS);
    ws.force = force;
    ws
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("mapping references clusters that are not live: {0:?}")]
    Dangling(Vec<usize>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Landscape(LandscapeError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{0}")]
    Input(String),
}

impl From<LandscapeError> for PipelineError {
    fn from(e: LandscapeError) -> Self {
        match e {
            LandscapeError::Dangling(ids) => PipelineError::Dangling(ids),
            other => PipelineError::Landscape(other),
        }
    }
}

impl PipelineError {
    /// Process exit status: 2 missing artifact, 3 stale or edited artifact,
    /// 4 dangling cluster ids, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Artifact(ArtifactError::Missing(_)) => 2,
            PipelineError::Artifact(ArtifactError::HashMismatch { .. }) => 3,
            PipelineError::Dangling(_) => 4,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ArtifactError::Missing(path.to_path_buf()).into()
        } else {
            PipelineError::Input(format!("{}: {e}", path.display()))
        }
    })
}

/// Records an external input by file name and content hash.
fn record_external(meta: &mut StageMeta, key: &str, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            PipelineError::from(ArtifactError::Missing(path.to_path_buf()))
        } else {
            PipelineError::Input(format!("{}: {e}", path.display()))
        }
    })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    meta.inputs.insert(format!("{key}:{name}"), sha256_hex(&bytes));
    Ok(())
}

fn require(ws: &Workspace, meta: &mut StageMeta, name: &str) -> Result<PathBuf> {
    let hash = ws.verify(name)?;
    meta.inputs.insert(name.to_string(), hash);
    Ok(ws.path(name))
}

fn start(ws: &Workspace, stage: &str, cfg: &RunConfig) -> StageMeta {
    for w in cfg.warnings() {
        log::warn!("{w}");
    }
    log::info!("stage {stage} in {}", ws.root().display());
    StageMeta::new(stage, cfg)
}

fn load_corpus(ws: &Workspace, meta: &mut StageMeta) -> Result<Vec<Dialogue>> {
    let path = require(ws, meta, CORPUS)?;
    Ok(read_json(&path)?)
}

fn load_valid(ws: &Workspace, meta: &mut StageMeta) -> Result<BTreeMap<String, Vec<ValidatedSpan>>> {
    let path = require(ws, meta, VALID_SPANS)?;
    Ok(read_valid_spans(BufReader::new(open_input(&path)?))?)
}

fn load_vectors(ws: &Workspace, meta: &mut StageMeta) -> Result<Vec<EmbeddedSpan>> {
    require(ws, meta, EMBEDDING_REFS)?;
    let path = require(ws, meta, EMBEDDINGS)?;
    Ok(load_embeddings(&path)?)
}

fn load_clusters(ws: &Workspace, meta: &mut StageMeta) -> Result<ClustersArtifact> {
    let path = require(ws, meta, CLUSTERS)?;
    Ok(read_json(&path)?)
}

/// The mapping in force: the analyst's if imported, else the initial one.
fn load_mapping(ws: &Workspace, meta: &mut StageMeta) -> Result<(IntentMapping, String)> {
    let name = if ws.exists(MAPPING) { MAPPING } else { TAXONOMY };
    let path = require(ws, meta, name)?;
    let hash = meta.inputs[name].clone();
    Ok((read_json(&path)?, hash))
}

fn flatten(valid: &BTreeMap<String, Vec<ValidatedSpan>>) -> Vec<ValidatedSpan> {
    valid.values().flatten().filter(|s| s.is_valid()).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub dialogues: usize,
    pub utterances: usize,
}

pub fn ingest(ws: &Workspace, cfg: &RunConfig, input: &Path, format: Option<CorpusFormat>) -> Result<IngestSummary> {
    let mut meta = start(ws, "ingest", cfg);
    let format = format
        .or_else(|| CorpusFormat::from_path(input))
        .ok_or_else(|| PipelineError::Input(format!("cannot tell the format of {}; pass --format", input.display())))?;
    record_external(&mut meta, "corpus", input)?;
    let dialogues = parse_corpus(open_input(input)?, format)?;
    ws.write_json(&mut meta, CORPUS, &dialogues)?;
    ws.finish(&meta)?;
    Ok(IngestSummary {
        dialogues: dialogues.len(),
        utterances: dialogues.iter().map(|d| d.utterances.len()).sum(),
    })
}

#[derive(Debug, Clone)]
pub enum QaSource {
    Replay(PathBuf),
    /// Uses `qa_url` from the config.
    Remote,
}

pub fn extract(ws: &Workspace, cfg: &RunConfig, source: &QaSource) -> Result<usize> {
    let mut meta = start(ws, "extract", cfg);
    let dialogues = load_corpus(ws, &mut meta)?;
    let backend: Box<dyn QaBackend> = match source {
        QaSource::Replay(path) => {
            record_external(&mut meta, "replay", path)?;
            let label = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Box::new(ReplayBackend::from_reader(open_input(path)?, label)?)
        }
        QaSource::Remote => {
            let url = cfg
                .qa_url
                .clone()
                .ok_or_else(|| PipelineError::Input("no QA backend: pass --replay or set qa_url".into()))?;
            Box::new(HttpQaBackend::new(url))
        }
    };
    meta.backends.insert("qa".into(), backend.id());
    meta.notes.insert("question".into(), cfg.question.clone().into());
    meta.notes.insert("question_index".into(), cfg.question_index.into());

    let ctxs: Vec<ContextDocument> = dialogues.iter().map(render_context).collect();
    let candidates = extract_corpus(&ctxs, &cfg.extraction(), backend.as_ref())?;
    let mut buf = Vec::new();
    write_candidates(&mut buf, candidates.values().flatten())?;
    ws.write(&mut meta, CANDIDATES, &buf)?;
    ws.finish(&meta)?;
    Ok(candidates.values().map(Vec::len).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelArtifact {
    #[serde(flatten)]
    pub report: FunnelReport,
    pub question: String,
    pub question_index: usize,
    pub qa_backend: String,
    pub tagger: String,
    pub domain: Option<String>,
}

pub fn validate(ws: &Workspace, cfg: &RunConfig) -> Result<FunnelArtifact> {
    let mut meta = start(ws, "validate", cfg);
    let dialogues = load_corpus(ws, &mut meta)?;
    let path = require(ws, &mut meta, CANDIDATES)?;
    let candidates: BTreeMap<String, Vec<CandidateSpan>> = read_candidates(open_input(&path)?)?;
    let extract_meta = ws.read_meta("extract")?;

    let tagger: Box<dyn Tagger> = match &cfg.tagger_url {
        Some(url) => Box::new(HttpTagger::new(url.clone())),
        None => Box::new(BaselineTagger),
    };
    meta.backends.insert("tagger".into(), tagger.id());

    let ctxs: BTreeMap<String, ContextDocument> = dialogues.iter().map(|d| (d.id.clone(), render_context(d))).collect();
    let outcome = run_funnel(&candidates, &ctxs, tagger.as_ref())?;

    let question = extract_meta
        .notes
        .get("question")
        .and_then(|q| q.as_str())
        .unwrap_or(&cfg.question)
        .to_string();
    let question_index = extract_meta
        .notes
        .get("question_index")
        .and_then(|q| q.as_u64())
        .map_or(cfg.question_index, |q| q as usize);
    let artifact = FunnelArtifact {
        report: outcome.report.clone(),
        question,
        question_index,
        qa_backend: extract_meta.backends.get("qa").cloned().unwrap_or_default(),
        tagger: tagger.id(),
        domain: cfg.preset.map(|p| p.to_string()),
    };

    let mut buf = Vec::new();
    write_valid_spans(&mut buf, &outcome.valid).map_err(ValidationError::from)?;
    ws.write(&mut meta, VALID_SPANS, &buf)?;
    ws.write_json(&mut meta, FUNNEL, &artifact)?;
    ws.finish(&meta)?;
    Ok(artifact)
}

#[derive(Debug, Clone)]
pub enum EmbedSource {
    /// Built-in mock embedder, optionally with keyword family rules.
    Mock { families: Option<PathBuf> },
    /// Precomputed vector file (with its refs sidecar).
    File(PathBuf),
    /// Uses `embed_url` from the config.
    Remote,
}

pub fn embed(ws: &Workspace, cfg: &RunConfig, source: &EmbedSource) -> Result<usize> {
    let mut meta = start(ws, "embed", cfg);
    let spans = flatten(&load_valid(ws, &mut meta)?);
    let backend: Box<dyn EmbeddingBackend> = match source {
        EmbedSource::Mock { families } => {
            let rules: Vec<FamilyRule> = match families {
                Some(path) => {
                    record_external(&mut meta, "families", path)?;
                    read_json(path)?
                }
                None => Vec::new(),
            };
            Box::new(MockEmbedder::new(cfg.mock_dim, cfg.seed).with_families(rules, cfg.mock_spread))
        }
        EmbedSource::File(path) => {
            record_external(&mut meta, "vectors", path)?;
            Box::new(FileEmbedder::open(path)?)
        }
        EmbedSource::Remote => {
            let url = cfg
                .embed_url
                .clone()
                .ok_or_else(|| PipelineError::Input("no embedding backend: pass --backend or set embed_url".into()))?;
            Box::new(HttpEmbedder::new(url))
        }
    };
    meta.backends.insert("embedding".into(), backend.id());

    let opts = EmbedOptions {
        batch_size: cfg.batch_size,
        max_in_flight: cfg.max_in_flight,
    };
    let embedded = embed_spans(&spans, backend.as_ref(), opts)?;

    let rows: Vec<Vec<f32>> = embedded.iter().map(|e| e.vector.clone()).collect();
    let refs: Vec<SpanRef> = embedded.iter().map(|e| e.span_ref.clone()).collect();
    let mut vec_buf = Vec::new();
    write_vectors(&mut vec_buf, &rows)?;
    let mut ref_buf = Vec::new();
    write_refs(&mut ref_buf, &refs)?;
    ws.write(&mut meta, EMBEDDINGS, &vec_buf)?;
    ws.write(&mut meta, EMBEDDING_REFS, &ref_buf)?;
    ws.finish(&meta)?;
    Ok(embedded.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersArtifact {
    pub params: DensityParams,
    pub distance_threshold: f64,
    pub span_refs: Vec<SpanRef>,
    /// Per span, `-1` for noise.
    pub labels: Vec<i64>,
    pub clusters: Vec<LowLevelCluster>,
    /// `top_labels[c]` is the top-level cluster of low-level cluster `c`.
    pub top_labels: Vec<usize>,
    pub noise_count: usize,
}

impl ClustersArtifact {
    pub fn low_level(&self) -> LowLevelClustering {
        LowLevelClustering {
            span_refs: self.span_refs.clone(),
            labels: self.labels.clone(),
            clusters: self.clusters.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub spans: usize,
    pub low_level: usize,
    pub top_level: usize,
    pub noise: usize,
}

pub fn cluster(ws: &Workspace, cfg: &RunConfig) -> Result<ClusterSummary> {
    let mut meta = start(ws, "cluster", cfg);
    let valid = load_valid(ws, &mut meta)?;
    let embedded = load_vectors(ws, &mut meta)?;
    let texts: HashMap<SpanRef, String> = valid
        .values()
        .flatten()
        .map(|s| (s.span_ref(), s.text().to_string()))
        .collect();

    let points: Vec<Vec<f64>> = embedded.iter().map(EmbeddedSpan::to_f64).collect();
    let params = cfg.density();
    let labels = if points.is_empty() {
        log::warn!("no embedded spans to cluster");
        Vec::new()
    } else {
        hdbscan(&points, &params)?
    };
    let low = LowLevelClustering::from_labels(&embedded, labels)?;
    let dendrogram = average_link(&low.centers())?;
    let top_labels = cut_dendrogram(&dendrogram, cfg.distance_threshold)?;

    let vectors: HashMap<SpanRef, Vec<f64>> = embedded.iter().map(|e| (e.span_ref.clone(), e.to_f64())).collect();
    let reps = top_representatives(&low, &top_labels, &vectors, &texts)?;
    let taxonomy = IntentMapping::initial(reps);

    let artifact = ClustersArtifact {
        params,
        distance_threshold: cfg.distance_threshold,
        noise_count: low.noise_count(),
        span_refs: low.span_refs,
        labels: low.labels,
        clusters: low.clusters,
        top_labels,
    };
    ws.write_json(&mut meta, CLUSTERS, &artifact)?;
    ws.write_json(&mut meta, DENDROGRAM, &dendrogram)?;
    ws.write_json(&mut meta, TAXONOMY, &taxonomy)?;
    ws.finish(&meta)?;
    Ok(ClusterSummary {
        spans: artifact.span_refs.len(),
        low_level: artifact.clusters.len(),
        top_level: taxonomy.entries.len(),
        noise: artifact.noise_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeArtifact {
    pub assignments: BTreeMap<String, Assignment>,
    pub source_counts: SourceCounts,
    /// `None` until every live top cluster carries an intent.
    pub volumes: Option<Volumes>,
    pub unmapped: Vec<usize>,
    pub mapping_sha256: String,
}

pub fn landscape(ws: &Workspace, cfg: &RunConfig) -> Result<LandscapeArtifact> {
    let mut meta = start(ws, "landscape", cfg);
    let dialogues = load_corpus(ws, &mut meta)?;
    let valid = load_valid(ws, &mut meta)?;
    let embedded = load_vectors(ws, &mut meta)?;
    let clusters = load_clusters(ws, &mut meta)?;
    require(ws, &mut meta, TAXONOMY)?;
    let (mapping, mapping_sha256) = load_mapping(ws, &mut meta)?;

    let low = clusters.low_level();
    let mut assignments = attach_dialogues(dialogues.iter().map(|d| d.id.as_str()), &valid, &low, &clusters.top_labels);
    let vectors: HashMap<SpanRef, Vec<f64>> = embedded.iter().map(|e| (e.span_ref.clone(), e.to_f64())).collect();
    let forced = force_assign(
        &mut assignments,
        &valid,
        &vectors,
        &low.centers(),
        &clusters.top_labels,
        cfg.force(),
    )?;
    log::info!("force-assigned {forced} dialogue(s)");

    let unmapped = mapping.unmapped();
    let volumes = if unmapped.is_empty() {
        Some(estimate_volumes(&assignments, &mapping)?)
    } else {
        log::warn!("{} top cluster(s) have no intent yet; volumes are withheld", unmapped.len());
        None
    };
    let artifact = LandscapeArtifact {
        source_counts: source_counts(&assignments),
        assignments,
        volumes,
        unmapped,
        mapping_sha256,
    };
    ws.write_json(&mut meta, LANDSCAPE, &artifact)?;
    ws.finish(&meta)?;
    Ok(artifact)
}

/// Reconciles an edited mapping with the taxonomy, stores it and refreshes
/// the landscape.
pub fn import_mapping(ws: &Workspace, cfg: &RunConfig, edited: &Path) -> Result<LandscapeArtifact> {
    let mut meta = start(ws, "mapping", cfg);
    let taxonomy_path = require(ws, &mut meta, TAXONOMY)?;
    let taxonomy: IntentMapping = read_json(&taxonomy_path)?;
    record_external(&mut meta, "edited", edited)?;
    let edited: IntentMapping = read_json(edited)?;
    let mapping = IntentMapping::reconcile(&taxonomy, &edited)?;
    if !mapping.is_complete() {
        log::warn!("mapping leaves clusters unnamed: {:?}", mapping.unmapped());
    }
    ws.write_json(&mut meta, MAPPING, &mapping)?;
    ws.finish(&meta)?;
    landscape(ws, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewPoint {
    pub dialogue_id: String,
    pub rank: usize,
    pub text: String,
    pub x: f64,
    pub y: f64,
    pub low_cluster: i64,
    pub top_cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCenter {
    pub id: usize,
    pub size: usize,
    pub top_cluster: usize,
    /// Mean of the members' 2D coordinates.
    pub x: f64,
    pub y: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewExport {
    pub points: Vec<ReviewPoint>,
    pub centers: Vec<ReviewCenter>,
    pub dendrogram: Dendrogram,
    pub threshold: f64,
    pub cut_rule: String,
    pub top_labels: Vec<usize>,
    pub mapping: IntentMapping,
}

pub fn export_review(ws: &Workspace, cfg: &RunConfig, coordinates: Option<&Path>) -> Result<ReviewExport> {
    let mut meta = start(ws, "export_review", cfg);
    let valid = load_valid(ws, &mut meta)?;
    let embedded = load_vectors(ws, &mut meta)?;
    let clusters = load_clusters(ws, &mut meta)?;
    let dendrogram: Dendrogram = read_json(&require(ws, &mut meta, DENDROGRAM)?)?;
    require(ws, &mut meta, TAXONOMY)?;
    let (mapping, _) = load_mapping(ws, &mut meta)?;

    let projected = match coordinates {
        Some(path) => {
            record_external(&mut meta, "coordinates", path)?;
            let coords = read_coordinates(BufReader::new(open_input(path)?))?;
            let missing: Vec<String> = embedded
                .iter()
                .filter(|e| !coords.contains_key(&e.span_ref))
                .map(|e| e.span_ref.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(PipelineError::Input(format!("coordinates file lacks spans: {missing:?}")));
            }
            embedded.iter().map(|e| coords[&e.span_ref].clone()).collect()
        }
        None => project_spans(&embedded)?,
    };

    let texts: HashMap<SpanRef, &str> = valid.values().flatten().map(|s| (s.span_ref(), s.text())).collect();
    let points: Vec<ReviewPoint> = clusters
        .span_refs
        .iter()
        .zip(&clusters.labels)
        .zip(&projected)
        .map(|((r, &label), p)| ReviewPoint {
            dialogue_id: r.dialogue_id.clone(),
            rank: r.rank,
            text: texts.get(r).copied().unwrap_or("").to_string(),
            x: p.x,
            y: p.y,
            low_cluster: label,
            top_cluster: usize::try_from(label).ok().and_then(|l| clusters.top_labels.get(l).copied()),
        })
        .collect();

    let centers = clusters
        .clusters
        .iter()
        .map(|c| {
            let members: Vec<&ReviewPoint> = points.iter().filter(|p| p.low_cluster == c.id as i64).collect();
            let n = members.len().max(1) as f64;
            ReviewCenter {
                id: c.id,
                size: c.members.len(),
                top_cluster: clusters.top_labels[c.id],
                x: members.iter().map(|p| p.x).sum::<f64>() / n,
                y: members.iter().map(|p| p.y).sum::<f64>() / n,
                center: c.center.clone(),
            }
        })
        .collect();

    let export = ReviewExport {
        points,
        centers,
        dendrogram,
        threshold: clusters.distance_threshold,
        cut_rule: CUT_RULE.to_string(),
        top_labels: clusters.top_labels.clone(),
        mapping,
    };
    ws.write_json(&mut meta, REVIEW_EXPORT, &export)?;
    ws.finish(&meta)?;
    Ok(export)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub evaluation: EvaluationReport,
    pub aligned_spans: usize,
    pub excluded_marker: usize,
    pub excluded_unlabeled_turn: usize,
    pub excluded_missing_dialogue: usize,
    pub scheme: Option<Vec<String>>,
    pub scheme_recall: Option<f64>,
    pub found_intents: Vec<String>,
    pub mapping_sha256: String,
    pub embedding_backend: String,
    /// Zero-shot classification compares spans with the raw, not
    /// renormalized, mean centers.
    pub center_normalization: String,
}

pub fn evaluate(ws: &Workspace, cfg: &RunConfig, gold: &Path, scheme: Option<&[String]>) -> Result<ReportArtifact> {
    let mut meta = start(ws, "evaluate", cfg);
    let valid = load_valid(ws, &mut meta)?;
    let embedded = load_vectors(ws, &mut meta)?;
    let clusters = load_clusters(ws, &mut meta)?;
    let path = require(ws, &mut meta, MAPPING)?;
    let mapping: IntentMapping = read_json(&path)?;
    let mapping_sha256 = meta.inputs[MAPPING].clone();

    record_external(&mut meta, "gold", gold)?;
    let format = CorpusFormat::from_path(gold)
        .ok_or_else(|| PipelineError::Input(format!("cannot tell the format of {}", gold.display())))?;
    let gold = load_gold(open_input(gold)?, format)?;

    let spans = flatten(&valid);
    let alignment = align_gold(&spans, &gold);
    let vectors: HashMap<&SpanRef, Vec<f64>> = embedded.iter().map(|e| (&e.span_ref, e.to_f64())).collect();
    let to_classify: Vec<(SpanRef, Vec<f64>)> = alignment
        .pairs
        .iter()
        .map(|(r, _)| {
            vectors
                .get(r)
                .map(|v| (r.clone(), v.clone()))
                .ok_or_else(|| PipelineError::Input(format!("no embedding for span {r}")))
        })
        .collect::<Result<_>>()?;
    let centers = clusters.low_level().centers();
    let params = cfg.eval();
    let predictions = classify_all(&to_classify, &centers, &params)?;
    let evaluation = classification_report(&alignment.pairs, &predictions, &mapping, &clusters.top_labels, &params)?;

    let scheme_recall = match scheme {
        Some(s) => Some(scheme_recall(&mapping, s)?),
        None => None,
    };
    let embed_meta = ws.read_meta("embed")?;
    let report = ReportArtifact {
        evaluation,
        aligned_spans: alignment.pairs.len(),
        excluded_marker: alignment.excluded_marker,
        excluded_unlabeled_turn: alignment.excluded_unlabeled_turn,
        excluded_missing_dialogue: alignment.excluded_missing_dialogue,
        scheme: scheme.map(<[String]>::to_vec),
        scheme_recall,
        found_intents: mapping.found_intents().into_iter().map(str::to_string).collect(),
        mapping_sha256,
        embedding_backend: embed_meta.backends.get("embedding").cloned().unwrap_or_default(),
        center_normalization: "raw_mean".into(),
    };
    ws.write_json(&mut meta, REPORT, &report)?;
    ws.finish(&meta)?;
    Ok(report)
}
