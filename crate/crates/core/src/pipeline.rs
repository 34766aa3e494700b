//! Declarative end-to-end run: ingest, masking and filtering, alignment,
//! features, linear metrics, embedding, recurrence analysis, PCA and the
//! optional gap simulation. Every stage persists its outputs as CSV, and a
//! manifest lists each file with the stage that produced it.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::align::{align_sequence, build_template, transform_features, AlignScope, MotionWeights, Template};
use crate::embedding::{estimate_sample_parameters, EmbeddingSpec, EstimationParams};
use crate::gapsim::{run_gap_simulation, write_outputs, GapSimConfig};
use crate::ingest::{load_pose, write_pose_csv, Cell, LoadOptions, PoseFormat, Table};
use crate::kinematics::{summarize_window, windowed_lag0, FeatureDef, KeypointRef};
use crate::linalg::Mat;
use crate::pca::{fit_pca, pose_matrix, principal_movements, translation_diagnostic, write_model_csv};
use crate::preprocess::{
    interpolate_pose_gaps, lowpass_pose, mask_low_confidence, resample_pose, FilterSpec, GapPolicy, NormMode,
    ResampleMethod,
};
use crate::recurrence::{
    windowed_rqa, RecurrenceConfig, RecurrenceMode, Rescale, RqaInput, RqaMetrics, Threshold, WindowRqa,
};
use crate::{Error, PoseSequence, Result, Series, WindowSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDef {
    pub path: PathBuf,
    /// Used in output file names; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestBlock {
    pub format: Option<PoseFormat>,
    pub rate: f64,
    pub person: usize,
    pub json_key: String,
}

impl Default for IngestBlock {
    fn default() -> Self {
        let d = LoadOptions::default();
        IngestBlock { format: d.format, rate: d.rate, person: d.person, json_key: d.json_key }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessBlock {
    pub confidence_min: Option<f64>,
    pub resample: Option<f64>,
    pub resample_method: Option<ResampleMethod>,
    pub max_gap: Option<usize>,
    pub filter_cutoff: Option<f64>,
    pub filter_order: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    #[default]
    GlobalMean,
    ReferenceFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignBlock {
    pub keypoints: Vec<KeypointRef>,
    #[serde(default)]
    pub template: TemplateKind,
    /// Frame of the first input used by `reference_frame`.
    #[serde(default)]
    pub reference_frame: usize,
    #[serde(default = "yes")]
    pub allow_scale: bool,
    /// Fit one transform per block of this many frames instead of per frame.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub center_frames: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct WindowBlock {
    /// Window length in samples.
    pub length: Option<usize>,
    /// Window length in seconds, converted at the analysis rate.
    pub seconds: Option<f64>,
    pub overlap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingBlock {
    pub m: Option<usize>,
    pub tau: Option<usize>,
    pub theiler: Option<usize>,
    pub l_min: Option<usize>,
    /// Estimate τ and m from the feature series with AMI and FNN.
    pub estimate: bool,
    pub max_lag: Option<usize>,
    pub max_m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceBlock {
    /// Feature names; empty means every feature.
    pub features: Vec<String>,
    /// Rescaled radius; defaults to 0.2 when `target_rr` is not given.
    pub epsilon: Option<f64>,
    /// Recurrence rate (fraction) to hit instead of a fixed radius.
    pub target_rr: Option<f64>,
    pub rescale: Option<Rescale>,
    pub normalize: Option<NormMode>,
}

impl RecurrenceBlock {
    fn threshold(&self) -> Result<Threshold> {
        match (self.epsilon, self.target_rr) {
            (Some(_), Some(_)) => Err(Error::invalid("give either epsilon or target_rr, not both")),
            (_, Some(r)) => Ok(Threshold::TargetRr(r)),
            (e, None) => Ok(Threshold::Fixed(e.unwrap_or(0.2))),
        }
    }

    fn config(&self, mode: RecurrenceMode, spec: &EmbeddingSpec) -> Result<RecurrenceConfig> {
        let cfg = RecurrenceConfig::from_spec(mode, spec, self.threshold()?, self.rescale.unwrap_or(Rescale::Mean));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaBlock {
    pub standardize: bool,
    pub components: Option<usize>,
    /// Principal movements to export.
    pub movements: usize,
    /// RMS keypoint displacement between the extreme postures, in data units.
    pub target_rms: f64,
}

impl Default for PcaBlock {
    fn default() -> Self {
        PcaBlock { standardize: false, components: None, movements: 3, target_rms: 1.0 }
    }
}

/// A complete run. Relative paths are taken against the config file's
/// directory when loaded with [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<InputDef>,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ingest: IngestBlock,
    #[serde(default)]
    pub preprocess: PreprocessBlock,
    #[serde(default)]
    pub align: Option<AlignBlock>,
    #[serde(default)]
    pub features: Vec<FeatureDef>,
    #[serde(default)]
    pub windows: WindowBlock,
    #[serde(default)]
    pub embedding: EmbeddingBlock,
    #[serde(default)]
    pub rqa: Option<RecurrenceBlock>,
    #[serde(default)]
    pub crqa: Option<RecurrenceBlock>,
    #[serde(default)]
    pub mdrqa: Option<RecurrenceBlock>,
    #[serde(default)]
    pub pca: Option<PcaBlock>,
    #[serde(default)]
    pub gapsim: Option<GapSimConfig>,
    /// Original text, echoed into the output directory.
    #[serde(skip)]
    pub source: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Format { path: PathBuf::from("<config>"), message: e.to_string() })?;
        cfg.source = Some(text.to_string());
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format { path: path.to_path_buf(), message },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    fn input_names(&self) -> Vec<String> {
        let stems: Vec<String> = self
            .inputs
            .iter()
            .map(|i| {
                i.name.clone().unwrap_or_else(|| {
                    i.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
                })
            })
            .collect();
        let unique: BTreeSet<&String> = stems.iter().collect();
        if unique.len() == stems.len() {
            stems
        } else {
            (0..stems.len()).map(|i| format!("input{i}")).collect()
        }
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::invalid("config lists no inputs"));
        }
        if self.crqa.is_some() && self.inputs.len() != 2 {
            return Err(Error::invalid("crqa needs exactly two inputs"));
        }
        if (self.rqa.is_some() || self.crqa.is_some() || self.mdrqa.is_some()) && self.features.is_empty() {
            return Err(Error::invalid("recurrence analysis requested but no features are defined"));
        }
        let names: BTreeSet<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        if names.len() != self.features.len() {
            return Err(Error::invalid("feature names must be unique"));
        }
        for block in [&self.rqa, &self.crqa, &self.mdrqa].into_iter().flatten() {
            block.threshold()?;
            if let Some(bad) = block.features.iter().find(|f| !names.contains(f.as_str())) {
                return Err(Error::invalid(format!("recurrence block references unknown feature `{bad}`")));
            }
        }
        if let Some(m) = &self.mdrqa {
            let n = if m.features.is_empty() { self.features.len() } else { m.features.len() };
            if n < 2 {
                return Err(Error::invalid("mdrqa needs at least two features"));
            }
        }
        if self.windows.length.is_some() && self.windows.seconds.is_some() {
            return Err(Error::invalid("give either windows.length or windows.seconds"));
        }
        let e = &self.embedding;
        if !e.estimate && (self.rqa.is_some() || self.crqa.is_some() || self.mdrqa.is_some()) && (e.m.is_none() || e.tau.is_none()) {
            return Err(Error::invalid("embedding needs m and tau, or estimate = true"));
        }
        if let Some(a) = &self.align {
            if a.keypoints.len() < 2 {
                return Err(Error::invalid("alignment needs at least two keypoints"));
            }
        }
        if let Some(p) = &self.preprocess.filter_cutoff {
            FilterSpec::lowpass(self.preprocess.filter_order.unwrap_or(4), *p)
                .validate(self.preprocess.resample.unwrap_or(self.ingest.rate))?;
        }
        Ok(())
    }

    /// Checks that every keypoint reference resolves on the loaded data.
    fn validate_against(&self, seqs: &[PoseSequence<f64>]) -> Result<()> {
        for (p, name) in seqs.iter().zip(self.input_names()) {
            for f in &self.features {
                f.validate(p).map_err(|e| e.in_stage("features", &name))?;
            }
            if let Some(a) = &self.align {
                for k in &a.keypoints {
                    k.resolve(p).map_err(|e| e.in_stage("align", &name))?;
                }
            }
        }
        if self.pca.is_some() {
            let first = &seqs[0];
            if seqs.iter().any(|s| s.keypoint_labels != first.keypoint_labels || s.dims != first.dims) {
                return Err(Error::invalid("pca needs inputs with identical keypoints"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

struct Out {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Out {
    fn path(&self, stage: &str, name: &str) -> Result<PathBuf> {
        let dir = self.root.join(stage);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir.join(name))
    }

    fn record(&mut self, stage: &str, p: &Path) {
        let rel = p.strip_prefix(&self.root).unwrap_or(p);
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        self.files.push(ManifestEntry { path: rel, stage: stage.to_string() });
    }

    fn table(&mut self, stage: &str, name: &str, t: &Table) -> Result<()> {
        let p = self.path(stage, name)?;
        t.write(&p)?;
        self.record(stage, &p);
        Ok(())
    }
}

/// Clears files left by an earlier run (as listed in its manifest). A
/// non-empty directory without a manifest is refused.
fn prepare_output(root: &Path) -> Result<()> {
    if !root.exists() {
        return std::fs::create_dir_all(root).map_err(|e| Error::io(root, e));
    }
    let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    if entries.next().is_none() {
        return Ok(());
    }
    let mpath = root.join(MANIFEST);
    let text = std::fs::read_to_string(&mpath).map_err(|_| {
        Error::invalid(format!("output directory {} is not empty and holds no {MANIFEST}", root.display()))
    })?;
    let old: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format { path: mpath.clone(), message: e.to_string() })?;
    for f in old.files {
        let p = root.join(&f.path);
        if p.is_file() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// A feature series and the frame its first sample belongs to.
struct Feature {
    name: String,
    offset: usize,
    series: Series<f64>,
}

fn windows_for(block: &WindowBlock, n: usize, rate: f64) -> Result<WindowSpec> {
    let length = match (block.length, block.seconds) {
        (Some(l), _) => l,
        (None, Some(s)) => (s * rate).round() as usize,
        (None, None) => n,
    };
    WindowSpec::new(length, block.overlap)
}

/// Series trimmed to a common frame range `[max offset, min end)`.
fn common_range(fs: &[&Feature]) -> Result<Vec<Series<f64>>> {
    let start = fs.iter().map(|f| f.offset).max().unwrap_or(0);
    let end = fs.iter().map(|f| f.offset + f.series.len()).min().unwrap_or(0);
    if end <= start {
        return Err(Error::invalid("features share no common frames"));
    }
    Ok(fs.iter().map(|f| f.series.slice(start - f.offset..end - f.offset)).collect())
}

fn rqa_table(label_cols: &[&str], rows: Vec<(Vec<Cell>, Vec<WindowRqa<f64>>)>) -> Result<Table> {
    let mut cols: Vec<String> = label_cols.iter().map(|s| s.to_string()).collect();
    cols.push("window_start".into());
    cols.extend(RqaMetrics::<f64>::NAMES.iter().map(|s| s.to_string()));
    cols.extend(["epsilon_abs", "d_bar", "error"].map(String::from));
    let mut t = Table::new(cols);
    for (labels, windows) in rows {
        for w in windows {
            let mut row = labels.clone();
            row.push(w.start.into());
            match &w.metrics {
                Some(m) => row.extend(m.values().map(Cell::from)),
                None => row.extend(std::iter::repeat_n(Cell::Missing, 9)),
            }
            row.push(w.epsilon_abs.into());
            row.push(w.d_bar.into());
            row.push(w.error.as_deref().map_or(Cell::Missing, Cell::from));
            t.push(row)?;
        }
    }
    Ok(t)
}

fn select<'a>(all: &'a [Feature], names: &[String]) -> Vec<&'a Feature> {
    if names.is_empty() {
        all.iter().collect()
    } else {
        names.iter().filter_map(|n| all.iter().find(|f| &f.name == n)).collect()
    }
}

/// Runs every configured stage in order and returns the manifest.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let root = cfg.output_dir();
    let names = cfg.input_names();

    // ingest
    let opts = LoadOptions {
        format: cfg.ingest.format,
        rate: cfg.ingest.rate,
        person: cfg.ingest.person,
        json_key: cfg.ingest.json_key.clone(),
    };
    let mut seqs: Vec<PoseSequence<f64>> = cfg
        .inputs
        .iter()
        .zip(&names)
        .map(|(i, n)| load_pose(cfg.resolve(&i.path), &opts).map_err(|e| e.in_stage("ingest", n)))
        .collect::<Result<_>>()?;
    cfg.validate_against(&seqs)?;

    prepare_output(&root)?;
    let mut out = Out { root: root.clone(), files: Vec::new() };
    let echo = match &cfg.source {
        Some(s) => s.clone(),
        None => toml::to_string(cfg).map_err(|e| Error::invalid(e.to_string()))?,
    };
    let p = root.join("config.toml");
    std::fs::write(&p, echo).map_err(|e| Error::io(&p, e))?;
    out.record("config", &p);

    // masking, resampling, gap filling, filtering
    let pre = &cfg.preprocess;
    for (s, name) in seqs.iter_mut().zip(&names) {
        let stage = |e: Error| e.in_stage("preprocess", name);
        if let Some(c) = pre.confidence_min {
            *s = mask_low_confidence(s, c);
        }
        if let Some(rate) = pre.resample {
            *s = resample_pose(s, rate, pre.resample_method.unwrap_or(ResampleMethod::Cubic)).map_err(stage)?;
        }
        if let Some(g) = pre.max_gap {
            *s = interpolate_pose_gaps(s, &GapPolicy::new(g)).map_err(stage)?;
        }
        if let Some(fc) = pre.filter_cutoff {
            *s = lowpass_pose(s, &FilterSpec::lowpass(pre.filter_order.unwrap_or(4), fc)).map_err(stage)?;
        }
        let p = out.path("preprocess", &format!("{name}.csv"))?;
        write_pose_csv(s, &p)?;
        out.record("preprocess", &p);
    }
    info!("preprocessing done");

    // alignment
    if let Some(a) = &cfg.align {
        let kp: Vec<usize> = a.keypoints.iter().map(|k| k.resolve(&seqs[0])).collect::<Result<_>>()?;
        let template: Template<f64> = match a.template {
            TemplateKind::GlobalMean => build_template(&seqs, &kp, a.center_frames),
            TemplateKind::ReferenceFrame => Template::from_frame(&seqs[0], a.reference_frame, &kp),
        }
        .map_err(|e| e.in_stage("align", "template"))?;
        let scope = a.window.map_or(AlignScope::Frame, |length| AlignScope::Window { length });
        for (s, name) in seqs.iter_mut().zip(&names) {
            let (aligned, tfs) = align_sequence(s, &template, scope, a.allow_scale).map_err(|e| e.in_stage("align", name))?;
            let tf = transform_features(&tfs, aligned.base.rate, &MotionWeights::default())
                .map_err(|e| e.in_stage("align", name))?;
            let mut t = Table::new(["frame", "translation", "angle", "scale", "motion"]);
            for k in 0..tfs.len() {
                t.push(vec![
                    k.into(),
                    tf.translation.get(k).into(),
                    tf.angle.get(k).into(),
                    tf.scale.get(k).into(),
                    tf.motion.get(k).into(),
                ])?;
            }
            out.table("align", &format!("{name}_transforms.csv"), &t)?;
            let p = out.path("align", &format!("{name}.csv"))?;
            write_pose_csv(&aligned, &p)?;
            out.record("align", &p);
            *s = aligned;
        }
    }

    // features
    let mut features: Vec<Vec<Feature>> = Vec::new();
    for (s, name) in seqs.iter().zip(&names) {
        let n = s.n_frames();
        let fs = cfg
            .features
            .iter()
            .map(|f| {
                let series = f.compute(s).map_err(|e| e.in_stage("features", format!("{name}/{}", f.name)))?;
                Ok(Feature { name: f.name.clone(), offset: n - series.len(), series })
            })
            .collect::<Result<Vec<_>>>()?;
        if !fs.is_empty() {
            let mut cols = vec!["frame".to_string(), "time".to_string()];
            cols.extend(fs.iter().map(|f| f.name.clone()));
            let mut t = Table::new(cols);
            for k in 0..n {
                let mut row = vec![k.into(), s.base.time_of(k).into()];
                row.extend(fs.iter().map(|f| Cell::from(k.checked_sub(f.offset).and_then(|i| f.series.get(i)))));
                t.push(row)?;
            }
            out.table("features", &format!("{name}.csv"), &t)?;
        }
        features.push(fs);
    }

    // linear metrics
    let rate = seqs[0].base.rate;
    if !cfg.features.is_empty() {
        let stats = ["mean", "sd", "max"];
        let mut cols = vec!["feature".to_string(), "window_start".to_string()];
        for q in ["displacement", "velocity", "acceleration"] {
            cols.extend(stats.iter().map(|s| format!("{q}_{s}")));
        }
        cols.push("sparse".into());
        for (fs, name) in features.iter().zip(&names) {
            let mut t = Table::new(cols.clone());
            for f in fs {
                let w = windows_for(&cfg.windows, f.series.len(), rate)?;
                let sums = summarize_window(&f.series, &w).map_err(|e| e.in_stage("linear", format!("{name}/{}", f.name)))?;
                for s in sums {
                    let mut row: Vec<Cell> = vec![f.name.as_str().into(), (s.window_start + f.offset).into()];
                    row.extend(s.nine().map(Cell::from));
                    row.push(usize::from(s.sparse).into());
                    t.push(row)?;
                }
            }
            out.table("linear", &format!("{name}_summary.csv"), &t)?;
        }
        if features.len() == 2 {
            let mut t = Table::new(["feature", "window_start", "lag0"]);
            for (a, b) in features[0].iter().zip(&features[1]) {
                let ab = common_range(&[a, b])?;
                let w = windows_for(&cfg.windows, ab[0].len(), rate)?;
                let r = windowed_lag0(&ab[0], &ab[1], &w).map_err(|e| e.in_stage("linear", &a.name))?;
                for (start, v) in r {
                    t.push(vec![a.name.as_str().into(), (start + a.offset.max(b.offset)).into(), v.into()])?;
                }
            }
            out.table("linear", "lag0.csv", &t)?;
        }
    }

    // embedding parameters
    let wants_rqa = cfg.rqa.is_some() || cfg.crqa.is_some() || cfg.mdrqa.is_some();
    let spec = if wants_rqa {
        let e = &cfg.embedding;
        let spec = if e.estimate {
            let params = EstimationParams {
                max_lag: e.max_lag.unwrap_or(EstimationParams::default().max_lag),
                max_m: e.max_m.unwrap_or(EstimationParams::default().max_m),
                ..Default::default()
            };
            let all: Vec<Series<f64>> = features.iter().flatten().map(|f| f.series.clone()).collect();
            let est = estimate_sample_parameters(&all, &params).map_err(|e| e.in_stage("embedding", "features"))?;
            let mut t = Table::new(["input", "feature", "tau", "m"]);
            let labels = features.iter().zip(&names).flat_map(|(fs, n)| fs.iter().map(move |f| (n, &f.name)));
            for ((n, f), p) in labels.zip(&est.per_series) {
                t.push(vec![n.as_str().into(), f.as_str().into(), p.tau.into(), p.m.into()])?;
            }
            out.table("embedding", "per_series.csv", &t)?;
            EmbeddingSpec {
                m: e.m.unwrap_or(est.spec.m),
                tau: e.tau.unwrap_or(est.spec.tau),
                theiler: e.theiler.unwrap_or(e.tau.unwrap_or(est.spec.tau)),
                l_min: e.l_min.unwrap_or(2),
            }
        } else {
            let tau = e.tau.expect("validated");
            EmbeddingSpec { m: e.m.expect("validated"), tau, theiler: e.theiler.unwrap_or(tau), l_min: e.l_min.unwrap_or(2) }
        };
        spec.validate()?;
        let mut t = Table::new(["m", "tau", "theiler", "l_min"]);
        t.push(vec![spec.m.into(), spec.tau.into(), spec.theiler.into(), spec.l_min.into()])?;
        out.table("embedding", "parameters.csv", &t)?;
        Some(spec)
    } else {
        None
    };

    // recurrence analysis
    if let (Some(block), Some(spec)) = (&cfg.rqa, &spec) {
        let rc = block.config(RecurrenceMode::Auto, spec)?;
        let norm = block.normalize.unwrap_or(NormMode::ZScore);
        for (fs, name) in features.iter().zip(&names) {
            let mut rows = Vec::new();
            for f in select(fs, &block.features) {
                let w = windows_for(&cfg.windows, f.series.len(), rate)?;
                let r = windowed_rqa(&RqaInput::Auto(&f.series), &w, spec, &rc, norm)
                    .map_err(|e| e.in_stage("rqa", format!("{name}/{}", f.name)))?;
                rows.push((vec![Cell::from(f.name.as_str())], shift(r, f.offset)));
            }
            out.table("rqa", &format!("{name}.csv"), &rqa_table(&["feature"], rows)?)?;
        }
    }
    if let (Some(block), Some(spec)) = (&cfg.crqa, &spec) {
        let rc = block.config(RecurrenceMode::Cross, spec)?;
        let norm = block.normalize.unwrap_or(NormMode::ZScore);
        let mut rows = Vec::new();
        for a in select(&features[0], &block.features) {
            let b = features[1].iter().find(|f| f.name == a.name).expect("same feature set");
            let ab = common_range(&[a, b])?;
            let w = windows_for(&cfg.windows, ab[0].len(), rate)?;
            let r = windowed_rqa(&RqaInput::Cross(&ab[0], &ab[1]), &w, spec, &rc, norm)
                .map_err(|e| e.in_stage("crqa", &a.name))?;
            rows.push((vec![Cell::from(a.name.as_str())], shift(r, a.offset.max(b.offset))));
        }
        out.table("crqa", &format!("{}_{}.csv", names[0], names[1]), &rqa_table(&["feature"], rows)?)?;
    }
    if let (Some(block), Some(spec)) = (&cfg.mdrqa, &spec) {
        let rc = block.config(RecurrenceMode::Multi, spec)?;
        for (fs, name) in features.iter().zip(&names) {
            let chosen = select(fs, &block.features);
            let series = common_range(&chosen)?;
            let w = windows_for(&cfg.windows, series[0].len(), rate)?;
            let r = windowed_rqa(&RqaInput::Multi(&series), &w, spec, &rc, NormMode::ZScore)
                .map_err(|e| e.in_stage("mdrqa", name))?;
            let offset = chosen.iter().map(|f| f.offset).max().unwrap_or(0);
            let label = chosen.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join("+");
            let rows = vec![(vec![Cell::from(label)], shift(r, offset))];
            out.table("mdrqa", &format!("{name}.csv"), &rqa_table(&["features"], rows)?)?;
        }
    }

    // posture PCA over all inputs
    if let Some(pb) = &cfg.pca {
        let mats: Vec<Mat<f64>> = seqs.iter().map(|s| pose_matrix(s).0).collect();
        let width = mats[0].cols;
        let rows: usize = mats.iter().map(|m| m.rows).sum();
        let data: Vec<f64> = mats.iter().flat_map(|m| m.data.iter().copied()).collect();
        let frames = Mat::from_rows(rows, width, data);
        let dims = seqs[0].dims;
        let model = fit_pca(&frames, dims, pb.standardize, pb.components).map_err(|e| e.in_stage("pca", "postures"))?;
        let diag = translation_diagnostic(&model, &frames)?;
        if diag.flagged {
            warn!("first posture component tracks whole-body translation; consider aligning first");
        }
        let labels = &seqs[0].keypoint_labels;
        let (mp, vp) = (out.path("pca", "model.csv")?, out.path("pca", "variance.csv")?);
        write_model_csv(&model, labels, &mp, &vp)?;
        out.record("pca", &mp);
        out.record("pca", &vp);
        let k = pb.movements.min(model.n_components());
        let pm = principal_movements(&model, k, pb.target_rms)?;
        let axes = ["x", "y", "z"];
        let mut t = Table::new(["component", "keypoint", "axis", "min", "max", "amplification"]);
        for m in &pm {
            for (j, (lo, hi)) in m.min_pose.iter().zip(&m.max_pose).enumerate() {
                t.push(vec![
                    (m.component + 1).into(),
                    labels[j / dims].as_str().into(),
                    axes[j % dims].into(),
                    (*lo).into(),
                    (*hi).into(),
                    m.amplification.into(),
                ])?;
            }
        }
        out.table("pca", "movements.csv", &t)?;
    }

    if let Some(g) = &cfg.gapsim {
        let g = GapSimConfig { seed: cfg.seed, ..g.clone() };
        let r = run_gap_simulation(&g).map_err(|e| e.in_stage("gapsim", "simulation"))?;
        for p in write_outputs(&r, &root.join("gapsim"))? {
            out.record("gapsim", &p);
        }
    }

    out.files.push(ManifestEntry { path: MANIFEST.to_string(), stage: "manifest".to_string() });
    let manifest = Manifest { seed: cfg.seed, files: out.files };
    let p = root.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

fn shift(mut r: Vec<WindowRqa<f64>>, offset: usize) -> Vec<WindowRqa<f64>> {
    r.iter_mut().for_each(|w| w.start += offset);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Two-keypoint-plus-anchor recordings with sinusoidal motion.
    fn write_fixture(dir: &Path, name: &str, phase: f64) -> PathBuf {
        let mut p = PoseSequence::<f64>::empty(400, vec!["a".into(), "b".into(), "c".into()], 2, 50.0).unwrap();
        for f in 0..400 {
            let t = f as f64 / 50.0;
            let w = 2.0 * PI * 0.7 * t + phase;
            p.set_point(f, 0, &[0.0, 0.0], 1.0);
            p.set_point(f, 1, &[1.0 + 0.2 * w.sin(), 0.1 * (1.3 * w).cos()], 1.0);
            p.set_point(f, 2, &[0.0, 1.0 + 0.1 * w.cos()], if f % 37 == 5 { 0.1 } else { 1.0 });
        }
        let path = dir.join(format!("{name}.csv"));
        write_pose_csv(&p, &path).unwrap();
        path
    }

    fn config(dir: &Path) -> String {
        write_fixture(dir, "left", 0.0);
        write_fixture(dir, "right", 0.8);
        r#"
inputs = [{ path = "left.csv" }, { path = "right.csv" }]
output = "out"
seed = 3

[ingest]
rate = 50

[preprocess]
confidence_min = 0.3
max_gap = 6
filter_cutoff = 8.0

[align]
keypoints = ["a", "b", "c"]
allow_scale = false

[[features]]
name = "ab"
kind = "aperture"
keypoints = ["a", "b"]

[[features]]
name = "b_speed"
kind = "magnitude"
keypoints = ["b"]

[windows]
length = 200
overlap = 0.5

[embedding]
m = 3
tau = 5

[rqa]
[crqa]
target_rr = 0.05
[mdrqa]
[pca]
movements = 2
"#
        .to_string()
    }

    #[test]
    fn full_run_writes_every_stage() {
        let dir = tempfile::tempdir().unwrap();
        let text = config(dir.path());
        std::fs::write(dir.path().join("run.toml"), &text).unwrap();
        let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        let m = run_pipeline(&cfg).unwrap();
        let stages: Vec<&str> = m.files.iter().map(|f| f.stage.as_str()).collect();
        let order = ["config", "preprocess", "align", "features", "linear", "embedding", "rqa", "crqa", "mdrqa", "pca", "manifest"];
        let mut pos = 0;
        for s in &stages {
            let i = order.iter().position(|o| o == s).unwrap();
            assert!(i >= pos, "stage {s} out of order");
            pos = i;
        }
        for s in order {
            assert!(stages.contains(&s), "missing {s}");
        }
        let out = dir.path().join("out");
        assert_eq!(std::fs::read_to_string(out.join("config.toml")).unwrap(), text);
        // every file on disk is listed
        let mut on_disk = Vec::new();
        for e in walk(&out) {
            on_disk.push(e.strip_prefix(&out).unwrap().to_string_lossy().replace('\\', "/"));
        }
        on_disk.sort();
        let mut listed: Vec<String> = m.files.iter().map(|f| f.path.clone()).collect();
        listed.sort();
        assert_eq!(on_disk, listed);
        let rqa = std::fs::read_to_string(out.join("rqa/left.csv")).unwrap();
        // 400 aperture samples give 3 windows, 399 speed samples give 2
        assert_eq!(rqa.lines().count(), 1 + 3 + 2);
        // a second run into the same directory replaces the first
        let again = run_pipeline(&cfg).unwrap();
        assert_eq!(again, m);
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut v = Vec::new();
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                v.extend(walk(&p));
            } else {
                v.push(p);
            }
        }
        v
    }

    #[test]
    fn unknown_keypoint_fails_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let text = config(dir.path()).replace(r#"keypoints = ["b"]"#, r#"keypoints = ["nose"]"#);
        let mut cfg = RunConfig::from_toml_str(&text).unwrap();
        cfg.base_dir = dir.path().to_path_buf();
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(err.is_validation(), "{err}");
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn config_validation() {
        let base = "inputs = []\noutput = \"o\"\n";
        assert!(RunConfig::from_toml_str(base).unwrap().validate().is_err());
        assert!(RunConfig::from_toml_str("inputs = [{path = \"x\"}]\noutput = \"o\"\nbogus = 1\n").is_err());
        let rr = "inputs = [{path = \"x\"}]\noutput = \"o\"\n[[features]]\nname = \"f\"\nkind = \"magnitude\"\nkeypoints = [0]\n[embedding]\nm = 2\ntau = 1\n[rqa]\nepsilon = 0.1\ntarget_rr = 0.02\n";
        assert!(RunConfig::from_toml_str(rr).unwrap().validate().is_err());
        let crqa = rr.replace("[rqa]\nepsilon = 0.1\ntarget_rr = 0.02\n", "[crqa]\n");
        assert!(RunConfig::from_toml_str(&crqa).unwrap().validate().is_err());
    }

    #[test]
    fn refuses_foreign_output_directory() {
        let dir = tempfile::tempdir().unwrap();
        let text = config(dir.path());
        std::fs::create_dir_all(dir.path().join("out")).unwrap();
        std::fs::write(dir.path().join("out/keep.txt"), "x").unwrap();
        let mut cfg = RunConfig::from_toml_str(&text).unwrap();
        cfg.base_dir = dir.path().to_path_buf();
        assert!(run_pipeline(&cfg).is_err());
        assert!(dir.path().join("out/keep.txt").exists());
    }
}
