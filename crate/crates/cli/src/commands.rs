use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pose_dynamics::align::{align_sequence, build_template, transform_features, AlignScope, MotionWeights, Template, TemplateSource};
use pose_dynamics::embedding::{estimate_sample_parameters, AmiParams, EmbeddingSpec, EstimationParams};
use pose_dynamics::gapsim::{run_gap_simulation, write_outputs, GapSimConfig};
use pose_dynamics::ingest::{
    load_pose, read_points_csv, read_series_csv, write_matrix_pgm, write_pose_csv, Cell, LoadOptions, PoseFormat, Table,
};
use pose_dynamics::kinematics::{summarize_window, FeatureDef, KeypointRef};
use pose_dynamics::linalg::Mat;
use pose_dynamics::pca::{fit_pca, pose_matrix, principal_movements, translation_diagnostic, write_model_csv};
use pose_dynamics::pipeline::{run_pipeline, RunConfig};
use pose_dynamics::preprocess::{
    interpolate_pose_gaps, lowpass_pose, map_coordinate_series, mask_low_confidence, normalize, resample_pose,
    FilterSpec, GapPolicy, NormMode, ResampleMethod,
};
use pose_dynamics::recurrence::{
    build_matrix, joint_matrix, multi_embed, windowed_rqa, RecurrenceConfig, RecurrenceMatrix, RecurrenceMode,
    Rescale, RqaInput, RqaMetrics, Threshold, WindowRqa,
};
use pose_dynamics::embedding::delay_embed;
use pose_dynamics::{Error, PoseSequence64, Series64, WindowSpec};

use super::{Command, Format, InputArgs, Norm, RecurrenceArgs, RescaleArg, Scope, TemplateArg, WindowArgs};

/// 2 for invalid input or parameters, 3 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_validation() => 2,
        _ => 3,
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidParameter(msg.into()).into()
}

fn norm_mode(n: Norm) -> NormMode {
    match n {
        Norm::Zscore => NormMode::ZScore,
        Norm::Unit => NormMode::UnitInterval,
        Norm::None => NormMode::None,
    }
}

fn load(i: &InputArgs) -> Result<PoseSequence64> {
    let opts = LoadOptions {
        format: i.format.map(|f| match f {
            Format::Csv => PoseFormat::Csv,
            Format::PoseJson => PoseFormat::PoseJson,
        }),
        rate: i.rate,
        person: i.person,
        json_key: i.json_key.clone(),
    };
    Ok(load_pose(&i.input, &opts)?)
}

fn load_plain(path: &Path, rate: f64) -> Result<PoseSequence64> {
    Ok(load_pose(path, &LoadOptions::with_rate(rate))?)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn keypoint_ref(s: &str) -> KeypointRef {
    s.parse().map(KeypointRef::Index).unwrap_or_else(|_| KeypointRef::Label(s.to_string()))
}

fn window_spec(w: &WindowArgs, n: usize) -> Result<WindowSpec> {
    Ok(WindowSpec::new(w.window.unwrap_or(n), w.overlap)?)
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess {
            input,
            confidence_min,
            max_gap,
            filter_cutoff,
            filter_order,
            resample,
            normalize: norm,
            scope,
            window,
            out,
        } => {
            let mut p = load(&input)?;
            if let Some(c) = confidence_min {
                p = mask_low_confidence(&p, c);
            }
            if let Some(r) = resample {
                p = resample_pose(&p, r, ResampleMethod::Cubic)?;
            }
            if let Some(g) = max_gap {
                p = interpolate_pose_gaps(&p, &GapPolicy::new(g))?;
            }
            if let Some(fc) = filter_cutoff {
                p = lowpass_pose(&p, &FilterSpec::lowpass(filter_order, fc))?;
            }
            let mode = norm_mode(norm);
            if mode != NormMode::None {
                let block = match scope {
                    Scope::Trial => None,
                    Scope::Window => Some(window.ok_or_else(|| invalid("--scope window needs --window"))?),
                };
                p = map_coordinate_series(&p, |s| normalize_blocks(s, mode, block))?;
            }
            write_pose_csv(&p, &out)?;
            Ok(())
        }
        Command::Align { inputs, rate, keypoints, template, template_file, reference_frame, no_scale, window, out } => {
            let seqs = inputs.iter().map(|p| load_plain(p, rate)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<KeypointRef> = keypoints.iter().map(|k| keypoint_ref(k)).collect();
            let kp: Vec<usize> = refs.iter().map(|r| r.resolve(&seqs[0])).collect::<pose_dynamics::Result<_>>()?;
            let tpl = match (template_file, template) {
                (Some(f), _) => {
                    let (labels, pts) = read_points_csv::<f64>(&f)?;
                    let idx = labels.iter().map(|l| keypoint_ref(l).resolve(&seqs[0])).collect::<pose_dynamics::Result<_>>()?;
                    Template::new(pts, TemplateSource::Synthetic, idx)?
                }
                (None, TemplateArg::GlobalMean) => build_template(&seqs, &kp, false)?,
                (None, TemplateArg::ReferenceFrame) => Template::from_frame(&seqs[0], reference_frame, &kp)?,
            };
            mkdir(&out)?;
            let scope = window.map_or(AlignScope::Frame, |length| AlignScope::Window { length });
            for (path, s) in inputs.iter().zip(&seqs) {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into());
                let (aligned, tfs) = align_sequence(s, &tpl, scope, !no_scale)?;
                write_pose_csv(&aligned, out.join(format!("{stem}_aligned.csv")))?;
                let tf = transform_features(&tfs, rate, &MotionWeights::default())?;
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
                t.write(&out.join(format!("{stem}_transforms.csv")))?;
            }
            Ok(())
        }
        Command::Features { input, spec, windows, out } => {
            let p = load(&input)?;
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let bad = |m: String| Error::Format { path: spec.clone(), message: m };
            let table: toml::Table = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let features: Vec<FeatureDef> = table
                .get("features")
                .cloned()
                .ok_or_else(|| bad("no [[features]] entries".into()))?
                .try_into()
                .map_err(|e: toml::de::Error| bad(e.to_string()))?;
            for d in &features {
                d.validate(&p)?;
            }
            mkdir(&out)?;
            let n = p.n_frames();
            let series: Vec<(String, usize, Series64)> = features
                .iter()
                .map(|d| d.compute(&p).map(|s| (d.name.clone(), n - s.len(), s)))
                .collect::<pose_dynamics::Result<_>>()?;
            let mut cols = vec!["frame".to_string(), "time".to_string()];
            cols.extend(series.iter().map(|s| s.0.clone()));
            let mut t = Table::new(cols);
            for k in 0..n {
                let mut row: Vec<Cell> = vec![k.into(), p.base.time_of(k).into()];
                row.extend(series.iter().map(|(_, off, s)| Cell::from(k.checked_sub(*off).and_then(|i| s.get(i)))));
                t.push(row)?;
            }
            t.write(&out.join("features.csv"))?;
            let mut cols = vec!["feature".to_string(), "window_start".to_string()];
            for q in ["displacement", "velocity", "acceleration"] {
                cols.extend(["mean", "sd", "max"].iter().map(|s| format!("{q}_{s}")));
            }
            cols.push("sparse".into());
            let mut t = Table::new(cols);
            for (name, off, s) in &series {
                for w in summarize_window(s, &window_spec(&windows, s.len())?)? {
                    let mut row: Vec<Cell> = vec![name.as_str().into(), (w.window_start + off).into()];
                    row.extend(w.nine().map(Cell::from));
                    row.push(usize::from(w.sparse).into());
                    t.push(row)?;
                }
            }
            t.write(&out.join("summary.csv"))?;
            Ok(())
        }
        Command::EmbedParams { series, columns, max_lag, max_m, bins, out } => {
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            let s = read_series_csv::<f64>(&series.input, &cols, series.rate)?;
            let params = EstimationParams { max_lag, max_m, ami: AmiParams::with_bins(bins), ..Default::default() };
            let est = estimate_sample_parameters(&s, &params)?;
            println!("m = {}", est.spec.m);
            println!("tau = {}", est.spec.tau);
            println!("theiler = {}", est.spec.theiler);
            if let Some(out) = out {
                mkdir(&out)?;
                let mut ami = Table::new(["column", "lag", "mi"]);
                let mut fnn = Table::new(["column", "m", "fnn_fraction"]);
                let mut sel = Table::new(["column", "tau", "m", "first_minimum", "plateau_onset"]);
                for (c, p) in columns.iter().zip(&est.per_series) {
                    for (l, v) in p.ami.lags.iter().zip(&p.ami.mi) {
                        ami.push(vec![c.as_str().into(), (*l).into(), (*v).into()])?;
                    }
                    for (d, v) in p.fnn.dims.iter().zip(&p.fnn.fnn_fraction) {
                        fnn.push(vec![c.as_str().into(), (*d).into(), (*v).into()])?;
                    }
                    let opt = |v: Option<usize>| v.map_or(Cell::Missing, Cell::from);
                    sel.push(vec![c.as_str().into(), p.tau.into(), p.m.into(), opt(p.ami.first_minimum), opt(p.ami.plateau_onset)])?;
                }
                ami.write(&out.join("ami.csv"))?;
                fnn.write(&out.join("fnn.csv"))?;
                sel.write(&out.join("selection.csv"))?;
            }
            Ok(())
        }
        Command::Rqa { series, column, rec } => {
            let s = read_series_csv::<f64>(&series.input, &[column.as_str()], series.rate)?.remove(0);
            let (spec, cfg) = rec_config(&rec, RecurrenceMode::Auto)?;
            let r = windowed_rqa(&RqaInput::Auto(&s), &window_spec(&rec.windows, s.len())?, &spec, &cfg, norm_mode(rec.normalize))?;
            write_rqa(&r, &rec.out)?;
            if let Some(plot) = &rec.plot {
                let m = build_matrix(&delay_embed(&normalize(&s, norm_mode(rec.normalize))?, &spec)?, None, &cfg)?;
                write_matrix_pgm(&m, plot)?;
            }
            Ok(())
        }
        Command::Crqa { series, column_a, column_b, input_b, joint, rec } => {
            let a = read_series_csv::<f64>(&series.input, &[column_a.as_str()], series.rate)?.remove(0);
            let b_path = input_b.unwrap_or_else(|| series.input.clone());
            let b = read_series_csv::<f64>(&b_path, &[column_b.as_str()], series.rate)?.remove(0);
            let mode = if joint { RecurrenceMode::Joint } else { RecurrenceMode::Cross };
            let (spec, cfg) = rec_config(&rec, mode)?;
            let input = if joint { RqaInput::Joint(&a, &b, None) } else { RqaInput::Cross(&a, &b) };
            let norm = norm_mode(rec.normalize);
            let r = windowed_rqa(&input, &window_spec(&rec.windows, a.len())?, &spec, &cfg, norm)?;
            write_rqa(&r, &rec.out)?;
            if let Some(plot) = &rec.plot {
                let (ea, eb) = (delay_embed(&normalize(&a, norm)?, &spec)?, delay_embed(&normalize(&b, norm)?, &spec)?);
                let m: RecurrenceMatrix<f64> = if joint {
                    let auto = RecurrenceConfig { mode: RecurrenceMode::Auto, ..cfg };
                    joint_matrix(&build_matrix(&ea, None, &auto)?, &build_matrix(&eb, None, &auto)?)?
                } else {
                    build_matrix(&ea, Some(&eb), &cfg)?
                };
                write_matrix_pgm(&m, plot)?;
            }
            Ok(())
        }
        Command::Mdrqa { series, columns, rec } => {
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            let s = read_series_csv::<f64>(&series.input, &cols, series.rate)?;
            let (spec, cfg) = rec_config(&rec, RecurrenceMode::Multi)?;
            let r = windowed_rqa(&RqaInput::Multi(&s), &window_spec(&rec.windows, s[0].len())?, &spec, &cfg, NormMode::ZScore)?;
            write_rqa(&r, &rec.out)?;
            if let Some(plot) = &rec.plot {
                write_matrix_pgm(&build_matrix(&multi_embed(&s, &spec)?, None, &cfg)?, plot)?;
            }
            Ok(())
        }
        Command::Pca { inputs, rate, standardize, components, movements, target_rms, out } => {
            let seqs = inputs.iter().map(|p| load_plain(p, rate)).collect::<Result<Vec<_>>>()?;
            if seqs.iter().any(|s| s.keypoint_labels != seqs[0].keypoint_labels || s.dims != seqs[0].dims) {
                return Err(invalid("all inputs must share the same keypoints"));
            }
            let mats: Vec<Mat<f64>> = seqs.iter().map(|s| pose_matrix(s).0).collect();
            let rows = mats.iter().map(|m| m.rows).sum();
            let frames = Mat::from_rows(rows, mats[0].cols, mats.iter().flat_map(|m| m.data.iter().copied()).collect());
            let dims = seqs[0].dims;
            let model = fit_pca(&frames, dims, standardize, components)?;
            let diag = translation_diagnostic(&model, &frames)?;
            if diag.flagged {
                log::warn!("first component follows whole-body translation (|r| = {:.3}); align first", diag.max_abs_corr);
            }
            mkdir(&out)?;
            let labels = &seqs[0].keypoint_labels;
            write_model_csv(&model, labels, &out.join("model.csv"), &out.join("variance.csv"))?;
            let pm = principal_movements(&model, movements.min(model.n_components()), target_rms)?;
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
            t.write(&out.join("movements.csv"))?;
            Ok(())
        }
        Command::SimulateGaps { seed, trials, gaps, samples, out } => {
            let cfg = GapSimConfig { seed, trials, gap_multiples: gaps, n_samples: samples, ..Default::default() };
            let r = run_gap_simulation(&cfg)?;
            for g in &r.gaps {
                let ((rm, rs), (dm, ds)) = (g.rr(), g.det());
                println!("gap {:>4}τ ({:>3} samples): RR error {rm:6.2}% ± {rs:5.2}, DET error {dm:6.2}% ± {ds:5.2}", g.multiple, g.samples);
            }
            write_outputs(&r, &out)?;
            Ok(())
        }
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output = std::path::absolute(&o).unwrap_or(o);
            }
            let m = run_pipeline(&cfg)?;
            log::info!("wrote {} files to {}", m.files.len(), cfg.output_dir().display());
            Ok(())
        }
    }
}

/// Normalizes the whole series, or each consecutive block of `block` samples.
fn normalize_blocks(s: &Series64, mode: NormMode, block: Option<usize>) -> pose_dynamics::Result<Series64> {
    if s.n_valid() == 0 {
        return Ok(s.clone());
    }
    let Some(b) = block else { return normalize(s, mode) };
    if b == 0 {
        return Err(Error::InvalidParameter("--window must be positive".into()));
    }
    let mut out = s.clone();
    for start in (0..s.len()).step_by(b) {
        let r = start..(start + b).min(s.len());
        let part = s.slice(r.clone());
        if part.n_valid() == 0 {
            continue;
        }
        let n = normalize(&part, mode)?;
        out.values[r].copy_from_slice(&n.values);
    }
    Ok(out)
}

fn rec_config(r: &RecurrenceArgs, mode: RecurrenceMode) -> Result<(EmbeddingSpec, RecurrenceConfig)> {
    let spec = EmbeddingSpec::new(r.m, r.tau, r.theiler.unwrap_or(r.tau), r.lmin)?;
    let epsilon = match r.target_rr {
        Some(t) => Threshold::TargetRr(t),
        None => Threshold::Fixed(r.epsilon.unwrap_or(0.2)),
    };
    let rescale = match r.rescale {
        RescaleArg::Mean => Rescale::Mean,
        RescaleArg::Max => Rescale::Max,
        RescaleArg::None => Rescale::None,
    };
    let cfg = RecurrenceConfig::from_spec(mode, &spec, epsilon, rescale);
    cfg.validate()?;
    Ok((spec, cfg))
}

fn write_rqa(r: &[WindowRqa<f64>], out: &PathBuf) -> Result<()> {
    let mut cols = vec!["window_start".to_string()];
    cols.extend(RqaMetrics::<f64>::NAMES.iter().map(|s| s.to_string()));
    cols.extend(["epsilon_abs", "d_bar", "error"].map(String::from));
    let mut t = Table::new(cols);
    for w in r {
        let mut row: Vec<Cell> = vec![w.start.into()];
        match &w.metrics {
            Some(m) => row.extend(m.values().map(Cell::from)),
            None => row.extend(std::iter::repeat_n(Cell::Missing, 9)),
        }
        row.push(w.epsilon_abs.into());
        row.push(w.d_bar.into());
        row.push(w.error.as_deref().map_or(Cell::Missing, Cell::from));
        t.push(row)?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    t.write(out)?;
    Ok(())
}
