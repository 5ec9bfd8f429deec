//! The five pipeline stages: generate, train, evaluate, simulate, report.
//!
//! Both modality models are single-channel networks. ECG is single-channel
//! by nature; for iEEG the per-channel windows are classified independently
//! and merged by channel voting, which is what makes the channel majority
//! meaningful downstream. Every stage writes its artifacts atomically and is
//! idempotent: rerunning with the same config and seed reproduces identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use seiznet_core::metrics::{confusion_from_decisions, macro_average, ConfusionMatrix, MetricsSummary};
use seiznet_core::netsim::{run_simulation, ClassifierSource, LabelTimeline, Scenario};
use seiznet_core::nn::{curve_to_csv, load_checkpoint, predict_proba, save_checkpoint, train, ModelParams};
use seiznet_core::predictor::{ecg_decide, fuse_modalities, ieeg_decide, trace_line, StepDecision};
use seiznet_core::rng::derive_seed;
use seiznet_core::signal::{
    generate_recording, label_windows, load_recording, preprocess, save_recording, split_dataset,
    DatasetSplit, Label, LabelConfig, Modality, Recording, SampleWindow,
};

use crate::config::{PipelineConfig, SimSource};
use crate::error::{CliError, Result};

/// Output tree under `out_dir`.
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn recording(&self, patient: &str, modality: Modality, role: &str) -> PathBuf {
        self.root
            .join("recordings")
            .join(format!("{patient}_{}_{role}.szr", modality.as_str()))
    }

    pub fn model(&self, patient: &str, modality: Modality) -> PathBuf {
        self.root.join("models").join(format!("{patient}_{}.sznm", modality.as_str()))
    }

    pub fn curve(&self, patient: &str, modality: Modality) -> PathBuf {
        self.root.join("curves").join(format!("{patient}_{}_curve.csv", modality.as_str()))
    }

    pub fn evaluation(&self, patient: &str) -> PathBuf {
        self.root.join("eval").join(format!("{patient}_metrics.json"))
    }

    pub fn evaluation_csv(&self, patient: &str) -> PathBuf {
        self.root.join("eval").join(format!("{patient}_metrics.csv"))
    }

    pub fn decisions(&self, patient: &str) -> PathBuf {
        self.root.join("eval").join(format!("{patient}_decisions.csv"))
    }

    pub fn sim_trace(&self, patient: &str) -> PathBuf {
        self.root.join("sim").join(format!("{patient}_trace.log"))
    }

    pub fn sim_report(&self, patient: &str) -> PathBuf {
        self.root.join("sim").join(format!("{patient}_report.json"))
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("report").join("summary.csv")
    }

    pub fn summary_json(&self) -> PathBuf {
        self.root.join("report").join("summary.json")
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().expect("artifact paths have parents");
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn patient_seed(cfg: &PipelineConfig, patient: &str) -> u64 {
    derive_seed(cfg.seed, patient)
}

fn load_artifact<T>(
    path: &Path,
    produced_by: &'static str,
    needed_for: &'static str,
    loader: impl Fn(&Path) -> std::result::Result<T, Box<dyn std::error::Error>>,
) -> Result<T> {
    if !path.exists() {
        return Err(CliError::MissingArtifact { path: path.to_path_buf(), produced_by, needed_for });
    }
    loader(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_recording_for(path: &Path, needed_for: &'static str) -> Result<Recording> {
    load_artifact(path, "generate", needed_for, |p| Ok(load_recording(p)?))
}

fn load_model_for(path: &Path, needed_for: &'static str) -> Result<ModelParams> {
    load_artifact(path, "train", needed_for, |p| Ok(load_checkpoint(p)?))
}

fn train_duration(cfg: &PipelineConfig, patient_seed: u64) -> f64 {
    if cfg.generator.duration_s > 0.0 {
        cfg.generator.duration_s
    } else {
        cfg.generator_config(patient_seed).duration_for(cfg.generator.onset_count)
    }
}

fn eval_duration(cfg: &PipelineConfig, patient_seed: u64) -> f64 {
    if cfg.generator.eval_duration_s > 0.0 {
        cfg.generator.eval_duration_s
    } else {
        train_duration(cfg, patient_seed)
    }
}

fn label_config(cfg: &PipelineConfig) -> LabelConfig {
    LabelConfig { horizon_s: cfg.generator.horizon_s, exclusion_s: cfg.generator.exclusion_s }
}

/// Generates one train and one eval recording per patient and modality.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<()> {
    let artifacts = Artifacts::new(&cfg.out_dir);
    let jobs: Vec<(String, Modality, &str)> = cfg
        .patients
        .iter()
        .flat_map(|p| {
            [Modality::Ecg, Modality::Ieeg]
                .into_iter()
                .flat_map(move |m| [("train", m), ("eval", m)].map(|(r, m)| (p.clone(), m, r)))
        })
        .collect();

    jobs.into_par_iter().try_for_each(|(patient, modality, role)| {
        let pseed = patient_seed(cfg, &patient);
        let gen_seed = derive_seed(pseed, &format!("{}-{role}", modality.as_str()));
        let gen_cfg = cfg.generator_config(gen_seed);
        let duration = match role {
            "train" => train_duration(cfg, pseed),
            _ => eval_duration(cfg, pseed),
        };
        let channels = match modality {
            Modality::Ecg => 1,
            Modality::Ieeg => cfg.generator.ieeg_channels,
        };
        let mut rec = generate_recording(&gen_cfg, modality, channels, duration)?;
        rec.patient_id = patient.clone();
        let path = artifacts.recording(&patient, modality, role);
        fs::create_dir_all(path.parent().unwrap())?;
        save_recording(&rec, &path)?;
        log::info!(
            "generated {} ({:.0} s, {} onsets)",
            path.display(),
            rec.duration_s(),
            rec.seizure_onsets.len()
        );
        Ok(())
    })
}

/// Splits a recording into labeled windows, applying optional filtering and
/// exploding multi-channel windows into per-channel samples.
fn training_windows(cfg: &PipelineConfig, rec: &Recording) -> Result<Vec<SampleWindow>> {
    let windows = label_windows(rec, &label_config(cfg))?;
    let mut out = Vec::new();
    for w in &windows {
        let w = preprocess(w, cfg.preprocess.notch(), cfg.preprocess.band())?;
        for channel in &w.channels {
            out.push(SampleWindow {
                start_time: w.start_time,
                sample_rate_hz: w.sample_rate_hz,
                channels: vec![channel.clone()],
                label: w.label,
            });
        }
    }
    Ok(out)
}

fn split_for(cfg: &PipelineConfig, patient: &str, modality: Modality, rec: &Recording) -> Result<DatasetSplit> {
    let windows = training_windows(cfg, rec)?;
    let seed = derive_seed(patient_seed(cfg, patient), &format!("split-{}", modality.as_str()));
    Ok(split_dataset(windows, seed)?)
}

/// Trains one model per patient and modality, saving checkpoints and curves.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<()> {
    let artifacts = Artifacts::new(&cfg.out_dir);
    let jobs: Vec<(String, Modality)> = cfg
        .patients
        .iter()
        .flat_map(|p| [Modality::Ecg, Modality::Ieeg].map(|m| (p.clone(), m)))
        .collect();

    jobs.into_par_iter().try_for_each(|(patient, modality)| {
        let rec = load_recording_for(&artifacts.recording(&patient, modality, "train"), "train")?;
        let split = split_for(cfg, &patient, modality, &rec)?;
        let spec = cfg.model.to_spec(1, cfg.window_len())?;
        let train_seed = derive_seed(patient_seed(cfg, &patient), &format!("train-{}", modality.as_str()));
        let outcome = train(
            &spec,
            &split,
            &cfg.training.focal_config(),
            &cfg.training.train_config(train_seed),
        )?;
        let model_path = artifacts.model(&patient, modality);
        fs::create_dir_all(model_path.parent().unwrap())?;
        save_checkpoint(&outcome.params, &model_path)?;
        write_atomic(&artifacts.curve(&patient, modality), curve_to_csv(&outcome.curve).as_bytes())?;
        let best = outcome
            .curve
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        log::info!(
            "trained {patient}/{} for {} epochs (best val loss {best:.4})",
            modality.as_str(),
            outcome.curve.len()
        );
        Ok(())
    })
}

/// Window-level metrics on the held-out test split.
fn window_metrics(
    params: &ModelParams,
    split: &DatasetSplit,
    threshold: f64,
) -> Result<MetricsSummary> {
    let probs = predict_proba(params, &split.test)?;
    let labels: Vec<Label> = split.test.iter().map(|w| w.label).collect();
    let decisions: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    let cm = confusion_from_decisions(&decisions, &labels)?;
    let auc = seiznet_core::metrics::auc(&probs, &labels)?;
    Ok(MetricsSummary::from_confusion(&cm).with_auc(auc))
}

/// Per-channel probability streams over every consecutive window of a
/// recording (no exclusion: the models classify every step).
fn probability_streams(params: &ModelParams, rec: &Recording, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let full = LabelConfig { horizon_s: cfg.generator.horizon_s, exclusion_s: 0.0 };
    let windows = label_windows(rec, &full)?;
    let mut streams = vec![Vec::with_capacity(windows.len()); rec.channel_count()];
    for w in &windows {
        let w = preprocess(w, cfg.preprocess.notch(), cfg.preprocess.band())?;
        for (ch, samples) in w.channels.iter().enumerate() {
            let single = SampleWindow {
                start_time: w.start_time,
                sample_rate_hz: w.sample_rate_hz,
                channels: vec![samples.clone()],
                label: w.label,
            };
            streams[ch].push(seiznet_core::nn::forward(params, &single)?);
        }
    }
    Ok(streams)
}

/// Ground truth per step of a recording: `None` for excluded (ictal) windows.
fn step_timeline(rec: &Recording, cfg: &PipelineConfig) -> Result<Vec<Option<Label>>> {
    let steps = (rec.duration_s() / 4.0).floor() as usize;
    let mut timeline = vec![None; steps];
    for w in label_windows(rec, &label_config(cfg))? {
        timeline[(w.start_time / 4.0) as usize] = Some(w.label);
    }
    Ok(timeline)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PatientEvaluation {
    pub patient: String,
    /// Per-window test-split metrics of the raw models.
    pub ecg_window: MetricsSummary,
    pub ieeg_window: MetricsSummary,
    /// Chronological voted-stream metrics on the held-out eval recording.
    pub ecg_voted: MetricsSummary,
    pub ieeg_voted: MetricsSummary,
    pub combined_voted: MetricsSummary,
}

fn voted_summary(
    decisions: &[bool],
    timeline: &[Option<Label>],
) -> Result<MetricsSummary> {
    let mut scored = Vec::new();
    let mut labels = Vec::new();
    for (d, l) in decisions.iter().zip(timeline) {
        if let Some(label) = l {
            scored.push(*d);
            labels.push(*label);
        }
    }
    let cm = confusion_from_decisions(&scored, &labels)?;
    Ok(MetricsSummary::from_confusion(&cm))
}

fn evaluate_patient(cfg: &PipelineConfig, artifacts: &Artifacts, patient: &str) -> Result<PatientEvaluation> {
    let fusion = cfg.fusion.fusion_config();

    let ecg_params = load_model_for(&artifacts.model(patient, Modality::Ecg), "evaluate")?;
    let ieeg_params = load_model_for(&artifacts.model(patient, Modality::Ieeg), "evaluate")?;

    // window-level metrics reuse the training split (same seed, same windows)
    let ecg_train = load_recording_for(&artifacts.recording(patient, Modality::Ecg, "train"), "evaluate")?;
    let ieeg_train = load_recording_for(&artifacts.recording(patient, Modality::Ieeg, "train"), "evaluate")?;
    let ecg_window = window_metrics(&ecg_params, &split_for(cfg, patient, Modality::Ecg, &ecg_train)?, fusion.threshold)?;
    let ieeg_window = window_metrics(&ieeg_params, &split_for(cfg, patient, Modality::Ieeg, &ieeg_train)?, fusion.threshold)?;

    // voted chronological evaluation on the held-out eval recordings
    let ecg_eval = load_recording_for(&artifacts.recording(patient, Modality::Ecg, "eval"), "evaluate")?;
    let ieeg_eval = load_recording_for(&artifacts.recording(patient, Modality::Ieeg, "eval"), "evaluate")?;
    let ecg_streams = probability_streams(&ecg_params, &ecg_eval, cfg)?;
    let ieeg_streams = probability_streams(&ieeg_params, &ieeg_eval, cfg)?;
    let ecg_steps = ecg_decide(&ecg_streams[0], &fusion)?;
    let ieeg_steps = ieeg_decide(&ieeg_streams, &fusion)?;
    if ecg_steps.len() != ieeg_steps.len() {
        return Err(CliError::Runtime(format!(
            "eval recordings disagree on step count: ecg {} vs ieeg {}",
            ecg_steps.len(),
            ieeg_steps.len()
        )));
    }

    let timeline = step_timeline(&ieeg_eval, cfg)?;
    let ecg_timeline = step_timeline(&ecg_eval, cfg)?;
    if timeline != ecg_timeline {
        return Err(CliError::Runtime(
            "eval recordings disagree on the ground-truth timeline".into(),
        ));
    }

    let fused: Vec<bool> = ecg_steps
        .iter()
        .zip(&ieeg_steps)
        .map(|(e, i)| fuse_modalities(e.time_vote, i.time_vote, fusion.modality_rule))
        .collect();
    let ecg_votes: Vec<bool> = ecg_steps.iter().map(|s| s.time_vote).collect();
    let ieeg_votes: Vec<bool> = ieeg_steps.iter().map(|s| s.time_vote).collect();

    // decision trace: one line per step and modality
    let mut decisions_csv = String::from("t_s,modality,raw_p,thresholded,channel_vote,time_vote,fused\n");
    let render = |t: f64, name: &str, step: &StepDecision, fused: bool| trace_line(t, name, step, fused);
    for (k, (e, i)) in ecg_steps.iter().zip(&ieeg_steps).enumerate() {
        let t = k as f64 * 4.0;
        decisions_csv.push_str(&render(t, "ecg", e, fused[k]));
        decisions_csv.push('\n');
        decisions_csv.push_str(&render(t, "ieeg", i, fused[k]));
        decisions_csv.push('\n');
    }
    write_atomic(&artifacts.decisions(patient), decisions_csv.as_bytes())?;

    Ok(PatientEvaluation {
        patient: patient.to_string(),
        ecg_window,
        ieeg_window,
        ecg_voted: voted_summary(&ecg_votes, &timeline)?,
        ieeg_voted: voted_summary(&ieeg_votes, &timeline)?,
        combined_voted: voted_summary(&fused, &timeline)?,
    })
}

/// Evaluates every patient: window-level test metrics plus voted/fused
/// chronological metrics, a metrics JSON/CSV pair, and decision traces.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    let artifacts = Artifacts::new(&cfg.out_dir);
    let evals: Vec<PatientEvaluation> = cfg
        .patients
        .par_iter()
        .map(|p| evaluate_patient(cfg, &artifacts, p))
        .collect::<Result<Vec<_>>>()?;

    for eval in &evals {
        let json = serde_json::to_string_pretty(eval).map_err(CliError::runtime)?;
        write_atomic(&artifacts.evaluation(&eval.patient), json.as_bytes())?;

        let mut csv = format!("patient,predictor,scope,{}\n", MetricsSummary::CSV_HEADER);
        for (name, scope, m) in [
            ("ecg", "test_windows", &eval.ecg_window),
            ("ieeg", "test_windows", &eval.ieeg_window),
            ("ecg", "eval_voted", &eval.ecg_voted),
            ("ieeg", "eval_voted", &eval.ieeg_voted),
            ("combined", "eval_voted", &eval.combined_voted),
        ] {
            csv.push_str(&format!("{},{name},{scope},{}\n", eval.patient, m.csv_row()));
        }
        write_atomic(&artifacts.evaluation_csv(&eval.patient), csv.as_bytes())?;
        log::info!(
            "evaluated {}: ecg auc {:.3}, ieeg auc {:.3}",
            eval.patient,
            eval.ecg_window.auc.unwrap_or(f64::NAN),
            eval.ieeg_window.auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

/// Evenly spaced onsets over the simulated span, on the 4 s grid.
fn oracle_timeline(cfg: &PipelineConfig, duration_s: f64) -> Result<LabelTimeline> {
    let steps = (duration_s / 4.0).floor() as usize;
    let n = cfg.generator.onset_count as usize;
    let horizon = cfg.generator.horizon_s;
    let exclusion = cfg.generator.exclusion_s;
    let mut onsets = Vec::with_capacity(n);
    if n > 0 {
        let spacing = duration_s / (n as f64 + 1.0);
        if spacing < horizon + exclusion {
            return Err(CliError::Config(format!(
                "network.duration_s too short for {n} onsets with a {horizon} s horizon"
            )));
        }
        for k in 0..n {
            let t = (spacing * (k as f64 + 1.0) / 4.0).floor() * 4.0;
            onsets.push(t);
        }
    }
    let mut timeline = Vec::with_capacity(steps);
    for step in 0..steps {
        let start = step as f64 * 4.0;
        let excluded = onsets.iter().any(|&o| start < o + exclusion && start + 4.0 > o);
        if excluded {
            timeline.push(None);
        } else if onsets.iter().any(|&o| o - horizon <= start && start < o) {
            timeline.push(Some(Label::Preictal));
        } else {
            timeline.push(Some(Label::Interictal));
        }
    }
    Ok(timeline)
}

fn build_scenario(cfg: &PipelineConfig, artifacts: &Artifacts, patient: &str) -> Result<Scenario> {
    let net = &cfg.network;
    let seed = derive_seed(patient_seed(cfg, patient), "simulate");
    let mut scenario = Scenario::closed_loop(seed, net.duration_s, Vec::new());
    scenario.t_app_s = net.t_app_s;
    scenario.payload_bits = net.payload_bits;
    scenario.phy = net.phy();
    scenario.channel = net.channel();
    scenario.fusion = cfg.fusion.fusion_config();
    scenario.node_time_voting = net.node_time_voting;
    scenario.gateway_timeout_s = net.gateway_timeout_s;
    scenario.available_codes = net.phy().spreading_factor;
    if let Some(nodes) = &net.nodes {
        scenario.nodes = nodes.clone();
    }

    match net.source {
        SimSource::Oracle => {
            scenario.labels = oracle_timeline(cfg, net.duration_s)?;
            scenario.ecg_source = ClassifierSource::Oracle {
                sensitivity: net.oracle_sensitivity,
                specificity: net.oracle_specificity,
            };
            scenario.ieeg_source = ClassifierSource::Oracle {
                sensitivity: net.oracle_sensitivity,
                specificity: net.oracle_specificity,
            };
        }
        SimSource::Models => {
            let ecg_params = load_model_for(&artifacts.model(patient, Modality::Ecg), "simulate")?;
            let ieeg_params = load_model_for(&artifacts.model(patient, Modality::Ieeg), "simulate")?;
            let ecg_eval = load_recording_for(&artifacts.recording(patient, Modality::Ecg, "eval"), "simulate")?;
            let ieeg_eval = load_recording_for(&artifacts.recording(patient, Modality::Ieeg, "eval"), "simulate")?;
            let available = ecg_eval.duration_s().min(ieeg_eval.duration_s());
            if net.duration_s <= 0.0 {
                scenario.duration_s = available;
            } else if net.duration_s > available {
                log::warn!(
                    "clamping simulation to the {available:.0} s eval recording (config asked {:.0} s)",
                    net.duration_s
                );
                scenario.duration_s = available;
            }
            scenario.labels = step_timeline(&ieeg_eval, cfg)?;
            scenario.ecg_source = ClassifierSource::Probabilities {
                channels: probability_streams(&ecg_params, &ecg_eval, cfg)?,
            };
            scenario.ieeg_source = ClassifierSource::Probabilities {
                channels: probability_streams(&ieeg_params, &ieeg_eval, cfg)?,
            };
        }
    }
    Ok(scenario)
}

/// Runs the closed-loop network simulation per patient, writing the event
/// trace and the JSON report.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<()> {
    let artifacts = Artifacts::new(&cfg.out_dir);
    for patient in &cfg.patients {
        let scenario = build_scenario(cfg, &artifacts, patient)?;
        let out = run_simulation(&scenario)?;
        write_atomic(&artifacts.sim_trace(patient), out.trace.as_bytes())?;
        let json = serde_json::to_string_pretty(&out.report).map_err(CliError::runtime)?;
        write_atomic(&artifacts.sim_report(patient), json.as_bytes())?;
        log::info!(
            "simulated {patient}: {} steps, {} alerts, drop rate {:.4}",
            out.report.steps,
            out.report.alerts,
            out.report.drop_rate
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    predictor: &'static str,
    averaging: &'static str,
    sensitivity: Option<f64>,
    specificity: Option<f64>,
    accuracy: Option<f64>,
    fpr_per_hour: Option<f64>,
    auc: Option<f64>,
}

/// Aggregates per-patient evaluations into the ECG / iEEG / combined
/// comparison table, with macro (per-patient mean) and pooled averaging.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<()> {
    let artifacts = Artifacts::new(&cfg.out_dir);
    let mut evals = Vec::new();
    for patient in &cfg.patients {
        let path = artifacts.evaluation(patient);
        let eval: PatientEvaluation = load_artifact(&path, "evaluate", "report", |p| {
            Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
        })?;
        evals.push(eval);
    }

    type Pick = Box<dyn Fn(&PatientEvaluation) -> &MetricsSummary>;
    let mut rows = Vec::new();
    let predictors: [(&'static str, Pick); 3] = [
        ("ecg", Box::new(|e| &e.ecg_voted)),
        ("ieeg", Box::new(|e| &e.ieeg_voted)),
        ("combined", Box::new(|e| &e.combined_voted)),
    ];
    for (name, pick) in &predictors {
        let summaries: Vec<&MetricsSummary> = evals.iter().map(pick).collect();
        rows.push(SummaryRow {
            predictor: name,
            averaging: "macro",
            sensitivity: macro_average(&summaries.iter().map(|m| m.sensitivity).collect::<Vec<_>>()),
            specificity: macro_average(&summaries.iter().map(|m| m.specificity).collect::<Vec<_>>()),
            accuracy: macro_average(&summaries.iter().map(|m| m.accuracy).collect::<Vec<_>>()),
            fpr_per_hour: macro_average(&summaries.iter().map(|m| m.fpr_per_hour).collect::<Vec<_>>()),
            auc: macro_average(&summaries.iter().map(|m| m.auc).collect::<Vec<_>>()),
        });
        let pooled = summaries
            .iter()
            .fold(ConfusionMatrix::default(), |acc, m| acc.merged(&m.confusion));
        let pooled = MetricsSummary::from_confusion(&pooled);
        rows.push(SummaryRow {
            predictor: name,
            averaging: "pooled",
            sensitivity: pooled.sensitivity,
            specificity: pooled.specificity,
            accuracy: pooled.accuracy,
            fpr_per_hour: pooled.fpr_per_hour,
            auc: None,
        });
    }

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut csv = String::from("predictor,averaging,sensitivity,specificity,accuracy,fpr_per_hour,auc\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.predictor,
            r.averaging,
            fmt(r.sensitivity),
            fmt(r.specificity),
            fmt(r.accuracy),
            fmt(r.fpr_per_hour),
            fmt(r.auc),
        ));
    }
    write_atomic(&artifacts.summary_csv(), csv.as_bytes())?;
    let json = serde_json::to_string_pretty(&rows).map_err(CliError::runtime)?;
    write_atomic(&artifacts.summary_json(), json.as_bytes())?;

    // window-level AUC comparison, macro across patients
    let mut auc_map = BTreeMap::new();
    auc_map.insert("ecg", macro_average(&evals.iter().map(|e| e.ecg_window.auc).collect::<Vec<_>>()));
    auc_map.insert("ieeg", macro_average(&evals.iter().map(|e| e.ieeg_window.auc).collect::<Vec<_>>()));
    for (name, auc) in auc_map {
        log::info!("mean window-level {name} AUC: {}", auc.map(|a| format!("{a:.3}")).unwrap_or_default());
    }
    Ok(())
}
