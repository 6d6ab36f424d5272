//! Stage-per-subcommand orchestration with on-disk artifacts.
//!
//! Layout under the output directory:
//! - `config.json` — resolved run configuration (echoed by every stage).
//! - `data/` — KSC dataset samples.
//! - `model/model.{json,weights}` + `model/train_trace.json`.
//! - `attack/` — perturbed KSC samples, `{id}.delta` blobs,
//!   `{id}.attack.json` records.
//! - `eval/metrics.jsonl` + `eval/summary.csv`.
//! - `detect/records.jsonl`, `detect/detector_eval.json`,
//!   `detect/histogram_{metric}.csv`.
//! - `report/report.json` — merged run report.
//!
//! Stages are deterministic per seed: two runs with equal config hashes
//! produce byte-identical blobs and report bodies. Worker count is taken
//! from the `ADVMRI_WORKERS` environment variable when set.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{masked_iterative_fgsm, AttackSpec};
use crate::detect::{
    detection_record, shared_histograms, threshold_detector_eval, DetectionRecord, DetectorEval,
    TvParams,
};
use crate::error::{Error, Result};
use crate::io::checkpoint::{read_checkpoint, write_checkpoint};
use crate::io::ksc::{list_samples, read_sample, write_sample};
use crate::metrics::{aggregate, pair_metrics, MetricReport, SummaryRow};
use crate::mri::coils::CoilMaps;
use crate::mri::forward::zero_fill;
use crate::mri::{gen_sample, sample_coil_maps, DatasetConfig, Sample};
use crate::recon::model::ReconModel;
use crate::recon::train::{train, TrainConfig, TrainExample};
use crate::recon::unet::UnetLite;
use crate::recon::varnet::VarnetLite;

pub const PIPELINE_SCHEMA_VERSION: u32 = 1;
pub const WORKERS_ENV: &str = "ADVMRI_WORKERS";

/// Which reconstruction map the run trains and attacks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "zero_fill" | "tv" | "unet_lite" | "varnet_lite".
    pub variant: String,
    /// unet_lite: predict a correction to zero-fill.
    pub residual: bool,
    /// varnet_lite cascade count.
    pub cascades: usize,
    /// tv regularization weight and iteration budget.
    pub tv_lambda: f64,
    pub tv_iters: usize,
    /// Weight initialization seed.
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: "unet_lite".into(),
            residual: true,
            cascades: 4,
            tv_lambda: 1e-3,
            tv_iters: 100,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn build(&self, height: usize, width: usize) -> Result<ReconModel> {
        match self.variant.as_str() {
            "zero_fill" => Ok(ReconModel::ZeroFill),
            "tv" => Ok(ReconModel::Tv {
                lambda: self.tv_lambda,
                iters: self.tv_iters,
            }),
            "unet_lite" => Ok(ReconModel::UnetLite(UnetLite::new(
                height,
                width,
                self.residual,
                self.init_seed,
            )?)),
            "varnet_lite" => Ok(ReconModel::VarnetLite(VarnetLite::new(
                height,
                width,
                self.cascades,
                self.init_seed,
            )?)),
            other => Err(Error::InvalidParam(format!(
                "unknown model variant {} (expected zero_fill, tv, unet_lite, or varnet_lite)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Dataset label used in summary rows.
    pub dataset_label: String,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            dataset_label: "synthetic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectConfig {
    pub tv: TvParams,
    pub bins: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            tv: TvParams::default(),
            bins: 20,
        }
    }
}

/// Full run configuration: one section per stage.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DatasetConfig,
    pub model: ModelConfig,
    pub attack: AttackSpec,
    pub metrics: MetricsConfig,
    pub detect: DetectConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(format!("{}", path.display())));
        }
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// SHA-256 of the resolved configuration serialization; embedded in
    /// every report so outputs can be traced to their exact inputs.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }
}

/// Provenance block embedded in every emitted report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMeta {
    pub schema_version: u32,
    pub config_hash: String,
    pub data_seed: u64,
    pub train_seed: u64,
    pub attack_seed: u64,
}

impl ReportMeta {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            schema_version: PIPELINE_SCHEMA_VERSION,
            config_hash: cfg.hash(),
            data_seed: cfg.data_seed(),
            train_seed: cfg.model.train.seed,
            attack_seed: cfg.attack.seed,
        }
    }
}

impl RunConfig {
    /// Root seed for dataset generation. The dataset section has no seed
    /// field of its own; the training seed doubles as the run root so one
    /// number pins the whole pipeline.
    pub fn data_seed(&self) -> u64 {
        self.model.train.seed
    }
}

/// Run `f` on a worker pool sized by `ADVMRI_WORKERS` (when set and
/// positive); otherwise on the default global pool.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                    return pool.install(f);
                }
            }
        }
    }
    f()
}

fn stage_dir(out_dir: &Path, stage: &str, force: bool) -> Result<PathBuf> {
    let dir = out_dir.join(stage);
    if dir.exists() {
        if !force {
            return Err(Error::InvalidParam(format!(
                "{} exists; refusing to overwrite without --force",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn echo_config(out_dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_vec_pretty(cfg)?,
    )?;
    Ok(())
}

fn require_stage(out_dir: &Path, stage: &str, produced_by: &str) -> Result<PathBuf> {
    let dir = out_dir.join(stage);
    if !dir.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run `{}` first)",
            dir.display(),
            produced_by
        )));
    }
    Ok(dir)
}

/// Index encoded in a sample id ("sample_0012" -> 12); used to re-derive
/// per-sample seeds and coil maps for samples loaded from disk.
fn sample_index(id: &str) -> Result<usize> {
    id.rsplit('_')
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("sample id {} has no trailing index", id)))
}

fn load_dataset(dir: &Path, cfg: &RunConfig) -> Result<Vec<(Sample, CoilMaps)>> {
    let ids = list_samples(dir)?;
    if ids.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "{} holds no samples (run `phantom-gen` first)",
            dir.display()
        )));
    }
    ids.iter()
        .map(|id| {
            let sample = read_sample(dir, id)?;
            let maps = sample_coil_maps(&cfg.data, cfg.data_seed(), sample_index(id)?)?;
            Ok((sample, maps))
        })
        .collect()
}

/// Generate the dataset and write it as KSC samples under `data/`.
/// All samples are generated before anything is written, so a generation
/// failure leaves no partial output.
pub fn cmd_phantom_gen(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<()> {
    let samples: Vec<Sample> = with_workers(|| {
        (0..cfg.data.n_samples)
            .into_par_iter()
            .map(|i| gen_sample(&cfg.data, cfg.data_seed(), i))
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = stage_dir(out_dir, "data", force)?;
    echo_config(out_dir, cfg)?;
    for s in &samples {
        write_sample(&dir, s, force)?;
    }
    Ok(())
}

/// Train the configured model on the dataset and write a checkpoint.
/// `zero_fill` and `tv` have no trainable parameters: the checkpoint
/// records the variant and hyperparameters with an empty loss trace.
pub fn cmd_train(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<()> {
    let data_dir = require_stage(out_dir, "data", "phantom-gen")?;
    let dataset = load_dataset(&data_dir, cfg)?;
    let (h, w) = (cfg.data.height, cfg.data.width);
    let mut model = cfg.model.build(h, w)?;
    let trace = if model.is_differentiable() && !model.named_params().is_empty() {
        let examples: Vec<TrainExample> = dataset
            .into_iter()
            .map(|(sample, maps)| TrainExample { sample, maps })
            .collect();
        train(&mut model, &examples, &cfg.model.train)?
    } else {
        Vec::new()
    };
    let dir = stage_dir(out_dir, "model", force)?;
    echo_config(out_dir, cfg)?;
    write_checkpoint(
        &dir.join("model"),
        model.variant_name(),
        model.hyperparameters(),
        &model.named_params(),
    )?;
    let trace_doc = serde_json::json!({
        "meta": ReportMeta::new(cfg),
        "epoch_mean_loss": trace,
    });
    fs::write(
        dir.join("train_trace.json"),
        serde_json::to_vec_pretty(&trace_doc)?,
    )?;
    Ok(())
}

fn load_model(out_dir: &Path) -> Result<ReconModel> {
    let dir = require_stage(out_dir, "model", "train")?;
    let (header, tensors) = read_checkpoint(&dir.join("model"))?;
    ReconModel::from_checkpoint(&header.variant, &header.hyperparameters, &tensors)
}

/// Per-sample attack record written next to the perturbed k-space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub meta: ReportMeta,
    pub id: String,
    pub spec: AttackSpec,
    pub best_loss: f64,
    pub loss_trace: Vec<f64>,
    pub epsilon_abs: f64,
    pub alpha_abs: f64,
    pub degenerate_target: bool,
}

/// Per-sample attack spec: same settings, seed offset by the sample
/// index so the run is deterministic and order-independent.
fn per_sample_spec(base: &AttackSpec, index: usize) -> AttackSpec {
    AttackSpec {
        seed: base.seed.wrapping_add(index as u64),
        ..base.clone()
    }
}

/// Attack every sample and write perturbed k-space (KSC format), the
/// delta blob, and a JSON record per sample under `attack/`.
pub fn cmd_attack(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<()> {
    let data_dir = require_stage(out_dir, "data", "phantom-gen")?;
    let dataset = load_dataset(&data_dir, cfg)?;
    let model = load_model(out_dir)?;
    let meta = ReportMeta::new(cfg);

    let results: Vec<(Sample, Vec<u8>, AttackRecord)> = with_workers(|| {
        dataset
            .par_iter()
            .map(|(sample, maps)| {
                let spec = per_sample_spec(&cfg.attack, sample_index(&sample.id)?);
                let res =
                    masked_iterative_fgsm(&model, &sample.kspace, &sample.mask, maps, &spec)?;
                let perturbed = Sample {
                    id: sample.id.clone(),
                    kspace: res.perturbed_kspace.clone(),
                    mask: sample.mask.clone(),
                    ground_truth: sample.ground_truth.clone(),
                    noise_sigma: sample.noise_sigma,
                };
                let mut delta_blob = Vec::with_capacity(res.delta_star.len() * 8);
                for v in &res.delta_star.data {
                    delta_blob.extend_from_slice(&v.to_le_bytes());
                }
                let record = AttackRecord {
                    meta: meta.clone(),
                    id: sample.id.clone(),
                    spec,
                    best_loss: res.best_loss,
                    loss_trace: res.loss_trace.clone(),
                    epsilon_abs: res.epsilon_abs,
                    alpha_abs: res.alpha_abs,
                    degenerate_target: res.degenerate_target,
                };
                Ok((perturbed, delta_blob, record))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let dir = stage_dir(out_dir, "attack", force)?;
    echo_config(out_dir, cfg)?;
    for (perturbed, delta_blob, record) in &results {
        write_sample(&dir, perturbed, force)?;
        fs::write(dir.join(format!("{}.delta", record.id)), delta_blob)?;
        fs::write(
            dir.join(format!("{}.attack.json", record.id)),
            serde_json::to_vec_pretty(record)?,
        )?;
    }
    Ok(())
}

fn read_attack_record(dir: &Path, id: &str) -> Result<AttackRecord> {
    let path = dir.join(format!("{}.attack.json", id));
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run `attack` first)",
            path.display()
        )));
    }
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Evaluation output: per-sample JSON-lines plus the summary CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutput {
    pub meta: ReportMeta,
    pub reports: Vec<MetricReport>,
    pub summary: Vec<SummaryRow>,
}

/// Metrics on the clean/perturbed input pair (zero-fill images) and the
/// clean/perturbed reconstruction pair, per sample. Writes
/// `eval/metrics.jsonl` (meta line, then one record per line) and
/// `eval/summary.csv`.
pub fn cmd_eval(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<EvalOutput> {
    let data_dir = require_stage(out_dir, "data", "phantom-gen")?;
    let attack_dir = require_stage(out_dir, "attack", "attack")?;
    let dataset = load_dataset(&data_dir, cfg)?;
    let model = load_model(out_dir)?;
    let meta = ReportMeta::new(cfg);

    let reports: Vec<MetricReport> = with_workers(|| {
        dataset
            .par_iter()
            .map(|(sample, maps)| {
                let perturbed = read_sample(&attack_dir, &sample.id)?;
                let record = read_attack_record(&attack_dir, &sample.id)?;
                let zf_clean = zero_fill(&sample.kspace)?;
                let zf_pert = zero_fill(&perturbed.kspace)?;
                let rc_clean = model.apply(&sample.kspace, &sample.mask, maps)?;
                let rc_pert = model.apply(&perturbed.kspace, &sample.mask, maps)?;
                Ok(MetricReport {
                    id: sample.id.clone(),
                    input_pair: pair_metrics(&zf_clean, &zf_pert)?,
                    recon_pair: pair_metrics(&rc_clean, &rc_pert)?,
                    objective: record.best_loss,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let summary = aggregate(
        model.variant_name(),
        &cfg.metrics.dataset_label,
        &reports,
    );

    let dir = stage_dir(out_dir, "eval", force)?;
    echo_config(out_dir, cfg)?;
    let mut jsonl = serde_json::to_string(&meta)?;
    jsonl.push('\n');
    for r in &reports {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("metrics.jsonl"), jsonl)?;
    fs::write(dir.join("summary.csv"), summary_csv(&meta, &summary))?;
    Ok(EvalOutput {
        meta,
        reports,
        summary,
    })
}

fn summary_csv(meta: &ReportMeta, rows: &[SummaryRow]) -> String {
    let mut csv = format!(
        "# schema_version={} config_hash={} data_seed={} train_seed={} attack_seed={}\n",
        meta.schema_version, meta.config_hash, meta.data_seed, meta.train_seed, meta.attack_seed
    );
    csv.push_str("model,dataset,pair,metric,mean,std\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.17e},{:.17e}\n",
            r.model, r.dataset, r.pair, r.metric, r.mean, r.std
        ));
    }
    csv
}

/// Detection output: records plus one detector evaluation per metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectOutput {
    pub meta: ReportMeta,
    pub records: Vec<DetectionRecord>,
    pub evals: Vec<DetectorEval>,
    pub warnings: Vec<String>,
}

/// Reference-free detection against the attack artifacts: for each
/// sample, a clean and a contaminated record of metrics on the
/// (TV reference, model reconstruction) pair, then a threshold-detector
/// evaluation per metric. Writes `detect/records.jsonl`,
/// `detect/detector_eval.json`, and one histogram CSV per metric.
pub fn cmd_detect(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<DetectOutput> {
    let data_dir = require_stage(out_dir, "data", "phantom-gen")?;
    let attack_dir = require_stage(out_dir, "attack", "attack")?;
    let dataset = load_dataset(&data_dir, cfg)?;
    let model = load_model(out_dir)?;
    let meta = ReportMeta::new(cfg);

    let per_sample: Vec<(Vec<DetectionRecord>, Option<String>)> = with_workers(|| {
        dataset
            .par_iter()
            .map(|(sample, maps)| {
                let perturbed = read_sample(&attack_dir, &sample.id)?;
                let mut recs = Vec::with_capacity(2);
                for (contaminated, z) in
                    [(false, &sample.kspace), (true, &perturbed.kspace)]
                {
                    match detection_record(
                        &sample.id,
                        contaminated,
                        z,
                        &sample.mask,
                        maps,
                        &model,
                        &cfg.detect.tv,
                    )? {
                        Some(r) => recs.push(r),
                        None => {
                            return Ok((
                                Vec::new(),
                                Some(format!(
                                    "sample {}: tv reference did not converge; skipped",
                                    sample.id
                                )),
                            ));
                        }
                    }
                }
                Ok((recs, None))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (recs, warn) in per_sample {
        records.extend(recs);
        warnings.extend(warn);
    }

    let mut evals = Vec::new();
    for metric in ["psnr", "nrmse", "ssim"] {
        evals.push(threshold_detector_eval(&records, metric)?);
    }

    let dir = stage_dir(out_dir, "detect", force)?;
    echo_config(out_dir, cfg)?;
    let mut jsonl = serde_json::to_string(&meta)?;
    jsonl.push('\n');
    for r in &records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("records.jsonl"), jsonl)?;
    let eval_doc = serde_json::json!({
        "meta": meta,
        "evals": evals,
        "warnings": warnings,
    });
    fs::write(
        dir.join("detector_eval.json"),
        serde_json::to_vec_pretty(&eval_doc)?,
    )?;
    for metric in ["psnr", "nrmse", "ssim"] {
        let (clean, cont) = split_metric(&records, metric);
        if clean.is_empty() || cont.is_empty() {
            continue;
        }
        let h = shared_histograms(&clean, &cont, cfg.detect.bins)?;
        let mut csv = String::from("bin_lo,bin_hi,p_clean,p_cont\n");
        for i in 0..h.p_a.len() {
            csv.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                h.edges[i],
                h.edges[i + 1],
                h.p_a[i],
                h.p_b[i]
            ));
        }
        fs::write(dir.join(format!("histogram_{}.csv", metric)), csv)?;
    }
    Ok(DetectOutput {
        meta,
        records,
        evals,
        warnings,
    })
}

fn split_metric(records: &[DetectionRecord], metric: &str) -> (Vec<f64>, Vec<f64>) {
    let mut clean = Vec::new();
    let mut cont = Vec::new();
    for r in records {
        let v = match metric {
            "psnr" => match r.metrics.psnr.value {
                Some(v) => v,
                None => continue,
            },
            "nrmse" => r.metrics.nrmse,
            _ => r.metrics.ssim,
        };
        if r.contaminated {
            cont.push(v);
        } else {
            clean.push(v);
        }
    }
    (clean, cont)
}

/// Merge the evaluation and detection outputs into `report/report.json`,
/// echoing the attack settings so a reader can see exactly which budget
/// produced the numbers.
pub fn cmd_report(cfg: &RunConfig, out_dir: &Path, force: bool) -> Result<()> {
    let eval_dir = require_stage(out_dir, "eval", "eval")?;
    let detect_dir = require_stage(out_dir, "detect", "detect")?;
    let summary = fs::read_to_string(eval_dir.join("summary.csv"))?;
    let detector: serde_json::Value =
        serde_json::from_slice(&fs::read(detect_dir.join("detector_eval.json"))?)?;
    let meta = ReportMeta::new(cfg);
    let report = serde_json::json!({
        "meta": meta,
        "attack": cfg.attack,
        "summary_csv": summary,
        "detection": detector,
    });
    let dir = stage_dir(out_dir, "report", force)?;
    echo_config(out_dir, cfg)?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    Ok(())
}
