//! Reproducible experiment runs: configuration, per-seed trials, reports.
//!
//! A run is a grid of (mechanism, variant) cells, each evaluated over every
//! seed. All randomness inside a trial is derived from its seed.

pub mod cli;
pub mod selfcheck;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{encode, fit_normalizer, load_csv, split, DatasetSchema, RecordBatch};
use crate::error::{Error, Result};
use crate::eval::{evaluate_imputation, BaselineVae, ImputationReport, MeanImputer, Summary, VsaeImputer};
use crate::mask::{Mechanism, MechanismSpec};
use crate::model::{write_history, EpochRecord, MaskedData, TrainedModel, Variant, VsaeConfig, VsaeNetwork};

pub const SEED_ENV: &str = "HETVAE_SEED";

/// One self-contained experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub mechanism: MechanismSpec,
    /// MCAR ratio sweep; each ratio becomes its own mechanism.
    pub missing_ratios: Vec<f64>,
    pub model: VsaeConfig,
    /// Overrides `model.variant` when set.
    pub variant: Option<Variant>,
    /// Variants compared by `ablate`.
    pub ablation_variants: Vec<Variant>,
    /// `None` falls back to the seed environment variable, then `[0]`.
    pub seeds: Option<Vec<u64>>,
    pub output_dir: PathBuf,
    pub parallel: bool,
    /// Also train and score the plain VAE baseline.
    pub baseline: bool,
    /// Mask vectors drawn from each trained model.
    pub generated_masks: usize,
    /// Impute from proposal means rather than a sampled latent.
    pub use_mean: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            schema: None,
            mechanism: MechanismSpec::mcar(0.5),
            missing_ratios: Vec::new(),
            model: VsaeConfig::default(),
            variant: None,
            ablation_variants: Variant::all_default().to_vec(),
            seeds: None,
            output_dir: PathBuf::from("runs"),
            parallel: false,
            baseline: false,
            generated_masks: 100,
            use_mean: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fills seeds and the variant, then checks every invariant.
    pub fn resolve(mut self) -> Result<Self> {
        if self.seeds.is_none() {
            let seed = match std::env::var(SEED_ENV) {
                Ok(s) => s
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?,
                Err(_) => 0,
            };
            self.seeds = Some(vec![seed]);
        }
        if let Some(v) = self.variant {
            if self.model.variant != Variant::Full && self.model.variant != v {
                return Err(Error::Config(format!(
                    "conflicting variants `{v}` and `{}`; give exactly one",
                    self.model.variant
                )));
            }
            self.model.variant = v;
        }
        self.variant = Some(self.model.variant);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.seeds {
            Some(s) if s.is_empty() => return Err(Error::Config("seed list must not be empty".into())),
            Some(s) => {
                let mut sorted = s.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != s.len() {
                    return Err(Error::Config("seed list contains duplicates".into()));
                }
            }
            None => {}
        }
        for &r in &self.missing_ratios {
            MechanismSpec::mcar(r).validate()?;
        }
        if !self.missing_ratios.is_empty() && !matches!(self.mechanism.mechanism, Mechanism::Mcar { .. }) {
            return Err(Error::Config(
                "missing_ratios only applies to the mcar mechanism".into(),
            ));
        }
        self.mechanism.validate()?;
        self.model.validate()
    }

    pub fn seeds(&self) -> &[u64] {
        self.seeds.as_deref().unwrap_or(&[0])
    }

    /// One mechanism per requested ratio, or the configured mechanism.
    pub fn mechanisms(&self) -> Vec<MechanismSpec> {
        if self.missing_ratios.is_empty() {
            return vec![self.mechanism.clone()];
        }
        self.missing_ratios
            .iter()
            .map(|&r| MechanismSpec {
                mechanism: Mechanism::Mcar { missing_ratio: r },
                ..self.mechanism.clone()
            })
            .collect()
    }

    pub fn dataset(&self) -> Result<(RecordBatch, DatasetSchema)> {
        let (Some(data), Some(schema)) = (&self.dataset, &self.schema) else {
            return Err(Error::Config("both a dataset and a schema path are required".into()));
        };
        let schema = DatasetSchema::load(schema)?;
        Ok((load_csv(data, &schema)?, schema))
    }
}

/// Independent stream seed for `purpose` within a trial.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub mod purpose {
    pub const SPLIT: u64 = 1;
    pub const MASK: u64 = 2;
    pub const NOISE_TRAIN: u64 = 3;
    pub const NOISE_VALIDATION: u64 = 4;
    pub const MODEL: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const GENERATE: u64 = 7;
    pub const BASELINE: u64 = 8;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

/// Everything a trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub seed: u64,
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub report: ImputationReport,
    pub baseline: Option<ImputationReport>,
    /// Marginal-mean imputation of the same test cells.
    pub mean_reference: ImputationReport,
    pub achieved: MissingRatios,
    pub generated_missing: Option<f64>,
}

/// Split, mask, train, and score one seed.
pub fn run_trial(
    data: &RecordBatch,
    schema: &DatasetSchema,
    mechanism: &MechanismSpec,
    model: &VsaeConfig,
    seed: u64,
    run: &RunConfig,
) -> Result<TrialOutput> {
    let parts = split(data.rows(), derive_seed(seed, purpose::SPLIT))?;
    let train_raw = data.select_rows(&parts.train);
    let stats = fit_normalizer(&train_raw, schema, None)?;
    let mask = mechanism.sample(
        &stats.scaled(data, schema, mechanism.scaling),
        derive_seed(seed, purpose::MASK),
    )?;

    let masked = |rows: &[usize], noise: u64| -> Result<MaskedData> {
        let m = mask.select_rows(rows);
        MaskedData::new(
            encode(&data.select_rows(rows), schema, &stats, &m, derive_seed(seed, noise))?,
            m,
        )
    };
    let train = masked(&parts.train, purpose::NOISE_TRAIN)?;
    let validation = masked(&parts.validation, purpose::NOISE_VALIDATION)?;
    let test_mask = mask.select_rows(&parts.test);
    let test_raw = data.select_rows(&parts.test);
    let achieved = MissingRatios {
        train: train.mask.stats().missing_proportion,
        validation: validation.mask.stats().missing_proportion,
        test: test_mask.stats().missing_proportion,
    };

    let config = VsaeConfig {
        seed: derive_seed(seed, purpose::MODEL),
        ..model.clone()
    };
    let network = VsaeNetwork::new(schema.clone(), config)?;
    let store = network.initialize(derive_seed(seed, purpose::MODEL));
    let outcome = network.train(store, &train, Some(&validation))?;
    let epochs = outcome.history.len() - 1;
    log::info!(
        "seed {seed} {} {}: {epochs} epochs, best {} (validation loss {:.5})",
        mechanism.label(),
        network.config.variant,
        outcome.best_epoch,
        outcome.best_validation_loss
    );
    let trained = TrainedModel {
        network,
        store: outcome.store,
        stats: stats.clone(),
        mechanism: Some(mechanism.clone()),
        run: serde_json::Value::Null,
    };

    let imputer = VsaeImputer {
        model: &trained,
        use_mean: run.use_mean,
    };
    let eval_seed = derive_seed(seed, purpose::EVAL);
    let report = evaluate_imputation(&imputer, &test_raw, &test_mask, Some(mechanism), eval_seed)?;
    let mean = MeanImputer::fit(schema.clone(), stats.clone(), &train)?;
    let mean_reference = evaluate_imputation(&mean, &test_raw, &test_mask, Some(mechanism), eval_seed)?;

    let generated_missing = if trained.config().variant.models_mask() && run.generated_masks > 0 {
        let (_, m) = trained.network.generate(
            &trained.store,
            run.generated_masks,
            derive_seed(seed, purpose::GENERATE),
        )?;
        Some(m.stats().missing_proportion)
    } else {
        None
    };

    let baseline = if run.baseline {
        let cfg = VsaeConfig {
            seed: derive_seed(seed, purpose::BASELINE),
            ..model.clone()
        };
        let mut vae = BaselineVae::new(schema.clone(), stats, cfg, trained.store.parameter_count())?;
        vae.train(&train, Some(&validation))?;
        Some(evaluate_imputation(
            &vae,
            &test_raw,
            &test_mask,
            Some(mechanism),
            eval_seed,
        )?)
    } else {
        None
    };

    let mut out = TrialOutput {
        seed,
        model: trained,
        best_epoch: outcome.best_epoch,
        history: outcome.history,
        report,
        baseline,
        mean_reference,
        achieved,
        generated_missing,
    };
    out.model.run = serde_json::to_value(TrialMeta::new(&out, run))?;
    Ok(out)
}

/// Run metadata written next to (and embedded in) every checkpoint.
#[derive(Clone, Debug, Serialize)]
pub struct TrialMeta<'a> {
    pub seed: u64,
    pub run: &'a RunConfig,
    pub model: &'a VsaeConfig,
    pub mechanism: Option<&'a MechanismSpec>,
    pub achieved_missing: MissingRatios,
    pub parameters: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub report: &'a ImputationReport,
    pub baseline: Option<&'a ImputationReport>,
    pub mean_reference: &'a ImputationReport,
    pub generated_missing: Option<f64>,
}

impl<'a> TrialMeta<'a> {
    pub fn new(t: &'a TrialOutput, run: &'a RunConfig) -> Self {
        Self {
            seed: t.seed,
            run,
            model: t.model.config(),
            mechanism: t.model.mechanism.as_ref(),
            achieved_missing: t.achieved,
            parameters: t.model.store.parameter_count(),
            epochs: t.history.len() - 1,
            best_epoch: t.best_epoch,
            report: &t.report,
            baseline: t.baseline.as_ref(),
            mean_reference: &t.mean_reference,
            generated_missing: t.generated_missing,
        }
    }
}

/// Directory holding one trial's artifacts.
pub fn trial_dir(root: &Path, mechanism: &MechanismSpec, variant: Variant, seed: u64) -> PathBuf {
    root.join(mechanism.label())
        .join(variant.to_string())
        .join(format!("seed-{seed}"))
}

pub fn write_trial(dir: &Path, t: &TrialOutput, run: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    t.model.save(dir.join("checkpoint.json"))?;
    write_history(dir.join("history.jsonl"), &t.history)?;
    write_json(&dir.join("run.json"), &TrialMeta::new(t, run))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A seed that did not complete and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub mechanism: String,
    pub variant: Variant,
    pub seed: u64,
    pub error: String,
}

/// Finished trials of one (mechanism, variant) cell.
pub type GridCell = (MechanismSpec, Variant, Vec<TrialOutput>);

/// Runs every seed of every (mechanism, variant) cell, collecting failures
/// instead of stopping at the first one. `sink` sees each finished trial.
pub fn run_grid(
    run: &RunConfig,
    variants: &[Variant],
    mut sink: impl FnMut(&MechanismSpec, &TrialOutput) -> Result<()>,
) -> Result<(Vec<GridCell>, Vec<Failure>)> {
    let (data, schema) = run.dataset()?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for mechanism in run.mechanisms() {
        for &variant in variants {
            let model = VsaeConfig {
                variant,
                ..run.model.clone()
            };
            let results: Vec<(u64, Result<TrialOutput>)> = if run.parallel {
                std::thread::scope(|s| {
                    let handles: Vec<_> = run
                        .seeds()
                        .iter()
                        .map(|&seed| {
                            let (data, schema, mechanism, model) = (&data, &schema, &mechanism, &model);
                            (
                                seed,
                                s.spawn(move || run_trial(data, schema, mechanism, model, seed, run)),
                            )
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|(seed, h)| {
                            let r = h
                                .join()
                                .unwrap_or_else(|_| Err(Error::Config(format!("seed {seed} panicked"))));
                            (seed, r)
                        })
                        .collect()
                })
            } else {
                run.seeds()
                    .iter()
                    .map(|&seed| (seed, run_trial(&data, &schema, &mechanism, &model, seed, run)))
                    .collect()
            };
            let mut done = Vec::new();
            for (seed, r) in results {
                match r.and_then(|t| sink(&mechanism, &t).map(|_| t)) {
                    Ok(t) => done.push(t),
                    Err(e) => {
                        log::error!("seed {seed} ({}, {variant}) failed: {e}", mechanism.label());
                        failures.push(Failure {
                            mechanism: mechanism.label(),
                            variant,
                            seed,
                            error: e.to_string(),
                        });
                    }
                }
            }
            cells.push((mechanism.clone(), variant, done));
        }
    }
    Ok((cells, failures))
}

/// Aggregated scores of one model on one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mechanism: MechanismSpec,
    pub variant: Variant,
    pub model: String,
    pub seeds: Vec<u64>,
    pub nrmse: Option<Summary>,
    pub nrmse_pooled: Option<Summary>,
    pub pfc: Option<Summary>,
    pub generated_missing: Option<Summary>,
    pub trials: Vec<ImputationReport>,
}

impl ReportRow {
    fn new(
        mechanism: &MechanismSpec,
        variant: Variant,
        model: &str,
        trials: Vec<(u64, ImputationReport, Option<f64>)>,
    ) -> Self {
        let col = |f: &dyn Fn(&ImputationReport) -> Option<f64>| {
            let v: Vec<f64> = trials.iter().filter_map(|t| f(&t.1)).collect();
            Summary::of(&v)
        };
        let generated: Vec<f64> = trials.iter().filter_map(|t| t.2).collect();
        Self {
            mechanism: mechanism.clone(),
            variant,
            model: model.into(),
            seeds: trials.iter().map(|t| t.0).collect(),
            nrmse: col(&|r| r.nrmse),
            nrmse_pooled: col(&|r| r.nrmse_pooled),
            pfc: col(&|r| r.pfc),
            generated_missing: Summary::of(&generated),
            trials: trials.into_iter().map(|t| t.1).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: RunConfig,
    pub rows: Vec<ReportRow>,
    pub failures: Vec<Failure>,
}

impl EvaluationReport {
    pub fn from_grid(run: &RunConfig, cells: &[GridCell], failures: Vec<Failure>) -> Self {
        let mut rows = Vec::new();
        for (mechanism, variant, trials) in cells {
            let main = trials
                .iter()
                .map(|t| (t.seed, t.report.clone(), t.generated_missing))
                .collect();
            rows.push(ReportRow::new(mechanism, *variant, "vsae", main));
            let mean = trials
                .iter()
                .map(|t| (t.seed, t.mean_reference.clone(), None))
                .collect();
            rows.push(ReportRow::new(mechanism, *variant, "mean", mean));
            if run.baseline {
                let base = trials
                    .iter()
                    .filter_map(|t| t.baseline.clone().map(|b| (t.seed, b, None)))
                    .collect();
                rows.push(ReportRow::new(mechanism, *variant, "vae", base));
            }
        }
        Self {
            config: run.clone(),
            rows,
            failures,
        }
    }

    pub fn row(&self, model: &str, variant: Variant) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model && r.variant == variant)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("report.json"), self)?;
        let path = dir.join("report.txt");
        std::fs::write(&path, self.to_string()).map_err(|e| Error::io(&path, e))
    }
}

fn summary(s: &Option<Summary>) -> String {
    s.map_or_else(|| "-".into(), |s| s.to_string())
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10}  {:<16}  {:<5}  {:>5}  {:>17}  {:>17}  {:>17}",
            "mechanism", "variant", "model", "seeds", "nrmse", "pfc", "generated missing"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10}  {:<16}  {:<5}  {:>5}  {:>17}  {:>17}  {:>17}",
                r.mechanism.label(),
                r.variant.to_string(),
                r.model,
                r.seeds.len(),
                summary(&r.nrmse),
                summary(&r.pfc),
                summary(&r.generated_missing)
            )?;
        }
        for fail in &self.failures {
            writeln!(
                f,
                "failed: {} {} seed {}: {}",
                fail.mechanism, fail.variant, fail.seed, fail.error
            )?;
        }
        Ok(())
    }
}

/// Trains every seed and writes its checkpoint, history and metadata.
pub fn cmd_train(run: &RunConfig) -> Result<Vec<Failure>> {
    let root = run.output_dir.clone();
    let (_, failures) = run_grid(run, &[run.model.variant], |m, t| {
        write_trial(&trial_dir(&root, m, t.model.config().variant, t.seed), t, run)
    })?;
    Ok(failures)
}

/// Trains in-line and writes `report.json` / `report.txt`.
pub fn cmd_evaluate(run: &RunConfig) -> Result<EvaluationReport> {
    evaluate_variants(run, &[run.model.variant])
}

/// [`cmd_evaluate`] over every ablation variant.
pub fn cmd_ablate(run: &RunConfig) -> Result<EvaluationReport> {
    if run.ablation_variants.is_empty() {
        return Err(Error::Config("no ablation variants given".into()));
    }
    evaluate_variants(run, &run.ablation_variants)
}

fn evaluate_variants(run: &RunConfig, variants: &[Variant]) -> Result<EvaluationReport> {
    let root = run.output_dir.clone();
    let (cells, failures) = run_grid(run, variants, |m, t| {
        write_trial(&trial_dir(&root, m, t.model.config().variant, t.seed), t, run)
    })?;
    let report = EvaluationReport::from_grid(run, &cells, failures);
    report.write(&root)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seed_list_rejected() {
        let cfg = RunConfig {
            seeds: Some(vec![]),
            ..Default::default()
        };
        assert!(cfg.resolve().unwrap_err().to_string().contains("seed list"));
    }

    #[test]
    fn conflicting_variants_rejected() {
        let mut cfg = RunConfig {
            seeds: Some(vec![1]),
            variant: Some(Variant::NoEm),
            ..Default::default()
        };
        cfg.model.variant = Variant::NoMask;
        assert!(cfg.resolve().unwrap_err().to_string().contains("conflicting"));
    }

    #[test]
    fn variant_flag_reaches_model() {
        let cfg = RunConfig {
            seeds: Some(vec![1]),
            variant: Some(Variant::EmSamples(5)),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.model.variant, Variant::EmSamples(5));
    }

    #[test]
    fn ratio_sweep_expands_mechanisms() {
        let cfg = RunConfig {
            missing_ratios: vec![0.3, 0.5, 0.7],
            ..Default::default()
        };
        let labels: Vec<String> = cfg.mechanisms().iter().map(MechanismSpec::label).collect();
        assert_eq!(labels, ["mcar-0.3", "mcar-0.5", "mcar-0.7"]);
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        assert!(RunConfig::from_json(r#"{"sedes": [1]}"#).is_err());
    }

    #[test]
    fn derived_seeds_differ_by_purpose() {
        let s: std::collections::BTreeSet<u64> = (1..=8).map(|p| derive_seed(42, p)).collect();
        assert_eq!(s.len(), 8);
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
    }
}
