//! `hetvae` command-line interface.
//!
//! Run settings resolve as flags > `--config` file > defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{decode, encode, format_cell, load_masked_csv, write_csv, RecordBatch};
use crate::error::{Error, Result};
use crate::harness::{cmd_ablate, cmd_evaluate, cmd_train, selfcheck, write_json, Failure, RunConfig, SEED_ENV};
use crate::mask::{Mechanism, MechanismSpec};
use crate::model::{TrainedModel, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "hetvae",
    version,
    about = "Selective VAE imputation and generation for tabular data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and write checkpoints and histories.
    Train(RunArgs),
    /// Fill unobserved cells of a CSV using a checkpoint.
    Impute(ImputeArgs),
    /// Sample rows and masks from a checkpoint.
    Generate(GenerateArgs),
    /// Train in-line and report mean ± std imputation error over seeds.
    Evaluate(RunArgs),
    /// Evaluate every ablation variant.
    Ablate(RunArgs),
    /// Run the gradient, KL and routing property suites.
    Selfcheck,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MechanismKind {
    Mcar,
    Mar,
    Nmar,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mechanism: Option<MechanismKind>,
    /// Comma-separated MCAR missing ratios.
    #[arg(long, value_delimiter = ',')]
    pub missing_ratio: Option<Vec<f64>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// full | collective-only | attributive-only | no-mask | no-em | em-s=<S>
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Comma-separated variants for `ablate`.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Run seeds on separate threads.
    #[arg(long)]
    pub parallel: bool,
    /// Also train the plain VAE baseline.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated hidden widths for every encoder and data decoder.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub em_samples: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub numerical_variance: Option<f64>,
    #[arg(long)]
    pub generated_masks: Option<usize>,
}

impl RunArgs {
    /// Applies the precedence and resolves the result.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $($dst:tt)+) => {
                if let Some(v) = $flag.clone() {
                    $($dst)+ = v;
                }
            };
        }
        if let Some(p) = &self.data {
            c.dataset = Some(p.clone());
        }
        if let Some(p) = &self.schema {
            c.schema = Some(p.clone());
        }
        if let Some(kind) = self.mechanism {
            let base = match kind {
                MechanismKind::Mcar => MechanismSpec::mcar(0.5),
                MechanismKind::Mar => MechanismSpec::mar(),
                MechanismKind::Nmar => MechanismSpec::nmar(),
            };
            if std::mem::discriminant(&base.mechanism) != std::mem::discriminant(&c.mechanism.mechanism) {
                c.mechanism.mechanism = base.mechanism;
            }
        }
        if let Some(r) = &self.missing_ratio {
            match (r.as_slice(), &mut c.mechanism.mechanism) {
                ([one], Mechanism::Mcar { missing_ratio }) => {
                    *missing_ratio = *one;
                    c.missing_ratios.clear();
                }
                _ => c.missing_ratios = r.clone(),
            }
        }
        if self.seeds.is_some() {
            c.seeds = self.seeds.clone();
        }
        set!(self.output_dir => c.output_dir);
        if self.variant.is_some() {
            c.model.variant = Variant::Full;
            c.variant = self.variant;
        }
        set!(self.variants => c.ablation_variants);
        c.parallel |= self.parallel;
        c.baseline |= self.baseline;
        set!(self.latent_dim => c.model.latent_dim);
        if let Some(h) = &self.hidden {
            c.model.encoder_hidden = h.clone();
            c.model.decoder_hidden = h.clone();
        }
        set!(self.epochs => c.model.max_epochs);
        set!(self.patience => c.model.patience);
        set!(self.em_samples => c.model.em_samples);
        set!(self.batch_size => c.model.batch_size);
        set!(self.learning_rate => c.model.learning_rate);
        set!(self.numerical_variance => c.model.numerical_variance);
        set!(self.generated_masks => c.generated_masks);
        c.resolve()
    }
}

#[derive(Clone, Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Headered CSV; unobserved cells may be empty.
    #[arg(long)]
    pub data: PathBuf,
    /// Header-free 0/1 CSV, 1 = observed.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Seed for sampled latents; defaults to the seed environment variable.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample latents instead of using proposal means.
    #[arg(long)]
    pub sample: bool,
}

#[derive(Clone, Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to `<output>.mask.csv`.
    #[arg(long)]
    pub mask_output: Option<PathBuf>,
}

fn fallback_seed(seed: Option<u64>) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct ArtifactMeta<'a> {
    command: &'a str,
    checkpoint: &'a Path,
    seed: u64,
    rows: usize,
    run: &'a serde_json::Value,
    config: &'a crate::model::VsaeConfig,
}

/// Completes `args.data` and writes it; observed cells keep their exact text.
pub fn impute(args: &ImputeArgs) -> Result<()> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let seed = fallback_seed(args.seed)?;
    let schema = model.schema();
    let mask = crate::mask::MaskMatrix::read_csv(&args.mask)?;
    let (batch, raw) = load_masked_csv(&args.data, schema, &mask)?;
    let x = encode(&batch, schema, &model.stats, &mask, seed)?;
    let completed = model.network.impute(&model.store, &x, &mask, seed, !args.sample)?;
    let decoded = decode(&completed, schema, &model.stats)?;

    let mut w = csv::Writer::from_path(&args.output)?;
    w.write_record(schema.names())?;
    for (r, cells) in raw.iter().enumerate() {
        w.write_record((0..schema.len()).map(|i| {
            if mask.is_observed(r, i) {
                cells[i].clone()
            } else {
                format_cell(schema, i, decoded.get(r, i))
            }
        }))?;
    }
    w.flush().map_err(|e| Error::io(&args.output, e))?;
    write_json(
        &sidecar(&args.output),
        &ArtifactMeta {
            command: "impute",
            checkpoint: &args.checkpoint,
            seed,
            rows: batch.rows(),
            run: &model.run,
            config: model.config(),
        },
    )
}

/// Writes `n` generated rows plus their mask.
pub fn generate(args: &GenerateArgs) -> Result<()> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let seed = fallback_seed(args.seed)?;
    let (x, mask) = model.network.generate(&model.store, args.n, seed)?;
    let batch: RecordBatch = decode(&x, model.schema(), &model.stats)?;
    write_csv(&args.output, model.schema(), &batch)?;
    let mask_path = args.mask_output.clone().unwrap_or_else(|| {
        let mut s = args.output.as_os_str().to_owned();
        s.push(".mask.csv");
        PathBuf::from(s)
    });
    mask.write_csv(&mask_path)?;
    write_json(
        &sidecar(&args.output),
        &ArtifactMeta {
            command: "generate",
            checkpoint: &args.checkpoint,
            seed,
            rows: args.n,
            run: &model.run,
            config: model.config(),
        },
    )
}

fn report_failures(failures: &[Failure]) -> Result<bool> {
    if failures.is_empty() {
        return Ok(true);
    }
    let seeds: Vec<String> = failures
        .iter()
        .map(|f| format!("{} {} seed {}", f.mechanism, f.variant, f.seed))
        .collect();
    eprintln!("{} run(s) failed: {}", failures.len(), seeds.join(", "));
    Ok(false)
}

/// Executes a parsed command; `Ok(false)` means some requested run failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(a) => report_failures(&cmd_train(&a.to_config()?)?),
        Command::Evaluate(a) => {
            let r = cmd_evaluate(&a.to_config()?)?;
            print!("{r}");
            report_failures(&r.failures)
        }
        Command::Ablate(a) => {
            let r = cmd_ablate(&a.to_config()?)?;
            print!("{r}");
            report_failures(&r.failures)
        }
        Command::Impute(a) => impute(a).map(|_| true),
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Selfcheck => {
            let mut ok = true;
            for c in selfcheck::run_all()? {
                println!(
                    "{} {:<28} {:.3e} (threshold {:.1e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                );
                ok &= c.passed;
            }
            Ok(ok)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunArgs {
        match Cli::try_parse_from(args).unwrap().command {
            Command::Train(a) | Command::Evaluate(a) | Command::Ablate(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"seeds": [1, 2], "model": {"latent_dim": 7, "max_epochs": 9}}"#,
        )
        .unwrap();
        let cfg = parse(&["hetvae", "train", "--config", path.to_str().unwrap(), "--epochs", "3"])
            .to_config()
            .unwrap();
        assert_eq!(cfg.seeds(), [1, 2]);
        assert_eq!(cfg.model.latent_dim, 7);
        assert_eq!(cfg.model.max_epochs, 3);
        assert_eq!(cfg.model.batch_size, 64);
    }

    #[test]
    fn single_ratio_sets_mcar_and_list_sweeps() {
        let one = parse(&["hetvae", "evaluate", "--missing-ratio", "0.3", "--seeds", "1"])
            .to_config()
            .unwrap();
        assert_eq!(one.mechanism, MechanismSpec::mcar(0.3));
        let many = parse(&["hetvae", "evaluate", "--missing-ratio", "0.3,0.7", "--seeds", "1"])
            .to_config()
            .unwrap();
        assert_eq!(many.mechanisms().len(), 2);
    }

    #[test]
    fn variant_flag_parses() {
        let cfg = parse(&["hetvae", "train", "--variant", "em-s=4", "--seeds", "3"])
            .to_config()
            .unwrap();
        assert_eq!(cfg.model.variant, Variant::EmSamples(4));
        assert!(Cli::try_parse_from(["hetvae", "train", "--variant", "bogus"]).is_err());
    }

    #[test]
    fn missing_schema_names_path() {
        let cfg = parse(&[
            "hetvae",
            "train",
            "--data",
            "d.csv",
            "--schema",
            "/nonexistent/s.json",
            "--seeds",
            "1",
        ])
        .to_config()
        .unwrap();
        let err = cmd_train(&cfg).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/s.json"), "{err}");
    }
}
