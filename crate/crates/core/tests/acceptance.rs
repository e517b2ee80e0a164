//! One line per acceptance criterion. Structural criteria (1-4, 10) fail the
//! target; model-quality criteria are reported without failing it.
//!
//! `cargo test --test acceptance -- 1 4 9` runs a subset.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hetvae::data::{decode, encode, load_csv, split, AttributeSpec, DatasetSchema, RecordBatch};
use hetvae::eval::{Imputer, VsaeImputer};
use hetvae::harness::selfcheck::{self, CheckResult};
use hetvae::harness::{cmd_evaluate, derive_seed, purpose, run_trial, RunConfig, TrialOutput};
use hetvae::mask::{default_observed, sample_mar, sample_mcar, sample_nmar, MechanismSpec};
use hetvae::model::{Variant, VsaeConfig};
use hetvae::tensor::Tensor;

struct Line {
    criterion: u32,
    passed: bool,
    gating: bool,
    text: String,
}

struct Acceptance {
    selected: Vec<u32>,
    lines: Vec<Line>,
    yeast_mcar: Option<Vec<TrialOutput>>,
}

impl Acceptance {
    fn wants(&self, c: u32) -> bool {
        self.selected.is_empty() || self.selected.contains(&c)
    }

    fn record(&mut self, criterion: u32, gating: bool, passed: bool, text: String) {
        println!("{} criterion {criterion}: {text}", if passed { "PASS" } else { "FAIL" });
        self.lines.push(Line {
            criterion,
            passed,
            gating,
            text,
        });
    }

    fn timed(&mut self, criterion: u32, limit_s: f64, gating: bool, f: impl FnOnce(&mut Self) -> (bool, String)) {
        if !self.wants(criterion) {
            return;
        }
        let start = Instant::now();
        let (ok, text) = f(self);
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < limit_s;
        let limit = if limit_s.is_finite() {
            format!(" (limit {limit_s:.0}s)")
        } else {
            String::new()
        };
        self.record(
            criterion,
            gating,
            ok && in_time,
            format!("{text}; runtime {secs:.1}s{limit}"),
        );
    }
}

fn worst(results: &[CheckResult]) -> (bool, f64, String) {
    let w = results
        .iter()
        .max_by(|a, b| (a.value / a.threshold).total_cmp(&(b.value / b.threshold)))
        .unwrap();
    (results.iter().all(|r| r.passed), w.value, w.name.clone())
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load(name: &str) -> Option<(RecordBatch, DatasetSchema)> {
    let dirs = std::env::var_os("HETVAE_DATA_DIR")
        .map(PathBuf::from)
        .into_iter()
        .chain(std::iter::once(data_dir()));
    for dir in dirs {
        let csv = dir.join(format!("{name}.csv"));
        let schema = dir.join(format!("{name}.schema.json"));
        if csv.is_file() && schema.is_file() {
            let schema = DatasetSchema::load(&schema).expect("schema parses");
            let data = load_csv(&csv, &schema).expect("dataset parses");
            return Some((data, schema));
        }
    }
    None
}

fn tabular_model() -> VsaeConfig {
    VsaeConfig {
        em_samples: 20,
        max_epochs: 150,
        patience: 25,
        learning_rate: 3e-3,
        numerical_variance: 1e-3,
        ..VsaeConfig::default()
    }
}

fn trials(
    data: &RecordBatch,
    schema: &DatasetSchema,
    mechanism: &MechanismSpec,
    model: &VsaeConfig,
    seeds: &[u64],
    run: &RunConfig,
) -> Vec<TrialOutput> {
    seeds
        .iter()
        .map(|&s| run_trial(data, schema, mechanism, model, s, run).expect("trial runs"))
        .collect()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn nrmse_of(ts: &[TrialOutput], pick: impl Fn(&TrialOutput) -> Option<f64>) -> f64 {
    mean(ts.iter().map(|t| pick(t).expect("numerical score")))
}

fn criterion_1(_: &mut Acceptance) -> (bool, String) {
    let mut r = selfcheck::primitive_gradients().expect("primitive checks run");
    r.extend(selfcheck::elbo_gradients().expect("elbo checks run"));
    let (ok, value, name) = worst(&r);
    (
        ok,
        format!(
            "{} gradient checks, max relative error {value:.2e} ({name}) < 1e-4",
            r.len()
        ),
    )
}

fn criterion_2(_: &mut Acceptance) -> (bool, String) {
    let r = selfcheck::kl_monte_carlo(100_000).expect("kl check runs");
    (
        r.passed,
        format!("closed-form KL within {:.2} SE of 1e5-sample estimate (< 3)", r.value),
    )
}

fn criterion_3(_: &mut Acceptance) -> (bool, String) {
    let r = selfcheck::routing_and_factorization(100).expect("routing checks run");
    let parts: Vec<String> = r.iter().map(|c| format!("{} {:.1e}", c.name, c.value)).collect();
    (
        r.iter().all(|c| c.passed),
        format!("100 configurations: {}", parts.join(", ")),
    )
}

fn criterion_4(_: &mut Acceptance) -> (bool, String) {
    let (n, m) = (1250, 8);
    let mut ok = true;
    let mut mcar = Vec::new();
    for (k, target) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let p = sample_mcar(n, m, target, 100 + k as u64)
            .unwrap()
            .stats()
            .missing_proportion;
        ok &= (p - target).abs() <= 0.02;
        mcar.push(format!("{p:.3}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scaled = Tensor::from_fn(n, m, |_, _| rng.random::<f64>());
    let mar = sample_mar(&scaled, 5);
    let fixed = default_observed(m, 0.25, None);
    let mar_ok = fixed.iter().all(|&i| (0..n).all(|r| mar.is_observed(r, i))) && mar.missing_count() > 0;
    ok &= mar_ok;

    let big = Tensor::from_fn(100_000, 1, |_, _| rng.random::<f64>());
    let nmar = sample_nmar(&big, 6);
    let mut bins = [(0usize, 0usize); 5];
    for r in 0..big.rows() {
        let b = ((big.get(r, 0) * 5.0) as usize).min(4);
        bins[b].0 += 1;
        bins[b].1 += usize::from(!nmar.is_observed(r, 0));
    }
    let rates: Vec<f64> = bins.iter().map(|(c, miss)| *miss as f64 / *c as f64).collect();
    let nmar_ok = rates.windows(2).all(|w| w[1] > w[0]);
    ok &= nmar_ok;
    let rates: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
    (
        ok,
        format!(
            "MCAR ratios [{}] vs 0.3/0.5/0.7 (±0.02); MAR default-observed fully observed {mar_ok}; \
             NMAR missing rate by value quintile [{}] increasing {nmar_ok}",
            mcar.join(", "),
            rates.join(", ")
        ),
    )
}

fn criterion_5(acc: &mut Acceptance) -> (bool, String) {
    let Some((data, schema)) = load("yeast") else {
        return (false, "dataset unavailable (yeast.csv)".into());
    };
    let run = RunConfig {
        baseline: true,
        ..RunConfig::default()
    };
    let ts = trials(
        &data,
        &schema,
        &MechanismSpec::mcar(0.5),
        &tabular_model(),
        &[1, 2, 3],
        &run,
    );
    let vsae = nrmse_of(&ts, |t| t.report.nrmse);
    let vae = nrmse_of(&ts, |t| t.baseline.as_ref().and_then(|b| b.nrmse));
    let reference = nrmse_of(&ts, |t| t.mean_reference.nrmse);
    let pooled = nrmse_of(&ts, |t| t.report.nrmse_pooled);
    let vae_pooled = nrmse_of(&ts, |t| t.baseline.as_ref().and_then(|b| b.nrmse_pooled));
    acc.yeast_mcar = Some(ts);
    (
        vsae <= 0.46 && vsae < vae,
        format!(
            "Yeast MCAR 0.5 NRMSE {vsae:.4} (<= 0.46) vs VAE {vae:.4}; mean imputation {reference:.4}; \
             pooled NRMSE VSAE {pooled:.4} VAE {vae_pooled:.4}"
        ),
    )
}

fn criterion_6(_: &mut Acceptance) -> (bool, String) {
    let Some((data, schema)) = load("whitewine") else {
        return (
            false,
            "dataset unavailable (set HETVAE_DATA_DIR to a directory with whitewine.csv and whitewine.schema.json)"
                .into(),
        );
    };
    let run = RunConfig::default();
    let ts = trials(
        &data,
        &schema,
        &MechanismSpec::mcar(0.5),
        &tabular_model(),
        &[1, 2, 3],
        &run,
    );
    let vsae = nrmse_of(&ts, |t| t.report.nrmse);
    let reference = nrmse_of(&ts, |t| t.mean_reference.nrmse);
    (
        vsae <= 0.385,
        format!("Whitewine MCAR 0.5 NRMSE {vsae:.4} (<= 0.385); mean imputation {reference:.4}"),
    )
}

fn criterion_7(_: &mut Acceptance) -> (bool, String) {
    let Some((data, schema)) = load("yeast") else {
        return (false, "dataset unavailable (yeast.csv)".into());
    };
    let run = RunConfig::default();
    let nmar = MechanismSpec::nmar();
    let full = trials(&data, &schema, &nmar, &tabular_model(), &[1, 2, 3], &run);
    let no_em_cfg = VsaeConfig {
        variant: Variant::NoEm,
        ..tabular_model()
    };
    let no_em = trials(&data, &schema, &nmar, &no_em_cfg, &[1, 2, 3], &run);
    let (f, n) = (
        nrmse_of(&full, |t| t.report.nrmse),
        nrmse_of(&no_em, |t| t.report.nrmse),
    );
    let reference = nrmse_of(&full, |t| t.mean_reference.nrmse);
    let ratio = mean(full.iter().map(|t| t.achieved.test));
    (
        f <= 0.46 && f <= n + 0.01,
        format!(
            "Yeast NMAR (test missing ratio {ratio:.3}) NRMSE {f:.4} (<= 0.46), no-EM {n:.4} (full <= no-EM + 0.01); \
             mean imputation {reference:.4}"
        ),
    )
}

fn criterion_8(acc: &mut Acceptance) -> (bool, String) {
    let Some((data, schema)) = load("yeast") else {
        return (false, "dataset unavailable (yeast.csv)".into());
    };
    let run = RunConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for target in [0.3, 0.5, 0.7] {
        let generated = match (&acc.yeast_mcar, target) {
            (Some(ts), 0.5) => mean(ts.iter().map(|t| t.generated_missing.unwrap())),
            _ => {
                let cfg = VsaeConfig {
                    max_epochs: 60,
                    ..tabular_model()
                };
                let ts = trials(&data, &schema, &MechanismSpec::mcar(target), &cfg, &[1], &run);
                ts[0].generated_missing.unwrap()
            }
        };
        ok &= (generated - target).abs() <= 0.05;
        parts.push(format!("{target} -> {generated:.3}"));
    }
    (
        ok,
        format!(
            "generated missing proportion over 100 masks [{}] (±0.05)",
            parts.join(", ")
        ),
    )
}

/// `x1 ~ N(0,1)`, `x2 = x1 + N(0, 0.05)`, `x3 ~ N(0,1)`; optionally a class
/// attribute given by the sign of `x1`.
fn correlated(n: usize, seed: u64, with_class: bool) -> (RecordBatch, DatasetSchema) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs = vec![
        AttributeSpec::numerical("x1"),
        AttributeSpec::numerical("x2"),
        AttributeSpec::numerical("x3"),
    ];
    if with_class {
        attrs.push(AttributeSpec::categorical("sign", ["neg", "pos"]));
    }
    let cols = attrs.len();
    let mut values = Tensor::zeros(n, cols);
    for r in 0..n {
        let x1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        values.set(r, 0, x1);
        values.set(r, 1, x1 + 0.05 * e);
        values.set(r, 2, rng.sample(StandardNormal));
        if with_class {
            values.set(r, 3, f64::from(u8::from(x1 > 0.0)));
        }
    }
    (RecordBatch::new(values), DatasetSchema::new(attrs).unwrap())
}

fn oracle_model() -> VsaeConfig {
    VsaeConfig {
        latent_dim: 2,
        encoder_hidden: vec![32, 32],
        decoder_hidden: vec![32, 32],
        em_samples: 10,
        max_epochs: 400,
        patience: 40,
        learning_rate: 3e-3,
        ..VsaeConfig::default()
    }
}

/// Masked `x2` cells of the trial's test split: (truth, imputed).
fn masked_x2(
    t: &TrialOutput,
    data: &RecordBatch,
    schema: &DatasetSchema,
    mechanism: &MechanismSpec,
) -> Vec<(f64, f64)> {
    let parts = split(data.rows(), derive_seed(t.seed, purpose::SPLIT)).unwrap();
    let stats = &t.model.stats;
    let mask = mechanism
        .sample(
            &stats.scaled(data, schema, mechanism.scaling),
            derive_seed(t.seed, purpose::MASK),
        )
        .unwrap()
        .select_rows(&parts.test);
    let test = data.select_rows(&parts.test);
    let seed = derive_seed(t.seed, purpose::EVAL);
    let x = encode(&test, schema, stats, &mask, seed).unwrap();
    let imputer = VsaeImputer {
        model: &t.model,
        use_mean: true,
    };
    let imputed = decode(&imputer.impute_encoded(&x, &mask, seed).unwrap(), schema, stats).unwrap();
    (0..test.rows())
        .filter(|&r| !mask.is_observed(r, 1))
        .map(|r| (test.get(r, 1), imputed.get(r, 1)))
        .collect()
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let (ma, mb) = (mean(pairs.iter().map(|p| p.0)), mean(pairs.iter().map(|p| p.1)));
    let cov: f64 = pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum();
    let va: f64 = pairs.iter().map(|(a, _)| (a - ma).powi(2)).sum();
    let vb: f64 = pairs.iter().map(|(_, b)| (b - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn x2_error(t: &hetvae::eval::ImputationReport) -> f64 {
    t.per_attribute[1].error.expect("x2 was masked")
}

fn criterion_9(_: &mut Acceptance) -> (bool, String) {
    let mechanism = MechanismSpec::mcar(0.5);
    let run = RunConfig::default();
    let (data, schema) = correlated(500, 9, false);
    let ts = trials(&data, &schema, &mechanism, &oracle_model(), &[1, 2, 3], &run);
    let vsae = mean(ts.iter().map(|t| x2_error(&t.report)));
    let marginal = mean(ts.iter().map(|t| x2_error(&t.mean_reference)));
    let reduction = 1.0 - vsae / marginal;
    let pairs: Vec<(f64, f64)> = ts
        .iter()
        .flat_map(|t| masked_x2(t, &data, &schema, &mechanism))
        .collect();
    let r = pearson(&pairs);

    let (cdata, cschema) = correlated(500, 9, true);
    let ct = trials(&cdata, &cschema, &mechanism, &oracle_model(), &[1], &run);
    let (pfc, pfc_mean) = (ct[0].report.pfc.unwrap(), ct[0].mean_reference.pfc.unwrap());
    (
        reduction >= 0.2 && r > 0.8,
        format!(
            "imputed x2 RMSE {:.1}% below marginal mean (>= 20%), Pearson r {r:.3} over {} cells (> 0.8); \
             with class attribute PFC {pfc:.3} vs mode {pfc_mean:.3}",
            100.0 * reduction,
            pairs.len()
        ),
    )
}

fn criterion_10(_: &mut Acceptance) -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = correlated(200, 10, true);
    let csv = dir.path().join("d.csv");
    let mut text = String::from("x1,x2,x3,sign\n");
    for r in 0..data.rows() {
        let class = ["neg", "pos"][data.get(r, 3) as usize];
        text.push_str(&format!(
            "{},{},{},{class}\n",
            data.get(r, 0),
            data.get(r, 1),
            data.get(r, 2)
        ));
    }
    std::fs::write(&csv, text).unwrap();
    let schema_path = dir.path().join("d.schema.json");
    std::fs::write(&schema_path, serde_json::to_string(&schema).unwrap()).unwrap();

    let run = RunConfig {
        dataset: Some(csv),
        schema: Some(schema_path),
        seeds: Some(vec![3, 4]),
        output_dir: dir.path().join("out"),
        model: VsaeConfig {
            em_samples: 5,
            max_epochs: 10,
            ..oracle_model()
        },
        ..RunConfig::default()
    };
    let read = |run: &RunConfig| {
        cmd_evaluate(run).unwrap();
        let out = &run.output_dir;
        (
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("report.txt")).unwrap(),
        )
    };
    let first = read(&run);
    let second = read(&run);
    let parallel = read(&RunConfig {
        parallel: true,
        ..run.clone()
    });
    let same = first == second;
    let same_text = first.1 == parallel.1;
    (
        same && same_text,
        format!("rerun report.json/report.txt byte-identical {same}; parallel run report.txt identical {same_text}"),
    )
}

fn main() {
    let selected = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut acc = Acceptance {
        selected,
        lines: Vec::new(),
        yeast_mcar: None,
    };
    acc.timed(1, 30.0, true, criterion_1);
    acc.timed(2, 10.0, true, criterion_2);
    acc.timed(3, 10.0, true, criterion_3);
    acc.timed(4, 10.0, true, criterion_4);
    acc.timed(5, 600.0, false, criterion_5);
    acc.timed(6, 900.0, false, criterion_6);
    acc.timed(7, 900.0, false, criterion_7);
    acc.timed(8, 600.0, false, criterion_8);
    acc.timed(9, 180.0, false, criterion_9);
    acc.timed(10, f64::INFINITY, true, criterion_10);

    let passed = acc.lines.iter().filter(|l| l.passed).count();
    println!("{passed}/{} criteria passed", acc.lines.len());
    let broken: Vec<&Line> = acc.lines.iter().filter(|l| l.gating && !l.passed).collect();
    for l in &broken {
        eprintln!("structural criterion {} failed: {}", l.criterion, l.text);
    }
    if !broken.is_empty() {
        std::process::exit(1);
    }
}
