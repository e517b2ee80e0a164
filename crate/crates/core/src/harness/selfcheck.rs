//! Built-in numerical property suites run by `hetvae selfcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{build_mlp, grad_check, MlpSpec, OpKind, ParameterStore, Tape, Var, DEFAULT_STEP};
use crate::data::{AttributeSpec, DatasetSchema};
use crate::dist::{standard_normal, DiagGaussian};
use crate::error::Result;
use crate::mask::MaskMatrix;
use crate::model::{select_proposals, UnobservedTargets, Variant, VsaeConfig, VsaeNetwork};
use crate::tensor::Tensor;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Random in `[lo, hi]` but at least `gap` away from every point in `avoid`.
fn random_away(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64, avoid: &[f64], gap: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| loop {
        let v = rng.random_range(lo..hi);
        if avoid.iter().all(|a| (v - a).abs() > gap) {
            return v;
        }
    })
}

/// `Σ w ⊙ op(x, others…)`, reduced with fixed random weights.
fn weighted_check(
    kind: OpKind,
    point: &Tensor,
    others: Vec<Tensor>,
    position: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let probe = {
        let mut t = Tape::new();
        let mut ops: Vec<Var> = others.iter().map(|o| t.constant(o.clone())).collect();
        let x = t.constant(point.clone());
        ops.insert(position, x);
        let y = t.apply(kind, &ops)?;
        t.value(y).clone()
    };
    let w = random(rng, probe.rows(), probe.cols(), -1.0, 1.0);
    grad_check(
        |t, x| {
            let mut ops: Vec<Var> = others.iter().map(|o| t.constant(o.clone())).collect();
            ops.insert(position, x);
            let y = t.apply(kind, &ops)?;
            let wv = t.constant(w.clone());
            let p = t.mul(y, wv)?;
            t.sum(p)
        },
        point,
        DEFAULT_STEP,
    )
}

/// Finite-difference check of every primitive at 20 random points.
pub fn primitive_gradients() -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9_ad);
    let mut results = Vec::new();
    let unary: Vec<(OpKind, f64, f64, Vec<f64>)> = vec![
        (OpKind::Tanh, -2.0, 2.0, vec![]),
        (OpKind::Relu, -2.0, 2.0, vec![0.0]),
        (OpKind::Sigmoid, -4.0, 4.0, vec![]),
        (OpKind::Softplus, -4.0, 4.0, vec![]),
        (OpKind::Exp, -2.0, 2.0, vec![]),
        (OpKind::Log, 0.1, 3.0, vec![]),
        (OpKind::Neg, -2.0, 2.0, vec![]),
        (OpKind::Square, -2.0, 2.0, vec![]),
        (OpKind::Scale(-1.7), -2.0, 2.0, vec![]),
        (OpKind::AddScalar(0.3), -2.0, 2.0, vec![]),
        (OpKind::Clamp(-0.5, 0.5), -1.0, 1.0, vec![-0.5, 0.5]),
        (OpKind::Sum, -2.0, 2.0, vec![]),
        (OpKind::Mean, -2.0, 2.0, vec![]),
        (OpKind::SumCols, -2.0, 2.0, vec![]),
        (OpKind::SliceCols { start: 1, len: 2 }, -2.0, 2.0, vec![]),
        (OpKind::SliceRows { start: 1, len: 1 }, -2.0, 2.0, vec![]),
        (OpKind::LogSoftmax, -3.0, 3.0, vec![]),
    ];
    for (kind, lo, hi, kinks) in unary {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let p = random_away(&mut rng, 3, 4, lo, hi, &kinks, 1e-3);
            worst = worst.max(weighted_check(kind, &p, vec![], 0, &mut rng)?);
        }
        results.push(CheckResult::below(kind.name(), worst, GRADIENT_TOLERANCE));
    }

    type Shapes = ((usize, usize), (usize, usize));
    let binary: Vec<(OpKind, Shapes)> = vec![
        (OpKind::MatMul, ((3, 4), (4, 2))),
        (OpKind::AddRow, ((3, 4), (1, 4))),
        (OpKind::Add, ((3, 4), (3, 4))),
        (OpKind::Sub, ((3, 4), (3, 4))),
        (OpKind::Mul, ((3, 4), (3, 4))),
        (OpKind::Concat, ((3, 4), (3, 2))),
    ];
    for (kind, (sa, sb)) in binary {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let a = random(&mut rng, sa.0, sa.1, -2.0, 2.0);
            let b = random(&mut rng, sb.0, sb.1, -2.0, 2.0);
            worst = worst.max(weighted_check(kind, &a, vec![b.clone()], 0, &mut rng)?);
            worst = worst.max(weighted_check(kind, &b, vec![a], 1, &mut rng)?);
        }
        results.push(CheckResult::below(kind.name(), worst, GRADIENT_TOLERANCE));
    }

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sel = Tensor::from_fn(3, 4, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
        let a = random(&mut rng, 3, 4, -2.0, 2.0);
        let b = random(&mut rng, 3, 4, -2.0, 2.0);
        worst = worst.max(weighted_check(
            OpKind::Select,
            &a,
            vec![sel.clone(), b.clone()],
            1,
            &mut rng,
        )?);
        worst = worst.max(weighted_check(OpKind::Select, &b, vec![sel, a], 2, &mut rng)?);
    }
    results.push(CheckResult::below(OpKind::Select.name(), worst, GRADIENT_TOLERANCE));

    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (mlp, store) = build_mlp(MlpSpec::new(3, &[6, 5], 2), seed)?;
        let x = random(&mut rng, 4, 3, -1.0, 1.0);
        let y = random(&mut rng, 4, 2, -1.0, 1.0);
        for name in mlp.parameter_names() {
            worst = worst.max(param_check(&store, &name, |t, b| {
                let xv = t.constant(x.clone());
                let out = mlp.forward(t, b, xv)?;
                let yv = t.constant(y.clone());
                let d = t.sub(out, yv)?;
                let d2 = t.square(d)?;
                t.mean(d2)
            })?);
        }
    }
    results.push(CheckResult::below("mlp_tanh_2layer", worst, GRADIENT_TOLERANCE));
    Ok(results)
}

/// Gradient check of `f` with respect to the single parameter `name`, all
/// others held as constants.
pub fn param_check<F>(store: &ParameterStore, name: &str, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &crate::autodiff::Bound) -> Result<Var>,
{
    let point = store.get(name)?.clone();
    grad_check(
        |t, x| {
            let mut bound = store.bind_frozen(t);
            bound.insert(name, x);
            f(t, &bound)
        },
        &point,
        DEFAULT_STEP,
    )
}

/// A 4-attribute toy schema: three numerical, one 3-class categorical.
pub fn toy_schema() -> DatasetSchema {
    DatasetSchema::new(vec![
        AttributeSpec::numerical("x1"),
        AttributeSpec::numerical("x2"),
        AttributeSpec::categorical("c", ["a", "b", "c"]),
        AttributeSpec::numerical("x3"),
    ])
    .expect("valid toy schema")
}

pub fn toy_config() -> VsaeConfig {
    VsaeConfig {
        latent_dim: 2,
        encoder_hidden: vec![5],
        decoder_hidden: vec![5],
        mask_decoder_hidden: vec![4],
        ..Default::default()
    }
}

/// Random noise-filled batch, mask and fixed completion targets for `net`.
pub fn toy_batch(net: &VsaeNetwork, n: usize, rng: &mut ChaCha8Rng) -> (Tensor, MaskMatrix, UnobservedTargets) {
    let schema = &net.schema;
    let mask = MaskMatrix::new(Tensor::from_fn(n, schema.len(), |_, _| {
        if rng.random::<f64>() < 0.5 {
            0.0
        } else {
            1.0
        }
    }))
    .expect("binary");
    let mut x = Tensor::zeros(n, schema.encoded_width());
    let mut mean = Tensor::zeros(n, schema.encoded_width());
    let mut variance = Tensor::zeros(n, schema.encoded_width());
    for r in 0..n {
        for (i, a) in schema.attributes().iter().enumerate() {
            let off = schema.offset(i);
            if a.is_numerical() {
                x.set(r, off, rng.random_range(0.0..1.0));
                mean.set(r, off, rng.random_range(0.0..1.0));
                variance.set(r, off, rng.random_range(0.0..0.1));
            } else {
                let w = a.encoded_width();
                x.set(r, off + rng.random_range(0..w), 1.0);
                let raw: Vec<f64> = (0..w).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = raw.iter().sum();
                for (k, v) in raw.iter().enumerate() {
                    mean.set(r, off + k, v / s);
                }
            }
            if !mask.is_observed(r, i) {
                for c in off..off + a.encoded_width() {
                    x.set(r, c, rng.sample(rand_distr::StandardNormal));
                }
            }
        }
    }
    (x, mask, UnobservedTargets { mean, variance })
}

/// Gradient of the full objective with respect to every parameter tensor of
/// a 4-attribute toy model, completions held fixed.
pub fn elbo_gradients() -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    for variant in [Variant::Full, Variant::NoMask] {
        let net = VsaeNetwork::new(
            toy_schema(),
            VsaeConfig {
                variant,
                ..toy_config()
            },
        )?;
        let store = net.initialize(17);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (x, mask, targets) = toy_batch(&net, 6, &mut rng);
        let noise = vec![standard_normal(6, 8, &mut rng)];
        let mut worst: f64 = 0.0;
        let names: Vec<String> = store.names().map(str::to_string).collect();
        for name in &names {
            worst = worst.max(param_check(&store, name, |t, b| {
                Ok(net.elbo_vars(t, b, &x, &mask, Some(&targets), &noise)?.loss)
            })?);
        }
        results.push(CheckResult::below(format!("elbo_{variant}"), worst, GRADIENT_TOLERANCE));
    }
    Ok(results)
}

/// Closed-form KL against a 10⁵-sample Monte-Carlo estimate for 10 random
/// Gaussians. `value` is the largest |difference| in standard errors.
pub fn kl_monte_carlo(samples: usize) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b1);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let d = rng.random_range(1..5);
        let mu = random(&mut rng, 1, d, -1.5, 1.5);
        let lv = random(&mut rng, 1, d, -2.0, 1.0);
        let q = DiagGaussian::new(mu, lv)?;
        let p = DiagGaussian::standard(1, d);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..samples {
            let z = q.sample(&mut rng);
            let v = q.log_prob(&z)? - p.log_prob(&z)?;
            s += v;
            s2 += v * v;
        }
        let n = samples as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        worst = worst.max((mean - q.kl_to_standard_normal()?).abs() / se);
    }
    Ok(CheckResult::below("kl_monte_carlo_se", worst, 3.0))
}

/// Selector exactness, KL additivity and log-likelihood decomposition over
/// `trials` random configurations each.
pub fn routing_and_factorization(trials: usize) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1);
    let (mut selector_mismatch, mut kl_gap, mut ll_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for t in 0..trials {
        let net = VsaeNetwork::new(toy_schema(), toy_config())?;
        let store = net.initialize(t as u64);
        let n = rng.random_range(1..6);
        let (x, mask, _) = toy_batch(&net, n, &mut rng);

        let a = net.encode_attributive_all(&store, &x)?;
        let c = net.encode_collective(&store, &x, &mask)?;
        let bundle = select_proposals(&mask, &a, &c)?;
        for i in 0..net.attributes() {
            for r in 0..n {
                let src = if mask.is_observed(r, i) { &a[i] } else { &c[i] };
                let got = &bundle.distributions[i];
                let same = got.mean.row_slice(r) == src.mean.row_slice(r)
                    && got.log_variance.row_slice(r) == src.log_variance.row_slice(r);
                if !same {
                    selector_mismatch += 1.0;
                }
            }
        }
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let noise = vec![standard_normal(n, net.attributes() * net.latent_dim(), &mut rng)];
        let truth_targets = UnobservedTargets {
            mean: {
                let (clean, _, _) = toy_batch(&net, n, &mut rng);
                let mut m = x.clone();
                for r in 0..n {
                    for i in 0..net.attributes() {
                        if !mask.is_observed(r, i) {
                            let (off, w) = (net.schema.offset(i), net.schema.attribute(i).encoded_width());
                            for col in off..off + w {
                                m.set(
                                    r,
                                    col,
                                    if net.schema.attribute(i).is_numerical() {
                                        clean.get(r, col).abs().min(1.0)
                                    } else {
                                        clean.get(r, col).abs()
                                    },
                                );
                            }
                        }
                    }
                }
                m
            },
            variance: Tensor::zeros(n, net.schema.encoded_width()),
        };
        let vars = net.elbo_vars(&mut tape, &bound, &x, &mask, Some(&truth_targets), &noise)?;

        let per_attr: f64 = vars.kl_per_attribute.iter().map(|&v| tape.value(v).item()).sum();
        let closed: f64 = bundle
            .distributions
            .iter()
            .map(|g| g.kl_to_standard_normal())
            .sum::<Result<f64>>()?
            / n as f64;
        let total = tape.value(vars.kl).item();
        kl_gap = kl_gap.max((total - per_attr).abs()).max((total - closed).abs());

        let latents: Vec<Tensor> = bundle
            .distributions
            .iter()
            .enumerate()
            .map(|(i, g)| g.rsample(&noise[0].cols_range(i * net.latent_dim(), net.latent_dim())))
            .collect::<Result<_>>()?;
        let z = Tensor::concat_cols(&latents.iter().collect::<Vec<_>>())?;
        let cond = net.decode_mask_probabilities(&store, &z)?;
        let all = Tensor::filled(n, net.attributes(), 1.0);
        let unobserved = mask.as_tensor().map(|v| 1.0 - v);
        let whole: f64 = net
            .data_log_likelihood(&store, &z, &cond, &truth_targets.mean, &all)?
            .iter()
            .sum();
        let obs: f64 = net
            .data_log_likelihood(&store, &z, &cond, &truth_targets.mean, mask.as_tensor())?
            .iter()
            .sum();
        let uno: f64 = net
            .data_log_likelihood(&store, &z, &cond, &truth_targets.mean, &unobserved)?
            .iter()
            .sum();
        let tape_obs = tape.value(vars.observed).item() * n as f64;
        let tape_uno = vars.unobserved.map_or(0.0, |u| tape.value(u).item()) * n as f64;
        let scale = whole.abs().max(1.0);
        ll_gap = ll_gap
            .max((whole - (obs + uno)).abs() / scale)
            .max((tape_obs - obs).abs() / scale)
            .max((tape_uno - uno).abs() / scale);
    }
    Ok(vec![
        CheckResult::below("selector_mismatches", selector_mismatch, 0.5),
        CheckResult::below("kl_additivity_gap", kl_gap, 1e-10),
        CheckResult::below("ll_decomposition_gap", ll_gap, 1e-10),
    ])
}

/// Every suite above with the default sizes.
pub fn run_all() -> Result<Vec<CheckResult>> {
    let mut out = primitive_gradients()?;
    out.extend(elbo_gradients()?);
    out.push(kl_monte_carlo(100_000)?);
    out.extend(routing_and_factorization(100)?);
    Ok(out)
}
