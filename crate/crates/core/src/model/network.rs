//! Network topology and the forward pieces shared by training and inference.
//!
//! Parameter names carry their group as a prefix: `phi.<i>.*` attributive
//! encoders, `psi.*` the collective encoder, `theta.<i>.*` data decoders and
//! `eps.*` the mask decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::sigmoid;
use crate::autodiff::{Bound, Mlp, MlpSpec, ParameterStore, Tape, Var};
use crate::data::DatasetSchema;
use crate::dist::{DiagGaussian, LOG_VARIANCE_MAX, LOG_VARIANCE_MIN};
use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::model::config::{Variant, VsaeConfig};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterGroup {
    Attributive,
    Collective,
    DataDecoder,
    MaskDecoder,
}

impl ParameterGroup {
    pub const ALL: [ParameterGroup; 4] = [
        ParameterGroup::Attributive,
        ParameterGroup::Collective,
        ParameterGroup::DataDecoder,
        ParameterGroup::MaskDecoder,
    ];

    pub fn of(name: &str) -> Option<Self> {
        match name.split('.').next()? {
            "phi" => Some(ParameterGroup::Attributive),
            "psi" => Some(ParameterGroup::Collective),
            "theta" => Some(ParameterGroup::DataDecoder),
            "eps" => Some(ParameterGroup::MaskDecoder),
            _ => None,
        }
    }
}

/// Which proposal produced a latent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proposal {
    Attributive,
    Collective,
}

/// Selected per-attribute posteriors for a batch plus the routing flags.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBundle {
    pub distributions: Vec<DiagGaussian>,
    /// `sources[i][r]` for attribute `i`, row `r`.
    pub sources: Vec<Vec<Proposal>>,
}

/// Selects, per attribute and row, the attributive distribution where the
/// attribute is observed and the collective one otherwise.
pub fn select_proposals(
    mask: &MaskMatrix,
    attributive: &[DiagGaussian],
    collective: &[DiagGaussian],
) -> Result<LatentBundle> {
    if attributive.len() != mask.cols() || collective.len() != mask.cols() {
        return Err(Error::Shape {
            op: "select_proposals",
            lhs: vec![attributive.len(), collective.len()],
            rhs: vec![mask.cols()],
        });
    }
    let mut distributions = Vec::with_capacity(mask.cols());
    let mut sources = Vec::with_capacity(mask.cols());
    for i in 0..mask.cols() {
        let (a, c) = (&attributive[i], &collective[i]);
        if a.mean.shape() != c.mean.shape() || a.rows() != mask.rows() {
            return Err(Error::Shape {
                op: "select_proposals",
                lhs: a.mean.shape().to_vec(),
                rhs: c.mean.shape().to_vec(),
            });
        }
        let mut mean = c.mean.clone();
        let mut lv = c.log_variance.clone();
        let mut src = vec![Proposal::Collective; mask.rows()];
        for (r, s) in src.iter_mut().enumerate() {
            if mask.is_observed(r, i) {
                mean.row_slice_mut(r).copy_from_slice(a.mean.row_slice(r));
                lv.row_slice_mut(r).copy_from_slice(a.log_variance.row_slice(r));
                *s = Proposal::Attributive;
            }
        }
        distributions.push(DiagGaussian::new(mean, lv)?);
        sources.push(src);
    }
    Ok(LatentBundle { distributions, sources })
}

/// Concatenates per-attribute latents `(n,d)` in schema order into `(n, M·d)`.
pub fn aggregate(latents: &[Tensor]) -> Result<Tensor> {
    let parts: Vec<&Tensor> = latents.iter().collect();
    Tensor::concat_cols(&parts)
}

/// Tape handles for one per-attribute family of Gaussians.
#[derive(Clone, Debug)]
pub struct PosteriorVars {
    pub mean: Vec<Var>,
    pub log_variance: Vec<Var>,
}

/// The four networks of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsaeNetwork {
    pub schema: DatasetSchema,
    pub config: VsaeConfig,
    attributive: Vec<Mlp>,
    collective: Mlp,
    decoders: Vec<Mlp>,
    mask_decoder: Mlp,
}

impl VsaeNetwork {
    pub fn new(schema: DatasetSchema, config: VsaeConfig) -> Result<Self> {
        config.validate()?;
        let m = schema.len();
        let d = config.latent_dim;
        let w = schema.encoded_width();
        let act = config.hidden_activation;
        let spec = |input, hidden: &[usize], output| {
            let mut s = MlpSpec::new(input, hidden, output);
            s.hidden_activation = act;
            s
        };
        let attributive = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                Mlp::new(
                    format!("phi.{i}"),
                    spec(a.encoded_width(), &config.encoder_hidden, 2 * d),
                )
            })
            .collect::<Result<_>>()?;
        let collective = Mlp::new("psi", spec(w + m, &config.encoder_hidden, 2 * d * m))?;
        let decoders = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                Mlp::new(
                    format!("theta.{i}"),
                    spec(m * d + m, &config.decoder_hidden, a.encoded_width()),
                )
            })
            .collect::<Result<_>>()?;
        let mask_decoder = Mlp::new("eps", spec(m * d, &config.mask_decoder_hidden, m))?;
        Ok(Self {
            schema,
            config,
            attributive,
            collective,
            decoders,
            mask_decoder,
        })
    }

    /// Freshly initialized parameters, deterministic in `seed`.
    pub fn initialize(&self, seed: u64) -> ParameterStore {
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for mlp in self.mlps() {
            mlp.initialize(&mut store, &mut rng);
        }
        store
    }

    pub fn mlps(&self) -> impl Iterator<Item = &Mlp> {
        self.attributive
            .iter()
            .chain(std::iter::once(&self.collective))
            .chain(&self.decoders)
            .chain(std::iter::once(&self.mask_decoder))
    }

    pub fn attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn attributive_encoder(&self, i: usize) -> &Mlp {
        &self.attributive[i]
    }

    pub fn data_decoder(&self, i: usize) -> &Mlp {
        &self.decoders[i]
    }

    pub fn parameter_count(&self) -> usize {
        self.mlps().map(|m| m.spec.parameter_count()).sum()
    }

    fn check_width(&self, op: &'static str, got: &[usize], want: usize) -> Result<()> {
        if got.len() != 2 || got[1] != want {
            return Err(Error::Shape {
                op,
                lhs: got.to_vec(),
                rhs: vec![got.first().copied().unwrap_or(0), want],
            });
        }
        Ok(())
    }

    fn split_heads(tape: &mut Tape, out: Var, d: usize, heads: usize) -> Result<PosteriorVars> {
        let mut mean = Vec::with_capacity(heads);
        let mut log_variance = Vec::with_capacity(heads);
        for h in 0..heads {
            mean.push(tape.slice_cols(out, 2 * d * h, d)?);
            let lv = tape.slice_cols(out, 2 * d * h + d, d)?;
            log_variance.push(tape.clamp(lv, LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)?);
        }
        Ok(PosteriorVars { mean, log_variance })
    }

    /// `q_φ(z_i | x_i)` for every attribute, each from its own slice of `x`.
    pub fn encode_attributive_vars(&self, tape: &mut Tape, params: &Bound, x: Var) -> Result<PosteriorVars> {
        self.check_width("encode_attributive", tape.shape(x), self.schema.encoded_width())?;
        let d = self.latent_dim();
        let mut mean = Vec::new();
        let mut log_variance = Vec::new();
        for (i, mlp) in self.attributive.iter().enumerate() {
            let xi = tape.slice_cols(x, self.schema.offset(i), self.schema.attribute(i).encoded_width())?;
            let out = mlp.forward(tape, params, xi)?;
            let p = Self::split_heads(tape, out, d, 1)?;
            mean.push(p.mean[0]);
            log_variance.push(p.log_variance[0]);
        }
        Ok(PosteriorVars { mean, log_variance })
    }

    /// `q_ψ(z_i | x_o, m)` for every attribute from one shared trunk.
    pub fn encode_collective_vars(&self, tape: &mut Tape, params: &Bound, x: Var, mask: Var) -> Result<PosteriorVars> {
        self.check_width("encode_collective", tape.shape(x), self.schema.encoded_width())?;
        self.check_width("encode_collective", tape.shape(mask), self.attributes())?;
        let input = tape.concat(&[x, mask])?;
        let out = self.collective.forward(tape, params, input)?;
        Self::split_heads(tape, out, self.latent_dim(), self.attributes())
    }

    /// Routes per the variant: observed → attributive, unobserved → collective
    /// for the full model.
    pub fn select_vars(
        &self,
        tape: &mut Tape,
        mask: &MaskMatrix,
        attributive: &PosteriorVars,
        collective: &PosteriorVars,
    ) -> Result<PosteriorVars> {
        match self.config.variant {
            Variant::CollectiveOnly => return Ok(collective.clone()),
            Variant::AttributiveOnly => return Ok(attributive.clone()),
            _ => {}
        }
        let d = self.latent_dim();
        let mut mean = Vec::new();
        let mut log_variance = Vec::new();
        for i in 0..self.attributes() {
            let sel = tape.constant(Tensor::from_fn(mask.rows(), d, |r, _| mask.as_tensor().get(r, i)));
            mean.push(tape.select(sel, attributive.mean[i], collective.mean[i])?);
            log_variance.push(tape.select(sel, attributive.log_variance[i], collective.log_variance[i])?);
        }
        Ok(PosteriorVars { mean, log_variance })
    }

    pub fn decode_mask_var(&self, tape: &mut Tape, params: &Bound, z: Var) -> Result<Var> {
        self.check_width("decode_mask", tape.shape(z), self.attributes() * self.latent_dim())?;
        self.mask_decoder.forward(tape, params, z)
    }

    /// Decoder `i` on `[z_agg, condition]`.
    pub fn decode_attribute_var(&self, tape: &mut Tape, params: &Bound, i: usize, input: Var) -> Result<Var> {
        let m = self.attributes();
        self.check_width("decode_attribute", tape.shape(input), m * self.latent_dim() + m)?;
        self.decoders[i].forward(tape, params, input)
    }

    // Value-level counterparts; numerically identical to the tape versions.

    fn split_heads_value(out: &Tensor, d: usize, heads: usize) -> Vec<DiagGaussian> {
        (0..heads)
            .map(|h| DiagGaussian {
                mean: out.cols_range(2 * d * h, d),
                log_variance: out
                    .cols_range(2 * d * h + d, d)
                    .map(|v| v.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)),
            })
            .collect()
    }

    /// Attributive posterior of attribute `i` from its encoded slice `(n, w_i)`.
    pub fn encode_attributive(&self, store: &ParameterStore, i: usize, xi: &Tensor) -> Result<DiagGaussian> {
        self.check_width(
            "encode_attributive",
            xi.shape(),
            self.schema.attribute(i).encoded_width(),
        )?;
        let out = self.attributive[i].eval(store, xi)?;
        Ok(Self::split_heads_value(&out, self.latent_dim(), 1).remove(0))
    }

    pub fn encode_attributive_all(&self, store: &ParameterStore, x: &Tensor) -> Result<Vec<DiagGaussian>> {
        self.check_width("encode_attributive", x.shape(), self.schema.encoded_width())?;
        (0..self.attributes())
            .map(|i| {
                let xi = x.cols_range(self.schema.offset(i), self.schema.attribute(i).encoded_width());
                self.encode_attributive(store, i, &xi)
            })
            .collect()
    }

    pub fn encode_collective(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        mask: &MaskMatrix,
    ) -> Result<Vec<DiagGaussian>> {
        self.check_width("encode_collective", x.shape(), self.schema.encoded_width())?;
        self.check_width("encode_collective", mask.as_tensor().shape(), self.attributes())?;
        let input = Tensor::concat_cols(&[x, mask.as_tensor()])?;
        let out = self.collective.eval(store, &input)?;
        Ok(Self::split_heads_value(&out, self.latent_dim(), self.attributes()))
    }

    /// Selected proposals under the configured variant.
    pub fn proposals(&self, store: &ParameterStore, x: &Tensor, mask: &MaskMatrix) -> Result<LatentBundle> {
        let all = |dists: Vec<DiagGaussian>, src: Proposal| LatentBundle {
            sources: vec![vec![src; mask.rows()]; dists.len()],
            distributions: dists,
        };
        match self.config.variant {
            Variant::CollectiveOnly => Ok(all(self.encode_collective(store, x, mask)?, Proposal::Collective)),
            Variant::AttributiveOnly => Ok(all(self.encode_attributive_all(store, x)?, Proposal::Attributive)),
            _ => {
                let a = self.encode_attributive_all(store, x)?;
                let c = self.encode_collective(store, x, mask)?;
                select_proposals(mask, &a, &c)
            }
        }
    }

    pub fn decode_mask_logits(&self, store: &ParameterStore, z: &Tensor) -> Result<Tensor> {
        self.check_width("decode_mask", z.shape(), self.attributes() * self.latent_dim())?;
        self.mask_decoder.eval(store, z)
    }

    pub fn decode_mask_probabilities(&self, store: &ParameterStore, z: &Tensor) -> Result<Tensor> {
        Ok(self.decode_mask_logits(store, z)?.map(sigmoid))
    }

    /// Likelihood parameters of attribute `i`: a mean for numerical
    /// attributes, `k` logits for categorical ones.
    pub fn decode_attribute(&self, store: &ParameterStore, i: usize, z: &Tensor, condition: &Tensor) -> Result<Tensor> {
        let m = self.attributes();
        self.check_width("decode_attribute", z.shape(), m * self.latent_dim())?;
        self.check_width("decode_attribute", condition.shape(), m)?;
        let input = Tensor::concat_cols(&[z, condition])?;
        self.decoders[i].eval(store, &input)
    }

    /// Per-attribute data log-likelihood of the encoded `target` given `z`
    /// and the mask condition, summed over the rows where `cells` is 1.
    pub fn data_log_likelihood(
        &self,
        store: &ParameterStore,
        z: &Tensor,
        condition: &Tensor,
        target: &Tensor,
        cells: &Tensor,
    ) -> Result<Vec<f64>> {
        let inv_two_var = 1.0 / (2.0 * self.config.numerical_variance);
        (0..self.attributes())
            .map(|i| {
                let spec = self.schema.attribute(i);
                let (off, w) = (self.schema.offset(i), spec.encoded_width());
                let out = self.decode_attribute(store, i, z, condition)?;
                let t = target.cols_range(off, w);
                let mut total = 0.0;
                for r in 0..z.rows() {
                    if cells.get(r, i) == 0.0 {
                        continue;
                    }
                    let (o, t) = (out.row_slice(r), t.row_slice(r));
                    total -= if spec.is_numerical() {
                        (o[0] - t[0]).powi(2) * inv_two_var
                    } else {
                        let mut lp = o.to_vec();
                        crate::dist::log_softmax_in_place(&mut lp);
                        -lp.iter().zip(t).map(|(l, t)| l * t).sum::<f64>()
                    };
                }
                Ok(total)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSpec;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            AttributeSpec::numerical("a"),
            AttributeSpec::categorical("b", ["x", "y", "z", "w"]),
            AttributeSpec::numerical("c"),
        ])
        .unwrap()
    }

    fn small() -> VsaeConfig {
        VsaeConfig {
            latent_dim: 2,
            encoder_hidden: vec![5],
            decoder_hidden: vec![6],
            mask_decoder_hidden: vec![4],
            ..Default::default()
        }
    }

    #[test]
    fn every_parameter_in_exactly_one_group() {
        let net = VsaeNetwork::new(schema(), small()).unwrap();
        let store = net.initialize(1);
        assert_eq!(store.parameter_count(), net.parameter_count());
        for name in store.names() {
            assert!(ParameterGroup::of(name).is_some(), "{name}");
        }
        let count = |g| store.names().filter(|n| ParameterGroup::of(n) == Some(g)).count();
        assert_eq!(count(ParameterGroup::Attributive), 3 * 4);
        assert_eq!(count(ParameterGroup::DataDecoder), 3 * 4);
        assert_eq!(count(ParameterGroup::Collective), 4);
        assert_eq!(count(ParameterGroup::MaskDecoder), 4);
    }

    #[test]
    fn decoder_and_encoder_shapes() {
        let net = VsaeNetwork::new(schema(), small()).unwrap();
        let store = net.initialize(2);
        let z = Tensor::filled(3, 6, 0.1);
        let cond = Tensor::filled(3, 3, 0.5);
        assert_eq!(net.decode_attribute(&store, 0, &z, &cond).unwrap().shape(), &[3, 1]);
        assert_eq!(net.decode_attribute(&store, 1, &z, &cond).unwrap().shape(), &[3, 4]);
        assert_eq!(net.decode_mask_logits(&store, &z).unwrap().shape(), &[3, 3]);
        assert!(net.decode_mask_logits(&store, &Tensor::zeros(3, 5)).is_err());

        let g = net.encode_attributive(&store, 1, &Tensor::zeros(3, 4)).unwrap();
        assert_eq!((g.mean.shape(), g.log_variance.shape()), (&[3, 2][..], &[3, 2][..]));
        assert!(net.encode_attributive(&store, 1, &Tensor::zeros(3, 1)).is_err());
        let x = Tensor::from_fn(3, 6, |r, c| (r * c) as f64 * 0.1);
        let c = net.encode_collective(&store, &x, &MaskMatrix::ones(3, 3)).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c, net.encode_collective(&store, &x, &MaskMatrix::ones(3, 3)).unwrap());
    }

    #[test]
    fn aggregate_concatenates_in_order() {
        let z = aggregate(&[Tensor::row(vec![1.0, 2.0]), Tensor::row(vec![3.0, 4.0])]).unwrap();
        assert_eq!(z.values(), &[1.0, 2.0, 3.0, 4.0]);
        let swapped = aggregate(&[Tensor::row(vec![3.0, 4.0]), Tensor::row(vec![1.0, 2.0])]).unwrap();
        assert_eq!(swapped.values(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn selection_boundaries_and_mixed() {
        let g = |v: f64| DiagGaussian::new(Tensor::filled(1, 2, v), Tensor::filled(1, 2, -v)).unwrap();
        let a = vec![g(1.0), g(2.0), g(3.0)];
        let c = vec![g(-1.0), g(-2.0), g(-3.0)];
        let ones = select_proposals(&MaskMatrix::ones(1, 3), &a, &c).unwrap();
        assert_eq!(ones.distributions, a);
        let zeros = select_proposals(&MaskMatrix::zeros(1, 3), &a, &c).unwrap();
        assert_eq!(zeros.distributions, c);
        let mixed_mask = MaskMatrix::new(Tensor::row(vec![1.0, 0.0, 1.0])).unwrap();
        let mixed = select_proposals(&mixed_mask, &a, &c).unwrap();
        assert_eq!(mixed.distributions, vec![a[0].clone(), c[1].clone(), a[2].clone()]);
        assert_eq!(
            mixed.sources.iter().map(|s| s[0]).collect::<Vec<_>>(),
            vec![Proposal::Attributive, Proposal::Collective, Proposal::Attributive]
        );
        assert!(select_proposals(&mixed_mask, &a[..2], &c).is_err());
    }

    #[test]
    fn perturbing_one_encoder_or_decoder_leaves_others_unchanged() {
        let net = VsaeNetwork::new(schema(), small()).unwrap();
        let store = net.initialize(3);
        let x = Tensor::from_fn(2, 6, |r, c| (r + c) as f64 * 0.2);
        let z = Tensor::filled(2, 6, 0.3);
        let cond = Tensor::filled(2, 3, 0.5);
        let before_enc = net.encode_attributive_all(&store, &x).unwrap();
        let before_dec = net.decode_attribute(&store, 0, &z, &cond).unwrap();

        let mut perturbed = store.clone();
        for name in ["phi.2.l0.w", "theta.2.l0.w"] {
            perturbed.get_mut(name).unwrap().values_mut()[0] += 1.0;
        }
        let after_enc = net.encode_attributive_all(&perturbed, &x).unwrap();
        assert_eq!(before_enc[0], after_enc[0]);
        assert_eq!(before_enc[1], after_enc[1]);
        assert_ne!(before_enc[2], after_enc[2]);
        assert_eq!(before_dec, net.decode_attribute(&perturbed, 0, &z, &cond).unwrap());
        assert_ne!(
            net.decode_attribute(&store, 2, &z, &cond).unwrap(),
            net.decode_attribute(&perturbed, 2, &z, &cond).unwrap()
        );
    }

    #[test]
    fn tape_and_value_paths_agree() {
        let net = VsaeNetwork::new(schema(), small()).unwrap();
        let store = net.initialize(4);
        let x = Tensor::from_fn(3, 6, |r, c| ((r + 2 * c) % 5) as f64 * 0.3 - 0.4);
        let mask = MaskMatrix::new(Tensor::matrix(3, 3, vec![1., 0., 1., 0., 0., 1., 1., 1., 0.]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let mv = tape.constant(mask.as_tensor().clone());
        let a = net.encode_attributive_vars(&mut tape, &bound, xv).unwrap();
        let c = net.encode_collective_vars(&mut tape, &bound, xv, mv).unwrap();
        let s = net.select_vars(&mut tape, &mask, &a, &c).unwrap();
        let bundle = net.proposals(&store, &x, &mask).unwrap();
        for i in 0..3 {
            assert_eq!(tape.value(s.mean[i]), &bundle.distributions[i].mean);
            assert_eq!(tape.value(s.log_variance[i]), &bundle.distributions[i].log_variance);
        }
    }
}
