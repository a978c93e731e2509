//! Policy architectures and the flat genome they are evolved as.
//!
//! A [`PolicySpec`] fixes a bijection between structured network weights
//! ([`PolicyWeights`]) and a [`ParameterVector`]. The layout is normative:
//!
//! * dense layers are stored weights first (row-major, one row per output
//!   unit), then biases;
//! * layer norms store gains, then biases;
//! * an MLP stores its layers input to output;
//! * a Decision Transformer stores the return, observation and action
//!   embeddings, then the positional table (`dt_max_ep_len` rows of
//!   `dt_embed_dim`), then for each layer the attention half (norm, query,
//!   key, value, output projection) followed by the feed-forward half (norm,
//!   expansion, contraction), and finally the decoder (final norm, linear
//!   head).

mod attention;
pub mod checkpoint;
mod dt;
mod mlp;
mod weights;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

pub use attention::{attention, layer_norm};
pub use dt::{dt_forward, token_embeddings, update_context, DtContext, TokenEmbedding, TokenKind, Triplet};
pub use mlp::mlp_forward;
pub use weights::{devectorize, vectorize, Dense, DtBlock, DtWeights, LayerNorm, MlpWeights, PolicyWeights};

use crate::error::{input, structure, validation, Result};
use crate::es::ObsNormalizer;
use crate::kv::{join_list, KvMap};

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Mlp,
    DecisionTransformer,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Mlp => "mlp",
            PolicyKind::DecisionTransformer => "dt",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" | "ff" => Ok(PolicyKind::Mlp),
            "dt" | "decision-transformer" => Ok(PolicyKind::DecisionTransformer),
            _ => Err(validation(format!("unknown policy kind `{s}`"))),
        }
    }
}

/// Architecture description. Hidden activations are tanh and outputs are
/// tanh-squashed for every kind.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub mlp_hidden: Vec<usize>,
    pub dt_embed_dim: usize,
    pub dt_heads: usize,
    pub dt_layers: usize,
    pub dt_context_len: usize,
    pub dt_max_ep_len: usize,
}

impl PolicySpec {
    pub fn mlp(obs_dim: usize, hidden: &[usize], act_dim: usize) -> Self {
        Self {
            kind: PolicyKind::Mlp,
            obs_dim,
            act_dim,
            mlp_hidden: hidden.to_vec(),
            ..Self::desk_dt(obs_dim, act_dim)
        }
    }

    /// The small transformer used for the maze experiments.
    pub fn desk_dt(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            kind: PolicyKind::DecisionTransformer,
            obs_dim,
            act_dim,
            mlp_hidden: Vec::new(),
            dt_embed_dim: 16,
            dt_heads: 1,
            dt_layers: 1,
            dt_context_len: 5,
            dt_max_ep_len: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("obs_dim", self.obs_dim),
            ("act_dim", self.act_dim),
            ("dt_embed_dim", self.dt_embed_dim),
            ("dt_heads", self.dt_heads),
            ("dt_layers", self.dt_layers),
            ("dt_context_len", self.dt_context_len),
            ("dt_max_ep_len", self.dt_max_ep_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(validation(format!("{name} must be >= 1")));
            }
        }
        if self.mlp_hidden.contains(&0) {
            return Err(validation("mlp_hidden widths must be >= 1"));
        }
        if !self.dt_embed_dim.is_multiple_of(self.dt_heads) {
            return Err(validation("dt_embed_dim must be divisible by dt_heads"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }

    pub(crate) fn write_kv(&self, kv: &mut KvMap) {
        kv.set("kind", self.kind);
        kv.set("obs_dim", self.obs_dim);
        kv.set("act_dim", self.act_dim);
        kv.set("mlp_hidden", join_list(&self.mlp_hidden));
        kv.set("dt_embed_dim", self.dt_embed_dim);
        kv.set("dt_heads", self.dt_heads);
        kv.set("dt_layers", self.dt_layers);
        kv.set("dt_context_len", self.dt_context_len);
        kv.set("dt_max_ep_len", self.dt_max_ep_len);
        kv.set("activation", "tanh");
    }

    /// Reads the spec keys out of `kv`, leaving any others in place.
    pub(crate) fn take_kv(kv: &mut KvMap) -> Result<Self> {
        let kind: PolicyKind = kv.take_required("kind")?;
        let obs_dim = kv.take_required("obs_dim")?;
        let act_dim = kv.take_required("act_dim")?;
        let base = Self::desk_dt(obs_dim, act_dim);
        let spec = Self {
            kind,
            obs_dim,
            act_dim,
            mlp_hidden: kv.take_list("mlp_hidden")?.unwrap_or_default(),
            dt_embed_dim: kv.take("dt_embed_dim")?.unwrap_or(base.dt_embed_dim),
            dt_heads: kv.take("dt_heads")?.unwrap_or(base.dt_heads),
            dt_layers: kv.take("dt_layers")?.unwrap_or(base.dt_layers),
            dt_context_len: kv.take("dt_context_len")?.unwrap_or(base.dt_context_len),
            dt_max_ep_len: kv.take("dt_max_ep_len")?.unwrap_or(base.dt_max_ep_len),
        };
        if let Some(act) = kv.take_string("activation") {
            if act != "tanh" {
                return Err(validation(format!("unsupported activation `{act}`")));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvMap::new();
        self.write_kv(&mut kv);
        kv.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let spec = Self::take_kv(&mut kv)?;
        kv.finish("policy spec")?;
        Ok(spec)
    }
}

/// Number of genome entries for `spec`.
pub fn param_count(spec: &PolicySpec) -> usize {
    let dense = |i: usize, o: usize| i * o + o;
    match spec.kind {
        PolicyKind::Mlp => {
            let mut widths = vec![spec.obs_dim];
            widths.extend(&spec.mlp_hidden);
            widths.push(spec.act_dim);
            widths.windows(2).map(|w| dense(w[0], w[1])).sum()
        }
        PolicyKind::DecisionTransformer => {
            let d = spec.dt_embed_dim;
            let embeddings = dense(1, d) + dense(spec.obs_dim, d) + dense(spec.act_dim, d);
            let positions = spec.dt_max_ep_len * d;
            let block = 2 * d + 4 * dense(d, d) + 2 * d + dense(d, 4 * d) + dense(4 * d, d);
            embeddings + positions + spec.dt_layers * block + 2 * d + dense(d, spec.act_dim)
        }
    }
}

/// Flat genome. Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(input(format!("parameter {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Checks the genome against `spec`.
    pub fn check(&self, spec: &PolicySpec) -> Result<()> {
        let want = param_count(spec);
        if self.len() != want {
            return Err(structure(format!(
                "parameter vector has {} entries, spec needs {want}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Random initial genome: dense weights ~ N(0, 1/fan_in), biases zero, norm
/// gains one, positional rows ~ N(0, 0.1²).
pub fn init_params<R: Rng>(spec: &PolicySpec, rng: &mut R) -> Result<ParameterVector> {
    spec.validate()?;
    let mut dense = |inputs: usize, outputs: usize| {
        let scale = 1.0 / (inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            bias: vec![0.0; outputs],
        }
    };
    let weights = match spec.kind {
        PolicyKind::Mlp => {
            let mut widths = vec![spec.obs_dim];
            widths.extend(&spec.mlp_hidden);
            widths.push(spec.act_dim);
            PolicyWeights::Mlp(MlpWeights {
                layers: widths.windows(2).map(|w| dense(w[0], w[1])).collect(),
            })
        }
        PolicyKind::DecisionTransformer => {
            let d = spec.dt_embed_dim;
            let embed_return = dense(1, d);
            let embed_obs = dense(spec.obs_dim, d);
            let embed_action = dense(spec.act_dim, d);
            let blocks = (0..spec.dt_layers)
                .map(|_| DtBlock {
                    attn_norm: LayerNorm::identity(d),
                    query: dense(d, d),
                    key: dense(d, d),
                    value: dense(d, d),
                    out: dense(d, d),
                    ff_norm: LayerNorm::identity(d),
                    ff_in: dense(d, 4 * d),
                    ff_out: dense(4 * d, d),
                })
                .collect();
            let decoder = dense(d, spec.act_dim);
            let positions = (0..spec.dt_max_ep_len * d)
                .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            PolicyWeights::Dt(DtWeights {
                embed_return,
                embed_obs,
                embed_action,
                positions,
                blocks,
                final_norm: LayerNorm::identity(d),
                decoder,
            })
        }
    };
    vectorize(spec, &weights)
}

/// A genome bound to its architecture and optional observation normalizer.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub spec: PolicySpec,
    pub params: ParameterVector,
    pub normalizer: Option<ObsNormalizer>,
}

impl Policy {
    pub fn new(spec: PolicySpec, params: ParameterVector, normalizer: Option<ObsNormalizer>) -> Result<Self> {
        spec.validate()?;
        params.check(&spec)?;
        if let Some(n) = &normalizer {
            if n.dim() != spec.obs_dim {
                return Err(structure("normalizer dimension differs from obs_dim"));
            }
        }
        Ok(Self { spec, params, normalizer })
    }

    /// Per-episode stateful evaluator borrowing this policy.
    pub fn actor(&self) -> Actor<'_> {
        Actor::new(&self.spec, self.params.as_slice(), self.normalizer.as_ref())
    }
}

/// Runs one policy through an episode, keeping the Decision Transformer
/// context when there is one.
pub struct Actor<'a> {
    spec: &'a PolicySpec,
    params: &'a [f64],
    normalizer: Option<&'a ObsNormalizer>,
    obs_buf: Vec<f64>,
    mlp: mlp::MlpScratch,
    dt: Option<(DtContext, dt::DtScratch)>,
}

impl<'a> Actor<'a> {
    pub fn new(spec: &'a PolicySpec, params: &'a [f64], normalizer: Option<&'a ObsNormalizer>) -> Self {
        let dt = (spec.kind == PolicyKind::DecisionTransformer)
            .then(|| (DtContext::empty(spec, 0.0), dt::DtScratch::default()));
        Self {
            spec,
            params,
            normalizer,
            obs_buf: vec![0.0; spec.obs_dim],
            mlp: mlp::MlpScratch::default(),
            dt,
        }
    }

    fn normalized<'b>(obs_buf: &'b mut Vec<f64>, normalizer: Option<&ObsNormalizer>, obs: &[f64]) -> Result<&'b [f64]> {
        obs_buf.clear();
        obs_buf.extend_from_slice(obs);
        if let Some(n) = normalizer {
            n.apply_in_place(obs_buf)?;
        }
        Ok(obs_buf)
    }

    /// Starts an episode from `obs` with the given target return (scaled units).
    pub fn begin(&mut self, obs: &[f64], rtg_target: f64) -> Result<()> {
        if obs.len() != self.spec.obs_dim {
            return Err(structure("observation length differs from obs_dim"));
        }
        if let Some((ctx, _)) = &mut self.dt {
            let o = Self::normalized(&mut self.obs_buf, self.normalizer, obs)?;
            *ctx = DtContext::start(self.spec, rtg_target, o);
        }
        Ok(())
    }

    pub fn act(&mut self, obs: &[f64], action: &mut [f64]) -> Result<()> {
        let o = Self::normalized(&mut self.obs_buf, self.normalizer, obs)?;
        match &mut self.dt {
            None => mlp::mlp_forward_into(self.spec, self.params, o, &mut self.mlp, action),
            Some((ctx, scratch)) => dt::dt_forward_into(self.spec, self.params, ctx, o, scratch, action),
        }
    }

    /// Feeds back the executed action and its reward (scaled units).
    pub fn record(&mut self, action: &[f64], scaled_reward: f64, next_obs: &[f64]) -> Result<()> {
        if let Some((ctx, _)) = &mut self.dt {
            let o = Self::normalized(&mut self.obs_buf, self.normalizer, next_obs)?;
            update_context(ctx, action, scaled_reward, o)?;
        }
        Ok(())
    }

    pub fn context(&self) -> Option<&DtContext> {
        self.dt.as_ref().map(|(c, _)| c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_counts() {
        assert_eq!(param_count(&PolicySpec::mlp(2, &[4], 3)), 27);
        assert_eq!(param_count(&PolicySpec::mlp(2, &[], 3)), 9);
    }

    #[test]
    fn desk_dt_count_matches_layout() {
        let spec = PolicySpec::desk_dt(4, 2);
        // embeddings 32+80+48, positions 200*16, block 3280, final norm 32, decoder 34
        assert_eq!(param_count(&spec), 160 + 3200 + 3280 + 32 + 34);
        let v = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(v.len(), param_count(&spec));
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = PolicySpec::mlp(4, &[16, 8], 2);
        assert_eq!(PolicySpec::from_text(&spec.to_text()).unwrap(), spec);
        let dt = PolicySpec::desk_dt(4, 2);
        assert_eq!(PolicySpec::from_text(&dt.to_text()).unwrap(), dt);
        assert!(PolicySpec::from_text("kind = mlp\nobs_dim = 4\nact_dim = 2\nbogus = 1").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = PolicySpec::desk_dt(4, 2);
        spec.dt_heads = 3;
        assert!(spec.validate().is_err());
        let mut spec = PolicySpec::mlp(4, &[8], 2);
        spec.obs_dim = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn non_finite_genome_rejected() {
        assert!(ParameterVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![0.0, 1.0]).is_ok());
    }
}
