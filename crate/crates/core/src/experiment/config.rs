use std::path::{Path, PathBuf};

use crate::env::EnvKind;
use crate::error::{validation, Error, Result};
use crate::kv::KvMap;
use crate::novelty::{Algorithm, DEFAULT_K, DEFAULT_METAPOP};
use crate::policy::{PolicyKind, PolicySpec};

pub const DEFAULT_SIGMA: f64 = 0.05;
pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.005;
pub const DEFAULT_POP_PAIRS: usize = 100;
pub const DT_POP_FACTOR: usize = 4;
pub const PRETRAINED_STEP: f64 = 0.01;
pub const DEFAULT_ITERATIONS: u64 = 200;
pub const DEFAULT_RTG_TARGET: f64 = 0.008;
pub const DEFAULT_NOISE_SEED: u64 = 0x5eed_7ab1e;
pub const DEFAULT_EVAL_EPISODES: usize = 10;

/// Run configuration as written in a config file. Fields left `None` take
/// defaults that may depend on other fields; see [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub policy: PolicyKind,
    pub env: EnvKind,
    pub iterations: u64,
    pub pop_pairs: Option<usize>,
    pub sigma: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: f64,
    pub k: usize,
    pub metapop_size: usize,
    pub nsr_weight: f64,
    pub rtg_target: f64,
    pub seed: u64,
    pub workers: usize,
    pub pretrained: Option<PathBuf>,
    pub normalize_obs: Option<bool>,
    pub archive_import: Option<PathBuf>,
    pub mlp_hidden: Vec<usize>,
    pub dt_embed_dim: Option<usize>,
    pub dt_heads: Option<usize>,
    pub dt_layers: Option<usize>,
    pub dt_context_len: Option<usize>,
    pub eval_episodes: usize,
    pub noise_seed: u64,
    pub noise_len: usize,
    pub checkpoint_every: u64,
    pub stop_on_success: bool,
    pub deadline_secs: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::NsrEs,
            policy: PolicyKind::Mlp,
            env: EnvKind::DeceptiveMaze,
            iterations: DEFAULT_ITERATIONS,
            pop_pairs: None,
            sigma: None,
            lr: None,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            k: DEFAULT_K,
            metapop_size: DEFAULT_METAPOP,
            nsr_weight: 0.5,
            rtg_target: DEFAULT_RTG_TARGET,
            seed: 0,
            workers: 1,
            pretrained: None,
            normalize_obs: None,
            archive_import: None,
            mlp_hidden: vec![16, 16],
            dt_embed_dim: None,
            dt_heads: None,
            dt_layers: None,
            dt_context_len: None,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            noise_seed: DEFAULT_NOISE_SEED,
            noise_len: crate::es::DEFAULT_NOISE_LEN,
            checkpoint_every: 10,
            stop_on_success: false,
            deadline_secs: 60.0,
        }
    }
}

/// Effective settings after defaults and overrides are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub pop_pairs: usize,
    pub sigma: f64,
    pub lr: f64,
    pub normalize_obs: bool,
    pub metapop_size: usize,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(validation(format!("`{key}` expects true or false, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let d = Self::default();
        let bool_key = |kv: &mut KvMap, key: &str| -> Result<Option<bool>> {
            kv.take_string(key).map(|v| parse_bool(key, &v)).transpose()
        };
        let cfg = Self {
            algorithm: kv.take_string("algorithm").map(|s| s.parse()).transpose()?.unwrap_or(d.algorithm),
            policy: kv.take_string("policy").map(|s| s.parse()).transpose()?.unwrap_or(d.policy),
            env: kv.take_string("env").map(|s| s.parse()).transpose()?.unwrap_or(d.env),
            iterations: kv.take("iterations")?.unwrap_or(d.iterations),
            pop_pairs: kv.take("pop_pairs")?,
            sigma: kv.take("sigma")?,
            lr: kv.take("lr")?,
            weight_decay: kv.take("weight_decay")?.unwrap_or(d.weight_decay),
            k: kv.take("k")?.unwrap_or(d.k),
            metapop_size: kv.take("metapop_size")?.unwrap_or(d.metapop_size),
            nsr_weight: kv.take("nsr_weight")?.unwrap_or(d.nsr_weight),
            rtg_target: kv.take("rtg_target")?.unwrap_or(d.rtg_target),
            seed: kv.take("seed")?.unwrap_or(d.seed),
            workers: kv.take("workers")?.unwrap_or(d.workers),
            pretrained: kv.take_string("pretrained").filter(|s| !s.is_empty()).map(PathBuf::from),
            normalize_obs: bool_key(&mut kv, "normalize_obs")?,
            archive_import: kv.take_string("archive_import").filter(|s| !s.is_empty()).map(PathBuf::from),
            mlp_hidden: kv.take_list("mlp_hidden")?.unwrap_or(d.mlp_hidden),
            dt_embed_dim: kv.take("dt_embed_dim")?,
            dt_heads: kv.take("dt_heads")?,
            dt_layers: kv.take("dt_layers")?,
            dt_context_len: kv.take("dt_context_len")?,
            eval_episodes: kv.take("eval_episodes")?.unwrap_or(d.eval_episodes),
            noise_seed: kv.take("noise_seed")?.unwrap_or(d.noise_seed),
            noise_len: kv.take("noise_len")?.unwrap_or(d.noise_len),
            checkpoint_every: kv.take("checkpoint_every")?.unwrap_or(d.checkpoint_every),
            stop_on_success: bool_key(&mut kv, "stop_on_success")?.unwrap_or(d.stop_on_success),
            deadline_secs: kv.take("deadline_secs")?.unwrap_or(d.deadline_secs),
        };
        kv.finish("run config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Writes every field, with unset optional fields omitted.
    pub fn to_text(&self) -> String {
        let mut kv = KvMap::new();
        kv.set("algorithm", self.algorithm);
        kv.set("policy", self.policy);
        kv.set("env", self.env);
        kv.set("iterations", self.iterations);
        kv.set("weight_decay", self.weight_decay);
        kv.set("k", self.k);
        kv.set("metapop_size", self.metapop_size);
        kv.set("nsr_weight", self.nsr_weight);
        kv.set("rtg_target", self.rtg_target);
        kv.set("seed", self.seed);
        kv.set("workers", self.workers);
        kv.set("mlp_hidden", crate::kv::join_list(&self.mlp_hidden));
        kv.set("eval_episodes", self.eval_episodes);
        kv.set("noise_seed", self.noise_seed);
        kv.set("noise_len", self.noise_len);
        kv.set("checkpoint_every", self.checkpoint_every);
        kv.set("stop_on_success", self.stop_on_success);
        kv.set("deadline_secs", self.deadline_secs);
        let opt = |kv: &mut KvMap, key: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(key, v);
            }
        };
        opt(&mut kv, "pop_pairs", self.pop_pairs.map(|v| v.to_string()));
        opt(&mut kv, "sigma", self.sigma.map(|v| v.to_string()));
        opt(&mut kv, "lr", self.lr.map(|v| v.to_string()));
        opt(&mut kv, "normalize_obs", self.normalize_obs.map(|v| v.to_string()));
        opt(&mut kv, "pretrained", self.pretrained.as_ref().map(|p| p.display().to_string()));
        opt(&mut kv, "archive_import", self.archive_import.as_ref().map(|p| p.display().to_string()));
        opt(&mut kv, "dt_embed_dim", self.dt_embed_dim.map(|v| v.to_string()));
        opt(&mut kv, "dt_heads", self.dt_heads.map(|v| v.to_string()));
        opt(&mut kv, "dt_layers", self.dt_layers.map(|v| v.to_string()));
        opt(&mut kv, "dt_context_len", self.dt_context_len.map(|v| v.to_string()));
        kv.render()
    }

    pub fn policy_spec(&self) -> Result<PolicySpec> {
        let (obs, act) = (crate::env::OBS_DIM, crate::env::ACT_DIM);
        let spec = match self.policy {
            PolicyKind::Mlp => PolicySpec::mlp(obs, &self.mlp_hidden, act),
            PolicyKind::DecisionTransformer => {
                let base = PolicySpec::desk_dt(obs, act);
                PolicySpec {
                    dt_embed_dim: self.dt_embed_dim.unwrap_or(base.dt_embed_dim),
                    dt_heads: self.dt_heads.unwrap_or(base.dt_heads),
                    dt_layers: self.dt_layers.unwrap_or(base.dt_layers),
                    dt_context_len: self.dt_context_len.unwrap_or(base.dt_context_len),
                    ..base
                }
            }
        };
        spec.validate().map_err(|e| validation(e.to_string()))?;
        Ok(spec)
    }

    /// Applies the dependent defaults and rejects inconsistent settings.
    ///
    /// ES runs a single mean. A DT run quadruples the default population. A
    /// pretrained start forces `sigma = lr = 0.01` and disables observation
    /// normalization; setting any of them to something else is an error.
    pub fn resolve(&self) -> Result<Resolved> {
        let v = |msg: &str| Err(Error::Validation(msg.to_string()));
        if self.iterations == 0 {
            return v("iterations must be >= 1");
        }
        if self.pop_pairs == Some(0) {
            return v("pop_pairs must be >= 1");
        }
        if self.k == 0 || self.metapop_size == 0 || self.workers == 0 || self.eval_episodes == 0 {
            return v("k, metapop_size, workers and eval_episodes must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.nsr_weight) {
            return v("nsr_weight must lie in [0, 1]");
        }
        if !(self.weight_decay.is_finite() && (0.0..1.0).contains(&self.weight_decay)) {
            return v("weight_decay must lie in [0, 1)");
        }
        if !self.rtg_target.is_finite() || !(self.deadline_secs.is_finite() && self.deadline_secs > 0.0) {
            return v("rtg_target and deadline_secs must be finite");
        }
        for (name, value) in [("sigma", self.sigma), ("lr", self.lr)] {
            if value.is_some_and(|x| !(x.is_finite() && x > 0.0)) {
                return Err(validation(format!("{name} must be positive")));
            }
        }
        self.policy_spec()?;
        let factor = if self.policy == PolicyKind::DecisionTransformer { DT_POP_FACTOR } else { 1 };
        let pop_pairs = self.pop_pairs.unwrap_or(DEFAULT_POP_PAIRS * factor);
        let metapop_size = if self.algorithm.uses_metapopulation() { self.metapop_size } else { 1 };
        if self.pretrained.is_some() {
            for (name, value) in [("sigma", self.sigma), ("lr", self.lr)] {
                if value.is_some_and(|x| x != PRETRAINED_STEP) {
                    return Err(validation(format!("{name} is fixed to {PRETRAINED_STEP} for pretrained runs")));
                }
            }
            if self.normalize_obs == Some(true) {
                return v("observation normalization is disabled for pretrained runs");
            }
            return Ok(Resolved { pop_pairs, sigma: PRETRAINED_STEP, lr: PRETRAINED_STEP, normalize_obs: false, metapop_size });
        }
        Ok(Resolved {
            pop_pairs,
            sigma: self.sigma.unwrap_or(DEFAULT_SIGMA),
            lr: self.lr.unwrap_or(DEFAULT_LR),
            normalize_obs: self.normalize_obs.unwrap_or(true),
            metapop_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::from_text("").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.resolve().unwrap();
        assert_eq!((r.pop_pairs, r.sigma, r.lr, r.metapop_size), (100, 0.05, 0.01, 5));
        let text = "algorithm = ns-es\npolicy = dt\nsigma = 0.02\nseed = 9\narchive_import = /tmp/a.txt\n";
        let c = RunConfig::from_text(text).unwrap();
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn dependent_defaults() {
        let es = RunConfig::from_text("algorithm = es\nmetapop_size = 5").unwrap();
        assert_eq!(es.resolve().unwrap().metapop_size, 1);
        let dt = RunConfig::from_text("policy = dt").unwrap();
        assert_eq!(dt.resolve().unwrap().pop_pairs, 400);
        let dt = RunConfig::from_text("policy = dt\npop_pairs = 30").unwrap();
        assert_eq!(dt.resolve().unwrap().pop_pairs, 30);
    }

    #[test]
    fn pretrained_rules() {
        let p = RunConfig::from_text("policy = dt\npretrained = x.ckpt").unwrap().resolve().unwrap();
        assert_eq!((p.sigma, p.lr, p.normalize_obs), (0.01, 0.01, false));
        for bad in ["sigma = 0.05", "lr = 0.02", "normalize_obs = true"] {
            let e = RunConfig::from_text(&format!("pretrained = x.ckpt\n{bad}")).unwrap().resolve().unwrap_err();
            assert!(matches!(e, Error::Validation(_)), "{bad}");
        }
        assert!(RunConfig::from_text("pretrained = x.ckpt\nsigma = 0.01\nnormalize_obs = false").unwrap().resolve().is_ok());
    }

    #[test]
    fn rejections() {
        assert!(matches!(RunConfig::from_text("bogus = 1"), Err(Error::Validation(_))));
        assert!(RunConfig::from_text("pop_pairs = 0").unwrap().resolve().is_err());
        assert!(RunConfig::from_text("nsr_weight = 2").unwrap().resolve().is_err());
        assert!(RunConfig::from_text("algorithm = ga").is_err());
        assert!(RunConfig::from_text("normalize_obs = maybe").is_err());
    }
}
