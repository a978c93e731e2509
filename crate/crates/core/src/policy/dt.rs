//! Decision Transformer forward pass and return-to-go context.
//!
//! The input sequence interleaves `(return-to-go, observation, action)`
//! tokens per timestep; the current step contributes its return-to-go and
//! observation plus a zero action placeholder. All three tokens of a timestep
//! receive the same row of the positional table. The output token aligned
//! with the last observation is normalized, decoded and tanh-squashed.

use std::collections::VecDeque;

use super::attention::{attend_row, layer_norm};
use super::weights::{DenseView, DtView};
use super::{ParameterVector, PolicyKind, PolicySpec};
use crate::error::{input, structure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub return_to_go: f64,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub timestep: usize,
}

/// Sliding window of the last `dt_context_len` timesteps. When non-empty,
/// the newest triplet is the current step and holds the zero placeholder
/// action until [`update_context`] records what was executed.
#[derive(Clone, Debug, PartialEq)]
pub struct DtContext {
    triplets: VecDeque<Triplet>,
    current_rtg: f64,
    timestep: usize,
    capacity: usize,
    act_dim: usize,
}

impl DtContext {
    /// Context with no history; the first forward call supplies the observation.
    pub fn empty(spec: &PolicySpec, rtg_target: f64) -> Self {
        Self {
            triplets: VecDeque::with_capacity(spec.dt_context_len + 1),
            current_rtg: rtg_target,
            timestep: 0,
            capacity: spec.dt_context_len,
            act_dim: spec.act_dim,
        }
    }

    /// Context at the first step of an episode.
    pub fn start(spec: &PolicySpec, rtg_target: f64, observation: &[f64]) -> Self {
        let mut ctx = Self::empty(spec, rtg_target);
        ctx.triplets.push_back(Triplet {
            return_to_go: rtg_target,
            observation: observation.to_vec(),
            action: vec![0.0; spec.act_dim],
            timestep: 0,
        });
        ctx
    }

    pub fn triplets(&self) -> impl ExactSizeIterator<Item = &Triplet> {
        self.triplets.iter()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn current_rtg(&self) -> f64 {
        self.current_rtg
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    /// Pushes a raw triplet; used to build arbitrary contexts in tests and
    /// for replaying logged trajectories.
    pub fn push_raw(&mut self, triplet: Triplet) {
        self.current_rtg = triplet.return_to_go;
        self.timestep = triplet.timestep;
        self.triplets.push_back(triplet);
        if self.triplets.len() > self.capacity {
            self.triplets.pop_front();
        }
    }
}

/// Records the executed action in the current triplet, then opens the next
/// step with return-to-go `current - reward` (scaled units).
pub fn update_context(ctx: &mut DtContext, executed_action: &[f64], reward: f64, next_obs: &[f64]) -> Result<()> {
    if !reward.is_finite() {
        return Err(input("reward is not finite"));
    }
    if executed_action.len() != ctx.act_dim {
        return Err(structure("action length differs from act_dim"));
    }
    if let Some(newest) = ctx.triplets.back_mut() {
        newest.action.copy_from_slice(executed_action);
    }
    let rtg = ctx.current_rtg - reward;
    ctx.timestep += 1;
    ctx.current_rtg = rtg;
    ctx.triplets.push_back(Triplet {
        return_to_go: rtg,
        observation: next_obs.to_vec(),
        action: vec![0.0; ctx.act_dim],
        timestep: ctx.timestep,
    });
    if ctx.triplets.len() > ctx.capacity {
        ctx.triplets.pop_front();
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    ReturnToGo,
    Observation,
    Action,
}

/// One input token split into its content embedding and positional offset.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenEmbedding {
    pub kind: TokenKind,
    pub timestep: usize,
    pub content: Vec<f64>,
    pub position: Vec<f64>,
}

/// Resolves the window the forward pass sees: history plus the current step.
fn sequence<'c>(
    spec: &PolicySpec,
    ctx: &'c DtContext,
    current_obs: &'c [f64],
) -> Result<Vec<(f64, &'c [f64], &'c [f64], usize)>> {
    if ctx.triplets.len() > spec.dt_context_len {
        return Err(structure(format!(
            "context holds {} timesteps, limit is {}",
            ctx.triplets.len(),
            spec.dt_context_len
        )));
    }
    if current_obs.len() != spec.obs_dim {
        return Err(structure("observation length differs from obs_dim"));
    }
    if current_obs.iter().any(|x| !x.is_finite()) {
        return Err(input("observation is not finite"));
    }
    let mut steps: Vec<(f64, &[f64], &[f64], usize)> = ctx
        .triplets
        .iter()
        .map(|t| (t.return_to_go, t.observation.as_slice(), t.action.as_slice(), t.timestep))
        .collect();
    match steps.last() {
        None => steps.push((ctx.current_rtg, current_obs, &[], ctx.timestep)),
        Some(&(_, obs, _, _)) if obs != current_obs => {
            return Err(input("current observation differs from the context's current step"));
        }
        Some(_) => {}
    }
    if let Some(&(.., t)) = steps.iter().find(|s| s.3 >= spec.dt_max_ep_len) {
        return Err(structure(format!("timestep {t} beyond positional table of {}", spec.dt_max_ep_len)));
    }
    Ok(steps)
}

/// Content embeddings and positional offsets of the full input sequence,
/// including the current step's action placeholder.
pub fn token_embeddings(
    spec: &PolicySpec,
    params: &ParameterVector,
    ctx: &DtContext,
    current_obs: &[f64],
) -> Result<Vec<TokenEmbedding>> {
    check_kind(spec)?;
    let view = DtView::parse(spec, params.as_slice())?;
    let d = spec.dt_embed_dim;
    let zero_action = vec![0.0; spec.act_dim];
    let steps = sequence(spec, ctx, current_obs)?;
    let last = steps.len() - 1;
    let mut tokens = Vec::with_capacity(3 * steps.len());
    for (i, &(rtg, obs, act, t)) in steps.iter().enumerate() {
        let position = view.positions[t * d..(t + 1) * d].to_vec();
        let act = if i == last { zero_action.as_slice() } else { act };
        let inputs: [(TokenKind, DenseView, &[f64]); 3] = [
            (TokenKind::ReturnToGo, view.embed_return, &[rtg]),
            (TokenKind::Observation, view.embed_obs, obs),
            (TokenKind::Action, view.embed_action, act),
        ];
        for (kind, layer, x) in inputs {
            let mut content = vec![0.0; d];
            layer.apply(x, &mut content);
            tokens.push(TokenEmbedding { kind, timestep: t, content, position: position.clone() });
        }
    }
    Ok(tokens)
}

fn check_kind(spec: &PolicySpec) -> Result<()> {
    if spec.kind != PolicyKind::DecisionTransformer {
        return Err(structure("transformer forward called with a non-DT spec"));
    }
    Ok(())
}

#[derive(Default)]
pub(crate) struct DtScratch {
    x: Vec<f64>,
    h: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    tmp: Vec<f64>,
    wide: Vec<f64>,
    scores: Vec<f64>,
}

/// Next action for the current step in `ctx`, each component in (-1, 1).
pub fn dt_forward(spec: &PolicySpec, params: &ParameterVector, ctx: &DtContext, current_obs: &[f64]) -> Result<Vec<f64>> {
    let mut action = vec![0.0; spec.act_dim];
    dt_forward_into(spec, params.as_slice(), ctx, current_obs, &mut DtScratch::default(), &mut action)?;
    Ok(action)
}

pub(crate) fn dt_forward_into(
    spec: &PolicySpec,
    params: &[f64],
    ctx: &DtContext,
    current_obs: &[f64],
    s: &mut DtScratch,
    action: &mut [f64],
) -> Result<()> {
    check_kind(spec)?;
    let view = DtView::parse(spec, params)?;
    let steps = sequence(spec, ctx, current_obs)?;
    let d = spec.dt_embed_dim;
    let heads = spec.dt_heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // The placeholder action token of the current step sits after the last
    // observation token, so causal masking hides it from every output we
    // decode; the sequence is cut just after that observation.
    let n = 3 * steps.len() - 1;
    s.x.resize(n * d, 0.0);
    let mut row = 0;
    for (i, &(rtg, obs, act, t)) in steps.iter().enumerate() {
        let pos = &view.positions[t * d..(t + 1) * d];
        view.embed_return.apply(&[rtg], &mut s.x[row * d..(row + 1) * d]);
        row += 1;
        view.embed_obs.apply(obs, &mut s.x[row * d..(row + 1) * d]);
        row += 1;
        if i + 1 < steps.len() {
            view.embed_action.apply(act, &mut s.x[row * d..(row + 1) * d]);
            row += 1;
        }
        for r in row - if i + 1 < steps.len() { 3 } else { 2 }..row {
            for (xv, p) in s.x[r * d..(r + 1) * d].iter_mut().zip(pos) {
                *xv += p;
            }
        }
    }
    debug_assert_eq!(row, n);

    s.h.resize(n * d, 0.0);
    s.k.resize(n * d, 0.0);
    s.v.resize(n * d, 0.0);
    s.q.resize(n * d, 0.0);
    s.att.resize(n * d, 0.0);
    s.tmp.resize(d, 0.0);
    s.wide.resize(4 * d, 0.0);
    let last_layer = view.blocks.len() - 1;
    for (li, block) in view.blocks.iter().enumerate() {
        // Only the final observation token matters after the last layer.
        let first_query = if li == last_layer { n - 1 } else { 0 };
        for r in 0..n {
            let xr = &s.x[r * d..(r + 1) * d];
            let hr = &mut s.h[r * d..(r + 1) * d];
            layer_norm(xr, block.attn_norm.gain, block.attn_norm.bias, hr);
            block.key.apply(hr, &mut s.k[r * d..(r + 1) * d]);
            block.value.apply(hr, &mut s.v[r * d..(r + 1) * d]);
        }
        for r in first_query..n {
            block.query.apply(&s.h[r * d..(r + 1) * d], &mut s.q[r * d..(r + 1) * d]);
            for hd in 0..heads {
                let off = hd * dh;
                attend_row(
                    &s.q[r * d + off..r * d + off + dh],
                    &s.k,
                    &s.v,
                    d,
                    off,
                    r + 1,
                    scale,
                    &mut s.scores,
                    &mut s.att[r * d + off..r * d + off + dh],
                );
            }
        }
        for r in first_query..n {
            block.out.apply(&s.att[r * d..(r + 1) * d], &mut s.tmp);
            for (xv, o) in s.x[r * d..(r + 1) * d].iter_mut().zip(&s.tmp) {
                *xv += o;
            }
            layer_norm(&s.x[r * d..(r + 1) * d], block.ff_norm.gain, block.ff_norm.bias, &mut s.tmp);
            block.ff_in.apply(&s.tmp, &mut s.wide);
            s.wide.iter_mut().for_each(|w| *w = w.tanh());
            block.ff_out.apply(&s.wide, &mut s.tmp);
            for (xv, o) in s.x[r * d..(r + 1) * d].iter_mut().zip(&s.tmp) {
                *xv += o;
            }
        }
    }
    let last = &s.x[(n - 1) * d..n * d];
    layer_norm(last, view.final_norm.gain, view.final_norm.bias, &mut s.tmp);
    view.decoder.apply(&s.tmp, action);
    action.iter_mut().for_each(|a| *a = a.tanh());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{init_params, param_count};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> PolicySpec {
        PolicySpec { dt_max_ep_len: 20, ..PolicySpec::desk_dt(4, 2) }
    }

    #[test]
    fn rtg_recursion() {
        let spec = spec();
        let mut ctx = DtContext::start(&spec, 7.0, &[0.0; 4]);
        update_context(&mut ctx, &[0.1, 0.2], 0.5, &[1.0; 4]).unwrap();
        assert_eq!(ctx.current_rtg(), 6.5);
        assert_eq!(ctx.triplets().next().unwrap().action, vec![0.1, 0.2]);
        update_context(&mut ctx, &[0.0, 0.0], 0.0, &[1.0; 4]).unwrap();
        assert_eq!(ctx.current_rtg(), 6.5);
        assert_eq!(ctx.timestep(), 2);
    }

    #[test]
    fn window_evicts_oldest() {
        let spec = PolicySpec { dt_context_len: 2, ..spec() };
        let mut ctx = DtContext::start(&spec, 1.0, &[0.0; 4]);
        for i in 0..3 {
            update_context(&mut ctx, &[0.0, 0.0], 0.1, &[i as f64; 4]).unwrap();
            assert!(ctx.len() <= 2);
        }
        assert_eq!(ctx.len(), 2);
        assert_eq!(ctx.triplets().next().unwrap().timestep, 2);
    }

    #[test]
    fn zero_network_zero_action() {
        let spec = spec();
        let p = ParameterVector::zeros(param_count(&spec));
        let ctx = DtContext::empty(&spec, 7.0);
        assert_eq!(dt_forward(&spec, &p, &ctx, &[0.5; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_and_bounded() {
        let spec = spec();
        let p = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut ctx = DtContext::start(&spec, 7.0, &[0.1, 0.2, 0.3, 0.4]);
        update_context(&mut ctx, &[0.3, -0.3], 0.2, &[0.2, 0.2, 0.2, 0.2]).unwrap();
        let a = dt_forward(&spec, &p, &ctx, &[0.2; 4]).unwrap();
        let b = dt_forward(&spec, &p, &ctx, &[0.2; 4]).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.abs() < 1.0));
    }

    #[test]
    fn oversized_context_rejected() {
        let spec = PolicySpec { dt_context_len: 3, ..spec() };
        let mut ctx = DtContext::start(&PolicySpec { dt_context_len: 5, ..spec.clone() }, 1.0, &[0.0; 4]);
        for _ in 0..4 {
            update_context(&mut ctx, &[0.0, 0.0], 0.0, &[0.0; 4]).unwrap();
        }
        let p = ParameterVector::zeros(param_count(&spec));
        assert!(matches!(dt_forward(&spec, &p, &ctx, &[0.0; 4]), Err(crate::Error::Structure(_))));
    }

    #[test]
    fn mismatched_current_observation_rejected() {
        let spec = spec();
        let p = ParameterVector::zeros(param_count(&spec));
        let ctx = DtContext::start(&spec, 1.0, &[0.0; 4]);
        assert!(dt_forward(&spec, &p, &ctx, &[1.0; 4]).is_err());
    }

    #[test]
    fn tokens_of_a_timestep_share_one_positional_row() {
        let spec = spec();
        let p = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut ctx = DtContext::start(&spec, 7.0, &[0.0; 4]);
        update_context(&mut ctx, &[0.5, 0.5], 0.1, &[0.1; 4]).unwrap();
        let tokens = token_embeddings(&spec, &p, &ctx, &[0.1; 4]).unwrap();
        assert_eq!(tokens.len(), 6);
        let d = spec.dt_embed_dim;
        let crate::policy::PolicyWeights::Dt(w) = crate::policy::devectorize(&spec, &p).unwrap() else {
            panic!()
        };
        for group in tokens.chunks(3) {
            let t = group[0].timestep;
            for tok in group {
                assert_eq!(tok.timestep, t);
                assert_eq!(tok.position, w.positions[t * d..(t + 1) * d]);
            }
        }
    }
}
