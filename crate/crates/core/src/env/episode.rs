use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{distance, Point};
use super::{reset, step, EnvSpec, ACT_DIM, OBS_DIM};
use crate::error::{input, structure, Result};
use crate::novelty::BehaviorCharacteristic;
use crate::policy::Actor;
use crate::rng;

/// Anything that picks actions from observations over an episode.
pub trait Controller {
    fn begin(&mut self, obs: &[f64], rtg_target: f64) -> Result<()>;
    fn act(&mut self, obs: &[f64], action: &mut [f64]) -> Result<()>;
    /// Executed action and its reward in scaled units, plus the next observation.
    fn record(&mut self, _action: &[f64], _scaled_reward: f64, _next_obs: &[f64]) -> Result<()> {
        Ok(())
    }
}

impl Controller for Actor<'_> {
    fn begin(&mut self, obs: &[f64], rtg_target: f64) -> Result<()> {
        Actor::begin(self, obs, rtg_target)
    }

    fn act(&mut self, obs: &[f64], action: &mut [f64]) -> Result<()> {
        Actor::act(self, obs, action)
    }

    fn record(&mut self, action: &[f64], scaled_reward: f64, next_obs: &[f64]) -> Result<()> {
        Actor::record(self, action, scaled_reward, next_obs)
    }
}

/// Stateless scripted controller.
pub struct Scripted<F>(pub F);

impl<F: FnMut(&[f64], &mut [f64])> Controller for Scripted<F> {
    fn begin(&mut self, _obs: &[f64], _rtg_target: f64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &[f64], action: &mut [f64]) -> Result<()> {
        (self.0)(obs, action);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeResult {
    /// Sum of rewards divided by the reward scale.
    pub ret: f64,
    pub steps: usize,
    pub bc: BehaviorCharacteristic,
    pub distance_traveled: f64,
    pub reached: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub reward: f64,
}

/// One `t x y reward` line per step.
pub fn trajectory_text(steps: &[TrajectoryStep]) -> String {
    steps.iter().map(|s| format!("{} {} {} {}\n", s.t, s.x, s.y, s.reward)).collect()
}

pub fn run_episode(controller: &mut dyn Controller, spec: &EnvSpec, seed: u64, rtg_target: f64) -> Result<EpisodeResult> {
    run_episode_traced(controller, spec, seed, rtg_target, None)
}

/// As [`run_episode`], optionally appending every step to `trace`.
pub fn run_episode_traced(
    controller: &mut dyn Controller,
    spec: &EnvSpec,
    seed: u64,
    rtg_target: f64,
    mut trace: Option<&mut Vec<TrajectoryStep>>,
) -> Result<EpisodeResult> {
    let (mut state, mut obs) = reset(spec, seed)?;
    let start: Point = state.pos;
    controller.begin(&obs, rtg_target)?;
    let mut action = [0.0; ACT_DIM];
    let mut total = 0.0;
    loop {
        controller.act(&obs, &mut action)?;
        let out = step(spec, &mut state, &action)?;
        total += out.reward;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TrajectoryStep { t: state.steps, x: state.pos[0], y: state.pos[1], reward: out.reward });
        }
        // the closing transition is recorded too, so the context's
        // return-to-go accounts for every reward
        controller.record(&action, out.reward / spec.reward_scale, &out.obs)?;
        if out.done {
            break;
        }
        obs = out.obs;
    }
    Ok(EpisodeResult {
        ret: total / spec.reward_scale,
        steps: state.steps,
        bc: BehaviorCharacteristic { x: state.pos[0], y: state.pos[1] },
        distance_traveled: distance(state.pos, start),
        reached: spec.reached(state.pos),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub mean_steps: f64,
    pub mean_distance: f64,
    pub mean_bc: BehaviorCharacteristic,
    pub reach_rate: f64,
    pub episodes: Vec<EpisodeResult>,
}

impl EvalSummary {
    pub fn from_episodes(episodes: Vec<EpisodeResult>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(input("evaluation needs at least one episode"));
        }
        let n = episodes.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| episodes.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mean_return: mean(&|e| e.ret),
            mean_steps: mean(&|e| e.steps as f64),
            mean_distance: mean(&|e| e.distance_traveled),
            mean_bc: BehaviorCharacteristic { x: mean(&|e| e.bc.x), y: mean(&|e| e.bc.y) },
            reach_rate: mean(&|e| f64::from(u8::from(e.reached))),
            episodes,
        })
    }
}

/// One episode per seed, averaged.
pub fn evaluate(controller: &mut dyn Controller, spec: &EnvSpec, seeds: &[u64], rtg_target: f64) -> Result<EvalSummary> {
    let episodes = seeds
        .iter()
        .map(|&s| run_episode(controller, spec, s, rtg_target))
        .collect::<Result<Vec<_>>>()?;
    EvalSummary::from_episodes(episodes)
}

/// Observations visited by a uniformly random policy, for fitting a
/// normalizer.
pub fn random_observations(spec: &EnvSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(structure("need at least one observation"));
    }
    let mut out = Vec::with_capacity(count);
    let mut rng = rng::stream(&[rng::tag::NORMALIZER, seed]);
    let mut episode = 0u64;
    while out.len() < count {
        let ep_seed = rng::derive_seed(&[rng::tag::NORMALIZER, seed, episode]);
        let (mut state, obs) = reset(spec, ep_seed)?;
        out.push(obs.to_vec());
        let mut act_rng = ChaCha8Rng::seed_from_u64(rng.random());
        while out.len() < count {
            let a = [act_rng.random_range(-1.0..=1.0), act_rng.random_range(-1.0..=1.0)];
            let o = step(spec, &mut state, &a)?;
            out.push(o.obs.to_vec());
            if o.done {
                break;
            }
        }
        episode += 1;
    }
    debug_assert!(out.iter().all(|o| o.len() == OBS_DIM));
    Ok(out)
}
