//! Desk-scale 2-D navigation environments whose behavior characteristic is
//! the agent's final position.
//!
//! The deceptive maze: arena `[0,10]^2`, start `(1,5)`, goal `(9,5)` with
//! radius 0.5, and a wall on `x = 5` for `y in [2,10]`. Heading straight for
//! the goal runs into the wall; the only way through is the gap below
//! `y = 2`.

mod episode;
pub mod geometry;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use episode::{
    evaluate, random_observations, run_episode, run_episode_traced, trajectory_text, Controller, Scripted, EpisodeResult, EvalSummary,
    TrajectoryStep,
};
pub use geometry::{segments_intersect, Point, Segment};

use crate::error::{input, validation, Error, Result};

pub const OBS_DIM: usize = 4;
pub const ACT_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    DeceptiveMaze,
    OpenField,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::DeceptiveMaze => "deceptive-maze",
            EnvKind::OpenField => "open-field",
        })
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deceptive-maze" | "maze" | "deceptivemaze" => Ok(EnvKind::DeceptiveMaze),
            "open-field" | "openfield" | "open" => Ok(EnvKind::OpenField),
            other => Err(validation(format!("unknown environment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub arena: [Point; 2],
    pub walls: Vec<Segment>,
    pub start: Point,
    pub goal: Point,
    pub goal_radius: f64,
    pub max_steps: usize,
    pub step_scale: f64,
    pub reward_scale: f64,
    pub start_jitter: f64,
}

impl EnvSpec {
    pub fn deceptive_maze() -> Self {
        Self {
            kind: EnvKind::DeceptiveMaze,
            arena: [[0.0, 0.0], [10.0, 10.0]],
            walls: vec![Segment::new([5.0, 2.0], [5.0, 10.0])],
            start: [1.0, 5.0],
            goal: [9.0, 5.0],
            goal_radius: 0.5,
            max_steps: 200,
            step_scale: 0.5,
            reward_scale: 1000.0,
            start_jitter: 0.05,
        }
    }

    pub fn open_field() -> Self {
        Self { kind: EnvKind::OpenField, walls: Vec::new(), ..Self::deceptive_maze() }
    }

    pub fn for_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::DeceptiveMaze => Self::deceptive_maze(),
            EnvKind::OpenField => Self::open_field(),
        }
    }

    pub fn id(&self) -> String {
        self.kind.to_string()
    }

    pub fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    pub fn act_dim(&self) -> usize {
        ACT_DIM
    }

    fn size(&self) -> f64 {
        (self.arena[1][0] - self.arena[0][0]).max(self.arena[1][1] - self.arena[0][1])
    }

    pub fn inside(&self, p: Point) -> bool {
        (self.arena[0][0]..=self.arena[1][0]).contains(&p[0]) && (self.arena[0][1]..=self.arena[1][1]).contains(&p[1])
    }

    fn on_wall(&self, p: Point) -> bool {
        self.walls.iter().any(|w| w.contains(p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(input("max_steps must be >= 1"));
        }
        let reals = [self.goal_radius, self.step_scale, self.reward_scale, self.start_jitter];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) || self.step_scale == 0.0 || self.reward_scale == 0.0 {
            return Err(input("environment scales must be finite and positive"));
        }
        if !(self.arena[0][0] < self.arena[1][0] && self.arena[0][1] < self.arena[1][1]) {
            return Err(input("arena must have positive extent"));
        }
        for p in [self.start, self.goal] {
            if !self.inside(p) || self.on_wall(p) {
                return Err(input("start and goal must lie inside the arena and off the walls"));
            }
        }
        Ok(())
    }

    /// `(x, y, gx - x, gy - y)` divided by the arena size.
    pub fn observe(&self, p: Point) -> [f64; OBS_DIM] {
        let s = self.size();
        [p[0] / s, p[1] / s, (self.goal[0] - p[0]) / s, (self.goal[1] - p[1]) / s]
    }

    pub fn goal_distance(&self, p: Point) -> f64 {
        geometry::distance(p, self.goal)
    }

    pub fn reached(&self, p: Point) -> bool {
        self.goal_distance(p) <= self.goal_radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub pos: Point,
    pub steps: usize,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: [f64; OBS_DIM],
    /// Unscaled progress toward the goal.
    pub reward: f64,
    pub done: bool,
}

/// Places the agent at the start, jittered uniformly within a disc of radius
/// `start_jitter` drawn from `seed`.
pub fn reset(spec: &EnvSpec, seed: u64) -> Result<(EnvState, [f64; OBS_DIM])> {
    spec.validate()?;
    let mut pos = spec.start;
    if spec.start_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = spec.start_jitter * rng.random::<f64>().sqrt();
        let angle = std::f64::consts::TAU * rng.random::<f64>();
        let cand = [pos[0] + r * angle.cos(), pos[1] + r * angle.sin()];
        if spec.inside(cand) && !spec.on_wall(cand) {
            pos = cand;
        }
    }
    Ok((EnvState { pos, steps: 0, done: false }, spec.observe(pos)))
}

/// Moves by `step_scale * clamp(action)`. A move whose path touches a wall or
/// ends outside the arena is cancelled.
pub fn step(spec: &EnvSpec, state: &mut EnvState, action: &[f64]) -> Result<StepOutcome> {
    if action.len() != ACT_DIM {
        return Err(input(format!("action must have {ACT_DIM} components")));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(input("action is not finite"));
    }
    if state.done {
        return Err(input("episode already finished"));
    }
    let before = spec.goal_distance(state.pos);
    let ax = action[0].clamp(-1.0, 1.0);
    let ay = action[1].clamp(-1.0, 1.0);
    let proposed = [state.pos[0] + spec.step_scale * ax, state.pos[1] + spec.step_scale * ay];
    let path = Segment::new(state.pos, proposed);
    if spec.inside(proposed) && !spec.walls.iter().any(|w| segments_intersect(path, *w)) {
        state.pos = proposed;
    }
    state.steps += 1;
    let after = spec.goal_distance(state.pos);
    state.done = after <= spec.goal_radius || state.steps >= spec.max_steps;
    Ok(StepOutcome { obs: spec.observe(state.pos), reward: before - after, done: state.done })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still() -> EnvSpec {
        EnvSpec { start_jitter: 0.0, ..EnvSpec::deceptive_maze() }
    }

    #[test]
    fn reset_is_deterministic_and_bounded() {
        let spec = EnvSpec::deceptive_maze();
        assert_eq!(reset(&spec, 9).unwrap(), reset(&spec, 9).unwrap());
        let (s, obs) = reset(&still(), 3).unwrap();
        assert_eq!(s.pos, [1.0, 5.0]);
        assert_eq!(obs, [0.1, 0.5, 0.8, 0.0]);
        for seed in 0..10_000 {
            let (s, obs) = reset(&spec, seed).unwrap();
            assert!(obs.iter().all(|o| (-1.0..=1.0).contains(o)));
            assert!(geometry::distance(s.pos, spec.start) <= 0.05 + 1e-15);
        }
    }

    #[test]
    fn zero_action_and_straight_progress() {
        let spec = EnvSpec { start_jitter: 0.0, ..EnvSpec::open_field() };
        let (mut s, _) = reset(&spec, 0).unwrap();
        let out = step(&spec, &mut s, &[0.0, 0.0]).unwrap();
        assert_eq!(s.pos, [1.0, 5.0]);
        assert_eq!(out.reward, 0.0);
        let out = step(&spec, &mut s, &[1.0, 0.0]).unwrap();
        assert_eq!(out.reward, spec.step_scale);
        let out = step(&spec, &mut s, &[7.0, 0.0]).unwrap();
        assert_eq!(out.reward, spec.step_scale);
        assert!(step(&spec, &mut s, &[f64::NAN, 0.0]).is_err());
    }

    /// Crossing test specialised to the vertical wall `x = 5, y in [2, 10]`.
    fn crosses_wall(p: Point, q: Point) -> bool {
        if (p[0] - 5.0) * (q[0] - 5.0) > 0.0 {
            return false;
        }
        if p[0] == q[0] {
            return p[1].max(q[1]) >= 2.0 && p[1].min(q[1]) <= 10.0;
        }
        let t = (5.0 - p[0]) / (q[0] - p[0]);
        let y = p[1] + t * (q[1] - p[1]);
        (2.0..=10.0).contains(&y)
    }

    #[test]
    fn wall_blocks_crossing_moves() {
        let spec = still();
        let mut hits = 0;
        for i in 0..400 {
            let x = 4.0 + (i % 20) as f64 * 0.1;
            let y = 1.0 + (i / 20) as f64 * 0.45;
            let s = EnvState { pos: [x, y], steps: 0, done: false };
            if spec.on_wall(s.pos) {
                continue;
            }
            for a in [[1.0, 0.0], [-1.0, 0.0], [0.7, -0.7], [0.6, 0.9]] {
                let mut t = s;
                step(&spec, &mut t, &a).unwrap();
                let proposed = [x + 0.5 * a[0], y + 0.5 * a[1]];
                if crosses_wall([x, y], proposed) {
                    hits += 1;
                    assert_eq!(t.pos, [x, y]);
                } else {
                    assert_eq!(t.pos, proposed);
                }
            }
        }
        assert!(hits > 50);
        let mut s = EnvState { pos: [4.8, 5.0], steps: 0, done: false };
        step(&spec, &mut s, &[1.0, 0.0]).unwrap();
        assert_eq!(s.pos, [4.8, 5.0]);
    }

    #[test]
    fn leaving_the_arena_is_cancelled() {
        let spec = still();
        let mut s = EnvState { pos: [0.2, 5.0], steps: 0, done: false };
        step(&spec, &mut s, &[-1.0, 0.0]).unwrap();
        assert_eq!(s.pos, [0.2, 5.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(EnvSpec { max_steps: 0, ..EnvSpec::deceptive_maze() }.validate().is_err());
        assert!(EnvSpec { start: [5.0, 5.0], ..EnvSpec::deceptive_maze() }.validate().is_err());
        assert!(EnvSpec { goal: [11.0, 5.0], ..EnvSpec::deceptive_maze() }.validate().is_err());
        assert_eq!("maze".parse::<EnvKind>().unwrap(), EnvKind::DeceptiveMaze);
        assert_eq!(EnvSpec::open_field().id().parse::<EnvKind>().unwrap(), EnvKind::OpenField);
    }
}
