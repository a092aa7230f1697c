//! Toy pixel-observation environments: `grid-catch` (single sparse reward per
//! episode) and `mini-pong` (repeated volleys), with binary pixel rendering
//! and 4-frame stacking.
//!
//! Pixels are emitted directly in `[0, 1]` (0 background, 1 object/paddle),
//! so perturbation budgets on normalized observations apply as-is.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "grid-catch")]
    GridCatch,
    #[serde(rename = "mini-pong")]
    MiniPong,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::GridCatch => "grid-catch",
            EnvKind::MiniPong => "mini-pong",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grid-catch" => Ok(EnvKind::GridCatch),
            "mini-pong" => Ok(EnvKind::MiniPong),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub grid_height: usize,
    pub grid_width: usize,
    pub action_count: usize,
    pub max_episode_steps: u32,
    pub frame_stack: usize,
}

impl EnvSpec {
    pub fn grid_catch() -> Self {
        Self {
            kind: EnvKind::GridCatch,
            grid_height: 10,
            grid_width: 10,
            action_count: 3,
            // The object reaches the bottom row in exactly height-1 steps.
            max_episode_steps: 9,
            frame_stack: 4,
        }
    }

    pub fn mini_pong() -> Self {
        Self {
            kind: EnvKind::MiniPong,
            grid_height: 10,
            grid_width: 10,
            action_count: 3,
            max_episode_steps: 200,
            frame_stack: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_height < 3 || self.grid_width < 2 {
            return Err(Error::RejectedInput("grid too small".into()));
        }
        if self.frame_stack < 1 {
            return Err(Error::RejectedInput("frame_stack must be >= 1".into()));
        }
        if self.max_episode_steps < 1 {
            return Err(Error::RejectedInput("max_episode_steps must be >= 1".into()));
        }
        match self.kind {
            // action_count 1 is the frozen-paddle variant used as an oracle.
            EnvKind::GridCatch => {
                if self.action_count != 3 && self.action_count != 1 {
                    return Err(Error::RejectedInput(
                        "grid-catch supports action_count 1 (stay) or 3 (left/stay/right)".into(),
                    ));
                }
            }
            EnvKind::MiniPong => {
                if self.action_count != 3 {
                    return Err(Error::RejectedInput(
                        "mini-pong requires action_count 3 (up/stay/down)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.grid_height * self.grid_width
    }

    pub fn observation_len(&self) -> usize {
        self.frame_stack * self.frame_len()
    }
}

/// Stacked pixel frames, flattened oldest-first; every entry lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// One stored interaction `(s, a, r, s', done)`.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_state: Observation,
    pub terminal: bool,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
enum Dynamics {
    Catch { obj_row: usize, obj_col: usize, paddle_col: usize },
    Pong { ball_r: i32, ball_c: i32, dr: i32, dc: i32, paddle_r: i32 },
}

/// A running environment instance: spec, hidden state, frame stack, and its
/// own rng stream (single owner per episode sequence).
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    rng: RngStream,
    dynamics: Dynamics,
    frames: VecDeque<Vec<f64>>,
    steps: u32,
    terminal: bool,
    started: bool,
}

impl Env {
    pub fn new(spec: EnvSpec, rng: RngStream) -> Result<Self> {
        spec.validate()?;
        let dynamics = match spec.kind {
            EnvKind::GridCatch => Dynamics::Catch { obj_row: 0, obj_col: 0, paddle_col: 0 },
            EnvKind::MiniPong => Dynamics::Pong { ball_r: 0, ball_c: 1, dr: 1, dc: -1, paddle_r: 0 },
        };
        Ok(Self { spec, rng, dynamics, frames: VecDeque::new(), steps: 0, terminal: true, started: false })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Starts a fresh episode; the first rendered frame is replicated across
    /// the whole stack.
    pub fn reset(&mut self) -> Observation {
        self.dynamics = match self.spec.kind {
            EnvKind::GridCatch => {
                let obj_col = self.rng.below(self.spec.grid_width);
                let paddle_col = self.rng.below(self.spec.grid_width);
                Dynamics::Catch { obj_row: 0, obj_col, paddle_col }
            }
            EnvKind::MiniPong => {
                let ball_r = self.rng.below(self.spec.grid_height) as i32;
                let dr = if self.rng.below(2) == 0 { -1 } else { 1 };
                let paddle_r = self.rng.below(self.spec.grid_height) as i32;
                // The ball starts near the left wall moving away from the
                // paddle, so every spawn is returnable by an optimal paddle.
                Dynamics::Pong { ball_r, ball_c: 1, dr, dc: -1, paddle_r }
            }
        };
        self.steps = 0;
        self.terminal = false;
        self.started = true;
        let frame = self.render();
        self.frames.clear();
        for _ in 0..self.spec.frame_stack {
            self.frames.push_back(frame.clone());
        }
        self.observation()
    }

    /// Advances one step. Stepping a finished (or never-reset) episode is a
    /// protocol violation.
    pub fn step(&mut self, action: usize) -> Result<Step> {
        if !self.started || self.terminal {
            return Err(Error::ProtocolViolation("step on a terminal episode".into()));
        }
        if action >= self.spec.action_count {
            return Err(Error::RejectedInput(format!(
                "action {action} out of range for {} actions",
                self.spec.action_count
            )));
        }
        let reward;
        match &mut self.dynamics {
            Dynamics::Catch { obj_row, obj_col, paddle_col } => {
                let delta = catch_action_delta(self.spec.action_count, action);
                let (next, r, done) = catch_transition(
                    self.spec.grid_height,
                    self.spec.grid_width,
                    (*obj_row, *obj_col, *paddle_col),
                    delta,
                );
                (*obj_row, *obj_col, *paddle_col) = next;
                reward = r;
                self.terminal = done;
            }
            Dynamics::Pong { ball_r, ball_c, dr, dc, paddle_r } => {
                let delta = pong_action_delta(action);
                let (next, r, done) = pong_transition(
                    self.spec.grid_height as i32,
                    self.spec.grid_width as i32,
                    (*ball_r, *ball_c, *dr, *dc, *paddle_r),
                    delta,
                );
                (*ball_r, *ball_c, *dr, *dc, *paddle_r) = next;
                reward = r;
                self.terminal = done;
            }
        }
        self.steps += 1;
        if self.steps >= self.spec.max_episode_steps {
            self.terminal = true;
        }
        let frame = self.render();
        self.frames.pop_front();
        self.frames.push_back(frame);
        Ok(Step { observation: self.observation(), reward, terminal: self.terminal })
    }

    fn render(&self) -> Vec<f64> {
        let w = self.spec.grid_width;
        let h = self.spec.grid_height;
        let mut frame = vec![0.0; h * w];
        match &self.dynamics {
            Dynamics::Catch { obj_row, obj_col, paddle_col } => {
                frame[obj_row * w + obj_col] = 1.0;
                frame[(h - 1) * w + paddle_col] = 1.0;
            }
            Dynamics::Pong { ball_r, ball_c, paddle_r, .. } => {
                frame[*ball_r as usize * w + *ball_c as usize] = 1.0;
                frame[*paddle_r as usize * w + (w - 1)] = 1.0;
            }
        }
        frame
    }

    fn observation(&self) -> Observation {
        let mut values = Vec::with_capacity(self.spec.observation_len());
        for frame in &self.frames {
            values.extend_from_slice(frame);
        }
        Observation(values)
    }
}

fn catch_action_delta(action_count: usize, action: usize) -> i32 {
    if action_count == 1 {
        0
    } else {
        action as i32 - 1
    }
}

fn pong_action_delta(action: usize) -> i32 {
    action as i32 - 1
}

/// Pure grid-catch transition: paddle moves, then the object falls one row.
/// Reaching the bottom row ends the episode with +1 on a catch, -1 otherwise.
fn catch_transition(
    height: usize,
    width: usize,
    (obj_row, obj_col, paddle_col): (usize, usize, usize),
    paddle_delta: i32,
) -> ((usize, usize, usize), f64, bool) {
    let paddle_col = (paddle_col as i32 + paddle_delta).clamp(0, width as i32 - 1) as usize;
    let obj_row = obj_row + 1;
    if obj_row == height - 1 {
        let reward = if obj_col == paddle_col { 1.0 } else { -1.0 };
        ((obj_row, obj_col, paddle_col), reward, true)
    } else {
        ((obj_row, obj_col, paddle_col), 0.0, false)
    }
}

/// Pure mini-pong transition: paddle moves, the ball advances with reflection
/// off the top/bottom/left walls. Reaching the paddle column scores +1 and
/// reflects on a volley, or ends the episode with -1 on a miss.
fn pong_transition(
    height: i32,
    width: i32,
    (ball_r, ball_c, dr, dc, paddle_r): (i32, i32, i32, i32, i32),
    paddle_delta: i32,
) -> ((i32, i32, i32, i32, i32), f64, bool) {
    let paddle_r = (paddle_r + paddle_delta).clamp(0, height - 1);
    let mut r = ball_r + dr;
    let mut dr = dr;
    if r < 0 {
        r = -r;
        dr = -dr;
    } else if r > height - 1 {
        r = 2 * (height - 1) - r;
        dr = -dr;
    }
    let mut c = ball_c + dc;
    let mut dc = dc;
    if c < 0 {
        c = -c;
        dc = -dc;
    }
    if c == width - 1 {
        if r == paddle_r {
            ((r, c, dr, -1, paddle_r), 1.0, false)
        } else {
            ((r, c, dr, dc, paddle_r), -1.0, true)
        }
    } else {
        ((r, c, dr, dc, paddle_r), 0.0, false)
    }
}

/// Expected undiscounted return of the optimal policy, averaged over the
/// uniform spawn distribution.
///
/// grid-catch is evaluated by enumerating every (object, paddle) spawn pair
/// under the move-toward-object policy (optimal: it minimizes the remaining
/// distance every step). mini-pong is solved exactly by backward induction
/// over its deterministic state space.
pub fn optimal_return(spec: &EnvSpec) -> Result<f64> {
    // A zero-step budget cannot collect reward. Defined here even though a
    // running environment requires max_episode_steps >= 1.
    if spec.max_episode_steps == 0 {
        return Ok(0.0);
    }
    spec.validate().map_err(|e| Error::NotAvailable(format!("unsupported spec: {e}")))?;
    match spec.kind {
        EnvKind::GridCatch => {
            let w = spec.grid_width;
            let mut total = 0.0;
            for obj_col in 0..w {
                for paddle_start in 0..w {
                    total += catch_rollout_return(spec, obj_col, paddle_start);
                }
            }
            Ok(total / (w * w) as f64)
        }
        EnvKind::MiniPong => {
            let h = spec.grid_height as i32;
            let mut total = 0.0;
            let mut count = 0usize;
            let mut dp = PongDp::new(spec);
            for ball_r in 0..h {
                for dr in [-1, 1] {
                    for paddle_r in 0..h {
                        total += dp.value((ball_r, 1, dr, -1, paddle_r), spec.max_episode_steps);
                        count += 1;
                    }
                }
            }
            Ok(total / count as f64)
        }
    }
}

fn catch_rollout_return(spec: &EnvSpec, obj_col: usize, paddle_start: usize) -> f64 {
    let mut state = (0usize, obj_col, paddle_start);
    loop {
        let delta = if spec.action_count == 1 {
            0
        } else {
            (obj_col as i32 - state.2 as i32).signum()
        };
        let (next, reward, done) =
            catch_transition(spec.grid_height, spec.grid_width, state, delta);
        if done {
            return reward;
        }
        state = next;
    }
}

/// Memoized backward induction over mini-pong states.
struct PongDp {
    height: i32,
    width: i32,
    // indexed by [steps_remaining][state]; NaN marks unvisited
    table: Vec<Vec<f64>>,
}

impl PongDp {
    fn new(spec: &EnvSpec) -> Self {
        let h = spec.grid_height as i32;
        let w = spec.grid_width as i32;
        let states = (h * w * 2 * 2 * h) as usize;
        Self {
            height: h,
            width: w,
            table: vec![vec![f64::NAN; states]; spec.max_episode_steps as usize + 1],
        }
    }

    fn index(&self, (ball_r, ball_c, dr, dc, paddle_r): (i32, i32, i32, i32, i32)) -> usize {
        let dr01 = if dr > 0 { 1 } else { 0 };
        let dc01 = if dc > 0 { 1 } else { 0 };
        ((((ball_r * self.width + ball_c) * 2 + dr01) * 2 + dc01) * self.height + paddle_r)
            as usize
    }

    fn value(&mut self, state: (i32, i32, i32, i32, i32), steps_left: u32) -> f64 {
        if steps_left == 0 {
            return 0.0;
        }
        let idx = self.index(state);
        let cached = self.table[steps_left as usize][idx];
        if !cached.is_nan() {
            return cached;
        }
        let mut best = f64::NEG_INFINITY;
        for delta in [-1, 0, 1] {
            let (next, reward, done) = pong_transition(self.height, self.width, state, delta);
            let v = if done { reward } else { reward + self.value(next, steps_left - 1) };
            if v > best {
                best = v;
            }
        }
        self.table[steps_left as usize][idx] = best;
        best
    }
}
