//! Grid Pong with a scripted expert, recorded as observation/action pairs.
//!
//! The paddle sits on column 0 and spans `paddle_len` rows. The ball moves
//! one cell per step along both axes and bounces off the top, bottom and far
//! walls. Reaching column 0 is an approach: a hit if the paddle covers the
//! ball's row, otherwise a miss that ends the episode.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use super::{Dataset, DatasetError, Dims, Episode};
use crate::rng::{derive_seed, SeededRng};

pub const GENERATOR: &str = "pong";
pub const N_OBS: usize = 5;
pub const N_ACTIONS: usize = 3;

/// Paddle move. One-hot index is `delta + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Toward row 0.
    Decrease,
    Stay,
    Increase,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Decrease, Action::Stay, Action::Increase];

    pub fn delta(self) -> i64 {
        self.index() as i64 - 1
    }

    pub fn index(self) -> usize {
        match self {
            Action::Decrease => 0,
            Action::Stay => 1,
            Action::Increase => 2,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; N_ACTIONS];
        v[self.index()] = 1.0;
        v
    }

    /// Highest score wins; ties go to the lowest index.
    pub fn argmax(scores: &[f64]) -> Action {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().take(N_ACTIONS) {
            if s > scores[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub paddle_len: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { width: 16, height: 12, paddle_len: 3 }
    }
}

impl Grid {
    pub fn check(&self) -> Result<(), DatasetError> {
        if self.width < 8 || self.height < 8 {
            return Err(DatasetError::Config(format!(
                "grid {}x{} smaller than 8x8",
                self.width, self.height
            )));
        }
        if self.paddle_len == 0 || self.paddle_len >= self.height {
            return Err(DatasetError::Config(format!(
                "paddle_len {} must be in [1, {})",
                self.paddle_len, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Flying,
    Hit,
    Miss,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PongEnv {
    grid: Grid,
    pub ball: (i64, i64),
    pub vel: (i64, i64),
    /// Row of the paddle's top cell.
    pub paddle: i64,
    pub hits: usize,
    pub approaches: usize,
    pub steps: usize,
    pub done: bool,
}

impl PongEnv {
    /// Ball somewhere in the far half with a random diagonal heading,
    /// paddle centered.
    pub fn reset(grid: Grid, rng: &mut SeededRng) -> Self {
        let (w, h) = (grid.width as i64, grid.height as i64);
        let bx = rng.range_inclusive(grid.width / 2, grid.width - 2) as i64;
        let by = rng.below(h as u64) as i64;
        let vx = if rng.bernoulli(0.5) { 1 } else { -1 };
        let vy = if rng.bernoulli(0.5) { 1 } else { -1 };
        debug_assert!(bx > 0 && bx < w);
        Self {
            grid,
            ball: (bx, by),
            vel: (vx, vy),
            paddle: (h - grid.paddle_len as i64) / 2,
            hits: 0,
            approaches: 0,
            steps: 0,
            done: false,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn paddle_center(&self) -> f64 {
        self.paddle as f64 + (self.grid.paddle_len as f64 - 1.0) / 2.0
    }

    pub fn covers(&self, row: i64) -> bool {
        row >= self.paddle && row < self.paddle + self.grid.paddle_len as i64
    }

    /// `[ball x, ball y, vel x, vel y, paddle center]`, each in `[-1, 1]`.
    pub fn observe(&self) -> [f64; N_OBS] {
        let sx = (self.grid.width - 1) as f64;
        let sy = (self.grid.height - 1) as f64;
        [
            2.0 * self.ball.0 as f64 / sx - 1.0,
            2.0 * self.ball.1 as f64 / sy - 1.0,
            self.vel.0 as f64,
            self.vel.1 as f64,
            2.0 * self.paddle_center() / sy - 1.0,
        ]
    }

    /// Move toward the ball's current row; stay when level with it.
    pub fn expert_action(&self) -> Action {
        let c = self.paddle_center();
        let by = self.ball.1 as f64;
        if by < c {
            Action::Decrease
        } else if by > c {
            Action::Increase
        } else {
            Action::Stay
        }
    }

    /// Paddle moves first, then the ball.
    pub fn step(&mut self, action: Action) -> Outcome {
        assert!(!self.done, "step after episode end");
        let top = (self.grid.height - self.grid.paddle_len) as i64;
        self.paddle = (self.paddle + action.delta()).clamp(0, top);

        let (w, h) = (self.grid.width as i64, self.grid.height as i64);
        let (mut x, mut y) = (self.ball.0 + self.vel.0, self.ball.1 + self.vel.1);
        if y < 0 || y > h - 1 {
            self.vel.1 = -self.vel.1;
            y = self.ball.1 + self.vel.1;
        }
        if x > w - 1 {
            self.vel.0 = -self.vel.0;
            x = self.ball.0 + self.vel.0;
        }
        self.ball = (x, y);
        self.steps += 1;
        if x > 0 {
            return Outcome::Flying;
        }
        self.approaches += 1;
        if self.covers(y) {
            self.hits += 1;
            self.vel.0 = 1;
            Outcome::Hit
        } else {
            self.done = true;
            Outcome::Miss
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PongConfig {
    pub episodes: usize,
    pub seed: u64,
    pub grid: Grid,
    pub max_steps: usize,
    pub expert_noise_p: f64,
}

impl Default for PongConfig {
    fn default() -> Self {
        Self { episodes: 200, seed: 1, grid: Grid::default(), max_steps: 120, expert_noise_p: 0.0 }
    }
}

impl PongConfig {
    pub fn check(&self) -> Result<(), DatasetError> {
        self.grid.check()?;
        if self.max_steps == 0 {
            return Err(DatasetError::Config("max_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.expert_noise_p) {
            return Err(DatasetError::Config(format!(
                "expert_noise_p {} outside [0, 1]",
                self.expert_noise_p
            )));
        }
        Ok(())
    }
}

fn episode(cfg: &PongConfig, rng: &mut SeededRng) -> Episode {
    let mut env = PongEnv::reset(cfg.grid, rng);
    let mut ep = Episode::default();
    while env.steps < cfg.max_steps && !env.done {
        let mut action = env.expert_action();
        if cfg.expert_noise_p > 0.0 && rng.bernoulli(cfg.expert_noise_p) {
            action = Action::from_index(rng.below(N_ACTIONS as u64) as usize);
        }
        ep.x.push(env.observe().to_vec());
        ep.y.push(action.one_hot());
        env.step(action);
    }
    let mut meta = Map::new();
    meta.insert("hits".into(), json!(env.hits));
    meta.insert("approaches".into(), json!(env.approaches));
    meta.insert("missed".into(), json!(env.done));
    ep.meta = meta;
    ep
}

pub fn gen_pong(cfg: &PongConfig) -> Result<Dataset, DatasetError> {
    cfg.check()?;
    let episodes = (0..cfg.episodes)
        .map(|i| episode(cfg, &mut SeededRng::new(derive_seed(cfg.seed, i as u64))))
        .collect();
    let params = serde_json::to_value(cfg).map_err(|e| DatasetError::Config(e.to_string()))?;
    Ok(Dataset::new(
        GENERATOR,
        cfg.seed,
        Dims { inputs: N_OBS, outputs: N_ACTIONS },
        params,
        episodes,
    ))
}
