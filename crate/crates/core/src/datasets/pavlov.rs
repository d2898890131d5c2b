//! Classical-conditioning episodes.
//!
//! Channels: inputs `F` (food) and `R` (bell ring), output `S` (salivate).
//! Every episode runs three stages in order:
//!
//! * `init`: `F` alone (`S = 1`) and `R` alone (`S = 0`) presentations,
//! * `train`: `m` paired `(F, R)` presentations with `S = 1`,
//! * `test`: `R` alone, labelled `S = 1` iff `m >= k`.
//!
//! An optional `extinction` stage appends more unpaired `R` steps.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map};

use super::{Dataset, DatasetError, Dims, Episode};
use crate::rng::{derive_seed, splitmix64, SeededRng};

pub const GENERATOR: &str = "pavlov";
pub const STAGES: [&str; 4] = ["init", "train", "test", "extinction"];

/// Inclusive `[lo, hi]` length range.
pub type LenRange = (usize, usize);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitOrder {
    /// Initial-stage presentations in random order.
    #[default]
    Shuffled,
    /// All `F`-alone presentations, then all `R`-alone presentations.
    FoodFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSide {
    Train,
    Heldout,
}

/// Partition of `(init, train, test)` length combinations into two disjoint
/// sets by hashing. Episodes are only drawn from combinations on `side`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboSplit {
    pub fraction: f64,
    pub salt: u64,
    pub side: SplitSide,
}

impl ComboSplit {
    pub fn is_heldout(&self, combo: [usize; 3]) -> bool {
        let mut h = self.salt;
        for c in combo {
            h = splitmix64(h ^ c as u64);
        }
        ((h >> 11) as f64) * (1.0 / (1u64 << 53) as f64) < self.fraction
    }

    pub fn admits(&self, combo: [usize; 3]) -> bool {
        self.is_heldout(combo) == (self.side == SplitSide::Heldout)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PavlovConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Presentations per stimulus in the initial stage.
    pub init_len: LenRange,
    pub train_len: LenRange,
    pub test_len: LenRange,
    /// Pairings needed before the bell alone triggers salivation.
    pub k: usize,
    pub noise_p: f64,
    pub init_order: InitOrder,
    pub extinction_len: Option<LenRange>,
    pub split: Option<ComboSplit>,
}

impl Default for PavlovConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            seed: 1,
            init_len: (1, 3),
            train_len: (1, 4),
            test_len: (1, 3),
            k: 2,
            noise_p: 0.02,
            init_order: InitOrder::Shuffled,
            extinction_len: None,
            split: None,
        }
    }
}

impl PavlovConfig {
    /// One food, one bell, two pairings, one bell test.
    pub fn paper_exact(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            init_len: (1, 1),
            train_len: (2, 2),
            test_len: (1, 1),
            k: 2,
            noise_p: 0.0,
            init_order: InitOrder::FoodFirst,
            extinction_len: None,
            split: None,
        }
    }

    /// Every `(init, train, test)` combination the ranges allow, where
    /// `init` counts both stimuli.
    pub fn combos(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for init in 2 * self.init_len.0..=2 * self.init_len.1 {
            for m in self.train_len.0..=self.train_len.1 {
                for test in self.test_len.0..=self.test_len.1 {
                    out.push([init, m, test]);
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::Config(msg));
        for (name, r, min) in [
            ("init_len", self.init_len, 1),
            ("train_len", self.train_len, 1),
            ("test_len", self.test_len, 1),
        ] {
            if r.0 > r.1 || r.0 < min {
                return bad(format!("{name} [{}, {}] must satisfy {min} <= lo <= hi", r.0, r.1));
            }
        }
        if let Some(r) = self.extinction_len {
            if r.0 > r.1 {
                return bad(format!("extinction_len [{}, {}] is empty", r.0, r.1));
            }
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.noise_p) {
            return bad(format!("noise_p {} outside [0, 0.5)", self.noise_p));
        }
        if let Some(split) = &self.split {
            if !(0.0..=1.0).contains(&split.fraction) {
                return bad(format!("split fraction {} outside [0, 1]", split.fraction));
            }
            if !self.combos().into_iter().any(|c| split.admits(c)) {
                return bad("split leaves no admissible length combination".into());
            }
        }
        Ok(())
    }
}

const F: [f64; 2] = [1.0, 0.0];
const R: [f64; 2] = [0.0, 1.0];
const FR: [f64; 2] = [1.0, 1.0];

fn episode(cfg: &PavlovConfig, rng: &mut SeededRng) -> Episode {
    let draw = |rng: &mut SeededRng, r: LenRange| rng.range_inclusive(r.0, r.1);
    let (n_f, n_r, m, n_test) = loop {
        let n_f = draw(rng, cfg.init_len);
        let n_r = draw(rng, cfg.init_len);
        let m = draw(rng, cfg.train_len);
        let n_test = draw(rng, cfg.test_len);
        if cfg.split.is_none_or(|s| s.admits([n_f + n_r, m, n_test])) {
            break (n_f, n_r, m, n_test);
        }
    };
    let mut init: Vec<[f64; 2]> = [vec![F; n_f], vec![R; n_r]].concat();
    if cfg.init_order == InitOrder::Shuffled {
        rng.shuffle(&mut init);
    }
    let acquired = m >= cfg.k;
    let mut rows: Vec<([f64; 2], f64, &str)> = Vec::new();
    rows.extend(init.iter().map(|&x| (x, x[0], "init")));
    rows.extend((0..m).map(|_| (FR, 1.0, "train")));
    rows.extend((0..n_test).map(|_| (R, acquired as u8 as f64, "test")));
    if let Some(r) = cfg.extinction_len {
        // The association outlives as many unpaired bells as there were
        // surplus pairings.
        let surplus = if acquired { m - cfg.k + 1 } else { 0 };
        let n_ext = draw(rng, r);
        rows.extend((0..n_ext).map(|j| (R, (j < surplus) as u8 as f64, "extinction")));
    }

    let clean: Vec<Vec<f64>> = rows.iter().map(|r| r.0.to_vec()).collect();
    let mut x = clean.clone();
    let mut flipped = false;
    if cfg.noise_p > 0.0 {
        for v in x.iter_mut().flatten() {
            if rng.bernoulli(cfg.noise_p) {
                *v = 1.0 - *v;
                flipped = true;
            }
        }
    }
    let mut meta = Map::new();
    meta.insert("stages".into(), json!(rows.iter().map(|r| r.2).collect::<Vec<_>>()));
    meta.insert("m".into(), json!(m));
    meta.insert("k".into(), json!(cfg.k));
    meta.insert("combo".into(), json!([n_f + n_r, m, n_test]));
    if flipped {
        meta.insert("clean_x".into(), json!(clean));
    }
    Episode { x, y: rows.iter().map(|r| vec![r.1]).collect(), mask: None, meta }
}

/// Episode `i` depends only on `(seed, i)`.
pub fn gen_pavlov(cfg: &PavlovConfig) -> Result<Dataset, DatasetError> {
    cfg.check()?;
    let episodes = (0..cfg.episodes)
        .map(|i| episode(cfg, &mut SeededRng::new(derive_seed(cfg.seed, i as u64))))
        .collect();
    let params = serde_json::to_value(cfg).map_err(|e| DatasetError::Config(e.to_string()))?;
    Ok(Dataset::new(GENERATOR, cfg.seed, Dims { inputs: 2, outputs: 1 }, params, episodes))
}

/// Noise-free inputs of a generated episode.
pub fn clean_inputs(ep: &Episode) -> Vec<Vec<f64>> {
    match ep.meta.get("clean_x") {
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|_| ep.x.clone()),
        None => ep.x.clone(),
    }
}

/// Step indices tagged with `stage`.
pub fn stage_steps(ep: &Episode, stage: &str) -> Vec<usize> {
    ep.meta_strings("stages")
        .unwrap_or_default()
        .iter()
        .enumerate()
        .filter(|(_, s)| *s == stage)
        .map(|(t, _)| t)
        .collect()
}

pub fn is_pavlov(d: &Dataset) -> bool {
    d.manifest.generator == GENERATOR && d.dims() == Dims { inputs: 2, outputs: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_five_step_sequence() {
        let d = gen_pavlov(&PavlovConfig::paper_exact(1, 1)).unwrap();
        let ep = &d.episodes[0];
        let x: Vec<Vec<f64>> =
            [[1., 0.], [0., 1.], [1., 1.], [1., 1.], [0., 1.]].iter().map(|r| r.to_vec()).collect();
        assert_eq!(ep.x, x);
        assert_eq!(ep.y, vec![vec![1.0], vec![0.0], vec![1.0], vec![1.0], vec![1.0]]);
        assert_eq!(stage_steps(ep, "test"), vec![4]);
    }

    #[test]
    fn stage_grammar_holds() {
        let d = gen_pavlov(&PavlovConfig { episodes: 300, ..Default::default() }).unwrap();
        for ep in &d.episodes {
            let stages = ep.meta_strings("stages").unwrap();
            assert_eq!(stages.len(), ep.len());
            let rank: Vec<usize> =
                stages.iter().map(|s| STAGES.iter().position(|x| x == s).unwrap()).collect();
            assert!(rank.windows(2).all(|w| w[0] <= w[1]));
            for stage in &STAGES[..3] {
                assert!(stages.iter().any(|s| s == stage));
            }
        }
    }

    #[test]
    fn food_always_means_salivation() {
        let d = gen_pavlov(&PavlovConfig { episodes: 1500, noise_p: 0.2, ..Default::default() })
            .unwrap();
        let mut steps = 0;
        for ep in &d.episodes {
            for (x, y) in clean_inputs(ep).iter().zip(&ep.y) {
                if x[0] == 1.0 {
                    assert_eq!(y[0], 1.0);
                }
                steps += 1;
            }
        }
        assert!(steps >= 10_000, "{steps}");
    }

    #[test]
    fn test_label_follows_threshold() {
        let d = gen_pavlov(&PavlovConfig { episodes: 200, noise_p: 0.0, ..Default::default() })
            .unwrap();
        for ep in &d.episodes {
            let m = ep.meta_usize("m").unwrap();
            for t in stage_steps(ep, "test") {
                assert_eq!(ep.x[t], vec![0.0, 1.0]);
                assert_eq!(ep.y[t][0] == 1.0, m >= 2);
            }
        }
    }

    #[test]
    fn extinction_decays() {
        let cfg = PavlovConfig {
            episodes: 50,
            noise_p: 0.0,
            extinction_len: Some((6, 6)),
            ..Default::default()
        };
        for ep in &gen_pavlov(&cfg).unwrap().episodes {
            let ys: Vec<f64> = stage_steps(ep, "extinction").iter().map(|&t| ep.y[t][0]).collect();
            assert_eq!(ys.len(), 6);
            assert!(ys.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!(ys[5], 0.0);
        }
    }

    #[test]
    fn split_sides_are_disjoint_and_cover() {
        let base = PavlovConfig { episodes: 400, ..Default::default() };
        let split = ComboSplit { fraction: 0.25, salt: 7, side: SplitSide::Train };
        let train = gen_pavlov(&PavlovConfig { split: Some(split), ..base.clone() }).unwrap();
        let held = gen_pavlov(&PavlovConfig {
            split: Some(ComboSplit { side: SplitSide::Heldout, ..split }),
            ..base
        })
        .unwrap();
        let combos = |d: &Dataset| -> std::collections::BTreeSet<Vec<usize>> {
            d.episodes
                .iter()
                .map(|e| serde_json::from_value(e.meta["combo"].clone()).unwrap())
                .collect()
        };
        assert!(combos(&train).is_disjoint(&combos(&held)));
        assert!(!combos(&held).is_empty());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            PavlovConfig { k: 0, ..Default::default() },
            PavlovConfig { noise_p: 0.5, ..Default::default() },
            PavlovConfig { train_len: (3, 2), ..Default::default() },
            PavlovConfig { test_len: (0, 2), ..Default::default() },
            PavlovConfig {
                split: Some(ComboSplit { fraction: 0.0, salt: 0, side: SplitSide::Heldout }),
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(gen_pavlov(&cfg), Err(DatasetError::Config(_))), "{cfg:?}");
        }
    }
}
