//! Shapley values of the maskable input tokens for one explained output token.
//!
//! The game is `val(S)`: the teacher-forced probability of the explained token
//! when only the maskable positions in `S` are left visible and the rest are
//! replaced by the oracle's mask token. Scaffold tokens and any generated
//! prefix stay in place for every coalition.
//!
//! Two estimators:
//! * [`exact_shapley`] enumerates all `2^p` coalitions.
//! * [`permutation_shapley`] walks sampled orderings forward and backward.
//!   One ordering costs `2p` evaluations, plus one shared empty-coalition
//!   evaluation, so a single ordering fits the `2p + 1` budget. Every walk
//!   telescopes from `val(∅)` to `val(N)`, which keeps the efficiency
//!   identity exact for any number of orderings.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{masked_ids, Oracle, ScoreRequest};
use crate::seed;
use crate::types::{AttributionVector, PromptLayout, TokenId};

pub const MAX_EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Exact,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    /// Largest maskable set the exact estimator accepts.
    pub exact_limit: usize,
    /// Orderings sampled per explained token.
    pub num_permutations: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { mode: EstimatorMode::Permutation, exact_limit: 12, num_permutations: 1, seed: 0 }
    }
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        EstimatorConfig { mode: EstimatorMode::Exact, ..Default::default() }
    }

    pub fn permutation(num_permutations: usize, seed: u64) -> Self {
        EstimatorConfig { mode: EstimatorMode::Permutation, num_permutations, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exact_limit > MAX_EXACT_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "exact_limit {} exceeds {MAX_EXACT_LIMIT}",
                self.exact_limit
            )));
        }
        if self.num_permutations == 0 {
            return Err(Error::InvalidArgument("num_permutations must be at least 1".into()));
        }
        Ok(())
    }
}

/// The coalition game for one explained token.
struct Game<'a> {
    oracle: &'a dyn Oracle,
    layout: &'a PromptLayout,
    mask_id: TokenId,
    prefix: &'a [TokenId],
    target: TokenId,
}

impl<'a> Game<'a> {
    fn new(oracle: &'a dyn Oracle, layout: &'a PromptLayout, target: &'a [TokenId], index: usize) -> Result<Self> {
        layout.require_maskable()?;
        if index >= target.len() {
            return Err(Error::InvalidArgument(format!(
                "target index {index} out of range for {} target tokens",
                target.len()
            )));
        }
        let mask_id = oracle.info()?.mask_token_id;
        Ok(Game { oracle, layout, mask_id, prefix: &target[..index], target: target[index] })
    }

    fn players(&self) -> usize {
        self.layout.maskable().len()
    }

    fn value(&self, present: &[bool]) -> Result<f64> {
        let mut context = masked_ids(self.layout, present, self.mask_id);
        context.extend_from_slice(self.prefix);
        let resp = self.oracle.score(&ScoreRequest::new(context, vec![self.target]))?;
        Ok(resp.probs[0])
    }

    /// Evaluates each coalition once, in parallel, preserving input order.
    fn values(&self, coalitions: &[Vec<bool>]) -> Result<Vec<f64>> {
        coalitions.par_iter().map(|c| self.value(c)).collect()
    }
}

fn bits(mask: u32, p: usize) -> Vec<bool> {
    (0..p).map(|j| mask & (1 << j) != 0).collect()
}

/// Shapley weight `|S|! (p - |S| - 1)! / p!` as `1 / (p * C(p-1, |S|))`.
fn shapley_weights(p: usize) -> Vec<f64> {
    let n = p - 1;
    let mut binom = vec![1.0f64; p];
    for s in 1..p {
        binom[s] = binom[s - 1] * (n - s + 1) as f64 / s as f64;
    }
    binom.iter().map(|b| 1.0 / (p as f64 * b.round())).collect()
}

/// Exact Shapley values by enumerating every coalition of the maskable set.
pub fn exact_shapley(
    oracle: &dyn Oracle,
    layout: &PromptLayout,
    target: &[TokenId],
    target_index: usize,
    exact_limit: usize,
) -> Result<AttributionVector> {
    let game = Game::new(oracle, layout, target, target_index)?;
    let p = game.players();
    let limit = exact_limit.min(MAX_EXACT_LIMIT);
    if p > limit {
        return Err(Error::TooManyTokens { p, limit });
    }
    let coalitions: Vec<Vec<bool>> = (0..1u32 << p).map(|m| bits(m, p)).collect();
    let v = game.values(&coalitions)?;
    let w = shapley_weights(p);
    let mut phi = vec![0.0; p];
    for (j, out) in phi.iter_mut().enumerate() {
        let bit = 1u32 << j;
        let mut acc = 0.0;
        for m in (0..1u32 << p).filter(|m| m & bit == 0) {
            acc += w[m.count_ones() as usize] * (v[(m | bit) as usize] - v[m as usize]);
        }
        *out = acc;
    }
    Ok(AttributionVector { phi, base_value: v[0], explained_value: v[(1usize << p) - 1] })
}

fn factorial_at_most(p: usize, cap: usize) -> Option<usize> {
    let mut f: usize = 1;
    for k in 2..=p {
        f = f.checked_mul(k)?;
        if f > cap {
            return None;
        }
    }
    Some(f)
}

/// All permutations of `0..p` in lexicographic order.
fn all_orderings(p: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..p).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..p).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..p).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Orderings used by the permutation estimator: every permutation when the
/// requested count covers all `p!` of them, otherwise seeded uniform draws.
fn orderings(p: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    if factorial_at_most(p, count).is_some() {
        return all_orderings(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut o: Vec<usize> = (0..p).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect()
}

/// Monte Carlo Shapley values from antithetic permutation walks.
///
/// Each ordering is walked forward and in reverse; the marginal contribution
/// of each player is averaged over all walks. With at least `p!` orderings
/// requested, every permutation is walked once and the result equals the
/// exact values.
pub fn permutation_shapley(
    oracle: &dyn Oracle,
    layout: &PromptLayout,
    target: &[TokenId],
    target_index: usize,
    config: &EstimatorConfig,
) -> Result<AttributionVector> {
    config.validate()?;
    let game = Game::new(oracle, layout, target, target_index)?;
    let p = game.players();
    let walks: Vec<Vec<usize>> = orderings(p, config.num_permutations, config.seed)
        .into_iter()
        .flat_map(|o| {
            let rev: Vec<usize> = o.iter().rev().copied().collect();
            [o, rev]
        })
        .collect();

    // Distinct coalitions in first-visit order; the empty one is index 0.
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut coalitions = vec![vec![false; p]];
    index.insert(coalitions[0].clone(), 0);
    let mut steps: Vec<Vec<usize>> = Vec::with_capacity(walks.len());
    for walk in &walks {
        let mut present = vec![false; p];
        let mut ids = Vec::with_capacity(p);
        for &k in walk {
            present[k] = true;
            let id = *index.entry(present.clone()).or_insert_with(|| {
                coalitions.push(present.clone());
                coalitions.len() - 1
            });
            ids.push(id);
        }
        steps.push(ids);
    }
    let v = game.values(&coalitions)?;

    let mut phi = vec![0.0; p];
    for (walk, ids) in walks.iter().zip(&steps) {
        let mut prev = v[0];
        for (&k, &id) in walk.iter().zip(ids) {
            phi[k] += v[id] - prev;
            prev = v[id];
        }
    }
    let n = walks.len() as f64;
    for x in phi.iter_mut() {
        *x /= n;
    }
    let full = index[&vec![true; p]];
    Ok(AttributionVector { phi, base_value: v[0], explained_value: v[full] })
}

/// Upper bound on oracle evaluations the permutation estimator spends on one
/// explained token.
pub fn permutation_budget(p: usize, num_permutations: usize) -> usize {
    num_permutations * 2 * p + 1
}

/// Attributions for each token of a generated span.
///
/// Vector `t` explains `generated[t]` with `generated[..t]` appended to the
/// prompt. Per-token permutation seeds are derived from `(config.seed, t)`.
pub fn attribute_span(
    oracle: &dyn Oracle,
    layout: &PromptLayout,
    generated: &[TokenId],
    config: &EstimatorConfig,
) -> Result<Vec<AttributionVector>> {
    if generated.is_empty() {
        return Err(Error::InvalidArgument("no generated tokens to attribute".into()));
    }
    config.validate()?;
    (0..generated.len())
        .into_par_iter()
        .map(|t| match config.mode {
            EstimatorMode::Exact => exact_shapley(oracle, layout, generated, t, config.exact_limit),
            EstimatorMode::Permutation => {
                let cfg = EstimatorConfig { seed: seed::mix(config.seed, t as u64), ..config.clone() };
                permutation_shapley(oracle, layout, generated, t, &cfg)
            }
        })
        .collect()
}
