//! Self-check of the Shapley estimators and CC-SHAP arithmetic on the toy
//! model. Every property is checked against quantities computed here from
//! first principles rather than through the estimators under test.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ccshap::{aggregate, cc_shap, ratios, DEFAULT_EPSILON};
use crate::error::Result;
use crate::oracle::{apply_mask, Oracle, ScoreRequest, ToyModel, TOY_MASK, TOY_VOCAB};
use crate::shapley::{exact_shapley, permutation_shapley, EstimatorConfig};
use crate::types::{AttributionVector, PromptLayout, SpanRole, Token, TokenId};

pub const TOLERANCE: f64 = 1e-9;

/// Deliberate breakage for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Shifts one Shapley value before the efficiency check.
    Efficiency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    /// First failing case, if any.
    pub failure: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Toy prompt: one scaffold token, `p` random input tokens, one scaffold
/// token. Returns the layout and a random target token.
pub fn random_case(p: usize, rng: &mut ChaCha8Rng) -> (PromptLayout, TokenId) {
    let mut tokens = vec![Token::new(10, ":")];
    let mut roles = vec![SpanRole::Scaffold];
    for _ in 0..p {
        let id = rng.gen_range(1..TOY_VOCAB as TokenId);
        tokens.push(Token::new(id, ToyModel::surface(id)));
        roles.push(SpanRole::TaskInput);
    }
    tokens.push(Token::new(6, "."));
    roles.push(SpanRole::Scaffold);
    let target = rng.gen_range(1..TOY_VOCAB as TokenId);
    (PromptLayout::from_parts(tokens, roles).expect("valid toy layout"), target)
}

/// Shapley values as the average marginal contribution over all `p!`
/// orderings, with coalition values memoized by bitmask.
pub fn brute_force_shapley(oracle: &dyn Oracle, layout: &PromptLayout, target: TokenId) -> Result<Vec<f64>> {
    let p = layout.maskable().len();
    let mut memo: HashMap<u32, f64> = HashMap::new();
    let mut val = |mask: u32| -> Result<f64> {
        if let Some(v) = memo.get(&mask) {
            return Ok(*v);
        }
        let coalition: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let ids = apply_mask(layout, &coalition, TOY_MASK)?;
        let v = oracle.score(&ScoreRequest::new(ids, vec![target]))?.probs[0];
        memo.insert(mask, v);
        Ok(v)
    };
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    let mut count = 0usize;
    // Heap's algorithm visits every permutation exactly once.
    let mut c = vec![0usize; p];
    let mut visit = |order: &[usize], phi: &mut Vec<f64>| -> Result<()> {
        let mut mask = 0u32;
        let mut prev = val(0)?;
        for &k in order {
            mask |= 1 << k;
            let v = val(mask)?;
            phi[k] += v - prev;
            prev = v;
        }
        Ok(())
    };
    visit(&order, &mut phi)?;
    count += 1;
    let mut i = 1;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order, &mut phi)?;
            count += 1;
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(phi.into_iter().map(|x| x / count as f64).collect())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn outcome(name: &'static str, cases: usize, failure: Option<String>) -> PropertyOutcome {
    PropertyOutcome { name, cases, failure }
}

fn check<F>(name: &'static str, cases: usize, mut f: F) -> PropertyOutcome
where
    F: FnMut(usize) -> Result<Option<String>>,
{
    for i in 0..cases {
        match f(i) {
            Ok(None) => {}
            Ok(Some(msg)) => return outcome(name, cases, Some(msg)),
            Err(e) => return outcome(name, cases, Some(e.to_string())),
        }
    }
    outcome(name, cases, None)
}

/// Runs the property suite with player counts up to `exact_limit`.
pub fn run_properties(exact_limit: usize, seed: u64, fault: Option<Fault>) -> Vec<PropertyOutcome> {
    let toy = ToyModel::with_seed(seed);
    let limit = exact_limit.clamp(1, crate::shapley::MAX_EXACT_LIMIT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let brute_max = limit.min(7);
    out.push(check("exact-matches-brute-force", brute_max, |i| {
        let (layout, target) = random_case(i + 1, &mut rng);
        let exact = exact_shapley(&toy, &layout, &[target], 0, limit)?;
        let brute = brute_force_shapley(&toy, &layout, target)?;
        let d = max_diff(&exact.phi, &brute);
        Ok((d > TOLERANCE).then(|| format!("p={} differs by {d:e}", i + 1)))
    }));

    let efficiency_cases = 50;
    out.push(check("efficiency", efficiency_cases, |i| {
        let p = 1 + i % limit;
        let (layout, target) = random_case(p, &mut rng);
        let exact = exact_shapley(&toy, &layout, &[target], 0, limit)?;
        let perm = permutation_shapley(&toy, &layout, &[target], 0, &EstimatorConfig::permutation(1 + i % 3, i as u64))?;
        for (which, mut v) in [("exact", exact), ("permutation", perm)] {
            if fault == Some(Fault::Efficiency) {
                v.phi[0] += 1e-3;
            }
            let gap = v.efficiency_gap();
            if gap > TOLERANCE {
                return Ok(Some(format!("{which} estimator, p={p}: gap {gap:e}")));
            }
        }
        Ok(None)
    }));

    let enum_max = limit.min(5);
    out.push(check("all-orderings-match-exact", enum_max, |i| {
        let p = i + 1;
        let (layout, target) = random_case(p, &mut rng);
        let exact = exact_shapley(&toy, &layout, &[target], 0, limit)?;
        let fact = (1..=p).product::<usize>();
        let perm = permutation_shapley(&toy, &layout, &[target], 0, &EstimatorConfig::permutation(fact, 0))?;
        let d = max_diff(&exact.phi, &perm.phi);
        Ok((d > TOLERANCE).then(|| format!("p={p} differs by {d:e}")))
    }));

    out.push(check("symmetric-players", 20, |i| {
        let hi = limit.min(6);
        if hi < 2 {
            return Ok(None);
        }
        let p = 2 + i % (hi - 1);
        let (layout, target) = random_case(p, &mut rng);
        let mut tokens = layout.tokens().to_vec();
        tokens[2] = tokens[1].clone();
        let layout = PromptLayout::from_parts(tokens, layout.roles().to_vec())?;
        let v = exact_shapley(&toy, &layout, &[target], 0, limit)?;
        let d = (v.phi[0] - v.phi[1]).abs();
        Ok((d > TOLERANCE).then(|| format!("identical tokens differ by {d:e}")))
    }));

    out.push(check("scale-invariance", 100, |_| {
        let p = rng.gen_range(1..8);
        let phi: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let other: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: f64 = rng.gen_range(0.01..100.0);
        let av = |v: Vec<f64>| AttributionVector { base_value: 0.0, explained_value: v.iter().sum(), phi: v };
        let profile = |v: Vec<f64>| aggregate(&[ratios(&av(v), DEFAULT_EPSILON)]);
        let a = cc_shap(&profile(phi.clone())?, &profile(other.clone())?)?;
        let b = cc_shap(&profile(phi.iter().map(|x| x * c).collect())?, &profile(other)?)?;
        Ok(((a - b).abs() > TOLERANCE).then(|| format!("scaling by {c} moved the score by {:e}", (a - b).abs())))
    }));
    out
}
