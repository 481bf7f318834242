//! CC-SHAP: agreement between the input contributions behind an answer and
//! behind the explanation of that answer.
//!
//! Per output token, Shapley values are turned into contribution ratios
//! (`phi_j / sum |phi_i|`), tokens with next to no input mass are dropped,
//! the remaining ratios are averaged per input token into a profile, and the
//! score is the cosine similarity of the prediction and explanation profiles,
//! i.e. one minus their cosine distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{constrained_answer, GenerationConfig, PromptMode, RenderedPrompts};
use crate::oracle::{GenerateRequest, Oracle};
use crate::shapley::{attribute_span, EstimatorConfig};
use crate::types::{AttributionVector, ContributionProfile, PromptLayout, RatioVector, Token, TokenRatios};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CCShapResult {
    pub score: f64,
    pub profile_prediction: ContributionProfile,
    pub profile_explanation: ContributionProfile,
    pub prediction_tokens: Vec<Token>,
    pub explanation_tokens: Vec<Token>,
    /// The task-input tokens both profiles are indexed by.
    pub input_tokens: Vec<Token>,
}

/// Contribution ratios for one output token, or `Degenerate` when the L1 mass
/// of its Shapley values is below `epsilon`.
pub fn ratios(phi: &AttributionVector, epsilon: f64) -> TokenRatios {
    let mass = phi.l1_mass();
    if !(mass >= epsilon) {
        return TokenRatios::Degenerate;
    }
    TokenRatios::Ratios(RatioVector { r: phi.phi.iter().map(|v| v / mass).collect() })
}

/// Averages the non-degenerate ratio vectors position by position.
pub fn aggregate(vectors: &[TokenRatios]) -> Result<ContributionProfile> {
    let kept: Vec<&RatioVector> = vectors
        .iter()
        .filter_map(|v| match v {
            TokenRatios::Ratios(r) => Some(r),
            TokenRatios::Degenerate => None,
        })
        .collect();
    let Some(first) = kept.first() else {
        return Err(Error::AllTokensDegenerate);
    };
    let n = first.r.len();
    if let Some(bad) = kept.iter().find(|r| r.r.len() != n) {
        return Err(Error::LengthMismatch(n, bad.r.len()));
    }
    let mut c = vec![0.0; n];
    for r in &kept {
        for (acc, v) in c.iter_mut().zip(&r.r) {
            *acc += v;
        }
    }
    let t = kept.len() as f64;
    for v in c.iter_mut() {
        *v /= t;
    }
    Ok(ContributionProfile { c, tokens_used: kept.len(), tokens_dropped: vectors.len() - kept.len() })
}

/// Cosine similarity of the two profiles, in `[-1, 1]`.
pub fn cc_shap(p: &ContributionProfile, e: &ContributionProfile) -> Result<f64> {
    if p.c.len() != e.c.len() {
        return Err(Error::LengthMismatch(p.c.len(), e.c.len()));
    }
    let dot: f64 = p.c.iter().zip(&e.c).map(|(a, b)| a * b).sum();
    let pp: f64 = p.c.iter().map(|a| a * a).sum();
    let ee: f64 = e.c.iter().map(|b| b * b).sum();
    if pp == 0.0 || ee == 0.0 {
        return Err(Error::ZeroProfile);
    }
    Ok((dot / (pp * ee).sqrt()).clamp(-1.0, 1.0))
}

/// Binary verdict from a score; the threshold itself counts as consistent.
pub fn binarize(score: f64, threshold: f64) -> Result<bool> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::OutOfRange(threshold));
    }
    Ok(score >= threshold)
}

/// Attributes every token of `span` and aggregates the ratios into a profile.
pub fn span_profile(
    oracle: &dyn Oracle,
    layout: &PromptLayout,
    span: &[Token],
    estimator: &EstimatorConfig,
    epsilon: f64,
) -> Result<ContributionProfile> {
    let ids: Vec<_> = span.iter().map(|t| t.id).collect();
    let vectors = attribute_span(oracle, layout, &ids, estimator)?;
    let r: Vec<TokenRatios> = vectors.iter().map(|v| ratios(v, epsilon)).collect();
    aggregate(&r)
}

fn check_aligned(a: &PromptLayout, b: &PromptLayout) -> Result<()> {
    if a.task_input_ids() != b.task_input_ids() {
        return Err(Error::MisalignedLayouts);
    }
    Ok(())
}

pub(crate) fn generate(oracle: &dyn Oracle, layout: &PromptLayout, gen: &GenerationConfig) -> Result<Vec<Token>> {
    let out = oracle.generate(&GenerateRequest {
        context: layout.ids(),
        max_new_tokens: gen.max_new_tokens,
        temperature: gen.temperature,
        seed: gen.seed,
    })?;
    if out.is_empty() {
        return Err(Error::InvalidArgument("the model generated no tokens".into()));
    }
    Ok(out)
}

fn label_token(oracle: &dyn Oracle, label: &str) -> Result<Token> {
    oracle
        .tokenize(label)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument(format!("option label {label:?} has no tokens")))
}

/// CC-SHAP for a post-hoc explanation.
///
/// The answer is picked by constrained scoring on the prediction prompt, the
/// explanation is generated from the explanation prompt that embeds that
/// answer, and the two are compared over the shared task-input tokens.
pub fn run_posthoc(
    prompts: &RenderedPrompts,
    oracle: &dyn Oracle,
    estimator: &EstimatorConfig,
    gen: &GenerationConfig,
) -> Result<CCShapResult> {
    if prompts.mode() != PromptMode::PostHoc {
        return Err(Error::InvalidArgument("post-hoc pipeline needs post-hoc prompts".into()));
    }
    let prediction = prompts.prediction();
    let (label, _) = constrained_answer(prediction, prompts.labels(), oracle)?;
    let answer = vec![label_token(oracle, &label)?];
    let profile_prediction = span_profile(oracle, prediction, &answer, estimator, DEFAULT_EPSILON)?;

    let explanation_prompt = prompts.explanation(oracle, &label)?;
    check_aligned(prediction, &explanation_prompt)?;
    let explanation = generate(oracle, &explanation_prompt, gen)?;
    let profile_explanation = span_profile(oracle, &explanation_prompt, &explanation, estimator, DEFAULT_EPSILON)?;

    Ok(CCShapResult {
        score: cc_shap(&profile_prediction, &profile_explanation)?,
        profile_prediction,
        profile_explanation,
        prediction_tokens: answer,
        explanation_tokens: explanation,
        input_tokens: prediction.task_input_tokens(),
    })
}

/// CC-SHAP for a chain-of-thought explanation.
///
/// The explanation profile covers the generated reasoning; the prediction
/// profile covers the final answer, scored with the reasoning left in place
/// as unmasked context.
pub fn run_cot(
    prompts: &RenderedPrompts,
    oracle: &dyn Oracle,
    estimator: &EstimatorConfig,
    gen: &GenerationConfig,
) -> Result<CCShapResult> {
    if prompts.mode() != PromptMode::Cot {
        return Err(Error::InvalidArgument("CoT pipeline needs CoT prompts".into()));
    }
    let cot_prompt = prompts.prediction();
    let cot = generate(oracle, cot_prompt, gen)?;
    let profile_explanation = span_profile(oracle, cot_prompt, &cot, estimator, DEFAULT_EPSILON)?;

    let answer_prompt = prompts.answer_after_cot(oracle, &cot)?;
    check_aligned(cot_prompt, &answer_prompt)?;
    let (label, _) = constrained_answer(&answer_prompt, prompts.labels(), oracle)?;
    let answer = vec![label_token(oracle, &label)?];
    let profile_prediction = span_profile(oracle, &answer_prompt, &answer, estimator, DEFAULT_EPSILON)?;

    Ok(CCShapResult {
        score: cc_shap(&profile_prediction, &profile_explanation)?,
        profile_prediction,
        profile_explanation,
        prediction_tokens: answer,
        explanation_tokens: cot,
        input_tokens: cot_prompt.task_input_tokens(),
    })
}
