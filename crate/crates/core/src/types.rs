//! Domain types shared across the bank: tokens, role-tagged prompt layouts and
//! the attribution vectors computed over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Oracle;

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub text: String,
}

impl Token {
    pub fn new(id: TokenId, text: impl Into<String>) -> Self {
        Token { id, text: text.into() }
    }
}

/// Concatenates the surface text of a token run.
pub fn tokens_text(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpanRole {
    /// Template text. Never masked.
    Scaffold,
    /// Instance input. These are the maskable, comparable positions.
    TaskInput,
    /// Model output appended after the prompt.
    Generated,
}

/// A piece of prompt text tagged with the role its tokens take.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub role: SpanRole,
}

impl Segment {
    pub fn new(text: impl Into<String>, role: SpanRole) -> Self {
        Segment { text: text.into(), role }
    }

    pub fn scaffold(text: impl Into<String>) -> Self {
        Self::new(text, SpanRole::Scaffold)
    }

    pub fn input(text: impl Into<String>) -> Self {
        Self::new(text, SpanRole::TaskInput)
    }
}

/// A token sequence partitioned into scaffold, maskable task-input and
/// generated spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    tokens: Vec<Token>,
    roles: Vec<SpanRole>,
    maskable: Vec<usize>,
    generated_from: usize,
}

impl PromptLayout {
    /// Builds a layout from parallel token and role lists.
    ///
    /// Generated positions must form a suffix. The maskable set may be empty
    /// here; attribution entry points reject such layouts.
    pub fn from_parts(tokens: Vec<Token>, roles: Vec<SpanRole>) -> Result<Self> {
        if tokens.len() != roles.len() {
            return Err(Error::LengthMismatch(tokens.len(), roles.len()));
        }
        let generated_from = roles
            .iter()
            .position(|r| *r == SpanRole::Generated)
            .unwrap_or(roles.len());
        if roles[generated_from..].iter().any(|r| *r != SpanRole::Generated) {
            return Err(Error::InvalidArgument(
                "generated tokens must follow every prompt token".into(),
            ));
        }
        let maskable = roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == SpanRole::TaskInput)
            .map(|(i, _)| i)
            .collect();
        Ok(PromptLayout { tokens, roles, maskable, generated_from })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn roles(&self) -> &[SpanRole] {
        &self.roles
    }

    /// Positions with role `TaskInput`, ascending.
    pub fn maskable(&self) -> &[usize] {
        &self.maskable
    }

    pub fn generated_from(&self) -> usize {
        self.generated_from
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Token ids of the task-input positions, in order.
    pub fn task_input_ids(&self) -> Vec<TokenId> {
        self.maskable.iter().map(|&i| self.tokens[i].id).collect()
    }

    pub fn task_input_tokens(&self) -> Vec<Token> {
        self.maskable.iter().map(|&i| self.tokens[i].clone()).collect()
    }

    /// Concatenated surface text of every token carrying `role`.
    pub fn text_of(&self, role: SpanRole) -> String {
        self.tokens
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(t, _)| t.text.as_str())
            .collect()
    }

    pub fn text(&self) -> String {
        tokens_text(&self.tokens)
    }

    /// Returns a new layout with `tokens` appended under `role`.
    pub fn with_tokens(&self, tokens: &[Token], role: SpanRole) -> Result<Self> {
        let mut all = self.tokens.clone();
        let mut roles = self.roles.clone();
        all.extend_from_slice(tokens);
        roles.extend(std::iter::repeat_n(role, tokens.len()));
        Self::from_parts(all, roles)
    }

    /// Tokenizes `text` on its own and appends it under `role`.
    pub fn with_text(&self, oracle: &dyn Oracle, text: &str, role: SpanRole) -> Result<Self> {
        if text.is_empty() {
            return Ok(self.clone());
        }
        let tokens = oracle.tokenize(text)?;
        self.with_tokens(&tokens, role)
    }

    pub(crate) fn require_maskable(&self) -> Result<()> {
        if self.maskable.is_empty() {
            Err(Error::EmptyMaskableSet)
        } else {
            Ok(())
        }
    }
}

/// Tokenizes the concatenated segments and tags each token with the role of
/// the segment holding its first character. Leading whitespace is skipped when
/// locating that character, so a word token carrying the space that ends a
/// template segment still belongs to the input it spells.
///
/// When the tokenizer is not lossless (its token texts do not reproduce the
/// joined input), each segment is tokenized separately instead.
pub fn build_layout(oracle: &dyn Oracle, segments: &[Segment]) -> Result<PromptLayout> {
    if segments.is_empty() {
        return Err(Error::InvalidArgument("no prompt segments".into()));
    }
    let full: String = segments.iter().map(|s| s.text.as_str()).collect();
    let tokens = oracle.tokenize(&full)?;

    let layout = if tokens_text(&tokens) == full {
        // Byte offset where each segment starts.
        let mut bounds = Vec::with_capacity(segments.len());
        let mut off = 0;
        for s in segments {
            bounds.push(off);
            off += s.text.len();
        }
        let mut roles = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for t in &tokens {
            let lead = t.text.len() - t.text.trim_start().len();
            let anchor = if lead == t.text.len() { pos } else { pos + lead };
            let seg = bounds
                .iter()
                .enumerate()
                .filter(|(i, b)| **b <= anchor && !segments[*i].text.is_empty())
                .map(|(i, _)| i)
                .next_back()
                .unwrap_or(0);
            roles.push(segments[seg].role);
            pos += t.text.len();
        }
        PromptLayout::from_parts(tokens, roles)?
    } else {
        let mut all = Vec::new();
        let mut roles = Vec::new();
        for s in segments.iter().filter(|s| !s.text.is_empty()) {
            let toks = oracle.tokenize(&s.text)?;
            roles.extend(std::iter::repeat_n(s.role, toks.len()));
            all.extend(toks);
        }
        PromptLayout::from_parts(all, roles)?
    };
    layout.require_maskable()?;
    Ok(layout)
}

/// Shapley values for one explained output token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    /// One value per maskable position.
    pub phi: Vec<f64>,
    /// Probability of the explained token with every maskable position masked.
    pub base_value: f64,
    /// Probability of the explained token under the unmasked context.
    pub explained_value: f64,
}

impl AttributionVector {
    /// `|base + sum(phi) - explained|`; zero for an exact decomposition.
    pub fn efficiency_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.explained_value).abs()
    }

    pub fn l1_mass(&self) -> f64 {
        self.phi.iter().map(|v| v.abs()).sum()
    }
}

/// Shapley values divided by their L1 mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioVector {
    pub r: Vec<f64>,
}

/// Ratios for one output token, or a marker that its input contributions were
/// too small to normalize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TokenRatios {
    Ratios(RatioVector),
    Degenerate,
}

impl TokenRatios {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, TokenRatios::Degenerate)
    }
}

/// Per-input-token contributions averaged over an output span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionProfile {
    pub c: Vec<f64>,
    pub tokens_used: usize,
    pub tokens_dropped: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ToyModel;

    #[test]
    fn roles_follow_segments() {
        let toy = ToyModel::new();
        let layout = build_layout(
            &toy,
            &[Segment::scaffold("Q: "), Segment::input("2+2"), Segment::scaffold(" A:")],
        )
        .unwrap();
        assert_eq!(layout.text_of(SpanRole::TaskInput).trim(), "2+2");
        assert_eq!(layout.text_of(SpanRole::Scaffold), "Q: A:");
        assert_eq!(layout.maskable().len(), 3);
        for &i in layout.maskable() {
            assert_eq!(layout.roles()[i], SpanRole::TaskInput);
        }
    }

    #[test]
    fn empty_input_segment_is_rejected() {
        let toy = ToyModel::new();
        assert_eq!(build_layout(&toy, &[Segment::input("")]), Err(Error::EmptyMaskableSet));
        assert!(build_layout(&toy, &[]).is_err());
    }

    #[test]
    fn straddling_token_takes_first_character_role() {
        // "ab" and "cd" join into one word token "abcd" that starts in the
        // scaffold segment.
        let toy = ToyModel::new();
        let layout = build_layout(
            &toy,
            &[Segment::scaffold("x ab"), Segment::input("cd e"), Segment::scaffold(".")],
        )
        .unwrap();
        let texts: Vec<_> = layout.tokens().iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["x", " abcd", " e", "."]);
        assert_eq!(
            layout.roles(),
            &[SpanRole::Scaffold, SpanRole::Scaffold, SpanRole::TaskInput, SpanRole::Scaffold]
        );
    }

    #[test]
    fn rebuild_is_identical() {
        let toy = ToyModel::new();
        let segs = [Segment::scaffold("Premise: \""), Segment::input("A dog runs."), Segment::scaffold("\"")];
        assert_eq!(build_layout(&toy, &segs).unwrap(), build_layout(&toy, &segs).unwrap());
    }

    #[test]
    fn generated_must_be_suffix() {
        let t = Token::new(3, "x");
        let err = PromptLayout::from_parts(
            vec![t.clone(), t.clone()],
            vec![SpanRole::Generated, SpanRole::TaskInput],
        );
        assert!(err.is_err());
        let ok = PromptLayout::from_parts(
            vec![t.clone(), t],
            vec![SpanRole::TaskInput, SpanRole::Generated],
        )
        .unwrap();
        assert_eq!(ok.generated_from(), 1);
        assert_eq!(ok.maskable(), &[0]);
    }
}
