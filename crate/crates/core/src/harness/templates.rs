//! Zero-shot prompt templates and their rendering into role-tagged layouts.
//!
//! Templates are plain strings with named placeholders:
//! `{input}` expands to the task framing with the instance text tagged as
//! task input, `{options}` to the option list, `{answer}` to the chosen
//! label and `{system}` to the profile's system prompt. All other template
//! text is scaffold.

use serde::{Deserialize, Serialize};

use super::{TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::types::{build_layout, PromptLayout, Segment, SpanRole, Token};

pub const ANSWER_CUE: &str = "The best answer is: (";
pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are a helpful chat assistant and will answer the user's questions carefully.";
const COT_INSTRUCTION: &str = "Please verbalize how you are thinking about the problem, then give your answer in the format \"The best answer is: (X)\". It's very important that you stick to this format.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateStyle {
    /// No chat markup, for base models.
    Base,
    /// `[INST] ... [/INST]` turns with a `<<SYS>>` block.
    ChatInstTags,
    /// `User:` / `Assistant:` turns.
    ChatUserAssistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateProfile {
    pub style: TemplateStyle,
    pub system_prompt: String,
    /// Prediction prompt for post-hoc explanations; ends with the answer cue.
    pub posthoc_template: String,
    /// Prompt that elicits a chain of thought.
    pub cot_template: String,
    /// Appended after a chain of thought to elicit the final answer.
    pub cot_answer_template: String,
    /// Prediction prompt plus the answer and a request to explain it.
    pub explain_template: String,
}

impl TemplateProfile {
    pub fn new(style: TemplateStyle) -> Self {
        match style {
            TemplateStyle::Base => TemplateProfile {
                style,
                system_prompt: String::new(),
                posthoc_template: format!("{{input}}{{options}} {ANSWER_CUE}"),
                cot_template: format!("{{input}}{{options}} {COT_INSTRUCTION} Let's think step by step:"),
                cot_answer_template: format!("\n{ANSWER_CUE}"),
                explain_template: format!(
                    "{{input}}{{options}} {ANSWER_CUE}{{answer}}). Why did you choose ({{answer}})? Explanation: Because"
                ),
            },
            TemplateStyle::ChatInstTags => {
                let open = "[INST] <<SYS>>\n{system}\n<</SYS>>\n\n{input}{options}";
                TemplateProfile {
                    style,
                    system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
                    posthoc_template: format!("{open} [/INST] {ANSWER_CUE}"),
                    cot_template: format!("{open} {COT_INSTRUCTION} [/INST] Let's think step by step:"),
                    cot_answer_template: format!("\n[INST] What is your final answer? [/INST] {ANSWER_CUE}"),
                    explain_template: format!(
                        "{open} [/INST] {ANSWER_CUE}{{answer}}). [INST] Why did you choose ({{answer}})? [/INST] Explanation: Because"
                    ),
                }
            }
            TemplateStyle::ChatUserAssistant => TemplateProfile {
                style,
                system_prompt: String::new(),
                posthoc_template: format!("User: {{input}}{{options}}\nAssistant: {ANSWER_CUE}"),
                cot_template: format!(
                    "User: {{input}}{{options}} {COT_INSTRUCTION}\nAssistant: Let's think step by step:"
                ),
                cot_answer_template: format!("\nUser: What is your final answer?\nAssistant: {ANSWER_CUE}"),
                explain_template: format!(
                    "User: {{input}}{{options}}\nAssistant: {ANSWER_CUE}{{answer}}).\nUser: Why did you choose ({{answer}})?\nAssistant: Explanation: Because"
                ),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("posthoc_template", &self.posthoc_template),
            ("cot_template", &self.cot_template),
            ("explain_template", &self.explain_template),
        ] {
            if !t.contains("{input}") {
                return Err(Error::TemplateError(format!("{name} lacks {{input}}")));
            }
        }
        if !self.explain_template.contains("{answer}") {
            return Err(Error::TemplateError("explain_template lacks {answer}".into()));
        }
        for (name, t) in [("posthoc_template", &self.posthoc_template), ("cot_answer_template", &self.cot_answer_template)] {
            if !t.ends_with(ANSWER_CUE) {
                return Err(Error::TemplateError(format!("{name} must end with {ANSWER_CUE:?}")));
            }
        }
        for t in [&self.posthoc_template, &self.cot_template, &self.explain_template, &self.cot_answer_template] {
            parse(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    PostHoc,
    Cot,
}

enum Part<'a> {
    Text(&'a str),
    Input,
    Options,
    Answer,
    System,
}

fn parse(template: &str) -> Result<Vec<Part<'_>>> {
    let mut parts = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            parts.push(Part::Text(&rest[..open]));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::TemplateError(format!("unclosed placeholder in {template:?}")))?;
        let name = &rest[open + 1..open + close];
        parts.push(match name {
            "input" => Part::Input,
            "options" => Part::Options,
            "answer" => Part::Answer,
            "system" => Part::System,
            other => return Err(Error::TemplateError(format!("unresolved placeholder {{{other}}}"))),
        });
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        parts.push(Part::Text(rest));
    }
    Ok(parts)
}

/// Task framing around the instance text. Only the instance's own segment
/// texts are task input.
fn input_segments(instance: &TaskInstance) -> Vec<Segment> {
    let seg = |i: usize| instance.segments[i].text.clone();
    match (instance.task, instance.segments.len()) {
        (TaskKind::ComVE, 2) => vec![
            Segment::scaffold("Which statement of the two is against common sense? Sentence (A): \""),
            Segment::input(seg(0)),
            Segment::scaffold("\" , Sentence (B): \""),
            Segment::input(seg(1)),
            Segment::scaffold("\" ."),
        ],
        (TaskKind::ESNLI, 2) => vec![
            Segment::scaffold("Suppose \""),
            Segment::input(seg(0)),
            Segment::scaffold("\". Can we infer that \""),
            Segment::input(seg(1)),
            Segment::scaffold("\"?"),
        ],
        _ => {
            let mut out = Vec::new();
            for (i, s) in instance.segments.iter().enumerate() {
                if i > 0 {
                    out.push(Segment::scaffold(" "));
                }
                out.push(Segment::input(s.text.clone()));
            }
            out
        }
    }
}

fn options_text(instance: &TaskInstance) -> String {
    if instance.task == TaskKind::ComVE || instance.options.iter().all(|o| o.text.is_empty()) {
        return String::new();
    }
    let listed: Vec<String> = instance.options.iter().map(|o| format!("({}) {}", o.label, o.text)).collect();
    format!(" Answer choices: {}", listed.join(" "))
}

/// Prompts for one instance under one template profile.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompts {
    mode: PromptMode,
    profile: TemplateProfile,
    input: Vec<Segment>,
    options: String,
    labels: Vec<String>,
    prediction: PromptLayout,
}

impl RenderedPrompts {
    pub fn mode(&self) -> PromptMode {
        self.mode
    }

    /// Option labels in instance order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The post-hoc prediction prompt, or the chain-of-thought prompt in CoT
    /// mode.
    pub fn prediction(&self) -> &PromptLayout {
        &self.prediction
    }

    pub fn profile(&self) -> &TemplateProfile {
        &self.profile
    }

    fn segments(&self, template: &str, answer: Option<&str>) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        for part in parse(template)? {
            match part {
                Part::Text(t) => out.push(Segment::scaffold(t)),
                Part::Input => out.extend(self.input.iter().cloned()),
                Part::Options => out.push(Segment::scaffold(self.options.clone())),
                Part::System => out.push(Segment::scaffold(self.profile.system_prompt.clone())),
                Part::Answer => match answer {
                    Some(a) => out.push(Segment::scaffold(a)),
                    None => return Err(Error::TemplateError("{answer} used before an answer exists".into())),
                },
            }
        }
        Ok(out)
    }

    /// Explanation prompt embedding `answer`. Its task-input tokens match the
    /// prediction prompt's.
    pub fn explanation(&self, oracle: &dyn Oracle, answer: &str) -> Result<PromptLayout> {
        build_layout(oracle, &self.segments(&self.profile.explain_template, Some(answer))?)
    }

    /// Chain-of-thought prompt followed by `cot` (as scaffold) and the answer
    /// cue.
    pub fn answer_after_cot(&self, oracle: &dyn Oracle, cot: &[Token]) -> Result<PromptLayout> {
        let cue = self.segments(&self.profile.cot_answer_template, None)?;
        let cue: String = cue.iter().map(|s| s.text.as_str()).collect();
        self.prediction.with_tokens(cot, SpanRole::Scaffold)?.with_text(oracle, &cue, SpanRole::Scaffold)
    }
}

/// Renders the prediction (post-hoc) or chain-of-thought (CoT) prompt.
pub fn render_prompts(
    oracle: &dyn Oracle,
    instance: &TaskInstance,
    profile: &TemplateProfile,
    mode: PromptMode,
) -> Result<RenderedPrompts> {
    render_with_suffix(oracle, instance, profile, mode, None)
}

/// As [`render_prompts`], with extra scaffold text placed right after the
/// instance input, such as a suggested answer.
pub fn render_with_suffix(
    oracle: &dyn Oracle,
    instance: &TaskInstance,
    profile: &TemplateProfile,
    mode: PromptMode,
    suffix: Option<&str>,
) -> Result<RenderedPrompts> {
    profile.validate()?;
    let mut input = input_segments(instance);
    if let Some(s) = suffix {
        input.push(Segment::scaffold(s));
    }
    let mut out = RenderedPrompts {
        mode,
        profile: profile.clone(),
        input,
        options: options_text(instance),
        labels: instance.options.iter().map(|o| o.label.clone()).collect(),
        prediction: PromptLayout::from_parts(vec![], vec![])?,
    };
    let template = match mode {
        PromptMode::PostHoc => &profile.posthoc_template,
        PromptMode::Cot => &profile.cot_template,
    };
    out.prediction = build_layout(oracle, &out.segments(template, None)?)?;
    Ok(out)
}
