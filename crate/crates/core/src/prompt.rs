//! Fusion-specific prompt assembly: context, task and input descriptors
//! rendered from `{name}` templates and framed by special tokens.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};

use crate::data::InputStats;
use crate::error::{bail, Error, Result};

pub type Bindings = BTreeMap<String, String>;

pub const DEFAULT_CONTEXT: &str = include_str!("../templates/context.txt");
pub const DEFAULT_TASK: &str = include_str!("../templates/task.txt");
pub const DEFAULT_INPUT: &str = include_str!("../templates/input.txt");

/// Character bound applied when no other budget is configured.
pub const DEFAULT_MAX_CHARS: usize = 4096;

/// Special tokens framing each prompt section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialTokens {
    pub begin: String,
    pub start_header: String,
    pub end_header: String,
    pub end_of_turn: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            begin: "<|begin_of_text|>".into(),
            start_header: "<|start_header_id|>".into(),
            end_header: "<|end_header_id|>".into(),
            end_of_turn: "<|eot_id|>".into(),
        }
    }
}

/// The three descriptor templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDescriptors {
    pub context_text: String,
    pub task_text: String,
    pub input_template: String,
}

impl Default for PromptDescriptors {
    fn default() -> Self {
        Self::new(DEFAULT_CONTEXT, DEFAULT_TASK, DEFAULT_INPUT).expect("bundled templates are non-empty")
    }
}

impl PromptDescriptors {
    /// Templates are trimmed; none may be empty.
    pub fn new(context: &str, task: &str, input: &str) -> Result<Self> {
        let (context, task, input) = (context.trim(), task.trim(), input.trim());
        if context.is_empty() || task.is_empty() || input.is_empty() {
            bail!(Config, "prompt templates must be non-empty");
        }
        Ok(Self {
            context_text: context.into(),
            task_text: task.into(),
            input_template: input.into(),
        })
    }
}

/// An assembled prompt, ready to send to a reservoir service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPrompt {
    pub text: String,
    pub placeholder_bindings: Bindings,
    pub token_budget: usize,
}

/// Substitutes every `{name}` in `template`. Unbound names are an error.
pub fn render(template: &str, bindings: &Bindings) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            bail!(Template, "{}", after);
        };
        let name = &after[..close];
        match bindings.get(name) {
            Some(v) => out.push_str(v),
            None => return Err(Error::Template(name.to_string())),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// `%g`-style rendering with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_zeros(mantissa.into()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').into()
    } else {
        s
    }
}

/// Renders descriptors into a [`FusionPrompt`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBuilder {
    pub descriptors: PromptDescriptors,
    pub tokens: SpecialTokens,
    pub max_chars: usize,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self {
            descriptors: PromptDescriptors::default(),
            tokens: SpecialTokens::default(),
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

impl PromptBuilder {
    pub fn new(descriptors: PromptDescriptors) -> Self {
        Self {
            descriptors,
            ..Self::default()
        }
    }

    /// Placeholder bindings describing one input series.
    pub fn input_bindings(stats: &InputStats, seq_len: usize, pred_len: usize, phase_plate: &str) -> Bindings {
        let mut b = Bindings::new();
        b.insert("min".into(), format_sig6(stats.min));
        b.insert("max".into(), format_sig6(stats.max));
        b.insert("median".into(), format_sig6(stats.median));
        b.insert("seq_len".into(), seq_len.to_string());
        b.insert("pred_len".into(), pred_len.to_string());
        b.insert("phase_plate".into(), phase_plate.into());
        b
    }

    pub fn build_input_descriptor(
        &self,
        stats: &InputStats,
        seq_len: usize,
        pred_len: usize,
        phase_plate: &str,
    ) -> Result<String> {
        if seq_len == 0 || pred_len == 0 {
            bail!(Argument, "seq_len and pred_len must be positive");
        }
        if !(stats.min <= stats.median && stats.median <= stats.max) {
            bail!(Argument, "input stats are not ordered");
        }
        render(
            &self.descriptors.input_template,
            &Self::input_bindings(stats, seq_len, pred_len, phase_plate),
        )
    }

    fn section(&self, out: &mut String, name: &str, body: &str) {
        out.push_str(&self.tokens.start_header);
        out.push_str(name);
        out.push_str(&self.tokens.end_header);
        out.push_str("\n\n");
        out.push_str(body);
        out.push_str(&self.tokens.end_of_turn);
    }

    /// Begin token, then the context, task and input sections in that order.
    pub fn assemble(&self, bindings: &Bindings) -> Result<FusionPrompt> {
        let context = render(&self.descriptors.context_text, bindings)?;
        let task = render(&self.descriptors.task_text, bindings)?;
        let input = render(&self.descriptors.input_template, bindings)?;
        let mut text = self.tokens.begin.clone();
        self.section(&mut text, "context", &context);
        self.section(&mut text, "task", &task);
        self.section(&mut text, "input", &input);
        let chars = text.chars().count();
        if chars > self.max_chars {
            bail!(Argument, "prompt has {chars} characters, budget is {}", self.max_chars);
        }
        Ok(FusionPrompt {
            text,
            placeholder_bindings: bindings.clone(),
            token_budget: self.max_chars,
        })
    }

    /// Full prompt for one laser series.
    pub fn for_series(
        &self,
        stats: &InputStats,
        seq_len: usize,
        pred_len: usize,
        phase_plate: &str,
    ) -> Result<FusionPrompt> {
        self.build_input_descriptor(stats, seq_len, pred_len, phase_plate)?;
        self.assemble(&Self::input_bindings(stats, seq_len, pred_len, phase_plate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(min: f64, max: f64, median: f64) -> InputStats {
        InputStats { min, max, median }
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(2.0), "2");
        assert_eq!(format_sig6(400.0), "400");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456789.0), "1.23457e8");
        assert_eq!(format_sig6(-0.000012345678), "-1.23457e-5");
        assert_eq!(format_sig6(0.0001234567), "0.000123457");
    }

    #[test]
    fn input_descriptor_substitutes_everything() {
        let b = PromptBuilder::default();
        let text = b
            .build_input_descriptor(&stats(0.0, 1.0, 0.5), 400, 400, "SG4")
            .unwrap();
        assert!(text.contains("0.5"));
        assert!(text.contains("400"));
        assert!(text.contains("SG4"));
        assert!(!text.contains('{'));
    }

    #[test]
    fn constant_stats_appear_three_times() {
        let b = PromptBuilder::default();
        let text = b
            .build_input_descriptor(&stats(2.0, 2.0, 2.0), 400, 400, "SG4")
            .unwrap();
        let clause = text.split('.').next().unwrap();
        assert_eq!(clause.matches('2').count(), 3);
    }

    #[test]
    fn unknown_placeholder_is_named() {
        let d = PromptDescriptors::new("ctx", "task", "value <foo> is {foo}").unwrap();
        let err = PromptBuilder::new(d)
            .build_input_descriptor(&stats(0.0, 1.0, 0.5), 4, 4, "x")
            .unwrap_err();
        assert_eq!(err, Error::Template("foo".into()));
        assert!(format!("{err}").contains("foo"));
    }

    #[test]
    fn default_prompt_starts_with_begin_token() {
        let p = PromptBuilder::default()
            .for_series(&stats(0.0, 1.0, 0.5), 400, 400, "SG4")
            .unwrap();
        assert!(p.text.starts_with("<|begin_of_text|>"));
        assert!(!p.text.contains('{'));
    }

    #[test]
    fn placeholder_free_templates_concatenate_in_order() {
        let b = PromptBuilder::new(PromptDescriptors::new("C", "T", "I").unwrap());
        let p = b.assemble(&Bindings::new()).unwrap();
        assert_eq!(
            p.text,
            "<|begin_of_text|><|start_header_id|>context<|end_header_id|>\n\nC<|eot_id|>\
             <|start_header_id|>task<|end_header_id|>\n\nT<|eot_id|>\
             <|start_header_id|>input<|end_header_id|>\n\nI<|eot_id|>"
        );
        assert_eq!(p, b.assemble(&Bindings::new()).unwrap());
    }

    #[test]
    fn sections_keep_fixed_order() {
        let p = PromptBuilder::default()
            .for_series(&stats(0.0, 1.0, 0.5), 400, 400, "SG4")
            .unwrap();
        let c = p.text.find("context<|end_header_id|>").unwrap();
        let t = p.text.find("task<|end_header_id|>").unwrap();
        let i = p.text.find("input<|end_header_id|>").unwrap();
        assert!(c < t && t < i);
    }

    #[test]
    fn budget_is_enforced() {
        let b = PromptBuilder {
            max_chars: 10,
            ..PromptBuilder::default()
        };
        assert!(b
            .assemble(&PromptBuilder::input_bindings(&stats(0.0, 1.0, 0.5), 4, 4, "x"))
            .is_err());
    }
}
