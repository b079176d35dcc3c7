//! The immutable 17-prompt battery: prompt texts, domains, tiers, and
//! per-prompt decision taxonomies.
//!
//! The canonical battery ships embedded in the binary and as
//! `assets/battery.toml`; alternative batteries can be loaded from any file
//! following the same schema (see `docs/formats.md`).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical battery definition, byte-identical to `assets/battery.toml`.
pub const CANONICAL_BATTERY_TOML: &str = include_str!("../assets/battery.toml");

/// One of the four prompt domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptDomain {
    MoralDilemma,
    GameTheory,
    PublicPolicy,
    SelfAssessment,
}

impl PromptDomain {
    pub const ALL: [PromptDomain; 4] = [
        PromptDomain::MoralDilemma,
        PromptDomain::GameTheory,
        PromptDomain::PublicPolicy,
        PromptDomain::SelfAssessment,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptDomain::MoralDilemma => "moral_dilemma",
            PromptDomain::GameTheory => "game_theory",
            PromptDomain::PublicPolicy => "public_policy",
            PromptDomain::SelfAssessment => "self_assessment",
        }
    }
}

impl fmt::Display for PromptDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifiability tier of a prompt.
///
/// `Core6` prompts feed the agreement matrix, `Core6` plus `Extended12`
/// prompts feed decision-stability metrics, and `Unclassifiable` prompts
/// participate only in raw-text metrics (length, Jaccard, determinism).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Core6,
    Extended12,
    Unclassifiable,
}

/// One ordered classification rule: if any pattern matches, the rule's
/// label is assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub label: String,
    pub patterns: Vec<String>,
    /// Action-label rules must not fire when the matched clause is negated
    /// within a 4-token window.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negation_guard: bool,
}

/// How a taxonomy assigns labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyKind {
    /// Ordered keyword rules; first matching rule wins.
    Keyword,
    /// Label is the extracted dollar offer, formatted `$N`; the label space
    /// is implicitly `$0`..`$100` plus `Unclear`.
    OfferAmount,
}

/// Per-prompt decision taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTaxonomy {
    pub kind: TaxonomyKind,
    /// Ordered label list; the order breaks modal ties. Always contains the
    /// terminal fallback `Unclear`.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<Rule>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
}

/// The fallback label assigned when no rule matches.
pub const UNCLEAR: &str = "Unclear";

impl DecisionTaxonomy {
    /// True if `label` is a member of this taxonomy's label space.
    pub fn contains(&self, label: &str) -> bool {
        match self.kind {
            TaxonomyKind::Keyword => self.labels.iter().any(|l| l == label),
            TaxonomyKind::OfferAmount => {
                label == UNCLEAR || crate::classify::parse_offer_label(label).is_some()
            }
        }
    }

    /// Position of `label` in the tie-break order (lower wins ties).
    ///
    /// For offer-amount taxonomies the implicit order is `$0`..`$100`
    /// ascending, with `Unclear` last.
    pub fn tie_rank(&self, label: &str) -> usize {
        match self.kind {
            TaxonomyKind::Keyword => self
                .labels
                .iter()
                .position(|l| l == label)
                .unwrap_or(usize::MAX),
            TaxonomyKind::OfferAmount => match crate::classify::parse_offer_label(label) {
                Some(amount) => amount as usize,
                None => usize::MAX,
            },
        }
    }
}

/// One battery item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub ordinal: u32,
    pub domain: PromptDomain,
    pub tier: Tier,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<DecisionTaxonomy>,
}

impl PromptSpec {
    /// True when the prompt carries a decision taxonomy.
    pub fn has_taxonomy(&self) -> bool {
        self.taxonomy.is_some()
    }
}

#[derive(Debug, Deserialize)]
struct BatteryFile {
    schema_version: u32,
    prompts: Vec<PromptSpec>,
}

/// The loaded, validated battery.
#[derive(Debug, Clone, PartialEq)]
pub struct Battery {
    prompts: Vec<PromptSpec>,
}

#[derive(Debug, Error)]
pub enum BatteryError {
    #[error("failed to read battery file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed battery file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported battery schema version {0}")]
    SchemaVersion(u32),
    #[error("wrong prompt count: expected 17, found {0}")]
    WrongPromptCount(usize),
    #[error("battery is invalid: {0}")]
    Invalid(ValidationReport),
    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),
}

/// One invariant violation found by [`validate_battery`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub prompt_id: String,
    pub message: String,
}

/// Collection of violations; empty iff the battery satisfies all invariants.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, prompt_id: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            prompt_id: prompt_id.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[{}] {}", v.prompt_id, v.message)?;
        }
        Ok(())
    }
}

/// Validate every battery invariant, returning one entry per violation.
pub fn validate_battery(prompts: &[PromptSpec]) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut ids = HashSet::new();
    for p in prompts {
        if !ids.insert(p.id.as_str()) {
            report.push(&p.id, "duplicate id");
        }
    }

    let mut ordinals: Vec<u32> = prompts.iter().map(|p| p.ordinal).collect();
    ordinals.sort_unstable();
    let expected: Vec<u32> = (1..=prompts.len() as u32).collect();
    if ordinals != expected {
        report.push("", "ordinals are not a permutation of 1..=N");
    }

    for p in prompts {
        if p.text.trim().is_empty() {
            report.push(&p.id, "empty prompt text");
        }
        if p.tier != Tier::Unclassifiable && p.taxonomy.is_none() {
            report.push(&p.id, "classifiable prompt missing taxonomy");
        }
        if let Some(tax) = &p.taxonomy {
            let mut seen = HashSet::new();
            for label in &tax.labels {
                if !seen.insert(label.as_str()) {
                    report.push(&p.id, format!("duplicate taxonomy label {label:?}"));
                }
            }
            if !tax.labels.iter().any(|l| l == UNCLEAR) {
                report.push(&p.id, "taxonomy is missing the Unclear fallback label");
            }
            for rule in &tax.rules {
                if !tax.labels.iter().any(|l| l == &rule.label) {
                    report.push(
                        &p.id,
                        format!("rule references unknown label {:?}", rule.label),
                    );
                }
                if rule.patterns.is_empty() {
                    report.push(&p.id, format!("rule for {:?} has no patterns", rule.label));
                }
            }
            if tax.kind == TaxonomyKind::Keyword && tax.rules.is_empty() {
                report.push(&p.id, "keyword taxonomy has no rules");
            }
        }
    }

    report
}

/// Parse and validate a battery from TOML text.
pub fn parse_battery(toml_text: &str) -> Result<Battery, BatteryError> {
    let file: BatteryFile = toml::from_str(toml_text)?;
    if file.schema_version != 1 {
        return Err(BatteryError::SchemaVersion(file.schema_version));
    }
    if file.prompts.len() != 17 {
        return Err(BatteryError::WrongPromptCount(file.prompts.len()));
    }
    let report = validate_battery(&file.prompts);
    if !report.is_empty() {
        return Err(BatteryError::Invalid(report));
    }
    Ok(Battery {
        prompts: file.prompts,
    })
}

/// Load a battery definition file from disk.
pub fn load_battery(path: impl AsRef<Path>) -> Result<Battery, BatteryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BatteryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_battery(&text)
}

impl Battery {
    /// The canonical battery shipped with the crate.
    pub fn canonical() -> Battery {
        parse_battery(CANONICAL_BATTERY_TOML).expect("embedded canonical battery must be valid")
    }

    /// All prompts in ordinal order.
    pub fn prompts(&self) -> &[PromptSpec] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// Find a prompt by id.
    pub fn get(&self, id: &str) -> Option<&PromptSpec> {
        self.prompts.iter().find(|p| p.id == id)
    }

    /// Find a prompt by id, as an error-returning lookup.
    pub fn require(&self, id: &str) -> Result<&PromptSpec, BatteryError> {
        self.get(id)
            .ok_or_else(|| BatteryError::UnknownPrompt(id.to_string()))
    }

    /// Find a prompt whose text equals `text` after whitespace normalization.
    pub fn match_text(&self, text: &str) -> Option<&PromptSpec> {
        let needle = normalize_ws(text);
        self.prompts.iter().find(|p| normalize_ws(&p.text) == needle)
    }

    /// The six core classifiable prompts (agreement-matrix set), in ordinal order.
    pub fn core6(&self) -> Vec<&PromptSpec> {
        self.prompts.iter().filter(|p| p.tier == Tier::Core6).collect()
    }

    /// The twelve classifiable prompts (decision-stability set), in ordinal order.
    pub fn extended12(&self) -> Vec<&PromptSpec> {
        self.prompts
            .iter()
            .filter(|p| matches!(p.tier, Tier::Core6 | Tier::Extended12))
            .collect()
    }

    /// Prompts in a given domain, in ordinal order.
    pub fn domain(&self, domain: PromptDomain) -> Vec<&PromptSpec> {
        self.prompts.iter().filter(|p| p.domain == domain).collect()
    }
}

/// Collapse all whitespace runs to single spaces and trim.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
