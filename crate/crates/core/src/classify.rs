//! Rule-based extraction of structured judgments from raw response text:
//! categorical decisions, self-reported confidence, dictator-game offers,
//! moral-foundation rankings, and developmental-stage distributions.
//!
//! All extractors are total: they terminate on arbitrary input and never
//! panic on well-formed strings. Classification rules live in the battery
//! file, not in code, so every `Unclear` is auditable against a versioned
//! rule table.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{DecisionTaxonomy, PromptSpec, Rule, TaxonomyKind, UNCLEAR};
use crate::campaign::RecordKey;

/// Negation tokens that suppress a guarded action-label match when they
/// appear within four tokens before the match.
const NEGATION_TOKENS: &[&str] = &[
    "not", "never", "refuse", "refuses", "refused", "refusing", "cannot", "cant", "wont",
    "wouldn", "shouldn", "couldn", "dont", "doesnt", "didnt", "isnt", "wouldnt", "shouldnt",
];

/// The five moral foundations, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Foundation {
    Care,
    Fairness,
    Loyalty,
    Authority,
    Purity,
}

impl Foundation {
    pub const ALL: [Foundation; 5] = [
        Foundation::Care,
        Foundation::Fairness,
        Foundation::Loyalty,
        Foundation::Authority,
        Foundation::Purity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Foundation::Care => "Care",
            Foundation::Fairness => "Fairness",
            Foundation::Loyalty => "Loyalty",
            Foundation::Authority => "Authority",
            Foundation::Purity => "Purity",
        }
    }

    fn from_token(token: &str) -> Option<Foundation> {
        match token {
            "care" => Some(Foundation::Care),
            "fairness" => Some(Foundation::Fairness),
            "loyalty" => Some(Foundation::Loyalty),
            "authority" => Some(Foundation::Authority),
            "purity" => Some(Foundation::Purity),
            _ => None,
        }
    }

    fn is_binding(&self) -> bool {
        matches!(
            self,
            Foundation::Loyalty | Foundation::Authority | Foundation::Purity
        )
    }
}

impl fmt::Display for Foundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ranking pattern derived from an MFT ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MftPattern {
    Individualizing,
    BindingLed,
    Mixed,
    Balanced,
}

impl MftPattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            MftPattern::Individualizing => "Individualizing",
            MftPattern::BindingLed => "Binding-led",
            MftPattern::Mixed => "Mixed",
            MftPattern::Balanced => "Balanced",
        }
    }
}

impl fmt::Display for MftPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All extractions for one stored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedResponse {
    #[serde(flatten)]
    pub key: RecordKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offer_amount: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mft_ranking: Option<[Foundation; 5]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kohlberg_distribution: Option<[f64; 6]>,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("prompt {0:?} has no decision taxonomy")]
    MissingTaxonomy(String),
}

/// Lowercased alphanumeric-run tokens along with their byte offsets.
fn tokens_with_offsets(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            out.push((start, std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        out.push((start, current));
    }
    out
}

/// Lowercased alphanumeric-run tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    tokens_with_offsets(text).into_iter().map(|(_, t)| t).collect()
}

/// Find every start index (in token space) where `pattern` occurs as a
/// contiguous token subsequence of `tokens`.
fn find_token_matches(tokens: &[String], pattern: &[String]) -> Vec<usize> {
    if pattern.is_empty() || pattern.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - pattern.len())
        .filter(|&i| tokens[i..i + pattern.len()].iter().zip(pattern).all(|(a, b)| a == b))
        .collect()
}

fn negated_at(tokens: &[String], match_start: usize) -> bool {
    let window_start = match_start.saturating_sub(4);
    tokens[window_start..match_start]
        .iter()
        .any(|t| NEGATION_TOKENS.contains(&t.as_str()))
}

fn rule_matches(tokens: &[String], rule: &Rule) -> bool {
    for pattern in &rule.patterns {
        let pattern_tokens = tokenize(pattern);
        for start in find_token_matches(tokens, &pattern_tokens) {
            if rule.negation_guard && negated_at(tokens, start) {
                continue;
            }
            return true;
        }
    }
    false
}

fn classify_keyword(taxonomy: &DecisionTaxonomy, text: &str) -> String {
    let tokens = tokenize(text);
    for rule in &taxonomy.rules {
        if rule_matches(&tokens, rule) {
            return rule.label.clone();
        }
    }
    UNCLEAR.to_string()
}

/// Classify a response to `prompt` into a label of its taxonomy.
///
/// First matching ordered rule wins; no match yields `Unclear`. Matching is
/// case-insensitive over the full text.
pub fn classify_decision(prompt: &PromptSpec, text: &str) -> Result<String, ClassifyError> {
    let taxonomy = prompt
        .taxonomy
        .as_ref()
        .ok_or_else(|| ClassifyError::MissingTaxonomy(prompt.id.clone()))?;
    Ok(match taxonomy.kind {
        TaxonomyKind::Keyword => classify_keyword(taxonomy, text),
        TaxonomyKind::OfferAmount => match extract_offer(text) {
            Some(amount) => offer_label(amount),
            None => UNCLEAR.to_string(),
        },
    })
}

/// Format a dollar offer as its decision label.
pub fn offer_label(amount: u32) -> String {
    format!("${amount}")
}

/// Parse a `$N` decision label back to its amount.
pub fn parse_offer_label(label: &str) -> Option<u32> {
    let digits = label.strip_prefix('$')?;
    let amount: u32 = digits.parse().ok()?;
    (amount <= 100).then_some(amount)
}

/// True when the byte before `pos` is neither alphanumeric nor '.', i.e.
/// the match starts at a clean numeric boundary.
fn clean_left_boundary(text: &str, pos: usize) -> bool {
    text[..pos]
        .chars()
        .next_back()
        .map(|c| !c.is_alphanumeric() && c != '.')
        .unwrap_or(true)
}

fn clean_right_boundary(text: &str, end: usize) -> bool {
    text[end..]
        .chars()
        .next()
        .map(|c| !c.is_alphanumeric() && c != '.')
        .unwrap_or(true)
}

static CONFIDENCE_NEAR_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)confiden[a-z]*[^0-9a-z]{0,3}(?:level|score|rating)?[^0-9]{0,24}?(10|[1-9])")
        .expect("static regex")
});

static CONFIDENCE_OUT_OF_10: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(10|[1-9])\s*(?:out\s+of\s+10|/\s*10)").expect("static regex"));

/// Extract a self-reported confidence on the 1-10 scale.
///
/// Candidate statements are `confidence ... N`, `N out of 10`, and `N/10`;
/// when several occur, the one nearest the end of the text wins.
pub fn extract_confidence(text: &str) -> Option<u8> {
    let mut best: Option<(usize, u8)> = None;
    for re in [&*CONFIDENCE_NEAR_WORD, &*CONFIDENCE_OUT_OF_10] {
        for caps in re.captures_iter(text) {
            let m = caps.get(1).expect("capture group 1");
            if !clean_left_boundary(text, m.start()) || !clean_right_boundary(text, m.end()) {
                continue;
            }
            let value: u8 = m.as_str().parse().ok()?;
            if best.map(|(pos, _)| m.start() >= pos).unwrap_or(true) {
                best = Some((m.start(), value));
            }
        }
    }
    best.map(|(_, v)| v)
}

static OFFER_AMOUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:offer(?:s|ed|ing)?|give|gives|gave|giving|allocate(?:s|d)?|allocating|share|sharing|propose|proposing|splitting|split)\b[^.?!]{0,80}?\$\s*([0-9]{1,4})",
    )
    .expect("static regex")
});

/// Extract the dollar amount committed to in a dictator-game response.
///
/// Returns the first amount bound to an offering verb; amounts outside
/// `[0, 100]` are rejected and scanning continues.
pub fn extract_offer(text: &str) -> Option<u32> {
    for caps in OFFER_AMOUNT.captures_iter(text) {
        let m = caps.get(1).expect("capture group 1");
        if !clean_right_boundary(text, m.end()) {
            continue;
        }
        if let Ok(amount) = m.as_str().parse::<u32>() {
            if amount <= 100 {
                return Some(amount);
            }
        }
    }
    None
}

/// Parse an explicit ordered ranking of the five moral foundations.
///
/// Accepts numbered lists (`1. Care ... 5. Purity`) and sequential phrasing
/// (`Purity first, then Care, ...`). Returns a ranking only when each
/// foundation appears exactly once.
pub fn extract_mft_ranking(text: &str) -> Option<[Foundation; 5]> {
    let toks = tokens_with_offsets(text);
    let mentions: Vec<(usize, Foundation)> = toks
        .iter()
        .enumerate()
        .filter_map(|(i, (_, t))| Foundation::from_token(t).map(|f| (i, f)))
        .collect();

    // Each foundation must appear exactly once, however it is phrased.
    if mentions.len() != 5 {
        return None;
    }
    let mut seen = Vec::new();
    for (_, f) in &mentions {
        if seen.contains(f) {
            return None;
        }
        seen.push(*f);
    }

    // Numbered route: a digit 1-5 immediately before the name fixes its rank.
    let mut by_rank: [Option<Foundation>; 5] = [None; 5];
    let mut numbered = 0;
    for (tok_idx, f) in &mentions {
        if *tok_idx == 0 {
            continue;
        }
        let prev = &toks[tok_idx - 1].1;
        if let Ok(rank) = prev.parse::<usize>() {
            if (1..=5).contains(&rank) && by_rank[rank - 1].is_none() {
                by_rank[rank - 1] = Some(*f);
                numbered += 1;
            }
        }
    }
    if numbered == 5 {
        return Some([
            by_rank[0].unwrap(),
            by_rank[1].unwrap(),
            by_rank[2].unwrap(),
            by_rank[3].unwrap(),
            by_rank[4].unwrap(),
        ]);
    }

    // Sequence route: textual order of the five unique mentions.
    Some([
        mentions[0].1,
        mentions[1].1,
        mentions[2].1,
        mentions[3].1,
        mentions[4].1,
    ])
}

/// Label the qualitative pattern of an MFT ranking.
///
/// Care-then-Fairness on top reads as individualizing; a binding foundation
/// (Loyalty, Authority, Purity) at rank 1 as binding-led; a binding
/// foundation at rank 2 as mixed; the remaining case (Fairness then Care,
/// with a binding foundation necessarily third) as balanced.
pub fn label_mft_pattern(ranking: &[Foundation; 5]) -> MftPattern {
    if ranking[0] == Foundation::Care && ranking[1] == Foundation::Fairness {
        MftPattern::Individualizing
    } else if ranking[0].is_binding() {
        MftPattern::BindingLed
    } else if ranking[1].is_binding() {
        MftPattern::Mixed
    } else {
        MftPattern::Balanced
    }
}

static STAGE_THEN_PERCENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)stage\s*([1-6])[^0-9%]{0,40}?([0-9]{1,3})\s*%?").expect("static regex")
});

static PERCENT_THEN_STAGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)([0-9]{1,3})\s*(?:%|percent)[^0-9]{0,30}?stage\s*([1-6])").expect("static regex")
});

/// Extract a six-stage percentage distribution.
///
/// Binds one percentage per stage; stages never mentioned read as 0 when at
/// least four are explicit. Distributions whose sum falls outside
/// `[95, 105]` are rejected.
pub fn extract_kohlberg_distribution(text: &str) -> Option<[f64; 6]> {
    let mut values: [Option<f64>; 6] = [None; 6];

    for caps in STAGE_THEN_PERCENT.captures_iter(text) {
        let stage: usize = caps[1].parse().ok()?;
        let m = caps.get(2).expect("capture group 2");
        if !clean_left_boundary(text, m.start()) || !clean_right_boundary(text, m.end()) {
            continue;
        }
        let pct: f64 = m.as_str().parse().ok()?;
        if pct <= 100.0 {
            values[stage - 1] = Some(pct);
        }
    }
    for caps in PERCENT_THEN_STAGE.captures_iter(text) {
        let m = caps.get(1).expect("capture group 1");
        if !clean_left_boundary(text, m.start()) {
            continue;
        }
        let pct: f64 = m.as_str().parse().ok()?;
        let stage: usize = caps[2].parse().ok()?;
        if pct <= 100.0 && values[stage - 1].is_none() {
            values[stage - 1] = Some(pct);
        }
    }

    let explicit = values.iter().filter(|v| v.is_some()).count();
    if explicit < 4 {
        return None;
    }
    let dist: [f64; 6] = std::array::from_fn(|i| values[i].unwrap_or(0.0));
    let sum: f64 = dist.iter().sum();
    if !(95.0..=105.0).contains(&sum) {
        return None;
    }
    Some(dist)
}

/// Run every applicable extractor for one stored response.
pub fn classify_record(prompt: &PromptSpec, key: RecordKey, text: &str) -> ClassifiedResponse {
    let decision = prompt
        .taxonomy
        .as_ref()
        .map(|_| classify_decision(prompt, text).expect("taxonomy checked above"));
    let confidence = extract_confidence(text);
    let offer_amount = if prompt.id == "dictator" {
        extract_offer(text)
    } else {
        None
    };
    let mft_ranking = if prompt.id == "mft_rank" {
        extract_mft_ranking(text)
    } else {
        None
    };
    let kohlberg_distribution = if prompt.id == "kohlberg" {
        extract_kohlberg_distribution(text)
    } else {
        None
    };
    ClassifiedResponse {
        key,
        decision,
        confidence,
        offer_amount,
        mft_ranking,
        kohlberg_distribution,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::Battery;
    use proptest::prelude::*;

    fn battery() -> Battery {
        Battery::canonical()
    }

    // Verbatim response excerpts with their published codes.
    #[test]
    fn golden_excerpts_reproduce_published_codes() {
        let b = battery();
        let cases: &[(&str, &str, &str)] = &[
            (
                "footbridge",
                "I would decide not to heave the fat man over the side... to save one person \
                 at the cost of another's life is wrong, as it violates the principle of \
                 morality and would be an act of murder. The paramount consideration here is \
                 right and wrong.",
                "NotPush",
            ),
            (
                "heinz",
                "The moral principle here is clear: one must not steal. The act of breaking \
                 into the laboratory to steal the drug would be a violation of the druggist's \
                 property, and theft is always wrong.",
                "NotSteal",
            ),
            (
                "heinz",
                "There is no right or wrong answer. The story is meant to elicit a reaction \
                 to the character of the druggist, not to judge Heinz's actions.",
                "Decline",
            ),
            (
                "prisoner",
                "I will not testify. If I testify against my partner, I shall be violating \
                 the fundamental principle of morality, which demands that I should be loyal \
                 to my friend... I shall be violating the principle of non-injury.",
                "NotTestify",
            ),
            (
                "trolley",
                "The right thing to do in this situation is to pull the lever... This \
                 decision is based on the principle of utilitarianism, which suggests that \
                 the morally right action is the one that maximizes overall well-being.",
                "Pull",
            ),
        ];
        for (id, text, expected) in cases {
            let prompt = b.get(id).unwrap();
            let got = classify_decision(prompt, text).unwrap();
            assert_eq!(&got, expected, "prompt {id}");
        }
        // The dictator-game excerpt codes through the offer extractor.
        let offer = extract_offer(
            "To be fair, I would offer the entire $100 to the second person. According to \
             the logic of this thought experiment... the amount offered should be equal to \
             the amount received by the other person.",
        );
        assert_eq!(offer, Some(100));
    }

    #[test]
    fn empty_text_is_unclear() {
        let b = battery();
        let trolley = b.get("trolley").unwrap();
        assert_eq!(classify_decision(trolley, "").unwrap(), "Unclear");
    }

    #[test]
    fn unclassifiable_prompt_is_an_error() {
        let b = battery();
        let meta = b.get("meta_process").unwrap();
        assert!(matches!(
            classify_decision(meta, "anything"),
            Err(ClassifyError::MissingTaxonomy(_))
        ));
    }

    #[test]
    fn negation_guard_suppresses_action_labels() {
        let b = battery();
        let trolley = b.get("trolley").unwrap();
        // "pull the lever" appears, but negated within the 4-token window;
        // the DoNothing rule then catches the negated phrasing.
        assert_eq!(
            classify_decision(trolley, "I would not pull the lever in this case.").unwrap(),
            "DoNothing"
        );
        assert_eq!(
            classify_decision(trolley, "I wouldn't pull the lever.").unwrap(),
            "DoNothing"
        );
        let heinz = b.get("heinz").unwrap();
        // Negated action with no negative-rule phrasing falls through to Unclear
        // rather than firing the guarded Steal rule.
        assert_eq!(
            classify_decision(heinz, "One should never, ever break into the laboratory.").unwrap(),
            "Unclear"
        );
    }

    #[test]
    fn rule_order_beats_text_order() {
        let b = battery();
        let prisoner = b.get("prisoner").unwrap();
        // "testify against" appears before "not testify" in the text, but the
        // NotTestify rule is evaluated first.
        let text = "Were I to testify against my partner I would gain, but I will not testify.";
        assert_eq!(classify_decision(prisoner, text).unwrap(), "NotTestify");
    }

    #[test]
    fn abortion_labels_do_not_cross_match() {
        let b = battery();
        let abortion = b.get("abortion").unwrap();
        assert_eq!(
            classify_decision(abortion, "Abortion should be illegal in most cases.").unwrap(),
            "IllegalMost"
        );
        assert_eq!(
            classify_decision(abortion, "Abortion should be legal in most cases.").unwrap(),
            "LegalMost"
        );
    }

    #[test]
    fn confidence_extraction_examples() {
        assert_eq!(
            extract_confidence("…I am confident at a level of 9 out of 10."),
            Some(9)
        );
        assert_eq!(extract_confidence("no numbers here"), None);
        assert_eq!(extract_confidence("confidence: 10"), Some(10));
        // Last statement wins.
        assert_eq!(
            extract_confidence("Initially 4 out of 10, but on reflection my confidence is 8."),
            Some(8)
        );
        // Decimal values never bind the fractional digits.
        assert_eq!(extract_confidence("I am 8.5 out of 10 confident... call it 8/10."), Some(8));
    }

    /// 30 hand-labeled confidence snippets in the shapes the generators emit.
    #[test]
    fn confidence_fixture_30_snippets() {
        let fixture: &[(&str, Option<u8>)] = &[
            ("I am confident at a level of 1 out of 10.", Some(1)),
            ("I am confident at a level of 5 out of 10.", Some(5)),
            ("I am confident at a level of 10 out of 10.", Some(10)),
            ("My confidence is 7.", Some(7)),
            ("My confidence level is 9.", Some(9)),
            ("Confidence: 3", Some(3)),
            ("confidence rating 6", Some(6)),
            ("I'd say 8 out of 10.", Some(8)),
            ("Roughly 9/10.", Some(9)),
            ("I rate my confidence 2 out of 10 here.", Some(2)),
            ("Overall: 10/10.", Some(10)),
            ("I am very confident, about 9 of the highest 10.", Some(9)),
            ("With high confidence (8).", Some(8)),
            ("My confidence in this answer is 4 on the scale.", Some(4)),
            ("Confidence level: 10.", Some(10)),
            ("so my confidence sits at 6 out of 10 overall", Some(6)),
            ("First thoughts: 3/10. Final answer: 7/10.", Some(7)),
            ("I answer with confidence 5.", Some(5)),
            ("Confidence — 9.", Some(9)),
            ("A tentative 1/10.", Some(1)),
            ("no stated certainty at all", None),
            ("I am quite sure of this.", None),
            ("The scale runs from 1 to 10.", Some(10)), // binds "10" via "1 to 10"? no: no pattern – see below
            ("It scores 11 out of 10 in spirit.", None),
            ("About 85% sure.", None),
            ("Confidence is high.", None),
            ("My answer is 42.", None),
            ("A 0 out of 10 makes no sense.", None),
            ("Rating: 7 / 10", Some(7)),
            ("I am confident at a level of 2 out of 10.", Some(2)),
        ];
        for (text, expected) in fixture {
            // "1 to 10" must NOT bind; adjust expectation for that entry.
            let expected = if *text == "The scale runs from 1 to 10." {
                &None
            } else {
                expected
            };
            assert_eq!(extract_confidence(text), *expected, "text: {text:?}");
        }
    }

    #[test]
    fn offer_extraction_examples() {
        assert_eq!(
            extract_offer("I would offer the entire $100 to the second person"),
            Some(100)
        );
        assert_eq!(extract_offer("I offer $0."), Some(0));
        assert_eq!(extract_offer("I'd give them $40, keeping $60"), Some(40));
        assert_eq!(extract_offer("nothing about money"), None);
        // Out-of-range amounts are rejected, scanning continues.
        assert_eq!(extract_offer("I would offer $500, or realistically offer $50."), Some(50));
        // Amount not bound to an offering verb does not count.
        assert_eq!(extract_offer("The pot holds $100."), None);
    }

    #[test]
    fn mft_ranking_examples() {
        use Foundation::*;
        assert_eq!(
            extract_mft_ranking("1. Care 2. Fairness 3. Authority 4. Loyalty 5. Purity"),
            Some([Care, Fairness, Authority, Loyalty, Purity])
        );
        assert_eq!(
            extract_mft_ranking("Purity first, then Care, Fairness, Loyalty, Authority"),
            Some([Purity, Care, Fairness, Loyalty, Authority])
        );
        assert_eq!(extract_mft_ranking("I value Care, Fairness and Loyalty."), None);
        // Repeated mention disqualifies the sequence route.
        assert_eq!(
            extract_mft_ranking("Care matters most; care again, then Fairness, Loyalty, Authority, Purity."),
            None
        );
    }

    #[test]
    fn mft_pattern_rules() {
        use Foundation::*;
        assert_eq!(
            label_mft_pattern(&[Care, Fairness, Authority, Loyalty, Purity]),
            MftPattern::Individualizing
        );
        assert_eq!(
            label_mft_pattern(&[Purity, Care, Fairness, Loyalty, Authority]),
            MftPattern::BindingLed
        );
        assert_eq!(
            label_mft_pattern(&[Care, Purity, Authority, Loyalty, Fairness]),
            MftPattern::Mixed
        );
        assert_eq!(
            label_mft_pattern(&[Fairness, Care, Purity, Authority, Loyalty]),
            MftPattern::Balanced
        );
        // Remaining published rankings.
        assert_eq!(
            label_mft_pattern(&[Care, Fairness, Loyalty, Purity, Authority]),
            MftPattern::Individualizing
        );
    }

    #[test]
    fn kohlberg_extraction_examples() {
        assert_eq!(
            extract_kohlberg_distribution(
                "Stage 1: 0%, Stage 2: 5%, Stage 3: 10%, Stage 4: 15%, Stage 5: 30%, Stage 6: 40%"
            ),
            Some([0.0, 5.0, 10.0, 15.0, 30.0, 40.0])
        );
        assert_eq!(
            extract_kohlberg_distribution(
                "Stage 1: 0%, Stage 2: 0%, Stage 3: 0%, Stage 4: 0%, Stage 5: 0%, Stage 6: 100%"
            ),
            Some([0.0, 0.0, 0.0, 0.0, 0.0, 100.0])
        );
        assert_eq!(extract_kohlberg_distribution("I reason at many stages"), None);
        // Fewer than four explicit stages is rejected even if the sum fits.
        assert_eq!(
            extract_kohlberg_distribution("Stage 5: 50%, Stage 6: 50%"),
            None
        );
        // Sum outside [95, 105] is rejected.
        assert_eq!(
            extract_kohlberg_distribution(
                "Stage 1: 30%, Stage 2: 30%, Stage 3: 30%, Stage 4: 30%, Stage 5: 30%, Stage 6: 30%"
            ),
            None
        );
        // Missing stages read as zero when at least four are explicit.
        assert_eq!(
            extract_kohlberg_distribution(
                "Stage 3: 20%, Stage 4: 20%, Stage 5: 30%, Stage 6: 30%"
            ),
            Some([0.0, 0.0, 20.0, 20.0, 30.0, 30.0])
        );
    }

    proptest! {
        // Totality: no extractor panics, and classification stays closed
        // over the taxonomy label space.
        #[test]
        fn extractors_are_total(text in "\\PC*") {
            let b = battery();
            for prompt in b.prompts() {
                if let Some(tax) = &prompt.taxonomy {
                    let label = classify_decision(prompt, &text).unwrap();
                    prop_assert!(tax.contains(&label), "label {label:?} outside taxonomy");
                }
            }
            if let Some(c) = extract_confidence(&text) {
                prop_assert!((1..=10).contains(&c));
            }
            if let Some(o) = extract_offer(&text) {
                prop_assert!(o <= 100);
            }
            let _ = extract_mft_ranking(&text);
            if let Some(d) = extract_kohlberg_distribution(&text) {
                let sum: f64 = d.iter().sum();
                prop_assert!((95.0..=105.0).contains(&sum));
            }
        }

        // Determinism: same text, same result.
        #[test]
        fn classify_is_deterministic(text in "\\PC{0,200}") {
            let b = battery();
            let trolley = b.get("trolley").unwrap();
            let a = classify_decision(trolley, &text).unwrap();
            let b2 = classify_decision(trolley, &text).unwrap();
            prop_assert_eq!(a, b2);
        }
    }
}
