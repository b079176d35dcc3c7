//! Stability and divergence statistics over a store of classified responses:
//! modal consistency, pairwise agreement, length-CV temperature sensitivity,
//! Jaccard lexical stability, run-to-run determinism, dominant-decision
//! rates, confidence statistics, and endpoint response shifts.
//!
//! All statistics are pure functions of the (records, classifications)
//! snapshot; grouping is by key, never by record order. Percentages are
//! computed as `100 * count / denominator` in that order so that exact
//! ratios stay exact in floating point.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{Battery, PromptDomain, Tier, UNCLEAR};
use crate::campaign::{temp_milli, CellKey, ResponseRecord};
use crate::classify::{tokenize, ClassifiedResponse};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("zero mean word count; CV undefined")]
    ZeroMean,
    #[error("need at least two temperatures, found {0}")]
    SingleTemperature(usize),
    #[error("no group has two or more runs")]
    NoRepeatedRuns,
    #[error("no records at endpoint temperature {0}")]
    MissingEndpoint(f64),
}

// ---------------------------------------------------------------------------
// Elementary statistics
// ---------------------------------------------------------------------------

/// Mean of a non-empty slice.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divide by n): the temperature grid is the
/// full design, not a sample.
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Coefficient of variation: `100 * SD / mean` of the given series.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::SingleTemperature(values.len()));
    }
    let m = mean(values);
    if m == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    Ok(100.0 * population_sd(values) / m)
}

/// Token set of a text under the declared convention: lowercased maximal
/// alphanumeric runs.
pub fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard similarity of two texts' token sets. Two empty sets compare as 1.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa = token_set(a);
    let sb = token_set(b);
    jaccard_sets(&sa, &sb)
}

/// Jaccard similarity of two prebuilt token sets.
pub fn jaccard_sets(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

// ---------------------------------------------------------------------------
// Modal statistics
// ---------------------------------------------------------------------------

/// The most frequent label of a list and its share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modal {
    pub label: String,
    pub count: usize,
    /// `100 * count / len(labels)`.
    pub percent: f64,
    /// True when another label shares the maximal count; the winner is the
    /// label ranked earliest by `tie_rank`.
    pub tied: bool,
}

/// Most frequent label with deterministic tie-breaking.
///
/// `tie_rank` maps a label to its position in the taxonomy order; the
/// lowest rank wins ties.
pub fn modal_consistency(
    labels: &[String],
    tie_rank: impl Fn(&str) -> usize,
) -> Result<Modal, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput("modal_consistency over no labels"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for label in labels {
        *counts.entry(label.as_str()).or_default() += 1;
    }
    let max = *counts.values().max().expect("non-empty counts");
    let mut winners: Vec<&str> = counts
        .iter()
        .filter(|(_, &c)| c == max)
        .map(|(&l, _)| l)
        .collect();
    winners.sort_by_key(|l| tie_rank(l));
    Ok(Modal {
        label: winners[0].to_string(),
        count: max,
        percent: 100.0 * max as f64 / labels.len() as f64,
        tied: winners.len() > 1,
    })
}

/// Agreement between two aligned label grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// `100 * equal / retained`.
    pub percent: f64,
    pub equal: usize,
    /// Cells where neither side is `Unclear`.
    pub retained: usize,
    pub dropped: usize,
}

/// Percentage of aligned cells with equal labels, dropping cells where
/// either side is `Unclear` from numerator and denominator.
pub fn pairwise_agreement(cells: &[(String, String)]) -> Result<Agreement, MetricsError> {
    let mut equal = 0usize;
    let mut retained = 0usize;
    for (a, b) in cells {
        if a == UNCLEAR || b == UNCLEAR {
            continue;
        }
        retained += 1;
        if a == b {
            equal += 1;
        }
    }
    if retained == 0 {
        return Err(MetricsError::EmptyInput("agreement over empty retained cell set"));
    }
    Ok(Agreement {
        percent: 100.0 * equal as f64 / retained as f64,
        equal,
        retained,
        dropped: cells.len() - retained,
    })
}

// ---------------------------------------------------------------------------
// Bundle sections
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCell {
    pub model: String,
    pub prompt: String,
    /// Modal non-`Unclear` label, absent when every response was unclear.
    pub modal_label: Option<String>,
    /// `100 * modal count / |temperature grid|`.
    pub percent: f64,
    pub tied: bool,
    /// Number of non-`Unclear` classifications in the cell.
    pub classified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMean {
    pub model: String,
    pub mean: f64,
    pub prompts_counted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySection {
    pub cells: Vec<ConsistencyCell>,
    pub model_means: Vec<ModelMean>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    pub percent: f64,
    pub equal: usize,
    pub retained: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSection {
    pub prompt_set: Vec<String>,
    pub pairs: Vec<PairAgreement>,
    pub grand_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub model: String,
    pub domain: PromptDomain,
    pub cv: f64,
    pub per_temp_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSection {
    pub cells: Vec<CvCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub model: String,
    pub prompt: String,
    /// Temperatures this profile covers, ascending.
    pub temperatures: Vec<f64>,
    /// Jaccard of each temperature's run-1 text against the lowest
    /// temperature's text; 1 at the reference itself.
    pub jaccard_vs_reference: Vec<f64>,
    pub adjacent_jaccard_mean: f64,
    /// Distinct run-1 fingerprints across the temperatures.
    pub unique_response_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRate {
    pub prompt: String,
    pub rate: f64,
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantRates {
    pub model: String,
    pub per_prompt: Vec<PromptRate>,
    pub mean: f64,
    /// Share of counted prompts whose rate is exactly 100.
    pub fully_stable_fraction: f64,
    /// Prompts skipped because every cell was `Unclear` or unclassified.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySection {
    pub profiles: Vec<StabilityProfile>,
    pub dominant: Vec<DominantRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupVerdict {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub runs: usize,
    pub identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminismSection {
    /// `100 * identical / total` over groups with at least two runs; absent
    /// when no such group exists.
    pub percent: Option<f64>,
    pub groups_total: usize,
    pub groups_identical: usize,
    pub verdicts: Vec<GroupVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBin {
    pub temperature: f64,
    pub mean: f64,
    pub sd: f64,
    pub range: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSection {
    pub per_temp: Vec<ConfidenceBin>,
    pub grand_mean: Option<f64>,
    /// Population SD of the per-temperature means.
    pub sd_across_bins: Option<f64>,
    pub values_total: usize,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub model: String,
    pub prompt: String,
    pub low_label: String,
    pub high_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSection {
    pub low: f64,
    pub high: f64,
    pub entries: Vec<ShiftEntry>,
}

/// Every statistic computed for one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub schema_version: u32,
    pub models: Vec<String>,
    /// Taxonomy-bearing prompts present, in battery order.
    pub prompts: Vec<String>,
    pub temperatures: Vec<f64>,
    pub consistency: ConsistencySection,
    pub agreement: AgreementSection,
    pub cv: CvSection,
    pub stability: StabilitySection,
    pub determinism: DeterminismSection,
    pub confidence: ConfidenceSection,
    pub shifts: ShiftSection,
}

/// Knobs for [`compute_bundle`].
#[derive(Debug, Clone, Default)]
pub struct BundleOptions {
    /// Model column order; distinct store models sorted by name when absent.
    pub model_order: Option<Vec<String>>,
    /// Agreement cell set; core-tier prompts present when absent.
    pub agreement_prompts: Option<Vec<String>>,
    /// Shift endpoints; the grid extremes when absent.
    pub shift_low: Option<f64>,
    pub shift_high: Option<f64>,
}

const BUNDLE_SCHEMA_VERSION: u32 = 1;

struct Indexed<'a> {
    records: HashMap<CellKey, &'a ResponseRecord>,
    decisions: HashMap<(String, String, u32), String>,
    confidences: HashMap<CellKey, u8>,
    models: Vec<String>,
    temps: Vec<f64>,
}

fn index<'a>(
    records: &'a [ResponseRecord],
    classified: &[ClassifiedResponse],
    options: &BundleOptions,
) -> Indexed<'a> {
    let mut map = HashMap::new();
    let mut model_set = BTreeSet::new();
    let mut temp_set = BTreeSet::new();
    for r in records {
        map.insert(r.key.cell(), r);
        model_set.insert(r.key.model.clone());
        temp_set.insert(temp_milli(r.key.temperature));
    }
    let models = match &options.model_order {
        Some(order) => {
            let mut out: Vec<String> = order
                .iter()
                .filter(|m| model_set.contains(*m))
                .cloned()
                .collect();
            for m in &model_set {
                if !out.contains(m) {
                    out.push(m.clone());
                }
            }
            out
        }
        None => model_set.into_iter().collect(),
    };
    let temps: Vec<f64> = temp_set.into_iter().map(|m| m as f64 / 1000.0).collect();

    // Decision labels are taken from run 1; run-to-run variation is the
    // determinism check's concern.
    let mut decisions = HashMap::new();
    let mut confidences = HashMap::new();
    for c in classified {
        if let Some(conf) = c.confidence {
            confidences.insert(c.key.cell(), conf);
        }
        if c.key.run != 1 {
            continue;
        }
        if let Some(d) = &c.decision {
            decisions.insert(
                (
                    c.key.model.clone(),
                    c.key.prompt_id.clone(),
                    temp_milli(c.key.temperature),
                ),
                d.clone(),
            );
        }
    }
    Indexed {
        records: map,
        decisions,
        confidences,
        models,
        temps,
    }
}

fn tie_rank_for<'a>(battery: &'a Battery, prompt_id: &str) -> impl Fn(&str) -> usize + 'a {
    let taxonomy = battery.get(prompt_id).and_then(|p| p.taxonomy.clone());
    move |label: &str| taxonomy.as_ref().map(|t| t.tie_rank(label)).unwrap_or(usize::MAX)
}

/// Compute the full metrics bundle for a snapshot of records and their
/// classifications.
pub fn compute_bundle(
    battery: &Battery,
    records: &[ResponseRecord],
    classified: &[ClassifiedResponse],
    options: &BundleOptions,
) -> Result<MetricsBundle, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput("no records in store"));
    }
    let idx = index(records, classified, options);

    let present_prompt_ids: HashSet<&str> = records
        .iter()
        .map(|r| r.key.prompt_id.as_str())
        .collect();
    let classifiable: Vec<&str> = battery
        .prompts()
        .iter()
        .filter(|p| p.has_taxonomy() && present_prompt_ids.contains(p.id.as_str()))
        .map(|p| p.id.as_str())
        .collect();
    let all_present: Vec<&str> = battery
        .prompts()
        .iter()
        .filter(|p| present_prompt_ids.contains(p.id.as_str()))
        .map(|p| p.id.as_str())
        .collect();

    let consistency = consistency_section(battery, &idx, &classifiable);
    let agreement = agreement_section(battery, &idx, &classifiable, options)?;
    let cv = cv_section(battery, records, &idx);
    let stability = stability_section(battery, &idx, &all_present, &classifiable);
    let determinism = determinism_section(records);
    let confidence = confidence_section(records, &idx);
    let shifts = shift_section(battery, &idx, &classifiable, options)?;

    Ok(MetricsBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        models: idx.models.clone(),
        prompts: classifiable.iter().map(|s| s.to_string()).collect(),
        temperatures: idx.temps.clone(),
        consistency,
        agreement,
        cv,
        stability,
        determinism,
        confidence,
        shifts,
    })
}

fn consistency_section(
    battery: &Battery,
    idx: &Indexed,
    classifiable: &[&str],
) -> ConsistencySection {
    let mut cells = Vec::new();
    let mut model_means = Vec::new();
    for model in &idx.models {
        let mut percents = Vec::new();
        for prompt in classifiable {
            let labels: Vec<String> = idx
                .temps
                .iter()
                .filter_map(|t| {
                    idx.decisions
                        .get(&(model.clone(), prompt.to_string(), temp_milli(*t)))
                        .cloned()
                })
                .filter(|l| l != UNCLEAR)
                .collect();
            let classified = labels.len();
            let cell = if labels.is_empty() {
                ConsistencyCell {
                    model: model.clone(),
                    prompt: prompt.to_string(),
                    modal_label: None,
                    percent: 0.0,
                    tied: false,
                    classified,
                }
            } else {
                let modal = modal_consistency(&labels, tie_rank_for(battery, prompt))
                    .expect("non-empty labels");
                let percent = 100.0 * modal.count as f64 / idx.temps.len() as f64;
                percents.push(percent);
                ConsistencyCell {
                    model: model.clone(),
                    prompt: prompt.to_string(),
                    modal_label: Some(modal.label),
                    percent,
                    tied: modal.tied,
                    classified,
                }
            };
            cells.push(cell);
        }
        if !percents.is_empty() {
            model_means.push(ModelMean {
                model: model.clone(),
                mean: mean(&percents),
                prompts_counted: percents.len(),
            });
        }
    }
    ConsistencySection { cells, model_means }
}

fn agreement_section(
    battery: &Battery,
    idx: &Indexed,
    classifiable: &[&str],
    options: &BundleOptions,
) -> Result<AgreementSection, MetricsError> {
    let prompt_set: Vec<String> = match &options.agreement_prompts {
        Some(set) => set.clone(),
        None => battery
            .prompts()
            .iter()
            .filter(|p| p.tier == Tier::Core6 && classifiable.contains(&p.id.as_str()))
            .map(|p| p.id.clone())
            .collect(),
    };
    let mut pairs = Vec::new();
    let mut percents = Vec::new();
    for (i, a) in idx.models.iter().enumerate() {
        for b in idx.models.iter().skip(i + 1) {
            let mut cells = Vec::new();
            for prompt in &prompt_set {
                for t in &idx.temps {
                    let ka = (a.clone(), prompt.clone(), temp_milli(*t));
                    let kb = (b.clone(), prompt.clone(), temp_milli(*t));
                    if let (Some(la), Some(lb)) = (idx.decisions.get(&ka), idx.decisions.get(&kb))
                    {
                        cells.push((la.clone(), lb.clone()));
                    }
                }
            }
            if cells.is_empty() {
                continue;
            }
            let agreement = pairwise_agreement(&cells)?;
            percents.push(agreement.percent);
            pairs.push(PairAgreement {
                a: a.clone(),
                b: b.clone(),
                percent: agreement.percent,
                equal: agreement.equal,
                retained: agreement.retained,
                dropped: agreement.dropped,
            });
        }
    }
    let grand_mean = if percents.is_empty() { 0.0 } else { mean(&percents) };
    Ok(AgreementSection {
        prompt_set,
        pairs,
        grand_mean,
    })
}

fn cv_section(battery: &Battery, records: &[ResponseRecord], idx: &Indexed) -> CvSection {
    let mut cells = Vec::new();
    for model in &idx.models {
        for domain in PromptDomain::ALL {
            let domain_prompts: HashSet<&str> = battery
                .domain(domain)
                .iter()
                .map(|p| p.id.as_str())
                .collect();
            // Mean word count per temperature over the domain's prompts
            // (every run included).
            let mut per_temp_means = Vec::new();
            for t in &idx.temps {
                let counts: Vec<f64> = records
                    .iter()
                    .filter(|r| {
                        r.key.model == *model
                            && temp_milli(r.key.temperature) == temp_milli(*t)
                            && domain_prompts.contains(r.key.prompt_id.as_str())
                    })
                    .map(|r| r.words as f64)
                    .collect();
                if !counts.is_empty() {
                    per_temp_means.push(mean(&counts));
                }
            }
            if let Ok(cv) = coefficient_of_variation(&per_temp_means) {
                cells.push(CvCell {
                    model: model.clone(),
                    domain,
                    cv,
                    per_temp_means,
                });
            }
        }
    }
    CvSection { cells }
}

fn stability_section(
    battery: &Battery,
    idx: &Indexed,
    all_present: &[&str],
    classifiable: &[&str],
) -> StabilitySection {
    let mut profiles = Vec::new();
    for model in &idx.models {
        for prompt in all_present {
            let series: Vec<(f64, &ResponseRecord)> = idx
                .temps
                .iter()
                .filter_map(|t| {
                    idx.records
                        .get(&CellKey {
                            model: model.clone(),
                            prompt_id: prompt.to_string(),
                            temp_milli: temp_milli(*t),
                            run: 1,
                        })
                        .map(|r| (*t, *r))
                })
                .collect();
            if series.len() < 2 {
                continue;
            }
            let sets: Vec<HashSet<String>> =
                series.iter().map(|(_, r)| token_set(&r.text)).collect();
            let jaccard_vs_reference: Vec<f64> =
                sets.iter().map(|s| jaccard_sets(&sets[0], s)).collect();
            let adjacent: Vec<f64> = sets
                .windows(2)
                .map(|w| jaccard_sets(&w[0], &w[1]))
                .collect();
            let unique_response_count = series
                .iter()
                .map(|(_, r)| r.fingerprint.as_str())
                .collect::<HashSet<_>>()
                .len();
            profiles.push(StabilityProfile {
                model: model.clone(),
                prompt: prompt.to_string(),
                temperatures: series.iter().map(|(t, _)| *t).collect(),
                jaccard_vs_reference,
                adjacent_jaccard_mean: mean(&adjacent),
                unique_response_count,
            });
        }
    }

    let extended: Vec<&str> = battery
        .extended12()
        .iter()
        .filter(|p| classifiable.contains(&p.id.as_str()))
        .map(|p| p.id.as_str())
        .collect();
    let mut dominant = Vec::new();
    for model in &idx.models {
        let mut per_prompt = Vec::new();
        let mut skipped = Vec::new();
        for prompt in &extended {
            let labels: Vec<String> = idx
                .temps
                .iter()
                .filter_map(|t| {
                    idx.decisions
                        .get(&(model.clone(), prompt.to_string(), temp_milli(*t)))
                        .cloned()
                })
                .filter(|l| l != UNCLEAR)
                .collect();
            if labels.is_empty() {
                skipped.push(prompt.to_string());
                continue;
            }
            let modal =
                modal_consistency(&labels, tie_rank_for(battery, prompt)).expect("non-empty");
            per_prompt.push(PromptRate {
                prompt: prompt.to_string(),
                rate: modal.percent,
                tied: modal.tied,
            });
        }
        if per_prompt.is_empty() && skipped.is_empty() {
            continue;
        }
        let rates: Vec<f64> = per_prompt.iter().map(|p| p.rate).collect();
        let fully_stable = per_prompt.iter().filter(|p| p.rate == 100.0).count();
        dominant.push(DominantRates {
            model: model.clone(),
            mean: if rates.is_empty() { 0.0 } else { mean(&rates) },
            fully_stable_fraction: if per_prompt.is_empty() {
                0.0
            } else {
                fully_stable as f64 / per_prompt.len() as f64
            },
            per_prompt,
            skipped,
        });
    }

    StabilitySection { profiles, dominant }
}

/// Group records by (model, prompt, temperature) and check whether all runs
/// in each multi-run group share one fingerprint.
pub fn determinism_section(records: &[ResponseRecord]) -> DeterminismSection {
    let mut groups: BTreeMap<(String, String, u32), Vec<&ResponseRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.key.model.clone(),
                r.key.prompt_id.clone(),
                temp_milli(r.key.temperature),
            ))
            .or_default()
            .push(r);
    }
    let mut verdicts = Vec::new();
    let mut total = 0usize;
    let mut identical_count = 0usize;
    for ((model, prompt, tm), group) in &groups {
        if group.len() < 2 {
            continue;
        }
        total += 1;
        let first = &group[0].fingerprint;
        let identical = group.iter().all(|r| &r.fingerprint == first);
        if identical {
            identical_count += 1;
        }
        verdicts.push(GroupVerdict {
            model: model.clone(),
            prompt: prompt.clone(),
            temperature: *tm as f64 / 1000.0,
            runs: group.len(),
            identical,
        });
    }
    DeterminismSection {
        percent: (total > 0).then(|| 100.0 * identical_count as f64 / total as f64),
        groups_total: total,
        groups_identical: identical_count,
        verdicts,
    }
}

fn confidence_section(records: &[ResponseRecord], idx: &Indexed) -> ConfidenceSection {
    let mut per_temp = Vec::new();
    let mut all_values = Vec::new();
    let mut bin_means = Vec::new();
    let mut missing = 0usize;
    for t in &idx.temps {
        let mut values = Vec::new();
        for r in records {
            if temp_milli(r.key.temperature) != temp_milli(*t) {
                continue;
            }
            match idx.confidences.get(&r.key.cell()) {
                Some(&v) => values.push(v as f64),
                None => missing += 1,
            }
        }
        if values.is_empty() {
            continue;
        }
        let m = mean(&values);
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        per_temp.push(ConfidenceBin {
            temperature: *t,
            mean: m,
            sd: population_sd(&values),
            range: max - min,
            count: values.len(),
        });
        bin_means.push(m);
        all_values.extend(values);
    }
    ConfidenceSection {
        grand_mean: (!all_values.is_empty()).then(|| mean(&all_values)),
        sd_across_bins: (!bin_means.is_empty()).then(|| population_sd(&bin_means)),
        values_total: all_values.len(),
        missing,
        per_temp,
    }
}

fn shift_section(
    battery: &Battery,
    idx: &Indexed,
    classifiable: &[&str],
    options: &BundleOptions,
) -> Result<ShiftSection, MetricsError> {
    let low = options
        .shift_low
        .or_else(|| idx.temps.first().copied())
        .ok_or(MetricsError::EmptyInput("no temperatures"))?;
    let high = options
        .shift_high
        .or_else(|| idx.temps.last().copied())
        .ok_or(MetricsError::EmptyInput("no temperatures"))?;
    if !idx.temps.iter().any(|t| temp_milli(*t) == temp_milli(low)) {
        return Err(MetricsError::MissingEndpoint(low));
    }
    if !idx.temps.iter().any(|t| temp_milli(*t) == temp_milli(high)) {
        return Err(MetricsError::MissingEndpoint(high));
    }

    let extended: Vec<&str> = battery
        .extended12()
        .iter()
        .filter(|p| classifiable.contains(&p.id.as_str()))
        .map(|p| p.id.as_str())
        .collect();
    let mut entries = Vec::new();
    for model in &idx.models {
        for prompt in &extended {
            let at = |t: f64| {
                idx.decisions
                    .get(&(model.clone(), prompt.to_string(), temp_milli(t)))
            };
            if let (Some(low_label), Some(high_label)) = (at(low), at(high)) {
                if low_label != UNCLEAR && high_label != UNCLEAR && low_label != high_label {
                    entries.push(ShiftEntry {
                        model: model.clone(),
                        prompt: prompt.to_string(),
                        low_label: low_label.clone(),
                        high_label: high_label.clone(),
                    });
                }
            }
        }
    }
    Ok(ShiftSection { low, high, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strings(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn order_of(order: &[&str]) -> impl Fn(&str) -> usize + '_ {
        move |l| order.iter().position(|x| *x == l).unwrap_or(usize::MAX)
    }

    #[test]
    fn modal_all_same_is_100() {
        let labels = strings(&["Pull"; 10]);
        let m = modal_consistency(&labels, order_of(&["Pull"])).unwrap();
        assert_eq!(m.label, "Pull");
        assert_eq!(m.percent, 100.0);
        assert!(!m.tied);
    }

    #[test]
    fn modal_nine_of_ten_is_90() {
        let mut labels = strings(&["Pull"; 9]);
        labels.push("DoNothing".into());
        let m = modal_consistency(&labels, order_of(&["Pull", "DoNothing"])).unwrap();
        assert_eq!(m.label, "Pull");
        assert_eq!(m.percent, 90.0);
    }

    #[test]
    fn modal_tie_breaks_by_taxonomy_order_and_flags() {
        let mut labels = strings(&["Push"; 5]);
        labels.extend(strings(&["NotPush"; 5]));
        let m = modal_consistency(&labels, order_of(&["Push", "NotPush"])).unwrap();
        assert_eq!(m.label, "Push");
        assert_eq!(m.percent, 50.0);
        assert!(m.tied);
    }

    #[test]
    fn modal_empty_is_an_error() {
        assert!(modal_consistency(&[], order_of(&[])).is_err());
    }

    #[test]
    fn agreement_identical_grids_are_100() {
        let cells: Vec<(String, String)> =
            (0..60).map(|_| ("Pull".to_string(), "Pull".to_string())).collect();
        let a = pairwise_agreement(&cells).unwrap();
        assert_eq!(a.percent, 100.0);
        assert_eq!(a.retained, 60);
    }

    #[test]
    fn agreement_disjoint_grids_are_0() {
        let cells: Vec<(String, String)> =
            (0..60).map(|_| ("Pull".to_string(), "DoNothing".to_string())).collect();
        assert_eq!(pairwise_agreement(&cells).unwrap().percent, 0.0);
    }

    #[test]
    fn agreement_drops_unclear_cells_from_both_sides() {
        let mut cells: Vec<(String, String)> =
            (0..26).map(|_| ("A".to_string(), "A".to_string())).collect();
        cells.extend((0..24).map(|_| ("A".to_string(), "B".to_string())));
        cells.extend((0..10).map(|_| ("Unclear".to_string(), "A".to_string())));
        let a = pairwise_agreement(&cells).unwrap();
        assert_eq!(a.retained, 50);
        assert_eq!(a.dropped, 10);
        assert_eq!(a.percent, 52.0);
    }

    #[test]
    fn agreement_all_unclear_is_an_error() {
        let cells = vec![("Unclear".to_string(), "A".to_string())];
        assert!(pairwise_agreement(&cells).is_err());
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard("identical text", "identical text"), 1.0);
        assert_eq!(jaccard("alpha beta", "gamma delta"), 0.0);
        assert_eq!(jaccard("a b c", "b c d"), 0.5);
        assert_eq!(jaccard("", ""), 1.0);
        assert_eq!(jaccard("a", ""), 0.0);
    }

    #[test]
    fn cv_examples() {
        // Constant series has zero CV.
        assert_eq!(coefficient_of_variation(&[150.0, 150.0, 150.0]).unwrap(), 0.0);
        // Two-point series: mean 150, population SD 50.
        let cv = coefficient_of_variation(&[100.0, 200.0]).unwrap();
        assert!((cv - 100.0 * 50.0 / 150.0).abs() < 1e-12);
        assert_eq!(format!("{cv:.1}"), "33.3");
        // Error paths.
        assert!(matches!(
            coefficient_of_variation(&[100.0]),
            Err(MetricsError::SingleTemperature(1))
        ));
        assert!(matches!(
            coefficient_of_variation(&[0.0, 0.0]),
            Err(MetricsError::ZeroMean)
        ));
    }

    #[test]
    fn dominant_rate_arithmetic_example() {
        // One prompt at 9-of-10 dominant and eleven at 10-of-10:
        // mean = (90 + 11 * 100) / 12, fully stable fraction 11/12.
        let rates: Vec<f64> = std::iter::once(90.0).chain(std::iter::repeat_n(100.0, 11)).collect();
        let m = mean(&rates);
        assert!((m - (90.0 + 1100.0) / 12.0).abs() < 1e-12);
        assert!((m - 99.166_666_666_666_67).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn jaccard_is_symmetric_and_bounded(a in "\\PC{0,80}", b in "\\PC{0,80}") {
            let ab = jaccard(&a, &b);
            let ba = jaccard(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(jaccard(&a, &a), 1.0);
        }

        #[test]
        fn jaccard_is_1_iff_token_sets_equal(a in "[a-c ]{0,24}", b in "[a-c ]{0,24}") {
            let equal_sets = token_set(&a) == token_set(&b);
            prop_assert_eq!(jaccard(&a, &b) == 1.0, equal_sets);
        }

        #[test]
        fn modal_is_permutation_invariant(
            mut labels in proptest::collection::vec("[ab]", 1..20),
            seed in 0u64..1000,
        ) {
            let order = ["a", "b"];
            let before = modal_consistency(&labels, order_of(&order)).unwrap();
            // Deterministic shuffle.
            let n = labels.len();
            for i in 0..n {
                let j = (seed as usize + i * 7) % n;
                labels.swap(i, j);
            }
            let after = modal_consistency(&labels, order_of(&order)).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn modal_percent_bounds(labels in proptest::collection::vec("[abc]", 1..30)) {
            let order = ["a", "b", "c"];
            let m = modal_consistency(&labels, order_of(&order)).unwrap();
            let floor = 100.0 / labels.len() as f64;
            prop_assert!(m.percent >= floor - 1e-12);
            prop_assert!(m.percent <= 100.0);
        }

        #[test]
        fn agreement_is_symmetric(cells in proptest::collection::vec(("[abU]", "[abU]"), 1..40)) {
            let fwd: Vec<(String, String)> = cells
                .iter()
                .map(|(a, b)| (a.replace('U', "Unclear"), b.replace('U', "Unclear")))
                .collect();
            let rev: Vec<(String, String)> = fwd.iter().map(|(a, b)| (b.clone(), a.clone())).collect();
            match (pairwise_agreement(&fwd), pairwise_agreement(&rev)) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x.percent, y.percent);
                    prop_assert_eq!(x.retained, y.retained);
                }
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "asymmetric result: {other:?}"),
            }
        }
    }
}
