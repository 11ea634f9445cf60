//! Skill library: scam-pattern records that steer memory retrieval, seed
//! reflections and grow from assessor feedback.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AppCategory, Label, ObservationWindow, HOURS_PER_EVENT};
use crate::memory::{MemoryHit, MemoryStore};
use crate::text::{matched_phrases, tokenize};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkillError {
    #[error("evolve-requires-risky-or-scam: got label Normal")]
    NormalLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Seed,
    Evolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub scam_type: String,
    pub description: String,
    /// Lowercase keywords or phrases, matched on word boundaries.
    pub early_indicators: Vec<String>,
    pub typical_app_sequence: Vec<AppCategory>,
    pub example_reflections: Vec<String>,
    pub prompt_enhancement: String,
    pub provenance: Provenance,
    pub update_count: u64,
}

impl Skill {
    /// Distinct indicators of this skill found in `text`.
    pub fn matched_indicators<'a>(&'a self, text: &str) -> Vec<&'a str> {
        matched_phrases(text, &self.early_indicators)
    }

    pub fn indicator_hits(&self, text: &str) -> usize {
        self.matched_indicators(text).len()
    }

    /// Affinity of a single historical category with the categories now in
    /// view: 1 when the category precedes a visible category in the typical
    /// sequence, 0.5 when it only appears in the sequence, 0 otherwise.
    pub fn entry_affinity(&self, category: AppCategory, window: &[AppCategory]) -> f64 {
        let seq = &self.typical_app_sequence;
        let mut seen = false;
        for (i, c) in seq.iter().enumerate() {
            if *c != category {
                continue;
            }
            seen = true;
            if seq[i + 1..].iter().any(|later| window.contains(later)) {
                return 1.0;
            }
        }
        if seen {
            0.5
        } else {
            0.0
        }
    }

    /// Longest common subsequence between the typical sequence and
    /// `categories`, normalized by the sequence length.
    pub fn sequence_affinity(&self, categories: &[AppCategory]) -> f64 {
        let seq = &self.typical_app_sequence;
        if seq.is_empty() {
            return 0.0;
        }
        lcs_len(seq, categories) as f64 / seq.len() as f64
    }
}

fn lcs_len(a: &[AppCategory], b: &[AppCategory]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LibraryFile {
    frozen: bool,
    skills: Vec<Skill>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "LibraryFile", into = "LibraryFile")]
pub struct SkillLibrary {
    skills: BTreeMap<String, Skill>,
    pub frozen: bool,
}

impl From<LibraryFile> for SkillLibrary {
    fn from(f: LibraryFile) -> Self {
        Self {
            skills: f.skills.into_iter().map(|s| (s.scam_type.clone(), s)).collect(),
            frozen: f.frozen,
        }
    }
}

impl From<SkillLibrary> for LibraryFile {
    fn from(l: SkillLibrary) -> Self {
        Self {
            frozen: l.frozen,
            skills: l.skills.into_values().collect(),
        }
    }
}

impl SkillLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// One seed skill per scam type. Types without a catalog entry get a
    /// generic skill whose indicators come from the type name.
    pub fn seeded<S: AsRef<str>>(scam_types: &[S]) -> Self {
        let mut lib = Self::new();
        for t in scam_types {
            let t = t.as_ref();
            let skill = seed_skill(t).unwrap_or_else(|| generic_seed(t));
            lib.insert(skill);
        }
        lib
    }

    pub fn insert(&mut self, skill: Skill) {
        self.skills.insert(skill.scam_type.clone(), skill);
    }

    pub fn get(&self, scam_type: &str) -> Option<&Skill> {
        self.skills.get(scam_type)
    }

    pub fn skills(&self) -> impl Iterator<Item = &Skill> {
        self.skills.values()
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn total_indicators(&self) -> usize {
        self.skills.values().map(|s| s.early_indicators.len()).sum()
    }
}

/// Weights of the retrieval score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalWeights {
    pub keyword: f64,
    pub sequence: f64,
    pub recency: f64,
    /// Recency reaches zero after this many hours.
    pub recency_horizon_hours: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self {
            keyword: 1.0,
            sequence: 0.5,
            recency: 0.5,
            recency_horizon_hours: 48.0,
        }
    }
}

impl RetrievalWeights {
    pub fn recency(&self, orders_back: usize) -> f64 {
        (1.0 - orders_back as f64 * HOURS_PER_EVENT / self.recency_horizon_hours).max(0.0)
    }
}

/// Retrieval priority of a historical entry for the current window: the best
/// skill's weighted sum of indicator hits, sequence affinity and recency.
/// An empty library scores every entry 0.
pub fn score_candidate(
    entry: &MemoryHit,
    window: &ObservationWindow,
    library: &SkillLibrary,
    now_order: usize,
    weights: &RetrievalWeights,
) -> f64 {
    let categories = window.categories();
    let recency = weights.recency(now_order.saturating_sub(entry.order));
    library
        .skills()
        .map(|skill| {
            skill.indicator_hits(&entry.summary) as f64 * weights.keyword
                + skill.entry_affinity(entry.app_category, &categories) * weights.sequence
                + recency * weights.recency
        })
        .fold(0.0, f64::max)
}

/// Top-`budget` history entries for `entities`, restricted to orders before
/// the window, returned chronologically. Ties prefer the later entry, then
/// the lexicographically smaller entity.
pub fn rank<S: AsRef<str>>(
    memory: &MemoryStore,
    entities: &[S],
    library: &SkillLibrary,
    window: &ObservationWindow,
    budget: usize,
    weights: &RetrievalWeights,
) -> Vec<MemoryHit> {
    if budget == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(f64, MemoryHit)> = memory
        .query(entities, window.start)
        .into_iter()
        .map(|h| (score_candidate(&h, window, library, window.end, weights), h))
        .collect();
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.total_cmp(sa)
            .then(b.order.cmp(&a.order))
            .then(a.entity.cmp(&b.entity))
    });
    scored.truncate(budget);
    let mut out: Vec<MemoryHit> = scored.into_iter().map(|(_, h)| h).collect();
    out.sort_by_key(|h| h.order);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvolveOutcome {
    Updated {
        scam_type: String,
        added_indicators: Vec<String>,
        added_sequence: Vec<AppCategory>,
    },
    Created {
        scam_type: String,
    },
    /// No skill matched and nothing salient could be extracted.
    Unchanged,
    Frozen,
}

const MAX_NEW_TERMS: usize = 3;

const STOPWORDS: &[&str] = &[
    "about", "after", "again", "all", "also", "and", "any", "app", "apps", "are", "assessment",
    "because", "been", "before", "being", "between", "both", "but", "can", "could", "did", "does",
    "during", "each", "evidence", "for", "from", "had", "has", "have", "her", "here", "him", "his",
    "history", "how", "indicator", "indicators", "into", "its", "just", "label", "logistic",
    "matched", "more", "most", "none", "normal", "not", "now", "off", "once", "only", "opened",
    "other", "our", "out", "over", "own", "probability", "risky", "same", "scam", "score", "she",
    "should", "skill", "skills", "some", "such", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "through", "top", "under", "until", "user", "very",
    "was", "were", "what", "when", "where", "which", "while", "who", "why", "will", "window",
    "with", "would", "you", "your", "contributions",
];

fn is_salient(token: &str) -> bool {
    token.chars().count() >= 3
        && token.chars().all(|c| c.is_alphabetic() || c == '-')
        && !STOPWORDS.contains(&token)
}

/// Up to three salient rationale terms absent from `existing` indicators,
/// ranked by frequency, then length, then alphabetically.
pub fn novel_terms(rationale: &str, existing: &[String]) -> Vec<String> {
    let known: Vec<String> = existing.iter().flat_map(|i| tokenize(i)).collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in tokenize(rationale) {
        if is_salient(&t) && !existing.contains(&t) && !known.contains(&t) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut terms: Vec<(String, usize)> = counts.into_iter().collect();
    terms.sort_by(|(a, ca), (b, cb)| {
        cb.cmp(ca)
            .then(b.chars().count().cmp(&a.chars().count()))
            .then(a.cmp(b))
    });
    terms.into_iter().take(MAX_NEW_TERMS).map(|(t, _)| t).collect()
}

/// The most repeated pair of distinct consecutive categories; ties go to the
/// pair seen first.
pub fn dominant_bigram(categories: &[AppCategory]) -> Option<(AppCategory, AppCategory)> {
    let mut counts: Vec<((AppCategory, AppCategory), usize)> = Vec::new();
    for w in categories.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let pair = (w[0], w[1]);
        match counts.iter_mut().find(|(p, _)| *p == pair) {
            Some((_, n)) => *n += 1,
            None => counts.push((pair, 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    counts.into_iter().find(|(_, n)| *n == best).map(|(p, _)| p)
}

fn contains_pair(seq: &[AppCategory], pair: (AppCategory, AppCategory)) -> bool {
    seq.windows(2).any(|w| w[0] == pair.0 && w[1] == pair.1)
}

/// Folds an assessor rationale on a Risky/Scam window into the library.
///
/// The skill whose indicators best match the rationale absorbs up to three
/// novel rationale terms and the window's dominant category bigram. With no
/// matching skill a fresh `evolved_<n>` skill is created. Content changes are
/// idempotent for a repeated `(rationale, window)`; `update_count` is not.
pub fn evolve(
    library: &mut SkillLibrary,
    rationale: &str,
    window: &ObservationWindow,
    label: Label,
) -> Result<EvolveOutcome, SkillError> {
    if label == Label::Normal {
        return Err(SkillError::NormalLabel);
    }
    if library.frozen {
        return Ok(EvolveOutcome::Frozen);
    }
    let bigram = dominant_bigram(&window.categories());
    let mut target: Option<(&str, usize)> = None;
    for skill in library.skills() {
        let hits = skill.indicator_hits(rationale);
        if hits > 0 && target.is_none_or(|(_, best)| hits > best) {
            target = Some((skill.scam_type.as_str(), hits));
        }
    }
    match target.map(|(t, _)| t.to_string()) {
        Some(scam_type) => {
            let skill = library.skills.get_mut(&scam_type).expect("target exists");
            let added_indicators = novel_terms(rationale, &skill.early_indicators);
            skill.early_indicators.extend(added_indicators.iter().cloned());
            let mut added_sequence = Vec::new();
            if let Some(pair) = bigram {
                if !contains_pair(&skill.typical_app_sequence, pair) {
                    if skill.typical_app_sequence.last() != Some(&pair.0) {
                        added_sequence.push(pair.0);
                    }
                    added_sequence.push(pair.1);
                    skill.typical_app_sequence.extend(added_sequence.iter().copied());
                }
            }
            skill.update_count += 1;
            Ok(EvolveOutcome::Updated {
                scam_type,
                added_indicators,
                added_sequence,
            })
        }
        None => {
            let terms = novel_terms(rationale, &[]);
            if terms.is_empty() {
                return Ok(EvolveOutcome::Unchanged);
            }
            let mut n = library
                .skills()
                .filter(|s| s.provenance == Provenance::Evolved)
                .count();
            while library.skills.contains_key(&format!("evolved_{n}")) {
                n += 1;
            }
            let scam_type = format!("evolved_{n}");
            library.insert(Skill {
                scam_type: scam_type.clone(),
                description: "Pattern induced from assessor feedback on suspicious windows.".into(),
                prompt_enhancement: format!("Watch for windows mentioning {}.", terms.join(", ")),
                early_indicators: terms,
                typical_app_sequence: bigram.map(|(a, b)| vec![a, b]).unwrap_or_default(),
                example_reflections: vec![rationale.to_string()],
                provenance: Provenance::Evolved,
                update_count: 1,
            });
            Ok(EvolveOutcome::Created { scam_type })
        }
    }
}

fn skill(
    scam_type: &str,
    description: &str,
    indicators: &[&str],
    sequence: &[AppCategory],
    reflections: &[&str],
    enhancement: &str,
) -> Skill {
    Skill {
        scam_type: scam_type.to_string(),
        description: description.to_string(),
        early_indicators: indicators.iter().map(|s| s.to_string()).collect(),
        typical_app_sequence: sequence.to_vec(),
        example_reflections: reflections.iter().map(|s| s.to_string()).collect(),
        prompt_enhancement: enhancement.to_string(),
        provenance: Provenance::Seed,
        update_count: 0,
    }
}

/// Scam types with a built-in seed skill.
pub const CATALOG_TYPES: &[&str] = &[
    "fake_online_investment_financial_scam",
    "part_time_job_task_scam",
    "impersonating_customer_service_scam",
    "fake_loan_scam",
    "romance_investment_scam",
    "impersonating_police_scam",
];

/// Built-in seed skill for a known scam type.
pub fn seed_skill(scam_type: &str) -> Option<Skill> {
    use AppCategory::*;
    let s = match scam_type {
        "fake_online_investment_financial_scam" => skill(
            scam_type,
            "Victims are drawn from social or messaging platforms into bogus investment \
             schemes that promise high returns and end with the victim's deposits taken.",
            &[
                "investment",
                "high returns",
                "qr code",
                "investment app",
                "private group",
                "investment advice",
                "trading",
                "withdrawal",
                "test transaction",
            ],
            &[SocialMedia, InstantMessaging, Tools, Financial],
            &[
                "An unfamiliar investment app was installed right after a chat with a self-styled \
                 advisor; installing the app and trusting an unverified contact together point to fraud.",
                "A QR code from an unknown social contact led into a private investment group, \
                 which looks like early grooming.",
            ],
            "Look for investment app installs, QR codes from strangers, private advice groups and \
             small test transactions that precede larger deposits.",
        ),
        "part_time_job_task_scam" => skill(
            scam_type,
            "A stranger offers easy part-time income, moves the victim into a task group and a \
             third-party app, then demands growing prepayments to unlock earnings.",
            &[
                "part-time",
                "job group",
                "task",
                "commission",
                "income",
                "third-party app",
                "prepay",
                "unlock",
            ],
            &[InstantMessaging, Tools, InstantMessaging, Financial],
            &["A job-group contact pushed a third-party income app and then issued task instructions \
               ahead of a transfer request."],
            "Watch for part-time job offers from unknown contacts, task groups, third-party income \
             apps and any request to prepay before being paid.",
        ),
        "impersonating_customer_service_scam" => skill(
            scam_type,
            "Someone posing as platform customer service claims an order or account problem and \
             steers the victim into screen sharing or transfers to a 'safe' account.",
            &[
                "customer service",
                "refund",
                "order problem",
                "screen sharing",
                "safe account",
                "verification code",
                "membership",
            ],
            &[Communication, Shopping, Tools, Financial],
            &["A caller claiming to be customer service asked for screen sharing right after \
               an order-refund discussion."],
            "Flag unsolicited customer-service calls about refunds, screen-sharing installs and \
             requests for verification codes or transfers.",
        ),
        "fake_loan_scam" => skill(
            scam_type,
            "A fake lender advertises easy credit, then charges deposits, unfreezing fees or \
             insurance before any loan is paid out.",
            &[
                "loan",
                "credit limit",
                "low interest",
                "unfreeze",
                "deposit fee",
                "loan app",
                "bank card",
            ],
            &[SocialMedia, Tools, InstantMessaging, Financial],
            &["A loan app demanded an unfreezing fee before releasing funds."],
            "Attend to loan offers with low interest, loan app installs and any fee required \
             before funds are released.",
        ),
        "romance_investment_scam" => skill(
            scam_type,
            "An online romantic contact builds trust over days, then introduces a gambling or \
             investment platform and asks the victim to deposit money.",
            &[
                "dating",
                "sweetheart",
                "betting platform",
                "insider",
                "guaranteed profit",
                "deposit",
                "trust",
            ],
            &[SocialMedia, InstantMessaging, Tools, Financial],
            &["A new online partner shared an insider betting platform after several days of chat."],
            "Watch for new romantic contacts who introduce platforms with guaranteed profit.",
        ),
        "impersonating_police_scam" => skill(
            scam_type,
            "A caller posing as police or prosecutors accuses the victim of a crime and demands \
             funds be moved to a supervised account.",
            &[
                "police",
                "arrest warrant",
                "money laundering",
                "case number",
                "supervised account",
                "confidential",
                "video call",
            ],
            &[Communication, InstantMessaging, Tools, Financial],
            &["A caller citing a case number insisted on a confidential video call."],
            "Flag calls from supposed officials mentioning warrants, laundering or supervised accounts.",
        ),
        _ => return None,
    };
    Some(s)
}

fn generic_seed(scam_type: &str) -> Skill {
    let mut indicators: Vec<String> = scam_type
        .split('_')
        .filter(|t| t.len() >= 3 && !["scam", "fake", "online"].contains(t))
        .map(str::to_string)
        .collect();
    if indicators.is_empty() {
        indicators.push("transfer".into());
    }
    Skill {
        scam_type: scam_type.to_string(),
        description: format!("Seed pattern for {scam_type}."),
        early_indicators: indicators,
        typical_app_sequence: vec![AppCategory::InstantMessaging, AppCategory::Financial],
        example_reflections: Vec::new(),
        prompt_enhancement: format!("Consider whether the activity matches {scam_type}."),
        provenance: Provenance::Seed,
        update_count: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AppEvent;

    fn window(start: usize, cats: &[AppCategory]) -> ObservationWindow {
        let events: Vec<AppEvent> = cats
            .iter()
            .enumerate()
            .map(|(i, c)| AppEvent::new(start + i, *c, None, "", &[]))
            .collect();
        ObservationWindow {
            start,
            end: start + cats.len() - 1,
            events,
        }
    }

    fn hit(order: usize, cat: AppCategory, summary: &str) -> MemoryHit {
        MemoryHit {
            order,
            app_category: cat,
            summary: summary.into(),
            entity: "x".into(),
        }
    }

    fn investment() -> SkillLibrary {
        SkillLibrary::seeded(&["fake_online_investment_financial_scam"])
    }

    #[test]
    fn empty_library_scores_zero() {
        let w = window(100, &[AppCategory::Financial; 3]);
        let s = score_candidate(&hit(90, AppCategory::Financial, "investment"), &w, &SkillLibrary::new(), 102, &RetrievalWeights::default());
        assert_eq!(s, 0.0);
    }

    #[test]
    fn recent_entries_score_higher() {
        let lib = investment();
        let w = window(100, &[AppCategory::Financial; 3]);
        let wts = RetrievalWeights::default();
        let recent = score_candidate(&hit(92, AppCategory::Financial, "opened bank"), &w, &lib, 102, &wts);
        let old = score_candidate(&hit(22, AppCategory::Financial, "opened bank"), &w, &lib, 102, &wts);
        assert!(recent > old);
    }

    #[test]
    fn indicator_hits_raise_score_and_ignore_padding() {
        let lib = investment();
        let w = window(100, &[AppCategory::Financial; 3]);
        let wts = RetrievalWeights::default();
        let with = score_candidate(&hit(92, AppCategory::Tools, "downloaded an investment app"), &w, &lib, 102, &wts);
        let without = score_candidate(&hit(92, AppCategory::Tools, "downloaded a photo app"), &w, &lib, 102, &wts);
        assert!(with > without);
        let padded = score_candidate(
            &hit(92, AppCategory::Tools, "downloaded an investment app and then some more words and then some more words"),
            &w,
            &lib,
            102,
            &wts,
        );
        assert_eq!(with, padded);
    }

    fn memory_with(entries: &[(usize, &str)]) -> MemoryStore {
        let last = entries.iter().map(|e| e.0).max().unwrap_or(0);
        let mut m = MemoryStore::new();
        for o in 0..=last {
            let ev = match entries.iter().find(|e| e.0 == o) {
                Some((_, s)) => AppEvent::new(o, AppCategory::InstantMessaging, None, s, &["tongtong"]),
                None => AppEvent::new(o, AppCategory::Others, None, "", &[]),
            };
            m.update(&ev).unwrap();
        }
        m
    }

    #[test]
    fn rank_budget_and_order() {
        let lib = investment();
        let m = memory_with(&[(1, "chat"), (3, "investment advice"), (5, "qr code investment")]);
        let w = window(20, &[AppCategory::Financial]);
        let wts = RetrievalWeights::default();
        assert!(rank(&m, &["tongtong"], &lib, &w, 0, &wts).is_empty());
        let top: Vec<usize> = rank(&m, &["tongtong"], &lib, &w, 2, &wts).iter().map(|h| h.order).collect();
        assert_eq!(top, vec![3, 5]);
    }

    #[test]
    fn rank_tie_prefers_later() {
        let m = memory_with(&[(5, "hello"), (9, "hello")]);
        let w = window(100, &[AppCategory::Financial]);
        let top = rank(&m, &["tongtong"], &SkillLibrary::new(), &w, 1, &RetrievalWeights::default());
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].order, 9);
    }

    #[test]
    fn novel_terms_from_fixed_rationale() {
        let lib = investment();
        let existing = &lib.get("fake_online_investment_financial_scam").unwrap().early_indicators;
        let terms = novel_terms(
            "unknown part-time job message then third-party income-task app",
            existing,
        );
        assert_eq!(terms, vec!["income-task", "third-party", "part-time"]);
    }

    #[test]
    fn evolve_appends_terms_to_matching_skill() {
        let mut lib = investment();
        let w = window(0, &[AppCategory::Financial, AppCategory::Shopping, AppCategory::Financial, AppCategory::Shopping]);
        let out = evolve(
            &mut lib,
            "investment pitch: unknown part-time job message then third-party income-task app",
            &w,
            Label::Scam,
        )
        .unwrap();
        let skill = lib.get("fake_online_investment_financial_scam").unwrap();
        assert!(skill.early_indicators.iter().any(|i| i == "part-time"));
        assert_eq!(skill.update_count, 1);
        match out {
            EvolveOutcome::Updated { added_sequence, .. } => {
                assert_eq!(added_sequence, vec![AppCategory::Shopping]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn evolve_is_content_idempotent() {
        let mut lib = investment();
        let w = window(0, &[AppCategory::SocialMedia, AppCategory::InstantMessaging]);
        let r = "investment group message with qr code";
        evolve(&mut lib, r, &w, Label::Risky).unwrap();
        let before = lib.get("fake_online_investment_financial_scam").unwrap().clone();
        evolve(&mut lib, r, &w, Label::Risky).unwrap();
        let after = lib.get("fake_online_investment_financial_scam").unwrap();
        assert_eq!(after.early_indicators, before.early_indicators);
        assert_eq!(after.typical_app_sequence, before.typical_app_sequence);
        assert_eq!(after.update_count, before.update_count + 1);
    }

    #[test]
    fn evolve_creates_skill_in_empty_library() {
        let mut lib = SkillLibrary::new();
        let w = window(0, &[AppCategory::InstantMessaging, AppCategory::Financial]);
        let out = evolve(&mut lib, "stranger requested urgent transfer", &w, Label::Scam).unwrap();
        assert_eq!(out, EvolveOutcome::Created { scam_type: "evolved_0".into() });
        assert_eq!(lib.len(), 1);
        let s = lib.get("evolved_0").unwrap();
        assert_eq!(s.provenance, Provenance::Evolved);
        assert_eq!(s.typical_app_sequence, vec![AppCategory::InstantMessaging, AppCategory::Financial]);
    }

    #[test]
    fn evolve_rejects_normal_and_respects_freeze() {
        let mut lib = investment();
        let w = window(0, &[AppCategory::Financial]);
        assert_eq!(evolve(&mut lib, "x", &w, Label::Normal), Err(SkillError::NormalLabel));
        lib.frozen = true;
        let snapshot = lib.clone();
        assert_eq!(evolve(&mut lib, "investment trick", &w, Label::Scam).unwrap(), EvolveOutcome::Frozen);
        assert_eq!(lib, snapshot);
    }

    #[test]
    fn sequence_affinity_is_normalized_lcs() {
        let lib = investment();
        let s = lib.get("fake_online_investment_financial_scam").unwrap();
        use AppCategory::*;
        assert_eq!(s.sequence_affinity(&[SocialMedia, Others, InstantMessaging, Tools, Financial]), 1.0);
        assert_eq!(s.sequence_affinity(&[Financial, Tools]), 0.25);
        assert_eq!(s.sequence_affinity(&[]), 0.0);
    }

    #[test]
    fn library_json_layout() {
        let lib = SkillLibrary::seeded(&CATALOG_TYPES[..2]);
        let json = serde_json::to_value(&lib).unwrap();
        assert!(json["skills"][0]["typical_app_sequence"].is_array());
        let back: SkillLibrary = serde_json::from_value(json).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn unknown_type_gets_generic_seed() {
        let lib = SkillLibrary::seeded(&["fake_lottery_prize_scam"]);
        let s = lib.get("fake_lottery_prize_scam").unwrap();
        assert_eq!(s.early_indicators, vec!["lottery", "prize"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn evolve_only_grows(words in proptest::collection::vec("[a-z]{3,8}", 0..12), cats in proptest::collection::vec(0usize..12, 1..10), scam in any::<bool>()) {
                let mut lib = SkillLibrary::seeded(&CATALOG_TYPES[..3]);
                let before = lib.clone();
                let w = window(0, &cats.iter().map(|i| AppCategory::ALL[*i]).collect::<Vec<_>>());
                let label = if scam { Label::Scam } else { Label::Risky };
                evolve(&mut lib, &words.join(" "), &w, label).unwrap();
                for s in before.skills() {
                    let now = lib.get(&s.scam_type).unwrap();
                    prop_assert!(now.early_indicators.starts_with(&s.early_indicators));
                    prop_assert!(now.typical_app_sequence.starts_with(&s.typical_app_sequence));
                }
                prop_assert!(lib.len() >= before.len());
            }
        }
    }
}
