//! Screen analysis and augmented-window construction.
//!
//! Each step concatenates skill-ranked history entries with the current
//! observation window. History never includes events at or after the window
//! start; in-window events are visible only through the window itself.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{AppCategory, AppEvent, ObservationWindow};
use crate::http::{EndpointConfig, JsonClient, RemoteError};
use crate::memory::{canonical_entity, MemoryHit, MemoryStore};
use crate::skills::{rank, RetrievalWeights, SkillLibrary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenParse {
    pub entities: BTreeSet<String>,
    pub summary: String,
}

pub trait ScreenAnalyzer: Send + Sync {
    fn analyze(&self, event: &AppEvent) -> ScreenParse;

    /// The event with its entities and summary replaced by the parse.
    fn parse_event(&self, event: &AppEvent) -> AppEvent {
        let parse = self.analyze(event);
        AppEvent {
            entities: parse.entities.into_iter().collect(),
            content_summary: parse.summary,
            ..event.clone()
        }
    }
}

/// Benchmark events are already parsed; forward them unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughAnalyzer;

impl ScreenAnalyzer for PassThroughAnalyzer {
    fn analyze(&self, event: &AppEvent) -> ScreenParse {
        ScreenParse {
            entities: event.entities.iter().cloned().collect(),
            summary: event.content_summary.clone(),
        }
    }
}

/// Sends each event to an external model. The remote entities are merged
/// with the event's own; any failure falls back to pass-through.
#[derive(Debug, Clone)]
pub struct RemoteScreenAnalyzer {
    client: JsonClient,
}

#[derive(Debug, Deserialize)]
struct RemoteParse {
    entities: Vec<String>,
    summary: String,
}

impl RemoteScreenAnalyzer {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            client: JsonClient::new(config),
        }
    }

    fn call(&self, event: &AppEvent) -> Result<RemoteParse, RemoteError> {
        let body = json!({
            "order": event.order,
            "app_category": event.app_category,
            "app_name": event.app_name,
            "content_summary": event.content_summary,
        });
        let value = self.client.post(&body)?;
        serde_json::from_value(value).map_err(|e| RemoteError::BadResponse(e.to_string()))
    }
}

impl ScreenAnalyzer for RemoteScreenAnalyzer {
    fn analyze(&self, event: &AppEvent) -> ScreenParse {
        let mut parse = PassThroughAnalyzer.analyze(event);
        match self.call(event) {
            Ok(remote) => {
                parse.entities.extend(remote.entities);
                if !remote.summary.trim().is_empty() {
                    parse.summary = remote.summary;
                }
            }
            Err(e) => log::warn!("screen analyzer fell back to pass-through for event {}: {e}", event.order),
        }
        parse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedWindow {
    /// Ranked history, chronological, all before `window.start`.
    pub retrieved: Vec<MemoryHit>,
    pub window: ObservationWindow,
    /// Retrieval budget the window was built with.
    pub budget: usize,
}

impl AugmentedWindow {
    /// Canonical entities mentioned in the window events.
    pub fn window_entities(&self) -> BTreeSet<String> {
        self.window
            .events
            .iter()
            .flat_map(|e| e.entities.iter().map(|n| canonical_entity(n)))
            .filter(|n| !n.is_empty())
            .collect()
    }

    /// Categories of the rendered sequence: history first, then the window.
    pub fn categories(&self) -> Vec<AppCategory> {
        self.retrieved
            .iter()
            .map(|h| h.app_category)
            .chain(self.window.events.iter().map(|e| e.app_category))
            .collect()
    }
}

/// Builds the augmented window. `window` must already hold parsed events and
/// `memory` must have ingested them.
pub fn build_augmented_window(
    window: ObservationWindow,
    memory: &MemoryStore,
    library: &SkillLibrary,
    budget: usize,
    weights: &RetrievalWeights,
) -> AugmentedWindow {
    let entities: BTreeSet<String> = window
        .events
        .iter()
        .flat_map(|e| e.entities.iter().cloned())
        .collect();
    let entities: Vec<String> = entities.into_iter().collect();
    let retrieved = rank(memory, &entities, library, &window, budget, weights);
    AugmentedWindow {
        retrieved,
        window,
        budget,
    }
}

/// Textual form consumed by assessors. One `[HISTORY ...]` line per
/// retrieved entry, one `[NOW ...]` line per window event, then a
/// `[GUIDANCE]` block with the prompt enhancement of every skill whose
/// indicators appear in the rendered summaries.
pub fn render_context(aug: &AugmentedWindow, library: &SkillLibrary) -> String {
    let mut out = String::new();
    for h in &aug.retrieved {
        let _ = writeln!(
            out,
            "[HISTORY order={} category={} entity={}] {}",
            h.order,
            h.app_category,
            h.entity,
            one_line(&h.summary)
        );
    }
    for e in &aug.window.events {
        let _ = writeln!(
            out,
            "[NOW order={} category={} app={} entities={}] {}",
            e.order,
            e.app_category,
            e.app_name.as_deref().unwrap_or("-"),
            e.entities.join("|"),
            one_line(&e.content_summary)
        );
    }
    out.push_str("[GUIDANCE]\n");
    let text: String = aug
        .retrieved
        .iter()
        .map(|h| h.summary.as_str())
        .chain(aug.window.events.iter().map(|e| e.content_summary.as_str()))
        .collect::<Vec<_>>()
        .join("\n");
    for skill in library.skills() {
        if skill.indicator_hits(&text) > 0 {
            let _ = writeln!(out, "{}: {}", skill.scam_type, one_line(&skill.prompt_enhancement));
        }
    }
    out
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}
