//! Person-centric memory: an entity-keyed chronological archive of the
//! interactions seen so far in one trajectory.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{AppCategory, AppEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("non-sequential-event: expected order {expected}, got {got}")]
    NonSequentialEvent { expected: usize, got: usize },
}

/// Case-folded, whitespace-trimmed entity key.
pub fn canonical_entity(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Stable 32-hex-digit identifier of a canonical entity name.
pub fn person_id(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    hex::encode(&digest[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub order: usize,
    pub app_category: AppCategory,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub entity_names: Vec<String>,
    pub first_seen_order: usize,
    pub last_seen_order: usize,
    pub related_application_history: Vec<HistoryEntry>,
}

/// A memory entry returned by [`MemoryStore::query`], tagged with the
/// canonical entity that owns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryHit {
    pub order: usize,
    pub app_category: AppCategory,
    pub summary: String,
    pub entity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    records: BTreeMap<String, PersonRecord>,
    event_count: usize,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn event_count(&self) -> usize {
        self.event_count
    }

    pub fn records(&self) -> impl Iterator<Item = (&str, &PersonRecord)> {
        self.records.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn record(&self, entity: &str) -> Option<&PersonRecord> {
        self.records.get(&canonical_entity(entity))
    }

    /// Appends `event` to the history of every entity it mentions.
    pub fn update(&mut self, event: &AppEvent) -> Result<(), MemoryError> {
        if event.order != self.event_count {
            return Err(MemoryError::NonSequentialEvent {
                expected: self.event_count,
                got: event.order,
            });
        }
        for name in &event.entities {
            let key = canonical_entity(name);
            if key.is_empty() {
                continue;
            }
            let record = self.records.entry(key.clone()).or_insert_with(|| PersonRecord {
                person_id: person_id(&key),
                entity_names: Vec::new(),
                first_seen_order: event.order,
                last_seen_order: event.order,
                related_application_history: Vec::new(),
            });
            if !record.entity_names.iter().any(|n| n == name) {
                record.entity_names.push(name.clone());
            }
            // two aliases of one entity in the same event share a single entry
            if record.related_application_history.last().map(|h| h.order) == Some(event.order) {
                continue;
            }
            record.last_seen_order = event.order;
            record.related_application_history.push(HistoryEntry {
                order: event.order,
                app_category: event.app_category,
                summary: event.content_summary.clone(),
            });
        }
        self.event_count += 1;
        Ok(())
    }

    /// History entries of `entities` strictly before `before_order`, one per
    /// event order, sorted ascending. When several queried entities share an
    /// event the lexicographically smallest canonical entity owns the hit.
    pub fn query<S: AsRef<str>>(&self, entities: &[S], before_order: usize) -> Vec<MemoryHit> {
        let mut keys: Vec<String> = entities.iter().map(|e| canonical_entity(e.as_ref())).collect();
        keys.sort();
        keys.dedup();
        let mut by_order: BTreeMap<usize, MemoryHit> = BTreeMap::new();
        for key in keys {
            let Some(record) = self.records.get(&key) else {
                continue;
            };
            for h in record
                .related_application_history
                .iter()
                .take_while(|h| h.order < before_order)
            {
                by_order.entry(h.order).or_insert_with(|| MemoryHit {
                    order: h.order,
                    app_category: h.app_category,
                    summary: h.summary.clone(),
                    entity: key.clone(),
                });
            }
        }
        by_order.into_values().collect()
    }

    /// Number of distinct stored events whose order lies in `[lo, hi]`.
    pub fn distinct_events_in(&self, lo: usize, hi: usize) -> usize {
        let mut orders: Vec<usize> = self
            .records
            .values()
            .flat_map(|r| r.related_application_history.iter().map(|h| h.order))
            .filter(|o| (lo..=hi).contains(o))
            .collect();
        orders.sort_unstable();
        orders.dedup();
        orders.len()
    }

    /// Person records in canonical-key order, in the archive layout.
    pub fn snapshot(&self) -> Vec<PersonRecord> {
        self.records.values().cloned().collect()
    }
}
