//! Constructed datasets for directional checks.
//!
//! * [`linkage_benchmark`]: each scam opens with one early contact from an
//!   entity, followed by at least a full window of unrelated activity, and
//!   closes with a financial stage involving the same entity. Neither end is
//!   suspicious alone; only linking the two through memory is.
//! * [`separability_dataset`]: scam events differ from normal activity only
//!   in their category mix, so windows that straddle the segment boundary
//!   are ambiguous from base features but not to a teacher that knows the
//!   scam type and stage progress.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{AppCategory, AppEvent, ScamSegment, Split, Trajectory};

pub const LINKAGE_SCAM_TYPE: &str = "fake_online_investment_financial_scam";

const FILLER: &[(AppCategory, &str)] = &[
    (AppCategory::Multimedia, "played a podcast episode"),
    (AppCategory::Entertainment, "watched a cartoon with the kids"),
    (AppCategory::Productivity, "edited a spreadsheet of chores"),
    (AppCategory::HealthFitness, "logged an evening walk"),
    (AppCategory::Multimedia, "took photos of flowers"),
    (AppCategory::Productivity, "set a reminder for the dentist"),
];

const FRIENDS: &[&str] = &["Aunt May", "Coach Diaz", "Robin"];

const CONTACTS: &[&str] = &[
    "stranger sent a qr code to join a stock chat",
    "new follower bragged about high returns",
    "unknown account offered stock trading tips",
];

const FINANCIAL: &[&str] = &[
    "made a test transaction to the account given",
    "sent money to the account given",
    "topped up the balance again",
    "moved savings to the account given",
    "paid a handling charge to the account given",
];

fn filler(rng: &mut ChaCha8Rng, order: usize) -> AppEvent {
    let (cat, text) = FILLER[rng.gen_range(0..FILLER.len())];
    if rng.gen_bool(0.3) {
        let who = FRIENDS[rng.gen_range(0..FRIENDS.len())];
        AppEvent::new(order, cat, None, &format!("{text} with {who}"), &[who])
    } else {
        AppEvent::new(order, cat, None, text, &[])
    }
}

/// `n_scam` scam and `n_normal` normal trajectories of length `length`.
/// In each scam, the contact and the first financial event carry one
/// indicator each; the gap between them is at least `window_size` events.
pub fn linkage_benchmark(seed: u64, n_scam: usize, n_normal: usize, length: usize, window_size: usize) -> Vec<Trajectory> {
    let stage = 5;
    assert!(length >= 2 * window_size + stage + 2, "trajectory too short for the linkage layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_scam + n_normal);
    for i in 0..n_scam {
        let contact = rng.gen_range(1..=length - window_size - stage - 1 - window_size);
        let finance = rng.gen_range(contact + window_size + 1..=length - stage);
        let who = format!("Advisor K{i}");
        let mut events: Vec<AppEvent> = (0..length).map(|o| filler(&mut rng, o)).collect();
        let hello = CONTACTS[rng.gen_range(0..CONTACTS.len())];
        events[contact] = AppEvent::new(contact, AppCategory::SocialMedia, None, &format!("{hello} ({who})"), &[&who]);
        for (k, text) in FINANCIAL.iter().enumerate().take(stage) {
            let o = finance + k;
            events[o] = AppEvent::new(o, AppCategory::Financial, None, &format!("{text} by {who}"), &[&who]);
        }
        out.push(Trajectory {
            trajectory_id: format!("link-scam-{i:03}"),
            split_tag: Split::Test,
            events,
            scam_segment: Some(ScamSegment::new(contact, finance + stage - 1, LINKAGE_SCAM_TYPE)),
        });
    }
    for i in 0..n_normal {
        out.push(Trajectory {
            trajectory_id: format!("link-normal-{i:03}"),
            split_tag: Split::Test,
            events: (0..length).map(|o| filler(&mut rng, o)).collect(),
            scam_segment: None,
        });
    }
    out
}

pub const SEPARABILITY_SCAM_TYPE: &str = "part_time_job_task_scam";

const QUIET: &[AppCategory] = &[
    AppCategory::Multimedia,
    AppCategory::Entertainment,
    AppCategory::Productivity,
    AppCategory::HealthFitness,
    AppCategory::Shopping,
];

/// Scam and normal trajectories whose scam events are all `Tools` events,
/// while normal activity uses `Tools` only occasionally. Splits are
/// assigned round-robin: `n_train` per kind to train, `n_val` to validation.
pub fn separability_dataset(seed: u64, n_train: usize, n_val: usize) -> Vec<Trajectory> {
    let length = 60;
    let seg_len = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (split, n) in [(Split::Train, n_train), (Split::Validation, n_val)] {
        for i in 0..n {
            for scam in [true, false] {
                let mut events: Vec<AppEvent> = (0..length)
                    .map(|o| {
                        let cat = if rng.gen_bool(0.1) {
                            AppCategory::Tools
                        } else {
                            QUIET[rng.gen_range(0..QUIET.len())]
                        };
                        AppEvent::new(o, cat, None, "routine activity", &[])
                    })
                    .collect();
                let segment = scam.then(|| {
                    let s = rng.gen_range(5..length - seg_len - 5);
                    for (o, e) in events.iter_mut().enumerate().skip(s).take(seg_len) {
                        *e = AppEvent::new(o, AppCategory::Tools, None, "routine activity", &[]);
                    }
                    ScamSegment::new(s, s + seg_len - 1, SEPARABILITY_SCAM_TYPE)
                });
                let kind = if scam { "scam" } else { "normal" };
                out.push(Trajectory {
                    trajectory_id: format!("sep-{}-{kind}-{i:03}", split.as_str()),
                    split_tag: split,
                    events,
                    scam_segment: segment,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linkage_layout() {
        for t in linkage_benchmark(1, 10, 3, 60, 10) {
            t.check().unwrap();
            let Some(seg) = &t.scam_segment else { continue };
            let contact = &t.events[seg.start];
            let who = &contact.entities[0];
            let last = &t.events[seg.end];
            assert_eq!(last.entities, vec![who.clone()]);
            let first_fin = (seg.start + 1..=seg.end).find(|&o| t.events[o].entities.contains(who)).unwrap();
            assert!(first_fin - seg.start > 10);
            assert_eq!(seg.end - first_fin + 1, 5);
        }
    }

    #[test]
    fn separability_layout() {
        let d = separability_dataset(2, 4, 2);
        assert_eq!(d.len(), 12);
        for t in &d {
            t.check().unwrap();
            if let Some(seg) = &t.scam_segment {
                assert!((seg.start..=seg.end).all(|o| t.events[o].app_category == AppCategory::Tools));
            }
        }
    }
}
