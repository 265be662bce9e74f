//! Scores a memory snapshot against a synthetic answer key.
//!
//! Memory entries carry no ground-truth names, so each entry is mapped to the
//! key object whose planted features it resembles most.

use scenemem_core::retrieval::{self, Channel};
use scenemem_core::similarity::visual_similarity;
use scenemem_core::{ObjectEntry, ObjectId, Relation, SceneMemory};
use serde::{Deserialize, Serialize};

use crate::snapshot::MemorySnapshot;
use crate::synth::AnswerKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("snapshot was built from episode {snapshot:?}, answer key belongs to {key}")]
    MismatchedEpisode { snapshot: Option<String>, key: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Locate,
    Orders,
    States,
}

pub fn check_episode(snapshot: &MemorySnapshot, key: &AnswerKey) -> Result<(), EvalError> {
    if snapshot.episode_digest.as_deref() != Some(key.episode_digest.as_str()) {
        return Err(EvalError::MismatchedEpisode { snapshot: snapshot.episode_digest.clone(), key: key.episode_digest.clone() });
    }
    Ok(())
}

/// Key object name that best explains an entry's appearance.
pub fn gt_name<'k>(entry: &ObjectEntry, key: &'k AnswerKey) -> Option<&'k str> {
    let mut best: Option<(f64, &str)> = None;
    for o in &key.objects {
        let Ok(s) = visual_similarity(&entry.obj_feat, &o.features) else { continue };
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, o.name.as_str()));
        }
    }
    best.map(|(_, n)| n)
}

/// Entry answering "where is `object`": the top-1 appearance match of its planted clip feature.
pub fn entry_for(memory: &SceneMemory, key: &AnswerKey, object: &str) -> Option<ObjectId> {
    let o = key.objects.iter().find(|o| o.name == object)?;
    retrieval::retrieve_by_appearance(memory, &o.features.clip, Channel::Clip, 1).ok()?.first().map(|s| s.item)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateResult {
    pub object: String,
    pub t: f64,
    pub entry: Option<ObjectId>,
    /// Predicted-to-GT center distance, when a prediction exists.
    pub error: Option<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateMetrics {
    pub queries: usize,
    pub answered: usize,
    pub successes: usize,
    /// Percentage of queries whose predicted center is within `success_radius`.
    pub succ_pct: f64,
    /// Percentage of queries with any prediction.
    pub qwp_pct: f64,
    /// Mean center error over answered queries.
    pub mean_l2: Option<f64>,
    pub success_radius: f64,
    pub results: Vec<LocateResult>,
}

/// The prediction for (object, t) is the box of the retrieved entry in its
/// latest visible record at or before t.
pub fn eval_locate(memory: &SceneMemory, key: &AnswerKey, success_radius: f64) -> LocateMetrics {
    let results: Vec<LocateResult> = key
        .locate_queries
        .iter()
        .map(|q| {
            let entry = entry_for(memory, key, &q.object);
            let seen = entry.and_then(|id| memory.history.last_seen_before(id, q.t));
            let error = seen.map(|r| r.box3d.center().distance(&q.gt.center()));
            LocateResult { object: q.object.clone(), t: q.t, entry, error, success: error.is_some_and(|e| e < success_radius) }
        })
        .collect();
    let n = results.len();
    let answered: Vec<f64> = results.iter().filter_map(|r| r.error).collect();
    let successes = results.iter().filter(|r| r.success).count();
    let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
    LocateMetrics {
        queries: n,
        answered: answered.len(),
        successes,
        succ_pct: pct(successes),
        qwp_pct: pct(answered.len()),
        mean_l2: (!answered.is_empty()).then(|| answered.iter().sum::<f64>() / answered.len() as f64),
        success_radius,
        results,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStep {
    pub expected: (String, String),
    pub predicted: Option<(String, Vec<String>)>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdersMetrics {
    pub accuracy: f64,
    pub steps: Vec<OrderStep>,
}

/// Position-wise comparison of the action buffer against the scripted events:
/// a step is correct when its verb matches and its only target maps to the
/// scripted object.
pub fn eval_orders(memory: &SceneMemory, key: &AnswerKey) -> OrdersMetrics {
    let actions = memory.history.actions();
    let steps: Vec<OrderStep> = key
        .events
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            let predicted = actions.get(i).map(|a| {
                let names = a
                    .target_ids
                    .iter()
                    .map(|id| memory.get(*id).and_then(|e| gt_name(e, key)).unwrap_or("?").to_string())
                    .collect::<Vec<_>>();
                (a.verb.clone(), names)
            });
            let correct =
                predicted.as_ref().is_some_and(|(verb, names)| *verb == ev.verb && names.as_slice() == [ev.object.clone()]);
            OrderStep { expected: (ev.verb.clone(), ev.object.clone()), predicted, correct }
        })
        .collect();
    let n = steps.len().max(actions.len());
    let accuracy = if n == 0 { 1.0 } else { steps.iter().filter(|s| s.correct).count() as f64 / n as f64 };
    OrdersMetrics { accuracy, steps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResult {
    pub object: String,
    pub expected: Option<String>,
    pub predicted: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesMetrics {
    pub accuracy: f64,
    pub results: Vec<StateResult>,
}

/// Fraction of objects whose stored `On` relation names the receptacle the
/// key says they end on.
pub fn eval_states(memory: &SceneMemory, key: &AnswerKey) -> StatesMetrics {
    let results: Vec<StateResult> = key
        .final_receptacles
        .iter()
        .map(|(object, expected)| {
            let predicted = entry_for(memory, key, object).and_then(|id| {
                let e = memory.get(id)?;
                let (_, r) = e.related.iter().find(|(rel, _)| *rel == Relation::On)?;
                memory.get(*r).and_then(|re| gt_name(re, key)).map(str::to_string)
            });
            StateResult { object: object.clone(), correct: predicted == *expected, expected: expected.clone(), predicted }
        })
        .collect();
    let accuracy =
        if results.is_empty() { 1.0 } else { results.iter().filter(|r| r.correct).count() as f64 / results.len() as f64 };
    StatesMetrics { accuracy, results }
}
