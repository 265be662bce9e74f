//! Append-only action and visible-object logs.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::Box3D;
use crate::memory::ObjectId;
use crate::FrameId;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum HistoryError {
    #[error("timestamp {got} precedes last logged timestamp {last}")]
    NonMonotoneTimestamp { last: f64, got: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub timestamp_s: f64,
    pub verb: String,
    pub raw_text: String,
    pub target_ids: Vec<ObjectId>,
    pub frame_feat: Vec<f64>,
    /// Frame the action was associated in, if any frame had been ingested.
    #[serde(default)]
    pub frame_id: Option<FrameId>,
    /// Targets were supplied by a planner rather than found by association.
    #[serde(default)]
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleRecord {
    pub timestamp_s: f64,
    pub frame_id: FrameId,
    pub object_id: ObjectId,
    /// Box as lifted in this frame (not the merged memory box).
    pub box3d: Box3D,
}

/// Selection over either buffer; `None` fields do not filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryFilter<'a> {
    /// Inclusive time range.
    pub time_range: Option<(f64, f64)>,
    pub object_id: Option<ObjectId>,
    /// Only meaningful for actions.
    pub verb: Option<&'a str>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryBuffers {
    actions: Vec<ActionRecord>,
    visible: Vec<VisibleRecord>,
}

fn check_order(last: Option<f64>, got: f64) -> Result<(), HistoryError> {
    match last {
        Some(last) if got < last => Err(HistoryError::NonMonotoneTimestamp { last, got }),
        _ => Ok(()),
    }
}

/// Index range of records with timestamps inside `[lo, hi]`.
fn time_window<T>(records: &[T], ts: impl Fn(&T) -> f64, range: Option<(f64, f64)>) -> &[T] {
    match range {
        None => records,
        Some((lo, hi)) if lo > hi => &records[..0],
        Some((lo, hi)) => {
            let start = records.partition_point(|r| ts(r) < lo);
            let end = records.partition_point(|r| ts(r) <= hi);
            &records[start..end.max(start)]
        }
    }
}

impl HistoryBuffers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append_action(&mut self, rec: ActionRecord) -> Result<(), HistoryError> {
        check_order(self.actions.last().map(|r| r.timestamp_s), rec.timestamp_s)?;
        self.actions.push(rec);
        Ok(())
    }

    pub fn append_visible(&mut self, rec: VisibleRecord) -> Result<(), HistoryError> {
        check_order(self.visible.last().map(|r| r.timestamp_s), rec.timestamp_s)?;
        self.visible.push(rec);
        Ok(())
    }

    pub fn actions(&self) -> &[ActionRecord] {
        &self.actions
    }

    pub fn visible(&self) -> &[VisibleRecord] {
        &self.visible
    }

    pub fn query_actions(&self, filter: &HistoryFilter<'_>) -> Vec<&ActionRecord> {
        time_window(&self.actions, |r| r.timestamp_s, filter.time_range)
            .iter()
            .filter(|r| filter.object_id.is_none_or(|id| r.target_ids.contains(&id)))
            .filter(|r| filter.verb.is_none_or(|v| r.verb == v))
            .collect()
    }

    pub fn query_visible(&self, filter: &HistoryFilter<'_>) -> Vec<&VisibleRecord> {
        time_window(&self.visible, |r| r.timestamp_s, filter.time_range)
            .iter()
            .filter(|r| filter.object_id.is_none_or(|id| r.object_id == id))
            .collect()
    }

    /// Most recent sighting of `id` at or before `t`.
    pub fn last_seen_before(&self, id: ObjectId, t: f64) -> Option<&VisibleRecord> {
        let end = self.visible.partition_point(|r| r.timestamp_s <= t);
        self.visible[..end].iter().rev().find(|r| r.object_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use alloc::string::ToString;
    use alloc::vec;

    fn action(t: f64, verb: &str, targets: Vec<ObjectId>) -> ActionRecord {
        ActionRecord {
            timestamp_s: t,
            verb: verb.to_string(),
            raw_text: "C does something".to_string(),
            target_ids: targets,
            frame_feat: vec![1.0],
            frame_id: None,
            directed: false,
        }
    }

    fn seen(t: f64, id: ObjectId) -> VisibleRecord {
        VisibleRecord {
            timestamp_s: t,
            frame_id: t as u64,
            object_id: id,
            box3d: Box3D::from_center_size(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0)),
        }
    }

    #[test]
    fn append_action_contract() {
        let mut h = HistoryBuffers::new();
        h.append_action(action(2.0, "pick", vec![1])).unwrap();
        assert_eq!(h.actions().len(), 1);
        h.append_action(action(4.0, "place", vec![1])).unwrap();
        assert_eq!(h.actions()[1].timestamp_s, 4.0);
        assert_eq!(h.append_action(action(1.0, "open", vec![])), Err(HistoryError::NonMonotoneTimestamp { last: 4.0, got: 1.0 }));
        assert_eq!(h.actions().len(), 2);
        // equal timestamps are allowed
        h.append_action(action(4.0, "close", vec![])).unwrap();
    }

    #[test]
    fn append_visible_contract() {
        let mut h = HistoryBuffers::new();
        h.append_visible(seen(2.0, 1)).unwrap();
        assert_eq!(h.visible().len(), 1);
        h.append_visible(seen(4.0, 2)).unwrap();
        assert_eq!(h.visible()[1].object_id, 2);
        assert!(h.append_visible(seen(1.0, 3)).is_err());
    }

    #[test]
    fn queries_filter_and_keep_order() {
        let mut h = HistoryBuffers::new();
        h.append_action(action(1.0, "pick", vec![7])).unwrap();
        h.append_action(action(2.0, "open", vec![3])).unwrap();
        h.append_action(action(3.0, "place", vec![7, 9])).unwrap();
        let all = h.query_actions(&HistoryFilter::default());
        assert_eq!(all.iter().map(|r| r.timestamp_s).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let seven = h.query_actions(&HistoryFilter { object_id: Some(7), ..Default::default() });
        assert_eq!(seven.len(), 2);
        let verb = h.query_actions(&HistoryFilter { verb: Some("open"), ..Default::default() });
        assert_eq!(verb.len(), 1);
        let none = h.query_actions(&HistoryFilter { time_range: Some((10.0, 20.0)), ..Default::default() });
        assert!(none.is_empty());
        let mid = h.query_actions(&HistoryFilter { time_range: Some((2.0, 3.0)), ..Default::default() });
        assert_eq!(mid.len(), 2);
        let inverted = h.query_actions(&HistoryFilter { time_range: Some((3.0, 2.0)), ..Default::default() });
        assert!(inverted.is_empty());
    }

    #[test]
    fn last_seen_lookup() {
        let mut h = HistoryBuffers::new();
        h.append_visible(seen(1.0, 1)).unwrap();
        h.append_visible(seen(2.0, 2)).unwrap();
        h.append_visible(seen(3.0, 1)).unwrap();
        assert_eq!(h.last_seen_before(1, 2.5).unwrap().timestamp_s, 1.0);
        assert_eq!(h.last_seen_before(1, 3.0).unwrap().timestamp_s, 3.0);
        assert!(h.last_seen_before(2, 1.5).is_none());
    }
}
