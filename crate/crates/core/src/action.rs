//! Action-driven memory updates: noun extraction, candidate gathering,
//! oracle association and programmatic state transitions.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::MemoryConfig;
use crate::geometry::{self, CameraIntrinsics, DepthMap, PixelRect, VisibilityStatus};
use crate::history::{ActionRecord, HistoryError};
use crate::memory::{FrameObservation, ObjectId, ObjectState, SceneMemory};
use crate::FrameId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbClass {
    Grasp,
    Release,
    Open,
    Close,
    Neutral,
}

impl VerbClass {
    pub fn target_state(self) -> Option<ObjectState> {
        match self {
            VerbClass::Grasp => Some(ObjectState::InHand),
            VerbClass::Release => Some(ObjectState::Normal),
            VerbClass::Open => Some(ObjectState::Open),
            VerbClass::Close => Some(ObjectState::Close),
            VerbClass::Neutral => None,
        }
    }
}

/// Maps verb lemmas to the state change they cause. Lookups accept simple
/// inflections ("picks", "picked", "picking", "dropped").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerbLexicon {
    verbs: BTreeMap<String, VerbClass>,
}

const SEED_VERBS: &[(&str, VerbClass)] = &[
    ("pick", VerbClass::Grasp),
    ("take", VerbClass::Grasp),
    ("grab", VerbClass::Grasp),
    ("catch", VerbClass::Grasp),
    ("lift", VerbClass::Grasp),
    ("hold", VerbClass::Grasp),
    ("collect", VerbClass::Grasp),
    ("fetch", VerbClass::Grasp),
    ("carry", VerbClass::Grasp),
    ("remove", VerbClass::Grasp),
    ("place", VerbClass::Release),
    ("put", VerbClass::Release),
    ("drop", VerbClass::Release),
    ("release", VerbClass::Release),
    ("set", VerbClass::Release),
    ("leave", VerbClass::Release),
    ("throw", VerbClass::Release),
    ("toss", VerbClass::Release),
    ("return", VerbClass::Release),
    ("move", VerbClass::Release),
    ("open", VerbClass::Open),
    ("unlock", VerbClass::Open),
    ("unzip", VerbClass::Open),
    ("uncover", VerbClass::Open),
    ("close", VerbClass::Close),
    ("shut", VerbClass::Close),
    ("lock", VerbClass::Close),
    ("cover", VerbClass::Close),
    ("look", VerbClass::Neutral),
    ("touch", VerbClass::Neutral),
    ("wipe", VerbClass::Neutral),
    ("wash", VerbClass::Neutral),
    ("clean", VerbClass::Neutral),
    ("pour", VerbClass::Neutral),
    ("cut", VerbClass::Neutral),
];

impl Default for VerbLexicon {
    fn default() -> Self {
        VerbLexicon { verbs: SEED_VERBS.iter().map(|(v, c)| (v.to_string(), *c)).collect() }
    }
}

fn lemma_candidates(word: &str) -> Vec<String> {
    let mut out = alloc::vec![word.to_string()];
    for suffix in ["es", "s", "ed", "d", "ing"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.len() >= 2 {
                out.push(stem.to_string());
                if suffix == "ing" || suffix == "ed" {
                    out.push(alloc::format!("{stem}e"));
                }
                // dropped -> drop, putting -> put
                let b = stem.as_bytes();
                if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] {
                    out.push(stem[..stem.len() - 1].to_string());
                }
            }
        }
    }
    if let Some(stem) = word.strip_suffix("ies") {
        out.push(alloc::format!("{stem}y"));
    }
    out
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase())
}

impl VerbLexicon {
    pub fn empty() -> Self {
        VerbLexicon { verbs: BTreeMap::new() }
    }

    pub fn insert(&mut self, verb: &str, class: VerbClass) {
        self.verbs.insert(verb.to_lowercase(), class);
    }

    pub fn len(&self) -> usize {
        self.verbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty()
    }

    /// Lemma and class of a single word; unknown words are `None`.
    pub fn lookup(&self, word: &str) -> Option<(&str, VerbClass)> {
        let w = word.to_lowercase();
        lemma_candidates(&w).into_iter().find_map(|c| self.verbs.get_key_value(c.as_str())).map(|(k, v)| (k.as_str(), *v))
    }

    pub fn classify(&self, word: &str) -> VerbClass {
        self.lookup(word).map_or(VerbClass::Neutral, |(_, c)| c)
    }

    /// First known verb in the narration, or the first word after the
    /// camera-wearer marker ("C") when none is known.
    pub fn parse_verb(&self, text: &str) -> (String, VerbClass) {
        let toks: Vec<String> = tokens(text).collect();
        if let Some((lemma, class)) = toks.iter().find_map(|t| self.lookup(t)) {
            return (lemma.to_string(), class);
        }
        let first = toks.iter().find(|t| t.as_str() != "c").cloned().unwrap_or_default();
        (first, VerbClass::Neutral)
    }
}

/// One narrated action of the camera wearer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionAnnotation {
    pub timestamp_s: f64,
    pub text: String,
    /// Pre-extracted object nouns; bypasses lexical extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nouns: Option<Vec<String>>,
    /// Known targets (planner mode); bypasses association.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<ObjectId>>,
}

impl ActionAnnotation {
    pub fn new(timestamp_s: f64, text: &str) -> Self {
        ActionAnnotation { timestamp_s, text: text.to_string(), nouns: None, targets: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("association oracle unavailable: {0}")]
pub struct OracleError(pub String);

/// Decides whether the object inside a highlighted region is the target of an action.
pub trait AssociationOracle {
    fn is_target(&mut self, frame_id: FrameId, region: &PixelRect, text: &str) -> Result<bool, OracleError>;

    /// Optional authoritative state after the action; `None` defers to the lexicon.
    fn state_change(&mut self, _frame_id: FrameId, _region: &PixelRect, _text: &str) -> Result<Option<ObjectState>, OracleError> {
        Ok(None)
    }
}

impl<F> AssociationOracle for F
where
    F: FnMut(FrameId, &PixelRect, &str) -> Result<bool, OracleError>,
{
    fn is_target(&mut self, frame_id: FrameId, region: &PixelRect, text: &str) -> Result<bool, OracleError> {
        self(frame_id, region, text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionError {
    #[error("unknown object id {0}")]
    UnknownId(ObjectId),
    #[error("action text is empty")]
    EmptyText,
    #[error("history: {0}")]
    History(#[from] HistoryError),
}

fn is_word_boundary(text: &str, idx: usize) -> bool {
    text[..idx].chars().next_back().is_none_or(|c| !c.is_alphanumeric())
}

/// Object categories mentioned by an annotation, in order of appearance.
///
/// Returns the pre-extracted nouns when present. Otherwise every known
/// category is matched case-insensitively on word boundaries (an optional
/// plural "s"/"es" is allowed); overlapping matches keep the longest.
pub fn extract_nouns(ann: &ActionAnnotation, categories: &[&str]) -> Vec<String> {
    if let Some(n) = &ann.nouns {
        return n.clone();
    }
    let text = ann.text.to_lowercase();
    let mut hits: Vec<(usize, usize, &str)> = Vec::new();
    for cat in categories {
        let needle = cat.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        for (pos, _) in text.match_indices(needle.as_str()) {
            let mut end = pos + needle.len();
            for suffix in ["es", "s"] {
                if text[end..].starts_with(suffix) && !text[end + suffix.len()..].starts_with(char::is_alphanumeric) {
                    end += suffix.len();
                    break;
                }
            }
            let tail_ok = !text[end..].starts_with(char::is_alphanumeric);
            if is_word_boundary(&text, pos) && tail_ok {
                hits.push((pos, end - pos, cat));
            }
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out: Vec<String> = Vec::new();
    let mut covered_to = 0usize;
    for (pos, len, cat) in hits {
        if pos < covered_to {
            continue;
        }
        covered_to = pos + len;
        if !out.iter().any(|c| c == cat) {
            out.push(cat.to_string());
        }
    }
    out
}

/// Entries of the given categories that are visible without occlusion in the frame,
/// with their on-screen regions, in ascending id order.
pub fn gather_candidates(
    memory: &SceneMemory,
    categories: &[String],
    frame: &FrameObservation,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    cfg: &MemoryConfig,
) -> Vec<(ObjectId, PixelRect)> {
    memory
        .entries()
        .filter(|e| categories.contains(&e.category))
        .filter_map(|e| {
            match geometry::check_visibility(&e.box3d, depth, &frame.pose, intr, cfg.occlusion_margin, cfg.occluded_frac) {
                VisibilityStatus::Visible(r) => Some((e.id, r)),
                _ => None,
            }
        })
        .collect()
}

/// Result of processing one annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub verb: String,
    pub class: VerbClass,
    pub candidates: Vec<ObjectId>,
    pub targets: Vec<ObjectId>,
    pub oracle_failed: bool,
}

impl SceneMemory {
    /// Asks the oracle about every candidate and logs exactly one action record.
    /// Any oracle failure leaves the action with no targets.
    pub fn associate(
        &mut self,
        ann: &ActionAnnotation,
        verb: &str,
        candidates: &[(ObjectId, PixelRect)],
        frame: Option<&FrameObservation>,
        oracle: &mut dyn AssociationOracle,
    ) -> Result<(Vec<ObjectId>, bool), ActionError> {
        let mut targets = Vec::new();
        let mut failed = false;
        if let Some(f) = frame {
            for (id, region) in candidates {
                match oracle.is_target(f.frame_id, region, &ann.text) {
                    Ok(true) => targets.push(*id),
                    Ok(false) => {}
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
        }
        if failed {
            targets.clear();
            self.report.oracle_failures += 1;
        }
        self.history.append_action(ActionRecord {
            timestamp_s: ann.timestamp_s,
            verb: verb.to_string(),
            raw_text: ann.text.clone(),
            target_ids: targets.clone(),
            frame_feat: frame.map(|f| f.ctx_feat.clone()).unwrap_or_default(),
            frame_id: frame.map(|f| f.frame_id),
            directed: false,
        })?;
        Ok((targets, failed))
    }

    /// Applies a verb class to the targets. Grasping detaches the object from
    /// whatever it rested on or sat in.
    pub fn apply_state(&mut self, targets: &[ObjectId], class: VerbClass) -> Result<(), ActionError> {
        if let Some(missing) = targets.iter().find(|id| self.get(**id).is_none()) {
            return Err(ActionError::UnknownId(*missing));
        }
        let Some(state) = class.target_state() else { return Ok(()) };
        for id in targets {
            self.set_state(*id, state);
        }
        Ok(())
    }

    fn set_state(&mut self, id: ObjectId, state: ObjectState) {
        if state == ObjectState::InHand {
            let supports: Vec<_> =
                self.get(id).map(|e| e.related.iter().filter(|(r, _)| r.is_supported()).copied().collect()).unwrap_or_default();
            for (rel, other) in supports {
                self.get_mut(id).unwrap().related.remove(&(rel, other));
                if let Some(o) = self.get_mut(other) {
                    o.related.remove(&(rel.inverse(), id));
                }
            }
        }
        if let Some(e) = self.get_mut(id) {
            e.state = state;
        }
    }

    /// Full action pathway: directed targets when the annotation names them,
    /// otherwise noun extraction, visible-candidate gathering and oracle
    /// association in `frame` (the latest ingested frame, if any).
    pub fn process_action(
        &mut self,
        ann: &ActionAnnotation,
        frame: Option<(&FrameObservation, &DepthMap)>,
        intr: &CameraIntrinsics,
        oracle: &mut dyn AssociationOracle,
        lexicon: &VerbLexicon,
        cfg: &MemoryConfig,
    ) -> Result<ActionOutcome, ActionError> {
        if ann.text.trim().is_empty() {
            return Err(ActionError::EmptyText);
        }
        let (verb, class) = lexicon.parse_verb(&ann.text);
        self.report.actions_processed += 1;

        if let Some(targets) = &ann.targets {
            if let Some(missing) = targets.iter().find(|id| self.get(**id).is_none()) {
                return Err(ActionError::UnknownId(*missing));
            }
            self.history.append_action(ActionRecord {
                timestamp_s: ann.timestamp_s,
                verb: verb.clone(),
                raw_text: ann.text.clone(),
                target_ids: targets.clone(),
                frame_feat: frame.map(|(f, _)| f.ctx_feat.clone()).unwrap_or_default(),
                frame_id: frame.map(|(f, _)| f.frame_id),
                directed: true,
            })?;
            self.apply_state(targets, class)?;
            return Ok(ActionOutcome {
                verb,
                class,
                candidates: targets.clone(),
                targets: targets.clone(),
                oracle_failed: false,
            });
        }

        let categories: Vec<String> = self.categories().into_iter().map(String::from).collect();
        let cat_refs: Vec<&str> = categories.iter().map(String::as_str).collect();
        let nouns = extract_nouns(ann, &cat_refs);
        let candidates = match frame {
            Some((f, depth)) => gather_candidates(self, &nouns, f, depth, intr, cfg),
            None => Vec::new(),
        };
        let (targets, oracle_failed) = self.associate(ann, &verb, &candidates, frame.map(|(f, _)| f), oracle)?;

        for id in &targets {
            let region = candidates.iter().find(|(c, _)| c == id).map(|(_, r)| *r);
            let override_state = match (frame, region) {
                (Some((f, _)), Some(r)) => oracle.state_change(f.frame_id, &r, &ann.text).ok().flatten(),
                _ => None,
            };
            match override_state {
                Some(s) => self.set_state(*id, s),
                None => self.apply_state(&[*id], class)?,
            }
        }
        Ok(ActionOutcome { verb, class, candidates: candidates.iter().map(|(id, _)| *id).collect(), targets, oracle_failed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Box3D, Pose, UpAxis, Vec3};
    use crate::memory::{FeatureDims, Mobility, ObjectEntry, Relation};
    use crate::similarity::FeaturePair;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    #[test]
    fn nouns_from_text() {
        let ann = ActionAnnotation::new(1.0, "#C C picks the bottle from the fridge");
        assert_eq!(extract_nouns(&ann, &["fridge", "bottle", "cup"]), vec!["bottle", "fridge"]);
    }

    #[test]
    fn nouns_passthrough_and_empty() {
        let mut ann = ActionAnnotation::new(1.0, "C catches the can");
        ann.nouns = Some(vec!["can".into()]);
        assert_eq!(extract_nouns(&ann, &[]), vec!["can"]);
        let ann = ActionAnnotation::new(1.0, "C walks around");
        assert!(extract_nouns(&ann, &["cup", "table"]).is_empty());
    }

    #[test]
    fn nouns_longest_match_and_boundaries() {
        let ann = ActionAnnotation::new(1.0, "C fills the wine glass next to the glasses and the cupboard");
        assert_eq!(extract_nouns(&ann, &["glass", "wine glass", "cup"]), vec!["wine glass", "glass"]);
    }

    #[test]
    fn lexicon_inflections() {
        let lex = VerbLexicon::default();
        assert!(lex.len() >= 30);
        assert_eq!(lex.classify("catches"), VerbClass::Grasp);
        assert_eq!(lex.classify("picked"), VerbClass::Grasp);
        assert_eq!(lex.classify("dropped"), VerbClass::Release);
        assert_eq!(lex.classify("putting"), VerbClass::Release);
        assert_eq!(lex.classify("closes"), VerbClass::Close);
        assert_eq!(lex.classify("opening"), VerbClass::Open);
        assert_eq!(lex.classify("juggles"), VerbClass::Neutral);
        assert_eq!(lex.parse_verb("C catches the can"), ("catch".into(), VerbClass::Grasp));
        assert_eq!(lex.parse_verb("C stares at the wall"), ("stares".into(), VerbClass::Neutral));
    }

    fn mem() -> SceneMemory {
        SceneMemory::new(UpAxis::PosZ, FeatureDims { clip: 1, dino: 1, ctx: 1 })
    }

    fn entry(cat: &str, b: Box3D) -> ObjectEntry {
        ObjectEntry {
            id: 0,
            category: cat.into(),
            state: ObjectState::Normal,
            related: BTreeSet::new(),
            box3d: b,
            obj_feat: FeaturePair::new(vec![1.0], vec![1.0]),
            ctx_feat: vec![1.0],
            mobility: Mobility::Static,
            obs_count: 1,
            last_seen: 0,
        }
    }

    #[test]
    fn grasp_clears_support_relations() {
        let mut m = mem();
        let table = m.insert(entry("table", Box3D::from_center_size(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))));
        let can = m.insert(entry("can", Box3D::from_center_size(Vec3::ZERO, Vec3::new(0.1, 0.1, 0.1))));
        m.link(can, Relation::On, table);
        m.apply_state(&[can], VerbClass::Grasp).unwrap();
        assert_eq!(m.get(can).unwrap().state, ObjectState::InHand);
        assert!(m.get(can).unwrap().related.is_empty());
        assert!(m.get(table).unwrap().related.is_empty());
        assert!(m.relations_consistent());
    }

    #[test]
    fn open_neutral_unknown() {
        let mut m = mem();
        let fridge = m.insert(entry("fridge", Box3D::from_center_size(Vec3::ZERO, Vec3::new(1.0, 1.0, 2.0))));
        m.apply_state(&[fridge], VerbClass::Open).unwrap();
        assert_eq!(m.get(fridge).unwrap().state, ObjectState::Open);
        let before = m.clone();
        m.apply_state(&[fridge], VerbClass::Neutral).unwrap();
        assert_eq!(m, before);
        assert_eq!(m.apply_state(&[99], VerbClass::Grasp), Err(ActionError::UnknownId(99)));
    }

    fn frame() -> (FrameObservation, DepthMap, CameraIntrinsics) {
        let intr = CameraIntrinsics::new(50.0, 50.0, 32.0, 32.0, 64, 64).unwrap();
        let f =
            FrameObservation { frame_id: 3, timestamp_s: 3.0, pose: Pose::identity(), ctx_feat: vec![1.0], detections: vec![] };
        (f, DepthMap::filled(64, 64, 5.0), intr)
    }

    #[test]
    fn associate_logs_exactly_one_record() {
        let (f, depth, intr) = frame();
        let cfg = MemoryConfig::default();
        let lex = VerbLexicon::default();
        let mut m = mem();
        let left = m.insert(entry("can", Box3D::from_center_size(Vec3::new(-0.5, 0.0, 3.0), Vec3::new(0.2, 0.2, 0.2))));
        let right = m.insert(entry("can", Box3D::from_center_size(Vec3::new(0.5, 0.0, 3.0), Vec3::new(0.2, 0.2, 0.2))));
        let ann = ActionAnnotation::new(3.5, "C catches the can");

        let mut pick_right = |_: FrameId, r: &PixelRect, _: &str| Ok::<_, OracleError>(r.center().0 > 32.0);
        let out = m.process_action(&ann, Some((&f, &depth)), &intr, &mut pick_right, &lex, &cfg).unwrap();
        assert_eq!(out.candidates, vec![left, right]);
        assert_eq!(out.targets, vec![right]);
        assert_eq!(m.get(right).unwrap().state, ObjectState::InHand);
        assert_eq!(m.get(left).unwrap().state, ObjectState::Normal);
        assert_eq!(m.history.actions().len(), 1);

        let mut never = |_: FrameId, _: &PixelRect, _: &str| Ok::<_, OracleError>(false);
        let out = m
            .process_action(&ActionAnnotation::new(4.0, "C catches the can"), Some((&f, &depth)), &intr, &mut never, &lex, &cfg)
            .unwrap();
        assert!(out.targets.is_empty());
        assert_eq!(m.history.actions().len(), 2);

        let mut down = |_: FrameId, _: &PixelRect, _: &str| Err::<bool, _>(OracleError("offline".into()));
        let out = m
            .process_action(&ActionAnnotation::new(5.0, "C catches the can"), Some((&f, &depth)), &intr, &mut down, &lex, &cfg)
            .unwrap();
        assert!(out.oracle_failed && out.targets.is_empty());
        assert_eq!(m.history.actions().len(), 3);
        assert_eq!(m.report.oracle_failures, 1);

        let out = m
            .process_action(&ActionAnnotation::new(6.0, "C opens the door"), Some((&f, &depth)), &intr, &mut never, &lex, &cfg)
            .unwrap();
        assert!(out.candidates.is_empty());
        assert_eq!(m.history.actions().len(), 4);
    }

    #[test]
    fn directed_targets_skip_association() {
        let (f, depth, intr) = frame();
        let mut m = mem();
        let fridge = m.insert(entry("fridge", Box3D::from_center_size(Vec3::new(0.0, 0.0, 3.0), Vec3::new(1.0, 1.0, 1.0))));
        let mut ann = ActionAnnotation::new(1.0, "open the fridge");
        ann.targets = Some(vec![fridge]);
        let mut panic_oracle = |_: FrameId, _: &PixelRect, _: &str| -> Result<bool, OracleError> { panic!("not consulted") };
        m.process_action(&ann, Some((&f, &depth)), &intr, &mut panic_oracle, &VerbLexicon::default(), &MemoryConfig::default())
            .unwrap();
        assert_eq!(m.get(fridge).unwrap().state, ObjectState::Open);
        assert!(m.history.actions()[0].directed);
        ann.targets = Some(vec![42]);
        assert_eq!(
            m.process_action(&ann, None, &intr, &mut panic_oracle, &VerbLexicon::default(), &MemoryConfig::default()),
            Err(ActionError::UnknownId(42))
        );
    }
}
