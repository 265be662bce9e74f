//! Replays an episode into a [`SceneMemory`].

use scenemem_core::memory::FrameUpdate;
use scenemem_core::{ActionError, DepthMap, FrameObservation, MemoryConfig, SceneMemory, UpdateError, VerbLexicon};

use crate::episode::{Episode, EpisodeError};
use crate::provider::Provider;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("frame {frame_id}: {source}")]
    Update { frame_id: u64, source: UpdateError },
    #[error("action {index}: {source}")]
    Action { index: usize, source: ActionError },
}

/// Called after each ingested frame.
pub type FrameHook<'a> = &'a mut dyn FnMut(&SceneMemory, &FrameUpdate);

/// Ingests every frame in file order. Each action is processed right after
/// the latest frame whose timestamp does not exceed its own; actions before
/// the first frame are processed without one.
pub fn ingest(
    episode: &Episode,
    provider: &mut dyn Provider,
    cfg: &MemoryConfig,
    lexicon: &VerbLexicon,
    mut hook: Option<FrameHook<'_>>,
) -> Result<SceneMemory, PipelineError> {
    let intr = *episode.intrinsics();
    let mut memory = SceneMemory::new(episode.manifest.up_axis, episode.manifest.dims);
    let actions = &episode.actions;
    let mut next_action = 0;
    let mut run_actions = |memory: &mut SceneMemory,
                           provider: &mut dyn Provider,
                           frame: Option<(&FrameObservation, &DepthMap)>,
                           until: Option<f64>|
     -> Result<(), PipelineError> {
        while let Some(ann) = actions.get(next_action) {
            if until.is_some_and(|t| ann.timestamp_s >= t) {
                break;
            }
            memory
                .process_action(ann, frame, &intr, provider, lexicon, cfg)
                .map_err(|source| PipelineError::Action { index: next_action, source })?;
            next_action += 1;
        }
        Ok(())
    };

    run_actions(&mut memory, provider, None, episode.records.first().map(|r| r.timestamp_s))?;
    for (i, item) in episode.frames()?.enumerate() {
        let (frame, depth) = item?;
        let update = memory
            .update(&frame, &depth, &intr, provider, cfg)
            .map_err(|source| PipelineError::Update { frame_id: frame.frame_id, source })?;
        if let Some(h) = hook.as_mut() {
            h(&memory, &update);
        }
        let until = episode.records.get(i + 1).map(|r| r.timestamp_s);
        run_actions(&mut memory, provider, Some((&frame, &depth)), until)?;
    }
    Ok(memory)
}
