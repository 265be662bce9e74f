#![allow(dead_code)]

use std::path::Path;

use scenemem::episode::Episode;
use scenemem::pipeline;
use scenemem::provider::SyntheticProvider;
use scenemem::synth::{self, AnswerKey, WorldSpec};
use scenemem_core::{MemoryConfig, SceneMemory, VerbLexicon};
use tempfile::TempDir;

pub fn generate(spec: &WorldSpec) -> (TempDir, AnswerKey) {
    let dir = tempfile::tempdir().unwrap();
    let key = synth::generate(spec, dir.path()).unwrap();
    (dir, key)
}

pub fn ingest(dir: &Path, cfg: &MemoryConfig) -> SceneMemory {
    let ep = Episode::open(dir).unwrap();
    let mut provider = SyntheticProvider::from_episode(dir).unwrap();
    pipeline::ingest(&ep, &mut provider, cfg, &VerbLexicon::default(), None).unwrap()
}
