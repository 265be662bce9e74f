//! A memory handle for one writer and many readers.
//!
//! Readers take an `Arc` of the latest published memory and query it without
//! holding any lock. The writer works on its own copy and publishes it with a
//! pointer swap, so readers never block it for longer than that swap.

use std::sync::{Arc, RwLock};

use scenemem_core::SceneMemory;

#[derive(Debug)]
pub struct SharedMemory {
    current: RwLock<Arc<SceneMemory>>,
}

impl SharedMemory {
    pub fn new(memory: SceneMemory) -> Self {
        SharedMemory { current: RwLock::new(Arc::new(memory)) }
    }

    /// The latest published memory.
    pub fn snapshot(&self) -> Arc<SceneMemory> {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn publish(&self, memory: SceneMemory) {
        *self.current.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(memory);
    }
}
