//! Persistent 3D object memory for egocentric RGB-D streams.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over in-memory values: lifting 2D detections into world
//! boxes, scoring and re-identifying objects, maintaining relations and
//! history buffers, and answering retrieval queries. Neural models are
//! reached only through the [`FeatureProbe`] and [`AssociationOracle`]
//! traits. File formats, synthetic worlds and the CLI live in the
//! `scenemem` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod action;
pub mod config;
pub mod geometry;
pub mod history;
pub mod memory;
pub mod retrieval;
pub mod similarity;

mod math;

pub use action::{ActionAnnotation, ActionError, AssociationOracle, OracleError, VerbClass, VerbLexicon};
pub use config::MemoryConfig;
pub use geometry::{
    Box3D, CameraIntrinsics, DepthMap, Detection2D, GeometryError, PixelMask, PixelRect, Pose, UpAxis, Vec3, VisibilityStatus,
};
pub use history::{ActionRecord, HistoryBuffers, HistoryError, HistoryFilter, VisibleRecord};
pub use memory::{
    FeatureProbe, FrameLog, FrameObservation, IngestReport, Mobility, MobilityEvent, ObjectEntry, ObjectId, ObjectState,
    Observation, ProbeError, Relation, SceneMemory, UpdateError,
};
pub use retrieval::{query::QueryError, RetrievalError, Scored};
pub use similarity::{FeaturePair, SimilarityError};

/// Frame identifier as carried by episodes.
pub type FrameId = u64;
