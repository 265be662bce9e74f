//! Read-only query tools over a [`SceneMemory`]. Every ranking is an exact
//! brute-force scan with descending score and ascending-id tie breaks.

pub mod query;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::math;
use crate::memory::{ObjectId, SceneMemory};
use crate::FrameId;

use query::QueryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrievalError {
    #[error("query has {got} dims, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("memory holds nothing to search")]
    EmptyMemory,
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<T> {
    pub item: T,
    pub score: f64,
}

/// Appearance channel searched by [`retrieve_by_appearance`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    Clip,
    Dino,
}

fn check_dims(expected: usize, q: &[f64]) -> Result<(), RetrievalError> {
    if q.len() == expected {
        Ok(())
    } else {
        Err(RetrievalError::DimensionMismatch { expected, got: q.len() })
    }
}

fn rank_order<T: Ord>(a: &Scored<T>, b: &Scored<T>) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.item.cmp(&b.item))
}

/// Keeps the best `k` by descending score, ascending item.
pub fn top_k<T: Ord>(mut scored: Vec<Scored<T>>, k: usize) -> Vec<Scored<T>> {
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

/// Top-`k` entries by cosine between `q` and the chosen appearance channel.
pub fn retrieve_by_appearance(
    memory: &SceneMemory,
    q: &[f64],
    channel: Channel,
    k: usize,
) -> Result<Vec<Scored<ObjectId>>, RetrievalError> {
    let dims = match channel {
        Channel::Clip => memory.dims.clip,
        Channel::Dino => memory.dims.dino,
    };
    check_dims(dims, q)?;
    let scored = memory
        .entries()
        .map(|e| {
            let feat = match channel {
                Channel::Clip => &e.obj_feat.clip,
                Channel::Dino => &e.obj_feat.dino,
            };
            Scored { item: e.id, score: math::cosine(q, feat) }
        })
        .collect();
    Ok(top_k(scored, k))
}

/// Top-`k` entries by cosine between `q` and their context feature.
pub fn retrieve_by_environment(memory: &SceneMemory, q: &[f64], k: usize) -> Result<Vec<Scored<ObjectId>>, RetrievalError> {
    check_dims(memory.dims.ctx, q)?;
    let scored = memory.entries().map(|e| Scored { item: e.id, score: math::cosine(q, &e.ctx_feat) }).collect();
    Ok(top_k(scored, k))
}

/// Top-`k` ingested frames by cosine between `q` and the frame context feature.
pub fn temporal_loc(memory: &SceneMemory, q: &[f64], k: usize) -> Result<Vec<Scored<FrameId>>, RetrievalError> {
    check_dims(memory.dims.ctx, q)?;
    if memory.frames().is_empty() {
        return Err(RetrievalError::EmptyMemory);
    }
    let scored = memory.frames().iter().map(|f| Scored { item: f.frame_id, score: math::cosine(q, &f.ctx_feat) }).collect();
    Ok(top_k(scored, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCluster {
    pub centroid: Vec3,
    /// Member ids, ascending.
    pub members: Vec<ObjectId>,
    /// Mean context cosine of the members.
    pub score: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so component labels are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage components of `points` where pairs at distance `<= cutoff`
/// are connected. Returns one index list per component, each ascending, ordered
/// by first member.
pub fn single_linkage(points: &[Vec3], cutoff: f64) -> Vec<Vec<usize>> {
    let cell = if cutoff > 0.0 { cutoff } else { 1.0 };
    let key = |p: &Vec3| -> (i64, i64, i64) {
        let f = |v: f64| math::floor(v / cell) as i64;
        (f(p.x()), f(p.y()), f(p.z()))
    };
    let mut grid: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                    for &j in bucket {
                        if j > i && p.distance(&points[j]) <= cutoff {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Clusters entry centers and returns the `k` clusters whose members' context
/// features best match `q` on average. Ties go to the cluster with the
/// smallest member id.
pub fn spatial_clusters(memory: &SceneMemory, q: &[f64], cutoff: f64, k: usize) -> Result<Vec<SpatialCluster>, RetrievalError> {
    check_dims(memory.dims.ctx, q)?;
    if memory.is_empty() {
        return Err(RetrievalError::EmptyMemory);
    }
    let entries: Vec<_> = memory.entries().collect();
    let centers: Vec<Vec3> = entries.iter().map(|e| e.box3d.center()).collect();
    let mut scored: Vec<Scored<ObjectId>> = Vec::new();
    let mut clusters: BTreeMap<ObjectId, SpatialCluster> = BTreeMap::new();
    for group in single_linkage(&centers, cutoff) {
        let n = group.len() as f64;
        let members: Vec<ObjectId> = group.iter().map(|&i| entries[i].id).collect();
        let score = group.iter().map(|&i| math::cosine(q, &entries[i].ctx_feat)).sum::<f64>() / n;
        let centroid = group.iter().fold(Vec3::ZERO, |acc, &i| acc + centers[i]) * (1.0 / n);
        scored.push(Scored { item: members[0], score });
        clusters.insert(members[0], SpatialCluster { centroid, members, score });
    }
    Ok(top_k(scored, k).into_iter().filter_map(|s| clusters.remove(&s.item)).collect())
}

/// Centroids of the top-`k` spatial clusters.
pub fn spatial_loc(memory: &SceneMemory, q: &[f64], cutoff: f64, k: usize) -> Result<Vec<Scored<Vec3>>, RetrievalError> {
    Ok(spatial_clusters(memory, q, cutoff, k)?.into_iter().map(|c| Scored { item: c.centroid, score: c.score }).collect())
}

/// Combined object search: similarity hits and structured-query hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbHits {
    pub by_similarity: Vec<Scored<ObjectId>>,
    /// Ascending.
    pub by_structure: Vec<ObjectId>,
    /// Similarity ranking first, then structured-only ids ascending.
    pub union: Vec<ObjectId>,
}

/// Searches by appearance (when `q` is given) and by a structured query
/// (when `structured` is given), and unions the ids without fusing scores.
pub fn query_db(
    memory: &SceneMemory,
    q: Option<&[f64]>,
    channel: Channel,
    structured: Option<&str>,
    k: usize,
) -> Result<DbHits, RetrievalError> {
    let by_similarity = match q {
        Some(q) => retrieve_by_appearance(memory, q, channel, k)?,
        None => Vec::new(),
    };
    let by_structure = match structured {
        Some(src) => query::query_structured(memory, src)?.object_ids(),
        None => Vec::new(),
    };
    let mut union: Vec<ObjectId> = by_similarity.iter().map(|s| s.item).collect();
    for id in &by_structure {
        if !union.contains(id) {
            union.push(*id);
        }
    }
    Ok(DbHits { by_similarity, by_structure, union })
}
