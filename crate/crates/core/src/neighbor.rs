//! Fixed-radius neighbor search used to merge nearby tree nodes.
//!
//! Three interchangeable backends answer the same query: the closest
//! inserted state within the merge tolerance, ties broken by lowest node id.
//! Brute force scans everything and serves as the oracle; the spatial hash
//! buckets states into cells of side `tolerance` and inspects the `3^d`
//! surrounding cells; the projection backend orders states by their
//! coordinate along the leading principal direction of a sample and only
//! scans a window of half-width `tolerance` around the query.

use std::collections::{BTreeMap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};
use std::ops::Bound;

use ordered_float::OrderedFloat;

use crate::error::{Result, TsaError};
use crate::problem::StateNorm;
use crate::tree::NodeRef;

/// The spatial hash is the automatic choice up to this dimension; beyond it
/// the `3^d` cell fan-out dominates and projection is used instead.
pub const HASH_MAX_DIM: usize = 4;

/// Rows used to estimate the principal direction.
const PCA_SAMPLE_ROWS: usize = 4096;
const PCA_ITERATIONS: usize = 60;

/// Inflation of the search radius so rounding in the cell or window
/// computation never hides a node that is within tolerance. Candidates are
/// always confirmed with the exact norm.
const RADIUS_SLACK: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborStrategy {
    BruteForce,
    SpatialHash,
    PcaProjection,
}

impl NeighborStrategy {
    pub fn auto(dim: usize) -> Self {
        if dim <= HASH_MAX_DIM {
            NeighborStrategy::SpatialHash
        } else {
            NeighborStrategy::PcaProjection
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NeighborStrategy::BruteForce => "brute",
            NeighborStrategy::SpatialHash => "hash",
            NeighborStrategy::PcaProjection => "pca",
        }
    }
}

impl std::str::FromStr for NeighborStrategy {
    type Err = TsaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(NeighborStrategy::BruteForce),
            "hash" => Ok(NeighborStrategy::SpatialHash),
            "pca" => Ok(NeighborStrategy::PcaProjection),
            other => Err(TsaError::invalid(format!(
                "unknown neighbor strategy '{other}' (expected brute, hash or pca)"
            ))),
        }
    }
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub cells: usize,
    pub distance_checks: usize,
}

/// Hasher for keys that are already well mixed.
#[derive(Default)]
struct PassThrough(u64);

impl Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

type CellMap = HashMap<u64, Vec<u32>, BuildHasherDefault<PassThrough>>;

#[derive(Debug, Clone)]
enum Backend {
    Brute,
    Hash {
        cell: f64,
        buckets: CellMap,
    },
    Projection {
        direction: Vec<f64>,
        keys: BTreeMap<OrderedFloat<f64>, Vec<u32>>,
    },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    tolerance: f64,
    norm: StateNorm,
    /// Search radius in raw coordinates.
    radius: f64,
    requested: NeighborStrategy,
    states: Vec<f64>,
    ids: Vec<NodeRef>,
    backend: Backend,
}

impl NeighborIndex {
    /// Empty index. `sample` (row-major states) fixes the projection
    /// direction of the PCA backend and is ignored by the others; a
    /// degenerate sample makes the PCA backend fall back to brute force.
    pub fn new(
        strategy: NeighborStrategy,
        tolerance: f64,
        norm: StateNorm,
        dim: usize,
        sample: &[f64],
    ) -> Result<Self> {
        if dim == 0 {
            return Err(TsaError::invalid("neighbor index needs dim >= 1"));
        }
        if !(tolerance >= 0.0) || !tolerance.is_finite() {
            return Err(TsaError::invalid(format!("tolerance must be >= 0, got {tolerance}")));
        }
        if tolerance == 0.0 && strategy != NeighborStrategy::BruteForce {
            return Err(TsaError::invalid(format!(
                "the {} strategy needs a positive tolerance",
                strategy.name()
            )));
        }
        if !sample.len().is_multiple_of(dim) {
            return Err(TsaError::invalid("sample length is not a multiple of dim"));
        }
        let radius = tolerance / norm.weight().sqrt() * RADIUS_SLACK;
        let backend = match strategy {
            NeighborStrategy::BruteForce => Backend::Brute,
            NeighborStrategy::SpatialHash => Backend::Hash {
                cell: radius,
                buckets: CellMap::default(),
            },
            NeighborStrategy::PcaProjection => match principal_direction(sample, dim) {
                Some(direction) => Backend::Projection {
                    direction,
                    keys: BTreeMap::new(),
                },
                None => Backend::Brute,
            },
        };
        Ok(NeighborIndex {
            dim,
            tolerance,
            norm,
            radius,
            requested: strategy,
            states: Vec::new(),
            ids: Vec::new(),
            backend,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Strategy actually answering queries, after any fallback.
    pub fn effective_strategy(&self) -> NeighborStrategy {
        match self.backend {
            Backend::Brute => NeighborStrategy::BruteForce,
            Backend::Hash { .. } => NeighborStrategy::SpatialHash,
            Backend::Projection { .. } => NeighborStrategy::PcaProjection,
        }
    }

    /// True when projection was requested but the sample was degenerate.
    pub fn fell_back(&self) -> bool {
        self.requested != self.effective_strategy()
    }

    pub fn insert(&mut self, id: NodeRef, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        let slot = self.ids.len() as u32;
        self.ids.push(id);
        self.states.extend_from_slice(state);
        match &mut self.backend {
            Backend::Brute => {}
            Backend::Hash { cell, buckets } => {
                let key = mix_cell(state.iter().map(|&x| cell_coord(x, *cell)));
                buckets.entry(key).or_default().push(slot);
            }
            Backend::Projection { direction, keys } => {
                let key = dot(direction, state);
                keys.entry(OrderedFloat(key)).or_default().push(slot);
            }
        }
    }

    #[inline]
    fn state(&self, slot: u32) -> &[f64] {
        let s = slot as usize * self.dim;
        &self.states[s..s + self.dim]
    }

    /// Closest inserted node within the tolerance, lowest id on ties.
    pub fn find_merge_target(&self, candidate: &[f64]) -> Option<NodeRef> {
        self.query(candidate).0
    }

    pub fn query(&self, candidate: &[f64]) -> (Option<NodeRef>, QueryStats) {
        let mut best: Option<(f64, NodeRef)> = None;
        let mut stats = QueryStats::default();
        let mut consider = |slot: u32, stats: &mut QueryStats| {
            stats.distance_checks += 1;
            let d = self.norm.distance(candidate, self.state(slot));
            if d <= self.tolerance {
                let id = self.ids[slot as usize];
                match best {
                    Some((bd, bid)) if d > bd || (d == bd && id > bid) => {}
                    _ => best = Some((d, id)),
                }
            }
        };
        match &self.backend {
            Backend::Brute => {
                for slot in 0..self.ids.len() as u32 {
                    consider(slot, &mut stats);
                }
            }
            Backend::Hash { cell, buckets } => {
                let base: Vec<i64> = candidate.iter().map(|&x| cell_coord(x, *cell)).collect();
                let mut offset = vec![-1i64; self.dim];
                loop {
                    stats.cells += 1;
                    let key = mix_cell(base.iter().zip(&offset).map(|(b, o)| b.saturating_add(*o)));
                    if let Some(bucket) = buckets.get(&key) {
                        for &slot in bucket {
                            consider(slot, &mut stats);
                        }
                    }
                    // Advance the {-1, 0, 1}^d odometer.
                    let mut axis = 0;
                    while axis < self.dim {
                        offset[axis] += 1;
                        if offset[axis] <= 1 {
                            break;
                        }
                        offset[axis] = -1;
                        axis += 1;
                    }
                    if axis == self.dim {
                        break;
                    }
                }
            }
            Backend::Projection { direction, keys } => {
                let p = dot(direction, candidate);
                let lo = Bound::Included(OrderedFloat(p - self.radius));
                let hi = Bound::Included(OrderedFloat(p + self.radius));
                for (_, bucket) in keys.range((lo, hi)) {
                    for &slot in bucket {
                        consider(slot, &mut stats);
                    }
                }
            }
        }
        (best.map(|(_, id)| id), stats)
    }
}

/// Builds an index over `states` (row-major), assigning ids
/// `(level, 0..count)` in row order.
pub fn build_neighbor_index(
    states: &[f64],
    dim: usize,
    level: usize,
    strategy: NeighborStrategy,
    tolerance: f64,
    norm: StateNorm,
) -> Result<NeighborIndex> {
    let mut index = NeighborIndex::new(strategy, tolerance, norm, dim, states)?;
    for (i, s) in states.chunks_exact(dim).enumerate() {
        index.insert(NodeRef::new(level, i), s);
    }
    Ok(index)
}

/// Closest in-scope node within the index tolerance.
pub fn find_merge_target(index: &NeighborIndex, candidate: &[f64]) -> Option<NodeRef> {
    index.find_merge_target(candidate)
}

#[inline]
fn cell_coord(x: f64, cell: f64) -> i64 {
    (x / cell).floor() as i64
}

#[inline]
fn mix_cell(coords: impl Iterator<Item = i64>) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for c in coords {
        h ^= c as u64;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h ^= h >> 29;
    h.wrapping_mul(0x94D0_49BB_1331_11EB)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Leading right singular vector of the centered sample, by power iteration
/// on `X^T X`. `None` when the sample has no spread.
pub(crate) fn principal_direction(sample: &[f64], dim: usize) -> Option<Vec<f64>> {
    let rows = sample.len() / dim;
    if rows < 2 {
        return None;
    }
    let stride = rows.div_ceil(PCA_SAMPLE_ROWS);
    let picked: Vec<&[f64]> = sample.chunks_exact(dim).step_by(stride).collect();
    let n = picked.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in &picked {
        for (m, x) in mean.iter_mut().zip(*r) {
            *m += x / n;
        }
    }
    let centered: Vec<Vec<f64>> = picked
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let start = centered.iter().max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))?;
    let start_norm = dot(start, start).sqrt();
    // rounding in the mean leaves a tiny residue on identical rows
    let scale = dot(&mean, &mean).sqrt();
    if !(start_norm > 1e-12 * scale) || !start_norm.is_finite() {
        return None;
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / start_norm).collect();
    let mut w = vec![0.0; dim];
    for _ in 0..PCA_ITERATIONS {
        w.fill(0.0);
        for c in &centered {
            let s = dot(c, &v);
            for (wi, ci) in w.iter_mut().zip(c) {
                *wi += s * ci;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if !(norm > 0.0) {
            break;
        }
        let mut change = 0.0;
        for (vi, wi) in v.iter_mut().zip(&w) {
            let next = wi / norm;
            change += (next - *vi) * (next - *vi);
            *vi = next;
        }
        if change < 1e-20 {
            break;
        }
    }
    Some(v)
}
