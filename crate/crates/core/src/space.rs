//! Finite metric point clouds: the discretized ambient spaces `X` and `Y`.
//!
//! A [`MetricSpace`] is an immutable list of points with either the Euclidean
//! metric on their coordinates or an explicit distance table. Every subset is
//! both measurable and open, so a [`PointSet`] plays the role of every set that
//! appears in the calculus.
//!
//! Distance comparisons carry a tolerance of `1e-9 * h`, where `h` is the
//! resolution (smallest nonzero pairwise distance). Grid coordinates are
//! generated as `min + i * step`, and without the slack two grid neighbours
//! would sit a few ulps either side of `h`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a point inside its [`MetricSpace`]. Ids are contiguous from 0.
pub type PointId = usize;

const TOL_FACTOR: f64 = 1e-9;

/// One axis of a regular grid: `min, min + step, ..., max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        GridAxis { min, max, step }
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    fn coord(&self, i: usize) -> f64 {
        clean(self.min + i as f64 * self.step)
    }
}

/// Rectangular grid in `R^d`, enumerated row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        GridSpec { axes }
    }

    /// One-dimensional grid.
    pub fn line(min: f64, max: f64, step: f64) -> Self {
        GridSpec::new(vec![GridAxis::new(min, max, step)])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(GridAxis::count).collect()
    }

    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        for (k, a) in self.axes.iter().enumerate() {
            if !(a.step > 0.0) || !a.min.is_finite() || !a.max.is_finite() || a.max < a.min {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {k}: need finite min <= max and step > 0"
                )));
            }
            let n = (a.max - a.min) / a.step;
            if (n - n.round()).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {k}: (max - min) is not a multiple of step"
                )));
            }
        }
        Ok(())
    }

    /// Lattice multi-index of a point id.
    pub fn multi_index(&self, mut id: PointId) -> Vec<usize> {
        let counts = self.counts();
        let mut idx = vec![0; counts.len()];
        for k in (0..counts.len()).rev() {
            idx[k] = id % counts[k];
            id /= counts[k];
        }
        idx
    }

    /// Point id of a lattice multi-index, or `None` when off-grid.
    pub fn id_of(&self, idx: &[i64]) -> Option<PointId> {
        let counts = self.counts();
        let mut id = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            if i < 0 || i as usize >= counts[k] {
                return None;
            }
            id = id * counts[k] + i as usize;
        }
        Some(id)
    }

    /// Point id of a multi-index after clamping each axis into range.
    pub fn clamped_id(&self, idx: &[i64]) -> PointId {
        let counts = self.counts();
        let mut id = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            let c = i.clamp(0, counts[k] as i64 - 1) as usize;
            id = id * counts[k] + c;
        }
        id
    }

    fn coords(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|id| {
                self.multi_index(id)
                    .iter()
                    .zip(&self.axes)
                    .map(|(&i, a)| a.coord(i))
                    .collect()
            })
            .collect()
    }
}

/// Rounds away the representation noise of `min + i * step`.
fn clean(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Euclidean,
    /// Row-major `n x n` distance table.
    Table(Vec<f64>),
}

/// A finite metric space. Immutable after construction; share it through `Arc`.
#[derive(Debug)]
pub struct MetricSpace {
    name: String,
    coords: Vec<Vec<f64>>,
    metric: Metric,
    grid: Option<GridSpec>,
    resolution: f64,
    distances: OnceLock<Vec<f64>>,
}

impl PartialEq for MetricSpace {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords && self.metric == other.metric && self.grid == other.grid
    }
}

impl MetricSpace {
    /// Regular grid with the Euclidean metric.
    pub fn grid(spec: GridSpec) -> Result<Arc<Self>> {
        spec.validate()?;
        let coords = spec.coords();
        let resolution = spec
            .axes
            .iter()
            .filter(|a| a.count() > 1)
            .map(|a| a.step)
            .fold(f64::INFINITY, f64::min);
        let resolution = if resolution.is_finite() { resolution } else { 1.0 };
        Ok(Arc::new(MetricSpace {
            name: String::new(),
            coords,
            metric: Metric::Euclidean,
            grid: Some(spec),
            resolution,
            distances: OnceLock::new(),
        }))
    }

    /// Convenience for the common one-dimensional grid.
    pub fn line(min: f64, max: f64, step: f64) -> Result<Arc<Self>> {
        Self::grid(GridSpec::line(min, max, step))
    }

    /// Explicit coordinate list with the Euclidean metric.
    pub fn from_points(coords: Vec<Vec<f64>>) -> Result<Arc<Self>> {
        if coords.is_empty() {
            return Err(Error::InvalidMetric("space must contain at least one point".into()));
        }
        let d = coords[0].len();
        if coords.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidMetric(
                "coordinates must be finite and share one dimension".into(),
            ));
        }
        let mut space = MetricSpace {
            name: String::new(),
            coords,
            metric: Metric::Euclidean,
            grid: None,
            resolution: 1.0,
            distances: OnceLock::new(),
        };
        space.resolution = space.min_pairwise()?;
        Ok(Arc::new(space))
    }

    /// Custom distance table. `coords` are only used for reports; pass an
    /// empty vector to get the point index as a one-dimensional label.
    pub fn from_table(coords: Vec<Vec<f64>>, table: Vec<Vec<f64>>) -> Result<Arc<Self>> {
        let n = table.len();
        if n == 0 {
            return Err(Error::InvalidMetric("space must contain at least one point".into()));
        }
        if table.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidMetric("distance table must be square".into()));
        }
        let coords = if coords.is_empty() {
            (0..n).map(|i| vec![i as f64]).collect()
        } else if coords.len() == n {
            coords
        } else {
            return Err(Error::InvalidMetric("coordinate labels do not match table size".into()));
        };
        let flat: Vec<f64> = table.into_iter().flatten().collect();
        let mut space = MetricSpace {
            name: String::new(),
            coords,
            metric: Metric::Table(flat),
            grid: None,
            resolution: 1.0,
            distances: OnceLock::new(),
        };
        space.resolution = space.min_pairwise()?;
        space.check_metric_axioms()?;
        Ok(Arc::new(space))
    }

    /// Attaches a name used as `space_id` in serialized records.
    pub fn named(self: Arc<Self>, name: &str) -> Arc<Self> {
        let mut s = Arc::try_unwrap(self).unwrap_or_else(|arc| MetricSpace {
            name: arc.name.clone(),
            coords: arc.coords.clone(),
            metric: arc.metric.clone(),
            grid: arc.grid.clone(),
            resolution: arc.resolution,
            distances: OnceLock::new(),
        });
        s.name = name.to_string();
        Arc::new(s)
    }

    fn min_pairwise(&self) -> Result<f64> {
        let n = self.len();
        let mut h = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                let d = self.dist(a, b);
                if d <= 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "distinct points {a} and {b} are at distance {d}"
                    )));
                }
                h = h.min(d);
            }
        }
        Ok(if h.is_finite() { h } else { 1.0 })
    }

    /// Symmetry, zero diagonal and triangle inequality on all triples.
    pub fn check_metric_axioms(&self) -> Result<()> {
        let n = self.len();
        let tol = self.tol();
        for a in 0..n {
            if self.dist(a, a) != 0.0 {
                return Err(Error::InvalidMetric(format!("d({a},{a}) != 0")));
            }
            for b in 0..n {
                let d = self.dist(a, b);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMetric(format!("d({a},{b}) = {d}")));
                }
                if (d - self.dist(b, a)).abs() > tol {
                    return Err(Error::InvalidMetric(format!("d({a},{b}) != d({b},{a})")));
                }
                for c in 0..n {
                    if self.dist(a, c) > d + self.dist(b, c) + tol {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails on ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ids(&self) -> std::ops::Range<PointId> {
        0..self.len()
    }

    pub fn coords(&self, id: PointId) -> &[f64] {
        &self.coords[id]
    }

    pub fn all_coords(&self) -> &[Vec<f64>] {
        &self.coords
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn grid_spec(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.metric, Metric::Euclidean)
    }

    /// Smallest nonzero pairwise distance `h` (1.0 for a one-point space).
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Absolute slack applied to distance comparisons.
    pub fn tol(&self) -> f64 {
        TOL_FACTOR * self.resolution
    }

    pub fn check_id(&self, id: PointId) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownPoint { id, len: self.len() })
        }
    }

    pub fn dist(&self, a: PointId, b: PointId) -> f64 {
        match &self.metric {
            Metric::Euclidean => euclidean(&self.coords[a], &self.coords[b]),
            Metric::Table(t) => t[a * self.len() + b],
        }
    }

    /// Euclidean distance from a point to arbitrary ambient coordinates.
    pub fn dist_to_coords(&self, a: PointId, c: &[f64]) -> f64 {
        euclidean(&self.coords[a], c)
    }

    /// Open ball `{ p : d(x,p) < r }`.
    pub fn ball(&self, x: PointId, r: f64) -> Result<PointSet> {
        self.check_id(x)?;
        let cut = r - self.tol();
        Ok(PointSet::from_sorted(
            self.len(),
            self.ids().filter(|&p| self.dist(x, p) < cut).collect(),
        ))
    }

    /// Closed ball `{ p : d(x,p) <= r }`, used by the localization probes.
    pub fn closed_ball(&self, x: PointId, r: f64) -> Result<PointSet> {
        self.check_id(x)?;
        let cut = r + self.tol();
        Ok(PointSet::from_sorted(
            self.len(),
            self.ids().filter(|&p| self.dist(x, p) <= cut).collect(),
        ))
    }

    pub fn diameter(&self) -> f64 {
        self.distinct_distances().last().copied().unwrap_or(0.0)
    }

    /// Ascending distinct nonzero pairwise distances, merged within tolerance.
    pub fn distinct_distances(&self) -> &[f64] {
        self.distances.get_or_init(|| {
            let n = self.len();
            let mut all = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for a in 0..n {
                for b in a + 1..n {
                    all.push(self.dist(a, b));
                }
            }
            all.sort_by(f64::total_cmp);
            let tol = self.tol();
            let mut out: Vec<f64> = Vec::new();
            for d in all {
                match out.last() {
                    Some(&last) if d - last <= tol => {}
                    _ => out.push(d),
                }
            }
            out
        })
    }

    /// Diameter of a subset (0 for fewer than two points).
    pub fn set_diameter(&self, s: &PointSet) -> f64 {
        let m = s.members();
        let mut best = 0.0f64;
        for (i, &a) in m.iter().enumerate() {
            for &b in &m[i + 1..] {
                best = best.max(self.dist(a, b));
            }
        }
        best
    }

    /// Lowest-id point minimizing the Euclidean distance to `c`.
    pub fn nearest_point(&self, c: &[f64]) -> PointId {
        let tol = self.tol();
        let mut best = (0, f64::INFINITY);
        for p in self.ids() {
            let d = self.dist_to_coords(p, c);
            if d < best.1 - tol {
                best = (p, d);
            }
        }
        best.0
    }

    pub fn full(&self) -> PointSet {
        PointSet::full(self.len())
    }

    pub fn empty_set(&self) -> PointSet {
        PointSet::empty(self.len())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Whether two handles refer to the same space.
pub fn same_space(a: &Arc<MetricSpace>, b: &Arc<MetricSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub(crate) fn ensure_same(a: &Arc<MetricSpace>, b: &Arc<MetricSpace>, what: &str) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(what.to_string()))
    }
}

/// Sorted set of point ids of a space with `universe` points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointSet {
    universe: usize,
    members: Vec<PointId>,
}

impl PointSet {
    pub fn new(universe: usize, ids: impl IntoIterator<Item = PointId>) -> Result<Self> {
        let mut members: Vec<PointId> = ids.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            if last >= universe {
                return Err(Error::UnknownPoint { id: last, len: universe });
            }
        }
        Ok(PointSet { universe, members })
    }

    pub(crate) fn from_sorted(universe: usize, members: Vec<PointId>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        PointSet { universe, members }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        PointSet {
            universe: mask.len(),
            members: mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
        }
    }

    pub fn empty(universe: usize) -> Self {
        PointSet { universe, members: Vec::new() }
    }

    pub fn full(universe: usize) -> Self {
        PointSet { universe, members: (0..universe).collect() }
    }

    pub fn singleton(universe: usize, id: PointId) -> Result<Self> {
        Self::new(universe, [id])
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn members(&self) -> &[PointId] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = PointId> + '_ {
        self.members.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.universe];
        for &i in &self.members {
            m[i] = true;
        }
        m
    }

    pub fn complement(&self) -> Self {
        let mask = self.mask();
        PointSet {
            universe: self.universe,
            members: (0..self.universe).filter(|&i| !mask[i]).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut m = self.members.clone();
        m.extend_from_slice(&other.members);
        m.sort_unstable();
        m.dedup();
        PointSet { universe: self.universe.max(other.universe), members: m }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        PointSet {
            universe: self.universe,
            members: self.iter().filter(|&i| other.contains(i)).collect(),
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        PointSet {
            universe: self.universe,
            members: self.iter().filter(|&i| !other.contains(i)).collect(),
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.iter().all(|i| !other.contains(i))
    }
}

/// Greedy cover by open balls of radius `r`: the lowest-id uncovered point
/// becomes the next center.
pub fn greedy_cover(space: &MetricSpace, r: f64) -> Result<Vec<PointId>> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("cover radius must be > 0, got {r}")));
    }
    Ok(greedy_cover_with(space, |_| r)?.into_iter().map(|(c, _)| c).collect())
}

/// Greedy cover where each center `c` uses its own radius `radius_of(c)`.
/// Returns `(center, radius)` pairs in selection order.
pub fn greedy_cover_with(
    space: &MetricSpace,
    radius_of: impl Fn(PointId) -> f64,
) -> Result<Vec<(PointId, f64)>> {
    let mut covered = vec![false; space.len()];
    let mut centers = Vec::new();
    for c in space.ids() {
        if covered[c] {
            continue;
        }
        let r = radius_of(c);
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("cover radius at {c} must be > 0")));
        }
        for p in space.ball(c, r)?.iter() {
            covered[p] = true;
        }
        // An open ball always holds its center, even if r is below the tolerance.
        covered[c] = true;
        centers.push((c, r));
    }
    Ok(centers)
}

/// Discrete Chebyshev center of `s` over `candidates`: the candidate `y`
/// minimizing `max_{p in s} d(y, p)`, lowest id on ties.
pub fn chebyshev(
    space: &MetricSpace,
    s: &PointSet,
    candidates: &PointSet,
) -> Result<(PointId, f64)> {
    if s.is_empty() {
        return Err(Error::EmptySupport);
    }
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate centers".into()));
    }
    let tol = space.tol();
    let mut best: Option<(PointId, f64)> = None;
    for y in candidates.iter() {
        space.check_id(y)?;
        let r = s.iter().map(|p| space.dist(y, p)).fold(0.0, f64::max);
        match best {
            Some((_, br)) if r >= br - tol => {}
            _ => best = Some((y, r)),
        }
    }
    Ok(best.expect("candidates nonempty"))
}
