//! Finite measures on a [`MetricSpace`] and the carrier calculus.
//!
//! Every measure on a finite space is a finite sum of point masses, so a
//! [`Measure`] is just a weight per point. Carrier and orthogonality tests
//! compare weights against exact zero: projections and orthogonal sums only
//! copy or add weights, which keeps the carrier laws exactly assertable.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ensure_same, MetricSpace, PointId, PointSet};

#[derive(Debug, Clone)]
pub struct Measure {
    space: Arc<MetricSpace>,
    weights: Vec<f64>,
    signed: bool,
}

impl PartialEq for Measure {
    fn eq(&self, other: &Self) -> bool {
        crate::space::same_space(&self.space, &other.space) && self.weights == other.weights
    }
}

impl Measure {
    /// Nonnegative measure from a dense weight vector.
    pub fn new(space: &Arc<MetricSpace>, weights: Vec<f64>) -> Result<Self> {
        Self::check_len(space, &weights)?;
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::SignedInput);
        }
        Ok(Measure { space: space.clone(), weights, signed: false })
    }

    /// Signed measure; only the Markov layer consumes these.
    pub fn signed(space: &Arc<MetricSpace>, weights: Vec<f64>) -> Result<Self> {
        Self::check_len(space, &weights)?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite".into()));
        }
        Ok(Measure { space: space.clone(), weights, signed: true })
    }

    fn check_len(space: &MetricSpace, weights: &[f64]) -> Result<()> {
        if weights.len() != space.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} weights for a space of {} points",
                weights.len(),
                space.len()
            )));
        }
        Ok(())
    }

    pub fn zero(space: &Arc<MetricSpace>) -> Self {
        Measure { space: space.clone(), weights: vec![0.0; space.len()], signed: false }
    }

    /// Point mass `mass * delta_p`.
    pub fn dirac(space: &Arc<MetricSpace>, p: PointId, mass: f64) -> Result<Self> {
        space.check_id(p)?;
        let mut w = vec![0.0; space.len()];
        w[p] = mass;
        Self::new(space, w)
    }

    /// Weight 1 on every point of `set`.
    pub fn indicator(space: &Arc<MetricSpace>, set: &PointSet) -> Result<Self> {
        check_set(space, set)?;
        let mut w = vec![0.0; space.len()];
        for p in set.iter() {
            w[p] = 1.0;
        }
        Self::new(space, w)
    }

    /// Weight `w` on every point.
    pub fn uniform(space: &Arc<MetricSpace>, w: f64) -> Result<Self> {
        Self::new(space, vec![w; space.len()])
    }

    /// Sparse construction from `(id, weight)` pairs; repeated ids accumulate.
    pub fn from_sparse(
        space: &Arc<MetricSpace>,
        entries: impl IntoIterator<Item = (PointId, f64)>,
    ) -> Result<Self> {
        let mut w = vec![0.0; space.len()];
        for (p, v) in entries {
            space.check_id(p)?;
            w[p] += v;
        }
        if w.iter().all(|&v| v >= 0.0) {
            Self::new(space, w)
        } else {
            Self::signed(space, w)
        }
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, p: PointId) -> f64 {
        self.weights[p]
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn is_nonnegative(&self) -> bool {
        self.weights.iter().all(|&w| w >= 0.0)
    }

    /// Total variation `sum |w(p)|`.
    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Signed total mass `mu(X)`.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `mu(B)`.
    pub fn mass_of(&self, b: &PointSet) -> f64 {
        b.iter().map(|p| self.weights[p]).sum()
    }

    /// Minimal carrier `{ p : w(p) != 0 }`.
    pub fn support(&self) -> PointSet {
        PointSet::from_mask(&self.weights.iter().map(|&w| w != 0.0).collect::<Vec<_>>())
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// Sparse view of the nonzero weights.
    pub fn entries(&self) -> impl Iterator<Item = (PointId, f64)> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w != 0.0).map(|(p, &w)| (p, w))
    }

    pub fn add(&self, other: &Measure) -> Result<Measure> {
        ensure_same(&self.space, &other.space, "measure addition")?;
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| a + b).collect();
        Ok(self.rebuild(weights, self.signed || other.signed))
    }

    pub fn sub(&self, other: &Measure) -> Result<Measure> {
        ensure_same(&self.space, &other.space, "measure subtraction")?;
        let weights = self.weights.iter().zip(&other.weights).map(|(a, b)| a - b).collect();
        Ok(self.rebuild(weights, true))
    }

    pub fn scale(&self, c: f64) -> Measure {
        let weights = self.weights.iter().map(|w| c * w).collect();
        self.rebuild(weights, self.signed || c < 0.0)
    }

    /// Variation measure `|mu|`.
    pub fn abs(&self) -> Measure {
        Measure {
            space: self.space.clone(),
            weights: self.weights.iter().map(|w| w.abs()).collect(),
            signed: false,
        }
    }

    fn rebuild(&self, weights: Vec<f64>, signed: bool) -> Measure {
        let signed = signed && weights.iter().any(|&w: &f64| w < 0.0);
        Measure { space: self.space.clone(), weights, signed }
    }

    /// L1 distance `|| self - other ||`.
    pub fn l1_distance(&self, other: &Measure) -> Result<f64> {
        ensure_same(&self.space, &other.space, "measure comparison")?;
        Ok(self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum())
    }

    pub(crate) fn require_nonnegative(&self) -> Result<()> {
        if self.is_nonnegative() {
            Ok(())
        } else {
            Err(Error::SignedInput)
        }
    }

    pub fn to_record(&self) -> MeasureRecord {
        MeasureRecord {
            space_id: self.space.name().to_string(),
            weights: self.entries().collect(),
        }
    }

    pub fn from_record(record: &MeasureRecord, space: &Arc<MetricSpace>) -> Result<Measure> {
        if !record.space_id.is_empty() && !space.name().is_empty() && record.space_id != space.name()
        {
            return Err(Error::SpaceMismatch(format!(
                "record is for space '{}', got '{}'",
                record.space_id,
                space.name()
            )));
        }
        Measure::from_sparse(space, record.weights.iter().map(|(&p, &w)| (p, w)))
    }

    /// CSV with header `id,weight`, one row per point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "weight"])?;
        for (p, v) in self.weights.iter().enumerate() {
            out.write_record([p.to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(space: &Arc<MetricSpace>, r: R) -> Result<Measure> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let id: PointId = parse_field(&row, 0)?;
            let w: f64 = parse_field(&row, 1)?;
            entries.push((id, w));
        }
        Measure::from_sparse(space, entries)
    }
}

fn parse_field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
    row.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad field {i} in CSV row {:?}", row)))
}

/// JSON form `{ space_id, weights: { id: value } }` (sparse).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRecord {
    #[serde(default)]
    pub space_id: String,
    pub weights: BTreeMap<PointId, f64>,
}

fn check_set(space: &MetricSpace, a: &PointSet) -> Result<()> {
    if a.universe() != space.len() {
        return Err(Error::SpaceMismatch(format!(
            "point set over {} points used with a space of {}",
            a.universe(),
            space.len()
        )));
    }
    Ok(())
}

/// `mu ⊏ A`: no variation outside `A`.
pub fn is_carried(mu: &Measure, a: &PointSet) -> Result<bool> {
    check_set(&mu.space, a)?;
    let mask = a.mask();
    Ok(mu.weights.iter().enumerate().all(|(p, &w)| mask[p] || w == 0.0))
}

/// Projection `pi_A mu : B -> mu(B ∩ A)`.
pub fn project(mu: &Measure, a: &PointSet) -> Result<Measure> {
    check_set(&mu.space, a)?;
    let mask = a.mask();
    let weights = mu.weights.iter().enumerate().map(|(p, &w)| if mask[p] { w } else { 0.0 }).collect();
    Ok(mu.rebuild(weights, mu.signed))
}

/// If `mu ⊥ nu`, returns the witness `A = support(mu)` with `mu ⊏ A`, `nu ⊏ A^c`.
pub fn orthogonal(mu: &Measure, nu: &Measure) -> Result<Option<PointSet>> {
    ensure_same(&mu.space, &nu.space, "orthogonality test")?;
    let a = mu.support();
    if a.is_disjoint(&nu.support()) {
        Ok(Some(a))
    } else {
        Ok(None)
    }
}

fn first_overlap(ms: &[Measure]) -> Result<Option<(usize, usize, PointId)>> {
    let n = ms.first().map(|m| m.space.len()).unwrap_or(0);
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (i, m) in ms.iter().enumerate() {
        ensure_same(&ms[0].space, &m.space, "orthogonal family")?;
        for (p, _) in m.entries() {
            if let Some(j) = owner[p] {
                return Ok(Some((j, i, p)));
            }
            owner[p] = Some(i);
        }
    }
    Ok(None)
}

/// Pairwise disjoint carriers `S_i` of an orthogonal family, partitioning the
/// space: `S_i = support(mu_i)`, with every unclaimed point added to `S_1`.
pub fn disjoint_carriers(ms: &[Measure]) -> Result<Vec<PointSet>> {
    if let Some((i, j, p)) = first_overlap(ms)? {
        return Err(Error::NotOrthogonal { first: i, second: j, point: p });
    }
    let Some(first) = ms.first() else {
        return Ok(Vec::new());
    };
    let n = first.space.len();
    let mut sets: Vec<PointSet> = ms.iter().map(Measure::support).collect();
    let claimed = sets.iter().fold(PointSet::empty(n), |acc, s| acc.union(s));
    sets[0] = sets[0].union(&claimed.complement());
    Ok(sets)
}

/// Bounded orthogonal sum, with the projection identity `pi_{S_i} sum = mu_i`
/// checked on the carriers from [`disjoint_carriers`].
pub fn orthogonal_sum(space: &Arc<MetricSpace>, ms: &[Measure]) -> Result<Measure> {
    let carriers = disjoint_carriers(ms)?;
    let mut sum = Measure::zero(space);
    for m in ms {
        ensure_same(space, &m.space, "orthogonal sum")?;
        sum = sum.add(m)?;
    }
    for (m, s) in ms.iter().zip(&carriers) {
        if project(&sum, s)? != *m {
            return Err(Error::Postcondition("projection onto carrier does not recover a summand".into()));
        }
    }
    Ok(sum)
}
