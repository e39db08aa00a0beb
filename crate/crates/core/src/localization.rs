//! (δ, ε)-localization, the `E` function, and the `D_ε` function.
//!
//! Probes are point masses: the probe set at `(x, δ)` is
//! `S(x, δ) = ∪ supp Phi(delta_p)` over `p` in the closed ball `B̄(x, δ)`.
//! For weakly σ-additive `Phi` this decides the carrier condition for every
//! measure on the ball; otherwise the report is only a lower bound.
//!
//! Witnesses are tested against closed balls `B̄(y, ε)`, so `E(x)` is the
//! discrete Chebyshev radius of the probe set at the floor `δ_min`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{chebyshev, MetricSpace, PointId, PointSet};
use crate::transfunction::Transfunction;

/// Label attached to reports on transfunctions without an additivity flag.
pub const LOWER_BOUND_LABEL: &str = "probe-based lower bound";

/// Label attached to points where `E` is comparable to the codomain radius.
pub const NON_LOCAL_LABEL: &str = "non-local: E comparable to codomain radius";

/// Point-mass image supports of a transfunction, computed once.
#[derive(Debug, Clone)]
pub struct Prober<'a> {
    phi: &'a Transfunction,
    supports: Vec<PointSet>,
}

impl<'a> Prober<'a> {
    pub fn new(phi: &'a Transfunction) -> Result<Self> {
        Ok(Prober { phi, supports: phi.point_supports()? })
    }

    pub fn phi(&self) -> &Transfunction {
        self.phi
    }

    pub fn support_of(&self, p: PointId) -> &PointSet {
        &self.supports[p]
    }

    /// `S(x, δ)`.
    pub fn probe(&self, x: PointId, delta: f64) -> Result<PointSet> {
        let dom = self.phi.domain();
        let mut acc = self.phi.codomain().empty_set();
        for p in dom.closed_ball(x, delta)?.iter() {
            acc = acc.union(&self.supports[p]);
        }
        Ok(acc)
    }

    /// Lowest-id `y` with `S(x, δ) ⊆ B̄(y, ε)`.
    pub fn witness(&self, x: PointId, delta: f64, eps: f64) -> Result<Option<PointId>> {
        check_delta(delta)?;
        let s = self.probe(x, delta)?;
        Ok(enclosing(self.phi.codomain(), &s, eps))
    }

    fn radius(&self, s: &PointSet) -> Result<(PointId, f64)> {
        if s.is_empty() {
            return Ok((0, 0.0));
        }
        let y = self.phi.codomain();
        chebyshev(y, s, &y.full())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
    }
    Ok(())
}

/// Lowest-id `y` whose closed `eps`-ball holds `s`; `Some(0)` for empty `s`.
pub fn enclosing(y: &MetricSpace, s: &PointSet, eps: f64) -> Option<PointId> {
    if s.is_empty() {
        return Some(0);
    }
    let cut = eps + y.tol();
    y.ids().find(|&c| s.iter().all(|p| y.dist(c, p) <= cut))
}

/// Returns the lowest-id witness `y` with `Phi(B̄(x, δ)) ⊏ B̄(y, ε)`, if any.
pub fn is_localized_at(phi: &Transfunction, x: PointId, delta: f64, eps: f64) -> Result<Option<PointId>> {
    check_delta(delta)?;
    phi.domain().check_id(x)?;
    let dom = phi.domain();
    let mut s = phi.codomain().empty_set();
    for p in dom.closed_ball(x, delta)?.iter() {
        s = s.union(&phi.point_image(p)?.support());
    }
    Ok(enclosing(phi.codomain(), &s, eps))
}

/// Candidate probe radii: `δ_min`, then every distinct distance above it.
pub fn candidate_deltas(space: &MetricSpace, delta_min: f64) -> Vec<f64> {
    let tol = space.tol();
    let mut out = vec![delta_min];
    out.extend(space.distinct_distances().iter().copied().filter(|&d| d > delta_min + tol));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: PointId,
    pub e_est: f64,
    pub witness: PointId,
    /// Largest candidate δ at which `E_est` is still attained.
    pub delta: f64,
    pub non_local: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub points: Vec<PointRecord>,
    pub delta_min: f64,
    pub uniform: Option<(f64, f64)>,
    /// `Some(LOWER_BOUND_LABEL)` when `Phi` has no additivity flag.
    pub label: Option<String>,
    /// Radius of the union of all point-mass images in `Y`.
    pub range_radius: f64,
}

impl LocalizationReport {
    pub fn e_at(&self, x: PointId) -> f64 {
        self.points[x].e_est
    }

    pub fn max_e(&self) -> f64 {
        self.points.iter().map(|r| r.e_est).fold(0.0, f64::max)
    }

    pub fn any_non_local(&self) -> bool {
        self.points.iter().any(|r| r.non_local)
    }

    /// CSV with header `x,coords,e_est,witness,witness_coords,delta,non_local`.
    /// Coordinates are space-separated inside one cell.
    pub fn write_csv<W: Write>(&self, w: W, x: &MetricSpace, y: &MetricSpace) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "coords", "e_est", "witness", "witness_coords", "delta", "non_local"])?;
        for r in &self.points {
            out.write_record([
                r.x.to_string(),
                join_coords(x.coords(r.x)),
                r.e_est.to_string(),
                r.witness.to_string(),
                join_coords(y.coords(r.witness)),
                r.delta.to_string(),
                r.non_local.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn join_coords(c: &[f64]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Estimates `E(x)` at every point.
///
/// `E_est(x)` is the Chebyshev radius of `S(x, δ_min)`. The probe set grows
/// with δ, so the floor attains the minimum over candidates; the record keeps
/// the largest candidate δ with the same radius and its witness.
pub fn estimate_e(phi: &Transfunction, delta_min: f64) -> Result<LocalizationReport> {
    check_delta(delta_min)?;
    let prober = Prober::new(phi)?;
    let x = phi.domain();
    let y = phi.codomain();
    let deltas = candidate_deltas(x, delta_min);
    let tol = y.tol();

    let mut range = y.empty_set();
    for p in x.ids() {
        range = range.union(prober.support_of(p));
    }
    let (_, range_radius) = prober.radius(&range)?;

    let mut points = Vec::with_capacity(x.len());
    for p in x.ids() {
        let (mut witness, e) = prober.radius(&prober.probe(p, delta_min)?)?;
        let mut delta = delta_min;
        for &d in &deltas[1..] {
            let s = prober.probe(p, d)?;
            match enclosing(y, &s, e) {
                Some(w) => {
                    witness = w;
                    delta = d;
                }
                None => break,
            }
        }
        let (_, own) = prober.radius(prober.support_of(p))?;
        let non_local = range_radius > tol && own >= range_radius - tol;
        points.push(PointRecord { x: p, e_est: e, witness, delta, non_local });
    }
    Ok(LocalizationReport {
        points,
        delta_min,
        uniform: None,
        label: (!phi.is_weakly_additive()).then(|| LOWER_BOUND_LABEL.to_string()),
        range_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DRecord {
    pub x: PointId,
    pub d: f64,
    /// Witness at radius `d` (meaningless when `localizable` is false).
    pub witness: PointId,
    pub localizable: bool,
}

/// `D_ε(x)`: the largest candidate δ at which `Phi` is (δ, ε)-localized at `x`,
/// or 0 with `localizable = false` when even `δ_min` fails.
pub fn estimate_d_eps(phi: &Transfunction, eps: f64, delta_min: f64) -> Result<Vec<DRecord>> {
    check_delta(delta_min)?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    let prober = Prober::new(phi)?;
    let x = phi.domain();
    let deltas = candidate_deltas(x, delta_min);
    let mut out = Vec::with_capacity(x.len());
    for p in x.ids() {
        let mut best: Option<(f64, PointId)> = None;
        for &d in &deltas {
            match prober.witness(p, d, eps)? {
                Some(w) => best = Some((d, w)),
                None => break,
            }
        }
        out.push(match best {
            Some((d, w)) => DRecord { x: p, d, witness: w, localizable: true },
            None => DRecord { x: p, d: 0.0, witness: 0, localizable: false },
        });
    }
    Ok(out)
}

/// `min_x D_ε(x)` when every point is ε-localizable.
pub fn check_uniform(phi: &Transfunction, eps: f64, delta_min: f64) -> Result<Option<f64>> {
    let d = estimate_d_eps(phi, eps, delta_min)?;
    if d.iter().any(|r| !r.localizable) {
        return Ok(None);
    }
    Ok(d.iter().map(|r| r.d).reduce(f64::min))
}

/// `estimate_e` plus the uniform pair `(δ, ε)` when one exists.
pub fn localization_report(phi: &Transfunction, delta_min: f64, eps: Option<f64>) -> Result<LocalizationReport> {
    let mut rep = estimate_e(phi, delta_min)?;
    if let Some(eps) = eps {
        rep.uniform = check_uniform(phi, eps, delta_min)?.map(|d| (d, eps));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::measure::Measure;
    use crate::transfunction::{Boundary, Kernel};

    fn line() -> Arc<MetricSpace> {
        MetricSpace::line(-1.0, 1.0, 0.1).unwrap()
    }

    fn at(s: &MetricSpace, x: f64) -> PointId {
        s.nearest_point(&[x])
    }

    fn heaviside(s: &Arc<MetricSpace>) -> Transfunction {
        Transfunction::pushforward_fn(s, s, |c| vec![if c[0] < 0.0 { 0.0 } else { 1.0 }]).unwrap()
    }

    #[test]
    fn identity_witness_is_the_point() {
        let s = line();
        let id = Transfunction::identity(&s);
        for x in 1..20 {
            assert_eq!(is_localized_at(&id, x, 0.1, 0.1).unwrap(), Some(x));
        }
        // edge probes {0, 1} and {19, 20}: the lowest enclosing center wins
        assert_eq!(is_localized_at(&id, 0, 0.1, 0.1).unwrap(), Some(0));
        assert_eq!(is_localized_at(&id, 20, 0.1, 0.1).unwrap(), Some(19));
    }

    #[test]
    fn heaviside_at_zero() {
        let s = line();
        let h = heaviside(&s);
        let z = at(&s, 0.0);
        assert_eq!(is_localized_at(&h, z, 0.1, 0.4).unwrap(), None);
        assert_eq!(is_localized_at(&h, z, 0.1, 0.51).unwrap(), Some(at(&s, 0.5)));
        assert!(is_localized_at(&h, z, 0.0, 0.5).is_err());
    }

    #[test]
    fn rank_one_needs_the_codomain_radius() {
        let s = line();
        let phi = Transfunction::rank_one(&s, Measure::uniform(&s, 1.0 / 21.0).unwrap()).unwrap();
        assert_eq!(is_localized_at(&phi, 3, 0.1, 0.99).unwrap(), None);
        assert_eq!(is_localized_at(&phi, 3, 0.1, 1.0).unwrap(), Some(at(&s, 0.0)));
        let rep = estimate_e(&phi, 0.1).unwrap();
        assert!(rep.any_non_local());
        assert_eq!(rep.label.as_deref(), Some(LOWER_BOUND_LABEL));
    }

    #[test]
    fn heaviside_e_values() {
        let s = line();
        let rep = estimate_e(&heaviside(&s), 0.1).unwrap();
        assert!((rep.e_at(at(&s, 0.0)) - 0.5).abs() < 1e-12);
        assert!(!rep.any_non_local());
        for x in s.ids() {
            let c = s.coords(x)[0];
            if c >= 0.1 - 1e-12 || c <= -0.2 + 1e-12 {
                assert_eq!(rep.e_at(x), 0.0, "x = {c}");
            }
        }
        // the probe at -h reaches the jump
        assert!((rep.e_at(at(&s, -0.1)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vanishing_probe_gives_zero() {
        let s = line();
        let proj = Transfunction::projection(&s, PointSet::new(21, 15..21).unwrap()).unwrap();
        let rep = estimate_e(&proj, 0.1).unwrap();
        assert_eq!(rep.e_at(0), 0.0);
        // the radius stays 0 until the probe reaches a second image point
        assert_eq!(rep.points[0].witness, 15);
        assert!((rep.points[0].delta - 1.5).abs() < 1e-12);
    }

    #[test]
    fn d_eps_examples() {
        let s = line();
        let id = Transfunction::identity(&s);
        let d = estimate_d_eps(&id, 0.25, 0.1).unwrap();
        assert!((d[10].d - 0.2).abs() < 1e-12);
        let d = estimate_d_eps(&heaviside(&s), 0.4, 0.1).unwrap();
        assert!(!d[10].localizable);
        assert_eq!(d[10].d, 0.0);
        let q = 4;
        let constant = Transfunction::pushforward(&s, &s, vec![q; 21]).unwrap();
        for r in estimate_d_eps(&constant, 0.05, 0.1).unwrap() {
            assert!((r.d - s.diameter()).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_examples() {
        let s = line();
        assert_eq!(check_uniform(&heaviside(&s), 0.4, 0.1).unwrap(), None);
        let id = Transfunction::identity(&s);
        assert!((check_uniform(&id, 0.1, 0.1).unwrap().unwrap() - 0.1).abs() < 1e-12);
        let k = Kernel::uniform_ball(vec![0.1], 0.3).unwrap();
        let conv = Transfunction::convolution(&s, k, Boundary::Clamp).unwrap();
        assert!(check_uniform(&conv, 0.5, 0.1).unwrap().unwrap() > 0.0);
    }
}
