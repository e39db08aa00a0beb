//! Approximating transfunctions by point maps.
//!
//! * [`sigma_simple_approx`] and [`nonuniform_approx`] build piecewise
//!   constant maps over greedy covers, one localization witness per cell.
//! * [`mollify`] smooths a piecewise map with a hat bump on a regular grid.
//! * [`recover_zero_localized`] reads off the point map of a 0-localized
//!   transfunction; [`verify_pushforward_equal`] and
//!   [`check_abs_continuity`] compare a transfunction against `f_#`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{estimate_d_eps, join_coords, Prober};
use crate::measure::Measure;
use crate::space::{chebyshev, greedy_cover_with, MetricSpace, PointId, PointSet};
use crate::transfunction::{enumerate_box, random_measure, random_subset, Counterexample, SampleReport, Transfunction};

/// Tolerance of the convex-combination certificates.
pub const HULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: PointId,
    /// Open-ball radius of the cover element.
    pub radius: f64,
    /// The part of the ball not claimed by earlier cells.
    pub members: PointSet,
    pub witness: PointId,
}

/// A point map `X -> Y` that is constant on the cells of a cover.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseMap {
    domain: Arc<MetricSpace>,
    codomain: Arc<MetricSpace>,
    assignment: Vec<PointId>,
    cells: Vec<Cell>,
    cell_of: Vec<usize>,
}

impl PiecewiseMap {
    /// Validates that `cells` partition `X` and that every member lies in the
    /// open ball of its cell.
    pub fn new(domain: &Arc<MetricSpace>, codomain: &Arc<MetricSpace>, cells: Vec<Cell>) -> Result<Self> {
        let n = domain.len();
        let mut cell_of = vec![usize::MAX; n];
        let mut assignment = vec![0; n];
        for (i, c) in cells.iter().enumerate() {
            domain.check_id(c.center)?;
            codomain.check_id(c.witness)?;
            if c.members.universe() != n {
                return Err(Error::SpaceMismatch(format!("cell {i} is not a subset of the domain")));
            }
            for x in c.members.iter() {
                if cell_of[x] != usize::MAX {
                    return Err(Error::InvalidParameter(format!("point {x} lies in cells {} and {i}", cell_of[x])));
                }
                if x != c.center && domain.dist(x, c.center) >= c.radius - domain.tol() {
                    return Err(Error::InvalidParameter(format!("point {x} is outside the ball of cell {i}")));
                }
                cell_of[x] = i;
                assignment[x] = c.witness;
            }
        }
        if let Some(x) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidParameter(format!("point {x} is in no cell")));
        }
        Ok(PiecewiseMap { domain: domain.clone(), codomain: codomain.clone(), assignment, cells, cell_of })
    }

    /// One singleton cell per point, radius `h`.
    pub fn from_map(domain: &Arc<MetricSpace>, codomain: &Arc<MetricSpace>, map: &[PointId]) -> Result<Self> {
        if map.len() != domain.len() {
            return Err(Error::SpaceMismatch("map length differs from the domain size".into()));
        }
        let h = domain.resolution();
        let cells = map
            .iter()
            .enumerate()
            .map(|(p, &q)| Cell { center: p, radius: h, members: PointSet::from_sorted(domain.len(), vec![p]), witness: q })
            .collect();
        Self::new(domain, codomain, cells)
    }

    pub fn domain(&self) -> &Arc<MetricSpace> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<MetricSpace> {
        &self.codomain
    }

    pub fn get(&self, x: PointId) -> PointId {
        self.assignment[x]
    }

    pub fn assignment(&self) -> &[PointId] {
        &self.assignment
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_of(&self, x: PointId) -> &Cell {
        &self.cells[self.cell_of[x]]
    }

    /// `f_#`.
    pub fn pushforward(&self) -> Transfunction {
        Transfunction::pushforward(&self.domain, &self.codomain, self.assignment.clone())
            .expect("assignment validated at construction")
    }

    /// CSV with header `x,x_coords,y,y_coords,cell`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "x_coords", "y", "y_coords", "cell"])?;
        for x in self.domain.ids() {
            let y = self.assignment[x];
            out.write_record([
                x.to_string(),
                join_coords(self.domain.coords(x)),
                y.to_string(),
                join_coords(self.codomain.coords(y)),
                self.cell_of[x].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Points `x` where `S(x, r)` is not inside `B̄(f(x), eps)`, with `r` the
/// radius of the cell holding `x`.
pub fn localization_failures(phi: &Transfunction, f: &PiecewiseMap, eps: f64) -> Result<Vec<PointId>> {
    let prober = Prober::new(phi)?;
    let y = phi.codomain();
    let cut = eps + y.tol();
    let mut bad = Vec::new();
    for x in phi.domain().ids() {
        let s = prober.probe(x, f.cell_of(x).radius)?;
        let w = f.get(x);
        if !s.iter().all(|q| y.dist(w, q) <= cut) {
            bad.push(x);
        }
    }
    Ok(bad)
}

fn cover_cells(
    phi: &Transfunction,
    radius_of: impl Fn(PointId) -> f64,
    witness_of: impl Fn(PointId) -> Result<PointId>,
) -> Result<Vec<Cell>> {
    let x = phi.domain();
    let mut claimed = vec![false; x.len()];
    let mut cells = Vec::new();
    for (center, radius) in greedy_cover_with(x, radius_of)? {
        let mut members: Vec<PointId> = x.ball(center, radius)?.iter().filter(|&p| !claimed[p]).collect();
        if !members.contains(&center) {
            members.push(center);
            members.sort_unstable();
        }
        for &p in &members {
            claimed[p] = true;
        }
        let witness = witness_of(center)?;
        cells.push(Cell { center, radius, members: PointSet::from_sorted(x.len(), members), witness });
    }
    Ok(cells)
}

fn finish(phi: &Transfunction, cells: Vec<Cell>, eps: f64) -> Result<PiecewiseMap> {
    let f = PiecewiseMap::new(phi.domain(), phi.codomain(), cells)?;
    let bad = localization_failures(phi, &f, eps)?;
    if let Some(&x) = bad.first() {
        return Err(Error::Postcondition(format!(
            "Phi is not localized at (x = {x}, f(x) = {}) with eps = {eps}",
            f.get(x)
        )));
    }
    Ok(f)
}

/// Piecewise-constant approximant over `greedy_cover(X, δ/3)`: each cell gets
/// the witness of its center at `(δ, ε)`.
pub fn sigma_simple_approx(phi: &Transfunction, delta: f64, eps: f64) -> Result<PiecewiseMap> {
    if !(delta > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("need delta > 0 and eps >= 0, got ({delta}, {eps})")));
    }
    let prober = Prober::new(phi)?;
    let cells = cover_cells(phi, |_| delta / 3.0, |c| {
        prober.witness(c, delta, eps)?.ok_or(Error::MissingWitness { center: c, delta, eps })
    })?;
    finish(phi, cells, eps)
}

/// Like [`sigma_simple_approx`] with per-center radii `D_ε(c)/3`.
pub fn nonuniform_approx(phi: &Transfunction, eps: f64, delta_min: f64) -> Result<PiecewiseMap> {
    let d = estimate_d_eps(phi, eps, delta_min)?;
    let bad: Vec<PointId> = d.iter().filter(|r| !r.localizable).map(|r| r.x).collect();
    if !bad.is_empty() {
        return Err(Error::NotLocalizable(bad));
    }
    let cells = cover_cells(phi, |c| d[c].d / 3.0, |c| Ok(d[c].witness))?;
    finish(phi, cells, eps)
}

/// Values of a mollified map, in the ambient coordinates of `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub values: Vec<Vec<f64>>,
    /// Per point, `(witness id, coefficient)` with `g(x) = Σ c_m y_m`.
    pub certificates: Vec<Vec<(PointId, f64)>>,
    pub beta: f64,
    /// Number of lattice offsets in the bump support.
    pub support_size: usize,
    /// `Σ_u phi(u)`.
    pub normalization: f64,
}

impl SampledFunction {
    /// CSV with header `x,x_coords,g_coords`.
    pub fn write_csv<W: Write>(&self, w: W, domain: &MetricSpace) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "x_coords", "g_coords"])?;
        for (x, v) in self.values.iter().enumerate() {
            out.write_record([x.to_string(), join_coords(domain.coords(x)), join_coords(v)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `g(x) = Σ_u f(x + u) phi(u) / Σ phi`, with the hat bump
/// `phi(u) = max(0, 1 - |u|/β)` over lattice offsets `|u| < β` and off-grid
/// points clamped to the boundary.
///
/// The convex-hull and grid-Lipschitz postconditions are checked before
/// returning.
pub fn mollify(f: &PiecewiseMap, delta: f64, beta: f64) -> Result<SampledFunction> {
    let x = f.domain();
    let spec = x.grid_spec().ok_or(Error::RequiresGrid)?;
    if !(beta > 0.0) || beta > delta / 3.0 + x.tol() {
        return Err(Error::InvalidParameter(format!("need 0 < beta <= delta/3, got beta = {beta}, delta = {delta}")));
    }
    let steps: Vec<f64> = spec.axes.iter().map(|a| a.step).collect();
    let reach: Vec<i64> = spec
        .axes
        .iter()
        .map(|a| if a.count() > 1 { (beta / a.step).ceil() as i64 } else { 0 })
        .collect();
    let mut bump: Vec<(Vec<i64>, f64)> = Vec::new();
    let mut cur = vec![0i64; steps.len()];
    enumerate_box(&reach, 0, &mut cur, &mut |o| {
        let r = o.iter().zip(&steps).map(|(&i, s)| (i as f64 * s).powi(2)).sum::<f64>().sqrt();
        if r < beta - x.tol() {
            bump.push((o.to_vec(), 1.0 - r / beta));
        }
    });
    let z: f64 = bump.iter().map(|(_, w)| w).sum();

    let y = f.codomain();
    let dim_y = y.coords(0).len();
    let mut values = Vec::with_capacity(x.len());
    let mut certificates = Vec::with_capacity(x.len());
    for p in x.ids() {
        let base = spec.multi_index(p);
        let mut coeff: Vec<(PointId, f64)> = Vec::new();
        for (o, w) in &bump {
            let idx: Vec<i64> = base.iter().zip(o).map(|(&i, &d)| i as i64 + d).collect();
            let q = spec.clamped_id(&idx);
            let m = f.get(q);
            match coeff.iter_mut().find(|(id, _)| *id == m) {
                Some(e) => e.1 += w / z,
                None => coeff.push((m, w / z)),
            }
        }
        coeff.sort_by_key(|e| e.0);
        let mut g = vec![0.0; dim_y];
        for &(m, c) in &coeff {
            for (gk, yk) in g.iter_mut().zip(y.coords(m)) {
                *gk += c * yk;
            }
        }
        values.push(g);
        certificates.push(coeff);
    }
    let out = SampledFunction { values, certificates, beta, support_size: bump.len(), normalization: z };
    if let Some(&p) = hull_failures(f, &out)?.first() {
        return Err(Error::Postcondition(format!("g({p}) fails its convex-hull certificate")));
    }
    let lip = check_lipschitz(f, &out)?;
    if let Some((a, b)) = lip.violation {
        return Err(Error::Postcondition(format!("grid-Lipschitz bound fails on ({a}, {b})")));
    }
    Ok(out)
}

/// Witnesses of the cells meeting the open ball `B(x, β)`.
pub fn local_witnesses(f: &PiecewiseMap, x: PointId, beta: f64) -> Result<Vec<PointId>> {
    let mut w: Vec<PointId> = f.domain().ball(x, beta)?.iter().map(|p| f.get(p)).collect();
    w.sort_unstable();
    w.dedup();
    Ok(w)
}

/// Points whose certificate is not a convex combination of local witnesses
/// reproducing `g(x)` to [`HULL_TOL`].
pub fn hull_failures(f: &PiecewiseMap, g: &SampledFunction) -> Result<Vec<PointId>> {
    let y = f.codomain();
    let mut bad = Vec::new();
    for p in f.domain().ids() {
        let allowed = local_witnesses(f, p, g.beta)?;
        let cert = &g.certificates[p];
        let members_ok = cert.iter().all(|(m, c)| allowed.binary_search(m).is_ok() && *c >= -HULL_TOL);
        let sum: f64 = cert.iter().map(|e| e.1).sum();
        let mut recon = vec![0.0; g.values[p].len()];
        for &(m, c) in cert {
            for (rk, yk) in recon.iter_mut().zip(y.coords(m)) {
                *rk += c * yk;
            }
        }
        let err = recon.iter().zip(&g.values[p]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !members_ok || (sum - 1.0).abs() > HULL_TOL || err > HULL_TOL {
            bad.push(p);
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    /// Largest `|g(x) - g(x')| / (L d(x, x'))` seen.
    pub worst_ratio: f64,
    pub violation: Option<(PointId, PointId)>,
}

/// Checks `|g(x) - g(x')| <= L d(x, x')` on axis-adjacent grid pairs with
/// `L = 2 M N / (β Z)`: `M` the largest witness norm over both local witness
/// sets, `N` the bump support size, `Z` the normalization.
pub fn check_lipschitz(f: &PiecewiseMap, g: &SampledFunction) -> Result<LipschitzReport> {
    let x = f.domain();
    let spec = x.grid_spec().ok_or(Error::RequiresGrid)?;
    let y = f.codomain();
    let norm = |m: PointId| y.coords(m).iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rep = LipschitzReport { pairs: 0, worst_ratio: 0.0, violation: None };
    for p in x.ids() {
        let idx = spec.multi_index(p);
        for k in 0..spec.dim() {
            let mut next: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
            next[k] += 1;
            let Some(q) = spec.id_of(&next) else { continue };
            rep.pairs += 1;
            let m = local_witnesses(f, p, g.beta)?
                .into_iter()
                .chain(local_witnesses(f, q, g.beta)?)
                .map(norm)
                .fold(0.0, f64::max);
            let l = 2.0 * m * g.support_size as f64 / (g.beta * g.normalization);
            let diff = g.values[p].iter().zip(&g.values[q]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let bound = l * x.dist(p, q);
            if bound > 0.0 {
                rep.worst_ratio = rep.worst_ratio.max(diff / bound);
            }
            if diff > bound + HULL_TOL && rep.violation.is_none() {
                rep.violation = Some((p, q));
            }
        }
    }
    Ok(rep)
}

/// Points where `S(x, β)` escapes `B̄(y*, ε + h_Y)`, `y*` the nearest `Y` point to `g(x)`.
pub fn snapped_failures(phi: &Transfunction, g: &SampledFunction, eps: f64) -> Result<Vec<PointId>> {
    let prober = Prober::new(phi)?;
    let y = phi.codomain();
    let cut = eps + y.resolution() + y.tol();
    let mut bad = Vec::new();
    for x in phi.domain().ids() {
        let snap = y.nearest_point(&g.values[x]);
        let s = prober.probe(x, g.beta)?;
        if !s.iter().all(|q| y.dist(snap, q) <= cut) {
            bad.push(x);
        }
    }
    Ok(bad)
}

/// Point map of a 0-localized transfunction.
///
/// The candidates at `x` are the `y` with `S(x, δ_min) ⊆ B̄(y, h_Y)`. Among
/// them `f(x)` is the one closest to `supp Phi(delta_x)`; when that support is
/// empty, the one closest to the coordinates of `x`; then the lowest id. If
/// the probe set itself is empty, `f(x)` is the `Y` point nearest to `x`.
pub fn recover_zero_localized(phi: &Transfunction, delta_min: f64) -> Result<PiecewiseMap> {
    if !phi.is_weakly_additive() {
        return Err(Error::Precondition("recovery needs a weakly sigma-additive transfunction".into()));
    }
    let prober = Prober::new(phi)?;
    let x = phi.domain();
    let y = phi.codomain();
    let h = y.resolution();
    let tol = y.tol();
    if x.ids().all(|p| prober.support_of(p).is_empty()) {
        return Err(Error::Precondition("transfunction vanishes everywhere".into()));
    }
    let same_dim = x.coords(0).len() == y.coords(0).len();
    let mut map = Vec::with_capacity(x.len());
    for p in x.ids() {
        let s = prober.probe(p, delta_min)?;
        if s.is_empty() {
            if !same_dim {
                return Err(Error::Precondition(format!("Phi vanishes near {p} and Y has other coordinates")));
            }
            map.push(y.nearest_point(x.coords(p)));
            continue;
        }
        let (_, r) = chebyshev(y, &s, &y.full())?;
        if r > h + tol {
            return Err(Error::NotZeroLocalized { point: p, e: r, resolution: h });
        }
        let own = prober.support_of(p);
        let score = |c: PointId| {
            if !own.is_empty() {
                own.iter().map(|q| y.dist(c, q)).fold(0.0, f64::max)
            } else if same_dim {
                y.dist_to_coords(c, x.coords(p))
            } else {
                0.0
            }
        };
        let mut best: Option<(PointId, f64)> = None;
        for c in zero_band(y, &s) {
            let d = score(c);
            match best {
                Some((_, bd)) if d >= bd - tol => {}
                _ => best = Some((c, d)),
            }
        }
        map.push(best.expect("the Chebyshev center lies in the band").0);
    }
    PiecewiseMap::from_map(x, y, &map)
}

/// `{y : s ⊆ B̄(y, h_Y)}`.
pub fn zero_band(y: &MetricSpace, s: &PointSet) -> Vec<PointId> {
    let cut = y.resolution() + y.tol();
    y.ids().filter(|&c| enclosing_at(y, s, c, cut)).collect()
}

fn enclosing_at(y: &MetricSpace, s: &PointSet, c: PointId, r: f64) -> bool {
    s.iter().all(|q| y.dist(c, q) <= r)
}

/// Samples `(mu, B)` and compares `Phi(mu)(B)` with `mu(f^{-1}(B))` to `1e-12` relative.
pub fn verify_pushforward_equal<R: Rng + ?Sized>(
    phi: &Transfunction,
    f: &PiecewiseMap,
    trials: usize,
    rng: &mut R,
) -> Result<SampleReport> {
    let fpush = f.pushforward();
    let ny = phi.codomain().len();
    let mut passed = 0;
    for trial in 0..trials {
        let mu = random_measure(phi.domain(), rng);
        let b = random_subset(ny, rng);
        let lhs = phi.apply(&mu)?.mass_of(&b);
        let rhs = fpush.apply(&mu)?.mass_of(&b);
        let d = (lhs - rhs).abs();
        if d > 1e-12 * lhs.abs().max(rhs.abs()) {
            return Ok(SampleReport {
                property: "pushforward_equal".into(),
                trials,
                passed,
                counterexample: Some(Counterexample {
                    trial,
                    input: mu.entries().collect(),
                    parts: 1,
                    discrepancy: d,
                    ratio: None,
                    detail: format!("B = {:?}: Phi(mu)(B) = {lhs}, mu(f^-1(B)) = {rhs}", b.members()),
                }),
            });
        }
        passed += 1;
    }
    Ok(SampleReport { property: "pushforward_equal".into(), trials, passed, counterexample: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsContinuityReport {
    pub passed: bool,
    /// A point charged by `Phi(mu)` but not by `f_# mu`.
    pub witness: Option<PointId>,
    /// `Phi(mu)(q) / f_# mu(q)` on the support of `f_# mu`.
    pub density: Vec<(PointId, f64)>,
}

/// Finite-space absolute continuity `Phi(mu) ≪ f_# mu`, with its density.
pub fn check_abs_continuity(phi: &Transfunction, f: &PiecewiseMap, mu: &Measure) -> Result<AbsContinuityReport> {
    let out = phi.apply(mu)?;
    let base = f.pushforward().apply(mu)?;
    if let Some(q) = out.support().iter().find(|&q| base.weight(q) == 0.0) {
        return Ok(AbsContinuityReport { passed: false, witness: Some(q), density: Vec::new() });
    }
    let density = base.entries().map(|(q, w)| (q, out.weight(q) / w)).collect();
    Ok(AbsContinuityReport { passed: true, witness: None, density })
}
