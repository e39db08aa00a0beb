//! Markov operators, transport plans, and their correspondence with
//! transfunctions.
//!
//! A [`MarkovMatrix`] `M` is indexed `(y, x)` and acts on densities
//! `f ∈ L(X, mu)` by `(Tf)(y) = Σ_x M(y,x) f(x)`. The associated transfunction
//! is `b_nu ∘ T ∘ b_mu^{-1}` and the associated plan is
//! `kappa(x, y) = nu(y) M(y, x)`.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::space::{ensure_same, MetricSpace, PointId, PointSet};
use crate::transfunction::{check_strong_sigma_additive, Additivity, Kind, Transfunction};

/// Absolute tolerance for the Markov and plan invariants.
pub const MARKOV_TOL: f64 = 1e-9;

fn require_strictly_positive(m: &Measure, which: &str) -> Result<()> {
    if let Some((p, w)) = m.weights().iter().copied().enumerate().find(|&(_, w)| !(w > 0.0)) {
        return Err(Error::Precondition(format!("{which} must be strictly positive; weight {w} at point {p}")));
    }
    if (m.total() - 1.0).abs() > MARKOV_TOL {
        return Err(Error::Precondition(format!("{which} must have norm 1, got {}", m.total())));
    }
    Ok(())
}

/// `b_mu f = f · mu`. Signed densities give signed measures.
pub fn b_mu(f: &[f64], mu: &Measure) -> Result<Measure> {
    if f.len() != mu.space().len() {
        return Err(Error::SpaceMismatch("density length differs from the space size".into()));
    }
    Measure::signed(mu.space(), f.iter().zip(mu.weights()).map(|(a, b)| a * b).collect())
}

/// `b_mu^{-1} rho = rho / mu` pointwise.
pub fn b_mu_inv(rho: &Measure, mu: &Measure) -> Result<Vec<f64>> {
    ensure_same(rho.space(), mu.space(), "rho and mu live on different spaces")?;
    rho.weights()
        .iter()
        .zip(mu.weights())
        .enumerate()
        .map(|(p, (&r, &m))| if m == 0.0 { Err(Error::DensityUndefined(p)) } else { Ok(r / m) })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    mu: Measure,
    nu: Measure,
    m: Vec<f64>,
}

impl MarkovMatrix {
    /// Builds and validates `M` from rows indexed by `y`.
    pub fn new(mu: Measure, nu: Measure, rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = Self::unchecked(mu, nu, rows)?;
        t.validate()?;
        Ok(t)
    }

    /// Builds `M` without checking the Markov invariants; shapes are still checked.
    pub fn unchecked(mu: Measure, nu: Measure, rows: Vec<Vec<f64>>) -> Result<Self> {
        let (nx, ny) = (mu.space().len(), nu.space().len());
        if rows.len() != ny || rows.iter().any(|r| r.len() != nx) {
            return Err(Error::SpaceMismatch(format!("markov matrix must be {ny} x {nx}")));
        }
        Ok(MarkovMatrix { mu, nu, m: rows.concat() })
    }

    /// Checks positivity of `mu`, `nu`, and the three Markov conditions.
    /// The first violation is reported, naming the offending row or column.
    pub fn validate(&self) -> Result<()> {
        require_strictly_positive(&self.mu, "mu")?;
        require_strictly_positive(&self.nu, "nu")?;
        for y in 0..self.y_len() {
            for x in 0..self.x_len() {
                let v = self.entry(y, x);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::MarkovInvariant(format!("negative entry M({y},{x}) = {v}")));
                }
            }
            let s: f64 = self.row(y).iter().sum();
            if (s - 1.0).abs() > MARKOV_TOL {
                return Err(Error::MarkovInvariant(format!("row {y} sums to {s}, expected 1")));
            }
        }
        for x in 0..self.x_len() {
            let s: f64 = (0..self.y_len()).map(|y| self.nu.weight(y) * self.entry(y, x)).sum();
            if (s - self.mu.weight(x)).abs() > MARKOV_TOL {
                return Err(Error::MarkovInvariant(format!(
                    "column {x}: sum_y nu(y) M(y,{x}) = {s} but mu({x}) = {}",
                    self.mu.weight(x)
                )));
            }
        }
        Ok(())
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    pub fn nu(&self) -> &Measure {
        &self.nu
    }

    pub fn x_len(&self) -> usize {
        self.mu.space().len()
    }

    pub fn y_len(&self) -> usize {
        self.nu.space().len()
    }

    pub fn entry(&self, y: PointId, x: PointId) -> f64 {
        self.m[y * self.x_len() + x]
    }

    pub fn row(&self, y: PointId) -> &[f64] {
        let nx = self.x_len();
        &self.m[y * nx..(y + 1) * nx]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.y_len()).map(|y| self.row(y).to_vec()).collect()
    }

    /// `T f` for a density `f` on `X`.
    pub fn apply_density(&self, f: &[f64]) -> Vec<f64> {
        (0..self.y_len()).map(|y| self.row(y).iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    /// `b_nu(T(b_mu^{-1} rho))`.
    pub fn transfer(&self, rho: &Measure) -> Result<Measure> {
        let f = b_mu_inv(rho, &self.mu)?;
        let out = b_mu(&self.apply_density(&f), &self.nu)?;
        if rho.is_signed() {
            Ok(out)
        } else {
            Measure::new(self.nu.space(), out.weights().to_vec())
        }
    }

    /// Dense CSV: header `y,x0,x1,...`, one row per `y`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_dense(w, "y", self.x_len(), (0..self.y_len()).map(|y| self.row(y).to_vec()))
    }
}

fn write_dense<W: Write>(
    w: W,
    corner: &str,
    cols: usize,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![corner.to_string()];
    header.extend((0..cols).map(|c| c.to_string()));
    out.write_record(&header)?;
    for (i, r) in rows.enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(r.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `Phi := b_nu ∘ T ∘ b_mu^{-1}`, with its postconditions checked.
pub fn markov_to_transfunction(t: &MarkovMatrix) -> Result<Transfunction> {
    t.validate()?;
    let phi = Transfunction::from_parts(
        t.mu.space().clone(),
        t.nu.space().clone(),
        Kind::Markov(t.clone()),
    );
    let image = phi.apply(&t.mu)?;
    if image.l1_distance(&t.nu)? > MARKOV_TOL {
        return Err(Error::Postcondition("Phi(mu) != nu".into()));
    }
    for x in t.mu.space().ids() {
        let out = phi.point_image(x)?;
        if (out.total() - 1.0).abs() > MARKOV_TOL {
            return Err(Error::Postcondition(format!("Phi(delta_{x}) has mass {}", out.total())));
        }
    }
    Ok(phi)
}

/// `T := b_nu^{-1} ∘ Phi ∘ b_mu`, i.e. `M(y, x) = Phi(mu(x) delta_x)(y) / nu(y)`.
pub fn transfunction_to_markov(phi: &Transfunction, mu: &Measure, nu: &Measure) -> Result<MarkovMatrix> {
    ensure_same(phi.domain(), mu.space(), "mu is not on the domain")?;
    ensure_same(phi.codomain(), nu.space(), "nu is not on the codomain")?;
    require_strictly_positive(mu, "mu")?;
    require_strictly_positive(nu, "nu")?;
    if phi.additivity() != Additivity::Strong {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rep = check_strong_sigma_additive(phi, 200, &mut rng)?;
        if let Some(ce) = rep.counterexample {
            return Err(Error::Precondition(format!(
                "Phi is not strongly sigma-additive (trial {}, discrepancy {:e})",
                ce.trial, ce.discrepancy
            )));
        }
    }
    let (nx, ny) = (mu.space().len(), nu.space().len());
    let mut rows = vec![vec![0.0; nx]; ny];
    for x in 0..nx {
        let img = phi.point_image(x)?;
        if let Some(y) = img.weights().iter().position(|&v| v < 0.0) {
            return Err(Error::Precondition(format!("Phi(delta_{x}) is negative at {y}")));
        }
        if (img.total() - 1.0).abs() > MARKOV_TOL {
            return Err(Error::Precondition(format!(
                "Phi is not total-measure-preserving: ||Phi(delta_{x})|| = {}",
                img.total()
            )));
        }
        for y in 0..ny {
            rows[y][x] = mu.weight(x) * img.weight(y) / nu.weight(y);
        }
    }
    let image = phi.apply(mu)?;
    if let Some(y) = (0..ny).find(|&y| (image.weight(y) - nu.weight(y)).abs() > MARKOV_TOL) {
        return Err(Error::Precondition(format!(
            "Phi(mu) != nu at point {y}: {} vs {}",
            image.weight(y),
            nu.weight(y)
        )));
    }
    MarkovMatrix::new(mu.clone(), nu.clone(), rows)
}

/// Coupling `kappa` on `X × Y`, stored `(x, y)`-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    mu: Measure,
    nu: Measure,
    kappa: Vec<f64>,
}

impl TransportPlan {
    pub fn new(mu: Measure, nu: Measure, rows: Vec<Vec<f64>>) -> Result<Self> {
        let (nx, ny) = (mu.space().len(), nu.space().len());
        if rows.len() != nx || rows.iter().any(|r| r.len() != ny) {
            return Err(Error::SpaceMismatch(format!("plan must be {nx} x {ny}")));
        }
        let plan = TransportPlan { mu, nu, kappa: rows.concat() };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.kappa.iter().position(|&v| !(v >= 0.0)) {
            let ny = self.y_len();
            return Err(Error::MarkovInvariant(format!("negative plan entry at ({}, {})", i / ny, i % ny)));
        }
        let (xm, ym) = self.marginals();
        for (x, v) in xm.iter().enumerate() {
            if (v - self.mu.weight(x)).abs() > MARKOV_TOL {
                return Err(Error::MarkovInvariant(format!("x-marginal at {x} is {v}")));
            }
        }
        for (y, v) in ym.iter().enumerate() {
            if (v - self.nu.weight(y)).abs() > MARKOV_TOL {
                return Err(Error::MarkovInvariant(format!("y-marginal at {y} is {v}")));
            }
        }
        Ok(())
    }

    pub fn x_len(&self) -> usize {
        self.mu.space().len()
    }

    pub fn y_len(&self) -> usize {
        self.nu.space().len()
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    pub fn nu(&self) -> &Measure {
        &self.nu
    }

    pub fn entry(&self, x: PointId, y: PointId) -> f64 {
        self.kappa[x * self.y_len() + y]
    }

    /// `(Σ_y kappa(x, y), Σ_x kappa(x, y))`.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.x_len(), self.y_len());
        let mut xm = vec![0.0; nx];
        let mut ym = vec![0.0; ny];
        for x in 0..nx {
            for y in 0..ny {
                let v = self.entry(x, y);
                xm[x] += v;
                ym[y] += v;
            }
        }
        (xm, ym)
    }

    /// `kappa(A × B)`.
    pub fn mass(&self, a: &PointSet, b: &PointSet) -> f64 {
        a.iter().map(|x| b.iter().map(|y| self.entry(x, y)).sum::<f64>()).sum()
    }

    pub fn total(&self) -> f64 {
        self.kappa.iter().sum()
    }

    /// Dense CSV: header `x,y0,y1,...`, one row per `x`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let ny = self.y_len();
        write_dense(w, "x", ny, (0..self.x_len()).map(|x| self.kappa[x * ny..(x + 1) * ny].to_vec()))
    }
}

/// `kappa(x, y) = nu(y) M(y, x)`.
pub fn plan_from_markov(t: &MarkovMatrix) -> Result<TransportPlan> {
    t.validate()?;
    let rows = (0..t.x_len())
        .map(|x| (0..t.y_len()).map(|y| t.nu.weight(y) * t.entry(y, x)).collect())
        .collect();
    TransportPlan::new(t.mu.clone(), t.nu.clone(), rows)
}

/// `Σ kappa(x, y) c(x, y)` for a cost table indexed `[x][y]`.
pub fn mk_cost(plan: &TransportPlan, cost: &[Vec<f64>]) -> Result<f64> {
    if cost.len() != plan.x_len() || cost.iter().any(|r| r.len() != plan.y_len()) {
        return Err(Error::SpaceMismatch("cost table shape differs from the plan".into()));
    }
    if cost.iter().flatten().any(|&c| !(c >= 0.0)) {
        return Err(Error::InvalidParameter("costs must be >= 0".into()));
    }
    Ok((0..plan.x_len())
        .map(|x| (0..plan.y_len()).map(|y| plan.entry(x, y) * cost[x][y]).sum::<f64>())
        .sum())
}

/// Euclidean distance between coordinates as a cost table.
pub fn distance_cost(x: &MetricSpace, y: &MetricSpace) -> Vec<Vec<f64>> {
    x.ids().map(|p| y.ids().map(|q| y.dist_to_coords(q, x.coords(p))).collect()).collect()
}

/// Reads a cost table whose header row lists `Y` coordinates and whose first
/// column lists `X` coordinates. Multi-dimensional coordinates are written
/// space-separated inside one cell.
pub fn read_cost_csv<R: Read>(r: R, x: &Arc<MetricSpace>, y: &Arc<MetricSpace>) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut records = rd.records();
    let header = records.next().ok_or_else(|| Error::Parse("empty cost table".into()))??;
    let locate = |space: &MetricSpace, cell: &str| -> Result<PointId> {
        let c: Vec<f64> = cell
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad coordinate {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let p = space.nearest_point(&c);
        if space.dist_to_coords(p, &c) > space.tol() {
            return Err(Error::Parse(format!("coordinate {cell:?} is not a point of the space")));
        }
        Ok(p)
    };
    let cols: Vec<PointId> = header.iter().skip(1).map(|c| locate(y, c)).collect::<Result<_>>()?;
    let mut table = vec![vec![f64::NAN; y.len()]; x.len()];
    for rec in records {
        let rec = rec?;
        let row = locate(x, rec.get(0).unwrap_or(""))?;
        for (cell, &q) in rec.iter().skip(1).zip(&cols) {
            table[row][q] = cell.trim().parse().map_err(|e| Error::Parse(format!("bad cost {cell:?}: {e}")))?;
        }
    }
    if table.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Parse("cost table does not cover X × Y".into()));
    }
    Ok(table)
}

/// Random valid Markov matrix for `(mu, nu)`: the product plan `mu ⊗ nu`
/// perturbed by `rounds` marginal-preserving 2×2 moves.
pub fn random_markov<R: Rng + ?Sized>(
    mu: &Measure,
    nu: &Measure,
    rounds: usize,
    rng: &mut R,
) -> Result<MarkovMatrix> {
    require_strictly_positive(mu, "mu")?;
    require_strictly_positive(nu, "nu")?;
    let (nx, ny) = (mu.space().len(), nu.space().len());
    let mut k: Vec<Vec<f64>> =
        (0..nx).map(|x| (0..ny).map(|y| mu.weight(x) * nu.weight(y)).collect()).collect();
    if nx >= 2 && ny >= 2 {
        for _ in 0..rounds {
            let x1 = rng.gen_range(0..nx);
            let x2 = (x1 + rng.gen_range(1..nx)) % nx;
            let y1 = rng.gen_range(0..ny);
            let y2 = (y1 + rng.gen_range(1..ny)) % ny;
            let room = k[x1][y2].min(k[x2][y1]);
            let s = rng.gen_range(0.0..0.9) * room;
            k[x1][y1] += s;
            k[x2][y2] += s;
            k[x1][y2] -= s;
            k[x2][y1] -= s;
        }
    }
    let rows = (0..ny).map(|y| (0..nx).map(|x| k[x][y] / nu.weight(y)).collect()).collect();
    MarkovMatrix::new(mu.clone(), nu.clone(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> Arc<MetricSpace> {
        MetricSpace::line(0.0, 1.0, 1.0).unwrap()
    }

    fn half(s: &Arc<MetricSpace>) -> Measure {
        Measure::uniform(s, 0.5).unwrap()
    }

    #[test]
    fn b_mu_examples() {
        let s = MetricSpace::line(0.0, 3.0, 1.0).unwrap();
        let mu = Measure::new(&s, vec![0.125, 0.25, 0.125, 0.5]).unwrap();
        assert_eq!(b_mu(&[1.0; 4], &mu).unwrap().weights(), mu.weights());
        let f = [2.0, -1.0, 0.5, 3.0];
        assert_eq!(b_mu_inv(&b_mu(&f, &mu).unwrap(), &mu).unwrap(), f.to_vec());
        let sign = [1.0, -1.0, -1.0, 1.0];
        assert!((b_mu(&sign, &mu).unwrap().norm() - 1.0).abs() < 1e-15);
        let zero = Measure::new(&s, vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        assert_eq!(b_mu_inv(&mu, &zero), Err(Error::DensityUndefined(1)));
    }

    #[test]
    fn swap_matrix() {
        let s = two();
        let t = MarkovMatrix::new(half(&s), half(&s), vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let phi = markov_to_transfunction(&t).unwrap();
        let out = phi.apply(&Measure::new(&s, vec![0.3, 0.7]).unwrap()).unwrap();
        assert_eq!(out.weights(), &[0.7, 0.3]);
        let plan = plan_from_markov(&t).unwrap();
        assert_eq!(plan.entry(0, 1), 0.5);
        assert_eq!(plan.entry(1, 0), 0.5);
        assert_eq!(plan.entry(0, 0), 0.0);
    }

    #[test]
    fn constant_rows_give_rank_one_and_product_plan() {
        let s = MetricSpace::line(0.0, 2.0, 1.0).unwrap();
        let mu = Measure::new(&s, vec![0.2, 0.3, 0.5]).unwrap();
        let nu = Measure::new(&s, vec![0.6, 0.3, 0.1]).unwrap();
        let rows = vec![mu.weights().to_vec(); 3];
        let t = MarkovMatrix::new(mu.clone(), nu.clone(), rows).unwrap();
        let phi = markov_to_transfunction(&t).unwrap();
        let rho = Measure::new(&s, vec![1.0, 0.0, 2.0]).unwrap();
        let out = phi.apply(&rho).unwrap();
        for y in 0..3 {
            assert!((out.weight(y) - 3.0 * nu.weight(y)).abs() < 1e-15);
        }
        let plan = plan_from_markov(&t).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert!((plan.entry(x, y) - mu.weight(x) * nu.weight(y)).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn mk_cost_examples() {
        let s = two();
        let c = distance_cost(&s, &s);
        let id = MarkovMatrix::new(half(&s), half(&s), vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let diag = plan_from_markov(&id).unwrap();
        assert_eq!(mk_cost(&diag, &c).unwrap(), 0.0);
        assert_eq!(mk_cost(&diag, &[vec![0.0; 2], vec![0.0; 2]]).unwrap(), 0.0);
        let prod = MarkovMatrix::new(half(&s), half(&s), vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((mk_cost(&plan_from_markov(&prod).unwrap(), &c).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn broken_row_is_named() {
        let s = two();
        let err = MarkovMatrix::new(half(&s), half(&s), vec![vec![1.0, 0.0], vec![0.5, 0.4]]).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn non_preserving_transfunction_is_rejected() {
        let s = two();
        let phi = Transfunction::density_scale(Transfunction::identity(&s), vec![0.5, 0.5]).unwrap();
        assert!(matches!(transfunction_to_markov(&phi, &half(&s), &half(&s)), Err(Error::Precondition(_))));
    }

    #[test]
    fn permutation_pushforward_gives_permutation_matrix() {
        let s = MetricSpace::line(0.0, 2.0, 1.0).unwrap();
        let sigma = vec![2, 0, 1];
        let phi = Transfunction::pushforward(&s, &s, sigma.clone()).unwrap();
        let mu = Measure::new(&s, vec![0.2, 0.3, 0.5]).unwrap();
        let nu = phi.apply(&mu).unwrap();
        let t = transfunction_to_markov(&phi, &mu, &nu).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(t.entry(y, x), if y == sigma[x] { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cost_csv_roundtrip() {
        let s = two();
        let text = "c,0,1\n0,0,1.5\n1,2,0\n";
        let c = read_cost_csv(text.as_bytes(), &s, &s).unwrap();
        assert_eq!(c, vec![vec![0.0, 1.5], vec![2.0, 0.0]]);
        assert!(read_cost_csv("c,0\n0,1\n".as_bytes(), &s, &s).is_err());
    }
}
