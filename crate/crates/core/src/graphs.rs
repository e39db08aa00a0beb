//! Graph carriers `Γ ⊆ X × Y`.
//!
//! `Γ` carries `Phi` when every rectangle `A × B` missing `Γ` forces
//! `Phi(A) ⊏ B^c`. The check runs over the base-ball rectangle family
//! (open balls at every distinct distance, plus the whole space) and any
//! user-supplied rectangles.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::space::{ensure_same, MetricSpace, PointId, PointSet};
use crate::transfunction::{Kind, Transfunction};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphCarrier {
    domain: Arc<MetricSpace>,
    codomain: Arc<MetricSpace>,
    rel: Vec<bool>,
}

impl GraphCarrier {
    pub fn empty(domain: &Arc<MetricSpace>, codomain: &Arc<MetricSpace>) -> Self {
        GraphCarrier {
            domain: domain.clone(),
            codomain: codomain.clone(),
            rel: vec![false; domain.len() * codomain.len()],
        }
    }

    pub fn full(domain: &Arc<MetricSpace>, codomain: &Arc<MetricSpace>) -> Self {
        let mut g = Self::empty(domain, codomain);
        g.rel.fill(true);
        g
    }

    pub fn from_pairs(
        domain: &Arc<MetricSpace>,
        codomain: &Arc<MetricSpace>,
        pairs: impl IntoIterator<Item = (PointId, PointId)>,
    ) -> Result<Self> {
        let mut g = Self::empty(domain, codomain);
        for (p, q) in pairs {
            domain.check_id(p)?;
            codomain.check_id(q)?;
            g.set(p, q);
        }
        Ok(g)
    }

    pub fn from_fn(
        domain: &Arc<MetricSpace>,
        codomain: &Arc<MetricSpace>,
        f: impl Fn(PointId, PointId) -> bool,
    ) -> Self {
        let mut g = Self::empty(domain, codomain);
        for p in domain.ids() {
            for q in codomain.ids() {
                if f(p, q) {
                    g.set(p, q);
                }
            }
        }
        g
    }

    /// `{(p, f(p))}`.
    pub fn graph_of(domain: &Arc<MetricSpace>, codomain: &Arc<MetricSpace>, map: &[PointId]) -> Result<Self> {
        if map.len() != domain.len() {
            return Err(Error::SpaceMismatch("map length differs from the domain size".into()));
        }
        Self::from_pairs(domain, codomain, map.iter().copied().enumerate())
    }

    fn set(&mut self, p: PointId, q: PointId) {
        let ny = self.codomain.len();
        self.rel[p * ny + q] = true;
    }

    pub fn domain(&self) -> &Arc<MetricSpace> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<MetricSpace> {
        &self.codomain
    }

    pub fn contains(&self, p: PointId, q: PointId) -> bool {
        self.rel[p * self.codomain.len() + q]
    }

    /// `{q : (p, q) ∈ Γ}`.
    pub fn row(&self, p: PointId) -> impl Iterator<Item = PointId> + '_ {
        let ny = self.codomain.len();
        self.rel[p * ny..(p + 1) * ny].iter().enumerate().filter(|(_, &b)| b).map(|(q, _)| q)
    }

    pub fn pairs(&self) -> Vec<(PointId, PointId)> {
        self.domain.ids().flat_map(|p| self.row(p).map(move |q| (p, q))).collect()
    }

    pub fn len(&self) -> usize {
        self.rel.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_subset(&self, other: &GraphCarrier) -> bool {
        self.rel.iter().zip(&other.rel).all(|(&a, &b)| !a || b)
    }

    /// Sparse CSV with header `p,q`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["p", "q"])?;
        for (p, q) in self.pairs() {
            out.write_record([p.to_string(), q.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `∪_x {x} × B(f(x), eps)` with open balls in `Y`.
pub fn fat_graph(
    domain: &Arc<MetricSpace>,
    codomain: &Arc<MetricSpace>,
    map: &[PointId],
    eps: f64,
) -> Result<GraphCarrier> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    if map.len() != domain.len() {
        return Err(Error::SpaceMismatch("map length differs from the domain size".into()));
    }
    let mut g = GraphCarrier::empty(domain, codomain);
    for (p, &fp) in map.iter().enumerate() {
        codomain.check_id(fp)?;
        if eps > 0.0 {
            for q in codomain.ball(fp, eps)?.iter() {
                g.set(p, q);
            }
        }
    }
    Ok(g)
}

/// `Phi(mu)(B) = (mu × lambda)(Γ ∩ (X × B))`.
pub fn graph_transfunction(graph: &GraphCarrier, lambda: &Measure) -> Result<Transfunction> {
    ensure_same(&graph.codomain, lambda.space(), "lambda is not on the graph's codomain")?;
    lambda.require_nonnegative()?;
    let phi = Transfunction::from_parts(
        graph.domain.clone(),
        graph.codomain.clone(),
        Kind::GraphInduced { graph: graph.clone(), lambda: lambda.clone() },
    );
    let rep = carries(graph, &phi, &[])?;
    if let Some(v) = rep.violation {
        return Err(Error::Postcondition(format!("graph does not carry its own transfunction: {}", v.label)));
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub a: PointSet,
    pub b: PointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub label: String,
    pub a: PointSet,
    pub b: PointSet,
    /// `p ∈ A` whose image puts mass at `q ∈ B`.
    pub p: PointId,
    pub q: PointId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarryReport {
    /// Number of rectangles covered (base family counted as `#A-balls × #B-balls`).
    pub rectangles: usize,
    pub violation: Option<Violation>,
}

impl CarryReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Radii of the base balls: every distinct distance, plus one that covers the space.
pub fn base_radii(space: &MetricSpace) -> Vec<f64> {
    let mut r = space.distinct_distances().to_vec();
    r.push(space.diameter() + space.resolution());
    r
}

/// Checks whether `graph` carries `phi` on the base-ball family and on `extra`.
///
/// For a fixed `A`, let `G_A` be the `Γ`-neighbourhood of `A` and `S_A` the
/// union of the supports of `Phi(delta_p)`, `p ∈ A`. A ball `B(y, s)` is a
/// violation iff it meets `S_A` but not `G_A`; the smallest radius above
/// `d(y, S_A)` decides this for each `y`.
pub fn carries(graph: &GraphCarrier, phi: &Transfunction, extra: &[Rectangle]) -> Result<CarryReport> {
    ensure_same(&graph.domain, phi.domain(), "graph and transfunction domains differ")?;
    ensure_same(&graph.codomain, phi.codomain(), "graph and transfunction codomains differ")?;
    let x = &graph.domain;
    let y = &graph.codomain;
    let supports = phi.point_supports()?;
    let ry = base_radii(y);
    let rx = base_radii(x);
    let ty = y.tol();

    let mut count = 0;
    for c in x.ids() {
        let mut order: Vec<PointId> = x.ids().collect();
        order.sort_by(|&a, &b| x.dist(c, a).total_cmp(&x.dist(c, b)).then(a.cmp(&b)));
        let mut d_s = vec![f64::INFINITY; y.len()];
        let mut d_g = vec![f64::INFINITY; y.len()];
        let mut next = 0;
        for &r in &rx {
            count += ry.len() * y.len();
            let mut grew = false;
            while next < order.len() && x.dist(c, order[next]) < r - x.tol() {
                let p = order[next];
                next += 1;
                grew = true;
                for q in supports[p].iter() {
                    for t in y.ids() {
                        d_s[t] = d_s[t].min(y.dist(t, q));
                    }
                }
                for q in graph.row(p) {
                    for t in y.ids() {
                        d_g[t] = d_g[t].min(y.dist(t, q));
                    }
                }
            }
            if !grew {
                continue;
            }
            for t in y.ids() {
                if d_s[t].is_infinite() {
                    continue;
                }
                let k = ry.partition_point(|&s| s - ty <= d_s[t]);
                let Some(&s) = ry.get(k) else { continue };
                if d_g[t] >= s - ty {
                    let a = x.ball(c, r)?;
                    let b = y.ball(t, s)?;
                    let (p, q) = first_hit(&a, &b, &supports).expect("S_A meets B");
                    return Ok(CarryReport {
                        rectangles: count,
                        violation: Some(Violation {
                            label: format!("B(x{c}, {r}) x B(y{t}, {s})"),
                            a,
                            b,
                            p,
                            q,
                        }),
                    });
                }
            }
        }
    }

    for (i, rect) in extra.iter().enumerate() {
        count += 1;
        if rect.a.universe() != x.len() || rect.b.universe() != y.len() {
            return Err(Error::SpaceMismatch(format!("rectangle {i} does not match the spaces")));
        }
        let misses = rect.a.iter().all(|p| graph.row(p).all(|q| !rect.b.contains(q)));
        if misses {
            if let Some((p, q)) = first_hit(&rect.a, &rect.b, &supports) {
                return Ok(CarryReport {
                    rectangles: count,
                    violation: Some(Violation { label: format!("extra rectangle {i}"), a: rect.a.clone(), b: rect.b.clone(), p, q }),
                });
            }
        }
    }
    Ok(CarryReport { rectangles: count, violation: None })
}

fn first_hit(a: &PointSet, b: &PointSet, supports: &[PointSet]) -> Option<(PointId, PointId)> {
    a.iter().find_map(|p| supports[p].iter().find(|&q| b.contains(q)).map(|q| (p, q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Arc<MetricSpace> {
        MetricSpace::line(-1.0, 1.0, 0.1).unwrap()
    }

    fn heaviside_map(s: &MetricSpace) -> Vec<PointId> {
        s.ids().map(|p| s.nearest_point(&[if s.coords(p)[0] < 0.0 { 0.0 } else { 1.0 }])).collect()
    }

    #[test]
    fn fat_graph_examples() {
        let s = line();
        let id: Vec<PointId> = s.ids().collect();
        assert!(fat_graph(&s, &s, &id, 0.0).unwrap().is_empty());
        assert_eq!(fat_graph(&s, &s, &id, 2.5).unwrap().len(), 21 * 21);
        let band = fat_graph(&s, &s, &id, 0.15).unwrap();
        for p in s.ids() {
            for q in s.ids() {
                assert_eq!(band.contains(p, q), p.abs_diff(q) <= 1, "{p} {q}");
            }
        }
    }

    #[test]
    fn exact_graph_carries_pushforward() {
        let s = line();
        let map = heaviside_map(&s);
        let phi = Transfunction::pushforward(&s, &s, map.clone()).unwrap();
        let g = GraphCarrier::graph_of(&s, &s, &map).unwrap();
        assert!(carries(&g, &phi, &[]).unwrap().passed());
        let fat = fat_graph(&s, &s, &map, 0.3).unwrap();
        assert!(g.is_subset(&fat));
        assert!(carries(&fat, &phi, &[]).unwrap().passed());
    }

    #[test]
    fn empty_graph_fails() {
        let s = line();
        let phi = Transfunction::identity(&s);
        let rep = carries(&GraphCarrier::empty(&s, &s), &phi, &[]).unwrap();
        assert!(!rep.passed());
    }

    #[test]
    fn shifted_graph_fails_with_witness() {
        let s = line();
        let shifted: Vec<PointId> = s.ids().map(|p| (p + 5).min(20)).collect();
        let g = GraphCarrier::graph_of(&s, &s, &shifted).unwrap();
        let rep = carries(&g, &Transfunction::identity(&s), &[]).unwrap();
        let v = rep.violation.unwrap();
        assert!(v.a.contains(v.p) && v.b.contains(v.q));
        assert!(v.a.iter().all(|p| g.row(p).all(|q| !v.b.contains(q))));
    }

    #[test]
    fn extra_rectangles_are_checked() {
        let s = MetricSpace::line(0.0, 2.0, 1.0).unwrap();
        let phi = Transfunction::identity(&s);
        let g = GraphCarrier::full(&s, &s);
        let rect = Rectangle { a: PointSet::full(3), b: PointSet::full(3) };
        assert!(carries(&g, &phi, &[rect]).unwrap().passed());
    }

    #[test]
    fn graph_transfunction_examples() {
        let s = line();
        let lambda = Measure::uniform(&s, 1.0 / 21.0).unwrap();
        let full = graph_transfunction(&GraphCarrier::full(&s, &s), &lambda).unwrap();
        let mu = Measure::from_sparse(&s, [(2, 1.5), (7, 0.5)]).unwrap();
        let out = full.apply(&mu).unwrap();
        for q in s.ids() {
            assert!((out.weight(q) - 2.0 / 21.0).abs() < 1e-15);
        }
        let w = Measure::uniform(&s, 0.3).unwrap();
        let diag = GraphCarrier::from_fn(&s, &s, |p, q| p == q);
        let d = graph_transfunction(&diag, &w).unwrap();
        assert_eq!(d.point_image(4).unwrap(), Measure::dirac(&s, 4, 0.3).unwrap());
        let zero = graph_transfunction(&GraphCarrier::empty(&s, &s), &w).unwrap();
        assert!(zero.apply(&mu).unwrap().is_zero());
    }
}
