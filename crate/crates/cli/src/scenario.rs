//! Scenario files: the JSON schema and its resolution into toolkit objects.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Deserialize;
use transfunctions::graphs::{fat_graph, graph_transfunction, GraphCarrier};
use transfunctions::markov::{markov_to_transfunction, MarkovMatrix};
use transfunctions::popdyn::PopulationModel;
use transfunctions::transfunction::compose;
use transfunctions::{Boundary, GridAxis, GridSpec, Kernel, Measure, MetricSpace, PointId, PointSet, Transfunction};

use crate::error::{anchor, Anchored, Resolve};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub spaces: BTreeMap<String, SpaceDef>,
    #[serde(default)]
    pub measures: BTreeMap<String, MeasureDef>,
    #[serde(default)]
    pub markov: BTreeMap<String, MarkovDef>,
    #[serde(default)]
    pub graphs: BTreeMap<String, GraphDef>,
    #[serde(default)]
    pub transfunctions: BTreeMap<String, TransfunctionDef>,
    #[serde(default)]
    pub popdyn: BTreeMap<String, PopDef>,
    pub analyses: Vec<Analysis>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDef {
    /// Regular grid, one entry per axis.
    Grid(Vec<GridAxis>),
    /// Explicit coordinates, Euclidean metric.
    Points(Vec<Vec<f64>>),
    /// Explicit distance table.
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
pub struct MeasureDef {
    pub space: String,
    #[serde(default)]
    pub signed: bool,
    #[serde(flatten)]
    pub body: MeasureBody,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureBody {
    /// Sparse `{ "id": weight }`.
    Weights(BTreeMap<String, f64>),
    Dense(Vec<f64>),
    Uniform(f64),
}

/// A grid map given either as ids or as target coordinates snapped to the codomain.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub map: Option<Vec<PointId>>,
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelDef {
    /// Uniform unit-mass kernel on the offsets `|u| < radius`.
    UniformBall(f64),
    /// `[[offset...], weight]` pairs in grid steps.
    Offsets(Vec<(Vec<i64>, f64)>),
    Dirac,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovDef {
    pub mu: String,
    pub nu: String,
    /// `rows[y][x]`.
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDef {
    pub domain: String,
    pub codomain: String,
    pub pairs: Option<Vec<(PointId, PointId)>>,
    pub band: Option<BandDef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandDef {
    #[serde(flatten)]
    pub f: MapDef,
    pub eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransfunctionDef {
    Pushforward {
        domain: String,
        codomain: String,
        #[serde(flatten)]
        f: MapDef,
    },
    Identity {
        space: String,
    },
    Projection {
        space: String,
        set: Vec<PointId>,
    },
    Convolution {
        space: String,
        kernel: KernelDef,
        #[serde(default)]
        boundary: Boundary,
    },
    DensityScale {
        inner: String,
        density: Vec<f64>,
    },
    RankOne {
        domain: String,
        nu: String,
    },
    Markov {
        matrix: String,
    },
    Graph {
        graph: String,
        lambda: String,
    },
    /// Applied left to right.
    Compose {
        parts: Vec<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Growth {
    Constant(f64),
    Table(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopDef {
    pub space: String,
    pub migration: MapDef,
    pub kernel: KernelDef,
    pub growth: Growth,
    #[serde(default)]
    pub boundary: Boundary,
    pub initial: String,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMethod {
    SigmaSimple,
    Nonuniform,
    Mollify,
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostDef {
    Distance,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analysis {
    Localize {
        transfunction: String,
        delta_min: Option<f64>,
        eps: Option<f64>,
    },
    Approx {
        transfunction: String,
        method: ApproxMethod,
        delta: Option<f64>,
        eps: Option<f64>,
        beta: Option<f64>,
        delta_min: Option<f64>,
    },
    Graphs {
        graph: String,
        transfunction: String,
    },
    Markov {
        matrix: String,
        cost: Option<CostDef>,
    },
    Popdyn {
        model: String,
    },
}

impl Analysis {
    pub fn kind(&self) -> &'static str {
        match self {
            Analysis::Localize { .. } => "localize",
            Analysis::Approx { .. } => "approx",
            Analysis::Graphs { .. } => "graphs",
            Analysis::Markov { .. } => "markov",
            Analysis::Popdyn { .. } => "popdyn",
        }
    }

    pub fn target(&self) -> &str {
        match self {
            Analysis::Localize { transfunction, .. } | Analysis::Approx { transfunction, .. } => transfunction,
            Analysis::Graphs { graph, .. } => graph,
            Analysis::Markov { matrix, .. } => matrix,
            Analysis::Popdyn { model } => model,
        }
    }
}

pub struct Model {
    pub model: PopulationModel,
    pub initial: Measure,
    pub steps: usize,
}

/// A scenario with every name resolved.
pub struct World {
    pub name: String,
    pub spaces: BTreeMap<String, Arc<MetricSpace>>,
    /// Matrices are kept unvalidated so that checks can report the broken entry.
    pub markov: BTreeMap<String, MarkovMatrix>,
    pub graphs: BTreeMap<String, GraphCarrier>,
    pub transfunctions: BTreeMap<String, Transfunction>,
    pub models: BTreeMap<String, Model>,
    pub analyses: Vec<Analysis>,
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, what: &str, name: &str, at: &str) -> Resolve<&'a T> {
    map.get(name).ok_or_else(|| Anchored::new(at, format!("unknown {what} '{name}'")))
}

fn space(spaces: &BTreeMap<String, Arc<MetricSpace>>, name: &str, at: &str) -> Resolve<Arc<MetricSpace>> {
    lookup(spaces, "space", name, at).cloned()
}

fn build_space(name: &str, def: &SpaceDef) -> Resolve<Arc<MetricSpace>> {
    let s = match def {
        SpaceDef::Grid(axes) => MetricSpace::grid(GridSpec::new(axes.clone())),
        SpaceDef::Points(coords) => MetricSpace::from_points(coords.clone()),
        SpaceDef::Table(table) => MetricSpace::from_table(Vec::new(), table.clone()),
    };
    Ok(anchor(name, s)?.named(name))
}

fn build_measure(name: &str, def: &MeasureDef, s: &Arc<MetricSpace>) -> Resolve<Measure> {
    let weights = match &def.body {
        MeasureBody::Weights(w) => {
            let mut dense = vec![0.0; s.len()];
            for (key, &v) in w {
                let p: PointId = key
                    .trim()
                    .parse()
                    .map_err(|_| Anchored::new(name, format!("weight key '{key}' is not a point id")))?;
                anchor(name, s.check_id(p))?;
                dense[p] = v;
            }
            dense
        }
        MeasureBody::Dense(w) => {
            if w.len() != s.len() {
                return Err(Anchored::new(name, format!("{} weights for a space of {} points", w.len(), s.len())));
            }
            w.clone()
        }
        MeasureBody::Uniform(v) => vec![*v; s.len()],
    };
    if def.signed {
        anchor(name, Measure::signed(s, weights))
    } else {
        anchor(name, Measure::new(s, weights))
    }
}

pub fn build_map(at: &str, f: &MapDef, dom: &MetricSpace, cod: &MetricSpace) -> Resolve<Vec<PointId>> {
    let map = match (&f.map, &f.values) {
        (Some(m), None) => m.clone(),
        (None, Some(v)) => v.iter().map(|c| cod.nearest_point(c)).collect(),
        _ => return Err(Anchored::new(at, "give exactly one of `map` (ids) or `values` (coordinates)")),
    };
    if map.len() != dom.len() {
        return Err(Anchored::new(at, format!("map has {} entries for a domain of {} points", map.len(), dom.len())));
    }
    if let Some(&q) = map.iter().find(|&&q| q >= cod.len()) {
        return Err(Anchored::new(at, format!("map target {q} is outside the codomain ({} points)", cod.len())));
    }
    Ok(map)
}

fn build_kernel(at: &str, def: &KernelDef, s: &MetricSpace) -> Resolve<Kernel> {
    let spec = s
        .grid_spec()
        .ok_or_else(|| Anchored::new(at, "kernels need a grid space"))?;
    let step: Vec<f64> = spec.axes.iter().map(|a| a.step).collect();
    anchor(
        at,
        match def {
            KernelDef::UniformBall(r) => Kernel::uniform_ball(step, *r),
            KernelDef::Offsets(entries) => Kernel::from_offsets(step, entries.clone()),
            KernelDef::Dirac => Kernel::dirac(step),
        },
    )
}

fn build_graph(name: &str, def: &GraphDef, spaces: &BTreeMap<String, Arc<MetricSpace>>) -> Resolve<GraphCarrier> {
    let dom = space(spaces, &def.domain, name)?;
    let cod = space(spaces, &def.codomain, name)?;
    match (&def.pairs, &def.band) {
        (Some(pairs), None) => anchor(name, GraphCarrier::from_pairs(&dom, &cod, pairs.iter().copied())),
        (None, Some(band)) => {
            let map = build_map(name, &band.f, &dom, &cod)?;
            anchor(name, fat_graph(&dom, &cod, &map, band.eps))
        }
        _ => Err(Anchored::new(name, "give exactly one of `pairs` or `band`")),
    }
}

struct Builder<'a> {
    defs: &'a BTreeMap<String, TransfunctionDef>,
    spaces: &'a BTreeMap<String, Arc<MetricSpace>>,
    measures: &'a BTreeMap<String, Measure>,
    markov: &'a BTreeMap<String, MarkovMatrix>,
    graphs: &'a BTreeMap<String, GraphCarrier>,
    done: BTreeMap<String, Transfunction>,
    active: BTreeSet<String>,
}

impl Builder<'_> {
    fn get(&mut self, name: &str, at: &str) -> Resolve<Transfunction> {
        if let Some(t) = self.done.get(name) {
            return Ok(t.clone());
        }
        let def = lookup(self.defs, "transfunction", name, at)?;
        if !self.active.insert(name.to_string()) {
            return Err(Anchored::new(name, format!("transfunction '{name}' refers to itself")));
        }
        let t = self.build(name, def)?;
        self.active.remove(name);
        self.done.insert(name.to_string(), t.clone());
        Ok(t)
    }

    fn build(&mut self, name: &str, def: &TransfunctionDef) -> Resolve<Transfunction> {
        let sp = |n: &str| space(self.spaces, n, name);
        match def {
            TransfunctionDef::Pushforward { domain, codomain, f } => {
                let (d, c) = (sp(domain)?, sp(codomain)?);
                let map = build_map(name, f, &d, &c)?;
                anchor(name, Transfunction::pushforward(&d, &c, map))
            }
            TransfunctionDef::Identity { space } => Ok(Transfunction::identity(&sp(space)?)),
            TransfunctionDef::Projection { space, set } => {
                let s = sp(space)?;
                let set = anchor(name, PointSet::new(s.len(), set.iter().copied()))?;
                anchor(name, Transfunction::projection(&s, set))
            }
            TransfunctionDef::Convolution { space, kernel, boundary } => {
                let s = sp(space)?;
                let k = build_kernel(name, kernel, &s)?;
                anchor(name, Transfunction::convolution(&s, k, *boundary))
            }
            TransfunctionDef::DensityScale { inner, density } => {
                let inner = self.get(inner, name)?;
                anchor(name, Transfunction::density_scale(inner, density.clone()))
            }
            TransfunctionDef::RankOne { domain, nu } => {
                let d = sp(domain)?;
                let nu = lookup(self.measures, "measure", nu, name)?;
                anchor(name, Transfunction::rank_one(&d, nu.clone()))
            }
            TransfunctionDef::Markov { matrix } => {
                let t = lookup(self.markov, "markov matrix", matrix, name)?;
                anchor(name, markov_to_transfunction(t))
            }
            TransfunctionDef::Graph { graph, lambda } => {
                let g = lookup(self.graphs, "graph", graph, name)?;
                let l = lookup(self.measures, "measure", lambda, name)?;
                anchor(name, graph_transfunction(g, l))
            }
            TransfunctionDef::Compose { parts } => {
                let first = parts.first().ok_or_else(|| Anchored::new(name, "composition needs at least one part"))?;
                let mut acc = self.get(first, name)?;
                for p in &parts[1..] {
                    let next = self.get(p, name)?;
                    acc = anchor(name, compose(&acc, &next))?;
                }
                Ok(acc)
            }
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> serde_json::Result<Scenario> {
        serde_json::from_str(text)
    }

    pub fn resolve(&self) -> Resolve<World> {
        if self.analyses.is_empty() {
            return Err(Anchored::new("analyses", "scenario lists no analyses"));
        }
        let mut spaces = BTreeMap::new();
        for (name, def) in &self.spaces {
            spaces.insert(name.clone(), build_space(name, def)?);
        }
        let mut measures = BTreeMap::new();
        for (name, def) in &self.measures {
            let s = space(&spaces, &def.space, name)?;
            measures.insert(name.clone(), build_measure(name, def, &s)?);
        }
        let mut markov = BTreeMap::new();
        for (name, def) in &self.markov {
            let mu = lookup(&measures, "measure", &def.mu, name)?.clone();
            let nu = lookup(&measures, "measure", &def.nu, name)?.clone();
            markov.insert(name.clone(), anchor(name, MarkovMatrix::unchecked(mu, nu, def.rows.clone()))?);
        }
        let mut graphs = BTreeMap::new();
        for (name, def) in &self.graphs {
            graphs.insert(name.clone(), build_graph(name, def, &spaces)?);
        }
        let mut b = Builder {
            defs: &self.transfunctions,
            spaces: &spaces,
            measures: &measures,
            markov: &markov,
            graphs: &graphs,
            done: BTreeMap::new(),
            active: BTreeSet::new(),
        };
        for name in self.transfunctions.keys() {
            b.get(name, name)?;
        }
        let transfunctions = b.done;

        let mut models = BTreeMap::new();
        for (name, def) in &self.popdyn {
            let s = space(&spaces, &def.space, name)?;
            let migration = build_map(name, &def.migration, &s, &s)?;
            let kernel = build_kernel(name, &def.kernel, &s)?;
            let growth = match &def.growth {
                Growth::Constant(r) => vec![*r; s.len()],
                Growth::Table(g) => g.clone(),
            };
            let model = anchor(name, PopulationModel::with_boundary(&s, migration, kernel, growth, def.boundary))?;
            let initial = lookup(&measures, "measure", &def.initial, name)?.clone();
            models.insert(name.clone(), Model { model, initial, steps: def.steps });
        }

        for a in &self.analyses {
            let t = a.target();
            let known = match a {
                Analysis::Localize { .. } | Analysis::Approx { .. } => transfunctions.contains_key(t),
                Analysis::Graphs { transfunction, .. } => {
                    lookup(&transfunctions, "transfunction", transfunction, transfunction)?;
                    graphs.contains_key(t)
                }
                Analysis::Markov { .. } => markov.contains_key(t),
                Analysis::Popdyn { .. } => models.contains_key(t),
            };
            if !known {
                return Err(Anchored::new(t, format!("{} analysis refers to unknown '{t}'", a.kind())));
            }
            if let Analysis::Approx { method, delta, eps, .. } = a {
                let needs_delta = matches!(method, ApproxMethod::SigmaSimple | ApproxMethod::Mollify);
                let needs_eps = *method != ApproxMethod::Recover;
                if (needs_delta && delta.is_none()) || (needs_eps && eps.is_none()) {
                    return Err(Anchored::new("method", format!("approx method {method:?} on '{t}' needs delta and eps")));
                }
            }
        }

        Ok(World {
            name: self.name.clone(),
            spaces,
            markov,
            graphs,
            transfunctions,
            models,
            analyses: self.analyses.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "spaces": { "X": { "grid": [ { "min": 0, "max": 1, "step": 0.5 } ] } },
        "measures": { "mu": { "space": "X", "weights": { "1": 2.0 } } },
        "transfunctions": {
            "flip": { "kind": "pushforward", "domain": "X", "codomain": "X", "map": [2, 1, 0] },
            "both": { "kind": "compose", "parts": ["flip", "flip"] }
        },
        "analyses": [ { "type": "localize", "transfunction": "both" } ]
    }"#;

    #[test]
    fn resolves_a_small_scenario() {
        let w = Scenario::parse(TINY).unwrap().resolve().unwrap();
        assert_eq!(w.spaces["X"].len(), 3);
        let mu = Measure::dirac(&w.spaces["X"], 0, 1.0).unwrap();
        assert_eq!(w.transfunctions["both"].apply(&mu).unwrap(), mu);
    }

    #[test]
    fn unknown_references_are_anchored() {
        let text = TINY.replace("\"parts\": [\"flip\", \"flip\"]", "\"parts\": [\"flip\", \"flop\"]");
        let err = Scenario::parse(&text).unwrap().resolve().err().unwrap();
        assert_eq!(err.key, "both");
        assert!(err.message.contains("unknown transfunction 'flop'"));
    }

    #[test]
    fn self_reference_is_rejected() {
        let text = TINY.replace("[\"flip\", \"flip\"]", "[\"flip\", \"both\"]");
        let err = Scenario::parse(&text).unwrap().resolve().err().unwrap();
        assert!(err.message.contains("refers to itself"));
    }

    #[test]
    fn values_snap_to_the_codomain() {
        let s = MetricSpace::line(0.0, 1.0, 0.5).unwrap();
        let f = MapDef { map: None, values: Some(vec![vec![0.9], vec![0.1], vec![0.6]]) };
        assert_eq!(build_map("f", &f, &s, &s).unwrap(), vec![2, 0, 1]);
    }
}
