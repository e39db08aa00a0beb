//! Analysis runners. Each produces a list of checks plus report files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use transfunctions::approximation::{
    check_lipschitz, hull_failures, localization_failures, mollify, nonuniform_approx, recover_zero_localized,
    sigma_simple_approx, snapped_failures, verify_pushforward_equal, PiecewiseMap,
};
use transfunctions::graphs::carries;
use transfunctions::localization::{localization_report, LOWER_BOUND_LABEL};
use transfunctions::markov::{
    distance_cost, markov_to_transfunction, mk_cost, plan_from_markov, transfunction_to_markov, MarkovMatrix,
};
use transfunctions::measure::project;
use transfunctions::transfunction::{
    check_norm_preserving, check_strong_sigma_additive, check_weak_sigma_additive, random_subset, Additivity, Kind,
    SampleReport,
};
use transfunctions::{Boundary, PointSet, Transfunction};

use crate::error::CliError;
use crate::scenario::{Analysis, ApproxMethod, CostDef, Model, World};

const EXACT_TOL: f64 = 1e-12;
const DRIFT_TOL: f64 = 1e-10;
const GROWTH_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// An expected finding, such as a non-local transfunction. Never fails a run.
    Flagged,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), status, detail: detail.into() }
    }

    fn of(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    fn sampled(name: &str, r: &SampleReport) -> Self {
        match &r.counterexample {
            None => Self::of(name, true, format!("{}/{} trials", r.passed, r.trials)),
            Some(c) => Self::of(name, false, format!("trial {}: {}", c.trial, c.detail)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub kind: String,
    pub target: String,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub data: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub command: String,
    pub seed: u64,
    pub trials: usize,
    pub analyses: Vec<AnalysisReport>,
    pub summary: Summary,
}

impl RunReport {
    pub fn new(scenario: &str, command: &str, settings: &Settings, analyses: Vec<AnalysisReport>) -> Self {
        let count = |s: Status| analyses.iter().flat_map(|a| &a.checks).filter(|c| c.status == s).count();
        let summary = Summary { passed: count(Status::Pass), failed: count(Status::Fail), flagged: count(Status::Flagged) };
        RunReport {
            scenario: scenario.to_string(),
            command: command.to_string(),
            seed: settings.seed,
            trials: settings.trials,
            analyses,
            summary,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub trials: usize,
    pub delta_min: Option<f64>,
    pub out: PathBuf,
}

impl Settings {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Collects report files written under the output directory.
struct Files<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Files<'a> {
    fn new(dir: &'a Path) -> Self {
        Files { dir, names: Vec::new() }
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> transfunctions::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let fail = |message: String| CliError::Output { path: path.display().to_string(), message };
        let file = File::create(&path).map_err(|e| fail(e.to_string()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| fail(e.to_string()))?;
        w.flush().map_err(|e| fail(e.to_string()))?;
        self.names.push(name.to_string());
        Ok(())
    }
}

pub fn run_analysis(world: &World, a: &Analysis, s: &Settings) -> Result<AnalysisReport, CliError> {
    let mut files = Files::new(&s.out);
    let (checks, data) = match a {
        Analysis::Localize { transfunction, delta_min, eps } => {
            localize(world, transfunction, s.delta_min.or(*delta_min), *eps, &mut files)?
        }
        Analysis::Approx { transfunction, method, delta, eps, beta, delta_min } => {
            let p = ApproxParams { method: *method, delta: *delta, eps: *eps, beta: *beta, delta_min: s.delta_min.or(*delta_min) };
            approx(world, transfunction, &p, s, &mut files)?
        }
        Analysis::Graphs { graph, transfunction } => graphs(world, graph, transfunction, &mut files)?,
        Analysis::Markov { matrix, cost } => markov(world, matrix, *cost, s, &mut files)?,
        Analysis::Popdyn { model } => popdyn(&world.models[model], model, &mut files)?,
    };
    Ok(AnalysisReport { kind: a.kind().to_string(), target: a.target().to_string(), checks, files: files.names, data })
}

type Outcome = Result<(Vec<Check>, Value), CliError>;

fn localize(world: &World, name: &str, delta_min: Option<f64>, eps: Option<f64>, files: &mut Files) -> Outcome {
    let phi = &world.transfunctions[name];
    let dm = delta_min.unwrap_or_else(|| phi.domain().resolution());
    let rep = match localization_report(phi, dm, eps) {
        Ok(r) => r,
        Err(e) => return Ok((vec![Check::of("estimate_e", false, e.to_string())], Value::Null)),
    };
    files.write(&format!("localize_{name}.csv"), |w| rep.write_csv(w, phi.domain(), phi.codomain()))?;
    let mut checks = vec![non_local_check(&rep)];
    if rep.label.is_some() {
        checks.push(Check::new("additivity_label", Status::Flagged, LOWER_BOUND_LABEL));
    }
    if let Some(eps) = eps {
        checks.push(match rep.uniform {
            Some((e, d)) => Check::of("uniform", true, format!("localized with eps = {e} at delta = {d}")),
            None if rep.any_non_local() => {
                Check::new("uniform", Status::Flagged, format!("eps = {eps} exceeded by a non-local transfunction"))
            }
            None => Check::of("uniform", false, format!("not uniformly localized at eps = {eps}")),
        });
    }
    Ok((checks, serde_json::to_value(&rep).unwrap_or(Value::Null)))
}

fn non_local_check(rep: &transfunctions::localization::LocalizationReport) -> Check {
    let bad: Vec<usize> = rep.points.iter().filter(|p| p.non_local).map(|p| p.x).collect();
    if bad.is_empty() {
        Check::of("local", true, format!("max E = {}", rep.max_e()))
    } else {
        Check::new(
            "local",
            Status::Flagged,
            format!("{} at {} of {} points", transfunctions::localization::NON_LOCAL_LABEL, bad.len(), rep.points.len()),
        )
    }
}

struct ApproxParams {
    method: ApproxMethod,
    delta: Option<f64>,
    eps: Option<f64>,
    beta: Option<f64>,
    delta_min: Option<f64>,
}

fn map_checks(phi: &Transfunction, f: &PiecewiseMap, eps: f64) -> Check {
    match localization_failures(phi, f, eps) {
        Ok(bad) if bad.is_empty() => Check::of("witnesses", true, format!("{} cells", f.cells().len())),
        Ok(bad) => Check::of("witnesses", false, format!("witness fails at points {bad:?}")),
        Err(e) => Check::of("witnesses", false, e.to_string()),
    }
}

fn approx(world: &World, name: &str, p: &ApproxParams, s: &Settings, files: &mut Files) -> Outcome {
    let phi = &world.transfunctions[name];
    let dm = p.delta_min.unwrap_or_else(|| phi.domain().resolution());
    let built = match p.method {
        ApproxMethod::SigmaSimple | ApproxMethod::Mollify => {
            sigma_simple_approx(phi, p.delta.unwrap_or_default(), p.eps.unwrap_or_default())
        }
        ApproxMethod::Nonuniform => nonuniform_approx(phi, p.eps.unwrap_or_default(), dm),
        ApproxMethod::Recover => recover_zero_localized(phi, dm),
    };
    let f = match built {
        Ok(f) => f,
        Err(e) => return Ok((vec![Check::of("construct", false, e.to_string())], Value::Null)),
    };
    files.write(&format!("approx_{name}.csv"), |w| f.write_csv(w))?;
    let mut checks = Vec::new();
    let mut data = json!({ "cells": f.cells().len(), "assignment": f.assignment() });
    match p.method {
        ApproxMethod::SigmaSimple | ApproxMethod::Nonuniform => {
            checks.push(map_checks(phi, &f, p.eps.unwrap_or_default()));
        }
        ApproxMethod::Mollify => {
            let (delta, eps) = (p.delta.unwrap_or_default(), p.eps.unwrap_or_default());
            checks.push(map_checks(phi, &f, eps));
            let beta = p.beta.unwrap_or(delta / 3.0);
            let g = match mollify(&f, delta, beta) {
                Ok(g) => g,
                Err(e) => {
                    checks.push(Check::of("mollify", false, e.to_string()));
                    return Ok((checks, data));
                }
            };
            files.write(&format!("mollify_{name}.csv"), |w| g.write_csv(w, phi.domain()))?;
            checks.push(match hull_failures(&f, &g) {
                Ok(bad) => Check::of("convex_hull", bad.is_empty(), format!("failures at {bad:?}")),
                Err(e) => Check::of("convex_hull", false, e.to_string()),
            });
            checks.push(match check_lipschitz(&f, &g) {
                Ok(r) => Check::of(
                    "lipschitz",
                    r.violation.is_none(),
                    format!("{} pairs, worst ratio {}", r.pairs, r.worst_ratio),
                ),
                Err(e) => Check::of("lipschitz", false, e.to_string()),
            });
            checks.push(match snapped_failures(phi, &g, eps) {
                Ok(bad) => Check::of("snapped", bad.is_empty(), format!("failures at {bad:?}")),
                Err(e) => Check::of("snapped", false, e.to_string()),
            });
            data["beta"] = json!(beta);
        }
        ApproxMethod::Recover => {
            let mut rng = s.rng();
            checks.push(match verify_pushforward_equal(phi, &f, s.trials, &mut rng) {
                Ok(r) => Check::sampled("pushforward_equal", &r),
                Err(e) => Check::of("pushforward_equal", false, e.to_string()),
            });
        }
    }
    Ok((checks, data))
}

fn graphs(world: &World, graph: &str, name: &str, files: &mut Files) -> Outcome {
    let g = &world.graphs[graph];
    let phi = &world.transfunctions[name];
    files.write(&format!("graph_{graph}.csv"), |w| g.write_csv(w))?;
    let check = match carries(g, phi, &[]) {
        Ok(r) => match &r.violation {
            None => Check::of("carries", true, format!("{} rectangles", r.rectangles)),
            Some(v) => Check::of("carries", false, format!("{}: mass from {} lands at {}", v.label, v.p, v.q)),
        },
        Err(e) => Check::of("carries", false, e.to_string()),
    };
    Ok((vec![check], json!({ "pairs": g.len(), "transfunction": name })))
}

/// Largest enumeration for the exhaustive subset relation.
const EXHAUSTIVE_BITS: usize = 16;

fn markov(world: &World, name: &str, cost: Option<CostDef>, s: &Settings, files: &mut Files) -> Outcome {
    let t = &world.markov[name];
    files.write(&format!("markov_{name}.csv"), |w| t.write_csv(w))?;
    if let Err(e) = t.validate() {
        return Ok((vec![Check::of("markov_invariants", false, e.to_string())], Value::Null));
    }
    let mut checks = vec![Check::of("markov_invariants", true, format!("{} x {}", t.y_len(), t.x_len()))];
    let phi = match markov_to_transfunction(t) {
        Ok(p) => p,
        Err(e) => {
            checks.push(Check::of("to_transfunction", false, e.to_string()));
            return Ok((checks, Value::Null));
        }
    };
    checks.push(match transfunction_to_markov(&phi, t.mu(), t.nu()) {
        Ok(back) => {
            let err = max_entry_diff(t, &back);
            Check::of("roundtrip", err <= EXACT_TOL, format!("max entry difference {err:e}"))
        }
        Err(e) => Check::of("roundtrip", false, e.to_string()),
    });
    let plan = match plan_from_markov(t) {
        Ok(p) => p,
        Err(e) => {
            checks.push(Check::of("plan", false, e.to_string()));
            return Ok((checks, Value::Null));
        }
    };
    files.write(&format!("plan_{name}.csv"), |w| plan.write_csv(w))?;
    let (xm, ym) = plan.marginals();
    let merr = xm
        .iter()
        .zip(t.mu().weights())
        .chain(ym.iter().zip(t.nu().weights()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(Check::of("plan_marginals", merr <= EXACT_TOL, format!("max deviation {merr:e}")));

    let (nx, ny) = (t.x_len(), t.y_len());
    let mut rng = s.rng();
    let pairs: Vec<(PointSet, PointSet)> = if nx + ny <= EXHAUSTIVE_BITS {
        let all = |n: usize| (0u32..1 << n).map(move |m| PointSet::from_mask(&(0..n).map(|i| m >> i & 1 == 1).collect::<Vec<_>>()));
        all(nx).flat_map(|a| all(ny).map(move |b| (a.clone(), b))).collect()
    } else {
        (0..s.trials).map(|_| (random_subset(nx, &mut rng), random_subset(ny, &mut rng))).collect()
    };
    let mut rerr = 0.0f64;
    for (a, b) in &pairs {
        match project(t.mu(), a).and_then(|m| phi.apply(&m)) {
            Ok(img) => rerr = rerr.max((img.mass_of(b) - plan.mass(a, b)).abs()),
            Err(e) => {
                checks.push(Check::of("plan_relation", false, e.to_string()));
                return Ok((checks, Value::Null));
            }
        }
    }
    checks.push(Check::of(
        "plan_relation",
        rerr <= EXACT_TOL,
        format!("{} subset pairs, max deviation {rerr:e}", pairs.len()),
    ));

    let mut data = json!({ "x": nx, "y": ny });
    if let Some(CostDef::Distance) = cost {
        let c = distance_cost(t.mu().space(), t.nu().space());
        match mk_cost(&plan, &c) {
            Ok(v) => data["mk_cost"] = json!(v),
            Err(e) => checks.push(Check::of("mk_cost", false, e.to_string())),
        }
    }
    Ok((checks, data))
}

fn max_entry_diff(a: &MarkovMatrix, b: &MarkovMatrix) -> f64 {
    let mut err = 0.0f64;
    for y in 0..a.y_len() {
        for x in 0..a.x_len() {
            err = err.max((a.entry(y, x) - b.entry(y, x)).abs());
        }
    }
    err
}

fn popdyn(m: &Model, name: &str, files: &mut Files) -> Outcome {
    let traj = match m.model.simulate(&m.initial, m.steps) {
        Ok(t) => t,
        Err(e) => return Ok((vec![Check::of("simulate", false, e.to_string())], Value::Null)),
    };
    files.write(&format!("trajectory_{name}.csv"), |w| traj.write_csv(w))?;
    files.write(&format!("mass_{name}.csv"), |w| traj.write_summary_csv(w))?;
    let mut checks = Vec::new();
    let g = m.model.growth();
    let closed = matches!(m.model.transfunction().kind(), Kind::DensityScale { .. })
        && (m.model.kernel().mass() - 1.0).abs() <= EXACT_TOL
        && clamped(m.model.transfunction());
    if closed && g.iter().all(|&r| r == g[0]) {
        let r = g[0];
        let m0 = traj.masses[0];
        if r == 1.0 {
            let drift = traj.masses.iter().map(|v| (v - m0).abs()).fold(0.0, f64::max);
            checks.push(Check::of("mass_conserved", drift <= DRIFT_TOL, format!("drift {drift:e}")));
        } else {
            let worst = traj
                .masses
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let want = r.powi(k as i32) * m0;
                    if want == 0.0 { v.abs() } else { (v - want).abs() / want }
                })
                .fold(0.0, f64::max);
            checks.push(Check::of("geometric_growth", worst <= GROWTH_RTOL, format!("worst relative error {worst:e}")));
        }
    }
    Ok((checks, json!({ "steps": m.steps, "masses": traj.masses })))
}

fn clamped(phi: &Transfunction) -> bool {
    fn walk(k: &Kind) -> bool {
        match k {
            Kind::Convolution { boundary, .. } => *boundary == Boundary::Clamp,
            Kind::DensityScale { inner, .. } => walk(inner.kind()),
            Kind::Composition(parts) => parts.iter().all(|p| walk(p.kind())),
            _ => true,
        }
    }
    walk(phi.kind())
}

/// Invariant suite over every object in the scenario.
pub fn object_checks(world: &World, s: &Settings) -> Vec<AnalysisReport> {
    let mut out = Vec::new();
    for (name, sp) in &world.spaces {
        let check = match sp.check_metric_axioms() {
            Ok(()) => Check::of("metric_axioms", true, format!("{} points, resolution {}", sp.len(), sp.resolution())),
            Err(e) => Check::of("metric_axioms", false, e.to_string()),
        };
        out.push(object_report("space", name, vec![check]));
    }
    for (name, phi) in &world.transfunctions {
        let mut checks = Vec::new();
        let mut rng = s.rng();
        let flag = phi.additivity();
        match (flag, check_weak_sigma_additive(phi, s.trials, &mut rng)) {
            (_, Ok(r)) if r.all_passed() => checks.push(Check::sampled("weak_sigma_additive", &r)),
            (Additivity::Strong, Ok(r)) => checks.push(Check::sampled("weak_sigma_additive", &r)),
            (_, Ok(r)) => checks.push(Check::new("weak_sigma_additive", Status::Flagged, sampled_detail(&r))),
            (_, Err(e)) => checks.push(Check::of("weak_sigma_additive", false, e.to_string())),
        }
        match (flag, check_strong_sigma_additive(phi, s.trials, &mut rng)) {
            (_, Ok(r)) if r.all_passed() => checks.push(Check::sampled("strong_sigma_additive", &r)),
            (Additivity::Strong, Ok(r)) => checks.push(Check::sampled("strong_sigma_additive", &r)),
            (_, Ok(r)) => checks.push(Check::new("strong_sigma_additive", Status::Flagged, sampled_detail(&r))),
            (_, Err(e)) => checks.push(Check::of("strong_sigma_additive", false, e.to_string())),
        }
        if let Kind::Convolution { kernel, boundary: Boundary::Clamp } = phi.kind() {
            if (kernel.mass() - 1.0).abs() <= EXACT_TOL {
                checks.push(match check_norm_preserving(phi, s.trials, &mut rng) {
                    Ok(r) => Check::sampled("norm_preserving", &r),
                    Err(e) => Check::of("norm_preserving", false, e.to_string()),
                });
            }
        }
        let dm = s.delta_min.unwrap_or_else(|| phi.domain().resolution());
        match localization_report(phi, dm, None) {
            Ok(rep) => {
                checks.push(non_local_check(&rep));
                if rep.label.is_some() {
                    checks.push(Check::new("additivity_label", Status::Flagged, LOWER_BOUND_LABEL));
                }
            }
            Err(e) => checks.push(Check::of("local", false, e.to_string())),
        }
        if let Kind::GraphInduced { graph, .. } = phi.kind() {
            checks.push(match carries(graph, phi, &[]) {
                Ok(r) => Check::of("carried_by_own_graph", r.passed(), format!("{} rectangles", r.rectangles)),
                Err(e) => Check::of("carried_by_own_graph", false, e.to_string()),
            });
        }
        out.push(object_report("transfunction", name, checks));
    }
    for (name, t) in &world.markov {
        let check = match t.validate() {
            Ok(()) => Check::of("markov_invariants", true, format!("{} x {}", t.y_len(), t.x_len())),
            Err(e) => Check::of("markov_invariants", false, e.to_string()),
        };
        out.push(object_report("markov_matrix", name, vec![check]));
    }
    for (name, m) in &world.models {
        let mut rng = s.rng();
        let phi = m.model.transfunction();
        let additive = match check_strong_sigma_additive(phi, s.trials, &mut rng) {
            Ok(r) => Check::sampled("strong_sigma_additive", &r),
            Err(e) => Check::of("strong_sigma_additive", false, e.to_string()),
        };
        let checks = vec![additive, monotone_check(m, s.trials, &mut rng)];
        out.push(object_report("population_model", name, checks));
    }
    out
}

fn sampled_detail(r: &SampleReport) -> String {
    match &r.counterexample {
        Some(c) => format!("no additivity flag; counterexample at trial {}: {}", c.trial, c.detail),
        None => format!("{}/{} trials", r.passed, r.trials),
    }
}

fn monotone_check(m: &Model, trials: usize, rng: &mut ChaCha8Rng) -> Check {
    let s = m.model.space();
    for trial in 0..trials {
        let lo: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
        let step = |w: Vec<f64>| transfunctions::Measure::new(s, w).and_then(|mu| m.model.step(&mu));
        match (step(lo), step(hi)) {
            (Ok(a), Ok(b)) => {
                if let Some(p) = s.ids().find(|&p| a.weight(p) > b.weight(p)) {
                    return Check::of("monotone", false, format!("trial {trial}: order lost at point {p}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => return Check::of("monotone", false, e.to_string()),
        }
    }
    Check::of("monotone", true, format!("{trials}/{trials} trials"))
}

fn object_report(kind: &str, name: &str, checks: Vec<Check>) -> AnalysisReport {
    AnalysisReport { kind: kind.to_string(), target: name.to_string(), checks, files: Vec::new(), data: Value::Null }
}
