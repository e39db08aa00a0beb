mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use transfunctions::approximation::{
    check_lipschitz, localization_failures, mollify, recover_zero_localized, sigma_simple_approx,
    verify_pushforward_equal, zero_band, PiecewiseMap,
};
use transfunctions::graphs::{carries, fat_graph, graph_transfunction, GraphCarrier};
use transfunctions::localization::{candidate_deltas, estimate_e, is_localized_at, Prober};
use transfunctions::markov::{
    b_mu, b_mu_inv, markov_to_transfunction, plan_from_markov, random_markov, transfunction_to_markov,
};
use transfunctions::measure::{is_carried, project};
use transfunctions::popdyn::PopulationModel;
use transfunctions::space::{chebyshev, greedy_cover};
use transfunctions::transfunction::{check_strong_sigma_additive, check_weak_sigma_additive, support_and_null};
use transfunctions::{Boundary, Kernel, Measure, MetricSpace, PointId, PointSet, Transfunction};

fn close(a: &Measure, b: &Measure, tol: f64) -> bool {
    a.weights().iter().zip(b.weights()).all(|(x, y)| (x - y).abs() <= tol)
}

fn space_of(n: usize) -> Arc<MetricSpace> {
    MetricSpace::line(0.0, (n - 1) as f64, 1.0).unwrap()
}

fn set_from(mask: &[bool]) -> PointSet {
    PointSet::from_mask(mask)
}

/// Weights with roughly a third of the entries exactly zero.
fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 2 => 0.0..4.0f64], n)
}

fn sized_measure_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (1usize..=12).prop_flat_map(|n| (weights(n), prop::collection::vec(any::<bool>(), n)))
}

/// A grid map on the 21-point line that moves by at most one step between neighbours.
fn lipschitz_walk() -> impl Strategy<Value = Vec<PointId>> {
    (0usize..21, prop::collection::vec(-1i64..=1, 20)).prop_map(|(start, steps)| {
        let mut cur = start as i64;
        let mut out = vec![start];
        for s in steps {
            cur = (cur + s).clamp(0, 20);
            out.push(cur as PointId);
        }
        out
    })
}

fn any_map(n: usize) -> impl Strategy<Value = Vec<PointId>> {
    prop::collection::vec(0..n, n)
}

// space

proptest! {
    #[test]
    fn ball_is_monotone(x in 0usize..21, r1 in 0.0..2.5f64, extra in 0.0..1.0f64) {
        let s = line();
        let r2 = r1 + extra;
        prop_assert!(s.ball(x, r1).unwrap().is_subset(&s.ball(x, r2).unwrap()));
        prop_assert!(s.closed_ball(x, r1).unwrap().is_subset(&s.closed_ball(x, r2).unwrap()));
    }

    #[test]
    fn greedy_cover_is_sound(r in 0.05..2.5f64) {
        let s = line();
        let mut covered = s.empty_set();
        for c in greedy_cover(&s, r).unwrap() {
            covered = covered.union(&s.ball(c, r).unwrap());
        }
        prop_assert_eq!(covered, s.full());
    }

    #[test]
    fn chebyshev_radius_bounds(mask in prop::collection::vec(any::<bool>(), 21)) {
        let s = line();
        let set = set_from(&mask);
        prop_assume!(!set.is_empty());
        let (_, r) = chebyshev(&s, &set, &s.full()).unwrap();
        prop_assert_eq!(r == 0.0, set.len() == 1);
        prop_assert!(r <= s.set_diameter(&set) + s.tol());
    }
}

// measure

proptest! {
    #[test]
    fn projection_is_idempotent_and_splits((w, mask) in sized_measure_and_mask()) {
        let s = space_of(w.len());
        let mu = Measure::new(&s, w).unwrap();
        let a = set_from(&mask);
        let p = project(&mu, &a).unwrap();
        prop_assert_eq!(project(&p, &a).unwrap(), p.clone());
        prop_assert_eq!(p.add(&project(&mu, &a.complement()).unwrap()).unwrap(), mu);
    }

    #[test]
    fn carriers_are_upward_closed((w, mask) in sized_measure_and_mask(), grow in prop::collection::vec(any::<bool>(), 12)) {
        let s = space_of(w.len());
        let mu = Measure::new(&s, w).unwrap();
        let a = set_from(&mask).union(&mu.support());
        let b = a.union(&set_from(&grow[..s.len()]));
        prop_assert!(is_carried(&mu, &a).unwrap());
        prop_assert!(is_carried(&mu, &b).unwrap());
    }

    #[test]
    fn dominated_measures_share_carriers((w, mask) in sized_measure_and_mask(), f in prop::collection::vec(0.0..=1.0f64, 12)) {
        let s = space_of(w.len());
        let nu = Measure::new(&s, w.clone()).unwrap();
        let mu = Measure::new(&s, w.iter().zip(&f).map(|(a, b)| a * b).collect()).unwrap();
        let a = set_from(&mask);
        if is_carried(&nu, &a).unwrap() {
            prop_assert!(is_carried(&mu, &a).unwrap());
        }
    }

    #[test]
    fn nonempty_sets_carry_their_indicator(mask in prop::collection::vec(any::<bool>(), 1..=12)) {
        let s = space_of(mask.len());
        let a = set_from(&mask);
        prop_assume!(!a.is_empty());
        let m = Measure::indicator(&s, &a).unwrap();
        prop_assert!(!m.is_zero());
        prop_assert!(is_carried(&m, &a).unwrap());
    }
}

// transfunction

proptest! {
    #[test]
    fn pushforward_carrier_law(map in any_map(10), w in weights(10), mask in prop::collection::vec(any::<bool>(), 10)) {
        let s = space_of(10);
        let phi = Transfunction::pushforward(&s, &s, map.clone()).unwrap();
        let mu = Measure::new(&s, w).unwrap();
        let a = set_from(&mask);
        let pre = set_from(&map.iter().map(|&q| a.contains(q)).collect::<Vec<_>>());
        prop_assert_eq!(is_carried(&mu, &pre).unwrap(), is_carried(&phi.apply(&mu).unwrap(), &a).unwrap());
    }

    #[test]
    fn restriction_identities(map in any_map(10), g in prop::collection::vec(prop_oneof![Just(0.0), 0.5..2.0f64], 10), w in weights(10)) {
        let s = space_of(10);
        let push = Transfunction::pushforward(&s, &s, map).unwrap();
        let phi = Transfunction::density_scale(push, g).unwrap();
        let (supp, null) = support_and_null(&phi).unwrap();
        let mu = Measure::new(&s, w).unwrap();
        prop_assert!(close(&phi.apply(&project(&mu, &supp).unwrap()).unwrap(), &phi.apply(&mu).unwrap(), 1e-12));
        prop_assert!(phi.apply(&project(&mu, &null).unwrap()).unwrap().is_zero());
    }
}

// localization

fn fixture_transfunctions() -> Vec<(&'static str, Transfunction)> {
    let s = line();
    let mut out = vec![
        ("heaviside", heaviside(&s)),
        ("sum_of_heavisides", sum_of_heavisides()),
        ("convolution", convolution(&s)),
    ];
    for (name, f) in fixture_maps() {
        out.push((name, smeared(&s, &grid_map(&s, f))));
    }
    out
}

#[test]
fn e_is_upper_semicontinuous_on_fixtures() {
    for (name, phi) in fixture_transfunctions() {
        let x = phi.domain().clone();
        let rep = estimate_e(&phi, H).unwrap();
        for r in &rep.points {
            for xp in x.ball(r.x, r.delta / 2.0).unwrap().iter() {
                assert!(rep.e_at(xp) <= r.e_est + H + 1e-12, "{name}: E({xp}) > E({}) + h", r.x);
            }
        }
    }
}

proptest! {
    #[test]
    fn localization_is_monotone(walk in lipschitz_walk(), x in 0usize..21, di in 0usize..6, dj in 0usize..6, eps in 0.0..1.0f64, extra in 0.0..0.5f64) {
        let s = line();
        let phi = smeared(&s, &walk);
        let deltas = candidate_deltas(&s, H);
        let (d_small, d_big) = (deltas[di.min(dj)], deltas[di.max(dj)]);
        if is_localized_at(&phi, x, d_big, eps).unwrap().is_some() {
            prop_assert!(is_localized_at(&phi, x, d_small, eps + extra).unwrap().is_some());
        }
    }

    #[test]
    fn vanishing_near_x_gives_zero_e(map in any_map(21), zeros in 0usize..21, width in 1usize..5) {
        let s = line();
        let lo = zeros.saturating_sub(width);
        let hi = (zeros + width).min(20);
        // kill every output reachable from the closed δ_min ball around `zeros`
        let dead: Vec<PointId> = (lo..=hi).map(|p| map[p]).collect();
        let g = (0..21).map(|q| if dead.contains(&q) { 0.0 } else { 1.0 }).collect();
        let phi = Transfunction::density_scale(Transfunction::pushforward(&s, &s, map).unwrap(), g).unwrap();
        let rep = estimate_e(&phi, H).unwrap();
        prop_assert_eq!(rep.e_at(zeros), 0.0);
    }

    #[test]
    fn e_is_upper_semicontinuous_on_walks(walk in lipschitz_walk()) {
        let s = line();
        let rep = estimate_e(&smeared(&s, &walk), H).unwrap();
        for r in &rep.points {
            for xp in s.ball(r.x, r.delta / 2.0).unwrap().iter() {
                prop_assert!(rep.e_at(xp) <= r.e_est + H + 1e-12);
            }
        }
    }
}

// approximation

proptest! {
    #[test]
    fn sigma_simple_meets_its_predicate(walk in lipschitz_walk(), k in 1usize..4, e in 0usize..6) {
        let s = line();
        let phi = smeared(&s, &walk);
        let delta = 3.0 * k as f64 * H;
        let eps = e as f64 * H + KERNEL_RADIUS;
        if let Ok(f) = sigma_simple_approx(&phi, delta, eps) {
            prop_assert!(localization_failures(&phi, &f, eps).unwrap().is_empty());
        }
    }

    #[test]
    fn sigma_simple_succeeds_on_convolution(k in 1usize..4) {
        let s = line();
        let delta = 3.0 * k as f64 * H;
        let eps = delta + KERNEL_RADIUS;
        prop_assert!(sigma_simple_approx(&convolution(&s), delta, eps).is_ok());
    }

    #[test]
    fn mollified_map_is_lipschitz(walk in lipschitz_walk(), k in 1usize..4, b in 1usize..4) {
        let s = line();
        let delta = 3.0 * k as f64 * H;
        let beta = b.min(k) as f64 * H;
        let f = PiecewiseMap::from_map(&s, &s, &walk).unwrap();
        let g = mollify(&f, delta, beta).unwrap();
        prop_assert!(check_lipschitz(&f, &g).unwrap().violation.is_none());
    }

    #[test]
    fn recovery_roundtrips_lipschitz_walks(walk in lipschitz_walk()) {
        let s = line();
        let phi = Transfunction::pushforward(&s, &s, walk.clone()).unwrap();
        let f = recover_zero_localized(&phi, H).unwrap();
        prop_assert_eq!(f.assignment(), &walk[..]);
    }

    #[test]
    fn recovery_band_is_narrow(map in any_map(21), x in 0usize..21) {
        let s = line();
        let phi = Transfunction::pushforward(&s, &s, map).unwrap();
        let probe = Prober::new(&phi).unwrap().probe(x, H).unwrap();
        let band = zero_band(&s, &probe);
        for &a in &band {
            for &b in &band {
                prop_assert!(s.dist(a, b) <= 3.0 * H + s.tol());
            }
        }
    }

    #[test]
    fn pushforwards_verify_against_their_map(map in any_map(21), seed in any::<u64>()) {
        let s = line();
        let phi = Transfunction::pushforward(&s, &s, map.clone()).unwrap();
        let f = PiecewiseMap::from_map(&s, &s, &map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(verify_pushforward_equal(&phi, &f, 20, &mut rng).unwrap().all_passed());
    }
}

// graphs

proptest! {
    #[test]
    fn fat_graphs_localize_smeared_walks(walk in lipschitz_walk()) {
        let s = line();
        let phi = smeared(&s, &walk);
        let eps = KERNEL_RADIUS;
        prop_assert!(carries(&fat_graph(&s, &s, &walk, eps).unwrap(), &phi, &[]).unwrap().passed());
        prop_assert!(estimate_e(&phi, H).unwrap().max_e() <= eps + 2.0 * H + 1e-12);
    }

    #[test]
    fn graph_transfunction_is_linear(
        rel in prop::collection::vec(any::<bool>(), 64),
        l1 in weights(8), l2 in weights(8), m1 in weights(8), m2 in weights(8),
        a in 0.0..3.0f64, b in 0.0..3.0f64,
    ) {
        let s = space_of(8);
        let g = GraphCarrier::from_fn(&s, &s, |p, q| rel[p * 8 + q]);
        let lam1 = Measure::new(&s, l1).unwrap();
        let lam2 = Measure::new(&s, l2).unwrap();
        let mix = lam1.scale(a).add(&lam2.scale(b)).unwrap();
        let (g1, g2, gm) = (
            graph_transfunction(&g, &lam1).unwrap(),
            graph_transfunction(&g, &lam2).unwrap(),
            graph_transfunction(&g, &mix).unwrap(),
        );
        let mu1 = Measure::new(&s, m1).unwrap();
        let mu2 = Measure::new(&s, m2).unwrap();
        let lhs = gm.apply(&mu1).unwrap();
        let rhs = g1.apply(&mu1).unwrap().scale(a).add(&g2.apply(&mu1).unwrap().scale(b)).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-9));
        let sum = gm.apply(&mu1.add(&mu2).unwrap()).unwrap();
        prop_assert!(close(&sum, &lhs.add(&gm.apply(&mu2).unwrap()).unwrap(), 1e-9));
    }
}

// markov

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1..1.0f64, n).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.into_iter().map(|v| v / t).collect()
    })
}

proptest! {
    #[test]
    fn b_mu_is_an_isometry(mu in positive(7), f in prop::collection::vec(-3.0..3.0f64, 7)) {
        let s = space_of(7);
        let mu = Measure::new(&s, mu).unwrap();
        let rho = b_mu(&f, &mu).unwrap();
        let l1: f64 = f.iter().zip(mu.weights()).map(|(a, m)| a.abs() * m).sum();
        prop_assert!((rho.norm() - l1).abs() <= 1e-12);
        let back = b_mu_inv(&rho, &mu).unwrap();
        prop_assert!(back.iter().zip(&f).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn markov_triangle_closes((nx, ny) in (1usize..=6, 1usize..=6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (space_of(nx), space_of(ny));
        let mu = Measure::new(&x, vec![1.0 / nx as f64; nx]).unwrap();
        let nu = Measure::new(&y, vec![1.0 / ny as f64; ny]).unwrap();
        let t = random_markov(&mu, &nu, 30, &mut rng).unwrap();
        let phi = markov_to_transfunction(&t).unwrap();
        let back = transfunction_to_markov(&phi, &mu, &nu).unwrap();
        for j in 0..ny {
            for i in 0..nx {
                prop_assert!((back.entry(j, i) - t.entry(j, i)).abs() <= 1e-12);
            }
        }
        let (xm, ym) = plan_from_markov(&t).unwrap().marginals();
        prop_assert!(xm.iter().zip(mu.weights()).all(|(a, b)| (a - b).abs() <= 1e-12));
        prop_assert!(ym.iter().zip(nu.weights()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn rebased_plans_follow_the_same_instructions(mu in positive(5), mu2 in positive(5), seed in any::<u64>(), w in weights(5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = space_of(5);
        let y = space_of(4);
        let mu = Measure::new(&x, mu).unwrap();
        let nu = Measure::new(&y, vec![0.25; 4]).unwrap();
        let phi = markov_to_transfunction(&random_markov(&mu, &nu, 30, &mut rng).unwrap()).unwrap();

        let mu2 = Measure::new(&x, mu2).unwrap();
        let nu2 = phi.apply(&mu2).unwrap();
        prop_assume!(nu2.weights().iter().all(|&v| v > 0.0));
        let t2 = transfunction_to_markov(&phi, &mu2, &nu2).unwrap();
        let (xm, ym) = plan_from_markov(&t2).unwrap().marginals();
        prop_assert!(xm.iter().zip(mu2.weights()).all(|(a, b)| (a - b).abs() <= 1e-12));
        prop_assert!(ym.iter().zip(nu2.weights()).all(|(a, b)| (a - b).abs() <= 1e-12));

        let probe = Measure::new(&x, w).unwrap();
        let via = markov_to_transfunction(&t2).unwrap().apply(&probe).unwrap();
        prop_assert!(close(&via, &phi.apply(&probe).unwrap(), 1e-12));
    }
}

// popdyn

fn model(walk: Vec<PointId>, growth: Vec<f64>) -> PopulationModel {
    let s = line();
    PopulationModel::new(&s, walk, kernel(), growth).unwrap()
}

proptest! {
    #[test]
    fn population_step_is_additive(walk in lipschitz_walk(), g in prop::collection::vec(0.0..2.0f64, 21), seed in any::<u64>()) {
        let m = model(walk, g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(check_weak_sigma_additive(m.transfunction(), 20, &mut rng).unwrap().all_passed());
        prop_assert!(check_strong_sigma_additive(m.transfunction(), 20, &mut rng).unwrap().all_passed());
    }

    #[test]
    fn population_step_is_monotone(walk in lipschitz_walk(), g in prop::collection::vec(0.0..2.0f64, 21), a in weights(21), b in weights(21)) {
        let m = model(walk, g);
        let s = m.space().clone();
        let lo = Measure::new(&s, a.clone()).unwrap();
        let hi = Measure::new(&s, a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap();
        let (slo, shi) = (m.step(&lo).unwrap(), m.step(&hi).unwrap());
        prop_assert!(slo.weights().iter().zip(shi.weights()).all(|(x, y)| x <= y));
    }

    #[test]
    fn dispersal_alone_is_localized(r in 1usize..5) {
        let s = line();
        let radius = r as f64 * H;
        let k = Kernel::uniform_ball(vec![H], radius + H / 2.0).unwrap();
        let m = PopulationModel::with_boundary(&s, s.ids().collect(), k, vec![1.0; 21], Boundary::Clamp).unwrap();
        prop_assert!(estimate_e(m.transfunction(), H).unwrap().max_e() <= radius + 2.0 * H + 1e-12);
    }
}
