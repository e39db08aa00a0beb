#![allow(dead_code)]

use std::sync::Arc;

use transfunctions::transfunction::compose;
use transfunctions::{Boundary, Kernel, MetricSpace, PointId, Transfunction};

pub const H: f64 = 0.1;

pub fn line() -> Arc<MetricSpace> {
    MetricSpace::line(-1.0, 1.0, H).unwrap()
}

pub fn at(s: &MetricSpace, x: f64) -> PointId {
    s.nearest_point(&[x])
}

pub fn heaviside(s: &Arc<MetricSpace>) -> Transfunction {
    Transfunction::pushforward_fn(s, s, |c| vec![if c[0] < 0.0 { 0.0 } else { 1.0 }]).unwrap()
}

/// `x -> Σ_{n=0}^{2} 2^n H(x - n)` from `[-1, 3]` into `[-1, 7]`.
pub fn sum_of_heavisides() -> Transfunction {
    let x = MetricSpace::line(-1.0, 3.0, H).unwrap();
    let y = MetricSpace::line(-1.0, 7.0, H).unwrap();
    Transfunction::pushforward_fn(&x, &y, |c| {
        vec![(0..3).filter(|&n| c[0] >= n as f64).map(|n| (1u32 << n) as f64).sum()]
    })
    .unwrap()
}

pub const KERNEL_RADIUS: f64 = 0.3;

pub fn kernel() -> Kernel {
    Kernel::uniform_ball(vec![H], KERNEL_RADIUS).unwrap()
}

pub fn convolution(s: &Arc<MetricSpace>) -> Transfunction {
    Transfunction::convolution(s, kernel(), Boundary::Clamp).unwrap()
}

pub type FixtureMap = (&'static str, fn(f64) -> f64);

/// The five continuous fixture maps on `[-1, 1]`, snapped to the grid.
pub fn fixture_maps() -> Vec<FixtureMap> {
    vec![
        ("identity", |x| x),
        ("reflection", |x| -x),
        ("abs", |x: f64| x.abs()),
        ("halving", |x| x / 2.0),
        ("saturating_shift", |x: f64| (x + 0.3).min(1.0)),
    ]
}

pub fn grid_map(s: &MetricSpace, f: fn(f64) -> f64) -> Vec<PointId> {
    s.ids().map(|p| s.nearest_point(&[f(s.coords(p)[0])])).collect()
}

/// `f_#` followed by the fixture convolution.
pub fn smeared(s: &Arc<MetricSpace>, map: &[PointId]) -> Transfunction {
    let push = Transfunction::pushforward(s, s, map.to_vec()).unwrap();
    compose(&push, &convolution(s)).unwrap()
}
