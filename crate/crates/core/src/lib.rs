//! Transfunctions on finite metric point clouds.
//!
//! A transfunction maps finite measures on a space `X` to finite measures on a
//! space `Y`. Push-forwards `f_#` of point maps are the motivating case; this
//! crate works with the wider class (convolutions, projections, Markov
//! operators, graph-induced maps, ...) and with the tools that relate it back
//! to point maps: localization, approximation, graph carriers, and the
//! Markov/transport-plan correspondence.
//!
//! ```
//! use transfunctions::{Measure, MetricSpace, Transfunction};
//!
//! let x = MetricSpace::line(-1.0, 1.0, 0.1).unwrap();
//! let h = Transfunction::pushforward_fn(&x, &x, |c| vec![if c[0] < 0.0 { 0.0 } else { 1.0 }]).unwrap();
//! let out = h.apply(&Measure::uniform(&x, 1.0).unwrap()).unwrap();
//! assert_eq!(out.weight(x.nearest_point(&[0.0])), 10.0);
//! assert_eq!(out.weight(x.nearest_point(&[1.0])), 11.0);
//! ```

// `!(x > 0.0)` guards reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approximation;
pub mod error;
pub mod graphs;
pub mod localization;
pub mod markov;
pub mod measure;
pub mod popdyn;
pub mod space;
pub mod transfunction;

pub use error::{Error, Result};
pub use measure::Measure;
pub use space::{GridAxis, GridSpec, MetricSpace, PointId, PointSet};
pub use transfunction::{Boundary, Kernel, Transfunction};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/spaces.md")]
mod spaces {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/transfunctions.md")]
mod transfunctions {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/localization.md")]
mod localization_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/approximation.md")]
mod approximation_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/graphs.md")]
mod graphs_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/markov.md")]
mod markov_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/popdyn.md")]
mod popdyn_chapter {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod cli_chapter {}
