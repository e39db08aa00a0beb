//! Discrete-time population model `mu -> g · ((f_# mu) * kappa)`.

use std::io::Write;
use std::sync::Arc;

use crate::error::Result;
use crate::localization::join_coords;
use crate::measure::Measure;
use crate::space::{ensure_same, MetricSpace, PointId};
use crate::transfunction::{compose, Boundary, Kernel, Transfunction};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    space: Arc<MetricSpace>,
    migration: Vec<PointId>,
    kernel: Kernel,
    growth: Vec<f64>,
    phi: Transfunction,
}

impl PopulationModel {
    /// Migration `f` as an id map, dispersal kernel `kappa`, growth `g >= 0`.
    /// Dispersal clamps at the grid edge, so `g ≡ 1` conserves mass.
    pub fn new(space: &Arc<MetricSpace>, migration: Vec<PointId>, kernel: Kernel, growth: Vec<f64>) -> Result<Self> {
        Self::with_boundary(space, migration, kernel, growth, Boundary::Clamp)
    }

    pub fn with_boundary(
        space: &Arc<MetricSpace>,
        migration: Vec<PointId>,
        kernel: Kernel,
        growth: Vec<f64>,
        boundary: Boundary,
    ) -> Result<Self> {
        let push = Transfunction::pushforward(space, space, migration.clone())?;
        let conv = Transfunction::convolution(space, kernel.clone(), boundary)?;
        let phi = Transfunction::density_scale(compose(&push, &conv)?, growth.clone())?;
        Ok(PopulationModel { space: space.clone(), migration, kernel, growth, phi })
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    pub fn migration(&self) -> &[PointId] {
        &self.migration
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn growth(&self) -> &[f64] {
        &self.growth
    }

    /// The one-step map as a transfunction.
    pub fn transfunction(&self) -> &Transfunction {
        &self.phi
    }

    pub fn step(&self, mu: &Measure) -> Result<Measure> {
        ensure_same(&self.space, mu.space(), "population measure is not on the model grid")?;
        self.phi.apply(mu)
    }

    pub fn simulate(&self, mu0: &Measure, steps: usize) -> Result<Trajectory> {
        let mut measures = Vec::with_capacity(steps + 1);
        let mut cur = mu0.clone();
        cur.require_nonnegative()?;
        for _ in 0..steps {
            let next = self.step(&cur)?;
            measures.push(cur);
            cur = next;
        }
        measures.push(cur);
        let masses = measures.iter().map(Measure::total).collect();
        Ok(Trajectory { measures, masses })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub measures: Vec<Measure>,
    pub masses: Vec<f64>,
}

impl Trajectory {
    /// CSV with header `step,x,coords,weight`; zero weights are skipped.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "x", "coords", "weight"])?;
        for (k, m) in self.measures.iter().enumerate() {
            for (p, v) in m.entries() {
                out.write_record([k.to_string(), p.to_string(), join_coords(m.space().coords(p)), v.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// CSV with header `step,total_mass`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "total_mass"])?;
        for (k, m) in self.masses.iter().enumerate() {
            out.write_record([k.to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
