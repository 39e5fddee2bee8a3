//! Partitioned plate–flow stepping with an interface volume multiplier.
//!
//! Each step fixes the interface load by subiteration: the plate advances
//! under the current load guess, the flow advances on the resulting
//! geometry with the plate's midpoint velocity as kinematic datum, and the
//! flow's normal-normal traction becomes the next load guess, relaxed by
//! Aitken extrapolation until the loop is a fixed point.
//!
//! The channel is closed, so the interface velocity must carry zero net
//! volume flux or the pressure problem has no solution. A scalar multiplier
//! — a uniform load increment, the discrete shadow of the pressure's free
//! constant — is solved for in closed form inside every plate substep,
//! using the cached unit-load response, so that the trapezoid integral of
//! the midpoint velocity vanishes exactly. Volume is then conserved to
//! rounding, step by step, and the flux defect the flow solver reports
//! stays at machine zero. The multiplier also absorbs the mean-zero gauge
//! of the recovered pressure: only `load + lambda` is physical.

use crate::error::{Error, Result};
use crate::fluid::{
    fluid_step, gradient_energy, interface_load, velocity_mass, FluidParams, FluidState,
    StressForm,
};
use crate::grid::{GridSpec, PlateField, VectorField};
use crate::plate::{PlateParams, PlateState, PlateStepReport, PlateStepper};

/// Everything a coupled run needs besides the grid and the step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams {
    pub fluid: FluidParams,
    pub plate: PlateParams,
    /// Which interface traction the plate feels.
    pub stress: StressForm,
    /// Downward body acceleration on the fluid; zero for a weightless run.
    pub gravity: f64,
    /// Relative interface-load tolerance that ends the subiteration.
    pub subiter_tol: f64,
    /// Subiteration cap; exceeding it is a solver failure.
    pub subiter_max: usize,
    /// First relaxation factor; Aitken updates take over afterwards.
    pub relax_init: f64,
}

impl CouplingParams {
    pub fn validate(&self) -> Result<()> {
        self.fluid.validate()?;
        self.plate.validate()?;
        if !(self.subiter_tol > 0.0 && self.subiter_tol < 1.0) {
            return Err(Error::config("subiteration tolerance must lie in (0, 1)"));
        }
        if self.subiter_max == 0 {
            return Err(Error::config("subiteration cap must be at least 1"));
        }
        if !(self.relax_init > 0.0 && self.relax_init <= 1.0) {
            return Err(Error::config("initial relaxation must lie in (0, 1]"));
        }
        if !self.gravity.is_finite() {
            return Err(Error::config("gravity must be finite"));
        }
        Ok(())
    }
}

/// Plate, flow, the current interface-load estimate (the subiteration's
/// warm start), and the clock.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub plate: PlateState,
    pub fluid: FluidState,
    pub load: PlateField,
    pub time: f64,
}

impl CoupledState {
    pub fn rest(grid: GridSpec) -> Self {
        CoupledState {
            plate: PlateState::rest(grid),
            fluid: FluidState::rest(grid),
            load: PlateField::zeros(grid),
            time: 0.0,
        }
    }
}

/// Energy of one coupled state, split by reservoir.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBreakdown {
    pub fluid_kinetic: f64,
    pub plate_kinetic: f64,
    pub plate_elastic: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.fluid_kinetic + self.plate_kinetic + self.plate_elastic
    }
}

/// What one coupled step did: the new state plus the step's bookkeeping,
/// sized so an energy audit can run over a saved series of reports.
#[derive(Debug, Clone)]
pub struct CoupledStepReport {
    pub state: CoupledState,
    pub subiterations: usize,
    /// Interface-load update size at acceptance.
    pub load_residual: f64,
    /// The volume multiplier of the accepted substep.
    pub lambda: f64,
    /// Work the total load (including the multiplier) did on the plate.
    pub plate_load_work: f64,
    /// Work done by the external plate forcing alone; an energy input.
    pub plate_forcing_work: f64,
    pub plate_dissipated: f64,
    /// `dt * viscosity * gradient_energy` of the new velocity.
    pub fluid_dissipation: f64,
    /// Work the body acceleration did on the new velocity.
    pub body_work: f64,
    pub flux_defect: f64,
    pub post_divergence: f64,
    pub pressure_iterations: usize,
    pub cfl: f64,
    /// Energy of the new state.
    pub energy: EnergyBreakdown,
}

/// Net budget of a report series: `residual` is the energy change the
/// recorded work and dissipation fail to explain.
#[derive(Debug, Clone, Copy)]
pub struct EnergyAudit {
    pub initial: f64,
    pub final_energy: f64,
    pub injected: f64,
    pub dissipated: f64,
    pub residual: f64,
}

pub fn energy_audit(initial: f64, steps: &[CoupledStepReport]) -> EnergyAudit {
    let injected: f64 = steps.iter().map(|s| s.body_work + s.plate_forcing_work).sum();
    let dissipated: f64 = steps.iter().map(|s| s.fluid_dissipation + s.plate_dissipated).sum();
    let final_energy = steps.last().map_or(initial, |s| s.energy.total());
    EnergyAudit {
        initial,
        final_energy,
        injected,
        dissipated,
        residual: final_energy - initial - injected + dissipated,
    }
}

/// How far the flow's interface trace sits from the plate's velocity,
/// measured without touching the imposed top row: the three rows beneath
/// the interface are extrapolated to it and compared against the datum at
/// the nodes. Small in a consistent coupled run; order one when the fields
/// never talked to each other.
pub fn kinematic_residual(
    fluid: &FluidState,
    eta: &PlateField,
    datum: &PlateField,
) -> Result<f64> {
    let g = eta.grid;
    if fluid.v.grid() != g || datum.grid != g {
        return Err(Error::shape("kinematic residual needs one shared grid"));
    }
    let ny = g.ny;
    let vt = |ic: usize| {
        3.0 * fluid.v.v.at(ic, ny - 1) - 3.0 * fluid.v.v.at(ic, ny - 2) + fluid.v.v.at(ic, ny - 3)
    };
    let mut worst = 0.0f64;
    for i in 1..g.nx {
        let recon = 0.5 * (vt(i - 1) + vt(i));
        worst = worst.max((recon - datum.at(i)).abs());
    }
    Ok(worst)
}

/// The step driver: a factored plate solver, the coupling parameters, and
/// the frozen body-force field.
pub struct Coupler {
    plate: PlateStepper,
    params: CouplingParams,
    gravity: Option<VectorField>,
}

impl Coupler {
    pub fn new(grid: GridSpec, params: &CouplingParams, dt: f64) -> Result<Self> {
        params.validate()?;
        let plate = PlateStepper::new(grid, &params.plate, dt)?;
        let gravity = if params.gravity != 0.0 {
            let grav = params.gravity;
            Some(VectorField::from_fn(grid, |_, _| 0.0, move |_, _| -grav))
        } else {
            None
        };
        Ok(Coupler {
            plate,
            params: *params,
            gravity,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.plate.grid()
    }

    pub fn dt(&self) -> f64 {
        self.plate.dt()
    }

    pub fn params(&self) -> &CouplingParams {
        &self.params
    }

    pub fn plate_stepper(&self) -> &PlateStepper {
        &self.plate
    }

    pub fn energy(&self, state: &CoupledState) -> Result<EnergyBreakdown> {
        let pk = {
            let n = state.plate.w.l2_norm();
            0.5 * self.params.plate.mass * n * n
        };
        let pe = self.plate.energy(&state.plate) - pk;
        let fk = {
            let n = state.fluid.v.l2_norm(&state.plate.eta)?;
            0.5 * self.params.fluid.density * n * n
        };
        Ok(EnergyBreakdown {
            fluid_kinetic: fk,
            plate_kinetic: pk,
            plate_elastic: pe,
        })
    }

    /// Advance the plate under `load` (plus any external forcing) plus the
    /// uniform increment that makes the midpoint velocity volume-neutral,
    /// so the flow substep downstream is solvable. Closed form via the
    /// cached unit-load response.
    fn plate_substep(
        &self,
        plate: &PlateState,
        load: &PlateField,
        forcing: Option<&PlateField>,
        time: f64,
    ) -> Result<(PlateStepReport, f64, PlateField)> {
        let mut eff = load.clone();
        if let Some(g) = forcing {
            eff.axpy(1.0, g)?;
        }
        let trial = self.plate.step(plate, &eff, time)?;
        let mut w_half = plate.w.clone();
        w_half.axpy(1.0, &trial.state.w)?;
        w_half.scale(0.5);
        let drift = w_half.integral();
        let unit_half = 0.5 * self.plate.unit_load_velocity().integral();
        let lambda = -drift / unit_half;

        for v in eff.values_mut() {
            *v += lambda;
        }
        let rep = self.plate.step(plate, &eff, time)?;
        let mut w_half = plate.w.clone();
        w_half.axpy(1.0, &rep.state.w)?;
        w_half.scale(0.5);
        Ok((rep, lambda, w_half))
    }

    pub fn step(&self, state: &CoupledState) -> Result<CoupledStepReport> {
        self.step_forced(state, None)
    }

    /// One step with an external load density applied to the plate on top
    /// of whatever the flow exerts through the interface.
    pub fn step_forced(
        &self,
        state: &CoupledState,
        forcing: Option<&PlateField>,
    ) -> Result<CoupledStepReport> {
        let dt = self.plate.dt();
        let time = state.time + dt;
        let mut load = state.load.clone();
        let mut omega = self.params.relax_init;
        let mut r_prev: Option<PlateField> = None;

        for k in 0..self.params.subiter_max {
            let (plate_rep, lambda, w_half) =
                self.plate_substep(&state.plate, &load, forcing, time)?;
            let eta_new = &plate_rep.state.eta;
            let fluid_rep = fluid_step(
                &state.fluid,
                eta_new,
                &w_half,
                self.gravity.as_ref(),
                &self.params.fluid,
                dt,
            )?;
            let f_new = interface_load(&fluid_rep.state, eta_new, &self.params.fluid, self.params.stress)?;

            let mut r = f_new.clone();
            r.axpy(-1.0, &load)?;
            let rnorm = r.linf();
            if rnorm <= self.params.subiter_tol * (1.0 + f_new.linf()) {
                let fluid_dissipation =
                    dt * self.params.fluid.viscosity * gradient_energy(&fluid_rep.state.v, eta_new)?;
                let plate_forcing_work = match forcing {
                    None => 0.0,
                    Some(gf) => {
                        let g = self.plate.grid();
                        let mut acc = 0.0;
                        for i in 0..=g.nx {
                            acc += g.node_weight(i) * gf.at(i) * w_half.at(i);
                        }
                        dt * acc
                    }
                };
                let body_work = match &self.gravity {
                    None => 0.0,
                    Some(b) => {
                        let mass = velocity_mass(eta_new)?;
                        let mut acc = 0.0;
                        for ((m, f), v) in mass
                            .u
                            .values()
                            .iter()
                            .zip(b.u.values())
                            .zip(fluid_rep.state.v.u.values())
                        {
                            acc += m * f * v;
                        }
                        for ((m, f), v) in mass
                            .v
                            .values()
                            .iter()
                            .zip(b.v.values())
                            .zip(fluid_rep.state.v.v.values())
                        {
                            acc += m * f * v;
                        }
                        dt * self.params.fluid.density * acc
                    }
                };
                let next = CoupledState {
                    plate: plate_rep.state,
                    fluid: fluid_rep.state,
                    load: f_new,
                    time,
                };
                let energy = self.energy(&next)?;
                return Ok(CoupledStepReport {
                    state: next,
                    subiterations: k + 1,
                    load_residual: rnorm,
                    lambda,
                    plate_load_work: plate_rep.load_work,
                    plate_forcing_work,
                    plate_dissipated: plate_rep.dissipated,
                    fluid_dissipation,
                    body_work,
                    flux_defect: fluid_rep.flux_defect,
                    post_divergence: fluid_rep.post_divergence,
                    pressure_iterations: fluid_rep.pressure.iterations,
                    cfl: fluid_rep.cfl,
                    energy,
                });
            }

            if let Some(rp) = &r_prev {
                let mut num = 0.0;
                let mut den = 0.0;
                for (a, b) in rp.values().iter().zip(r.values()) {
                    let d = b - a;
                    num += a * d;
                    den += d * d;
                }
                if den > 0.0 {
                    omega = (-omega * num / den).clamp(0.05, 1.0);
                }
            }
            load.axpy(omega, &r)?;
            r_prev = Some(r);
        }
        Err(Error::Solver {
            context: "interface load subiterations".into(),
            residual: r_prev.map_or(f64::INFINITY, |r| r.linf()),
            iterations: self.params.subiter_max,
            tolerance: self.params.subiter_tol,
        })
    }
}
