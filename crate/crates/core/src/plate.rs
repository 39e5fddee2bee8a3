//! Clamped elastic plate spanning the channel top: bending stiffness,
//! optional membrane tension, optional structural damping.
//!
//! Displacements are nodal; the ends are pinned at the rest height `1` with
//! zero slope, enforced by even ghost reflection about each endpoint. The
//! elastic operators are assembled as Gram forms — second differences and
//! first differences composed with their adjoints under the trapezoid and
//! face weights — so the semi-discrete system inherits an exact energy
//! balance: the implicit-midpoint update conserves
//!
//! `E = (mass/2)||w||^2 + (bending/2)||D2 eta||^2 + (tension/2)||D1 eta||^2`
//!
//! to rounding when undamped and unforced, and otherwise changes it by
//! exactly the load work minus `dt * damping * ||D1 w^{n+1/2}||^2`. Each
//! step solves one pentadiagonal positive definite system, factored once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PlateField};
use crate::linsolve::{BandedCholesky, SymBanded};

/// Physical coefficients of the plate equation
/// `mass * dtt eta + bending * Dxxxx eta - tension * Dxx eta
///  - damping * Dxx (dt eta) = load`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateParams {
    /// Area density times thickness; the inertia coefficient.
    pub mass: f64,
    /// Bending stiffness (fourth-order term).
    pub bending: f64,
    /// Membrane tension (second-order term), may be zero.
    pub tension: f64,
    /// Structural damping on the velocity gradient, may be zero.
    pub damping: f64,
    /// Height below which the run is aborted as a plate-wall contact.
    pub contact_floor: f64,
}

impl PlateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.bending > 0.0) {
            return Err(Error::config("plate mass and bending must be positive"));
        }
        if self.tension < 0.0 || self.damping < 0.0 {
            return Err(Error::config("plate tension and damping cannot be negative"));
        }
        if !(0.0..1.0).contains(&self.contact_floor) {
            return Err(Error::config("contact floor must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Plate configuration and velocity. `eta` holds the full height (rest
/// value 1 at the pinned ends); `w` is its time derivative, zero at the ends.
#[derive(Debug, Clone)]
pub struct PlateState {
    pub eta: PlateField,
    pub w: PlateField,
}

impl PlateState {
    pub fn rest(grid: GridSpec) -> Self {
        PlateState {
            eta: PlateField::ones(grid),
            w: PlateField::zeros(grid),
        }
    }

    /// Pinned, zero-slope ends: `eta = 1` and `w = 0` there.
    pub fn check_admissible(&self) -> Result<()> {
        let nx = self.eta.grid.nx;
        if self.w.grid != self.eta.grid {
            return Err(Error::shape("plate state fields on mixed grids"));
        }
        for idx in [0, nx] {
            if (self.eta.at(idx) - 1.0).abs() > 1e-12 || self.w.at(idx).abs() > 1e-12 {
                return Err(Error::domain(
                    "plate ends must sit at the rest height with zero velocity",
                ));
            }
        }
        self.eta.check_positive()
    }
}

/// Second differences with even ghost reflection about the pinned ends;
/// the discrete curvature at every node.
pub fn curvature(eta: &PlateField) -> PlateField {
    let g = eta.grid;
    let h2 = g.hx() * g.hx();
    let nx = g.nx;
    let mut out = PlateField::zeros(g);
    for i in 0..=nx {
        let (lo, hi) = if i == 0 {
            (eta.at(1), eta.at(1))
        } else if i == nx {
            (eta.at(nx - 1), eta.at(nx - 1))
        } else {
            (eta.at(i - 1), eta.at(i + 1))
        };
        *out.at_mut(i) = (lo - 2.0 * eta.at(i) + hi) / h2;
    }
    out
}

/// One completed step together with the exact energy bookkeeping over it.
#[derive(Debug, Clone)]
pub struct PlateStepReport {
    pub state: PlateState,
    /// Work done by the load: `dt * (load, w^{n+1/2})_W`.
    pub load_work: f64,
    /// Energy removed by damping: `dt * damping * ||D1 w^{n+1/2}||^2`.
    pub dissipated: f64,
}

/// Prefactored implicit-midpoint stepper for a fixed grid, parameter set
/// and step size.
pub struct PlateStepper {
    grid: GridSpec,
    params: PlateParams,
    dt: f64,
    /// Interior elastic operator `bending * B2 + tension * B1`.
    stiffness: SymBanded,
    /// Interior damping operator `B1`.
    damping_op: SymBanded,
    factor: BandedCholesky,
    unit_velocity: PlateField,
}

impl PlateStepper {
    pub fn new(grid: GridSpec, params: &PlateParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("plate step size must be positive"));
        }
        let nx = grid.nx;
        let m = nx - 1; // interior unknowns 1..=nx-1
        let h = grid.hx();

        // Gram form of the ghost-reflected second difference: rows are the
        // curvature at every node, weighted by the trapezoid node weights.
        // Constants are annihilated, so pinned boundary values never
        // generate load terms and the interior restriction is the whole
        // story.
        let mut b2 = SymBanded::zeros(m, 2);
        {
            let h2 = h * h;
            let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nx + 1);
            rows.push(vec![(1, 2.0 / h2)]); // node 0: ghost-reflected, pinned value drops
            for i in 1..nx {
                let mut r = Vec::with_capacity(3);
                if i > 1 {
                    r.push((i - 1, 1.0 / h2));
                }
                r.push((i, -2.0 / h2));
                if i < nx - 1 {
                    r.push((i + 1, 1.0 / h2));
                }
                rows.push(r);
            }
            rows.push(vec![(nx - 1, 2.0 / h2)]);
            for (j, row) in rows.iter().enumerate() {
                let wj = grid.node_weight(j);
                for &(a, ca) in row {
                    for &(b, cb) in row {
                        if a <= b {
                            b2.add(a - 1, b - 1, wj * ca * cb);
                        }
                    }
                }
            }
        }

        // Gram form of the staggered first difference under face weights.
        let mut b1 = SymBanded::zeros(m, 1);
        for f in 0..nx {
            // face between nodes f and f+1; slope (eta[f+1] - eta[f]) / h
            let mut row: Vec<(usize, f64)> = Vec::new();
            if f >= 1 {
                row.push((f, -1.0 / h));
            }
            if f + 1 <= nx - 1 {
                row.push((f + 1, 1.0 / h));
            }
            for &(a, ca) in &row {
                for &(b, cb) in &row {
                    if a <= b {
                        b1.add(a - 1, b - 1, h * ca * cb);
                    }
                }
            }
        }

        let mut stiffness = SymBanded::zeros(m, 2);
        for i in 0..m {
            for j in i..(i + 3).min(m) {
                let v = params.bending * b2.at(i, j) + params.tension * b1.at(i, j);
                if v != 0.0 {
                    stiffness.add(i, j, v);
                }
            }
        }

        // System matrix of the midpoint update for the new velocity.
        let mut sys = SymBanded::zeros(m, 2);
        for i in 0..m {
            sys.add(i, i, params.mass * grid.node_weight(i + 1) / dt);
            for j in i..(i + 3).min(m) {
                let v = 0.25 * dt * stiffness.at(i, j) + 0.5 * params.damping * b1.at(i, j);
                if v != 0.0 {
                    sys.add(i, j, v);
                }
            }
        }
        let factor = sys.factor()?;

        // Velocity response to a unit constant load from any state; the
        // update is affine in the load, so this single vector lets callers
        // impose integral constraints by shifting the load.
        let rhs: Vec<f64> = (0..m).map(|i| grid.node_weight(i + 1)).collect();
        let sol = factor.solve(&rhs);
        let mut unit_velocity = PlateField::zeros(grid);
        for (i, v) in sol.iter().enumerate() {
            *unit_velocity.at_mut(i + 1) = *v;
        }

        Ok(PlateStepper {
            grid,
            params: *params,
            dt,
            stiffness,
            damping_op: b1,
            factor,
            unit_velocity,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &PlateParams {
        &self.params
    }

    /// Interior velocity response to a unit constant load over one step.
    pub fn unit_load_velocity(&self) -> &PlateField {
        &self.unit_velocity
    }

    fn interior(&self, f: &PlateField) -> Vec<f64> {
        (1..self.grid.nx).map(|i| f.at(i)).collect()
    }

    /// Elastic restoring force per node (the load that would hold `eta`
    /// steady): `(bending * B2 + tension * B1)(eta - 1)` divided by the
    /// node weight. Zero at the pinned ends.
    pub fn restoring_force(&self, eta: &PlateField) -> PlateField {
        let d: Vec<f64> = (1..self.grid.nx).map(|i| eta.at(i) - 1.0).collect();
        let kd = self.stiffness.mul_vec(&d);
        let mut out = PlateField::zeros(self.grid);
        for (i, v) in kd.iter().enumerate() {
            *out.at_mut(i + 1) = v / self.grid.node_weight(i + 1);
        }
        out
    }

    /// Total plate energy: kinetic + bending + tension parts.
    pub fn energy(&self, state: &PlateState) -> f64 {
        let g = self.grid;
        let mut kinetic = 0.0;
        for i in 0..=g.nx {
            kinetic += g.node_weight(i) * state.w.at(i) * state.w.at(i);
        }
        let kappa = curvature(&state.eta);
        let mut bend = 0.0;
        for i in 0..=g.nx {
            bend += g.node_weight(i) * kappa.at(i) * kappa.at(i);
        }
        let mut tens = 0.0;
        for f in 0..g.nx {
            let s = state.eta.face_slope(f);
            tens += g.hx() * s * s;
        }
        0.5 * (self.params.mass * kinetic + self.params.bending * bend + self.params.tension * tens)
    }

    /// Advance one step under the given nodal load (held constant over the
    /// step; its values at the pinned ends are ignored). `time` is the step's
    /// end time, used only for contact reporting.
    pub fn step(
        &self,
        state: &PlateState,
        load: &PlateField,
        time: f64,
    ) -> Result<PlateStepReport> {
        state.check_admissible()?;
        if load.grid != self.grid {
            return Err(Error::shape("plate load on a different grid"));
        }
        let g = self.grid;
        let m = g.nx - 1;
        let dt = self.dt;

        let d: Vec<f64> = (1..g.nx).map(|i| state.eta.at(i) - 1.0).collect();
        let w_old = self.interior(&state.w);
        let kd = self.stiffness.mul_vec(&d);
        let kw = self.stiffness.mul_vec(&w_old);
        let bw = self.damping_op.mul_vec(&w_old);

        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let wt = g.node_weight(i + 1);
            rhs[i] = self.params.mass * wt * w_old[i] / dt - kd[i] - 0.25 * dt * kw[i]
                - 0.5 * self.params.damping * bw[i]
                + wt * load.at(i + 1);
        }
        let w_new = self.factor.solve(&rhs);

        let mut next = PlateState {
            eta: state.eta.clone(),
            w: PlateField::zeros(g),
        };
        let mut load_work = 0.0;
        let mut half_slope_sq = 0.0;
        for i in 0..m {
            let w_half = 0.5 * (w_old[i] + w_new[i]);
            *next.eta.at_mut(i + 1) += dt * w_half;
            *next.w.at_mut(i + 1) = w_new[i];
            load_work += g.node_weight(i + 1) * load.at(i + 1) * w_half;
        }
        for f in 0..g.nx {
            let wl = if f == 0 { 0.0 } else { 0.5 * (w_old[f - 1] + w_new[f - 1]) };
            let wr = if f == g.nx - 1 {
                0.0
            } else {
                0.5 * (w_old[f] + w_new[f])
            };
            let s = (wr - wl) / g.hx();
            half_slope_sq += g.hx() * s * s;
        }

        let min_eta = next.eta.min();
        if min_eta <= self.params.contact_floor {
            return Err(Error::Contact {
                time,
                min_eta,
                floor: self.params.contact_floor,
            });
        }
        Ok(PlateStepReport {
            state: next,
            load_work: dt * load_work,
            dissipated: dt * self.params.damping * half_slope_sq,
        })
    }
}
