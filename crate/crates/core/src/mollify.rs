//! Time mollification that respects the divergence constraint on a moving
//! domain.
//!
//! Averaging velocity snapshots taken at different plate shapes breaks the
//! incompressibility constraint: each snapshot is divergence free over its
//! own geometry, not over the geometry at the evaluation time. The cure is
//! to transport every snapshot onto the evaluation-time domain first — the
//! smoothing kernel acts on already-transported fields, so the result is a
//! convex combination of fields that are all (discretely) solenoidal over
//! the same domain, and stays solenoidal itself.
//!
//! The kernel is the standard compactly supported bump `exp(-1/(1-s^2))`
//! sampled at uniform offsets and renormalized to unit mass, so constants
//! are reproduced exactly and the discrete mass identity holds to rounding.
//! Series are extended past their ends by clamping, which keeps the
//! smoothing well defined near the initial and final times at the cost of
//! first-order accuracy there (the same price the interior pays at kinks of
//! the time profile).

use crate::error::{Error, Result};
use crate::geometry::{DomainMap, UTrace};
use crate::grid::{GridSpec, PlateField, VectorField};
use crate::transforms::hat_transform;

/// Smoothing window: `half_width` steps of size `dt` on either side, so the
/// kernel radius is `delta = half_width * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub half_width: usize,
    pub dt: f64,
}

impl MollifierSpec {
    pub fn new(half_width: usize, dt: f64) -> Result<Self> {
        if half_width < 2 {
            return Err(Error::config(
                "mollifier half width must be at least 2 steps",
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("mollifier step must be positive"));
        }
        Ok(MollifierSpec { half_width, dt })
    }

    /// Kernel radius in time units.
    pub fn delta(&self) -> f64 {
        self.half_width as f64 * self.dt
    }

    /// Normalized kernel weights at offsets `-half_width ..= half_width`.
    /// They sum to one exactly (up to the final rounding) and vanish at the
    /// endpoints, so the effective support is `2 half_width - 1` samples.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.half_width as isize;
        let raw: Vec<f64> = (-m..=m)
            .map(|k| {
                let s = k as f64 / m as f64;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - s * s)).exp()
                }
            })
            .collect();
        let mass: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / mass).collect()
    }
}

/// A uniformly sampled history of plate shapes and velocity fields, each
/// velocity stored on the reference rectangle of its own plate shape.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub etas: Vec<PlateField>,
    pub velocities: Vec<VectorField>,
}

impl Trajectory {
    pub fn new(
        t0: f64,
        dt: f64,
        etas: Vec<PlateField>,
        velocities: Vec<VectorField>,
    ) -> Result<Self> {
        if etas.is_empty() || etas.len() != velocities.len() {
            return Err(Error::shape(
                "trajectory needs matching, nonempty shape and velocity series",
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("trajectory step must be positive"));
        }
        let g = etas[0].grid;
        for eta in &etas {
            eta.check_positive()?;
            if eta.grid != g {
                return Err(Error::shape("trajectory shapes on mixed grids"));
            }
        }
        for v in &velocities {
            if v.grid() != g {
                return Err(Error::shape("trajectory velocities on mixed grids"));
            }
        }
        Ok(Trajectory {
            t0,
            dt,
            etas,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.etas.is_empty()
    }

    pub fn grid(&self) -> GridSpec {
        self.etas[0].grid
    }

    pub fn time(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 * self.dt
    }

    /// Constant continuation outside the sampled range.
    fn clamp(&self, k: isize) -> usize {
        k.clamp(0, self.len() as isize - 1) as usize
    }
}

/// Smooth a scalar time series at sample `idx`, with clamped extension.
pub fn mollify_samples(samples: &[f64], spec: &MollifierSpec, idx: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::shape("cannot mollify an empty series"));
    }
    if idx >= samples.len() {
        return Err(Error::domain("mollification index out of range"));
    }
    let m = spec.half_width as isize;
    let last = samples.len() as isize - 1;
    let mut acc = 0.0;
    for (w, k) in spec.weights().into_iter().zip(-m..=m) {
        let j = (idx as isize + k).clamp(0, last) as usize;
        acc += w * samples[j];
    }
    Ok(acc)
}

/// Smooth the plate-shape series at sample `idx`, pointwise in space.
pub fn mollify_plate(traj: &Trajectory, spec: &MollifierSpec, idx: usize) -> Result<PlateField> {
    if idx >= traj.len() {
        return Err(Error::domain("mollification index out of range"));
    }
    let m = spec.half_width as isize;
    let mut out = PlateField::zeros(traj.grid());
    for (w, k) in spec.weights().into_iter().zip(-m..=m) {
        let eta = &traj.etas[traj.clamp(idx as isize + k)];
        out.axpy(w, eta)?;
    }
    Ok(out)
}

/// Smooth the velocity series at sample `idx`. Every snapshot is carried
/// onto the plate shape at time `idx` by the divergence-preserving
/// transport before the weights are applied, so solenoidality survives
/// the averaging. `trace` selects the edge continuation of the horizontal
/// component and must match the one used by the surrounding discretization.
pub fn mollify_solenoidal(
    traj: &Trajectory,
    spec: &MollifierSpec,
    idx: usize,
    trace: UTrace,
) -> Result<VectorField> {
    if idx >= traj.len() {
        return Err(Error::domain("mollification index out of range"));
    }
    let m = spec.half_width as isize;
    let target = &traj.etas[idx];
    let mut out = VectorField::zeros(traj.grid());
    for (w, k) in spec.weights().into_iter().zip(-m..=m) {
        if w == 0.0 {
            continue;
        }
        let src = traj.clamp(idx as isize + k);
        let map = DomainMap::build(target, &traj.etas[src])?;
        let moved = hat_transform(&traj.velocities[src], &map, trace)?;
        out.axpy(w, &moved)?;
    }
    Ok(out)
}
