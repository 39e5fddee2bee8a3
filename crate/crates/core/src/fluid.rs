//! Pressure-projection flow stepper on the moving-channel reference
//! rectangle.
//!
//! One step advances the staggered velocity through three substeps: an
//! explicit advective update in the frame of the moving graph map, an
//! implicit viscous solve, and a projection onto discretely flux-balanced
//! fields. The projection is built from the cellwise balance of
//! `geometry::mapped_fluxes` together with its *exact* transpose, so after
//! the solve the mapped divergence of the velocity is as small as the
//! conjugate-gradient tolerance — not merely truncation-sized.
//!
//! The viscous operator is the gradient of a quadrature of the physical
//! Dirichlet integral `int |grad v|^2` under the graph map. The quadrature
//! anchors one-sided edge differences at each corner of each subcell, which
//! keeps the form positive semidefinite for every admissible height field
//! (the metric has unit determinant by construction) and free of the
//! checkerboard kernel an averaged-gradient form would admit. Walls
//! contribute half-width mirror strips, so no-slip data enter the energy the
//! same way they enter the solve.
//!
//! Boundary rows are not unknowns: `u` vanishes on the lateral walls, `v`
//! vanishes on the floor, and the top row of `v` carries the plate's
//! interface velocity. Dirichlet data reach the viscous system by lifting,
//! and the projection updates free rows only, so the kinematic datum
//! survives the whole step exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, UTrace};
use crate::grid::{GridSpec, PlateField, Role, ScalarField, VectorField};
use crate::linsolve::{pcg, remove_mean, CgReport};

/// Physical and solver coefficients of the flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// Fluid density; scales pressure and the viscous diffusivity.
    pub density: f64,
    /// Dynamic viscosity. Zero is allowed and skips the viscous solve.
    pub viscosity: f64,
    /// Relative residual tolerance of the inner conjugate-gradient solves.
    pub cg_tol: f64,
    /// Iteration cap of the inner conjugate-gradient solves.
    pub cg_max_iter: usize,
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::config("fluid density must be positive and finite"));
        }
        if !(self.viscosity >= 0.0) || !self.viscosity.is_finite() {
            return Err(Error::config("fluid viscosity cannot be negative"));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::config("cg tolerance must lie in (0, 1)"));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::config("cg iteration cap must be at least 1"));
        }
        Ok(())
    }
}

/// Staggered velocity plus cellwise pressure, both on the reference
/// rectangle. The pressure carries the mean-zero gauge.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub v: VectorField,
    pub p: ScalarField,
}

impl FluidState {
    pub fn rest(grid: GridSpec) -> Self {
        FluidState {
            v: VectorField::zeros(grid),
            p: ScalarField::zeros(grid, Role::Center),
        }
    }

    fn check(&self, grid: GridSpec) -> Result<()> {
        if self.v.grid() != grid {
            return Err(Error::shape("fluid velocity grid differs from eta grid"));
        }
        if self.p.grid != grid || self.p.role != Role::Center {
            return Err(Error::shape("fluid pressure must sit at cell centers"));
        }
        Ok(())
    }
}

/// What one step did, besides producing the new state.
#[derive(Debug, Clone)]
pub struct FluidStepReport {
    pub state: FluidState,
    /// Conjugate-gradient iterations of the two viscous component solves.
    pub diffusion_iterations: [usize; 2],
    /// Outcome of the pressure solve.
    pub pressure: CgReport,
    /// Max mapped divergence of the projected velocity; solver-tolerance
    /// sized, not truncation sized.
    pub post_divergence: f64,
    /// Mean cellwise flux balance before projection. Nonzero exactly when
    /// the interface velocity datum carries net volume flux, which the
    /// projection cannot remove; the coupling layer drives it to zero.
    pub flux_defect: f64,
    /// Advective Courant number `dt * max(|u|/hx + |dy_ref/dt|/hy)` of the
    /// incoming state.
    pub cfl: f64,
}

/// Cellwise balance of the mapped fluxes: `eta u` through vertical faces,
/// `v - y_ref eta' u` through horizontal ones, differenced over each cell.
/// This equals `eta` times the mapped divergence; its kernel is the
/// projection's constraint set. Vertical interpolation uses the no-slip
/// wall traces, so the top row of `v` enters the balance untouched.
pub fn flux_divergence(v: &VectorField, eta: &PlateField) -> Result<ScalarField> {
    let g = v.grid();
    if eta.grid != g {
        return Err(Error::shape("eta grid differs from velocity grid"));
    }
    let (fx, fy) = geometry::mapped_fluxes(v, eta, UTrace::Zero)?;
    let hx = g.hx();
    let hy = g.hy();
    let mut out = ScalarField::zeros(g, Role::Center);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let bal = (fx.at(i + 1, j) - fx.at(i, j)) / hx + (fy.at(i, j + 1) - fy.at(i, j)) / hy;
            out.set(i, j, bal);
        }
    }
    Ok(out)
}

/// Exact transpose of [`flux_divergence`] under the plain coefficient dot
/// products: `sum_cells (B v) phi = sum_dofs v . (B^T phi)` to rounding.
/// The slope corrections land on the four `u` samples each tilted interior
/// face interpolates, mirroring the forward operator term by term.
pub fn flux_divergence_adjoint(phi: &ScalarField, eta: &PlateField) -> Result<VectorField> {
    let g = phi.grid;
    if phi.role != Role::Center {
        return Err(Error::shape("flux balance adjoint takes a cell-centered field"));
    }
    if eta.grid != g {
        return Err(Error::shape("eta grid differs from phi grid"));
    }
    let hx = g.hx();
    let hy = g.hy();
    let mut out = VectorField::zeros(g);
    for i in 0..=g.nx {
        let e = eta.at(i);
        for j in 0..g.ny {
            let left = if i > 0 { phi.at(i - 1, j) } else { 0.0 };
            let right = if i < g.nx { phi.at(i, j) } else { 0.0 };
            out.u.set(i, j, e * (left - right) / hx);
        }
    }
    for i in 0..g.nx {
        for j in 0..=g.ny {
            let below = if j > 0 { phi.at(i, j - 1) } else { 0.0 };
            let above = if j < g.ny { phi.at(i, j) } else { 0.0 };
            out.v.set(i, j, (below - above) / hy);
        }
    }
    for ic in 0..g.nx {
        let s = eta.face_slope(ic);
        if s == 0.0 {
            continue;
        }
        for j in 1..g.ny {
            let yref = j as f64 * hy;
            let gq = (phi.at(ic, j - 1) - phi.at(ic, j)) / hy;
            let c = -0.25 * yref * s * gq;
            *out.u.at_mut(ic, j - 1) += c;
            *out.u.at_mut(ic + 1, j - 1) += c;
            *out.u.at_mut(ic, j) += c;
            *out.u.at_mut(ic + 1, j) += c;
        }
    }
    Ok(out)
}

/// Diagonal velocity mass under the graph map: quadrature weight times the
/// local height, per sample. Matches the weighted norms of `grid`, so the
/// projection below is the orthogonal one in exactly that inner product.
pub fn velocity_mass(eta: &PlateField) -> Result<VectorField> {
    eta.check_positive()?;
    let g = eta.grid;
    let mut m = VectorField::zeros(g);
    for part in [&mut m.u, &mut m.v] {
        let (nr, nc) = part.dims();
        for i in 0..nr {
            let w = part.weight_at(eta, i);
            for j in 0..nc {
                let q = part.quad_weight(i, j);
                part.set(i, j, q * w);
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Copy)]
enum Component {
    Horizontal,
    Vertical,
}

/// Metric of the physical Dirichlet form pulled back to the reference
/// rectangle: `int |grad f|^2 dx dy = int (a11 fx^2 + 2 a12 fx fy + a22
/// fy^2) dxref dyref` with the area element absorbed. Its determinant is
/// identically 1, so positivity needs only `eta > 0`.
fn form_metric(e: f64, s: f64, yref: f64) -> [f64; 3] {
    [e, -yref * s, (1.0 + yref * yref * s * s) / e]
}

/// One quadrilateral of samples, one quarter-weight corner at a time. Each
/// corner anchors the two one-sided edge differences meeting there, which
/// is what rules out the zero-energy checkerboard of a cell-averaged
/// gradient.
fn quad_corners<V: FnMut(f64, [f64; 3], &[(usize, usize, f64, f64)])>(
    c0: usize,
    r0: usize,
    ix: f64,
    iy: f64,
    w: f64,
    a: [f64; 3],
    visit: &mut V,
) {
    visit(w, a, &[(c0, r0, -ix, -iy), (c0 + 1, r0, ix, 0.0), (c0, r0 + 1, 0.0, iy)]);
    visit(w, a, &[(c0, r0, -ix, 0.0), (c0 + 1, r0, ix, -iy), (c0 + 1, r0 + 1, 0.0, iy)]);
    visit(w, a, &[(c0, r0, 0.0, -iy), (c0, r0 + 1, -ix, iy), (c0 + 1, r0 + 1, ix, 0.0)]);
    visit(w, a, &[(c0 + 1, r0, 0.0, -iy), (c0, r0 + 1, -ix, 0.0), (c0 + 1, r0 + 1, ix, iy)]);
}

/// Enumerate every quadrature corner of one velocity component's Dirichlet
/// form. Each callback gets the corner weight, the metric of its subcell,
/// and the taps `(i, j, d/dxref coeff, d/dyref coeff)` of its anchored
/// gradient. The applier, the Jacobi diagonal, and the dissipation
/// functional all consume this one enumeration, so they can never drift
/// out of agreement.
///
/// Subcells sit between neighbouring samples; the half-width margins along
/// the component's no-slip walls are covered by mirror strips whose
/// wall-facing half-edges difference against the zero trace.
fn visit_component_form<V: FnMut(f64, [f64; 3], &[(usize, usize, f64, f64)])>(
    comp: Component,
    eta: &PlateField,
    mut visit: V,
) {
    let g = eta.grid;
    let hx = g.hx();
    let hy = g.hy();
    let ix = 1.0 / hx;
    let iy = 1.0 / hy;
    let w4 = 0.25 * hx * hy;
    let w8 = 0.125 * hx * hy;
    match comp {
        Component::Horizontal => {
            let g2 = 2.0 * iy;
            for c0 in 0..g.nx {
                let e = eta.face(c0);
                let s = eta.face_slope(c0);
                for r0 in 0..g.ny - 1 {
                    let a = form_metric(e, s, (r0 as f64 + 1.0) * hy);
                    quad_corners(c0, r0, ix, iy, w4, a, &mut visit);
                }
                let ab = form_metric(e, s, 0.25 * hy);
                visit(w8, ab, &[(c0, 0, 0.0, g2)]);
                visit(w8, ab, &[(c0 + 1, 0, 0.0, g2)]);
                visit(w8, ab, &[(c0, 0, -ix, g2), (c0 + 1, 0, ix, 0.0)]);
                visit(w8, ab, &[(c0, 0, -ix, 0.0), (c0 + 1, 0, ix, g2)]);
                let r = g.ny - 1;
                let at = form_metric(e, s, 1.0 - 0.25 * hy);
                visit(w8, at, &[(c0, r, 0.0, -g2)]);
                visit(w8, at, &[(c0 + 1, r, 0.0, -g2)]);
                visit(w8, at, &[(c0, r, -ix, -g2), (c0 + 1, r, ix, 0.0)]);
                visit(w8, at, &[(c0, r, -ix, 0.0), (c0 + 1, r, ix, -g2)]);
            }
        }
        Component::Vertical => {
            for c0 in 0..g.nx - 1 {
                let node = c0 + 1;
                let e = eta.at(node);
                let s = eta.node_slope(node);
                for r0 in 0..g.ny {
                    let a = form_metric(e, s, (r0 as f64 + 0.5) * hy);
                    quad_corners(c0, r0, ix, iy, w4, a, &mut visit);
                }
            }
            let g2 = 2.0 * ix;
            let el = 0.75 * eta.at(0) + 0.25 * eta.at(1);
            let sl = eta.face_slope(0);
            let er = 0.75 * eta.at(g.nx) + 0.25 * eta.at(g.nx - 1);
            let sr = eta.face_slope(g.nx - 1);
            let c = g.nx - 1;
            for r0 in 0..g.ny {
                let yc = (r0 as f64 + 0.5) * hy;
                let al = form_metric(el, sl, yc);
                visit(w8, al, &[(0, r0, g2, 0.0)]);
                visit(w8, al, &[(0, r0 + 1, g2, 0.0)]);
                visit(w8, al, &[(0, r0, g2, -iy), (0, r0 + 1, 0.0, iy)]);
                visit(w8, al, &[(0, r0, 0.0, -iy), (0, r0 + 1, g2, iy)]);
                let ar = form_metric(er, sr, yc);
                visit(w8, ar, &[(c, r0, -g2, 0.0)]);
                visit(w8, ar, &[(c, r0 + 1, -g2, 0.0)]);
                visit(w8, ar, &[(c, r0, -g2, -iy), (c, r0 + 1, 0.0, iy)]);
                visit(w8, ar, &[(c, r0, 0.0, -iy), (c, r0 + 1, -g2, iy)]);
            }
        }
    }
}

/// `out = L x` for one component's stiffness, all samples included.
fn apply_component_form(comp: Component, eta: &PlateField, x: &ScalarField, out: &mut ScalarField) {
    for v in out.values_mut() {
        *v = 0.0;
    }
    visit_component_form(comp, eta, |w, a, taps| {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(i, j, cx, cy) in taps {
            let v = x.at(i, j);
            gx += cx * v;
            gy += cy * v;
        }
        let fx = a[0] * gx + a[1] * gy;
        let fy = a[1] * gx + a[2] * gy;
        for &(i, j, cx, cy) in taps {
            *out.at_mut(i, j) += w * (fx * cx + fy * cy);
        }
    });
}

/// Diagonal of one component's stiffness, for Jacobi preconditioning.
fn component_form_diag(comp: Component, eta: &PlateField, out: &mut ScalarField) {
    for v in out.values_mut() {
        *v = 0.0;
    }
    visit_component_form(comp, eta, |w, a, taps| {
        for &(i, j, cx, cy) in taps {
            *out.at_mut(i, j) += w * (a[0] * cx * cx + 2.0 * a[1] * cx * cy + a[2] * cy * cy);
        }
    });
}

fn component_energy(comp: Component, eta: &PlateField, x: &ScalarField) -> f64 {
    let mut q = 0.0;
    visit_component_form(comp, eta, |w, a, taps| {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(i, j, cx, cy) in taps {
            let v = x.at(i, j);
            gx += cx * v;
            gy += cy * v;
        }
        q += w * (a[0] * gx * gx + 2.0 * a[1] * gx * gy + a[2] * gy * gy);
    });
    q
}

/// Quadrature of the physical squared velocity gradient over the channel,
/// evaluated with the same corner-anchored form that drives the viscous
/// substep. `viscosity * gradient_energy` is therefore the step's exact
/// dissipation rate functional, with no re-discretization gap for energy
/// audits to absorb.
pub fn gradient_energy(v: &VectorField, eta: &PlateField) -> Result<f64> {
    if eta.grid != v.grid() {
        return Err(Error::shape("eta grid differs from velocity grid"));
    }
    eta.check_positive()?;
    Ok(component_energy(Component::Horizontal, eta, &v.u)
        + component_energy(Component::Vertical, eta, &v.v))
}

/// Squared dual norm of `f` against the componentwise Dirichlet form: the
/// energy of the Riesz representative `z` solving `L z = M f` with
/// homogeneous wall data, one conjugate-gradient solve per component.
/// A computable surrogate for negative-order norms of time derivatives;
/// samples on the constrained rows (walls and the kinematic top row) are
/// data, not part of the functional, and are ignored.
pub fn dual_norm_sq(f: &VectorField, eta: &PlateField, tol: f64, max_iter: usize) -> Result<f64> {
    let g = f.grid();
    if eta.grid != g {
        return Err(Error::shape("eta grid differs from field grid"));
    }
    eta.check_positive()?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::domain("dual norm tolerance must lie in (0, 1)"));
    }
    let mass = velocity_mass(eta)?;
    let mut total = 0.0;
    for (comp, field, m) in [
        (Component::Horizontal, &f.u, &mass.u),
        (Component::Vertical, &f.v, &mass.v),
    ] {
        let (nr, nc) = field.dims();
        let free = |i: usize, j: usize| match comp {
            Component::Horizontal => i >= 1 && i + 1 < nr,
            Component::Vertical => j >= 1 && j + 1 < nc,
        };
        let mut ld = ScalarField::zeros(g, field.role);
        component_form_diag(comp, eta, &mut ld);
        let mut b = vec![0.0; nr * nc];
        let mut d = vec![1.0; nr * nc];
        let mut x = vec![0.0; nr * nc];
        for i in 0..nr {
            for j in 0..nc {
                if free(i, j) {
                    let k = i * nc + j;
                    b[k] = m.at(i, j) * field.at(i, j);
                    d[k] = ld.at(i, j);
                }
            }
        }
        if b.iter().all(|&v| v == 0.0) {
            continue;
        }
        let apply = |xv: &[f64], out: &mut [f64]| {
            let mut xf = ScalarField::zeros(g, field.role);
            xf.values_mut().copy_from_slice(xv);
            let mut lx = ScalarField::zeros(g, field.role);
            apply_component_form(comp, eta, &xf, &mut lx);
            for i in 0..nr {
                for j in 0..nc {
                    let k = i * nc + j;
                    out[k] = if free(i, j) { lx.at(i, j) } else { 0.0 };
                }
            }
        };
        pcg(apply, Some(&d), &b, &mut x, tol, max_iter, None)?;
        total += x.iter().zip(&b).map(|(z, r)| z * r).sum::<f64>();
    }
    Ok(total)
}

/// Overwrite the constrained rows: no-slip walls and the plate's face-mean
/// velocity along the top.
fn apply_kinematic_data(v: &mut VectorField, eta_t: &PlateField) {
    let g = v.grid();
    for j in 0..g.ny {
        v.u.set(0, j, 0.0);
        v.u.set(g.nx, j, 0.0);
    }
    for i in 0..g.nx {
        v.v.set(i, 0, 0.0);
        v.v.set(i, g.ny, 0.5 * (eta_t.at(i) + eta_t.at(i + 1)));
    }
}

/// Advective term `(v - w_dom) . grad v` per free sample, with the domain
/// velocity `w_dom = (0, y_ref d/dt eta)` of the moving graph map. Central
/// differences; mirror ghosts across the component's no-slip walls.
fn advect(v: &VectorField, eta: &PlateField, eta_t: &PlateField) -> VectorField {
    let g = v.grid();
    let hx = g.hx();
    let hy = g.hy();
    let mut out = VectorField::zeros(g);
    for i in 1..g.nx {
        let s = eta.node_slope(i);
        let e = eta.at(i);
        let et = eta_t.at(i);
        for j in 0..g.ny {
            let yc = (j as f64 + 0.5) * hy;
            let rux = (v.u.at(i + 1, j) - v.u.at(i - 1, j)) / (2.0 * hx);
            let ruy = if j == 0 {
                (v.u.at(i, 1) + v.u.at(i, 0)) / (2.0 * hy)
            } else if j == g.ny - 1 {
                (-v.u.at(i, j) - v.u.at(i, j - 1)) / (2.0 * hy)
            } else {
                (v.u.at(i, j + 1) - v.u.at(i, j - 1)) / (2.0 * hy)
            };
            let dudx = rux - yc * s / e * ruy;
            let dudy = ruy / e;
            let va = 0.25
                * (v.v.at(i - 1, j) + v.v.at(i - 1, j + 1) + v.v.at(i, j) + v.v.at(i, j + 1));
            out.u.set(i, j, v.u.at(i, j) * dudx + (va - yc * et) * dudy);
        }
    }
    for i in 0..g.nx {
        let s = eta.face_slope(i);
        let e = eta.face(i);
        let et = 0.5 * (eta_t.at(i) + eta_t.at(i + 1));
        for j in 1..g.ny {
            let yc = j as f64 * hy;
            let rvx = if i == 0 {
                (v.v.at(1, j) + v.v.at(0, j)) / (2.0 * hx)
            } else if i == g.nx - 1 {
                (-v.v.at(i, j) - v.v.at(i - 1, j)) / (2.0 * hx)
            } else {
                (v.v.at(i + 1, j) - v.v.at(i - 1, j)) / (2.0 * hx)
            };
            let rvy = (v.v.at(i, j + 1) - v.v.at(i, j - 1)) / (2.0 * hy);
            let dvdx = rvx - yc * s / e * rvy;
            let dvdy = rvy / e;
            let ua =
                0.25 * (v.u.at(i, j - 1) + v.u.at(i, j) + v.u.at(i + 1, j - 1) + v.u.at(i + 1, j));
            out.v.set(i, j, ua * dvdx + (v.v.at(i, j) - yc * et) * dvdy);
        }
    }
    out
}

/// Worst advective crossing rate, in cells per unit time: the step's
/// Courant number is this times `dt`. The vertical rate is measured in the
/// reference frame, where a particle climbs at `(v - y_ref (dt eta + eta'
/// u)) / eta`.
fn advective_rate(v: &VectorField, eta: &PlateField, eta_t: &PlateField) -> f64 {
    let g = v.grid();
    let hx = g.hx();
    let hy = g.hy();
    let mut rate = 0.0f64;
    for i in 0..g.nx {
        let e = eta.face(i);
        let s = eta.face_slope(i);
        let et = 0.5 * (eta_t.at(i) + eta_t.at(i + 1));
        for j in 0..g.ny {
            let uc = 0.5 * (v.u.at(i, j) + v.u.at(i + 1, j));
            let vc = 0.5 * (v.v.at(i, j) + v.v.at(i, j + 1));
            let yc = (j as f64 + 0.5) * hy;
            let ydot = (vc - yc * et - yc * s * uc) / e;
            rate = rate.max(uc.abs() / hx + ydot.abs() / hy);
        }
    }
    rate
}

/// Backward-Euler viscous solve for one component: `(M/dt + nu L) x = (M/dt)
/// star - nu L(data)` on the free samples, Dirichlet rows lifted. `star`
/// arrives with its boundary rows already holding the data.
fn diffuse_component(
    comp: Component,
    eta: &PlateField,
    star: &ScalarField,
    mass: &ScalarField,
    nu: f64,
    dt: f64,
    params: &FluidParams,
) -> Result<(ScalarField, usize)> {
    if nu == 0.0 {
        return Ok((star.clone(), 0));
    }
    let g = star.grid;
    let role = star.role;
    let (nr, nc) = star.dims();
    let free = |i: usize, j: usize| match comp {
        Component::Horizontal => i >= 1 && i + 1 < nr,
        Component::Vertical => j >= 1 && j + 1 < nc,
    };

    let mut bc = star.clone();
    for i in 0..nr {
        for j in 0..nc {
            if free(i, j) {
                bc.set(i, j, 0.0);
            }
        }
    }
    let mut lbc = ScalarField::zeros(g, role);
    apply_component_form(comp, eta, &bc, &mut lbc);
    let mut ld = ScalarField::zeros(g, role);
    component_form_diag(comp, eta, &mut ld);

    let mut b = vec![0.0; nr * nc];
    let mut d = vec![1.0; nr * nc];
    let mut x = vec![0.0; nr * nc];
    for i in 0..nr {
        for j in 0..nc {
            if free(i, j) {
                let k = i * nc + j;
                let mdt = mass.at(i, j) / dt;
                b[k] = mdt * star.at(i, j) - nu * lbc.at(i, j);
                d[k] = mdt + nu * ld.at(i, j);
                x[k] = star.at(i, j);
            }
        }
    }

    let apply = |xv: &[f64], out: &mut [f64]| {
        let mut xf = ScalarField::zeros(g, role);
        xf.values_mut().copy_from_slice(xv);
        let mut lx = ScalarField::zeros(g, role);
        apply_component_form(comp, eta, &xf, &mut lx);
        for i in 0..nr {
            for j in 0..nc {
                let k = i * nc + j;
                out[k] = if free(i, j) {
                    mass.at(i, j) / dt * xv[k] + nu * lx.at(i, j)
                } else {
                    0.0
                };
            }
        }
    };
    let rep = pcg(apply, Some(&d), &b, &mut x, params.cg_tol, params.cg_max_iter, None)?;

    let mut out = bc;
    for i in 0..nr {
        for j in 0..nc {
            if free(i, j) {
                out.set(i, j, x[i * nc + j]);
            }
        }
    }
    Ok((out, rep.iterations))
}

/// Advance the flow by one step of size `dt` through the channel of height
/// `eta`, whose top moves with nodal velocity `eta_t`. `body` is an
/// optional acceleration field (gravity, manufactured forcing), sampled at
/// velocity points. The geometry is held fixed over the step; the caller
/// chooses which snapshot to freeze.
pub fn fluid_step(
    state: &FluidState,
    eta: &PlateField,
    eta_t: &PlateField,
    body: Option<&VectorField>,
    params: &FluidParams,
    dt: f64,
) -> Result<FluidStepReport> {
    params.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain("time step must be positive and finite"));
    }
    let g = eta.grid;
    state.check(g)?;
    if eta_t.grid != g {
        return Err(Error::shape("eta_t grid differs from eta grid"));
    }
    if let Some(f) = body {
        f.same_layout(&state.v)?;
    }
    eta.check_positive()?;

    let cfl = advective_rate(&state.v, eta, eta_t) * dt;
    if cfl > 1.0 {
        return Err(Error::domain(format!(
            "advective CFL number {cfl:.3e} exceeds 1; shrink dt or refine time sampling"
        )));
    }

    let conv = advect(&state.v, eta, eta_t);
    let mut vstar = state.v.clone();
    vstar.axpy(-dt, &conv)?;
    if let Some(f) = body {
        vstar.axpy(dt, f)?;
    }
    apply_kinematic_data(&mut vstar, eta_t);

    let mass = velocity_mass(eta)?;
    let nu = params.viscosity / params.density;
    let (u2, iter_u) =
        diffuse_component(Component::Horizontal, eta, &vstar.u, &mass.u, nu, dt, params)?;
    let (v2, iter_v) =
        diffuse_component(Component::Vertical, eta, &vstar.v, &mass.v, nu, dt, params)?;
    let mut vel = VectorField { u: u2, v: v2 };
    apply_kinematic_data(&mut vel, eta_t);

    // Projection: solve B M^-1 B^T phi = B vel on the mean-free subspace,
    // then correct the free samples. The scaling below turns phi into the
    // pressure; its sign follows from B^T being minus the mass-weighted
    // mapped gradient.
    let b_field = flux_divergence(&vel, eta)?;
    let flux_defect = b_field.mean();
    let hx = g.hx();
    let hy = g.hy();
    let ncell = g.nx * g.ny;

    let mut diag = vec![0.0; ncell];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let mut dsum = 0.0;
            if i >= 1 {
                let e = eta.at(i);
                dsum += e * e / (hx * hx * mass.u.at(i, j));
            }
            if i + 1 <= g.nx - 1 {
                let e = eta.at(i + 1);
                dsum += e * e / (hx * hx * mass.u.at(i + 1, j));
            }
            if j >= 1 {
                dsum += 1.0 / (hy * hy * mass.v.at(i, j));
            }
            if j + 1 <= g.ny - 1 {
                dsum += 1.0 / (hy * hy * mass.v.at(i, j + 1));
            }
            diag[i * g.ny + j] = dsum;
        }
    }

    let apply = |xv: &[f64], out: &mut [f64]| {
        let mut phi = ScalarField::zeros(g, Role::Center);
        phi.values_mut().copy_from_slice(xv);
        let grad = flux_divergence_adjoint(&phi, eta).expect("layout fixed by construction");
        let mut w = VectorField::zeros(g);
        for i in 1..g.nx {
            for j in 0..g.ny {
                w.u.set(i, j, grad.u.at(i, j) / mass.u.at(i, j));
            }
        }
        for i in 0..g.nx {
            for j in 1..g.ny {
                w.v.set(i, j, grad.v.at(i, j) / mass.v.at(i, j));
            }
        }
        let div = flux_divergence(&w, eta).expect("layout fixed by construction");
        out.copy_from_slice(div.values());
    };

    let scale = -params.density / (dt * hx * hy);
    let mut phi = vec![0.0; ncell];
    for (target, pv) in phi.iter_mut().zip(state.p.values()) {
        *target = pv / scale;
    }
    let pressure = pcg(
        apply,
        Some(&diag),
        b_field.values(),
        &mut phi,
        params.cg_tol,
        params.cg_max_iter,
        Some(&remove_mean),
    )?;

    let mut phif = ScalarField::zeros(g, Role::Center);
    phif.values_mut().copy_from_slice(&phi);
    let grad = flux_divergence_adjoint(&phif, eta)?;
    for i in 1..g.nx {
        for j in 0..g.ny {
            *vel.u.at_mut(i, j) -= grad.u.at(i, j) / mass.u.at(i, j);
        }
    }
    for i in 0..g.nx {
        for j in 1..g.ny {
            *vel.v.at_mut(i, j) -= grad.v.at(i, j) / mass.v.at(i, j);
        }
    }
    let mut p = phif;
    p.scale(scale);
    let gauge = p.mean();
    for pv in p.values_mut() {
        *pv -= gauge;
    }

    let post_divergence = geometry::mapped_divergence(&vel, eta, UTrace::Zero)?.linf();
    Ok(FluidStepReport {
        state: FluidState { v: vel, p },
        diffusion_iterations: [iter_u, iter_v],
        pressure,
        post_divergence,
        flux_defect,
        cfl,
    })
}

/// Which stress the interface hands to the plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StressForm {
    /// `mu n.(grad v)n - p`: the traction of the componentwise viscous
    /// operator actually discretized, so coupled energy budgets close.
    GradientOnly,
    /// `2 mu n.(eps v)n - p`: the physical Cauchy traction. Its
    /// normal-normal viscous part equals the gradient one's times two,
    /// because `n.(eps v)n = n.(grad v)n` for any velocity field.
    FullTraction,
}

/// Normal-normal interface traction resolved onto the plate nodes, scaled
/// by the surface element: the load density `-sigma_nn sqrt(1 + eta'^2)`
/// the flow exerts on the plate, zero at the pinned ends.
///
/// One-sided stencils reach the interface from inside; the horizontal
/// derivative of `u` comes from the no-slip trace identity `du/dx = -eta'
/// du/dy` along the moving boundary, and the horizontal derivative of `v`
/// differences the stored top-row datum, so no ghost values are invented.
pub fn interface_load(
    state: &FluidState,
    eta: &PlateField,
    params: &FluidParams,
    form: StressForm,
) -> Result<PlateField> {
    params.validate()?;
    let g = eta.grid;
    state.check(g)?;
    eta.check_positive()?;
    let hx = g.hx();
    let hy = g.hy();
    let ny = g.ny;
    let mu = params.viscosity;
    let c = match form {
        StressForm::GradientOnly => 1.0,
        StressForm::FullTraction => 2.0,
    };
    let dv_face = |ic: usize| {
        (3.0 * state.v.v.at(ic, ny) - 4.0 * state.v.v.at(ic, ny - 1) + state.v.v.at(ic, ny - 2))
            / (2.0 * hy)
            / eta.face(ic)
    };
    let p_face = |ic: usize| {
        (15.0 * state.p.at(ic, ny - 1) - 10.0 * state.p.at(ic, ny - 2)
            + 3.0 * state.p.at(ic, ny - 3))
            / 8.0
    };
    let mut out = PlateField::zeros(g);
    for i in 1..g.nx {
        let a = eta.node_slope(i);
        let e = eta.at(i);
        let uy = (state.v.u.at(i, ny - 2) - 9.0 * state.v.u.at(i, ny - 1)) / (3.0 * hy) / e;
        let ux = -a * uy;
        let vy = 0.5 * (dv_face(i - 1) + dv_face(i));
        let trace_x = (state.v.v.at(i, ny) - state.v.v.at(i - 1, ny)) / hx;
        let vx = trace_x - a * vy;
        let p_top = 0.5 * (p_face(i - 1) + p_face(i));
        let n2 = 1.0 + a * a;
        let t = (a * a * ux - a * (uy + vx) + vy) / n2;
        let sigma = c * mu * t - p_top;
        *out.at_mut(i) = -sigma * n2.sqrt();
    }
    Ok(out)
}
