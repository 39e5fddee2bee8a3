//! Graph-map machinery between two channel domains `0 <= y <= eta_k(x)`.
//!
//! The map `psi(x, y) = (x, gamma(x) y)` with `gamma = eta2 / eta1` carries
//! domain 1 onto domain 2. Its Jacobian and the companion matrix evaluated
//! at image points drive the divergence-preserving field transforms. Fields
//! over either domain are stored on the reference rectangle with
//! `y_ref = y / eta(x)`, so `psi` is the identity in reference coordinates
//! and only the algebraic matrix factors act on component values.
//!
//! The mapped operators here are written in flux form: the vertical flux
//! through a horizontal face is `v - y_ref * eta' * u`, the horizontal flux
//! through a vertical face is `eta * u`, and the mapped divergence is the
//! plain flux balance divided by `eta`. Face slopes of `eta` are exact
//! staggered differences, which is what lets the transform module preserve
//! discrete divergence to rounding rather than to truncation order.

use crate::error::{Error, Result};
use crate::grid::{self, GridSpec, PlateField, Role, ScalarField, SymTensorField, VectorField};

/// Small dense 2x2 matrix (row major).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_diff(&self, other: &Mat2) -> f64 {
        let mut m = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                m = m.max((self.0[r][c] - other.0[r][c]).abs());
            }
        }
        m
    }
}

/// Vertical rescaling map between two channel geometries on one grid.
#[derive(Debug, Clone)]
pub struct DomainMap {
    pub grid: GridSpec,
    pub eta1: PlateField,
    pub eta2: PlateField,
    /// `eta2 / eta1` at plate nodes.
    pub gamma: PlateField,
    /// Nodal derivative of `gamma` (centered, one-sided second order at ends).
    pub dx_gamma: PlateField,
}

impl DomainMap {
    pub fn build(eta1: &PlateField, eta2: &PlateField) -> Result<DomainMap> {
        if eta1.grid != eta2.grid {
            return Err(Error::shape("domain map requires both heights on one grid"));
        }
        eta1.check_positive()?;
        eta2.check_positive()?;
        let grid = eta1.grid;
        let mut gamma = PlateField::zeros(grid);
        for i in 0..gamma.len() {
            *gamma.at_mut(i) = eta2.at(i) / eta1.at(i);
        }
        let mut dx_gamma = PlateField::zeros(grid);
        for i in 0..gamma.len() {
            *dx_gamma.at_mut(i) = gamma.node_slope(i);
        }
        Ok(DomainMap {
            grid,
            eta1: eta1.clone(),
            eta2: eta2.clone(),
            gamma,
            dx_gamma,
        })
    }

    /// Jacobian bundle at plate node `i` and physical height `y` in domain 1.
    /// `j`/`j_inv` are taken at `(x_i, y)`; `jt`/`jt_inv` at the image point
    /// `(x_i, gamma y)`, so `jt_inv` equals `j_inv` composed back through the
    /// map — the identity the transform algebra relies on.
    pub fn jacobians(&self, i: usize, y: f64) -> Result<JacobianSet> {
        if i >= self.gamma.len() {
            return Err(Error::domain(format!("node index {i} out of range")));
        }
        let e1 = self.eta1.at(i);
        if !(0.0..=e1 * (1.0 + 1e-9)).contains(&y) {
            return Err(Error::domain(format!(
                "height {y} outside [0, {e1}] at node {i}"
            )));
        }
        let g = self.gamma.at(i);
        let dg = self.dx_gamma.at(i);
        let j = Mat2([[1.0, 0.0], [y * dg, g]]);
        let j_inv = Mat2([[1.0, 0.0], [-y * dg / g, 1.0 / g]]);
        let y_img = g * y;
        // At the image height, y_img / gamma recovers y, so these equal the
        // matrices above entrywise; they are derived independently from the
        // image coordinates on purpose.
        let jt = Mat2([[1.0, 0.0], [y_img / g * dg, g]]);
        let jt_inv = Mat2([[1.0, 0.0], [-y_img * dg / (g * g), 1.0 / g]]);
        Ok(JacobianSet { j, j_inv, jt, jt_inv })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JacobianSet {
    pub j: Mat2,
    pub j_inv: Mat2,
    pub jt: Mat2,
    pub jt_inv: Mat2,
}

/// Outward unit normal of the moving interface `y = eta(x)`, nodewise.
#[derive(Debug, Clone)]
pub struct InterfaceNormal {
    pub n_x: PlateField,
    pub n_y: PlateField,
}

pub fn interface_normal(eta: &PlateField) -> InterfaceNormal {
    let mut n_x = PlateField::zeros(eta.grid);
    let mut n_y = PlateField::zeros(eta.grid);
    for i in 0..eta.len() {
        let s = eta.node_slope(i);
        let d = (1.0 + s * s).sqrt();
        *n_x.at_mut(i) = -s / d;
        *n_y.at_mut(i) = 1.0 / d;
    }
    InterfaceNormal { n_x, n_y }
}

/// Which way a sample is pulled through the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// Source field lives on domain 2, value wanted on domain 1 (`w o psi`).
    Hat,
    /// Source field lives on domain 1, value wanted on domain 2 (`u o psi^-1`).
    Check,
}

/// Piecewise-linear evaluation of a plate field between nodes.
pub fn plate_value_at(f: &PlateField, x: f64) -> Result<f64> {
    let g = &f.grid;
    let slack = 1e-9;
    if !(-slack..=g.length + slack).contains(&x) {
        return Err(Error::domain(format!("x = {x} outside [0, {}]", g.length)));
    }
    let s = (x / g.hx()).clamp(0.0, g.nx as f64);
    let i0 = (s.floor() as usize).min(g.nx - 1);
    let t = s - i0 as f64;
    Ok(f.at(i0) * (1.0 - t) + f.at(i0 + 1) * t)
}

/// Sample the composition of a field with the domain map. `y` is the
/// physical height in the *target* domain; the matched source point shares
/// the reference coordinate `y / eta_target(x)`, where the source field is
/// read by bilinear interpolation (exact for fields linear in y).
pub fn pushforward_sample(
    map: &DomainMap,
    field: &ScalarField,
    x: f64,
    y: f64,
    direction: MapDirection,
) -> Result<f64> {
    if field.grid != map.grid {
        return Err(Error::shape("field grid differs from map grid"));
    }
    let eta_target = match direction {
        MapDirection::Hat => &map.eta1,
        MapDirection::Check => &map.eta2,
    };
    let h = plate_value_at(eta_target, x)?;
    let yref = y / h;
    if !(-1e-9..=1.0 + 1e-9).contains(&yref) {
        return Err(Error::domain(format!(
            "height {y} outside [0, {h}] of the target domain at x = {x}"
        )));
    }
    field.sample_bilinear(x, yref.clamp(0.0, 1.0))
}

/// How the horizontal component is continued onto the top/bottom edges when
/// interpolating it to horizontal-face points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UTrace {
    /// One-sided continuation from the nearest three rows.
    Extrapolate,
    /// Walls: the tangential trace is zero.
    Zero,
}

/// Interpolate the horizontal component to horizontal-face points.
///
/// Interior faces take the half-cell average, whose leading error is
/// `h^2/8` times the vertical curvature. The one-sided edge stencil is
/// chosen to reproduce that same curvature response (rather than the exact
/// quadratic extrapolation), so the interpolation error varies smoothly
/// across the last face and flux differences stay uniformly second order;
/// an exact edge stencil would make the error structure jump there and
/// leave an O(h) residue in the adjacent cell's flux balance.
pub fn interp_u_to_facey(u: &ScalarField, trace: UTrace) -> Result<ScalarField> {
    if u.role != Role::FaceX {
        return Err(Error::shape("expected a face-x field"));
    }
    let g = u.grid;
    let mut out = ScalarField::zeros(g, Role::FaceY);
    let edge = |i: usize, rows: [usize; 3]| -> f64 {
        2.0 * u.at(i, rows[0]) - 1.5 * u.at(i, rows[1]) + 0.5 * u.at(i, rows[2])
    };
    for i in 0..g.nx {
        for j in 0..=g.ny {
            let val = if j == 0 {
                match trace {
                    UTrace::Zero => 0.0,
                    UTrace::Extrapolate => 0.5 * (edge(i, [0, 1, 2]) + edge(i + 1, [0, 1, 2])),
                }
            } else if j == g.ny {
                match trace {
                    UTrace::Zero => 0.0,
                    UTrace::Extrapolate => {
                        let r = [g.ny - 1, g.ny - 2, g.ny - 3];
                        0.5 * (edge(i, r) + edge(i + 1, r))
                    }
                }
            } else {
                0.25 * (u.at(i, j - 1) + u.at(i + 1, j - 1) + u.at(i, j) + u.at(i + 1, j))
            };
            out.set(i, j, val);
        }
    }
    Ok(out)
}

/// Contravariant fluxes of a staggered field under the graph map of `eta`:
/// `eta u` through vertical faces, `v - y_ref eta' u` through horizontal
/// ones. The flat flux balance of these equals `eta` times the physical
/// divergence.
pub fn mapped_fluxes(
    f: &VectorField,
    eta: &PlateField,
    trace: UTrace,
) -> Result<(ScalarField, ScalarField)> {
    let g = f.grid();
    if eta.grid != g {
        return Err(Error::shape("eta grid differs from field grid"));
    }
    eta.check_positive()?;
    let hy = g.hy();
    let mut fx = ScalarField::zeros(g, Role::FaceX);
    for i in 0..=g.nx {
        for j in 0..g.ny {
            fx.set(i, j, eta.at(i) * f.u.at(i, j));
        }
    }
    let iu = interp_u_to_facey(&f.u, trace)?;
    let mut fy = ScalarField::zeros(g, Role::FaceY);
    for i in 0..g.nx {
        let slope = eta.face_slope(i);
        for j in 0..=g.ny {
            let yref = j as f64 * hy;
            fy.set(i, j, f.v.at(i, j) - yref * slope * iu.at(i, j));
        }
    }
    Ok((fx, fy))
}

/// Physical divergence of a field stored on the reference rectangle of the
/// channel with height `eta`, cellwise.
pub fn mapped_divergence(f: &VectorField, eta: &PlateField, trace: UTrace) -> Result<ScalarField> {
    let (fx, fy) = mapped_fluxes(f, eta, trace)?;
    let g = f.grid();
    let hx = g.hx();
    let hy = g.hy();
    let mut out = ScalarField::zeros(g, Role::Center);
    for i in 0..g.nx {
        let ec = eta.face(i);
        for j in 0..g.ny {
            let bal = (fx.at(i + 1, j) - fx.at(i, j)) / hx + (fy.at(i, j + 1) - fy.at(i, j)) / hy;
            out.set(i, j, bal / ec);
        }
    }
    Ok(out)
}

/// Physical first derivatives at cell centers for a field stored on the
/// reference rectangle of the channel with height `eta`:
/// `(du/dx, du/dy, dv/dx, dv/dy)` with the chain-rule metric applied.
pub fn mapped_center_gradients(
    f: &VectorField,
    eta: &PlateField,
) -> Result<(ScalarField, ScalarField, ScalarField, ScalarField)> {
    let g = f.grid();
    if eta.grid != g {
        return Err(Error::shape("eta grid differs from field grid"));
    }
    eta.check_positive()?;
    let (rux, ruy, rvx, rvy) = grid::center_gradients(f);
    let hy = g.hy();
    let mut dudx = ScalarField::zeros(g, Role::Center);
    let mut dudy = ScalarField::zeros(g, Role::Center);
    let mut dvdx = ScalarField::zeros(g, Role::Center);
    let mut dvdy = ScalarField::zeros(g, Role::Center);
    for i in 0..g.nx {
        let ec = eta.face(i);
        let slope = eta.face_slope(i);
        for j in 0..g.ny {
            let yref = (j as f64 + 0.5) * hy;
            let shift = yref * slope / ec;
            *dudx.at_mut(i, j) = rux.at(i, j) - shift * ruy.at(i, j);
            *dudy.at_mut(i, j) = ruy.at(i, j) / ec;
            *dvdx.at_mut(i, j) = rvx.at(i, j) - shift * rvy.at(i, j);
            *dvdy.at_mut(i, j) = rvy.at(i, j) / ec;
        }
    }
    Ok((dudx, dudy, dvdx, dvdy))
}

/// Physical symmetric gradient at cell centers on the channel of height `eta`.
pub fn mapped_sym_gradient(f: &VectorField, eta: &PlateField) -> Result<SymTensorField> {
    let (dudx, dudy, dvdx, dvdy) = mapped_center_gradients(f, eta)?;
    let g = f.grid();
    let mut out = SymTensorField::zeros(g);
    out.exx = dudx;
    out.eyy = dvdy;
    for i in 0..g.nx {
        for j in 0..g.ny {
            *out.exy.at_mut(i, j) = 0.5 * (dudy.at(i, j) + dvdx.at(i, j));
        }
    }
    Ok(out)
}

/// Squared L2 norm of the full physical gradient over the channel of height
/// `eta` (all four entries, Jacobian-weighted quadrature).
pub fn mapped_gradient_sq(f: &VectorField, eta: &PlateField) -> Result<f64> {
    let (dudx, dudy, dvdx, dvdy) = mapped_center_gradients(f, eta)?;
    let mut acc = 0.0;
    for part in [&dudx, &dudy, &dvdx, &dvdy] {
        let n = part.l2_norm(eta)?;
        acc += n * n;
    }
    Ok(acc)
}
