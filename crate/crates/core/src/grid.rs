//! Staggered fields on the reference rectangle `[0, L] x [0, 1]`.
//!
//! Layout is the usual marker-and-cell arrangement: scalars (pressure,
//! divergence) live at cell centers, the horizontal velocity component on
//! vertical faces, the vertical component on horizontal faces, and purely
//! one-dimensional data (plate elevation, Jacobian weights) at the `nx + 1`
//! nodes of the bottom edge. With this placement the discrete divergence of
//! a gradient collapses to the 5-point Laplacian on interior cells, and
//! `gradient` is exactly the negative adjoint of `divergence` for fields
//! that vanish on boundary faces — both identities are load-bearing for the
//! projection solver and are pinned by tests here.
//!
//! Norms take an explicit weight `w(x)` sampled at plate nodes: integrals
//! over the physical domain `0 <= y <= eta(x)` pull back to the reference
//! rectangle with Jacobian `eta`, so the weighted norm with `w = eta` is the
//! physical L2 norm.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Uniform staggered grid over `[0, length] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, length: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::config(format!(
                "grid must be at least 8x8, got {nx}x{ny}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::config(format!("grid length must be positive, got {length}")));
        }
        Ok(GridSpec { nx, ny, length })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.length / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    /// Trapezoid quadrature weight for the `i`-th plate node.
    #[inline]
    pub fn node_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx {
            0.5 * self.hx()
        } else {
            self.hx()
        }
    }
}

/// Where on the cell a field's samples sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Center,
    Node,
    FaceX,
    FaceY,
}

impl Role {
    pub fn tag(&self) -> &'static str {
        match self {
            Role::Center => "center",
            Role::Node => "node",
            Role::FaceX => "face-x",
            Role::FaceY => "face-y",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Role> {
        match tag {
            "center" => Ok(Role::Center),
            "node" => Ok(Role::Node),
            "face-x" => Ok(Role::FaceX),
            "face-y" => Ok(Role::FaceY),
            other => Err(Error::Format(format!("unknown role tag {other:?}"))),
        }
    }

    /// Sample counts (in x, in y) on `grid`.
    pub fn dims(&self, grid: &GridSpec) -> (usize, usize) {
        match self {
            Role::Center => (grid.nx, grid.ny),
            Role::Node => (grid.nx + 1, grid.ny + 1),
            Role::FaceX => (grid.nx + 1, grid.ny),
            Role::FaceY => (grid.nx, grid.ny + 1),
        }
    }

    /// x-coordinate of sample column `i`.
    #[inline]
    pub fn x(&self, grid: &GridSpec, i: usize) -> f64 {
        let off = match self {
            Role::Center | Role::FaceY => 0.5,
            Role::Node | Role::FaceX => 0.0,
        };
        (i as f64 + off) * grid.hx()
    }

    /// Reference y-coordinate of sample row `j`.
    #[inline]
    pub fn y(&self, grid: &GridSpec, j: usize) -> f64 {
        let off = match self {
            Role::Center | Role::FaceX => 0.5,
            Role::Node | Role::FaceY => 0.0,
        };
        (j as f64 + off) * grid.hy()
    }
}

/// Scalar samples on the reference rectangle, row-major in x.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub role: Role,
    data: Vec<f64>,
    ncols: usize,
    nrows: usize,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec, role: Role) -> Self {
        let (nrows, ncols) = role.dims(&grid);
        ScalarField {
            grid,
            role,
            data: vec![0.0; nrows * ncols],
            ncols,
            nrows,
        }
    }

    /// Sample `f(x, y)` at this role's points; `y` is the reference height.
    pub fn from_fn(grid: GridSpec, role: Role, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, role);
        for i in 0..out.nrows {
            let x = role.x(&grid, i);
            for j in 0..out.ncols {
                out.data[i * out.ncols + j] = f(x, role.y(&grid, j));
            }
        }
        out
    }

    /// (samples in x, samples in y)
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[i * self.ncols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        *self.at_mut(i, j) = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_layout(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid || self.role != other.role {
            return Err(Error::shape(format!(
                "fields disagree: {:?}/{} vs {:?}/{}",
                self.grid,
                self.role.tag(),
                other.grid,
                other.role.tag()
            )));
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) -> Result<()> {
        self.same_layout(other)?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.data {
            *s *= a;
        }
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature weight of sample `(i, j)`: cell area with trapezoid halving
    /// on rows/columns that sit on the rectangle boundary.
    pub(crate) fn quad_weight(&self, i: usize, j: usize) -> f64 {
        let hx = self.grid.hx();
        let hy = self.grid.hy();
        let wx = match self.role {
            Role::Center | Role::FaceY => hx,
            Role::Node | Role::FaceX => {
                if i == 0 || i == self.nrows - 1 {
                    0.5 * hx
                } else {
                    hx
                }
            }
        };
        let wy = match self.role {
            Role::Center | Role::FaceX => hy,
            Role::Node | Role::FaceY => {
                if j == 0 || j == self.ncols - 1 {
                    0.5 * hy
                } else {
                    hy
                }
            }
        };
        wx * wy
    }

    /// Weight field `w(x)` interpolated to this sample column's x-position.
    pub(crate) fn weight_at(&self, w: &PlateField, i: usize) -> f64 {
        match self.role {
            Role::Node | Role::FaceX => w.at(i),
            Role::Center | Role::FaceY => 0.5 * (w.at(i) + w.at(i + 1)),
        }
    }

    /// Weighted L2 norm: `sqrt( sum f^2 w(x) dA )`. With `w = eta` this is
    /// the L2 norm over the physical domain under the graph map.
    pub fn l2_norm(&self, weight: &PlateField) -> Result<f64> {
        weight.check_positive()?;
        if weight.grid != self.grid {
            return Err(Error::shape("weight grid differs from field grid"));
        }
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let w = self.weight_at(weight, i);
            for j in 0..self.ncols {
                let v = self.at(i, j);
                acc += v * v * w * self.quad_weight(i, j);
            }
        }
        Ok(acc.sqrt())
    }

    pub fn mean(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                let q = self.quad_weight(i, j);
                num += self.at(i, j) * q;
                den += q;
            }
        }
        num / den
    }

    /// Bilinear interpolation at `(x, yref)`. At the half-cell margins next
    /// to the rectangle edge (where centered samples stop) the edge pair is
    /// extrapolated linearly, so fields linear in x or y reproduce exactly
    /// everywhere. Points outside the rectangle (beyond 1e-9 slack) are a
    /// domain error.
    pub fn sample_bilinear(&self, x: f64, yref: f64) -> Result<f64> {
        let g = &self.grid;
        let slack = 1e-9;
        if !(-slack..=g.length + slack).contains(&x) || !(-slack..=1.0 + slack).contains(&yref) {
            return Err(Error::domain(format!(
                "sample point ({x}, {yref}) outside [0, {}] x [0, 1]",
                g.length
            )));
        }
        let pos = |coord: f64, h: f64, staggered: bool, n: usize| -> (usize, f64) {
            // Fractional index into this role's sample columns/rows.
            let s = if staggered { coord / h - 0.5 } else { coord / h };
            let mut i0 = s.floor() as isize;
            // Edge margins: extrapolate from the first/last pair.
            i0 = i0.clamp(0, n as isize - 2);
            (i0 as usize, s - i0 as f64)
        };
        let x_stag = matches!(self.role, Role::Center | Role::FaceY);
        let y_stag = matches!(self.role, Role::Center | Role::FaceX);
        let (i0, tx) = pos(x, g.hx(), x_stag, self.nrows);
        let (j0, ty) = pos(yref, g.hy(), y_stag, self.ncols);
        let f00 = self.at(i0, j0);
        let f10 = self.at(i0 + 1, j0);
        let f01 = self.at(i0, j0 + 1);
        let f11 = self.at(i0 + 1, j0 + 1);
        Ok(f00 * (1.0 - tx) * (1.0 - ty)
            + f10 * tx * (1.0 - ty)
            + f01 * (1.0 - tx) * ty
            + f11 * tx * ty)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(
            w,
            "role,nx,ny,length\n{},{},{},{:.16e}",
            self.role.tag(),
            self.grid.nx,
            self.grid.ny,
            self.grid.length
        )?;
        for i in 0..self.nrows {
            let row: Vec<String> = (0..self.ncols)
                .map(|j| format!("{:.16e}", self.at(i, j)))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<ScalarField> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty field file".into()))??;
        if header.trim() != "role,nx,ny,length" {
            return Err(Error::Format(format!("bad field header {header:?}")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::Format("missing field metadata row".into()))??;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("bad metadata row {meta:?}")));
        }
        let role = Role::from_tag(parts[0])?;
        let nx: usize = parts[1]
            .parse()
            .map_err(|_| Error::Format(format!("bad nx {:?}", parts[1])))?;
        let ny: usize = parts[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad ny {:?}", parts[2])))?;
        let length: f64 = parts[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad length {:?}", parts[3])))?;
        let grid = GridSpec::new(nx, ny, length)?;
        let mut field = ScalarField::zeros(grid, role);
        for i in 0..field.nrows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("field file truncated at row {i}")))??;
            let vals: Vec<&str> = line.trim().split(',').collect();
            if vals.len() != field.ncols {
                return Err(Error::Format(format!(
                    "row {i} has {} values, expected {}",
                    vals.len(),
                    field.ncols
                )));
            }
            for (j, v) in vals.iter().enumerate() {
                field.data[i * field.ncols + j] = v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad float {v:?} at ({i}, {j})")))?;
            }
        }
        Ok(field)
    }
}

/// Staggered velocity field: `u` on vertical faces, `v` on horizontal faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            u: ScalarField::zeros(grid, Role::FaceX),
            v: ScalarField::zeros(grid, Role::FaceY),
        }
    }

    /// Sample analytic components at their face points (`y` is reference height).
    pub fn from_fn(
        grid: GridSpec,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        VectorField {
            u: ScalarField::from_fn(grid, Role::FaceX, fu),
            v: ScalarField::from_fn(grid, Role::FaceY, fv),
        }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.u.grid
    }

    pub fn same_layout(&self, other: &VectorField) -> Result<()> {
        self.u.same_layout(&other.u)?;
        self.v.same_layout(&other.v)
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) -> Result<()> {
        self.u.axpy(a, &other.u)?;
        self.v.axpy(a, &other.v)
    }

    pub fn scale(&mut self, a: f64) {
        self.u.scale(a);
        self.v.scale(a);
    }

    pub fn linf(&self) -> f64 {
        self.u.linf().max(self.v.linf())
    }

    pub fn l2_norm(&self, weight: &PlateField) -> Result<f64> {
        let nu = self.u.l2_norm(weight)?;
        let nv = self.v.l2_norm(weight)?;
        Ok((nu * nu + nv * nv).sqrt())
    }
}

/// Nodal samples of a function of x alone (plate elevation, weights).
#[derive(Debug, Clone, PartialEq)]
pub struct PlateField {
    pub grid: GridSpec,
    data: Vec<f64>,
}

impl PlateField {
    pub fn zeros(grid: GridSpec) -> Self {
        PlateField {
            grid,
            data: vec![0.0; grid.nx + 1],
        }
    }

    pub fn ones(grid: GridSpec) -> Self {
        PlateField {
            grid,
            data: vec![1.0; grid.nx + 1],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        let hx = grid.hx();
        PlateField {
            grid,
            data: (0..=grid.nx).map(|i| f(i as f64 * hx)).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.data[i]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Midpoint value between nodes `i` and `i + 1`.
    #[inline]
    pub fn face(&self, i: usize) -> f64 {
        0.5 * (self.data[i] + self.data[i + 1])
    }

    /// Exact staggered derivative at the midpoint between nodes `i`, `i + 1`.
    #[inline]
    pub fn face_slope(&self, i: usize) -> f64 {
        (self.data[i + 1] - self.data[i]) / self.grid.hx()
    }

    /// Nodal derivative: centered inside, one-sided second order at the ends.
    pub fn node_slope(&self, i: usize) -> f64 {
        let h = self.grid.hx();
        let n = self.grid.nx;
        if i == 0 {
            (-3.0 * self.data[0] + 4.0 * self.data[1] - self.data[2]) / (2.0 * h)
        } else if i == n {
            (3.0 * self.data[n] - 4.0 * self.data[n - 1] + self.data[n - 2]) / (2.0 * h)
        } else {
            (self.data[i + 1] - self.data[i - 1]) / (2.0 * h)
        }
    }

    pub fn check_positive(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::domain(format!(
                    "weight must be strictly positive, found {v} at node {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |f| + max |f'|`, the discrete counterpart of the `1,infinity` norm.
    pub fn norm_1_inf(&self) -> f64 {
        let slope = (0..self.len()).fold(0.0f64, |m, i| m.max(self.node_slope(i).abs()));
        self.linf() + slope
    }

    /// Trapezoid L2 norm on the bottom edge.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.grid.node_weight(i) * self.data[i] * self.data[i];
        }
        acc.sqrt()
    }

    /// Trapezoid integral over the bottom edge.
    pub fn integral(&self) -> f64 {
        (0..self.len()).map(|i| self.grid.node_weight(i) * self.data[i]).sum()
    }

    pub fn axpy(&mut self, a: f64, other: &PlateField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::shape("plate fields on different grids"));
        }
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.data {
            *s *= a;
        }
    }
}

/// Cell-centered symmetric 2x2 tensor samples (one shear entry stored).
#[derive(Debug, Clone)]
pub struct SymTensorField {
    pub exx: ScalarField,
    pub eyy: ScalarField,
    pub exy: ScalarField,
}

impl SymTensorField {
    pub fn zeros(grid: GridSpec) -> Self {
        SymTensorField {
            exx: ScalarField::zeros(grid, Role::Center),
            eyy: ScalarField::zeros(grid, Role::Center),
            exy: ScalarField::zeros(grid, Role::Center),
        }
    }

    /// Weighted squared Frobenius norm integrated over the rectangle:
    /// `int (exx^2 + eyy^2 + 2 exy^2) w dA`.
    pub fn frobenius_sq(&self, weight: &PlateField) -> Result<f64> {
        let xx = self.exx.l2_norm(weight)?;
        let yy = self.eyy.l2_norm(weight)?;
        let xy = self.exy.l2_norm(weight)?;
        Ok(xx * xx + yy * yy + 2.0 * xy * xy)
    }
}

/// Per-cell flux balance: `d(u)/dx + d(v)/dy` on the flat rectangle.
pub fn divergence(f: &VectorField) -> ScalarField {
    let grid = f.grid();
    let hx = grid.hx();
    let hy = grid.hy();
    let mut out = ScalarField::zeros(grid, Role::Center);
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let dudx = (f.u.at(i + 1, j) - f.u.at(i, j)) / hx;
            let dvdy = (f.v.at(i, j + 1) - f.v.at(i, j)) / hy;
            out.set(i, j, dudx + dvdy);
        }
    }
    out
}

/// Staggered gradient of a cell-centered scalar. Boundary faces carry zero,
/// which makes this exactly the negative adjoint of [`divergence`] under the
/// unweighted grid inner products.
pub fn gradient(s: &ScalarField) -> Result<VectorField> {
    if s.role != Role::Center {
        return Err(Error::shape(format!(
            "gradient expects cell-centered input, got {}",
            s.role.tag()
        )));
    }
    let grid = s.grid;
    let hx = grid.hx();
    let hy = grid.hy();
    let mut out = VectorField::zeros(grid);
    for i in 1..grid.nx {
        for j in 0..grid.ny {
            out.u.set(i, j, (s.at(i, j) - s.at(i - 1, j)) / hx);
        }
    }
    for i in 0..grid.nx {
        for j in 1..grid.ny {
            out.v.set(i, j, (s.at(i, j) - s.at(i, j - 1)) / hy);
        }
    }
    Ok(out)
}

/// All four first derivatives of a staggered vector field, sampled at cell
/// centers: `(du/dx, du/dy, dv/dx, dv/dy)` with respect to the reference
/// coordinates. Same-direction derivatives are exact staggered differences;
/// cross derivatives average centered differences, falling back to one-sided
/// second-order stencils on the first and last rows/columns.
pub fn center_gradients(f: &VectorField) -> (ScalarField, ScalarField, ScalarField, ScalarField) {
    let grid = f.grid();
    let hx = grid.hx();
    let hy = grid.hy();
    let mut dudx = ScalarField::zeros(grid, Role::Center);
    let mut dudy = ScalarField::zeros(grid, Role::Center);
    let mut dvdx = ScalarField::zeros(grid, Role::Center);
    let mut dvdy = ScalarField::zeros(grid, Role::Center);

    for i in 0..grid.nx {
        for j in 0..grid.ny {
            *dudx.at_mut(i, j) = (f.u.at(i + 1, j) - f.u.at(i, j)) / hx;
            *dvdy.at_mut(i, j) = (f.v.at(i, j + 1) - f.v.at(i, j)) / hy;
        }
    }

    // d(u)/dy at a vertical-face column, row j of centers.
    let u_dy = |i: usize, j: usize| -> f64 {
        if j == 0 {
            (-3.0 * f.u.at(i, 0) + 4.0 * f.u.at(i, 1) - f.u.at(i, 2)) / (2.0 * hy)
        } else if j == grid.ny - 1 {
            (3.0 * f.u.at(i, j) - 4.0 * f.u.at(i, j - 1) + f.u.at(i, j - 2)) / (2.0 * hy)
        } else {
            (f.u.at(i, j + 1) - f.u.at(i, j - 1)) / (2.0 * hy)
        }
    };
    // d(v)/dx at a horizontal-face row, column i of centers.
    let v_dx = |i: usize, j: usize| -> f64 {
        if i == 0 {
            (-3.0 * f.v.at(0, j) + 4.0 * f.v.at(1, j) - f.v.at(2, j)) / (2.0 * hx)
        } else if i == grid.nx - 1 {
            (3.0 * f.v.at(i, j) - 4.0 * f.v.at(i - 1, j) + f.v.at(i - 2, j)) / (2.0 * hx)
        } else {
            (f.v.at(i + 1, j) - f.v.at(i - 1, j)) / (2.0 * hx)
        }
    };

    for i in 0..grid.nx {
        for j in 0..grid.ny {
            *dudy.at_mut(i, j) = 0.5 * (u_dy(i, j) + u_dy(i + 1, j));
            *dvdx.at_mut(i, j) = 0.5 * (v_dx(i, j) + v_dx(i, j + 1));
        }
    }
    (dudx, dudy, dvdx, dvdy)
}

/// Symmetric gradient sampled at cell centers.
pub fn sym_gradient(f: &VectorField) -> SymTensorField {
    let (dudx, dudy, dvdx, dvdy) = center_gradients(f);
    let grid = f.grid();
    let mut out = SymTensorField::zeros(grid);
    out.exx = dudx;
    out.eyy = dvdy;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            *out.exy.at_mut(i, j) = 0.5 * (dudy.at(i, j) + dvdx.at(i, j));
        }
    }
    out
}

/// Unweighted grid inner product of two like fields (quadrature-weighted sum).
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.same_layout(b)?;
    let mut acc = 0.0;
    let (nr, nc) = a.dims();
    for i in 0..nr {
        for j in 0..nc {
            acc += a.at(i, j) * b.at(i, j) * a.quad_weight(i, j);
        }
    }
    Ok(acc)
}

/// Unweighted inner product of two staggered vector fields.
pub fn inner_vec(a: &VectorField, b: &VectorField) -> Result<f64> {
    Ok(inner(&a.u, &b.u)? + inner(&a.v, &b.v)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, n, 1.0).unwrap()
    }

    #[test]
    fn divergence_of_linear_field_vanishes() {
        let g = grid(16);
        let f = VectorField::from_fn(g, |x, _| x, |_, y| -y);
        let d = divergence(&f);
        assert!(d.linf() <= 1e-12, "divergence {:.3e}", d.linf());
    }

    #[test]
    fn gradient_of_linear_scalar_is_unit_on_interior_faces() {
        let g = grid(16);
        let s = ScalarField::from_fn(g, Role::Center, |x, _| x);
        let gr = gradient(&s).unwrap();
        for i in 1..g.nx {
            for j in 0..g.ny {
                assert_abs_diff_eq!(gr.u.at(i, j), 1.0, epsilon = 1e-13);
            }
        }
        assert!(gr.v.linf() <= 1e-13);
        // Boundary faces are zero by construction.
        for j in 0..g.ny {
            assert_eq!(gr.u.at(0, j), 0.0);
            assert_eq!(gr.u.at(g.nx, j), 0.0);
        }
    }

    #[test]
    fn gradient_rejects_non_centered_input() {
        let g = grid(8);
        let s = ScalarField::zeros(g, Role::Node);
        assert!(matches!(gradient(&s), Err(Error::Shape(_))));
    }

    #[test]
    fn sym_gradient_of_pure_shear() {
        let g = grid(16);
        let f = VectorField::from_fn(g, |_, y| y, |_, _| 0.0);
        let e = sym_gradient(&f);
        assert!(e.exx.linf() <= 1e-13);
        assert!(e.eyy.linf() <= 1e-13);
        for i in 0..g.nx {
            for j in 0..g.ny {
                assert_abs_diff_eq!(e.exy.at(i, j), 0.5, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn sym_gradient_of_linear_stretch() {
        let g = grid(12);
        let f = VectorField::from_fn(g, |x, _| x, |_, y| -y);
        let e = sym_gradient(&f);
        for i in 0..g.nx {
            for j in 0..g.ny {
                assert_abs_diff_eq!(e.exx.at(i, j), 1.0, epsilon = 1e-13);
                assert_abs_diff_eq!(e.eyy.at(i, j), -1.0, epsilon = 1e-13);
                assert_abs_diff_eq!(e.exy.at(i, j), 0.0, epsilon = 1e-13);
            }
        }
    }

    /// Summation by parts: <grad s, f> = -<s, div f> exactly, for f vanishing
    /// on boundary faces.
    #[test]
    fn gradient_is_negative_adjoint_of_divergence() {
        let g = grid(16);
        let s = ScalarField::from_fn(g, Role::Center, |x, y| (3.1 * x).sin() * (2.7 * y).cos() + x * y);
        let mut f = VectorField::from_fn(
            g,
            |x, y| (x * (1.0 - x) * (5.0 * y).sin()) * 7.3,
            |x, y| ((2.0 * x).cos() * y * (1.0 - y)) * 4.1,
        );
        for j in 0..g.ny {
            f.u.set(0, j, 0.0);
            f.u.set(g.nx, j, 0.0);
        }
        for i in 0..g.nx {
            f.v.set(i, 0, 0.0);
            f.v.set(i, g.ny, 0.0);
        }
        let lhs = inner_vec(&gradient(&s).unwrap(), &f).unwrap();
        let rhs = -inner(&s, &divergence(&f)).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        assert!(
            (lhs - rhs).abs() <= 1e-12 * scale,
            "adjointness defect {:.3e}",
            (lhs - rhs).abs()
        );
    }

    /// divergence(gradient(s)) equals the 5-point Laplacian on interior cells.
    #[test]
    fn div_grad_is_five_point_laplacian() {
        let g = grid(16);
        let hx = g.hx();
        let hy = g.hy();
        let s = ScalarField::from_fn(g, Role::Center, |x, y| (4.0 * x).cos() * (3.0 * y).sin() + x * x);
        let lap = divergence(&gradient(&s).unwrap());
        for i in 1..g.nx - 1 {
            for j in 1..g.ny - 1 {
                let five = (s.at(i + 1, j) - 2.0 * s.at(i, j) + s.at(i - 1, j)) / (hx * hx)
                    + (s.at(i, j + 1) - 2.0 * s.at(i, j) + s.at(i, j - 1)) / (hy * hy);
                assert_abs_diff_eq!(lap.at(i, j), five, epsilon = 1e-9 * five.abs().max(1.0));
            }
        }
    }

    #[test]
    fn weighted_norm_matches_closed_forms() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, Role::Center, |_, _| 1.0);
        let w1 = PlateField::ones(g);
        assert_abs_diff_eq!(f.l2_norm(&w1).unwrap(), 1.0, epsilon = 1e-12);
        let w2 = PlateField::from_fn(g, |_| 2.0);
        assert_abs_diff_eq!(f.l2_norm(&w2).unwrap(), 2.0f64.sqrt(), epsilon = 1e-12);
        // Same closed forms for a face-sampled constant.
        let fx = ScalarField::from_fn(g, Role::FaceX, |_, _| 1.0);
        assert_abs_diff_eq!(fx.l2_norm(&w2).unwrap(), 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_weight_is_a_domain_error() {
        let g = grid(8);
        let f = ScalarField::zeros(g, Role::Center);
        let mut w = PlateField::ones(g);
        *w.at_mut(3) = 0.0;
        assert!(matches!(f.l2_norm(&w), Err(Error::Domain(_))));
        *w.at_mut(3) = -1.0;
        assert!(matches!(f.l2_norm(&w), Err(Error::Domain(_))));
    }

    #[test]
    fn mismatched_grids_are_a_shape_error() {
        let a = ScalarField::zeros(grid(8), Role::Center);
        let mut b = ScalarField::zeros(grid(16), Role::Center);
        assert!(matches!(a.same_layout(&b), Err(Error::Shape(_))));
        b = ScalarField::zeros(grid(8), Role::Node);
        assert!(matches!(a.same_layout(&b), Err(Error::Shape(_))));
    }

    fn fit_order(errors: &[(f64, f64)]) -> f64 {
        // Least-squares slope of log(err) against log(h).
        let n = errors.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (h, e) in errors {
            let (x, y) = (h.ln(), e.ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn operators_converge_at_second_order() {
        let mut div_errors = Vec::new();
        let mut sym_errors = Vec::new();
        println!("{:>6} {:>14} {:>14}", "n", "div err", "sym err");
        for n in [16usize, 32, 64] {
            let g = grid(n);
            let f = VectorField::from_fn(
                g,
                |x, y| (2.0 * x).sin() * (3.0 * y).cos(),
                |x, y| (1.5 * x).cos() * (2.5 * y).sin(),
            );
            let d = divergence(&f);
            let exact_div = ScalarField::from_fn(g, Role::Center, |x, y| {
                2.0 * (2.0 * x).cos() * (3.0 * y).cos() + 2.5 * (1.5 * x).cos() * (2.5 * y).cos()
            });
            let mut err = d.clone();
            err.axpy(-1.0, &exact_div).unwrap();
            div_errors.push((g.hx(), err.linf()));

            let e = sym_gradient(&f);
            let exact_exy = ScalarField::from_fn(g, Role::Center, |x, y| {
                0.5 * (-3.0 * (2.0 * x).sin() * (3.0 * y).sin()
                    - 1.5 * (1.5 * x).sin() * (2.5 * y).sin())
            });
            let mut err_xy = e.exy.clone();
            err_xy.axpy(-1.0, &exact_exy).unwrap();
            sym_errors.push((g.hx(), err_xy.linf()));
            println!(
                "{:>6} {:>14.6e} {:>14.6e}",
                n,
                div_errors.last().unwrap().1,
                sym_errors.last().unwrap().1
            );
        }
        let p_div = fit_order(&div_errors);
        let p_sym = fit_order(&sym_errors);
        println!("observed orders: div {p_div:.2}, sym {p_sym:.2}");
        assert!(p_div > 1.8, "divergence order {p_div:.2}");
        assert!(p_sym > 1.8, "sym gradient order {p_sym:.2}");
    }

    #[test]
    fn bilinear_sampling_is_exact_for_linear_fields() {
        let g = grid(16);
        for role in [Role::Center, Role::Node, Role::FaceX, Role::FaceY] {
            let f = ScalarField::from_fn(g, role, |x, y| 2.0 * x - 3.0 * y + 0.5);
            for &(x, y) in &[(0.0, 0.0), (0.013, 0.71), (0.5, 0.5), (1.0, 1.0), (0.99, 0.01)] {
                let got = f.sample_bilinear(x, y).unwrap();
                assert_abs_diff_eq!(got, 2.0 * x - 3.0 * y + 0.5, epsilon = 1e-12);
            }
        }
        assert!(matches!(
            ScalarField::zeros(g, Role::Center).sample_bilinear(1.2, 0.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = grid(8);
        let f = ScalarField::from_fn(g, Role::FaceY, |x, y| (31.0 * x).sin() * y + 1.0 / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = ScalarField::read_csv(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(f, back);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// All three operators are linear to rounding.
        #[test]
        fn operators_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let g = grid(12);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rand_field = |g: GridSpec| {
                let mut f = VectorField::zeros(g);
                for v in f.u.values_mut() { *v = rng.gen_range(-1.0..1.0); }
                for v in f.v.values_mut() { *v = rng.gen_range(-1.0..1.0); }
                f
            };
            let f1 = rand_field(g);
            let f2 = rand_field(g);
            let mut combo = f1.clone();
            combo.scale(a);
            combo.axpy(b, &f2).unwrap();

            let mut expect = divergence(&f1);
            expect.scale(a);
            expect.axpy(b, &divergence(&f2)).unwrap();
            let mut got = divergence(&combo);
            got.axpy(-1.0, &expect).unwrap();
            prop_assert!(got.linf() <= 1e-10);

            let e1 = sym_gradient(&f1);
            let e2 = sym_gradient(&f2);
            let ec = sym_gradient(&combo);
            for (c, (p, q)) in [(&ec.exx, (&e1.exx, &e2.exx)),
                                (&ec.eyy, (&e1.eyy, &e2.eyy)),
                                (&ec.exy, (&e1.exy, &e2.exy))] {
                let mut want = p.clone();
                want.scale(a);
                want.axpy(b, q).unwrap();
                want.axpy(-1.0, c).unwrap();
                prop_assert!(want.linf() <= 1e-9);
            }
        }

        /// Adjointness holds for arbitrary interior data, not just smooth fields.
        #[test]
        fn adjointness_for_random_fields(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let g = grid(10);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = ScalarField::zeros(g, Role::Center);
            for v in s.values_mut() { *v = rng.gen_range(-1.0..1.0); }
            let mut f = VectorField::zeros(g);
            for i in 1..g.nx {
                for j in 0..g.ny {
                    f.u.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            for i in 0..g.nx {
                for j in 1..g.ny {
                    f.v.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let lhs = inner_vec(&gradient(&s).unwrap(), &f).unwrap();
            let rhs = -inner(&s, &divergence(&f)).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }
}
