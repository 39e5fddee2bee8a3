//! Direct and iterative solvers for the two symmetric systems the steppers
//! produce: a narrow-banded positive definite matrix (plate), and a large
//! matrix-free positive semidefinite operator (pressure).

use crate::error::{Error, Result};

/// Symmetric banded matrix. Only the main diagonal and `bw` subdiagonals
/// are stored: `diags[d][i] = A[i + d][i]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        assert!(n > 0 && bw < n, "bandwidth must be below the matrix size");
        let diags = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        SymBanded { n, bw, diags }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.bw
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.diags[hi - lo][lo]
        }
    }

    /// Add `v` at `(i, j)` and, for off-diagonal entries, mirror it.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        assert!(hi - lo <= self.bw, "entry outside the band");
        self.diags[hi - lo][lo] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = self.diags[0][i] * x[i];
            for d in 1..=self.bw {
                if i >= d {
                    acc += self.diags[d][i - d] * x[i - d];
                }
                if i + d < self.n {
                    acc += self.diags[d][i] * x[i + d];
                }
            }
            y[i] = acc;
        }
        y
    }

    /// Banded Cholesky factorization `A = L L^T`. Fails when a pivot is not
    /// safely positive, which is how indefinite assemblies surface.
    pub fn factor(&self) -> Result<BandedCholesky> {
        let mut l = self.diags.clone();
        for j in 0..self.n {
            let start = j.saturating_sub(self.bw);
            let mut pivot = l[0][j];
            for k in start..j {
                let v = l[j - k][k];
                pivot -= v * v;
            }
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(Error::domain(format!(
                    "matrix is not positive definite (pivot {pivot:.3e} at row {j})"
                )));
            }
            let pivot = pivot.sqrt();
            l[0][j] = pivot;
            let last = (j + self.bw).min(self.n - 1);
            for i in j + 1..=last {
                let mut v = l[i - j][j];
                let kstart = i.saturating_sub(self.bw).max(start);
                for k in kstart..j {
                    v -= l[i - k][k] * l[j - k][k];
                }
                l[i - j][j] = v / pivot;
            }
        }
        Ok(BandedCholesky {
            n: self.n,
            bw: self.bw,
            diags: l,
        })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    diags: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut v = x[i];
            let start = i.saturating_sub(self.bw);
            for k in start..i {
                v -= self.diags[i - k][k] * x[k];
            }
            x[i] = v / self.diags[0][i];
        }
        for i in (0..self.n).rev() {
            let mut v = x[i];
            let last = (i + self.bw).min(self.n - 1);
            for k in i + 1..=last {
                v -= self.diags[k - i][i] * x[k];
            }
            x[i] = v / self.diags[0][i];
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator given as a closure. `x` carries the initial
/// guess in and the solution out. `diag` is an optional Jacobi
/// preconditioner; `project` is applied to the right-hand side, the
/// initial guess and every iterate, which is how singular systems with a
/// known nullspace (constants, for the pressure) stay on the solvable
/// subspace. Convergence is `||r||_2 <= tol * max(||b||_2, tiny)`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<CgReport> {
    let n = b.len();
    assert_eq!(x.len(), n);
    if let Some(d) = diag {
        assert_eq!(d.len(), n);
    }
    let mut b = b.to_vec();
    if let Some(p) = project {
        p(&mut b);
        p(x);
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let target = tol * bnorm;

    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if let Some(p) = project {
        p(&mut r);
    }
    let precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        match diag {
            Some(d) => z.extend(r.iter().zip(d).map(|(ri, di)| ri / di)),
            None => z.extend_from_slice(r),
        }
    };
    let mut z = Vec::with_capacity(n);
    precond(&r, &mut z);
    let mut p_dir = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt();

    for it in 0..max_iter {
        if res <= target {
            return Ok(CgReport {
                iterations: it,
                residual: res,
            });
        }
        apply(&p_dir, &mut ax);
        if let Some(pr) = project {
            pr(&mut ax);
        }
        let pap: f64 = p_dir.iter().zip(&ax).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solver {
                context: "conjugate gradients: operator lost positivity".into(),
                residual: res,
                iterations: it,
                tolerance: target,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p_dir[i];
            r[i] -= alpha * ax[i];
        }
        if let Some(pr) = project {
            pr(x);
            pr(&mut r);
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        precond(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p_dir[i] = z[i] + beta * p_dir[i];
        }
    }
    if res <= target {
        Ok(CgReport {
            iterations: max_iter,
            residual: res,
        })
    } else {
        Err(Error::Solver {
            context: "conjugate gradients did not converge".into(),
            residual: res,
            iterations: max_iter,
            tolerance: target,
        })
    }
}

/// Subtract the mean: the projection used with pure-Neumann pressure
/// systems whose nullspace is the constants.
pub fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}
