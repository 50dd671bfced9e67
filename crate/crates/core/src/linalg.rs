//! Dense symmetric linear algebra used by the form and its consumers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of the measure-symmetrized operator `S = M^{-1/2} K M^{-1/2}`.
///
/// Functions of the generator are `M^{-1/2} U f(Λ) Uᵀ M^{-1/2}` in kernel form
/// (densities against `μ`).
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    pub inv_sqrt_mu: DVector<f64>,
}

impl Spectral {
    pub fn new(k: &DMatrix<f64>, mu: &[f64]) -> Result<Self> {
        let n = mu.len();
        if k.nrows() != n || k.ncols() != n {
            return Err(Error::Numerical("operator and measure sizes differ".into()));
        }
        let inv_sqrt_mu = DVector::from_iterator(n, mu.iter().map(|m| 1.0 / m.sqrt()));
        let s = symmetrize(k, &inv_sqrt_mu);
        let eig = SymmetricEigen::try_new(s.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
        let (vals, vecs) = jacobi_refine(&s, eig.eigenvectors);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| vals[i]));
        let vectors = DMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
        Ok(Spectral { values, vectors, inv_sqrt_mu })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Kernel `M^{-1/2} U f(Λ) Uᵀ M^{-1/2}`; `f` must be nonnegative on the spectrum.
    pub fn kernel_of(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.len();
        let mut w = self.vectors.clone();
        for c in 0..n {
            let s = f(self.values[c].max(0.0)).max(0.0).sqrt();
            for r in 0..n {
                w[(r, c)] *= s * self.inv_sqrt_mu[r];
            }
        }
        &w * w.transpose()
    }

    /// Kernel of a function that may change sign on the spectrum.
    pub fn signed_kernel_of(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.len();
        let mut a = self.vectors.clone();
        for c in 0..n {
            let s = f(self.values[c].max(0.0));
            for r in 0..n {
                a[(r, c)] *= s * self.inv_sqrt_mu[r];
            }
        }
        let mut b = self.vectors.clone();
        for c in 0..n {
            for r in 0..n {
                b[(r, c)] *= self.inv_sqrt_mu[r];
            }
        }
        let mut m = &a * b.transpose();
        symmetrize_in_place(&mut m);
        m
    }

    /// Heat kernel `p(t,·,·)`.
    pub fn heat(&self, t: f64) -> DMatrix<f64> {
        self.kernel_of(|l| (-t * l).exp())
    }

    /// Coefficients `c_k = u_k(x) u_k(y) / sqrt(μ(x) μ(y))` for one entry.
    pub fn entry_weights(&self, x: usize, y: usize) -> Vec<f64> {
        let s = self.inv_sqrt_mu[x] * self.inv_sqrt_mu[y];
        (0..self.len()).map(|k| self.vectors[(x, k)] * self.vectors[(y, k)] * s).collect()
    }

    /// `f(Λ)`-weighted entry `(x, y)` of the kernel.
    pub fn entry_of(&self, x: usize, y: usize, f: impl Fn(f64) -> f64) -> f64 {
        let s = self.inv_sqrt_mu[x] * self.inv_sqrt_mu[y];
        (0..self.len())
            .map(|k| self.vectors[(x, k)] * self.vectors[(y, k)] * f(self.values[k].max(0.0)))
            .sum::<f64>()
            * s
    }
}

/// Cyclic Jacobi sweeps on `Uᵀ S U` until it is diagonal to `1e-14 ‖S‖`.
///
/// The QR eigensolver can leave residuals near `1e-8 ‖S‖` on spectra with large
/// multiplicities (gasket graphs); from a nearly diagonal start Jacobi
/// converges quadratically.
fn jacobi_refine(s: &DMatrix<f64>, mut u: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = s.nrows();
    let mut b = u.transpose() * s * &u;
    symmetrize_in_place(&mut b);
    let tol = 1e-14 * s.amax().max(f64::MIN_POSITIVE);
    let off = |b: &DMatrix<f64>| (0..n).flat_map(|c| (0..c).map(move |r| (r, c))).map(|(r, c)| b[(r, c)].abs()).fold(0.0, f64::max);
    for _ in 0..12 {
        if off(&b) <= tol {
            break;
        }
        for q in 1..n {
            for p in 0..q {
                let bpq = b[(p, q)];
                if bpq.abs() <= 0.1 * tol {
                    continue;
                }
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * bpq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate_columns(&mut b, p, q, c, sn);
                rotate_rows(&mut b, p, q, c, sn);
                b[(p, q)] = 0.0;
                b[(q, p)] = 0.0;
                rotate_columns(&mut u, p, q, c, sn);
            }
        }
    }
    ((0..n).map(|i| b[(i, i)]).collect(), u)
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.nrows() {
        let (a, b) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * a - s * b;
        m[(k, q)] = s * a + c * b;
    }
}

fn rotate_rows(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..m.ncols() {
        let (a, b) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * a - s * b;
        m[(q, k)] = s * a + c * b;
    }
}

pub fn symmetrize(k: &DMatrix<f64>, inv_sqrt_mu: &DVector<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let mut s = DMatrix::from_fn(n, n, |r, c| k[(r, c)] * inv_sqrt_mu[r] * inv_sqrt_mu[c]);
    symmetrize_in_place(&mut s);
    s
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in 0..r {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// `exp(-A)` for symmetric `A ⪰ 0` by scaling and squaring of a Taylor polynomial.
pub fn expm_neg(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n).map(|r| a.row(r).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let b = a * (-(0.5f64.powi(squarings as i32)));
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    symmetrize_in_place(&mut sum);
    sum
}

/// Principal submatrix on `idx`.
pub fn restrict(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("restricted operator is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Solve with several right-hand sides.
pub fn solve_spd_many(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("restricted operator is not positive definite".into()))?;
    Ok(chol.solve(b))
}
