//! Operator abstractions shared by the solvers.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};

use crate::linalg::CsrMatrix;
use crate::Result;

/// A linear map `K: R^n → R^m` together with its adjoint.
pub trait LinearOperator {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `out = K x`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]);
    /// `out = K* y`.
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dim()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim()];
        self.apply_adjoint_into(y, &mut out);
        out
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint_into(y, out)
    }
}

/// A differentiable map `K: R^n → R^m`.
pub trait NonlinearOperator {
    type Jacobian: LinearOperator;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Derivative `∇K(x)*` as a linear operator `R^n → R^m`.
    fn jacobian(&self, x: &[f64]) -> Result<Self::Jacobian>;

    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.value_into(x, &mut out)?;
        Ok(out)
    }

    /// `K(x)` together with `∇K(x)*`.
    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, Self::Jacobian)> {
        Ok((self.value(x)?, self.jacobian(x)?))
    }
}

/// Presents a linear operator through the nonlinear interface.
#[derive(Debug, Clone, Copy)]
pub struct Linear<T>(pub T);

impl<'a, T: LinearOperator> NonlinearOperator for Linear<&'a T> {
    type Jacobian = &'a T;

    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.0.apply_into(x, out);
        Ok(())
    }
    fn jacobian(&self, _x: &[f64]) -> Result<&'a T> {
        Ok(self.0)
    }
}

/// Nonlinear least-squares residual `A: R^n → R^m`.
pub trait ResidualModel {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Returns `A(x)` and the `m × n` matrix of `∇A(x)*`.
    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }
    fn output_dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        DenseRef(&self.0).apply_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        DenseRef(&self.0).apply_adjoint_into(y, out)
    }
}

/// A borrowed dense matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseRef<'a>(pub &'a DMatrix<f64>);

impl LinearOperator for DenseRef<'_> {
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }
    fn output_dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let xv = DVectorView::from_slice(x, x.len());
        let mut o = DVectorViewMut::from_slice(out, self.0.nrows());
        o.gemv(1.0, self.0, &xv, 0.0);
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let yv = DVectorView::from_slice(y, y.len());
        let mut o = DVectorViewMut::from_slice(out, self.0.ncols());
        o.gemv_tr(1.0, self.0, &yv, 0.0);
    }
}

impl LinearOperator for CsrMatrix {
    fn input_dim(&self) -> usize {
        self.ncols()
    }
    fn output_dim(&self) -> usize {
        self.nrows()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.matvec_transpose_into(y, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn input_dim(&self) -> usize {
        self.0
    }
    fn output_dim(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y)
    }
}

/// The zero map `R^n → R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroOperator {
    pub input_dim: usize,
    pub output_dim: usize,
}

impl LinearOperator for ZeroOperator {
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn apply_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0)
    }
    fn apply_adjoint_into(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0)
    }
}

/// Largest `|⟨Kx, y⟩ − ⟨x, K*y⟩| / (‖Kx‖‖y‖ + ‖x‖‖K*y‖)` over `probes`
/// random pairs.
pub fn adjoint_mismatch<K: LinearOperator>(op: &K, probes: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x: Vec<f64> = (0..op.input_dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..op.output_dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let kx = op.apply(&x);
        let ky = op.apply_adjoint(&y);
        let lhs = crate::linalg::dot(&kx, &y);
        let rhs = crate::linalg::dot(&x, &ky);
        let scale = crate::linalg::norm2(&kx) * crate::linalg::norm2(&y) + crate::linalg::norm2(&x) * crate::linalg::norm2(&ky);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_sparse_agree() {
        let t = [(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0), (2, 0, 0.5)];
        let csr = CsrMatrix::from_triplets(3, 3, &t);
        let dense = DenseOperator(csr.to_dense());
        let x = [1.0, 2.0, 3.0];
        assert_eq!(csr.apply(&x), dense.apply(&x));
        assert_eq!(csr.apply_adjoint(&x), dense.apply_adjoint(&x));
        assert!(adjoint_mismatch(&dense, 10, 1) < 1e-14);
        assert!(adjoint_mismatch(&csr, 10, 1) < 1e-14);
    }

    #[test]
    fn linear_adapter_is_its_own_jacobian() {
        let op = IdentityOperator(3);
        let nl = Linear(&op);
        assert_eq!(nl.value(&[1.0, 2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(nl.jacobian(&[0.0; 3]).unwrap().apply(&[4.0, 5.0, 6.0]), [4.0, 5.0, 6.0]);
    }
}
