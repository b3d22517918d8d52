//! Regularization terms on nodal conductivities: Gaussian smoothness prior,
//! P1 total variation, smoothed TV, min/max barriers and the box set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{ElementGeometry, Mesh2D};
use crate::linalg::CsrMatrix;
use crate::operator::{LinearOperator, NonlinearOperator};
use crate::{Error, Result};

/// Componentwise box `V = {σ : v_min ≤ σ_i ≤ v_max}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSet {
    pub v_min: f64,
    pub v_max: f64,
}

impl BoxSet {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min < v_max) {
            return Err(Error::Config(format!("box requires v_min < v_max, got [{v_min}, {v_max}]")));
        }
        Ok(Self { v_min, v_max })
    }

    pub fn unbounded() -> Self {
        Self { v_min: f64::NEG_INFINITY, v_max: f64::INFINITY }
    }

    #[inline]
    pub fn project(&self, v: f64) -> f64 {
        v.max(self.v_min).min(self.v_max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v >= self.v_min && v <= self.v_max)
    }
}

/// Stacked P1 gradient operator `R_∇ = [R_1; R_2]` of size `2N_E × N`.
/// Element `i` owns rows `i` and `i + N_E`.
#[derive(Debug, Clone, PartialEq)]
pub struct TvOperator {
    matrix: CsrMatrix,
    n_elements: usize,
}

pub fn build_tv_operator(mesh: &Mesh2D, geometry: &ElementGeometry) -> TvOperator {
    let ne = mesh.n_elements();
    let mut t = Vec::with_capacity(6 * ne);
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let area = geometry.areas[e];
        for j in 0..3 {
            t.push((e, tri[j], area * geometry.gradients[e][j][0]));
            t.push((e + ne, tri[j], area * geometry.gradients[e][j][1]));
        }
    }
    TvOperator { matrix: CsrMatrix::from_triplets(2 * ne, mesh.n_nodes(), &t), n_elements: ne }
}

impl TvOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.ncols()
    }
}

impl LinearOperator for TvOperator {
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.matvec_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.matrix.matvec_transpose_into(y, out)
    }
}

/// `Σ_i ‖(y_i, y_{i+N_E})‖₂` for a stacked gradient `y`.
pub fn group_norm(y: &[f64]) -> f64 {
    let ne = y.len() / 2;
    (0..ne).map(|i| y[i].hypot(y[i + ne])).sum()
}

/// `TV(σ) = ‖R_∇σ‖_{2,1}`.
pub fn tv_value(op: &TvOperator, sigma: &[f64]) -> f64 {
    group_norm(&op.apply(sigma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedTv {
    pub value: f64,
    /// `f_i(σ) = sqrt((R_1σ)_i² + (R_2σ)_i² + γ)`.
    pub f: Vec<f64>,
    /// `N_E × N` Jacobian of `f`.
    pub jacobian: CsrMatrix,
}

pub fn smoothed_tv(op: &TvOperator, sigma: &[f64], gamma: f64) -> Result<SmoothedTv> {
    let f = smoothed_tv_terms(op, sigma, gamma)?;
    let jacobian = smoothed_tv_jacobian(op, sigma, gamma)?;
    Ok(SmoothedTv { value: f.iter().sum(), f, jacobian })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("smoothing parameter must be positive, got {gamma}")));
    }
    Ok(())
}

fn smoothed_tv_terms(op: &TvOperator, sigma: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let r = op.apply(sigma);
    let ne = op.n_elements;
    Ok((0..ne).map(|i| (r[i] * r[i] + r[i + ne] * r[i + ne] + gamma).sqrt()).collect())
}

fn smoothed_tv_jacobian(op: &TvOperator, sigma: &[f64], gamma: f64) -> Result<CsrMatrix> {
    check_gamma(gamma)?;
    let r = op.apply(sigma);
    let ne = op.n_elements;
    let mut t = Vec::with_capacity(6 * ne);
    for i in 0..ne {
        let f = (r[i] * r[i] + r[i + ne] * r[i + ne] + gamma).sqrt();
        for (c, v) in op.matrix.row(i) {
            t.push((i, c, r[i] / f * v));
        }
        for (c, v) in op.matrix.row(i + ne) {
            t.push((i, c, r[i + ne] / f * v));
        }
    }
    Ok(CsrMatrix::from_triplets(ne, op.n_nodes(), &t))
}

/// The map `σ ↦ f(σ)` of smoothed TV as a nonlinear operator.
#[derive(Debug, Clone, Copy)]
pub struct SmoothedTvMap<'a> {
    pub op: &'a TvOperator,
    pub gamma: f64,
}

impl NonlinearOperator for SmoothedTvMap<'_> {
    type Jacobian = CsrMatrix;

    fn input_dim(&self) -> usize {
        self.op.n_nodes()
    }
    fn output_dim(&self) -> usize {
        self.op.n_elements
    }
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&smoothed_tv_terms(self.op, x, self.gamma)?);
        Ok(())
    }
    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix> {
        smoothed_tv_jacobian(self.op, x, self.gamma)
    }
}

/// Gaussian-kernel prior `F_Γ(σ) = ‖R_Γ(σ − σ_m)‖²` with
/// `Γ_ij = a·exp(−‖x_i − x_j‖²/(2b))` and `R_Γ*R_Γ = Γ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessPrior {
    pub a: f64,
    pub b: f64,
    pub mean: Vec<f64>,
    /// Lower-triangular inverse Cholesky factor of `Γ`.
    pub r_gamma: DMatrix<f64>,
}

pub fn kernel_covariance(mesh: &Mesh2D, a: f64, b: f64) -> DMatrix<f64> {
    let nodes = mesh.nodes();
    DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
        let d2 = (nodes[i][0] - nodes[j][0]).powi(2) + (nodes[i][1] - nodes[j][1]).powi(2);
        a * (-d2 / (2.0 * b)).exp()
    })
}

pub fn build_smoothness_prior(mesh: &Mesh2D, a: f64, b: f64, mean: Vec<f64>) -> Result<SmoothnessPrior> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Config(format!("kernel parameters must be positive, got a={a}, b={b}")));
    }
    if mean.len() != mesh.n_nodes() {
        return Err(Error::Domain(format!("prior mean has {} entries for {} nodes", mean.len(), mesh.n_nodes())));
    }
    let gamma = kernel_covariance(mesh, a, b);
    let n = gamma.nrows();
    let chol = gamma.clone().cholesky().ok_or_else(|| Error::Factorization {
        reason: format!("kernel covariance with a={a}, b={b} is not numerically positive definite"),
        condition: f64::INFINITY,
    })?;
    let l = chol.l();
    let (dmin, dmax) = l.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let condition = (dmax / dmin).powi(2);
    if !(condition < 1e14) {
        return Err(Error::Factorization {
            reason: format!("kernel covariance with a={a}, b={b} is too ill-conditioned"),
            condition,
        });
    }
    let r_gamma = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Factorization { reason: "singular Cholesky factor".into(), condition })?;
    Ok(SmoothnessPrior { a, b, mean, r_gamma })
}

impl SmoothnessPrior {
    /// `R_Γ σ_m`, the offset of the dual quadratic.
    pub fn mapped_mean(&self) -> Vec<f64> {
        (&self.r_gamma * nalgebra::DVector::from_column_slice(&self.mean)).as_slice().to_vec()
    }

    pub fn value(&self, sigma: &[f64]) -> f64 {
        let d: Vec<f64> = sigma.iter().zip(&self.mean).map(|(s, m)| s - m).collect();
        let r = &self.r_gamma * nalgebra::DVector::from_vec(d);
        r.norm_squared()
    }

    /// `2 R_Γ*R_Γ (σ − σ_m)`.
    pub fn gradient(&self, sigma: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = sigma.iter().zip(&self.mean).map(|(s, m)| s - m).collect();
        let r = &self.r_gamma * nalgebra::DVector::from_vec(d);
        let g = self.r_gamma.tr_mul(&r) * 2.0;
        g.as_slice().to_vec()
    }

    /// `2 R_Γ*R_Γ`.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.r_gamma.tr_mul(&self.r_gamma) * 2.0
    }
}

/// Piecewise quadratic barriers below `σ_min` and above `σ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    pub l_min: f64,
    pub l_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Barrier {
    /// `(B_min, B_max)`.
    pub fn value(&self, sigma: &[f64]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &s in sigma {
            if s < self.sigma_min {
                lo += 0.5 * (self.l_min * (s - self.sigma_min)).powi(2);
            } else if s > self.sigma_max {
                hi += 0.5 * (self.l_max * (s - self.sigma_max)).powi(2);
            }
        }
        (lo, hi)
    }

    pub fn total(&self, sigma: &[f64]) -> f64 {
        let (lo, hi) = self.value(sigma);
        lo + hi
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s < self.sigma_min {
            self.l_min * self.l_min * (s - self.sigma_min)
        } else if s > self.sigma_max {
            self.l_max * self.l_max * (s - self.sigma_max)
        } else {
            0.0
        }
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        if s < self.sigma_min {
            self.l_min * self.l_min
        } else if s > self.sigma_max {
            self.l_max * self.l_max
        } else {
            0.0
        }
    }
}

/// The nonsmooth part of the objective other than the data fit.
#[derive(Debug, Clone)]
pub enum Penalty {
    None,
    Smoothness(SmoothnessPrior),
    Tv { op: TvOperator, alpha: f64 },
    SmoothedTv { op: TvOperator, alpha: f64, gamma: f64 },
}

/// `F(σ) = δ_V(σ) + penalty(σ) + B_min(σ) + B_max(σ)`.
#[derive(Debug, Clone)]
pub struct Regularization {
    pub penalty: Penalty,
    pub bounds: BoxSet,
    pub barrier: Option<Barrier>,
}

impl Regularization {
    pub fn penalty_value(&self, sigma: &[f64]) -> Result<f64> {
        Ok(match &self.penalty {
            Penalty::None => 0.0,
            Penalty::Smoothness(p) => p.value(sigma),
            Penalty::Tv { op, alpha } => alpha * tv_value(op, sigma),
            Penalty::SmoothedTv { op, alpha, gamma } => alpha * smoothed_tv_terms(op, sigma, *gamma)?.iter().sum::<f64>(),
        })
    }

    /// `F(σ)`, `+∞` outside `V`.
    pub fn value(&self, sigma: &[f64]) -> Result<f64> {
        if !self.bounds.contains(sigma) {
            return Ok(f64::INFINITY);
        }
        let b = self.barrier.map_or(0.0, |b| b.total(sigma));
        Ok(self.penalty_value(sigma)? + b)
    }

    /// Whether `F` is differentiable on the interior of `V`.
    pub fn is_smooth(&self) -> bool {
        !matches!(self.penalty, Penalty::Tv { .. })
    }

    /// Gradient and Hessian of the smooth part (penalty plus barriers).
    pub fn gradient_hessian(&self, sigma: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = sigma.len();
        let (mut g, mut h) = match &self.penalty {
            Penalty::None => (vec![0.0; n], DMatrix::zeros(n, n)),
            Penalty::Smoothness(p) => (p.gradient(sigma), p.hessian()),
            Penalty::SmoothedTv { op, alpha, gamma } => smoothed_tv_derivatives(op, sigma, *alpha, *gamma)?,
            Penalty::Tv { .. } => {
                return Err(Error::Config("TV penalty is not differentiable; use the smoothed variant".into()));
            }
        };
        if let Some(b) = self.barrier {
            for i in 0..n {
                g[i] += b.derivative(sigma[i]);
                h[(i, i)] += b.second_derivative(sigma[i]);
            }
        }
        Ok((g, h))
    }
}

/// Gradient and exact Hessian of `α Σ_i f_i(σ)`.
fn smoothed_tv_derivatives(op: &TvOperator, sigma: &[f64], alpha: f64, gamma: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_gamma(gamma)?;
    let n = sigma.len();
    let ne = op.n_elements;
    let r = op.apply(sigma);
    let mut g = vec![0.0; n];
    let mut h = DMatrix::zeros(n, n);
    for i in 0..ne {
        let (p, q) = (r[i], r[i + ne]);
        let f = (p * p + q * q + gamma).sqrt();
        let rows = [op.matrix.row(i).collect::<Vec<_>>(), op.matrix.row(i + ne).collect::<Vec<_>>()];
        // ∇f = (p R1 + q R2)/f and ∇²f = Rᵀ(I/f − r rᵀ/f³)R with r = (p, q).
        let m = [[1.0 / f - p * p / (f * f * f), -p * q / (f * f * f)], [-p * q / (f * f * f), 1.0 / f - q * q / (f * f * f)]];
        let v = [p / f, q / f];
        for (l, row) in rows.iter().enumerate() {
            for &(c, val) in row {
                g[c] += alpha * v[l] * val;
            }
        }
        for (l1, row1) in rows.iter().enumerate() {
            for (l2, row2) in rows.iter().enumerate() {
                for &(c1, v1) in row1 {
                    for &(c2, v2) in row2 {
                        h[(c1, c2)] += alpha * m[l1][l2] * v1 * v2;
                    }
                }
            }
        }
    }
    Ok((g, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disc_mesh, element_geometry};
    use crate::linalg::norm2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Mesh2D, TvOperator) {
        let mesh = build_disc_mesh(0.12, 8, 0.2, 0.03).unwrap();
        let geo = element_geometry(&mesh).unwrap();
        let op = build_tv_operator(&mesh, &geo);
        (mesh, op)
    }

    #[test]
    fn tv_of_constant_and_linear_fields() {
        let (mesh, op) = setup();
        assert!(tv_value(&op, &vec![0.3; mesh.n_nodes()]) <= 1e-15);
        let x: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
        let tv = tv_value(&op, &x);
        assert!((tv - mesh.total_area()).abs() < 1e-12 * mesh.total_area());
        for r in 0..op.matrix().nrows() {
            assert!(op.matrix().row(r).count() <= 3);
        }
    }

    #[test]
    fn tv_matches_elementwise_gradients() {
        let (mesh, op) = setup();
        let geo = element_geometry(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
        let direct: f64 = (0..mesh.n_elements())
            .map(|e| {
                let g = geo.field_gradient(&mesh, e, &sigma);
                geo.areas[e] * g[0].hypot(g[1])
            })
            .sum();
        assert!((tv_value(&op, &sigma) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn smoothed_tv_limits() {
        let (mesh, op) = setup();
        let ne = mesh.n_elements() as f64;
        let c = smoothed_tv(&op, &vec![1.0; mesh.n_nodes()], 1e-4).unwrap();
        assert!((c.value - ne * 1e-2).abs() < 1e-12 * ne);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sigma: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
        let tv = tv_value(&op, &sigma);
        let s = smoothed_tv(&op, &sigma, 1e-14).unwrap();
        assert!((s.value - tv).abs() < 1e-6 * tv);
        assert!(matches!(smoothed_tv(&op, &sigma, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothed_tv_jacobian_matches_fd() {
        let (mesh, op) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
        let h: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>() - 0.5).collect();
        let gamma = 1e-4;
        let s = smoothed_tv(&op, &sigma, gamma).unwrap();
        let jh = s.jacobian.matvec(&h);
        let eps = 1e-6;
        let p: Vec<f64> = sigma.iter().zip(&h).map(|(a, b)| a + eps * b).collect();
        let m: Vec<f64> = sigma.iter().zip(&h).map(|(a, b)| a - eps * b).collect();
        let fp = smoothed_tv(&op, &p, gamma).unwrap().f;
        let fm = smoothed_tv(&op, &m, gamma).unwrap().f;
        let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let err = crate::linalg::dist2(&fd, &jh) / norm2(&jh);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn smoothed_tv_gradient_and_hessian_match_fd() {
        let (mesh, op) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = mesh.n_nodes();
        let sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let reg = Regularization {
            penalty: Penalty::SmoothedTv { op: op.clone(), alpha: 3.0, gamma: 1e-3 },
            bounds: BoxSet::unbounded(),
            barrier: None,
        };
        let (g, h) = reg.gradient_hessian(&sigma).unwrap();
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let eps = 1e-6;
        let p: Vec<f64> = sigma.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
        let m: Vec<f64> = sigma.iter().zip(&d).map(|(a, b)| a - eps * b).collect();
        let fd = (reg.value(&p).unwrap() - reg.value(&m).unwrap()) / (2.0 * eps);
        let gd = crate::linalg::dot(&g, &d);
        assert!((fd - gd).abs() < 1e-6 * gd.abs().max(1.0));
        let (gp, _) = reg.gradient_hessian(&p).unwrap();
        let (gm, _) = reg.gradient_hessian(&m).unwrap();
        let hd = &h * nalgebra::DVector::from_column_slice(&d);
        let fdh: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        assert!(crate::linalg::dist2(&fdh, hd.as_slice()) < 1e-5 * hd.norm());
    }

    #[test]
    fn smoothness_prior_identities() {
        let mesh = build_disc_mesh(0.12, 4, 0.3, 0.045).unwrap();
        assert!(mesh.n_nodes() >= 30 && mesh.n_nodes() <= 80, "{}", mesh.n_nodes());
        let mean = vec![0.028; mesh.n_nodes()];
        let prior = build_smoothness_prior(&mesh, 0.01, 0.02f64.powi(2), mean.clone()).unwrap();
        assert_eq!(prior.value(&mean), 0.0);
        let gamma = kernel_covariance(&mesh, 0.01, 0.02f64.powi(2));
        for i in 0..mesh.n_nodes() {
            assert_eq!(gamma[(i, i)], 0.01);
        }
        let prod = prior.r_gamma.tr_mul(&prior.r_gamma) * &gamma;
        let dev = (prod - DMatrix::<f64>::identity(mesh.n_nodes(), mesh.n_nodes())).abs().max();
        assert!(dev < 1e-8, "{dev}");
    }

    #[test]
    fn ill_conditioned_kernel_reports_condition() {
        let mesh = build_disc_mesh(0.12, 4, 0.3, 0.03).unwrap();
        let r = build_smoothness_prior(&mesh, 1.0, 1.0, vec![0.0; mesh.n_nodes()]);
        assert!(matches!(r, Err(Error::Factorization { .. })));
    }

    #[test]
    fn barrier_values() {
        let b = Barrier { l_min: 2.0, l_max: 2.0, sigma_min: 1.0, sigma_max: 1.0 };
        assert_eq!(b.value(&[0.0]), (2.0, 0.0));
        assert_eq!(b.value(&[2.0]), (0.0, 2.0));
        let inactive = Barrier { l_min: 5.0, l_max: 5.0, sigma_min: 0.1, sigma_max: 10.0 };
        assert_eq!(inactive.value(&[0.1, 1.0, 10.0]), (0.0, 0.0));
    }

    #[test]
    fn barrier_is_c1_at_thresholds() {
        let b = Barrier { l_min: 3.0, l_max: 4.0, sigma_min: 1.0, sigma_max: 2.0 };
        for s0 in [1.0, 2.0] {
            let h = 1e-7;
            let left = (b.total(&[s0]) - b.total(&[s0 - h])) / h;
            let right = (b.total(&[s0 + h]) - b.total(&[s0])) / h;
            assert!(left.abs() < 1e-5 && right.abs() < 1e-5);
            assert_eq!(b.derivative(s0), 0.0);
        }
    }

    proptest! {
        #[test]
        fn tv_is_convex(seed in 0u64..500, lambda in 0.0f64..1.0) {
            let (mesh, op) = setup();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
            let t: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
            let mix: Vec<f64> = s.iter().zip(&t).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            prop_assert!(tv_value(&op, &mix) <= lambda * tv_value(&op, &s) + (1.0 - lambda) * tv_value(&op, &t) + 1e-10);
        }

        #[test]
        fn smoothed_tv_bracket(seed in 0u64..500, log_gamma in -12.0f64..0.0) {
            let (mesh, op) = setup();
            let gamma = 10f64.powf(log_gamma);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.random::<f64>()).collect();
            let tv = tv_value(&op, &s);
            let st = smoothed_tv(&op, &s, gamma).unwrap().value;
            prop_assert!(st >= tv - 1e-12 * tv);
            prop_assert!(st - tv <= mesh.n_elements() as f64 * gamma.sqrt() * (1.0 + 1e-12));
        }

        #[test]
        fn tv_annihilates_constants(c in -10.0f64..10.0) {
            let (mesh, op) = setup();
            let y = op.apply(&vec![c; mesh.n_nodes()]);
            prop_assert!(norm2(&y) <= 1e-12 * c.abs().max(1.0));
        }
    }
}
