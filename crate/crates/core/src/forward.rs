//! Complete electrode model with potential excitations: assembly, forward
//! solves, current extraction and the adjoint Jacobian.
//!
//! Unknowns are `θ = [u; Ĩ]` with nodal potentials `u ∈ R^N` and current
//! coefficients `Ĩ ∈ R^{L−1}` in the basis `n_j = e_1 − e_{j+1}`. The system
//! `D θ = Ũ` is block lower triangular with `D = [[D1, 0], [D2, D3]]`.
//!
//! Currents are extracted through the identity `D1 u = Ũ_top`: summing the
//! rows of electrode `k` gives `(1/ζ_k)∫_{e_k}(U_k − u) = χ_kᵀ S u`, where `S`
//! is the σ-weighted stiffness and `χ_k` the nodal indicator of electrode
//! `k`. This avoids subtracting two terms of size `1/ζ_k`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::geometry::{element_geometry, ElementGeometry, Mesh2D};
use crate::linalg::{rcm_ordering, CsrMatrix, EnvelopeCholesky};
use crate::operator::{DenseOperator, NonlinearOperator, ResidualModel};
use crate::{Error, Result};

/// Contact impedance used when none is given (Ω·m).
pub const DEFAULT_CONTACT_IMPEDANCE: f64 = 1e-7;

/// Local P1 stiffness `area · ∇φ_i·∇φ_j` of one element.
pub fn local_stiffness(area: f64, gradients: &[[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (gradients[i][0] * gradients[j][0] + gradients[i][1] * gradients[j][1]);
        }
    }
    k
}

/// `∂D1/∂σ_i` restricted to node `i` and its neighbours, stored dense.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    pub nodes: Vec<usize>,
    /// Row-major `nodes.len() × nodes.len()`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CemModel {
    mesh: Mesh2D,
    geometry: ElementGeometry,
    contact_impedances: Vec<f64>,
    excitation_volts: f64,
    pattern: CsrMatrix,
    element_slots: Vec<[usize; 9]>,
    unit_stiffness: Vec<[f64; 9]>,
    electrode_mass: Vec<f64>,
    /// `∫_{e_k} φ_i dS` per electrode as `(node, value)`.
    electrode_loads: Vec<Vec<(usize, f64)>>,
    electrode_nodes: Vec<Vec<usize>>,
    ordering: Vec<usize>,
    node_blocks: Vec<NodeBlock>,
}

impl CemModel {
    /// Builds a model with one excitation per electrode at `excitation_volts`.
    pub fn new(mesh: Mesh2D, contact_impedances: Vec<f64>, excitation_volts: f64) -> Result<Self> {
        let l = mesh.n_electrodes();
        if l < 2 {
            return Err(Error::Config(format!("need at least 2 electrodes, got {l}")));
        }
        if contact_impedances.len() != l {
            return Err(Error::Config(format!("{} contact impedances for {l} electrodes", contact_impedances.len())));
        }
        if let Some(z) = contact_impedances.iter().find(|z| !(**z > 0.0)) {
            return Err(Error::Config(format!("contact impedance must be positive, got {z}")));
        }
        if excitation_volts == 0.0 || !excitation_volts.is_finite() {
            return Err(Error::Config(format!("excitation potential must be nonzero, got {excitation_volts}")));
        }
        let geometry = element_geometry(&mesh)?;
        let n = mesh.n_nodes();

        let mut triplets = Vec::with_capacity(9 * mesh.n_elements());
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    triplets.push((a, b, 0.0));
                }
            }
        }
        let pattern = CsrMatrix::from_triplets(n, n, &triplets);
        let slot = |a: usize, b: usize| {
            let start = pattern.row_ptr()[a];
            start + pattern.col_idx()[start..pattern.row_ptr()[a + 1]].binary_search(&b).unwrap()
        };

        let mut element_slots = Vec::with_capacity(mesh.n_elements());
        let mut unit_stiffness = Vec::with_capacity(mesh.n_elements());
        for (e, tri) in mesh.triangles().iter().enumerate() {
            let k = local_stiffness(geometry.areas[e], &geometry.gradients[e]);
            let mut s = [0usize; 9];
            let mut v = [0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    s[3 * i + j] = slot(tri[i], tri[j]);
                    v[3 * i + j] = k[i][j];
                }
            }
            element_slots.push(s);
            unit_stiffness.push(v);
        }

        let mut electrode_mass = vec![0.0; pattern.nnz()];
        let mut electrode_loads = Vec::with_capacity(l);
        for (k, edges) in mesh.electrode_edges().iter().enumerate() {
            let inv_z = 1.0 / contact_impedances[k];
            let mut loads: Vec<(usize, f64)> = Vec::new();
            for (&[a, b], &len) in edges.iter().zip(&geometry.electrode_edge_lengths[k]) {
                electrode_mass[slot(a, a)] += inv_z * len / 3.0;
                electrode_mass[slot(b, b)] += inv_z * len / 3.0;
                electrode_mass[slot(a, b)] += inv_z * len / 6.0;
                electrode_mass[slot(b, a)] += inv_z * len / 6.0;
                for v in [a, b] {
                    match loads.iter_mut().find(|(node, _)| *node == v) {
                        Some(entry) => entry.1 += 0.5 * len,
                        None => loads.push((v, 0.5 * len)),
                    }
                }
            }
            loads.sort_by_key(|&(node, _)| node);
            electrode_loads.push(loads);
        }
        let electrode_nodes = (0..l).map(|k| mesh.electrode_nodes(k)).collect();
        let ordering = rcm_ordering(&pattern);
        let node_blocks = build_node_blocks(&mesh, &geometry);

        Ok(Self {
            mesh,
            geometry,
            contact_impedances,
            excitation_volts,
            pattern,
            element_slots,
            unit_stiffness,
            electrode_mass,
            electrode_loads,
            electrode_nodes,
            ordering,
            node_blocks,
        })
    }

    /// Model with all contact impedances equal to [`DEFAULT_CONTACT_IMPEDANCE`]
    /// and 1 V excitations.
    pub fn with_defaults(mesh: Mesh2D) -> Result<Self> {
        let l = mesh.n_electrodes();
        Self::new(mesh, vec![DEFAULT_CONTACT_IMPEDANCE; l], 1.0)
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn geometry(&self) -> &ElementGeometry {
        &self.geometry
    }

    pub fn contact_impedances(&self) -> &[f64] {
        &self.contact_impedances
    }

    pub fn excitation_volts(&self) -> f64 {
        self.excitation_volts
    }

    pub fn n_sigma(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn n_electrodes(&self) -> usize {
        self.mesh.n_electrodes()
    }

    /// Length of the stacked current vector, `L²`.
    pub fn n_measurements(&self) -> usize {
        self.n_electrodes() * self.n_electrodes()
    }

    pub fn node_blocks(&self) -> &[NodeBlock] {
        &self.node_blocks
    }

    fn check_sigma(&self, sigma: &[f64]) -> Result<()> {
        if sigma.len() != self.n_sigma() {
            return Err(Error::Domain(format!("σ has {} entries, mesh has {} nodes", sigma.len(), self.n_sigma())));
        }
        if let Some(i) = sigma.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Domain(format!("σ[{i}] = {} is not positive", sigma[i])));
        }
        Ok(())
    }

    /// σ-weighted stiffness `S(σ)` with element-mean conductivity.
    pub fn stiffness(&self, sigma: &[f64]) -> Result<CsrMatrix> {
        self.check_sigma(sigma)?;
        let mut values = vec![0.0; self.pattern.nnz()];
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            let s = (sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]]) / 3.0;
            for (slot, v) in self.element_slots[e].iter().zip(&self.unit_stiffness[e]) {
                values[*slot] += s * v;
            }
        }
        Ok(self.with_values(values))
    }

    fn with_values(&self, values: Vec<f64>) -> CsrMatrix {
        let n = self.n_sigma();
        let mut triplets = Vec::with_capacity(values.len());
        for r in 0..n {
            for k in self.pattern.row_ptr()[r]..self.pattern.row_ptr()[r + 1] {
                triplets.push((r, self.pattern.col_idx()[k], values[k]));
            }
        }
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    /// `∂D1/∂σ_i` as a sparse matrix, assembled element by element.
    pub fn stiffness_derivative(&self, i: usize) -> CsrMatrix {
        let n = self.n_sigma();
        let mut t = Vec::new();
        for (e, tri) in self.mesh.triangles().iter().enumerate() {
            if tri.contains(&i) {
                for a in 0..3 {
                    for b in 0..3 {
                        t.push((tri[a], tri[b], self.unit_stiffness[e][3 * a + b] / 3.0));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn top_rhs(&self, p: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_sigma()];
        let scale = self.excitation_volts / self.contact_impedances[p];
        for &(node, v) in &self.electrode_loads[p] {
            rhs[node] += scale * v;
        }
        rhs
    }

    fn electrode_length(&self, k: usize) -> f64 {
        self.geometry.electrode_length(k)
    }

    /// Assembles `D`, all right-hand sides and the extraction map at `σ`.
    pub fn assemble_system(&self, sigma: &[f64]) -> Result<AssembledSystem> {
        let stiffness = self.stiffness(sigma)?;
        let n = self.n_sigma();
        let l = self.n_electrodes();
        let d1_values: Vec<f64> =
            stiffness.values().iter().zip(&self.electrode_mass).map(|(s, m)| s + m).collect();
        let d1 = self.with_values(d1_values);

        let mut d2_t = Vec::new();
        for row in 0..l - 1 {
            let z1 = self.contact_impedances[0];
            let zk = self.contact_impedances[row + 1];
            for &(node, v) in &self.electrode_loads[0] {
                d2_t.push((row, node, -v / z1));
            }
            for &(node, v) in &self.electrode_loads[row + 1] {
                d2_t.push((row, node, v / zk));
            }
        }
        let d2 = CsrMatrix::from_triplets(l - 1, n, &d2_t);
        let d3 = DMatrix::from_fn(l - 1, l - 1, |i, j| if i == j { 2.0 } else { 1.0 });

        let rhs = (0..l)
            .map(|p| {
                let mut r = self.top_rhs(p);
                let u = |k: usize| if k == p { self.excitation_volts } else { 0.0 };
                for i in 0..l - 1 {
                    r.push(
                        u(i + 1) / self.contact_impedances[i + 1] * self.electrode_length(i + 1)
                            - u(0) / self.contact_impedances[0] * self.electrode_length(0),
                    );
                }
                r
            })
            .collect();

        let mut ext = Vec::new();
        for j in 0..l - 1 {
            ext.push((0, n + j, 1.0));
            ext.push((j + 1, n + j, -1.0));
        }
        let extraction = CsrMatrix::from_triplets(l, n + l - 1, &ext);
        Ok(AssembledSystem { stiffness, d1, d2, d3, rhs, extraction })
    }

    /// Solves all `L` excitations at `σ` with one factorisation of `D1`.
    pub fn forward_solve(&self, sigma: &[f64]) -> Result<ForwardSolution> {
        let stiffness = self.stiffness(sigma)?;
        let d1_values: Vec<f64> =
            stiffness.values().iter().zip(&self.electrode_mass).map(|(s, m)| s + m).collect();
        let d1 = self.with_values(d1_values);
        let factor = EnvelopeCholesky::factor(&d1, &self.ordering)
            .map_err(|e| Error::Solve { excitation: 0, reason: e.to_string() })?;

        let l = self.n_electrodes();
        let mut potentials = Vec::with_capacity(l);
        let mut currents = Vec::with_capacity(l * l);
        for p in 0..l {
            let u = factor.solve(&self.top_rhs(p));
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solve { excitation: p, reason: "non-finite potential".to_string() });
            }
            currents.extend(self.extract_currents(&stiffness, &u));
            potentials.push(u);
        }
        Ok(ForwardSolution { potentials, currents, stiffness, factor })
    }

    /// Stacked currents `I(σ) ∈ R^{L²}`, excitation-major.
    pub fn currents(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_solve(sigma)?.currents)
    }

    fn extract_currents(&self, stiffness: &CsrMatrix, u: &[f64]) -> Vec<f64> {
        let su = stiffness.matvec(u);
        let l = self.n_electrodes();
        let g: Vec<f64> = (0..l).map(|k| self.electrode_nodes[k].iter().map(|&i| su[i]).sum()).collect();
        let mean = g.iter().sum::<f64>() / l as f64;
        g.iter().map(|gk| mean - gk).collect()
    }

    /// Dense `L² × N` matrix of `∇I(σ)*`, row `p·L + k` holding `∂I_k^p/∂σ`.
    pub fn jacobian(&self, sigma: &[f64], solution: &ForwardSolution) -> Result<DMatrix<f64>> {
        self.check_sigma(sigma)?;
        let n = self.n_sigma();
        let l = self.n_electrodes();
        // Adjoint fields y_m = D1⁻¹ E_mᵀ = χ_m − D1⁻¹ S χ_m, then projected
        // so that the columns sum like the currents.
        let mut y = Vec::with_capacity(l);
        for m in 0..l {
            let mut chi = vec![0.0; n];
            for &i in &self.electrode_nodes[m] {
                chi[i] = 1.0;
            }
            let corr = solution.factor.solve(&solution.stiffness.matvec(&chi));
            if corr.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solve { excitation: m, reason: "non-finite adjoint field".to_string() });
            }
            for (c, r) in chi.iter_mut().zip(&corr) {
                *c -= r;
            }
            y.push(chi);
        }
        let mut x = DMatrix::zeros(n, l);
        for a in 0..n {
            let mean = y.iter().map(|ym| ym[a]).sum::<f64>() / l as f64;
            for k in 0..l {
                x[(a, k)] = y[k][a] - mean;
            }
        }

        let mut jac = DMatrix::zeros(l * l, n);
        for (i, block) in self.node_blocks.iter().enumerate() {
            let m = block.nodes.len();
            // t[a][p] = (B_i u^p)[a]
            let mut t = vec![0.0; m * l];
            for a in 0..m {
                for p in 0..l {
                    let up = &solution.potentials[p];
                    let mut s = 0.0;
                    for b in 0..m {
                        s += block.values[a * m + b] * up[block.nodes[b]];
                    }
                    t[a * l + p] = s;
                }
            }
            for p in 0..l {
                for k in 0..l {
                    let mut s = 0.0;
                    for a in 0..m {
                        s += x[(block.nodes[a], k)] * t[a * l + p];
                    }
                    jac[(p * l + k, i)] = -s;
                }
            }
        }
        Ok(jac)
    }
}

fn build_node_blocks(mesh: &Mesh2D, geometry: &ElementGeometry) -> Vec<NodeBlock> {
    let n = mesh.n_nodes();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, tri) in mesh.triangles().iter().enumerate() {
        for &v in tri {
            incident[v].push(e);
        }
    }
    (0..n)
        .map(|i| {
            let mut nodes = vec![i];
            for &e in &incident[i] {
                for &v in &mesh.triangles()[e] {
                    if !nodes.contains(&v) {
                        nodes.push(v);
                    }
                }
            }
            let m = nodes.len();
            let mut values = vec![0.0; m * m];
            for &e in &incident[i] {
                let tri = mesh.triangles()[e];
                let k = local_stiffness(geometry.areas[e], &geometry.gradients[e]);
                let pos = tri.map(|v| nodes.iter().position(|&w| w == v).unwrap());
                for a in 0..3 {
                    for b in 0..3 {
                        values[pos[a] * m + pos[b]] += k[a][b] / 3.0;
                    }
                }
            }
            NodeBlock { nodes, values }
        })
        .collect()
}

/// The block system `D θ^p = Ũ^p` at one conductivity.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// σ-weighted stiffness part of `D1`.
    pub stiffness: CsrMatrix,
    pub d1: CsrMatrix,
    /// `(L−1) × N`.
    pub d2: CsrMatrix,
    /// `(L−1) × (L−1)`.
    pub d3: DMatrix<f64>,
    /// One right-hand side of length `N + L − 1` per excitation.
    pub rhs: Vec<Vec<f64>>,
    /// `L × (N + L − 1)` map `[0, n_1, …, n_{L−1}]`.
    pub extraction: CsrMatrix,
}

impl AssembledSystem {
    /// Solves the full block system for excitation `p` with a dense LU.
    /// Intended as a reference for small meshes.
    pub fn solve_dense(&self, p: usize) -> Result<Vec<f64>> {
        let n = self.d1.nrows();
        let l1 = self.d3.nrows();
        let mut d = DMatrix::zeros(n + l1, n + l1);
        d.view_mut((0, 0), (n, n)).copy_from(&self.d1.to_dense());
        d.view_mut((n, 0), (l1, n)).copy_from(&self.d2.to_dense());
        d.view_mut((n, n), (l1, l1)).copy_from(&self.d3);
        let rhs = nalgebra::DVector::from_column_slice(&self.rhs[p]);
        d.lu()
            .solve(&rhs)
            .map(|v| v.as_slice().to_vec())
            .ok_or_else(|| Error::Solve { excitation: p, reason: "singular block system".to_string() })
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// Nodal potentials `u^p` per excitation.
    pub potentials: Vec<Vec<f64>>,
    /// `I ∈ R^{L²}`, entry `p·L + k` is the current at electrode `k` under
    /// excitation `p`.
    pub currents: Vec<f64>,
    pub stiffness: CsrMatrix,
    pub factor: EnvelopeCholesky,
}

impl ForwardSolution {
    /// Coefficient vector `θ^p = [u^p; Ĩ^p]`.
    pub fn theta(&self, p: usize) -> Vec<f64> {
        let l = self.potentials.len();
        let mut t = self.potentials[p].clone();
        t.extend((1..l).map(|k| -self.currents[p * l + k]));
        t
    }
}

/// Weighted misfit `A(σ) = L_A (I(σ) − I^m)`.
#[derive(Debug, Clone)]
pub struct EitMisfit<'a> {
    pub model: &'a CemModel,
    pub measurements: Vec<f64>,
    /// Diagonal of `L_A`.
    pub weights: Vec<f64>,
}

impl<'a> EitMisfit<'a> {
    pub fn new(model: &'a CemModel, measurements: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = model.n_measurements();
        if measurements.len() != m || weights.len() != m {
            return Err(Error::Domain(format!(
                "expected {m} measurements and weights, got {} and {}",
                measurements.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::Domain(format!("weights must be positive, got {w}")));
        }
        Ok(Self { model, measurements, weights })
    }

    /// Same scalar weight on every measurement.
    pub fn with_scalar_weight(model: &'a CemModel, measurements: Vec<f64>, la_diag: f64) -> Result<Self> {
        let m = model.n_measurements();
        Self::new(model, measurements, vec![la_diag; m])
    }

    fn weigh(&self, currents: &[f64]) -> Vec<f64> {
        currents.iter().zip(&self.measurements).zip(&self.weights).map(|((i, m), w)| w * (i - m)).collect()
    }

    /// `A(σ)`, weighted Jacobian `K1 = L_A ∇I(σ)*` and offset
    /// `b = L_A(I^m + ∇I(σ)*σ − I(σ))`.
    pub fn linearization(&self, sigma: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>)> {
        let sol = self.model.forward_solve(sigma)?;
        let mut jac = self.model.jacobian(sigma, &sol)?;
        for (r, w) in self.weights.iter().enumerate() {
            jac.row_mut(r).scale_mut(*w);
        }
        let a = self.weigh(&sol.currents);
        let ks = &jac * nalgebra::DVector::from_column_slice(sigma);
        let b = ks.iter().zip(&a).map(|(k, a)| k - a).collect();
        Ok((a, jac, b))
    }
}

impl ResidualModel for EitMisfit<'_> {
    fn input_dim(&self) -> usize {
        self.model.n_sigma()
    }
    fn output_dim(&self) -> usize {
        self.model.n_measurements()
    }
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.weigh(&self.model.currents(x)?))
    }
    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (a, k, _) = self.linearization(x)?;
        Ok((a, k))
    }
}

impl NonlinearOperator for EitMisfit<'_> {
    type Jacobian = DenseOperator;

    fn input_dim(&self) -> usize {
        self.model.n_sigma()
    }
    fn output_dim(&self) -> usize {
        self.model.n_measurements()
    }
    fn value_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&ResidualModel::residual(self, x)?);
        Ok(())
    }
    fn jacobian(&self, x: &[f64]) -> Result<DenseOperator> {
        Ok(DenseOperator(ResidualModel::linearize(self, x)?.1))
    }
    fn linearize(&self, x: &[f64]) -> Result<(Vec<f64>, DenseOperator)> {
        let (a, k) = ResidualModel::linearize(self, x)?;
        Ok((a, DenseOperator(k)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_disc_mesh;
    use crate::linalg::{dist2, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(l: usize, h: f64) -> CemModel {
        let mesh = build_disc_mesh(0.12, l, 0.025 / 0.12, h).unwrap();
        CemModel::with_defaults(mesh).unwrap()
    }

    fn smooth_sigma(model: &CemModel) -> Vec<f64> {
        let r = model.mesh().radius();
        model.mesh().nodes().iter().map(|p| 0.028 * (1.0 + 0.6 * p[0] / r + 3.0 * p[1] * p[1] / (r * r))).collect()
    }

    #[test]
    fn d3_pattern() {
        let model = small_model(10, 0.03);
        let sys = model.assemble_system(&vec![0.03; model.n_sigma()]).unwrap();
        assert_eq!(sys.d3.shape(), (9, 9));
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(sys.d3[(i, j)], if i == j { 2.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let model = small_model(8, 0.03);
        let s = model.stiffness(&smooth_sigma(&model)).unwrap();
        for r in 0..s.nrows() {
            let sum: f64 = s.row(r).map(|(_, v)| v).sum();
            let scale: f64 = s.row(r).map(|(_, v)| v.abs()).sum();
            assert!(sum.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn unit_triangle_local_stiffness() {
        let mesh = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![], 1.0).unwrap();
        let geo = element_geometry(&mesh).unwrap();
        let k = local_stiffness(geo.areas[0], &geo.gradients[0]);
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        assert_eq!(k, expected);
    }

    #[test]
    fn block_solve_matches_fast_extraction() {
        let model = CemModel::new(build_disc_mesh(1.0, 6, 0.4, 0.3).unwrap(), vec![0.05; 6], 1.0).unwrap();
        let sigma = smooth_sigma(&model);
        let sys = model.assemble_system(&sigma).unwrap();
        let sol = model.forward_solve(&sigma).unwrap();
        for p in 0..6 {
            let theta = sys.solve_dense(p).unwrap();
            let dense_currents = sys.extraction.matvec(&theta);
            let fast = &sol.currents[p * 6..(p + 1) * 6];
            assert!(dist2(&dense_currents, fast) <= 1e-9 * norm2(fast), "{dense_currents:?} vs {fast:?}");
            assert!(dist2(&sol.theta(p), &theta) <= 1e-9 * norm2(&theta));
        }
    }

    #[test]
    fn current_sign_is_outflow_at_driven_electrode() {
        let model = small_model(8, 0.03);
        let i = model.currents(&vec![0.03; model.n_sigma()]).unwrap();
        // Driven electrode: u < U on the contact, so current enters the body.
        assert!(i[0] < 0.0);
        assert!(i[1..8].iter().all(|&c| c > 0.0));
    }

    #[test]
    fn kirchhoff_and_reciprocity() {
        let model = small_model(16, 0.02);
        let sigma = smooth_sigma(&model);
        let i = model.currents(&sigma).unwrap();
        for p in 0..16 {
            let ip = &i[p * 16..(p + 1) * 16];
            assert!(ip.iter().sum::<f64>().abs() < 1e-12 * norm2(ip));
        }
        let scale = norm2(&i);
        for a in 0..16 {
            for b in 0..a {
                assert!((i[a * 16 + b] - i[b * 16 + a]).abs() < 1e-8 * scale / 16.0);
            }
        }
    }

    #[test]
    fn refinement_consistency() {
        let coarse = small_model(8, 0.01);
        let fine = small_model(8, 0.005);
        let a = coarse.currents(&smooth_sigma(&coarse)).unwrap();
        let b = fine.currents(&smooth_sigma(&fine)).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm2(&diff) < 0.05 * norm2(&b), "{}", norm2(&diff) / norm2(&b));
    }

    #[test]
    fn rotational_symmetry_homogeneous() {
        let model = small_model(8, 0.02);
        let i = model.currents(&vec![0.028; model.n_sigma()]).unwrap();
        let scale = i.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in 0..8 {
            for k in 0..8 {
                let rotated = i[(k + 8 - p) % 8];
                assert!((i[p * 8 + k] - rotated).abs() < 1e-10 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn derivative_blocks_are_sigma_independent_and_sum_to_stiffness() {
        let model = small_model(8, 0.03);
        let sigma = smooth_sigma(&model);
        let s = model.stiffness(&sigma).unwrap();
        let n = model.n_sigma();
        let mut total = vec![0.0; s.nnz()];
        for i in 0..n {
            let d = model.stiffness_derivative(i);
            for r in 0..n {
                for (c, v) in d.row(r) {
                    let start = s.row_ptr()[r];
                    let k = s.col_idx()[start..s.row_ptr()[r + 1]].binary_search(&c).unwrap();
                    total[start + k] += sigma[i] * v;
                }
            }
            // Dense per-node block reproduces the sparse derivative.
            let block = &model.node_blocks()[i];
            let m = block.nodes.len();
            for a in 0..m {
                for b in 0..m {
                    assert_eq!(block.values[a * m + b], d.get(block.nodes[a], block.nodes[b]));
                }
            }
        }
        let max = s.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (t, v) in total.iter().zip(s.values()) {
            assert!((t - v).abs() <= 1e-12 * max);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = small_model(8, 0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let sigma: Vec<f64> = (0..model.n_sigma()).map(|_| 0.01 + 0.05 * rng.random::<f64>()).collect();
            let h: Vec<f64> = (0..model.n_sigma()).map(|_| rng.random::<f64>() - 0.5).collect();
            let sol = model.forward_solve(&sigma).unwrap();
            let jac = model.jacobian(&sigma, &sol).unwrap();
            let jh = &jac * nalgebra::DVector::from_column_slice(&h);
            let eps = 1e-6 * norm2(&sigma) / norm2(&h);
            let plus: Vec<f64> = sigma.iter().zip(&h).map(|(s, d)| s + eps * d).collect();
            let minus: Vec<f64> = sigma.iter().zip(&h).map(|(s, d)| s - eps * d).collect();
            let ip = model.currents(&plus).unwrap();
            let im = model.currents(&minus).unwrap();
            let fd: Vec<f64> = ip.iter().zip(&im).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let err = dist2(&fd, jh.as_slice()) / norm2(jh.as_slice());
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn misfit_linearization_identity() {
        let model = small_model(8, 0.03);
        let sigma = smooth_sigma(&model);
        let meas: Vec<f64> = model.currents(&vec![0.02; model.n_sigma()]).unwrap();
        let misfit = EitMisfit::with_scalar_weight(&model, meas.clone(), 7.0).unwrap();
        let (a, k1, b) = misfit.linearization(&sigma).unwrap();
        let ks = &k1 * nalgebra::DVector::from_column_slice(&sigma);
        let lin: f64 = ks.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * 0.5;
        let full = 0.5 * crate::linalg::dot(&a, &a);
        assert!((lin - full).abs() <= 1e-10 * full);

        let exact = EitMisfit::with_scalar_weight(&model, meas.clone(), 7.0).unwrap();
        assert!(norm2(&exact.residual(&vec![0.02; model.n_sigma()]).unwrap()) == 0.0);
        let doubled = EitMisfit::with_scalar_weight(&model, meas, 14.0).unwrap();
        let r1 = norm2(&misfit.residual(&sigma).unwrap());
        let r2 = norm2(&doubled.residual(&sigma).unwrap());
        assert!((r2 - 2.0 * r1).abs() <= 1e-14 * r2);
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let model = small_model(8, 0.04);
        let mut sigma = vec![0.03; model.n_sigma()];
        sigma[3] = 0.0;
        assert!(matches!(model.forward_solve(&sigma), Err(Error::Domain(_))));
        assert!(matches!(model.currents(&[1.0]), Err(Error::Domain(_))));
    }
}
