//! Measurement simulation, noise and reference estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ripgn_core::forward::{CemModel, EitMisfit};
use ripgn_core::geometry::Mesh2D;
use ripgn_core::operator::ResidualModel;
use ripgn_core::{Error, Result};

use crate::phantom::Phantom;

/// Name of the noise generator, recorded in summaries.
pub const NOISE_RNG: &str = "ChaCha8Rng+StandardNormal";

/// Noisy currents on an inversion mesh. The simulation mesh is not kept, so
/// reconstructions cannot touch it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inversion_mesh: Mesh2D,
    pub measurements: Vec<f64>,
    pub noise_rel: f64,
    pub seed: u64,
    pub simulation_nodes: usize,
    /// Target sampled on the inversion mesh, when known.
    pub sigma_true: Option<Vec<f64>>,
}

/// `I + noise_rel·|I|·ξ` with `ξ` standard normal from a seeded generator.
pub fn add_noise(clean: &[f64], noise_rel: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_rel >= 0.0) {
        return Err(Error::Domain(format!("noise level {noise_rel} is negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clean
        .iter()
        .map(|&i| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            i + noise_rel * i.abs() * xi
        })
        .collect())
}

/// Returns `(noisy, clean)` currents of `phantom` on the model's mesh.
pub fn simulate_measurements(phantom: &Phantom, model: &CemModel, noise_rel: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let clean = model.currents(&phantom.sample(model.mesh()))?;
    Ok((add_noise(&clean, noise_rel, seed)?, clean))
}

pub fn simulate_dataset(
    phantom: &Phantom,
    simulation_mesh: Mesh2D,
    inversion_mesh: Mesh2D,
    noise_rel: f64,
    seed: u64,
) -> Result<Dataset> {
    let simulation_nodes = simulation_mesh.n_nodes();
    if simulation_nodes <= inversion_mesh.n_nodes() {
        return Err(Error::Config(format!(
            "simulation mesh ({simulation_nodes} nodes) must be finer than the inversion mesh ({} nodes)",
            inversion_mesh.n_nodes()
        )));
    }
    if simulation_mesh.n_electrodes() != inversion_mesh.n_electrodes() {
        return Err(Error::Config("simulation and inversion meshes have different electrode counts".into()));
    }
    let model = CemModel::with_defaults(simulation_mesh)?;
    let (measurements, _) = simulate_measurements(phantom, &model, noise_rel, seed)?;
    let sigma_true = Some(phantom.sample(&inversion_mesh));
    Ok(Dataset { inversion_mesh, measurements, noise_rel, seed, simulation_nodes, sigma_true })
}

/// `100·‖σ̂ − σ‖/‖σ‖`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Domain(format!("lengths differ: {} vs {}", estimate.len(), truth.len())));
    }
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Domain("reference conductivity is zero".into()));
    }
    let diff: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(100.0 * diff / norm)
}

/// `1/(noise_rel · rms(I^m))`: unit-variance residuals at the noise level.
pub fn auto_la_diag(measurements: &[f64], noise_rel: f64) -> Result<f64> {
    let rms = (measurements.iter().map(|v| v * v).sum::<f64>() / measurements.len().max(1) as f64).sqrt();
    if !(noise_rel > 0.0) || !(rms > 0.0) {
        return Err(Error::Config("automatic L_A needs positive noise level and nonzero measurements".into()));
    }
    Ok(1.0 / (noise_rel * rms))
}

/// Constant conductivity minimising `½‖A(c·1)‖²`: a logarithmic scan over
/// `[1e-6, 10]` refined by golden-section search on the best bracket.
pub fn homogeneous_fit(misfit: &EitMisfit<'_>) -> Result<f64> {
    let n = misfit.model.n_sigma();
    let phi = |log_c: f64| -> Result<f64> {
        let r = misfit.residual(&vec![10f64.powf(log_c); n])?;
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>())
    };
    let (lo, hi, steps) = (-6.0, 1.0, 70);
    let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let values = grid.iter().map(|&g| phi(g)).collect::<Result<Vec<_>>>()?;
    let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(steps)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (phi(c)?, phi(d)?);
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = phi(d)?;
        }
    }
    let log_c = 0.5 * (a + b);
    let best_log = if phi(log_c)? <= values[best] { log_c } else { grid[best] };
    Ok(10f64.powf(best_log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ripgn_core::geometry::build_disc_mesh;

    #[test]
    fn zero_noise_is_exact_and_seed_is_deterministic() {
        let clean = vec![1.0, -2.0, 0.5, 3e-4];
        assert_eq!(add_noise(&clean, 0.0, 3).unwrap(), clean);
        assert_eq!(add_noise(&clean, 0.01, 3).unwrap(), add_noise(&clean, 0.01, 3).unwrap());
        assert_ne!(add_noise(&clean, 0.01, 3).unwrap(), add_noise(&clean, 0.01, 4).unwrap());
    }

    #[test]
    fn empirical_noise_level() {
        let clean = [-0.37];
        let rel: Vec<f64> = (0..10_000).map(|s| (add_noise(&clean, 0.005, s).unwrap()[0] - clean[0]) / clean[0].abs()).collect();
        let mean = rel.iter().sum::<f64>() / rel.len() as f64;
        let std = (rel.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (rel.len() - 1) as f64).sqrt();
        assert!((std - 0.005).abs() <= 0.05 * 0.005, "{std}");
    }

    /// Neumaier-compensated sum.
    fn compensated(values: impl Iterator<Item = f64>) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for v in values {
            let t = sum + v;
            comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
            sum = t;
        }
        sum + comp
    }

    #[test]
    fn relative_error_cases() {
        let truth = vec![0.028, 0.001, 0.03];
        assert_eq!(relative_error(&truth, &truth).unwrap(), 0.0);
        let doubled: Vec<f64> = truth.iter().map(|v| 2.0 * v).collect();
        assert!((relative_error(&doubled, &truth).unwrap() - 100.0).abs() < 1e-12);
        assert!(relative_error(&truth, &[0.0; 3]).is_err());
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
            let num = compensated(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y))).sqrt();
            let den = compensated(b.iter().map(|y| y * y)).sqrt();
            let re = relative_error(&a, &b).unwrap();
            assert!((re - 100.0 * num / den).abs() <= 1e-12 * re);
        }
    }

    #[test]
    fn homogeneous_fit_beats_neighbours() {
        let mesh = build_disc_mesh(0.12, 8, 0.025 / 0.12, 0.02).unwrap();
        let model = CemModel::with_defaults(mesh.clone()).unwrap();
        let (meas, _) = simulate_measurements(&Phantom::desk(), &model, 0.005, 1).unwrap();
        let misfit = EitMisfit::with_scalar_weight(&model, meas.clone(), auto_la_diag(&meas, 0.005).unwrap()).unwrap();
        let c = homogeneous_fit(&misfit).unwrap();
        assert!(c > 0.01 && c < 0.028, "{c}");
        let phi = |c: f64| misfit.residual(&vec![c; mesh.n_nodes()]).unwrap().iter().map(|v| v * v).sum::<f64>();
        assert!(phi(c) <= phi(0.9 * c) && phi(c) <= phi(1.1 * c));
    }
}
