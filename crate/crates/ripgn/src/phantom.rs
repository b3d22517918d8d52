//! Piecewise-constant conductivity targets.

use ripgn_core::geometry::Mesh2D;
use ripgn_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub radius: f64,
    pub conductivity: f64,
}

/// Constant background with circular inclusions; later inclusions win where
/// they overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub background: f64,
    pub inclusions: Vec<Inclusion>,
}

pub const DESK_BACKGROUND: f64 = 0.028;
pub const DESK_INCLUSION: f64 = 1e-3;

pub fn make_phantom(background: f64, inclusions: Vec<Inclusion>) -> Result<Phantom> {
    if !(background > 0.0) {
        return Err(Error::Domain(format!("background conductivity {background} is not positive")));
    }
    for inc in &inclusions {
        if !(inc.conductivity > 0.0) || !(inc.radius >= 0.0) {
            return Err(Error::Domain(format!(
                "inclusion needs positive conductivity and nonnegative radius, got {} and {}",
                inc.conductivity, inc.radius
            )));
        }
    }
    Ok(Phantom { background, inclusions })
}

impl Phantom {
    /// Resistive disc of radius 0.04 off the tank centre.
    pub fn desk() -> Self {
        let inclusion = Inclusion { center: [0.04, 0.03], radius: 0.04, conductivity: DESK_INCLUSION };
        Phantom { background: DESK_BACKGROUND, inclusions: vec![inclusion] }
    }

    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        self.inclusions
            .iter()
            .rev()
            .find(|inc| (p[0] - inc.center[0]).hypot(p[1] - inc.center[1]) < inc.radius)
            .map_or(self.background, |inc| inc.conductivity)
    }

    /// Nodal samples on `mesh`.
    pub fn sample(&self, mesh: &Mesh2D) -> Vec<f64> {
        mesh.nodes().iter().map(|&p| self.value_at(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ripgn_core::geometry::build_disc_mesh;

    #[test]
    fn centred_inclusion_values_and_area_fraction() {
        let mesh = build_disc_mesh(0.12, 16, 0.025 / 0.12, 0.01).unwrap();
        let p = make_phantom(0.028, vec![Inclusion { center: [0.0, 0.0], radius: 0.04, conductivity: 1e-3 }]).unwrap();
        let s = p.sample(&mesh);
        assert!(s.iter().all(|&v| v == 0.028 || v == 1e-3));
        let inside = s.iter().filter(|&&v| v == 1e-3).count() as f64 / s.len() as f64;
        let expected = (0.04f64 / 0.12).powi(2);
        assert!((inside - expected).abs() <= 0.2 * expected, "{inside} vs {expected}");
    }

    #[test]
    fn empty_inclusion_is_constant() {
        let mesh = build_disc_mesh(0.12, 8, 0.2, 0.03).unwrap();
        let p = make_phantom(0.028, vec![Inclusion { center: [0.0, 0.0], radius: 0.0, conductivity: 1e-3 }]).unwrap();
        assert!(p.sample(&mesh).iter().all(|&v| v == 0.028));
    }

    #[test]
    fn rejects_nonpositive_conductivity() {
        assert!(make_phantom(0.0, vec![]).is_err());
        assert!(make_phantom(0.028, vec![Inclusion { center: [0.0, 0.0], radius: 0.01, conductivity: -1.0 }]).is_err());
    }
}
