//! Bounds and adaptive choices for the relaxation weight `w`.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Constants entering the admissible range of `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceBoundInputs {
    /// Linearisation error constant `C` with `‖A(x) − Ã_y(x)‖ ≤ C‖x − y‖²`.
    pub c: f64,
    /// Bound on `‖A‖` over the sublevel set.
    pub a_max: f64,
    /// Radius on which the linearisation bound holds.
    pub radius: f64,
    /// Margin `ε ∈ [0, β)`.
    pub epsilon: f64,
    pub j0: f64,
    /// Lower bound of the regulariser.
    pub inf_f: f64,
}

/// `min(1, 𝔡/√(2(J0 − inf F)/β), (β − ε)/(2 C A_max))`.
pub fn estimate_w_bound(inputs: &ConvergenceBoundInputs, beta: f64) -> Result<f64> {
    let ConvergenceBoundInputs { c, a_max, radius, epsilon, j0, inf_f } = *inputs;
    if !(beta > 0.0) || !(epsilon >= 0.0) || !(epsilon < beta) {
        return Err(Error::Domain(format!("need 0 ≤ ε < β, got ε={epsilon}, β={beta}")));
    }
    if !(c >= 0.0) || !(a_max >= 0.0) || !(radius > 0.0) {
        return Err(Error::Domain(format!("need C, A_max ≥ 0 and 𝔡 > 0, got C={c}, A_max={a_max}, 𝔡={radius}")));
    }
    let radicand = 2.0 * (j0 - inf_f) / beta;
    if !(radicand > 0.0) {
        return Err(Error::Domain(format!("J0 − inf F = {} must be positive", j0 - inf_f)));
    }
    let second = radius / radicand.sqrt();
    let ca = c * a_max;
    let third = if ca > 0.0 { (beta - epsilon) / (2.0 * ca) } else { f64::INFINITY };
    Ok(1.0.min(second).min(third))
}

/// Adaptive choice of `w_k` from a candidate grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Linesearch {
    #[default]
    Off,
    /// Accept `w` when the measured linearisation error keeps it under the
    /// third bound of [`estimate_w_bound`].
    FractionalError { grid: Vec<f64>, epsilon: f64 },
    /// Accept `w` when `J(z) − J(z̃) ≥ (wε/2)‖z − x̃‖²`.
    DescentCheck { grid: Vec<f64>, epsilon: f64 },
}

/// Quantities at the current iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinesearchState {
    /// `J(z^k)`.
    pub objective: f64,
    /// `‖z^k − x̃^k‖²`.
    pub step_norm_sq: f64,
    pub beta: f64,
}

/// Evaluation at a trial point `z̃ = (1 − w)z + w x̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEval {
    /// `J(z̃)`.
    pub objective: f64,
    /// `‖A(z̃)‖²`.
    pub residual_sq: f64,
    /// `‖A(z) + ∇A(z)*(z̃ − z)‖²`.
    pub linearized_residual_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinesearchOutcome {
    pub w: f64,
    /// False when no grid value was admissible and `w` is the fallback.
    pub accepted: bool,
}

/// `max(0, (‖A(z̃)‖² − ‖A_k(z̃)‖²)/(2w‖z − x̃‖²))`.
pub fn fractional_error(candidate: &CandidateEval, w: f64, step_norm_sq: f64) -> f64 {
    let denom = 2.0 * w * step_norm_sq;
    if !(denom > 0.0) {
        return 0.0;
    }
    ((candidate.residual_sq - candidate.linearized_residual_sq) / denom).max(0.0)
}

/// Largest admissible grid value, or `base_w` when none is. `eval` failures
/// mark that grid value inadmissible.
pub fn relaxation_linesearch<E>(mode: &Linesearch, base_w: f64, state: &LinesearchState, mut eval: E) -> LinesearchOutcome
where
    E: FnMut(f64) -> Result<CandidateEval>,
{
    let (grid, epsilon) = match mode {
        Linesearch::Off => return LinesearchOutcome { w: base_w, accepted: true },
        Linesearch::FractionalError { grid, epsilon } | Linesearch::DescentCheck { grid, epsilon } => (grid, *epsilon),
    };
    let mut sorted: Vec<f64> = grid.iter().copied().filter(|w| *w > 0.0 && *w <= 1.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for w in sorted {
        let Ok(candidate) = eval(w) else { continue };
        if !candidate.objective.is_finite() {
            continue;
        }
        let admissible = match mode {
            Linesearch::FractionalError { .. } => {
                let frac = fractional_error(&candidate, w, state.step_norm_sq);
                frac == 0.0 || w <= (state.beta - epsilon) / (2.0 * frac)
            }
            _ => state.objective - candidate.objective >= 0.5 * w * epsilon * state.step_norm_sq,
        };
        if admissible {
            return LinesearchOutcome { w, accepted: true };
        }
    }
    LinesearchOutcome { w: base_w, accepted: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn inputs() -> ConvergenceBoundInputs {
        ConvergenceBoundInputs { c: 1.0, a_max: 1.0, radius: 1e12, epsilon: 0.5, j0: 1e-6, inf_f: 0.0 }
    }

    #[test]
    fn third_term_example() {
        assert!((estimate_w_bound(&inputs(), 1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_c_drops_third_term() {
        let i = ConvergenceBoundInputs { c: 0.0, radius: 0.3, j0: 2.0, ..inputs() };
        // 𝔡/√(2·2/1) = 0.15.
        assert!((estimate_w_bound(&i, 1.0).unwrap() - 0.15).abs() < 1e-15);
        let i = ConvergenceBoundInputs { c: 0.0, ..inputs() };
        assert_eq!(estimate_w_bound(&i, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(estimate_w_bound(&ConvergenceBoundInputs { j0: 0.0, ..inputs() }, 1.0).is_err());
        assert!(estimate_w_bound(&inputs(), 0.5).is_err());
    }

    #[test]
    fn linear_model_accepts_largest() {
        let mode = Linesearch::FractionalError { grid: vec![0.25, 1.0, 0.5], epsilon: 0.0 };
        let state = LinesearchState { objective: 1.0, step_norm_sq: 1.0, beta: 1e-10 };
        let out = relaxation_linesearch(&mode, 0.75, &state, |_| {
            Ok(CandidateEval { objective: 0.5, residual_sq: 0.3, linearized_residual_sq: 0.3 })
        });
        assert_eq!(out, LinesearchOutcome { w: 1.0, accepted: true });
    }

    #[test]
    fn fractional_error_rejects_large_w() {
        let mode = Linesearch::FractionalError { grid: vec![1.0, 0.5, 0.25], epsilon: 0.0 };
        let state = LinesearchState { objective: 1.0, step_norm_sq: 1.0, beta: 1.0 };
        let out = relaxation_linesearch(&mode, 0.1, &state, |w| {
            Ok(CandidateEval { objective: 0.5, residual_sq: 1.0 + 4.0 * w * w, linearized_residual_sq: 1.0 })
        });
        // frac = 2w, admissible iff w ≤ 1/(4w), i.e. w ≤ 1/2.
        assert_eq!(out.w, 0.5);
    }

    #[test]
    fn descent_check_picks_only_decreasing_weight() {
        let mode = Linesearch::DescentCheck { grid: vec![1.0, 0.75, 0.5, 0.25], epsilon: 1e-3 };
        let state = LinesearchState { objective: 10.0, step_norm_sq: 1.0, beta: 1.0 };
        let out = relaxation_linesearch(&mode, 0.75, &state, |w| {
            Ok(CandidateEval { objective: if w <= 0.25 { 9.0 } else { 11.0 }, residual_sq: 0.0, linearized_residual_sq: 0.0 })
        });
        assert_eq!(out, LinesearchOutcome { w: 0.25, accepted: true });
    }

    #[test]
    fn degenerate_grid() {
        let mode = Linesearch::DescentCheck { grid: vec![0.5], epsilon: 1e-3 };
        let state = LinesearchState { objective: 10.0, step_norm_sq: 1.0, beta: 1.0 };
        let ok = relaxation_linesearch(&mode, 0.5, &state, |_| {
            Ok(CandidateEval { objective: 9.0, residual_sq: 0.0, linearized_residual_sq: 0.0 })
        });
        assert_eq!(ok, LinesearchOutcome { w: 0.5, accepted: true });
        let failed = relaxation_linesearch(&mode, 0.5, &state, |_| Err(Error::Divergence { iteration: 0 }));
        assert_eq!(failed, LinesearchOutcome { w: 0.5, accepted: false });
    }
}
