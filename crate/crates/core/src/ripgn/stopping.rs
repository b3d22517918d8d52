//! Outer and inner stopping rules.

/// Stop once an outer step decreases `J` by less than `threshold`, unless
/// one of the next `lookahead` steps decreases it by at least `threshold`.
/// Steps with index below `activation` never trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagnationRule {
    pub threshold: f64,
    pub activation: usize,
    pub lookahead: usize,
}

impl Default for StagnationRule {
    fn default() -> Self {
        Self { threshold: 0.5, activation: 8, lookahead: 2 }
    }
}

impl StagnationRule {
    /// Settings for the full-problem primal-dual baseline.
    pub fn nlpdps() -> Self {
        Self { threshold: 0.5, activation: 700, lookahead: 300 }
    }

    /// Fewest iterates computed before a confirmed stop.
    pub fn min_iterations(&self) -> usize {
        self.activation + self.lookahead
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    /// Step `trigger` fell below the threshold; lookahead pending.
    TentativeStop { trigger: usize },
    /// Lookahead exhausted without a rescue. `index` is the iterate to return.
    ConfirmedStop { index: usize },
}

/// Incremental form of [`stagnation_stop`].
#[derive(Debug, Clone)]
pub struct StagnationMonitor {
    rule: StagnationRule,
    last: f64,
    k: usize,
    pending: Option<usize>,
}

impl StagnationMonitor {
    /// Starts from `J(z^0)`.
    pub fn new(rule: StagnationRule, initial_objective: f64) -> Self {
        Self { rule, last: initial_objective, k: 0, pending: None }
    }

    /// Records `J(z^k)` for the next `k` and returns the decision so far.
    pub fn push(&mut self, objective: f64) -> Decision {
        self.k += 1;
        let k = self.k;
        let small = !(self.last - objective >= self.rule.threshold);
        self.last = objective;
        match self.pending {
            Some(_) if !small => self.pending = None,
            Some(trigger) if k - trigger >= self.rule.lookahead => return Decision::ConfirmedStop { index: trigger },
            Some(_) => {}
            None if small && k >= self.rule.activation => {
                if self.rule.lookahead == 0 {
                    return Decision::ConfirmedStop { index: k };
                }
                self.pending = Some(k);
            }
            None => {}
        }
        match self.pending {
            Some(trigger) => Decision::TentativeStop { trigger },
            None => Decision::Continue,
        }
    }
}

/// Applies `rule` to objective values `objectives[j] = J(z^j)`. Step `k ≥ 1`
/// goes from `z^{k−1}` to `z^k`; a stop returns the iterate that triggered.
pub fn stagnation_stop(rule: &StagnationRule, objectives: &[f64]) -> Decision {
    let Some((&first, rest)) = objectives.split_first() else { return Decision::Continue };
    let mut monitor = StagnationMonitor::new(*rule, first);
    let mut decision = Decision::Continue;
    for &j in rest {
        decision = monitor.push(j);
        if let Decision::ConfirmedStop { .. } = decision {
            break;
        }
    }
    decision
}

/// Inexactness test `‖e‖ ≤ ρ‖x̃ − z‖`.
pub fn residual_stop(residual_norm: f64, step_norm: f64, rho: f64) -> bool {
    residual_norm <= rho * step_norm
}

/// First index at which [`residual_stop`] accepts, scanning paired histories.
pub fn first_acceptance(residual_norms: &[f64], step_norms: &[f64], rho: f64) -> Option<usize> {
    residual_norms.iter().zip(step_norms).position(|(&e, &d)| residual_stop(e, d, rho))
}
