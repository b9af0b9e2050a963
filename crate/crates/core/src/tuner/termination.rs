use serde::{Deserialize, Serialize};

/// Threshold of the convergence and divergence indicators.
pub const TERMINATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    Converged,
    Diverged,
}

/// Stop on `|J_k − J_{k−1}| < 1e−3` (converged, checked first) or
/// `J_k > J_{k−1} + 1e−3` (diverged).
pub fn terminate(current: f64, previous: f64) -> Verdict {
    if (current - previous).abs() < TERMINATION_TOL {
        Verdict::Converged
    } else if current > previous + TERMINATION_TOL {
        Verdict::Diverged
    } else {
        Verdict::Continue
    }
}
