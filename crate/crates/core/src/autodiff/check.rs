use super::tape::{Tape, Var};

/// Absolute floor under which a gradient mismatch counts as agreement.
pub const ABS_FLOOR: f64 = 1e-8;

/// `true` when `a` and `b` agree to `rel_tol` relative or `abs_tol` absolute.
pub fn close(a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let diff = (a - b).abs();
    diff <= abs_tol || diff <= rel_tol * a.abs().max(b.abs())
}

/// Relative error with an absolute floor in the denominator.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite differences of a plain function.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], h: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let step = h(point[i]);
            x[i] = point[i] + step;
            let up = f(&x);
            x[i] = point[i] - step;
            let down = f(&x);
            x[i] = point[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Compares reverse-mode gradients of `function` at `point` against central
/// differences with step `h`.
///
/// Returns `true` iff every leaf agrees to relative error `tol` (absolute
/// [`ABS_FLOOR`] near zero). Any evaluation failure yields `false`.
pub fn grad_check<F>(function: F, point: &[f64], h: f64, tol: f64) -> bool
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let Ok(xs) = tape.leaves(point) else { return false };
    let root = function(&tape, &xs);
    let Ok(grads) = tape.backward(root) else { return false };
    let analytic = grads.wrt_all(&xs);

    let eval = |p: &[f64]| {
        let tape = Tape::new();
        match tape.leaves(p) {
            Ok(xs) => function(&tape, &xs).value(),
            Err(_) => f64::NAN,
        }
    };
    let numeric = central_difference(eval, point, |_| h);
    analytic
        .iter()
        .zip(&numeric)
        .all(|(a, n)| n.is_finite() && close(*a, *n, tol, ABS_FLOOR))
}
