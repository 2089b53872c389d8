//! Exhaustive grid minimization of the envelope objective for `d ≤ 2`.

use super::Sparsity;
use crate::error::{invalid, Result};
use crate::functions::ScoreFunction;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub argmin: Tensor,
}

impl OracleResult {
    /// `(x − argmin)/ρ`.
    pub fn gradient(&self, x: &Tensor, rho: f64) -> Tensor {
        x.sub(&self.argmin).scale(1.0 / rho)
    }
}

/// Minimizes `g(x̃) + ‖x̃ − x‖²/(2ρ) + η·penalty(x̃ − x)` over the grid
/// `x + step·k`, `|step·k_i| ≤ radius`.
pub fn brute_force_envelope_oracle<F: ScoreFunction + ?Sized>(
    f: &F,
    x: &Tensor,
    rho: f64,
    eta: f64,
    sparsity: &Sparsity,
    grid_radius: f64,
    grid_step: f64,
) -> Result<OracleResult> {
    let d = x.len();
    if !(1..=2).contains(&d) {
        return invalid(format!("oracle supports d in {{1, 2}}, got {d}"));
    }
    if !(grid_step > 0.0) || !(grid_radius >= 0.0) || !grid_step.is_finite() {
        return invalid(format!("invalid grid: radius {grid_radius}, step {grid_step}"));
    }
    if !(rho > 0.0) {
        return invalid(format!("rho must be positive, got {rho}"));
    }
    let eta = if *sparsity == Sparsity::Vanilla { 0.0 } else { eta };
    let n = (grid_radius / grid_step).floor() as i64;
    let offsets: Vec<f64> = (-n..=n).map(|k| k as f64 * grid_step).collect();

    let mut best = f64::INFINITY;
    let mut best_delta = vec![0.0; d];
    let mut delta = vec![0.0; d];
    let mut visit = |delta: &[f64]| -> Result<()> {
        let dt = x.with_data(delta.to_vec());
        let obj = f.value(&x.add(&dt))?
            + dt.dot(&dt) / (2.0 * rho)
            + if eta > 0.0 { eta * sparsity.penalty(&dt)? } else { 0.0 };
        if obj < best {
            best = obj;
            best_delta.copy_from_slice(delta);
        }
        Ok(())
    };
    if d == 1 {
        for &a in &offsets {
            delta[0] = a;
            visit(&delta)?;
        }
    } else {
        for &a in &offsets {
            for &b in &offsets {
                delta[0] = a;
                delta[1] = b;
                visit(&delta)?;
            }
        }
    }
    Ok(OracleResult {
        value: best,
        argmin: x.add(&x.with_data(best_delta)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AbsoluteValue, Quadratic};

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn huber_cases() {
        let step = 1e-4;
        let x = t(&[0.5]);
        let r = brute_force_envelope_oracle(&AbsoluteValue, &x, 1.0, 0.0, &Sparsity::Vanilla, 2.0, step).unwrap();
        assert!(r.argmin.data()[0].abs() <= step);
        assert!((r.value - 0.125).abs() < 1e-6);
        assert!((r.gradient(&x, 1.0).data()[0] - 0.5).abs() <= step);

        let x = t(&[3.0]);
        let r = brute_force_envelope_oracle(&AbsoluteValue, &x, 1.0, 0.0, &Sparsity::Vanilla, 2.0, step).unwrap();
        assert!((r.argmin.data()[0] - 2.0).abs() <= step);
        assert!((r.gradient(&x, 1.0).data()[0] - 1.0).abs() <= step);
    }

    #[test]
    fn quadratic_case() {
        let r = brute_force_envelope_oracle(
            &Quadratic { curvature: 1.0 },
            &t(&[2.0]),
            1.0,
            0.0,
            &Sparsity::Vanilla,
            2.0,
            1e-3,
        )
        .unwrap();
        assert!((r.argmin.data()[0] - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn rejects_bad_grids() {
        let q = Quadratic { curvature: 1.0 };
        assert!(brute_force_envelope_oracle(&q, &t(&[1.0, 2.0, 3.0]), 1.0, 0.0, &Sparsity::Vanilla, 1.0, 0.1).is_err());
        assert!(brute_force_envelope_oracle(&q, &t(&[1.0]), 1.0, 0.0, &Sparsity::Vanilla, 1.0, 0.0).is_err());
    }
}
