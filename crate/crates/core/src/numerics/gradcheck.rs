//! Central finite-difference gradient checking.
//!
//! Lives in the library (not behind `cfg(test)`) so integration tests and the
//! acceptance suite can use it; it never calls the reverse sweep's internals, only
//! re-evaluates the forward function.

use super::graph::{Graph, ParamId, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Largest per-input relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
/// between reverse-mode gradients and central differences with step `FD_STEP`.
///
/// `f` builds a scalar from the bound inputs; it is re-run for every perturbation.
pub fn max_relative_error<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values
            .iter()
            .enumerate()
            .map(|(i, t)| g.param(ParamId(i), t.clone()))
            .collect();
        let out = f(&mut g, &vars)?;
        Ok((g, out))
    };

    let (g, out) = eval(inputs)?;
    let analytic = g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut values = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let orig = input.data()[k];
            values[i].data_mut()[k] = orig + FD_STEP;
            let (gp, op) = eval(&values)?;
            let plus = gp.value(op).item()?;
            values[i].data_mut()[k] = orig - FD_STEP;
            let (gm, om) = eval(&values)?;
            let minus = gm.value(om).item()?;
            values[i].data_mut()[k] = orig;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        let a = analytic[&ParamId(i)].data();
        let diff = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom == 0.0 { 0.0 } else { diff / denom };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// [`max_relative_error`] with the `FD_TOLERANCE` gate applied.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let err = max_relative_error(inputs, f)?;
    if err >= FD_TOLERANCE {
        return Err(Error::Contract(format!(
            "gradient check failed: relative error {err:.3e}"
        )));
    }
    Ok(err)
}
