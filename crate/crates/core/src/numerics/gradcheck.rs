use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives one bound variable per entry of `params` and must return a
/// single-element node. The step for parameter value `p` is `h * max(1, |p|)`.
/// Returns `max |analytic - fd| / max(1, |fd|)` over every element.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = scalar_of(&tape, out)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("objective is not finite: {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v0 = scalar_of(&tape, out)?;
    if !v0.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite: {v0}")));
    }
    let grads = tape.backward(out)?;

    let mut values = params.to_vec();
    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(params[i].shape()));
        for k in 0..params[i].len() {
            let p = params[i].data()[k];
            let step = h * p.abs().max(1.0);
            values[i].data_mut()[k] = p + step;
            let fp = eval(&values)?;
            values[i].data_mut()[k] = p - step;
            let fm = eval(&values)?;
            values[i].data_mut()[k] = p;
            let fd = (fp - fm) / (2.0 * step);
            let err = (analytic.data()[k] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(Error::shape("grad_check", t.shape(), &[1]));
    }
    Ok(t.data()[0])
}
