//! Whole-expression helpers: evaluate with gradients, and check gradients
//! against central finite differences.

use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::tape::{Bound, Tape, Var};

/// Evaluates a scalar expression over `inputs` and returns its value together
/// with one gradient per input.
pub fn evaluate_with_gradients<F>(inputs: &ParamSet, f: F) -> Result<(f64, ParamSet)>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = tape.bind(inputs);
    let root = f(&tape, &bound)?;
    let value = root.item()?;
    let grads = tape.backward(root)?;
    Ok((value, grads.collect(&bound)))
}

fn evaluate<F>(inputs: &ParamSet, f: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let bound = tape.bind(inputs);
    let root = f(&tape, &bound)?;
    tape.check_finite()?;
    root.item()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |autodiff − fd| / max(1, |fd|)
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients to central differences with step `eps`
/// over every coordinate of every input.
pub fn grad_check<F>(inputs: &ParamSet, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &Bound<'t>) -> Result<Var<'t>>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            detail: format!("step {eps} outside [1e-7, 1e-3]"),
        });
    }
    let analytic = {
        let tape = Tape::new();
        let bound = tape.bind(inputs);
        let root = f(&tape, &bound)?;
        tape.check_finite()?;
        tape.backward(root)?.collect(&bound)
    };

    let mut probe = inputs.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let names: Vec<String> = inputs.names().map(str::to_string).collect();
    for name in names {
        let n = inputs.get(&name).expect("own key").len();
        for i in 0..n {
            let orig = inputs.get(&name).expect("own key").data()[i];
            probe.get_mut(&name).expect("own key").data_mut()[i] = orig + eps;
            let plus = evaluate(&probe, &f)?;
            probe.get_mut(&name).expect("own key").data_mut()[i] = orig - eps;
            let minus = evaluate(&probe, &f)?;
            probe.get_mut(&name).expect("own key").data_mut()[i] = orig;

            let fd = (plus - minus) / (2.0 * eps);
            let ad = analytic.get(&name).expect("collected").data()[i];
            let rel = (ad - fd).abs() / fd.abs().max(1.0);
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn constant_function_has_zero_error() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::from_fn(vec![4], |i| i as f64));
        let r = grad_check(&p, 1e-5, |tape, _| Ok(tape.constant(Tensor::scalar(7.0)))).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.coordinates, 4);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        fn f<'t>(tape: &'t Tape, _: &Bound<'t>) -> Result<Var<'t>> {
            Ok(tape.constant(Tensor::scalar(0.0)))
        }
        let p = ParamSet::new();
        assert!(grad_check(&p, 1e-2, f).is_err());
        assert!(grad_check(&p, 1e-9, f).is_err());
    }

    #[test]
    fn non_finite_intermediate_identifies_node() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(-4.0));
        let err = grad_check(&p, 1e-5, |_, b| Ok(b.get("x")?.sqrt())).unwrap_err();
        assert_eq!(err, TensorError::NonFinite { node: 1, op: "sqrt" });
    }

    #[test]
    fn evaluate_returns_value_and_named_gradients() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(3.0));
        let (v, g) = evaluate_with_gradients(&p, |_, b| {
            let x = b.get("x")?;
            x.mul(x)
        })
        .unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g.get("x").unwrap().data(), &[6.0]);
    }
}
