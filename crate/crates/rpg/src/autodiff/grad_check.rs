use super::array::RealArray;
use super::params::ParameterSet;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Compare reverse-mode gradients against central finite differences.
///
/// `f` must record a deterministic scalar-valued forward pass for the given
/// parameters on the supplied tape. Returns the maximum relative error over
/// every parameter coordinate, falling back to absolute error when both
/// derivative magnitudes are below 1e-8.
pub fn grad_check<F>(f: F, params: &ParameterSet, epsilon: f64) -> Result<f64>
where
    F: Fn(&ParameterSet, &mut Tape) -> Result<NodeId>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::invalid("grad_check", format!("epsilon {epsilon} outside (0, 1e-2]")));
    }

    let eval = |p: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(p, &mut tape)?;
        tape.value(out).as_scalar()
    };

    // Analytic gradients at the base point.
    let mut tape = Tape::new();
    let out = f(params, &mut tape)?;
    let y0 = tape.value(out).as_scalar()?;
    tape.backward(out, &RealArray::scalar(1.0)?)?;
    let analytic = tape.gradient_map();

    // Two evaluations at the same point must agree bit for bit.
    let y1 = eval(params)?;
    if y0.to_bits() != y1.to_bits() {
        return Err(Error::invalid(
            "grad_check",
            format!("function is not deterministic: {y0} vs {y1} at the same parameters"),
        ));
    }

    let mut max_err = 0.0_f64;
    for name in params.names() {
        let count = params.get(name)?.len();
        // Forward passes register parameters under a namespace; find the
        // matching analytic entry by suffix.
        let analytic_arr = analytic
            .iter()
            .find(|(k, _)| k.as_str() == name || k.ends_with(&format!("/{name}")))
            .map(|(_, v)| v)
            .ok_or_else(|| Error::invalid("grad_check", format!("no gradient recorded for {name:?}")))?;
        for i in 0..count {
            let plus = eval(&params.perturbed(name, i, epsilon)?)?;
            let minus = eval(&params.perturbed(name, i, -epsilon)?)?;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic_arr.data()[i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-8 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_exact_up_to_roundoff() {
        let mut p = ParameterSet::new();
        p.insert("theta", RealArray::scalar(3.0).unwrap()).unwrap();
        let err = grad_check(
            |p, tape| {
                let th = p.get("theta")?.clone();
                let node = tape.param("theta", &th)?;
                tape.mul(node, node)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-8, "relative error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut p = ParameterSet::new();
        p.insert("theta", RealArray::scalar(0.4).unwrap()).unwrap();
        let err = grad_check(
            |p, tape| {
                let node = tape.param("theta", p.get("theta")?)?;
                let zero = tape.scale(node, 0.0)?;
                tape.sum(zero)
            },
            &p,
            1e-4,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn epsilon_domain_enforced() {
        let mut p = ParameterSet::new();
        p.insert("theta", RealArray::scalar(1.0).unwrap()).unwrap();
        let f = |p: &ParameterSet, tape: &mut Tape| {
            let node = tape.param("theta", p.get("theta")?)?;
            tape.mul(node, node)
        };
        assert!(grad_check(f, &p, 0.0).is_err());
        assert!(grad_check(f, &p, 0.5).is_err());
    }

    #[test]
    fn non_deterministic_function_rejected() {
        let mut p = ParameterSet::new();
        p.insert("theta", RealArray::scalar(1.0).unwrap()).unwrap();
        let calls = Cell::new(0.0_f64);
        let err = grad_check(
            |p, tape| {
                calls.set(calls.get() + 1.0);
                let node = tape.param("theta", p.get("theta")?)?;
                let drift = tape.constant(RealArray::scalar(calls.get()).unwrap());
                tape.mul(node, drift)
            },
            &p,
            1e-5,
        );
        assert!(err.is_err());
    }
}
