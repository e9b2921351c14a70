use super::{NumError, Tape, Tensor, Var};

/// Max relative error between the tape gradient of a scalar function and
/// central finite differences, over every coordinate of `point`.
///
/// Relative error is `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, NumError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumError>,
{
    grad_check_inputs(|tape, vars| f(tape, vars[0]), std::slice::from_ref(point), eps, None)
}

/// Multi-input form of [`grad_check`]. `coords`, when given, restricts the
/// check to `(input index, flat entry index)` pairs.
pub fn grad_check_inputs<F>(
    f: F,
    points: &[Tensor],
    eps: f64,
    coords: Option<&[(usize, usize)]>,
) -> Result<f64, NumError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumError>,
{
    if eps.is_nan() || eps <= 0.0 || !eps.is_finite() {
        return Err(NumError::Domain {
            op: "grad_check",
            detail: format!("step size {eps} must be positive"),
        });
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(NumError::NonScalar(tape.value(out).shape()));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(points)
        .map(|(v, p)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();

    let eval = |input: usize, entry: usize, delta: f64| -> Result<f64, NumError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut p = p.clone();
                if i == input {
                    p.data_mut()[entry] += delta;
                }
                tape.leaf(p, false)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = points
                .iter()
                .enumerate()
                .flat_map(|(i, p)| (0..p.len()).map(move |e| (i, e)))
                .collect();
            &all
        }
    };

    let mut worst = 0.0f64;
    for &(input, entry) in coords {
        let numeric = (eval(input, entry, eps)? - eval(input, entry, -eps)?) / (2.0 * eps);
        let a = analytic[input].data()[entry];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
