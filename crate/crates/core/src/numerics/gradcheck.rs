use super::{ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares tape gradients against central finite differences.
///
/// `build` must construct the scalar loss from the current parameter values
/// deterministically (use an eval-mode tape). Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::validation(format!("grad_check eps {eps} outside [1e-6, 1e-4]")));
    }
    let (tape, loss) = build(store)?;
    check_finite(tape.value(loss).item())?;
    let grads = tape.backward(loss)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    tape.accumulate_param_grads(&grads, &mut analytic);
    drop(tape);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).as_slice()[i];
            store.value_mut(id).as_mut_slice()[i] = orig + eps;
            let plus = eval(store, &build);
            store.value_mut(id).as_mut_slice()[i] = orig - eps;
            let minus = eval(store, &build);
            store.value_mut(id).as_mut_slice()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = analytic.get(id).grad.as_slice()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    Ok(report)
}

fn eval<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    let (tape, loss) = build(store)?;
    let v = tape.value(loss).item();
    check_finite(v)?;
    Ok(v)
}

fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("loss evaluated to {v}")))
    }
}
