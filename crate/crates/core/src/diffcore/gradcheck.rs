//! Central-difference gradient oracle.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default perturbation for [`finite_diff_check`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// One coordinate to probe: element `index` of input `input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FdCoord {
    pub input: usize,
    pub index: usize,
}

fn eval<F>(f: &mut F, inputs: &[Tensor<f64>]) -> Result<(f64, u64)>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_branch_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape.value(out).item()?, tape.branch_signature().unwrap_or(0)))
}

/// Outcome of a kink-aware finite-difference check.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Worst relative error over the coordinates whose ±eps stencil stays
    /// on one smooth piece of the function.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose stencil crosses a kink (a ReLU side, |x| sign,
    /// argmax winner or clamp changes); finite differences do not estimate
    /// a derivative there, so they are excluded.
    pub straddled: Vec<FdCoord>,
}

/// Maximum relative error `|analytic − numeric| / max(|numeric|, 1e-8)`
/// over every coordinate of every input.
///
/// `f` must build a scalar on the given tape from the given input handles,
/// and must be deterministic: it is evaluated twice at the base point and a
/// differing result is reported as a contract violation.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let coords: Vec<FdCoord> = inputs
        .iter()
        .enumerate()
        .flat_map(|(input, t)| (0..t.numel()).map(move |index| FdCoord { input, index }))
        .collect();
    finite_diff_check_coords(f, inputs, &coords, eps)
}

/// As [`finite_diff_check`], restricted to the listed coordinates.
/// Every coordinate counts, kinks included.
pub fn finite_diff_check_coords<F>(f: F, inputs: &[Tensor<f64>], coords: &[FdCoord], eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    run(f, inputs, coords, eps, false).map(|r| r.max_rel_err)
}

/// As [`finite_diff_check_coords`], but coordinates whose stencil crosses a
/// kink are reported instead of scored.
pub fn finite_diff_report<F>(f: F, inputs: &[Tensor<f64>], coords: &[FdCoord], eps: f64) -> Result<FdReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    run(f, inputs, coords, eps, true)
}

fn run<F>(mut f: F, inputs: &[Tensor<f64>], coords: &[FdCoord], eps: f64, skip_kinks: bool) -> Result<FdReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference eps must be positive, got {eps}"
        )));
    }
    for c in coords {
        if c.input >= inputs.len() || c.index >= inputs[c.input].numel() {
            return Err(Error::Contract(format!("coordinate {c:?} out of range")));
        }
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.detached().with_grad())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).item()?;
    tape.backward(out)?;
    let (again, base_sig) = eval(&mut f, inputs)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::Contract(format!(
            "function is not deterministic: {base} then {again} at the same point"
        )));
    }
    let mut report = FdReport {
        max_rel_err: 0.0,
        checked: 0,
        straddled: Vec::new(),
    };
    let mut probe: Vec<Tensor<f64>> = inputs.iter().map(Tensor::detached).collect();
    for c in coords {
        let analytic = tape.grad(vars[c.input]).map_or(0.0, |g| g[c.index]);
        let x0 = inputs[c.input].data()[c.index];
        probe[c.input].data_mut()[c.index] = x0 + eps;
        let (fp, sp) = eval(&mut f, &probe)?;
        probe[c.input].data_mut()[c.index] = x0 - eps;
        let (fm, sm) = eval(&mut f, &probe)?;
        probe[c.input].data_mut()[c.index] = x0;
        if skip_kinks && (sp != base_sig || sm != base_sig) {
            report.straddled.push(*c);
            continue;
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let err = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite gradient at {c:?}")));
        }
        report.max_rel_err = report.max_rel_err.max(err);
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::ConvSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::cell::Cell;

    #[test]
    fn square_sum() {
        let x = Tensor::from_f64(vec![3], &[1.0, 2.0, 3.0]).unwrap();
        let err = finite_diff_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            std::slice::from_ref(&x),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
        // analytic gradient itself
        let mut t = Tape::new();
        let v = t.leaf(x.with_grad());
        let sq = t.mul(v, v).unwrap();
        let s = t.sum(sq).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(v).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn kinks_are_reported_not_scored() {
        // relu at 0.5e-5 lies inside the stencil; at 0.5 it does not.
        let x = Tensor::from_f64(vec![2], &[0.5e-5, 0.5]).unwrap();
        let coords = [FdCoord { input: 0, index: 0 }, FdCoord { input: 0, index: 1 }];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let r = t.relu(v[0])?;
            t.sum(r)
        };
        let plain = finite_diff_check_coords(f, std::slice::from_ref(&x), &coords, DEFAULT_EPS).unwrap();
        assert!(plain > 0.1, "{plain}");
        let r = finite_diff_report(f, &[x], &coords, DEFAULT_EPS).unwrap();
        assert_eq!(r.straddled, vec![coords[0]]);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_err < 1e-9);
    }

    #[test]
    fn constant_function() {
        let x = Tensor::from_f64(vec![2], &[1.0, 2.0]).unwrap();
        let err = finite_diff_check(|t, _| Ok(t.constant(Tensor::scalar(3.0))), &[x], DEFAULT_EPS).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn conv_sigmoid_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = |shape: Vec<usize>| {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let inputs = [r(vec![1, 2, 6, 6]), r(vec![3, 2, 3, 3]), r(vec![3])];
        let err = finite_diff_check(
            |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), ConvSpec::new(1, 1))?;
                let s = t.sigmoid(y)?;
                t.sum(s)
            },
            &inputs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn detects_non_determinism() {
        let calls = Cell::new(0.0);
        let x = Tensor::from_f64(vec![1], &[1.0]).unwrap();
        let res = finite_diff_check(
            |t, v| {
                calls.set(calls.get() + 1.0);
                let k = calls.get();
                let y = t.mul_scalar(v[0], k)?;
                t.sum(y)
            },
            &[x],
            DEFAULT_EPS,
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_bad_eps() {
        let x = Tensor::from_f64(vec![1], &[1.0]).unwrap();
        assert!(finite_diff_check(|t, v| t.sum(v[0]), &[x], 0.0).is_err());
    }
}
