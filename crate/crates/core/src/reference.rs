//! Ground-truth ODE integration.
//!
//! Dormand–Prince 5(4) with local extrapolation, FSAL, and a standard
//! mixed absolute/relative error norm. It integrates the probability-flow ODE
//! in λ, `dx/dλ = (d log α/dλ) x − σ_λ ε(x, λ)`, with nothing but model
//! evaluations, so it is an oracle independent of the exponential-integrator
//! machinery.

use crate::error::{Error, Result};
use crate::models::NoiseModel;
use crate::real::Real;
use crate::schedule::Schedule;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates from `lam_start` to `lam_end` with absolute and relative
/// tolerance `tol`.
pub fn reference_solve<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    sched: &Schedule<T>,
    x_start: &[T],
    lam_start: T,
    lam_end: T,
    tol: T,
) -> Result<Vec<T>> {
    reference_solve_with_stats(model, sched, x_start, lam_start, lam_end, tol).map(|(x, _)| x)
}

pub fn reference_solve_with_stats<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    sched: &Schedule<T>,
    x_start: &[T],
    lam_start: T,
    lam_end: T,
    tol: T,
) -> Result<(Vec<T>, SolveStats)> {
    if x_start.len() != model.dim() {
        return Err(Error::arg(format!(
            "dimension mismatch: got {}, expected {}",
            x_start.len(),
            model.dim()
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::arg("tolerance must be positive"));
    }
    if lam_end < lam_start {
        return Err(Error::arg("reference_solve integrates forward in λ only"));
    }
    let mut stats = SolveStats::default();
    let mut x = x_start.to_vec();
    if lam_end == lam_start {
        return Ok((x, stats));
    }

    let rhs = |lam: T, x: &[T], stats: &mut SolveStats| -> Result<Vec<T>> {
        stats.evaluations += 1;
        let eps = model.eps(sched, x, lam)?;
        let a = sched.dlog_alpha_at(lam);
        let s = sched.sigma_at(lam);
        Ok(x.iter().zip(&eps).map(|(&xi, &ei)| a * xi - s * ei).collect())
    };
    let err_norm = |x0: &[T], x1: &[T], err: &[T]| -> T {
        let sum: T = x0
            .iter()
            .zip(x1)
            .zip(err)
            .map(|((&a, &b), &e)| {
                let sc = tol + tol * a.abs().max(b.abs());
                (e / sc) * (e / sc)
            })
            .sum();
        (sum / T::from_count(x0.len())).sqrt()
    };

    let span = lam_end - lam_start;
    let mut lam = lam_start;
    let mut k1 = rhs(lam, &x, &mut stats)?;
    let mut h = initial_step(&x, &k1, span, tol);
    let d = x.len();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); d]; 7];
    let min_step = T::epsilon() * T::lit(16.0) * (T::one() + lam_start.abs().max(lam_end.abs()));
    let mut last_rejected = false;

    for _ in 0..MAX_STEPS {
        if lam_end - lam <= min_step {
            return Ok((x, stats));
        }
        let mut last = false;
        if lam + h >= lam_end || lam_end - (lam + h) < min_step {
            h = lam_end - lam;
            last = true;
        }
        if h < min_step {
            return Err(Error::Convergence(format!("step size underflow at λ = {lam}")));
        }

        k[0].clone_from(&k1);
        let mut stage = vec![T::zero(); d];
        for s in 1..7 {
            for (i, st) in stage.iter_mut().enumerate() {
                let mut acc = x[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc = acc + h * T::lit(a) * kj[i];
                    }
                }
                *st = acc;
            }
            k[s] = rhs(lam + T::lit(C[s]) * h, &stage, &mut stats)?;
        }
        // Row 6 of A holds the fifth-order weights, so `stage` is x_new.
        let x_new = stage;
        let err: Vec<T> = (0..d)
            .map(|i| h * (0..7).fold(T::zero(), |acc, s| acc + T::lit(E[s]) * k[s][i]))
            .collect();
        let en = err_norm(&x, &x_new, &err);
        if !en.is_finite() {
            stats.rejected += 1;
            h = h * T::lit(0.2);
            last_rejected = true;
            continue;
        }
        if en <= T::one() {
            stats.accepted += 1;
            lam = if last { lam_end } else { lam + h };
            x = x_new;
            k1 = k[6].clone();
            if last {
                return Ok((x, stats));
            }
            let mut fac = if en == T::zero() {
                T::lit(5.0)
            } else {
                (T::lit(0.9) * en.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2))
            };
            if last_rejected {
                fac = fac.min(T::one());
            }
            h = h * fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (T::lit(0.9) * en.powf(T::lit(-0.2))).max(T::lit(0.2));
            h = h * fac;
            last_rejected = true;
        }
    }
    Err(Error::Convergence(format!("exceeded {MAX_STEPS} steps")))
}

fn initial_step<T: Real>(x: &[T], f: &[T], span: T, tol: T) -> T {
    let sc = |v: T| tol + tol * v.abs();
    let d0 = x.iter().map(|&v| (v / sc(v)) * (v / sc(v))).sum::<T>().sqrt();
    let d1 = x.iter().zip(f).map(|(&v, &fv)| (fv / sc(v)) * (fv / sc(v))).sum::<T>().sqrt();
    let h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) {
        T::lit(1e-6)
    } else {
        T::lit(0.01) * d0 / d1
    };
    h.min(span).max(span * T::lit(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;
    use crate::real::vec;

    fn closed_form(sched: &Schedule<f64>, x0: &[f64], x_start: &[f64], ls: f64, lt: f64) -> Vec<f64> {
        let c: Vec<f64> = x_start
            .iter()
            .zip(x0)
            .map(|(&x, &m)| (x - sched.alpha_at(ls) * m) / sched.sigma_at(ls))
            .collect();
        x0.iter()
            .zip(&c)
            .map(|(&m, &ci)| sched.alpha_at(lt) * m + sched.sigma_at(lt) * ci)
            .collect()
    }

    #[test]
    fn point_gaussian_matches_closed_form() {
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::edm(), Schedule::vp_cosine_default()] {
            let x0 = vec![0.4, -1.2, 0.8];
            let m = ModelSpec::point_gaussian(x0.clone());
            let (ls, lt) = (-4.0, 4.0);
            let xs = vec![1.5, -0.3, 2.2];
            let tol = 1e-10;
            let got = reference_solve(&m, &sched, &xs, ls, lt, tol).unwrap();
            let want = closed_form(&sched, &x0, &xs, ls, lt);
            let err = vec::max_abs_diff(&got, &want);
            assert!(err <= 10.0 * tol * (1.0 + vec::norm_inf(&want)), "{} err {err}", sched.name());
        }
    }

    #[test]
    fn noise_coordinate_is_preserved() {
        let sched = Schedule::<f64>::vp_linear_default();
        let x0 = vec![0.7, -0.2];
        let m = ModelSpec::point_gaussian(x0.clone());
        let (ls, lt) = (-5.0, 2.0);
        let xs = vec![0.9, 1.1];
        let inv = |x: &[f64], lam: f64| -> Vec<f64> {
            x.iter().zip(&x0).map(|(&v, &c)| (v - sched.alpha_at(lam) * c) / sched.sigma_at(lam)).collect()
        };
        let xt = reference_solve(&m, &sched, &xs, ls, lt, 1e-10).unwrap();
        let drift = vec::max_abs_diff(&inv(&xs, ls), &inv(&xt, lt));
        assert!(drift <= 1e-9, "drift {drift}");
    }

    #[test]
    fn zero_length_is_identity() {
        let sched = Schedule::<f64>::edm();
        let m = ModelSpec::point_gaussian(vec![1.0]);
        let (x, stats) = reference_solve_with_stats(&m, &sched, &[3.0], 0.3, 0.3, 1e-10).unwrap();
        assert_eq!(x, vec![3.0]);
        assert_eq!(stats.evaluations, 0);
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let sched = Schedule::<f64>::vp_linear_default();
        let x0 = vec![2.0, -1.0];
        let m = ModelSpec::point_gaussian(x0.clone());
        let xs = vec![0.5, 0.5];
        let want = closed_form(&sched, &x0, &xs, -3.0, 6.0);
        let err = |tol: f64| vec::max_abs_diff(&reference_solve(&m, &sched, &xs, -3.0, 6.0, tol).unwrap(), &want);
        let e1 = err(1e-4);
        let e2 = err(1e-4 / 2.0);
        let e3 = err(1e-7);
        assert!(e2 < e1, "{e2} !< {e1}");
        assert!(e3 < e2);
    }

    #[test]
    fn backward_and_bad_tol_are_errors() {
        let sched = Schedule::<f64>::edm();
        let m = ModelSpec::point_gaussian(vec![1.0]);
        assert!(reference_solve(&m, &sched, &[0.0], 1.0, 0.0, 1e-8).is_err());
        assert!(reference_solve(&m, &sched, &[0.0], 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn underflow_reports_convergence_error() {
        // f32 cannot meet a 1e-30 tolerance.
        let sched = Schedule::<f32>::vp_linear_default();
        let m = ModelSpec::mixture(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![0.1, 0.1]).unwrap();
        let r = reference_solve(&m, &sched, &[0.3f32], -2.0, 2.0, 1e-30);
        assert!(matches!(r, Err(Error::Convergence(_))), "{r:?}");
    }

    #[test]
    fn mixture_forward_backward_consistency() {
        // The ODE flow is a bijection; two tight solves compose to the same
        // endpoint as one.
        let sched = Schedule::<f64>::vp_linear_default();
        let m = ModelSpec::mixture(vec![0.4, 0.6], vec![vec![1.0, 0.0], vec![-1.0, 0.5]], vec![0.3, 0.2]).unwrap();
        let xs = vec![0.8, -0.4];
        let direct = reference_solve(&m, &sched, &xs, -3.0, 3.0, 1e-11).unwrap();
        let mid = reference_solve(&m, &sched, &xs, -3.0, 0.5, 1e-11).unwrap();
        let split = reference_solve(&m, &sched, &mid, 0.5, 3.0, 1e-11).unwrap();
        assert!(vec::max_abs_diff(&direct, &split) < 1e-8);
    }
}
