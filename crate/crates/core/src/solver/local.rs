//! One exponential-integrator step and the DDIM closed form.

use crate::error::Result;
use crate::integrals::{IntegralTable, Node};
use crate::real::Real;
use crate::schedule::Schedule;

use super::derivatives::{estimate_derivatives, estimate_derivatives_pseudo};

/// `ĝ` at `node`, relative to `anchor`.
pub fn g_value<T: Real>(tab: &IntegralTable<T>, anchor: Node<T>, node: Node<T>, x: &[T], eps: &[T]) -> Vec<T> {
    tab.g_coefficients(anchor, node).apply(x, eps)
}

/// `(n+1)`-th order local update from `anchor` to `target` using `extras`,
/// `n` pairs `(node, ĝ)` ordered nearest first.
pub fn lupdate<T: Real>(
    tab: &IntegralTable<T>,
    anchor: Node<T>,
    x_s: &[T],
    g_s: &[T],
    extras: &[(Node<T>, Vec<T>)],
    target: Node<T>,
    pseudo: bool,
) -> Result<Vec<T>> {
    if target.lam == anchor.lam {
        return Ok(x_s.to_vec());
    }
    let sched = &tab.ems.schedule;
    let deltas: Vec<T> = extras.iter().map(|(nd, _)| nd.lam - anchor.lam).collect();
    let derivs = if pseudo {
        let vals: Vec<Vec<T>> = std::iter::once(g_s.to_vec()).chain(extras.iter().map(|(_, g)| g.clone())).collect();
        estimate_derivatives_pseudo(&deltas, &vals)?
    } else {
        let diffs: Vec<Vec<T>> = extras
            .iter()
            .map(|(_, g)| g.iter().zip(g_s).map(|(&a, &b)| a - b).collect())
            .collect();
        estimate_derivatives(&deltas, &diffs)?
    };

    let a = tab.coeff_a(anchor, target)?;
    let int_eb = tab.coeff_int_eb(anchor, target)?;
    let e0 = tab.coeff_e0(anchor, target)?;
    let alpha_s = sched.alpha_at(anchor.lam);
    let alpha_t = sched.alpha_at(target.lam);
    let d = x_s.len();
    let mut inner: Vec<T> = (0..d).map(|i| x_s[i] / alpha_s - int_eb[i] - g_s[i] * e0[i]).collect();
    let mut fact = T::one();
    for (k, u) in derivs.iter().enumerate() {
        let k = k + 1;
        fact = fact * T::from_count(k);
        let ek = tab.coeff_ek(anchor, target, k)?;
        // ĝ^(k) = k! · u_k
        for i in 0..d {
            inner[i] = inner[i] - fact * u[i] * ek[i];
        }
    }
    Ok((0..d).map(|i| alpha_t * a[i] * inner[i]).collect())
}

/// `x_t = (α_t/α_s) x_s − α_t (σ_s/α_s − σ_t/α_t) ε_s`.
pub fn ddim_step<T: Real>(sched: &Schedule<T>, x_s: &[T], eps_s: &[T], t_s: T, t_t: T) -> Result<Vec<T>> {
    if t_s == t_t {
        return Ok(x_s.to_vec());
    }
    let (a_s, s_s) = (sched.alpha(t_s)?, sched.sigma(t_s)?);
    let (a_t, s_t) = (sched.alpha(t_t)?, sched.sigma(t_t)?);
    Ok(ddim_coeffs_apply(x_s, eps_s, a_s, s_s, a_t, s_t))
}

/// DDIM in λ.
pub fn ddim_step_lambda<T: Real>(sched: &Schedule<T>, x_s: &[T], eps_s: &[T], lam_s: T, lam_t: T) -> Vec<T> {
    if lam_s == lam_t {
        return x_s.to_vec();
    }
    let (a_s, s_s) = (sched.alpha_at(lam_s), sched.sigma_at(lam_s));
    let (a_t, s_t) = (sched.alpha_at(lam_t), sched.sigma_at(lam_t));
    ddim_coeffs_apply(x_s, eps_s, a_s, s_s, a_t, s_t)
}

fn ddim_coeffs_apply<T: Real>(x_s: &[T], eps_s: &[T], a_s: T, s_s: T, a_t: T, s_t: T) -> Vec<T> {
    let r = a_t / a_s;
    let c = a_t * (s_s / a_s - s_t / a_t);
    x_s.iter().zip(eps_s).map(|(&x, &e)| r * x - c * e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::{degenerate_table, DegenerateKind};
    use crate::integrals::Quadrature;
    use crate::models::{ModelSpec, NoiseModel};
    use crate::real::vec;

    #[test]
    fn ddim_identities() {
        let sched = Schedule::<f64>::vp_linear_default();
        let x = [0.3, -0.2];
        let e = [1.0, 2.0];
        assert_eq!(ddim_step(&sched, &x, &e, 0.5, 0.5).unwrap(), x.to_vec());
        let edm = Schedule::<f64>::edm();
        assert_eq!(ddim_step_lambda(&edm, &x, &e, 0.1, 0.1), x.to_vec());
    }

    #[test]
    fn ddim_exact_on_point_gaussian() {
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::edm()] {
            let x0 = vec![0.5, -1.5];
            let m = ModelSpec::point_gaussian(x0.clone());
            let (ts, tt) = if sched.is_vp() { (0.8, 0.1) } else { (40.0, 0.5) };
            let c = [0.7, 0.2];
            let xs: Vec<f64> = (0..2).map(|i| sched.alpha(ts).unwrap() * x0[i] + sched.sigma(ts).unwrap() * c[i]).collect();
            let lam_s = sched.lambda_of_t(ts).unwrap();
            let eps = m.eps(&sched, &xs, lam_s).unwrap();
            let xt = ddim_step(&sched, &xs, &eps, ts, tt).unwrap();
            let want: Vec<f64> = (0..2).map(|i| sched.alpha(tt).unwrap() * x0[i] + sched.sigma(tt).unwrap() * c[i]).collect();
            assert!(vec::max_abs_diff(&xt, &want) < 1e-12);
        }
    }

    #[test]
    fn first_order_noise_pred_is_ddim() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::NoisePred, &sched, 10, (-5.0, 5.0), 2).unwrap();
        let tab = IntegralTable::with_quadrature(ems, Quadrature::Exact).unwrap();
        let (s, t) = (tab.locate(-1.234).unwrap(), tab.locate(0.777).unwrap());
        let x = [0.4, -0.9];
        let eps = [1.2, 0.1];
        let g = g_value(&tab, s, s, &x, &eps);
        let got = lupdate(&tab, s, &x, &g, &[], t, false).unwrap();
        let want = ddim_step_lambda(&sched, &x, &eps, s.lam, t.lam);
        for i in 0..2 {
            assert!((got[i] - want[i]).abs() <= 1e-10 * want[i].abs().max(1e-300));
        }
    }

    #[test]
    fn zero_length_step() {
        let sched = Schedule::<f64>::edm();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 10, (-4.0, 6.0), 1).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let s = tab.node(3);
        assert_eq!(lupdate(&tab, s, &[2.0], &[0.5], &[], s, false).unwrap(), vec![2.0]);
    }
}
