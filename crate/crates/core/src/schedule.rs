//! Noise schedules, the time ↔ logSNR change of variables, and sampling grids.
//!
//! Every schedule is described by `α(t)` and `σ(t)` with `λ(t) = log(α/σ)`.
//! Variance-preserving schedules satisfy `α² + σ² = 1`, which makes `α` and
//! `σ` closed-form functions of `λ` alone (`α² = sigmoid(2λ)`); the `*_at`
//! methods use that parameterization and are valid for every finite `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
#[serde(bound = "T: Real")]
pub enum ScheduleKind<T: Real = f64> {
    VpLinear { beta0: T, beta1: T },
    /// Experimental.
    VpCosine { offset: T },
    Edm {},
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Schedule<T: Real = f64> {
    #[serde(flatten)]
    pub kind: ScheduleKind<T>,
    pub t_domain: [T; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    UniformLambda,
    UniformT,
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-lambda" => Ok(GridKind::UniformLambda),
            "uniform-t" => Ok(GridKind::UniformT),
            other => Err(Error::arg(format!("unknown grid kind '{other}'"))),
        }
    }
}

/// Sampling timesteps from `t_0 = t_start` down to `t_M = t_end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TimeGrid<T: Real = f64> {
    pub timesteps: Vec<T>,
    /// Strictly increasing.
    pub lambdas: Vec<T>,
    pub kind: GridKind,
}

impl<T: Real> TimeGrid<T> {
    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.timesteps.len() - 1
    }

    /// Largest logSNR increment.
    pub fn h_max(&self) -> T {
        self.lambdas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), T::max)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<T: Real> Schedule<T> {
    pub fn vp_linear(beta0: T, beta1: T) -> Self {
        Self {
            kind: ScheduleKind::VpLinear { beta0, beta1 },
            t_domain: [T::zero(), T::one()],
        }
    }

    /// `β0 = 0.1`, `β1 = 20` on `t ∈ [0, 1]`.
    pub fn vp_linear_default() -> Self {
        Self::vp_linear(T::lit(0.1), T::lit(20.0))
    }

    pub fn vp_cosine(offset: T) -> Self {
        Self {
            kind: ScheduleKind::VpCosine { offset },
            t_domain: [T::zero(), T::lit(0.9946)],
        }
    }

    pub fn vp_cosine_default() -> Self {
        Self::vp_cosine(T::lit(0.008))
    }

    /// `α = 1`, `σ = t` on `t ∈ [0.002, 80]`.
    pub fn edm() -> Self {
        Self {
            kind: ScheduleKind::Edm {},
            t_domain: [T::lit(0.002), T::lit(80.0)],
        }
    }

    pub fn with_domain(mut self, t_min: T, t_max: T) -> Result<Self> {
        if !(t_min < t_max) || t_min < T::zero() {
            return Err(Error::arg("schedule domain must satisfy 0 <= t_min < t_max"));
        }
        self.t_domain = [t_min, t_max];
        Ok(self)
    }

    pub fn t_min(&self) -> T {
        self.t_domain[0]
    }

    pub fn t_max(&self) -> T {
        self.t_domain[1]
    }

    pub fn is_vp(&self) -> bool {
        !matches!(self.kind, ScheduleKind::Edm {})
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScheduleKind::VpLinear { .. } => "vp-linear",
            ScheduleKind::VpCosine { .. } => "vp-cosine",
            ScheduleKind::Edm {} => "edm",
        }
    }

    fn check_t(&self, t: T) -> Result<()> {
        let slack = T::lit(1e-12) * T::one().max(self.t_max().abs());
        if t.is_nan() || t < self.t_min() - slack || t > self.t_max() + slack {
            return Err(Error::Domain {
                what: "t",
                value: t.as_f64(),
                lo: self.t_min().as_f64(),
                hi: self.t_max().as_f64(),
            });
        }
        Ok(())
    }

    /// `(λ(t_max), λ(t_min))`; the upper end is `+∞` when `σ(t_min) = 0`.
    pub fn lambda_range(&self) -> (T, T) {
        let lo = self.raw_lambda(self.t_max());
        let hi = self.raw_lambda(self.t_min());
        (lo, hi)
    }

    fn check_lambda(&self, lam: T) -> Result<()> {
        let (lo, hi) = self.lambda_range();
        let slack = T::lit(1e-9) * T::one().max(lam.abs());
        if lam.is_nan() || lam < lo - slack || lam > hi + slack {
            return Err(Error::Domain {
                what: "lambda",
                value: lam.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        Ok(())
    }

    fn raw_log_alpha(&self, t: T) -> T {
        let two = T::lit(2.0);
        match self.kind {
            ScheduleKind::VpLinear { beta0, beta1 } => {
                -T::lit(0.25) * t * t * (beta1 - beta0) - T::lit(0.5) * t * beta0
            }
            ScheduleKind::VpCosine { offset } => {
                let half_pi = T::PI() / two;
                (half_pi * (t + offset) / (T::one() + offset)).cos().ln()
                    - (half_pi * offset / (T::one() + offset)).cos().ln()
            }
            ScheduleKind::Edm {} => T::zero(),
        }
    }

    fn raw_log_sigma(&self, t: T) -> T {
        match self.kind {
            ScheduleKind::Edm {} => t.ln(),
            _ => T::lit(0.5) * (-(T::lit(2.0) * self.raw_log_alpha(t)).exp_m1()).ln(),
        }
    }

    fn raw_lambda(&self, t: T) -> T {
        self.raw_log_alpha(t) - self.raw_log_sigma(t)
    }

    pub fn alpha(&self, t: T) -> Result<T> {
        self.check_t(t)?;
        Ok(self.raw_log_alpha(t).exp())
    }

    pub fn sigma(&self, t: T) -> Result<T> {
        self.check_t(t)?;
        Ok(match self.kind {
            ScheduleKind::Edm {} => t,
            _ => (-(T::lit(2.0) * self.raw_log_alpha(t)).exp_m1()).sqrt(),
        })
    }

    /// `log α(t) − log σ(t)`.
    pub fn lambda_of_t(&self, t: T) -> Result<T> {
        self.check_t(t)?;
        if self.sigma(t)? <= T::zero() {
            return Err(Error::Domain {
                what: "t (sigma = 0)",
                value: t.as_f64(),
                lo: self.t_min().as_f64(),
                hi: self.t_max().as_f64(),
            });
        }
        Ok(self.raw_lambda(t))
    }

    /// Inverse of [`Self::lambda_of_t`], in closed form for every built-in kind.
    pub fn t_of_lambda(&self, lam: T) -> Result<T> {
        self.check_lambda(lam)?;
        let t = match self.kind {
            ScheduleKind::Edm {} => (-lam).exp(),
            ScheduleKind::VpLinear { beta0, beta1 } => {
                let neg_log_alpha = -self.log_alpha_at(lam);
                let b = T::lit(0.5) * beta0;
                let disc = b * b + (beta1 - beta0) * neg_log_alpha;
                T::lit(2.0) * neg_log_alpha / (b + disc.sqrt())
            }
            ScheduleKind::VpCosine { offset } => {
                let half_pi = T::PI() / T::lit(2.0);
                let log_cos0 = (half_pi * offset / (T::one() + offset)).cos().ln();
                let c = (self.log_alpha_at(lam) + log_cos0).exp();
                c.acos() / half_pi * (T::one() + offset) - offset
            }
        };
        Ok(t.max(self.t_min()).min(self.t_max()))
    }

    /// Bisection inverse of `λ(t)`, accurate to `1e-12` in `λ` (or the
    /// resolution of `T`). Works for any monotone schedule; the closed forms
    /// in [`Self::t_of_lambda`] are checked against it.
    pub fn t_of_lambda_bisect(&self, lam: T) -> Result<T> {
        self.check_lambda(lam)?;
        let mut lo = self.t_min();
        let mut hi = self.t_max();
        if self.raw_lambda(lo).is_infinite() {
            // σ(t_min) = 0: shift the bracket just inside the domain.
            let mut step = (hi - lo) * T::lit(1e-3);
            while self.raw_lambda(lo + step) < lam && step > T::min_positive_value() {
                step = step * T::lit(1e-3);
            }
            lo = lo + step;
            if self.raw_lambda(lo) < lam {
                return Ok(lo);
            }
        }
        let tol = T::lit(1e-12);
        for _ in 0..400 {
            let mid = T::lit(0.5) * (lo + hi);
            let lm = self.raw_lambda(mid);
            if (lm - lam).abs() <= tol || mid == lo || mid == hi {
                return Ok(mid);
            }
            // λ is decreasing in t.
            if lm > lam {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(T::lit(0.5) * (lo + hi))
    }

    /// `log α` as a function of `λ`; defined for every finite `λ`.
    pub fn log_alpha_at(&self, lam: T) -> T {
        match self.kind {
            ScheduleKind::Edm {} => T::zero(),
            _ => -T::lit(0.5) * softplus(-T::lit(2.0) * lam),
        }
    }

    pub fn alpha_at(&self, lam: T) -> T {
        self.log_alpha_at(lam).exp()
    }

    pub fn log_sigma_at(&self, lam: T) -> T {
        self.log_alpha_at(lam) - lam
    }

    pub fn sigma_at(&self, lam: T) -> T {
        self.log_sigma_at(lam).exp()
    }

    /// `d log α / dλ` without a domain check: `σ²` for VP kinds, `0` for edm.
    pub fn dlog_alpha_at(&self, lam: T) -> T {
        match self.kind {
            ScheduleKind::Edm {} => T::zero(),
            _ => (-softplus(T::lit(2.0) * lam)).exp(),
        }
    }

    pub fn dlog_alpha_dlambda(&self, lam: T) -> Result<T> {
        self.check_lambda(lam)?;
        Ok(self.dlog_alpha_at(lam))
    }

    /// Drift `f(t) = d log α / dt`.
    pub fn drift_f(&self, t: T) -> Result<T> {
        self.check_t(t)?;
        let half = T::lit(0.5);
        Ok(match self.kind {
            ScheduleKind::VpLinear { beta0, beta1 } => -half * (beta0 + t * (beta1 - beta0)),
            ScheduleKind::VpCosine { offset } => {
                let half_pi = T::PI() / T::lit(2.0);
                let k = half_pi / (T::one() + offset);
                -k * (k * (t + offset)).tan()
            }
            ScheduleKind::Edm {} => T::zero(),
        })
    }

    /// Squared diffusion `g²(t) = dσ²/dt − 2 f(t) σ²`.
    pub fn diffusion_g2(&self, t: T) -> Result<T> {
        let f = self.drift_f(t)?;
        Ok(match self.kind {
            // σ² = 1 − α² ⇒ dσ²/dt = −2fα², so g² = −2f.
            ScheduleKind::VpLinear { .. } | ScheduleKind::VpCosine { .. } => -T::lit(2.0) * f,
            ScheduleKind::Edm {} => T::lit(2.0) * t,
        })
    }

    pub fn make_time_grid(&self, steps: usize, kind: GridKind, t_start: T, t_end: T) -> Result<TimeGrid<T>> {
        if steps == 0 {
            return Err(Error::arg("time grid needs at least one step"));
        }
        if !(t_start > t_end) {
            return Err(Error::arg("time grid needs t_start > t_end"));
        }
        let lam_start = self.lambda_of_t(t_start)?;
        let lam_end = self.lambda_of_t(t_end)?;
        let m = T::from_count(steps);
        let (mut timesteps, mut lambdas) = (Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1));
        match kind {
            GridKind::UniformLambda => {
                let dl = (lam_end - lam_start) / m;
                for i in 0..=steps {
                    let lam = lam_start + T::from_count(i) * dl;
                    lambdas.push(lam);
                    timesteps.push(self.t_of_lambda(lam)?);
                }
                lambdas[steps] = lam_end;
            }
            GridKind::UniformT => {
                let dt = (t_end - t_start) / m;
                for i in 0..=steps {
                    let t = t_start + T::from_count(i) * dt;
                    timesteps.push(t);
                }
                timesteps[steps] = t_end;
                for &t in &timesteps {
                    lambdas.push(self.lambda_of_t(t)?);
                }
            }
        }
        timesteps[0] = t_start;
        timesteps[steps] = t_end;
        lambdas[0] = lam_start;
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("time grid is not strictly increasing in logSNR"));
        }
        Ok(TimeGrid {
            timesteps,
            lambdas,
            kind,
        })
    }

    /// A grid given directly by increasing logSNR values.
    pub fn grid_from_lambdas(&self, lambdas: Vec<T>) -> Result<TimeGrid<T>> {
        if lambdas.len() < 2 || lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("logSNR values must be strictly increasing with at least two entries"));
        }
        let timesteps = lambdas
            .iter()
            .map(|&l| self.t_of_lambda(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeGrid {
            timesteps,
            lambdas,
            kind: GridKind::UniformLambda,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn alpha_examples() {
        let edm = Schedule::<f64>::edm();
        assert_eq!(edm.alpha(80.0).unwrap(), 1.0);
        let vp = Schedule::<f64>::vp_linear_default();
        assert_eq!(vp.alpha(0.0).unwrap(), 1.0);
        // −¼·19.9 − 0.05 = −5.025
        let a1 = vp.alpha(1.0).unwrap();
        assert!(close(a1, (-5.025f64).exp(), 1e-15));
        assert!(close(a1, 6.56e-3, 2e-5));
    }

    #[test]
    fn sigma_examples() {
        let edm = Schedule::<f64>::edm();
        assert_eq!(edm.sigma(0.002).unwrap(), 0.002);
        let vp = Schedule::<f64>::vp_linear_default();
        assert_eq!(vp.sigma(0.0).unwrap(), 0.0);
        let a = (-5.025f64).exp();
        assert!(close(vp.sigma(1.0).unwrap(), (1.0 - a * a).sqrt(), 1e-15));
        assert!(close(vp.sigma(1.0).unwrap(), 0.99998, 1e-5));
    }

    #[test]
    fn out_of_domain_is_error() {
        let vp = Schedule::<f64>::vp_linear_default();
        assert!(matches!(vp.alpha(1.5), Err(Error::Domain { .. })));
        assert!(matches!(vp.sigma(-0.1), Err(Error::Domain { .. })));
        let edm = Schedule::<f64>::edm();
        assert!(edm.alpha(0.001).is_err());
        assert!(edm.t_of_lambda(10.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        let edm = Schedule::<f64>::edm();
        assert!(close(edm.lambda_of_t(1.0).unwrap(), 0.0, 1e-15));
        assert!(close(edm.lambda_of_t(80.0).unwrap(), -80f64.ln(), 1e-12));
        assert!(close(edm.lambda_of_t(80.0).unwrap(), -4.3820, 1e-4));
        let vp = Schedule::<f64>::vp_linear_default();
        assert!(matches!(vp.lambda_of_t(0.0), Err(Error::Domain { .. })));
        // symmetry point α = σ
        let t_half = vp.t_of_lambda(0.0).unwrap();
        assert!(close(vp.alpha(t_half).unwrap(), vp.sigma(t_half).unwrap(), 1e-12));
        assert!(close(vp.lambda_of_t(t_half).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn t_of_lambda_examples() {
        let edm = Schedule::<f64>::edm();
        assert!(close(edm.t_of_lambda(0.0).unwrap(), 1.0, 1e-15));
        assert!(close(edm.t_of_lambda(-4.3820).unwrap(), 4.3820f64.exp(), 1e-9));
        assert!(close(edm.t_of_lambda(-4.3820).unwrap(), 80.0, 1e-2));
        let vp = Schedule::<f64>::vp_linear_default();
        let lam = vp.lambda_of_t(0.5).unwrap();
        assert!(close(vp.t_of_lambda(lam).unwrap(), 0.5, 1e-9));
    }

    #[test]
    fn round_trip_random_times() {
        let mut rng = SeededRng::new(42);
        for sched in [
            Schedule::<f64>::vp_linear_default(),
            Schedule::vp_cosine_default(),
            Schedule::edm(),
        ] {
            let (lo, hi) = (sched.t_min().max(1e-4), sched.t_max());
            for _ in 0..1000 {
                let t = lo + (hi - lo) * rng.uniform();
                let back = sched.t_of_lambda(sched.lambda_of_t(t).unwrap()).unwrap();
                assert!(((back - t) / t).abs() < 1e-9, "{} t={t} back={back}", sched.name());
            }
        }
    }

    #[test]
    fn closed_form_inverse_matches_bisection() {
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::vp_cosine_default(), Schedule::edm()] {
            for &t in &[0.01, 0.1, 0.3, 0.7, 0.95] {
                let t = sched.t_min().max(t * sched.t_max());
                let lam = sched.lambda_of_t(t).unwrap();
                let a = sched.t_of_lambda(lam).unwrap();
                let b = sched.t_of_lambda_bisect(lam).unwrap();
                let la = sched.lambda_of_t(a).unwrap();
                let lb = sched.lambda_of_t(b).unwrap();
                assert!((la - lam).abs() < 1e-9, "{}", sched.name());
                assert!((lb - lam).abs() < 1e-9, "{}", sched.name());
                assert!(((a - b) / a).abs() < 1e-8, "{} {a} {b}", sched.name());
            }
        }
    }

    #[test]
    fn variance_preserving_identity() {
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::vp_cosine_default()] {
            let grid = sched
                .make_time_grid(50, GridKind::UniformT, sched.t_max(), 1e-3)
                .unwrap();
            for &t in &grid.timesteps {
                let a = sched.alpha(t).unwrap();
                let s = sched.sigma(t).unwrap();
                assert!((a * a + s * s - 1.0).abs() < 1e-12);
            }
            for &l in &grid.lambdas {
                let a = sched.alpha_at(l);
                let s = sched.sigma_at(l);
                assert!((a * a + s * s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_parameterization_matches_time_parameterization() {
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::vp_cosine_default(), Schedule::edm()] {
            for &frac in &[0.01, 0.2, 0.5, 0.9, 1.0] {
                let t = sched.t_min().max(frac * sched.t_max());
                let lam = sched.lambda_of_t(t).unwrap();
                assert!((sched.alpha_at(lam) - sched.alpha(t).unwrap()).abs() < 1e-12);
                let s = sched.sigma(t).unwrap();
                assert!(((sched.sigma_at(lam) - s) / s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dlog_alpha_examples() {
        let edm = Schedule::<f64>::edm();
        assert_eq!(edm.dlog_alpha_dlambda(-2.0).unwrap(), 0.0);
        let vp = Schedule::<f64>::vp_linear_default();
        assert!(close(vp.dlog_alpha_dlambda(0.0).unwrap(), 0.5, 1e-15));
        let lam = vp.lambda_of_t(0.3).unwrap();
        let s = vp.sigma(0.3).unwrap();
        assert!(close(vp.dlog_alpha_dlambda(lam).unwrap(), s * s, 1e-12));
    }

    #[test]
    fn dlog_alpha_matches_finite_difference() {
        let h = 1e-4;
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::vp_cosine_default(), Schedule::edm()] {
            let (lo, hi) = sched.lambda_range();
            let hi = hi.min(8.0);
            for i in 1..40 {
                let lam = lo + (hi - lo) * i as f64 / 40.0;
                let fd = (sched.log_alpha_at(lam + h) - sched.log_alpha_at(lam - h)) / (2.0 * h);
                assert!((fd - sched.dlog_alpha_dlambda(lam).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn drift_and_diffusion_match_finite_difference() {
        let h = 1e-6;
        for sched in [Schedule::<f64>::vp_linear_default(), Schedule::vp_cosine_default(), Schedule::edm()] {
            for &frac in &[0.1, 0.4, 0.8] {
                let t = sched.t_min().max(frac * sched.t_max());
                let la = |t: f64| sched.alpha(t).unwrap().ln();
                let s2 = |t: f64| sched.sigma(t).unwrap().powi(2);
                let f_fd = (la(t + h) - la(t - h)) / (2.0 * h);
                let f = sched.drift_f(t).unwrap();
                assert!((f - f_fd).abs() < 1e-5 * (1.0 + f.abs()), "{}", sched.name());
                let g2_fd = (s2(t + h) - s2(t - h)) / (2.0 * h) - 2.0 * f * s2(t);
                let g2 = sched.diffusion_g2(t).unwrap();
                assert!((g2 - g2_fd).abs() < 1e-5 * (1.0 + g2.abs()), "{}", sched.name());
            }
        }
    }

    #[test]
    fn grid_examples() {
        let edm = Schedule::<f64>::edm();
        let g1 = edm.make_time_grid(1, GridKind::UniformLambda, 80.0, 0.002).unwrap();
        assert_eq!(g1.timesteps, vec![80.0, 0.002]);
        let g2 = edm.make_time_grid(2, GridKind::UniformLambda, 80.0, 0.002).unwrap();
        assert!(close(g2.timesteps[1], 0.4, 1e-12));
        let vp = Schedule::<f64>::vp_linear_default();
        let gt = vp.make_time_grid(4, GridKind::UniformT, 1.0, 0.2).unwrap();
        let expect = [1.0, 0.8, 0.6, 0.4, 0.2];
        for (a, b) in gt.timesteps.iter().zip(expect) {
            assert!(close(*a, b, 1e-15));
        }
        assert_eq!(gt.timesteps[4], 0.2);
    }

    #[test]
    fn grid_errors() {
        let vp = Schedule::<f64>::vp_linear_default();
        assert!(vp.make_time_grid(0, GridKind::UniformT, 1.0, 0.1).is_err());
        assert!(vp.make_time_grid(4, GridKind::UniformT, 0.1, 1.0).is_err());
        assert!(vp.make_time_grid(4, GridKind::UniformT, 2.0, 0.1).is_err());
    }

    #[test]
    fn uniform_lambda_spacing() {
        let vp = Schedule::<f64>::vp_linear_default();
        let g = vp.make_time_grid(37, GridKind::UniformLambda, 1.0, 1e-3).unwrap();
        let d0 = g.lambdas[1] - g.lambdas[0];
        for w in g.lambdas.windows(2) {
            assert!((w[1] - w[0] - d0).abs() < 1e-12);
        }
        assert_eq!(g.timesteps[0], 1.0);
        assert_eq!(g.timesteps[37], 1e-3);
    }

    #[test]
    fn serializes_with_kind_and_params() {
        let s = Schedule::<f64>::vp_linear_default();
        let js = serde_json::to_value(s).unwrap();
        assert_eq!(js["kind"], "vp-linear");
        assert_eq!(js["params"]["beta1"], 20.0);
        assert_eq!(js["t_domain"][1], 1.0);
        let back: Schedule<f64> = serde_json::from_value(js).unwrap();
        assert_eq!(back, s);
        let e: Schedule<f64> =
            serde_json::from_str(r#"{"kind":"edm","params":{},"t_domain":[0.002,80]}"#).unwrap();
        assert_eq!(e, Schedule::edm());
    }

    #[test]
    fn works_in_single_precision() {
        let s = Schedule::<f32>::edm();
        let lam = s.lambda_of_t(2.0).unwrap();
        assert!((s.t_of_lambda(lam).unwrap() - 2.0).abs() < 1e-5);
    }
}
