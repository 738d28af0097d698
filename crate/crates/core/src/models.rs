//! Analytic noise-prediction models.
//!
//! Each model is the exact noise predictor `ε(x, λ) = −σ_λ ∇ log q_λ(x)` of a
//! distribution whose diffused marginals are known in closed form, so the
//! Jacobian-vector product is exact and the probability-flow ODE preserves
//! the marginals `q_λ`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{vec, Real};
use crate::rng::SeededRng;
use crate::schedule::Schedule;

/// λ-step of the central difference used for `∂ε/∂λ` where no closed form is
/// implemented.
pub const DLAMBDA_STEP: f64 = 1e-4;

/// A noise predictor `ε(x, λ)` together with its first derivatives.
pub trait NoiseModel<T: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eps(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>>;

    /// `∇ₓε(x, λ) · v`.
    fn jvp(&self, sched: &Schedule<T>, x: &[T], lam: T, v: &[T]) -> Result<Vec<T>>;

    /// `∂ε/∂λ` at fixed `x`. The default is a central difference with step
    /// [`DLAMBDA_STEP`].
    fn eps_dlambda(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        let h = T::lit(DLAMBDA_STEP);
        let plus = self.eps(sched, x, lam + h)?;
        let minus = self.eps(sched, x, lam - h)?;
        let inv = T::one() / (h + h);
        Ok(plus.iter().zip(&minus).map(|(&p, &m)| (p - m) * inv).collect())
    }
}

impl<T: Real, M: NoiseModel<T> + ?Sized> NoiseModel<T> for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eps(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        (**self).eps(sched, x, lam)
    }
    fn jvp(&self, sched: &Schedule<T>, x: &[T], lam: T, v: &[T]) -> Result<Vec<T>> {
        (**self).jvp(sched, x, lam, v)
    }
    fn eps_dlambda(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        (**self).eps_dlambda(sched, x, lam)
    }
}

/// Serializable description of an analytic model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[serde(bound = "T: Real")]
pub enum ModelSpec<T: Real = f64> {
    /// Data is a point mass at `x0`.
    PointGaussian { x0: Vec<T> },
    /// Isotropic Gaussian mixture `Σ wᵢ N(μᵢ, sᵢ² I)`.
    GaussianMixture {
        weights: Vec<T>,
        means: Vec<Vec<T>>,
        stds: Vec<T>,
    },
    /// Classifier-free combination `s·ε_cond + (1 − s)·ε_uncond`.
    Guided {
        cond: Box<ModelSpec<T>>,
        uncond: Box<ModelSpec<T>>,
        scale: T,
    },
}

/// Outputs of one model evaluation: `ε`, `∂ε/∂λ`, and the JVP contract.
pub struct ModelEval<'a, T: Real, M: NoiseModel<T> + ?Sized> {
    pub eps: Vec<T>,
    pub eps_dlambda: Vec<T>,
    model: &'a M,
    sched: &'a Schedule<T>,
    x: &'a [T],
    lam: T,
}

impl<T: Real, M: NoiseModel<T> + ?Sized> ModelEval<'_, T, M> {
    pub fn jvp(&self, v: &[T]) -> Result<Vec<T>> {
        self.model.jvp(self.sched, self.x, self.lam, v)
    }
}

pub fn evaluate<'a, T: Real, M: NoiseModel<T> + ?Sized>(
    model: &'a M,
    sched: &'a Schedule<T>,
    x: &'a [T],
    lam: T,
) -> Result<ModelEval<'a, T, M>> {
    Ok(ModelEval {
        eps: model.eps(sched, x, lam)?,
        eps_dlambda: model.eps_dlambda(sched, x, lam)?,
        model,
        sched,
        x,
        lam,
    })
}

fn check_dim<T>(x: &[T], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::arg(format!("dimension mismatch: got {}, expected {d}", x.len())));
    }
    Ok(())
}

/// Per-component quantities of the diffused mixture at `(x, λ)`.
struct MixtureState<T> {
    /// Posterior responsibilities.
    resp: Vec<T>,
    /// `uᵢ = −(x − αμᵢ)/vᵢ`, the component scores.
    scores: Vec<Vec<T>>,
    /// `vᵢ = α²sᵢ² + σ²`.
    vars: Vec<T>,
    /// `Σ rᵢ uᵢ`.
    mean_score: Vec<T>,
    log_density: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn point_gaussian(x0: Vec<T>) -> Self {
        ModelSpec::PointGaussian { x0 }
    }

    pub fn mixture(weights: Vec<T>, means: Vec<Vec<T>>, stds: Vec<T>) -> Result<Self> {
        let m = ModelSpec::GaussianMixture { weights, means, stds };
        m.validate()?;
        Ok(m)
    }

    pub fn guided(cond: ModelSpec<T>, uncond: ModelSpec<T>, scale: T) -> Result<Self> {
        let m = ModelSpec::Guided {
            cond: Box::new(cond),
            uncond: Box::new(uncond),
            scale,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::PointGaussian { x0 } => {
                if x0.is_empty() {
                    return Err(Error::arg("point-gaussian needs D >= 1"));
                }
            }
            ModelSpec::GaussianMixture { weights, means, stds } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
                    return Err(Error::arg("mixture needs matching, nonempty weights/means/stds"));
                }
                let d = means[0].len();
                if d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::arg("mixture means must share a dimension D >= 1"));
                }
                if weights.iter().any(|&w| !(w > T::zero())) {
                    return Err(Error::arg("mixture weights must be positive"));
                }
                let total: T = weights.iter().copied().sum();
                if (total - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
                    return Err(Error::arg(format!("mixture weights sum to {total}, not 1")));
                }
                // A zero std is the point-mass limit of a component.
                if stds.iter().any(|&s| !(s >= T::zero())) {
                    return Err(Error::arg("mixture stds must be nonnegative"));
                }
            }
            ModelSpec::Guided { cond, uncond, .. } => {
                cond.validate()?;
                uncond.validate()?;
                if cond.dimension() != uncond.dimension() {
                    return Err(Error::arg("guided components differ in dimension"));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            ModelSpec::PointGaussian { x0 } => x0.len(),
            ModelSpec::GaussianMixture { means, .. } => means[0].len(),
            ModelSpec::Guided { cond, .. } => cond.dimension(),
        }
    }

    /// Short identifier stored in EMS table metadata.
    pub fn id(&self) -> String {
        match self {
            ModelSpec::PointGaussian { .. } => format!("point-gaussian(D={})", self.dimension()),
            ModelSpec::GaussianMixture { weights, .. } => {
                format!("gaussian-mixture(K={},D={})", weights.len(), self.dimension())
            }
            ModelSpec::Guided { cond, uncond, scale } => {
                format!("guided(s={scale},{},{})", cond.id(), uncond.id())
            }
        }
    }

    fn mixture_state(weights: &[T], means: &[Vec<T>], stds: &[T], sched: &Schedule<T>, x: &[T], lam: T) -> MixtureState<T> {
        let alpha = sched.alpha_at(lam);
        let sigma = sched.sigma_at(lam);
        let d = T::from_count(x.len());
        let two_pi = T::PI() + T::PI();
        let mut log_w = Vec::with_capacity(weights.len());
        let mut scores = Vec::with_capacity(weights.len());
        let mut vars = Vec::with_capacity(weights.len());
        for ((&w, mu), &s) in weights.iter().zip(means).zip(stds) {
            let v = alpha * alpha * s * s + sigma * sigma;
            let diff: Vec<T> = x.iter().zip(mu).map(|(&xi, &mi)| xi - alpha * mi).collect();
            let sq = vec::dot(&diff, &diff);
            log_w.push(w.ln() - T::lit(0.5) * d * (two_pi * v).ln() - sq / (v + v));
            scores.push(diff.iter().map(|&di| -di / v).collect::<Vec<T>>());
            vars.push(v);
        }
        let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
        let unnorm: Vec<T> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
        let z: T = unnorm.iter().copied().sum();
        let resp: Vec<T> = unnorm.iter().map(|&u| u / z).collect();
        let mut mean_score = vec::zeros(x.len());
        for (r, u) in resp.iter().zip(&scores) {
            vec::axpy(&mut mean_score, *r, u);
        }
        MixtureState {
            resp,
            scores,
            vars,
            mean_score,
            log_density: max + z.ln(),
        }
    }

    /// `log q_λ(x)` of the diffused data distribution (not defined for guided
    /// models, which are not the score of a single density).
    pub fn log_density(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<T> {
        check_dim(x, self.dimension())?;
        match self {
            ModelSpec::PointGaussian { x0 } => {
                let zero = [T::zero()];
                Ok(Self::mixture_state(&[T::one()], std::slice::from_ref(x0), &zero, sched, x, lam).log_density)
            }
            ModelSpec::GaussianMixture { weights, means, stds } => {
                Ok(Self::mixture_state(weights, means, stds, sched, x, lam).log_density)
            }
            ModelSpec::Guided { .. } => Err(Error::arg("guided models have no single log-density")),
        }
    }

    /// Draws `n` i.i.d. samples from the data distribution `q0`.
    pub fn sample_data(&self, rng: &mut SeededRng, n: usize) -> Vec<Vec<T>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one(&self, rng: &mut SeededRng) -> Vec<T> {
        match self {
            ModelSpec::PointGaussian { x0 } => x0.clone(),
            ModelSpec::GaussianMixture { weights, means, stds } => {
                let i = rng.categorical(weights);
                let z: Vec<T> = rng.normal_vec(means[i].len());
                means[i].iter().zip(&z).map(|(&m, &zi)| m + stds[i] * zi).collect()
            }
            ModelSpec::Guided { cond, .. } => cond.sample_one(rng),
        }
    }

    /// `Σ wᵢ μᵢ` for point/mixture models.
    pub fn data_mean(&self) -> Vec<T> {
        match self {
            ModelSpec::PointGaussian { x0 } => x0.clone(),
            ModelSpec::GaussianMixture { weights, means, .. } => {
                let mut m = vec::zeros(self.dimension());
                for (w, mu) in weights.iter().zip(means) {
                    vec::axpy(&mut m, *w, mu);
                }
                m
            }
            ModelSpec::Guided { cond, .. } => cond.data_mean(),
        }
    }
}

impl<T: Real> NoiseModel<T> for ModelSpec<T> {
    fn dim(&self) -> usize {
        self.dimension()
    }

    fn eps(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        check_dim(x, self.dimension())?;
        match self {
            ModelSpec::PointGaussian { x0 } => {
                let alpha = sched.alpha_at(lam);
                let sigma = sched.sigma_at(lam);
                Ok(x.iter().zip(x0).map(|(&xi, &mi)| (xi - alpha * mi) / sigma).collect())
            }
            ModelSpec::GaussianMixture { weights, means, stds } => {
                let sigma = sched.sigma_at(lam);
                let st = Self::mixture_state(weights, means, stds, sched, x, lam);
                Ok(vec::scale(&st.mean_score, -sigma))
            }
            ModelSpec::Guided { cond, uncond, scale } => {
                let c = cond.eps(sched, x, lam)?;
                let u = uncond.eps(sched, x, lam)?;
                Ok(combine(&c, &u, *scale))
            }
        }
    }

    fn jvp(&self, sched: &Schedule<T>, x: &[T], lam: T, v: &[T]) -> Result<Vec<T>> {
        check_dim(x, self.dimension())?;
        check_dim(v, self.dimension())?;
        match self {
            ModelSpec::PointGaussian { .. } => {
                let sigma = sched.sigma_at(lam);
                Ok(v.iter().map(|&vi| vi / sigma).collect())
            }
            ModelSpec::GaussianMixture { weights, means, stds } => {
                // ∇ε = σ Σ rᵢ (I/vᵢ − uᵢ (uᵢ − ū)ᵀ)
                let sigma = sched.sigma_at(lam);
                let st = Self::mixture_state(weights, means, stds, sched, x, lam);
                let mut out = vec::zeros(x.len());
                for ((&r, u), &var) in st.resp.iter().zip(&st.scores).zip(&st.vars) {
                    let centered = vec::sub(u, &st.mean_score);
                    let proj = vec::dot(&centered, v);
                    for ((o, &vi), &ui) in out.iter_mut().zip(v).zip(u) {
                        *o = *o + r * (vi / var - ui * proj);
                    }
                }
                Ok(vec::scale(&out, sigma))
            }
            ModelSpec::Guided { cond, uncond, scale } => {
                let c = cond.jvp(sched, x, lam, v)?;
                let u = uncond.jvp(sched, x, lam, v)?;
                Ok(combine(&c, &u, *scale))
            }
        }
    }

    fn eps_dlambda(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        check_dim(x, self.dimension())?;
        match self {
            ModelSpec::PointGaussian { x0 } => {
                // ε = (x − αx₀)/σ with dα/dλ = α a', d log σ/dλ = a' − 1.
                let alpha = sched.alpha_at(lam);
                let sigma = sched.sigma_at(lam);
                let a = sched.dlog_alpha_at(lam);
                Ok(x.iter()
                    .zip(x0)
                    .map(|(&xi, &mi)| {
                        let e = (xi - alpha * mi) / sigma;
                        -alpha * a * mi / sigma - e * (a - T::one())
                    })
                    .collect())
            }
            ModelSpec::GaussianMixture { .. } => {
                let h = T::lit(DLAMBDA_STEP);
                let plus = self.eps(sched, x, lam + h)?;
                let minus = self.eps(sched, x, lam - h)?;
                let inv = T::one() / (h + h);
                Ok(plus.iter().zip(&minus).map(|(&p, &m)| (p - m) * inv).collect())
            }
            ModelSpec::Guided { cond, uncond, scale } => {
                let c = cond.eps_dlambda(sched, x, lam)?;
                let u = uncond.eps_dlambda(sched, x, lam)?;
                Ok(combine(&c, &u, *scale))
            }
        }
    }
}

fn combine<T: Real>(cond: &[T], uncond: &[T], scale: T) -> Vec<T> {
    cond.iter()
        .zip(uncond)
        .map(|(&c, &u)| scale * c + (T::one() - scale) * u)
        .collect()
}

/// `α x0 + σ z` with `z ~ N(0, I)`.
pub fn forward_diffuse<T: Real>(sched: &Schedule<T>, x0: &[T], lam: T, rng: &mut SeededRng) -> Vec<T> {
    let z: Vec<T> = rng.normal_vec(x0.len());
    diffuse_with_noise(sched, x0, lam, &z)
}

/// `α x0 + σ z` for a given noise vector.
pub fn diffuse_with_noise<T: Real>(sched: &Schedule<T>, x0: &[T], lam: T, z: &[T]) -> Vec<T> {
    let alpha = sched.alpha_at(lam);
    let sigma = sched.sigma_at(lam);
    x0.iter().zip(z).map(|(&x, &zi)| alpha * x + sigma * zi).collect()
}

/// Counts model evaluations (NFE) of the wrapped model.
pub struct CountingModel<M> {
    pub inner: M,
    eps_calls: AtomicUsize,
    jvp_calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            eps_calls: AtomicUsize::new(0),
            jvp_calls: AtomicUsize::new(0),
        }
    }

    pub fn eps_calls(&self) -> usize {
        self.eps_calls.load(Ordering::Relaxed)
    }

    pub fn jvp_calls(&self) -> usize {
        self.jvp_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.eps_calls.store(0, Ordering::Relaxed);
        self.jvp_calls.store(0, Ordering::Relaxed);
    }
}

impl<T: Real, M: NoiseModel<T>> NoiseModel<T> for CountingModel<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eps(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        self.eps_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.eps(sched, x, lam)
    }

    fn jvp(&self, sched: &Schedule<T>, x: &[T], lam: T, v: &[T]) -> Result<Vec<T>> {
        self.jvp_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.jvp(sched, x, lam, v)
    }

    fn eps_dlambda(&self, sched: &Schedule<T>, x: &[T], lam: T) -> Result<Vec<T>> {
        self.inner.eps_dlambda(sched, x, lam)
    }
}
