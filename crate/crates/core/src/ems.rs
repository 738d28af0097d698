//! Empirical model statistics.
//!
//! On a uniform λ grid the table stores, per coordinate,
//!
//! * `l`: the diagonal of `E[σ ∇ₓε]`, estimated with Rademacher probes;
//! * `s`, `b`: the least-squares fit `f⁽¹⁾ ≈ s⊙f + b` where
//!   `f = (σε − l⊙x)/α` and `f⁽¹⁾` is its total λ-derivative along the ODE;
//! * `l_dot`: the finite-difference derivative of `l` over the grid.
//!
//! Every grid point reuses the same data draws, diffusion noise and probes
//! (common random numbers), so the Monte Carlo error of the table varies
//! smoothly in λ instead of being independent from node to node.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{diffuse_with_noise, NoiseModel, ModelSpec};
use crate::real::{vec, Real};
use crate::rng::{SeededRng, STREAM_DATA, STREAM_NOISE, STREAM_PROBES};
use crate::schedule::Schedule;

pub const FILE_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmsConfig<T: Real = f64> {
    /// Number of grid intervals; the table has `n + 1` rows.
    pub n: usize,
    /// Number of datapoints per grid point.
    pub k: usize,
    pub probes_per_point: usize,
    pub seed: u64,
    pub lam_range: (T, T),
    /// Relative variance floor: `floor = rel · mean(f⊙f) + abs`.
    pub variance_floor_rel: T,
    pub variance_floor_abs: T,
}

impl<T: Real> EmsConfig<T> {
    pub fn new(n: usize, k: usize, seed: u64, lam_range: (T, T)) -> Self {
        Self {
            n,
            k,
            probes_per_point: 1,
            seed,
            lam_range,
            variance_floor_rel: T::lit(1e-8),
            variance_floor_abs: T::lit(1e-20),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.probes_per_point == 0 {
            return Err(Error::arg("N, K and probes_per_point must all be at least 1"));
        }
        if !(self.lam_range.0 < self.lam_range.1) {
            return Err(Error::arg("lam_range must be increasing"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmsMeta {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EmsTable<T: Real = f64> {
    pub schedule: Schedule<T>,
    pub lambda_grid: Vec<T>,
    pub l: Vec<Vec<T>>,
    pub s: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
    pub l_dot: Vec<Vec<T>>,
    pub meta: EmsMeta,
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct FileOut<'a, T: Real> {
    version: u64,
    #[serde(flatten)]
    table: &'a EmsTable<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
struct FileIn<T: Real> {
    #[serde(rename = "version")]
    _version: u64,
    #[serde(flatten)]
    table: EmsTable<T>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegenerateKind {
    /// `l = 0, s = −1, b = 0`.
    NoisePred,
    /// `l = 1, s = 0, b = 0`.
    DataPred,
}

impl DegenerateKind {
    pub fn triple<T: Real>(self) -> (T, T, T) {
        match self {
            DegenerateKind::NoisePred => (T::zero(), -T::one(), T::zero()),
            DegenerateKind::DataPred => (T::one(), T::zero(), T::zero()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegenerateKind::NoisePred => "noise-pred",
            DegenerateKind::DataPred => "data-pred",
        }
    }
}

impl FromStr for DegenerateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise-pred" => Ok(DegenerateKind::NoisePred),
            "data-pred" => Ok(DegenerateKind::DataPred),
            _ => Err(Error::arg(format!("unknown degenerate kind {s:?}"))),
        }
    }
}

/// `n + 1` equally spaced values from `lo` to `hi` with exact endpoints.
pub fn uniform_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let nn = T::from_count(n);
    (0..=n)
        .map(|j| {
            if j == n {
                hi
            } else {
                lo + (hi - lo) * T::from_count(j) / nn
            }
        })
        .collect()
}

impl<T: Real> EmsTable<T> {
    /// Builds a table from explicit rows and checks its invariants.
    pub fn from_parts(
        schedule: Schedule<T>,
        lambda_grid: Vec<T>,
        l: Vec<Vec<T>>,
        s: Vec<Vec<T>>,
        b: Vec<Vec<T>>,
        l_dot: Vec<Vec<T>>,
        meta: EmsMeta,
    ) -> Result<Self> {
        let t = Self {
            schedule,
            lambda_grid,
            l,
            s,
            b,
            l_dot,
            meta,
        };
        t.validate()?;
        Ok(t)
    }

    /// A table whose rows are the same constant vectors at every node.
    pub fn constant(schedule: Schedule<T>, lam_range: (T, T), n: usize, l: Vec<T>, s: Vec<T>, b: Vec<T>, model: &str) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("N must be at least 1"));
        }
        let d = l.len();
        Self::from_parts(
            schedule,
            uniform_grid(lam_range.0, lam_range.1, n),
            vec![l; n + 1],
            vec![s; n + 1],
            vec![b; n + 1],
            vec![vec::zeros(d); n + 1],
            EmsMeta {
                k: 0,
                seed: 0,
                model: model.to_string(),
            },
        )
    }

    pub fn n(&self) -> usize {
        self.lambda_grid.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.l[0].len()
    }

    pub fn h0(&self) -> T {
        (self.lambda_grid[self.n()] - self.lambda_grid[0]) / T::from_count(self.n())
    }

    pub fn lam_range(&self) -> (T, T) {
        (self.lambda_grid[0], self.lambda_grid[self.n()])
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.lambda_grid.len();
        if rows < 2 {
            return Err(Error::arg("EMS grid needs at least two nodes"));
        }
        let d = self.l.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::arg("EMS rows must have dimension >= 1"));
        }
        for (name, m) in [("l", &self.l), ("s", &self.s), ("b", &self.b), ("l_dot", &self.l_dot)] {
            if m.len() != rows || m.iter().any(|r| r.len() != d) {
                return Err(Error::arg(format!("EMS field {name} has inconsistent shape")));
            }
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("EMS field {name} has non-finite entries")));
            }
        }
        let h0 = self.h0();
        if !(h0 > T::zero()) {
            return Err(Error::arg("EMS grid must be increasing"));
        }
        let scale = T::one() + self.lambda_grid[0].abs().max(self.lambda_grid[rows - 1].abs());
        for w in self.lambda_grid.windows(2) {
            if ((w[1] - w[0]) - h0).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * scale {
                return Err(Error::arg("EMS grid is not uniform"));
            }
        }
        Ok(())
    }

    /// Warning text when this table was estimated under a different schedule.
    pub fn schedule_mismatch(&self, sched: &Schedule<T>) -> Option<String> {
        (self.schedule != *sched).then(|| {
            format!(
                "EMS table was estimated for schedule {} {:?} but {} {:?} is in use",
                self.schedule.name(),
                self.schedule.t_domain,
                sched.name(),
                sched.t_domain
            )
        })
    }

    /// Per-grid-point mean over coordinates of `(l, s, b)`.
    pub fn summary(&self) -> Vec<(T, T, T, T)> {
        let d = T::from_count(self.dim());
        (0..=self.n())
            .map(|j| {
                let m = |r: &[T]| r.iter().copied().sum::<T>() / d;
                (self.lambda_grid[j], m(&self.l[j]), m(&self.s[j]), m(&self.b[j]))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(&FileOut {
            version: FILE_VERSION,
            table: self,
        })?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.version != FILE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: probe.version,
                expected: FILE_VERSION,
            });
        }
        let file: FileIn<T> = serde_json::from_str(text)?;
        file.table.validate()?;
        Ok(file.table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Loads a table and reports, without failing, a schedule that differs
    /// from `sched`.
    pub fn load_checked(path: impl AsRef<Path>, sched: &Schedule<T>) -> Result<(Self, Option<String>)> {
        let t = Self::load(path)?;
        let warn = t.schedule_mismatch(sched);
        Ok((t, warn))
    }
}

/// Mean of `(σ ∇ε v) ⊙ v` over `datapoints × probes`.
pub fn estimate_l_with_probes<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    sched: &Schedule<T>,
    lam: T,
    datapoints: &[Vec<T>],
    probes: &[Vec<Vec<T>>],
) -> Result<Vec<T>> {
    if datapoints.is_empty() {
        return Err(Error::arg("estimate_l needs at least one datapoint"));
    }
    if probes.len() != datapoints.len() || probes.iter().any(Vec::is_empty) {
        return Err(Error::arg("each datapoint needs at least one probe"));
    }
    let sigma = sched.sigma_at(lam);
    let mut acc = vec::zeros(model.dim());
    let mut count = 0usize;
    for (x, vs) in datapoints.iter().zip(probes) {
        for v in vs {
            let jv = model.jvp(sched, x, lam, v)?;
            for ((a, &j), &vi) in acc.iter_mut().zip(&jv).zip(v) {
                *a = *a + sigma * j * vi;
            }
            count += 1;
        }
    }
    Ok(vec::scale(&acc, T::one() / T::from_count(count)))
}

/// Stochastic diagonal estimate of `E[σ ∇ε]` with `probes` fresh Rademacher
/// vectors per datapoint.
pub fn estimate_l<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    sched: &Schedule<T>,
    lam: T,
    datapoints: &[Vec<T>],
    rng: &mut SeededRng,
    probes: usize,
) -> Result<Vec<T>> {
    let d = model.dim();
    let vs: Vec<Vec<Vec<T>>> = datapoints
        .iter()
        .map(|_| (0..probes).map(|_| rng.rademacher_vec(d)).collect())
        .collect();
    estimate_l_with_probes(model, sched, lam, datapoints, &vs)
}

/// Finite-difference `dl/dλ` at node `j` of a uniform grid with spacing `h0`:
/// central in the interior, one-sided second order at the ends.
pub fn estimate_l_dot<T: Real>(l: &[Vec<T>], h0: T, j: usize) -> Vec<T> {
    let n = l.len() - 1;
    let d = l[j].len();
    let two_h = h0 + h0;
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    (0..d)
        .map(|i| {
            if n == 1 {
                (l[1][i] - l[0][i]) / h0
            } else if j == 0 {
                (-three * l[0][i] + four * l[1][i] - l[2][i]) / two_h
            } else if j == n {
                (three * l[n][i] - four * l[n - 1][i] + l[n - 2][i]) / two_h
            } else {
                (l[j + 1][i] - l[j - 1][i]) / two_h
            }
        })
        .collect()
}

/// `f = (σε − l⊙x)/α` from a precomputed `ε`.
pub fn f_from_eps<T: Real>(sched: &Schedule<T>, l: &[T], x: &[T], eps: &[T], lam: T) -> Vec<T> {
    let alpha = sched.alpha_at(lam);
    let sigma = sched.sigma_at(lam);
    x.iter()
        .zip(eps)
        .zip(l)
        .map(|((&xi, &ei), &li)| (sigma * ei - li * xi) / alpha)
        .collect()
}

/// `f⁽¹⁾ = e^{−λ}((l − 1)⊙ε + ε⁽¹⁾) − l̇⊙x/α` with
/// `ε⁽¹⁾ = ∂_λε + ∇ε·(a'x − σε)`.
pub fn f1_from_eps<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    sched: &Schedule<T>,
    l: &[T],
    l_dot: &[T],
    x: &[T],
    eps: &[T],
    lam: T,
) -> Result<Vec<T>> {
    let alpha = sched.alpha_at(lam);
    let sigma = sched.sigma_at(lam);
    let a = sched.dlog_alpha_at(lam);
    let velocity: Vec<T> = x.iter().zip(eps).map(|(&xi, &ei)| a * xi - sigma * ei).collect();
    let total = vec::add(&model.eps_dlambda(sched, x, lam)?, &model.jvp(sched, x, lam, &velocity)?);
    let e = (-lam).exp();
    Ok((0..x.len())
        .map(|i| e * ((l[i] - T::one()) * eps[i] + total[i]) - l_dot[i] * x[i] / alpha)
        .collect())
}

/// `f` at grid node `j` of `table`.
pub fn eval_f<T: Real, M: NoiseModel<T> + ?Sized>(model: &M, table: &EmsTable<T>, j: usize, x: &[T]) -> Result<Vec<T>> {
    let lam = table.lambda_grid[j];
    let eps = model.eps(&table.schedule, x, lam)?;
    Ok(f_from_eps(&table.schedule, &table.l[j], x, &eps, lam))
}

/// `f⁽¹⁾` at grid node `j` of `table`.
pub fn eval_f1<T: Real, M: NoiseModel<T> + ?Sized>(model: &M, table: &EmsTable<T>, j: usize, x: &[T]) -> Result<Vec<T>> {
    let lam = table.lambda_grid[j];
    let eps = model.eps(&table.schedule, x, lam)?;
    f1_from_eps(model, &table.schedule, &table.l[j], &table.l_dot[j], x, &eps, lam)
}

/// Closed-form least squares `f1 ≈ s⊙f + b`, coordinate-wise, with the
/// variance floor `rel · mean(f⊙f) + abs` in the denominator.
pub fn estimate_sb<T: Real>(f: &[Vec<T>], f1: &[Vec<T>], floor_rel: T, floor_abs: T) -> Result<(Vec<T>, Vec<T>)> {
    if f.is_empty() || f.len() != f1.len() {
        return Err(Error::arg("estimate_sb needs equal-length nonempty samples"));
    }
    let d = f[0].len();
    let n = T::from_count(f.len());
    let mut s = vec::zeros(d);
    let mut b = vec::zeros(d);
    for i in 0..d {
        let mf = f.iter().map(|r| r[i]).sum::<T>() / n;
        let mf1 = f1.iter().map(|r| r[i]).sum::<T>() / n;
        let mut var = T::zero();
        let mut cov = T::zero();
        let mut sq = T::zero();
        for (r, r1) in f.iter().zip(f1) {
            let df = r[i] - mf;
            var = var + df * df;
            cov = cov + df * (r1[i] - mf1);
            sq = sq + r[i] * r[i];
        }
        var = var / n;
        cov = cov / n;
        let floor = floor_rel * (sq / n) + floor_abs;
        s[i] = cov / (var + floor);
        b[i] = mf1 - s[i] * mf;
    }
    Ok((s, b))
}

/// Data draws, diffusion noise and probes shared by every grid node.
pub struct CommonDraws<T> {
    pub x0: Vec<Vec<T>>,
    pub noise: Vec<Vec<T>>,
    pub probes: Vec<Vec<Vec<T>>>,
}

impl<T: Real> CommonDraws<T> {
    pub fn new(model: &ModelSpec<T>, k: usize, probes: usize, seed: u64) -> Self {
        let d = model.dimension();
        let mut data_rng = SeededRng::with_stream(seed, STREAM_DATA);
        let mut noise_rng = SeededRng::with_stream(seed, STREAM_NOISE);
        let mut probe_rng = SeededRng::with_stream(seed, STREAM_PROBES);
        Self {
            x0: model.sample_data(&mut data_rng, k),
            noise: (0..k).map(|_| noise_rng.normal_vec(d)).collect(),
            probes: (0..k)
                .map(|_| (0..probes).map(|_| probe_rng.rademacher_vec(d)).collect())
                .collect(),
        }
    }

    pub fn diffused(&self, sched: &Schedule<T>, lam: T) -> Vec<Vec<T>> {
        self.x0
            .iter()
            .zip(&self.noise)
            .map(|(x0, z)| diffuse_with_noise(sched, x0, lam, z))
            .collect()
    }
}

/// Full estimation pipeline: `l` at every node, then `l_dot`, then `(s, b)`.
pub fn estimate_table<T: Real>(model: &ModelSpec<T>, sched: &Schedule<T>, cfg: &EmsConfig<T>) -> Result<EmsTable<T>> {
    cfg.validate()?;
    model.validate()?;
    let grid = uniform_grid(cfg.lam_range.0, cfg.lam_range.1, cfg.n);
    let draws = CommonDraws::new(model, cfg.k, cfg.probes_per_point, cfg.seed);

    let l: Vec<Vec<T>> = grid
        .par_iter()
        .map(|&lam| {
            let xs = draws.diffused(sched, lam);
            estimate_l_with_probes(model, sched, lam, &xs, &draws.probes)
        })
        .collect::<Result<_>>()?;
    let h0 = (cfg.lam_range.1 - cfg.lam_range.0) / T::from_count(cfg.n);
    let l_dot: Vec<Vec<T>> = (0..=cfg.n).map(|j| estimate_l_dot(&l, h0, j)).collect();

    let sb: Vec<(Vec<T>, Vec<T>)> = (0..=cfg.n)
        .into_par_iter()
        .map(|j| {
            let lam = grid[j];
            let xs = draws.diffused(sched, lam);
            let mut fs = Vec::with_capacity(xs.len());
            let mut f1s = Vec::with_capacity(xs.len());
            for x in &xs {
                let eps = model.eps(sched, x, lam)?;
                fs.push(f_from_eps(sched, &l[j], x, &eps, lam));
                f1s.push(f1_from_eps(model, sched, &l[j], &l_dot[j], x, &eps, lam)?);
            }
            estimate_sb(&fs, &f1s, cfg.variance_floor_rel, cfg.variance_floor_abs)
        })
        .collect::<Result<_>>()?;
    let (s, b): (Vec<_>, Vec<_>) = sb.into_iter().unzip();

    EmsTable::from_parts(
        sched.clone(),
        grid,
        l,
        s,
        b,
        l_dot,
        EmsMeta {
            k: cfg.k,
            seed: cfg.seed,
            model: model.id(),
        },
    )
}

/// Constant table reproducing the noise- or data-prediction solvers.
pub fn degenerate_table<T: Real>(kind: DegenerateKind, sched: &Schedule<T>, n: usize, lam_range: (T, T), d: usize) -> Result<EmsTable<T>> {
    let (l, s, b) = kind.triple::<T>();
    EmsTable::constant(
        sched.clone(),
        lam_range,
        n,
        vec::filled(d, l),
        vec::filled(d, s),
        vec::filled(d, b),
        kind.name(),
    )
}
