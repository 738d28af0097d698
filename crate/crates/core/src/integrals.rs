//! Exponential-integrator coefficients over an EMS table.
//!
//! With cumulative trapezoid integrals from the first grid node
//!
//! ```text
//! L = ∫ l,  S = ∫ s,  B = ∫ e^{−S} b,  C = ∫ e^{L+S} B,  I = ∫ e^{L+S}
//! ```
//!
//! the coefficients of a step from `λ_s` to `λ_t` are
//!
//! ```text
//! A      = e^{L_s − L_t}
//! ∫E·B   = e^{−L_s} (C_t − C_s − B_s (I_t − I_s))
//! E^(0)  = e^{−L_s − S_s} (I_t − I_s)
//! E^(k)  = trapezoid of e^{(L+S) − (L_s+S_s)} (λ − λ_s)^k / k!   over [s, t]
//! ```
//!
//! For EMS that are constant in λ, every coefficient also has a closed form
//! in `h = λ_t − λ_s`, used in [`Quadrature::Exact`] mode at arbitrary λ.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use crate::ems::EmsTable;
use crate::error::{Error, Result};
use crate::real::{vec, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    /// Cumulative trapezoid sums on the EMS grid; step endpoints are grid
    /// nodes.
    Trapezoid,
    /// Closed forms for λ-constant EMS, evaluated at exact λ.
    Exact,
    /// `Exact` when the table is constant, otherwise `Trapezoid`.
    Auto,
}

/// A step endpoint: nearest grid index and the λ actually used.
///
/// In trapezoid mode `lam` is the grid value at `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node<T> {
    pub j: usize,
    pub lam: T,
}

/// Memo of `E^(k)` keyed by `(k, j_s, j_t)`.
#[derive(Default)]
pub struct EkCache<T> {
    map: RwLock<HashMap<(usize, usize, usize), Arc<Vec<T>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<T: Clone> EkCache<T> {
    pub fn new() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.write().expect("cache lock").clear();
    }

    fn get_or_insert_with(&self, key: (usize, usize, usize), f: impl FnOnce() -> Vec<T>) -> Arc<Vec<T>> {
        if let Some(v) = self.map.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Arc::clone(v);
        }
        let mut w = self.map.write().expect("cache lock");
        if let Some(v) = w.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Arc::clone(v);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = Arc::new(f());
        w.insert(key, Arc::clone(&v));
        v
    }
}

/// `(a, b, c)` with `ĝ = a⊙x + b⊙ε + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct GCoefficients<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> GCoefficients<T> {
    pub fn apply(&self, x: &[T], eps: &[T]) -> Vec<T> {
        (0..x.len())
            .map(|i| self.a[i] * x[i] + self.b[i] * eps[i] + self.c[i])
            .collect()
    }
}

pub struct IntegralTable<T: Real = f64> {
    pub ems: EmsTable<T>,
    pub l_int: Vec<Vec<T>>,
    pub s_int: Vec<Vec<T>>,
    pub b_int: Vec<Vec<T>>,
    pub c_int: Vec<Vec<T>>,
    pub i_int: Vec<Vec<T>>,
    mode: Quadrature,
    cache: EkCache<T>,
}

fn trapezoid_cumulative<T: Real>(h0: T, f: &[Vec<T>]) -> Vec<Vec<T>> {
    let half = h0 * T::lit(0.5);
    let d = f[0].len();
    let mut out = Vec::with_capacity(f.len());
    out.push(vec::zeros(d));
    for j in 1..f.len() {
        let prev: &Vec<T> = &out[j - 1];
        let row: Vec<T> = (0..d).map(|i| prev[i] + half * (f[j - 1][i] + f[j][i])).collect();
        out.push(row);
    }
    out
}

/// `k!` as a scalar.
fn factorial<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::from_count(i))
}

/// `(e^z − 1)/z`, equal to 1 at `z = 0`.
pub fn phi1<T: Real>(z: T) -> T {
    if z.abs() < T::lit(1e-5) {
        T::one() + z * (T::lit(0.5) + z / T::lit(6.0))
    } else {
        z.exp_m1() / z
    }
}

/// `J_k(c, h) = ∫₀ʰ e^{cu} uᵏ/k! du` for `h ≥ 0`, by a positive-term series
/// (Kummer's transformation for `c < 0`).
pub fn j_integral<T: Real>(k: usize, c: T, h: T) -> T {
    if h == T::zero() {
        return T::zero();
    }
    let z = c * h;
    let tiny = T::epsilon() * T::lit(0.25);
    let prefactor = h.powi(k as i32 + 1);
    if z >= T::zero() {
        // Σ_m z^m / (m! k! (m + k + 1))
        let mut term_pow = T::one() / factorial::<T>(k);
        let mut sum = term_pow / T::from_count(k + 1);
        for m in 1..100_000 {
            term_pow = term_pow * z / T::from_count(m);
            let t = term_pow / T::from_count(m + k + 1);
            sum = sum + t;
            if t <= tiny * sum && T::from_count(m) > z {
                break;
            }
        }
        prefactor * sum
    } else {
        // e^z / (k+1)! · Σ_m (−z)^m / ((k+2)(k+3)…(k+1+m))
        let w = -z;
        let mut term = T::one();
        let mut sum = T::one();
        for m in 1..100_000 {
            term = term * w / T::from_count(k + 1 + m);
            sum = sum + term;
            if term <= tiny * sum {
                break;
            }
        }
        prefactor * z.exp() * sum / factorial::<T>(k + 1)
    }
}

/// `∫₀ʰ e^{lu} (e^{su} − 1)/s du`, the λ-constant `∫E·B / b`.
pub fn eb_integral<T: Real>(l: T, s: T, h: T) -> T {
    if h == T::zero() {
        return T::zero();
    }
    if (s * h).abs() >= T::lit(0.5) {
        return (j_integral(0, l + s, h) - j_integral(0, l, h)) / s;
    }
    // (e^{su} − 1)/s = Σ_m s^m u^{m+1}/(m+1)!
    let tiny = T::epsilon() * T::lit(0.25);
    let mut sum = T::zero();
    let mut sp = T::one();
    for m in 0..200 {
        let t = sp * j_integral(m + 1, l, h);
        sum = sum + t;
        if t.abs() <= tiny * sum.abs() {
            break;
        }
        sp = sp * s;
    }
    sum
}

impl<T: Real> IntegralTable<T> {
    /// Builds with [`Quadrature::Auto`].
    pub fn new(ems: EmsTable<T>) -> Result<Self> {
        Self::with_quadrature(ems, Quadrature::Auto)
    }

    pub fn with_quadrature(ems: EmsTable<T>, quadrature: Quadrature) -> Result<Self> {
        ems.validate()?;
        let constant = ems_is_constant(&ems);
        let mode = match quadrature {
            Quadrature::Auto if constant => Quadrature::Exact,
            Quadrature::Auto => Quadrature::Trapezoid,
            Quadrature::Exact if !constant => {
                return Err(Error::arg("exact coefficients need λ-constant EMS"));
            }
            m => m,
        };
        let h0 = ems.h0();
        let l_int = trapezoid_cumulative(h0, &ems.l);
        let s_int = trapezoid_cumulative(h0, &ems.s);
        let weighted_b: Vec<Vec<T>> = ems
            .b
            .iter()
            .zip(&s_int)
            .map(|(b, s)| b.iter().zip(s).map(|(&bi, &si)| (-si).exp() * bi).collect())
            .collect();
        let b_int = trapezoid_cumulative(h0, &weighted_b);
        let growth: Vec<Vec<T>> = l_int
            .iter()
            .zip(&s_int)
            .map(|(l, s)| l.iter().zip(s).map(|(&li, &si)| (li + si).exp()).collect())
            .collect();
        let growth_b: Vec<Vec<T>> = growth.iter().zip(&b_int).map(|(g, b)| vec::mul(g, b)).collect();
        let c_int = trapezoid_cumulative(h0, &growth_b);
        let i_int = trapezoid_cumulative(h0, &growth);
        Ok(Self {
            ems,
            l_int,
            s_int,
            b_int,
            c_int,
            i_int,
            mode,
            cache: EkCache::new(),
        })
    }

    pub fn mode(&self) -> Quadrature {
        self.mode
    }

    pub fn cache(&self) -> &EkCache<T> {
        &self.cache
    }

    pub fn dim(&self) -> usize {
        self.ems.dim()
    }

    pub fn node(&self, j: usize) -> Node<T> {
        Node {
            j,
            lam: self.ems.lambda_grid[j],
        }
    }

    /// Maps a λ to a step endpoint: the nearest grid node in trapezoid mode
    /// (error at most half a grid cell), λ itself in exact mode.
    pub fn locate(&self, lam: T) -> Result<Node<T>> {
        let j = snap(&self.ems.lambda_grid, lam)?;
        Ok(match self.mode {
            Quadrature::Exact => Node { j, lam },
            _ => self.node(j),
        })
    }

    fn constant_row(&self) -> (&[T], &[T], &[T]) {
        (&self.ems.l[0], &self.ems.s[0], &self.ems.b[0])
    }

    fn check_order(&self, s: Node<T>, t: Node<T>) -> Result<()> {
        if t.lam < s.lam {
            return Err(Error::arg("coefficient interval must satisfy λ_t ≥ λ_s"));
        }
        Ok(())
    }

    /// `A(λ_s, λ_t)`.
    pub fn coeff_a(&self, s: Node<T>, t: Node<T>) -> Result<Vec<T>> {
        self.check_order(s, t)?;
        Ok(match self.mode {
            Quadrature::Exact => {
                let h = t.lam - s.lam;
                self.constant_row().0.iter().map(|&l| (-l * h).exp()).collect()
            }
            _ => (0..self.dim())
                .map(|i| (self.l_int[s.j][i] - self.l_int[t.j][i]).exp())
                .collect(),
        })
    }

    /// `∫_{λ_s}^{λ_t} E_{λ_s}(λ) B_{λ_s}(λ) dλ`.
    pub fn coeff_int_eb(&self, s: Node<T>, t: Node<T>) -> Result<Vec<T>> {
        self.check_order(s, t)?;
        Ok(match self.mode {
            Quadrature::Exact => {
                let h = t.lam - s.lam;
                let (l, sv, b) = self.constant_row();
                (0..self.dim())
                    .map(|i| if b[i] == T::zero() { T::zero() } else { b[i] * eb_integral(l[i], sv[i], h) })
                    .collect()
            }
            _ => {
                let (js, jt) = (s.j, t.j);
                (0..self.dim())
                    .map(|i| {
                        (-self.l_int[js][i]).exp()
                            * (self.c_int[jt][i] - self.c_int[js][i]
                                - self.b_int[js][i] * (self.i_int[jt][i] - self.i_int[js][i]))
                    })
                    .collect()
            }
        })
    }

    /// `E^(0)(λ_s, λ_t)` through the cumulative `I`.
    pub fn coeff_e0(&self, s: Node<T>, t: Node<T>) -> Result<Vec<T>> {
        self.check_order(s, t)?;
        Ok(match self.mode {
            Quadrature::Exact => self.exact_ek(s, t, 0),
            _ => (0..self.dim())
                .map(|i| {
                    (-self.l_int[s.j][i] - self.s_int[s.j][i]).exp() * (self.i_int[t.j][i] - self.i_int[s.j][i])
                })
                .collect(),
        })
    }

    fn exact_ek(&self, s: Node<T>, t: Node<T>, k: usize) -> Vec<T> {
        let h = t.lam - s.lam;
        let (l, sv, _) = self.constant_row();
        (0..self.dim()).map(|i| j_integral(k, l[i] + sv[i], h)).collect()
    }

    /// Direct trapezoid sum of `E_{λ_s}(λ) (λ − λ_s)^k / k!` over the grid
    /// nodes in `[j_s, j_t]`.
    pub fn ek_direct(&self, js: usize, jt: usize, k: usize) -> Vec<T> {
        let d = self.dim();
        let grid = &self.ems.lambda_grid;
        let inv_fact = T::one() / factorial::<T>(k);
        let weight = |j: usize, i: usize| -> T {
            let expo = (self.l_int[j][i] + self.s_int[j][i]) - (self.l_int[js][i] + self.s_int[js][i]);
            expo.exp() * (grid[j] - grid[js]).powi(k as i32) * inv_fact
        };
        (0..d)
            .map(|i| {
                let mut acc = T::zero();
                for j in js..jt {
                    acc = acc + (grid[j + 1] - grid[j]) * T::lit(0.5) * (weight(j, i) + weight(j + 1, i));
                }
                acc
            })
            .collect()
    }

    /// `E^(k)(λ_s, λ_t)`, memoized in trapezoid mode.
    pub fn coeff_ek(&self, s: Node<T>, t: Node<T>, k: usize) -> Result<Arc<Vec<T>>> {
        self.check_order(s, t)?;
        Ok(match self.mode {
            Quadrature::Exact => Arc::new(self.exact_ek(s, t, k)),
            _ => self.cache.get_or_insert_with((k, s.j, t.j), || self.ek_direct(s.j, t.j, k)),
        })
    }

    /// Coefficients of `ĝ` at node `l` relative to the anchor node `a`.
    pub fn g_coefficients(&self, anchor: Node<T>, at: Node<T>) -> GCoefficients<T> {
        let sched = &self.ems.schedule;
        let alpha = sched.alpha_at(at.lam);
        let ratio = sched.sigma_at(at.lam) / alpha;
        let d = self.dim();
        let mut a = vec::zeros(d);
        let mut b = vec::zeros(d);
        let mut c = vec::zeros(d);
        match self.mode {
            Quadrature::Exact => {
                let (l, sv, bv) = self.constant_row();
                let u = at.lam - anchor.lam;
                for i in 0..d {
                    let decay = (-sv[i] * u).exp();
                    b[i] = decay * ratio;
                    a[i] = -decay * l[i] / alpha;
                    // ∫₀ᵘ e^{−s w} b dw
                    c[i] = -bv[i] * u * phi1(-sv[i] * u);
                }
            }
            _ => {
                let (ja, jl) = (anchor.j, at.j);
                for i in 0..d {
                    let decay = (-(self.s_int[jl][i] - self.s_int[ja][i])).exp();
                    b[i] = decay * ratio;
                    a[i] = -decay * self.ems.l[jl][i] / alpha;
                    c[i] = -self.s_int[ja][i].exp() * (self.b_int[jl][i] - self.b_int[ja][i]);
                }
            }
        }
        GCoefficients { a, b, c }
    }

    /// `l` at a node.
    pub fn l_at(&self, node: Node<T>) -> &[T] {
        match self.mode {
            Quadrature::Exact => &self.ems.l[0],
            _ => &self.ems.l[node.j],
        }
    }
}

/// Relative spread below which a table counts as constant.
pub const CONSTANT_TOL: f64 = 1e-10;

/// Every row equal to the first up to [`CONSTANT_TOL`] and `l_dot ≈ 0`.
/// Estimated tables of exactly Gaussian data land here up to rounding.
pub fn ems_is_constant<T: Real>(ems: &EmsTable<T>) -> bool {
    let tol = T::lit(CONSTANT_TOL);
    let same = |m: &[Vec<T>]| {
        m.iter()
            .all(|r| r.iter().zip(&m[0]).all(|(&a, &b)| (a - b).abs() <= tol * (T::one() + b.abs())))
    };
    same(&ems.l) && same(&ems.s) && same(&ems.b) && ems.l_dot.iter().flatten().all(|&v| v.abs() <= tol)
}

/// Index of the grid node nearest to `lam`; λ may lie at most half a cell
/// outside the grid.
pub fn snap<T: Real>(grid: &[T], lam: T) -> Result<usize> {
    let n = grid.len() - 1;
    let h0 = (grid[n] - grid[0]) / T::from_count(n);
    let pos = (lam - grid[0]) / h0;
    let half = T::lit(0.5);
    if !(pos >= -half - T::lit(1e-9) && pos <= T::from_count(n) + half + T::lit(1e-9)) {
        return Err(Error::Domain {
            what: "λ (EMS grid)",
            value: lam.as_f64(),
            lo: grid[0].as_f64(),
            hi: grid[n].as_f64(),
        });
    }
    let j = pos.round().max(T::zero()).to_usize().unwrap_or(0).min(n);
    Ok(j)
}
