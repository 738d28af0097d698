//! Finite-difference estimates of `ĝ^(k)/k!` at an anchor from values at
//! nearby λ.

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest supported number of extra points.
pub const MAX_EXTRAS: usize = 3;

fn check_deltas<T: Real>(deltas: &[T]) -> Result<()> {
    if deltas.len() > MAX_EXTRAS {
        return Err(Error::arg(format!("at most {MAX_EXTRAS} extra points are supported")));
    }
    let scale = deltas.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = T::epsilon() * T::lit(16.0) * scale;
    for (i, &d) in deltas.iter().enumerate() {
        if d.abs() <= tol {
            return Err(Error::Singular(format!("δ_{} coincides with the anchor", i + 1)));
        }
        for &e in &deltas[..i] {
            if (d - e).abs() <= tol {
                return Err(Error::Singular("repeated δ".into()));
            }
        }
    }
    Ok(())
}

/// Solves `Σ_k δ_p^k u_k = g_p − g_s` (p, k = 1..n) for `u_k = ĝ^(k)/k!`, all
/// coordinates at once, by Gaussian elimination with partial pivoting.
pub fn estimate_derivatives<T: Real>(deltas: &[T], g_diffs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = deltas.len();
    if g_diffs.len() != n {
        return Err(Error::arg("one g difference per δ is required"));
    }
    check_deltas(deltas)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = g_diffs[0].len();
    let mut m: Vec<Vec<T>> = deltas
        .iter()
        .map(|&dl| (1..=n).map(|k| dl.powi(k as i32)).collect())
        .collect();
    let mut rhs: Vec<Vec<T>> = g_diffs.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(col);
        if m[piv][col] == T::zero() {
            return Err(Error::Singular("zero pivot".into()));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = m[col][k];
                m[row][k] = m[row][k] - f * v;
            }
            for i in 0..d {
                let v = rhs[col][i];
                rhs[row][i] = rhs[row][i] - f * v;
            }
        }
    }
    let mut out = vec![vec![T::zero(); d]; n];
    for row in (0..n).rev() {
        for i in 0..d {
            let mut acc = rhs[row][i];
            for k in row + 1..n {
                acc = acc - m[row][k] * out[k][i];
            }
            out[row][i] = acc / m[row][row];
        }
    }
    Ok(out)
}

/// Pseudo-order estimate: `ĝ^(k)/k!` from the first `k` extra points only,
/// via the divided-difference recurrence on nodes `δ_0 = 0, δ_1, …, δ_n`.
///
/// `g_values[0]` is the anchor value; `g_values[p]` belongs to `deltas[p−1]`.
pub fn estimate_derivatives_pseudo<T: Real>(deltas: &[T], g_values: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = deltas.len();
    if g_values.len() != n + 1 {
        return Err(Error::arg("pseudo estimate needs n + 1 values"));
    }
    check_deltas(deltas)?;
    let nodes: Vec<T> = std::iter::once(T::zero()).chain(deltas.iter().copied()).collect();
    let mut table: Vec<Vec<T>> = g_values.to_vec();
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let next: Vec<Vec<T>> = (0..=n - k)
            .map(|l| {
                let den = nodes[l + k] - nodes[l];
                table[l + 1].iter().zip(&table[l]).map(|(&a, &b)| (a - b) / den).collect()
            })
            .collect();
        out.push(next[0].clone());
        table = next;
    }
    Ok(out)
}
