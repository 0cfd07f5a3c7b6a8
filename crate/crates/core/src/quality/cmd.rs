use serde::{Deserialize, Serialize};

use super::QualityError;

pub const DEFAULT_CMD_ORDER: usize = 5;

/// Widening applied to a dimension whose pooled values are all equal.
pub const AUTO_BOUNDS_EPS: f64 = 1e-12;

/// Interval assumed to contain every coordinate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bounds {
    /// Per-dimension min and max over both sets pooled.
    #[default]
    Auto,
    Uniform(f64, f64),
    PerDim(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdResult {
    pub order: usize,
    /// `terms[k - 1]` is the order-`k` term.
    pub terms: Vec<f64>,
    pub total: f64,
}

fn dimension(name: &str, rows: &[Vec<f64>]) -> Result<usize, QualityError> {
    let d = rows.first().map(Vec::len).ok_or_else(|| QualityError::Empty(name.to_string()))?;
    if d == 0 {
        return Err(QualityError::Dimension(format!("{name} has zero-dimensional vectors")));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(QualityError::Dimension(format!("{name} row {i} has {} values, expected {d}", r.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(QualityError::NonFinite(name.to_string()));
    }
    Ok(d)
}

fn resolve_bounds(bounds: &Bounds, x: &[Vec<f64>], y: &[Vec<f64>], d: usize) -> Result<Vec<(f64, f64)>, QualityError> {
    let out = match bounds {
        Bounds::Auto => (0..d)
            .map(|j| {
                let (lo, hi) =
                    x.iter().chain(y).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
                if lo == hi {
                    (lo - AUTO_BOUNDS_EPS, hi + AUTO_BOUNDS_EPS)
                } else {
                    (lo, hi)
                }
            })
            .collect(),
        Bounds::Uniform(a, b) => vec![(*a, *b); d],
        Bounds::PerDim(v) => {
            if v.len() != d {
                return Err(QualityError::Dimension(format!("{} bounds for {d} dimensions", v.len())));
            }
            v.clone()
        }
    };
    if let Some(j) = out.iter().position(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b) {
        return Err(QualityError::DegenerateBounds { dim: j, lo: out[j].0, hi: out[j].1 });
    }
    Ok(out)
}

fn mean(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Per-dimension central moments of orders 2..=k_max; `out[k - 2][j]`.
fn central_moments(rows: &[Vec<f64>], mu: &[f64], k_max: usize) -> Vec<Vec<f64>> {
    let d = mu.len();
    let mut out = vec![vec![0.0; d]; k_max.saturating_sub(1)];
    for r in rows {
        for j in 0..d {
            let dev = r[j] - mu[j];
            let mut p = dev;
            for acc in out.iter_mut() {
                p *= dev;
                acc[j] += p;
            }
        }
    }
    let n = rows.len() as f64;
    out.iter_mut().flatten().for_each(|a| *a /= n);
    out
}

/// Central moment discrepancy between two sample sets.
///
/// The order-1 term is the Euclidean distance between the means and the
/// order-k term the distance between the k-th central moments, with every
/// dimension divided by `(b - a)^k` of its interval before taking the norm.
pub fn cmd(x: &[Vec<f64>], y: &[Vec<f64>], order: usize, bounds: &Bounds) -> Result<CmdResult, QualityError> {
    if order == 0 {
        return Err(QualityError::Invalid("CMD order must be at least 1".into()));
    }
    let d = dimension("X", x)?;
    let dy = dimension("Y", y)?;
    if d != dy {
        return Err(QualityError::Dimension(format!("X has dimension {d}, Y has {dy}")));
    }
    let b = resolve_bounds(bounds, x, y, d)?;
    let width: Vec<f64> = b.iter().map(|(lo, hi)| hi - lo).collect();
    let (mx, my) = (mean(x, d), mean(y, d));
    let (cx, cy) = (central_moments(x, &mx, order), central_moments(y, &my, order));

    let term = |k: usize, px: &[f64], py: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..d {
            let diff = (px[j] - py[j]) / width[j].powi(k as i32);
            s += diff * diff;
        }
        s.sqrt()
    };
    let mut terms = Vec::with_capacity(order);
    terms.push(term(1, &mx, &my));
    for k in 2..=order {
        terms.push(term(k, &cx[k - 2], &cy[k - 2]));
    }
    let total = terms.iter().sum();
    Ok(CmdResult { order, terms, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_are_zero() {
        let x = vec![vec![0.3, -1.0], vec![2.0, 0.5], vec![1.0, 1.0]];
        let r = cmd(&x, &x, 5, &Bounds::Auto).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.terms.len(), 5);
    }

    #[test]
    fn equal_means_zero_first_term() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = cmd(&x, &y, 2, &Bounds::Uniform(0.0, 1.0)).unwrap();
        assert_eq!(r.terms[0], 0.0);
        // Variances are 0.25 in each dimension for both sets.
        assert_eq!(r.terms[1], 0.0);
    }

    #[test]
    fn hand_computed_shift() {
        let x = vec![vec![0.0], vec![2.0]];
        let y = vec![vec![1.0], vec![3.0]];
        let r = cmd(&x, &y, 3, &Bounds::Uniform(0.0, 4.0)).unwrap();
        assert_eq!(r.terms, vec![0.25, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_explicit_bounds() {
        let x = vec![vec![0.0]];
        assert!(matches!(cmd(&x, &x, 2, &Bounds::Uniform(1.0, 1.0)), Err(QualityError::DegenerateBounds { .. })));
    }

    #[test]
    fn auto_bounds_tolerate_constant_dimension() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 2.0]];
        let y = vec![vec![1.0, 1.0]];
        let r = cmd(&x, &y, 2, &Bounds::Auto).unwrap();
        assert!(r.total.is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(cmd(&[vec![0.0]], &[vec![0.0, 1.0]], 1, &Bounds::Auto), Err(QualityError::Dimension(_))));
    }
}
