use rand::Rng;
use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::rng::{tags, SeededRng};

/// How pairs are chosen for the average pairwise similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ApsMode {
    #[default]
    AllPairs,
    /// `pairs` uniformly drawn unordered pairs of distinct rows.
    Sampled { pairs: usize, seed: u64 },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_norms(ids: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>, QualityError> {
    if rows.len() < 2 {
        return Err(QualityError::Invalid(format!("need at least 2 vectors, got {}", rows.len())));
    }
    let d = rows[0].len();
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let id = || ids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        if r.len() != d {
            return Err(QualityError::Dimension(format!("vector {} has {} values, expected {d}", id(), r.len())));
        }
        let n = dot(r, r);
        if !n.is_finite() {
            return Err(QualityError::NonFinite(id()));
        }
        if n == 0.0 {
            return Err(QualityError::ZeroVector(id()));
        }
        out.push(n);
    }
    Ok(out)
}

fn cosine(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    (dot(a, b) / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// Mean cosine similarity over unordered pairs of distinct rows. `ids`
/// name rows in errors and may be empty.
pub fn avg_pairwise_similarity(ids: &[String], rows: &[Vec<f64>], mode: ApsMode) -> Result<f64, QualityError> {
    let norms = squared_norms(ids, rows)?;
    let n = rows.len();
    match mode {
        ApsMode::AllPairs => {
            let row_sum = |i: usize| -> f64 { (i + 1..n).map(|j| cosine(&rows[i], &rows[j], norms[i], norms[j])).sum() };
            let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
            let mut per_row = vec![0.0; n];
            std::thread::scope(|s| {
                for (w, chunk) in per_row.chunks_mut(n.div_ceil(workers)).enumerate() {
                    let base = w * n.div_ceil(workers);
                    let row_sum = &row_sum;
                    s.spawn(move || {
                        for (k, slot) in chunk.iter_mut().enumerate() {
                            *slot = row_sum(base + k);
                        }
                    });
                }
            });
            let pairs = (n * (n - 1) / 2) as f64;
            Ok(per_row.iter().sum::<f64>() / pairs)
        }
        ApsMode::Sampled { pairs, seed } => {
            if pairs == 0 {
                return Err(QualityError::Invalid("sampled APS needs at least one pair".into()));
            }
            let mut rng = SeededRng::new(seed).substream(&[tags::APS_SAMPLING]);
            let mut s = 0.0;
            for _ in 0..pairs {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                s += cosine(&rows[i], &rows[j], norms[i], norms[j]);
            }
            Ok(s / pairs as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_are_one() {
        let rows = vec![vec![0.1, 0.2, 0.3]; 7];
        assert_eq!(avg_pairwise_similarity(&[], &rows, ApsMode::AllPairs).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_pair_is_zero() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(avg_pairwise_similarity(&[], &rows, ApsMode::AllPairs).unwrap(), 0.0);
    }

    #[test]
    fn opposite_pair_is_minus_one() {
        let rows = vec![vec![1.0, 1.0], vec![-3.0, -3.0]];
        assert_eq!(avg_pairwise_similarity(&[], &rows, ApsMode::AllPairs).unwrap(), -1.0);
    }

    #[test]
    fn zero_vector_named() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![1.0], vec![0.0]];
        match avg_pairwise_similarity(&ids, &rows, ApsMode::AllPairs) {
            Err(QualityError::ZeroVector(id)) => assert_eq!(id, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sampled_close_to_exact() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0 + (i % 7) as f64, (i % 5) as f64, 0.5]).collect();
        let exact = avg_pairwise_similarity(&[], &rows, ApsMode::AllPairs).unwrap();
        let sampled = avg_pairwise_similarity(&[], &rows, ApsMode::Sampled { pairs: 20_000, seed: 1 }).unwrap();
        assert!((exact - sampled).abs() < 0.02, "{exact} vs {sampled}");
        let again = avg_pairwise_similarity(&[], &rows, ApsMode::Sampled { pairs: 20_000, seed: 1 }).unwrap();
        assert_eq!(sampled, again);
    }
}
