//! Ranking utilities and Spearman rank correlation for the evaluation protocol.

use serde::Serialize;

use crate::error::{Error, Result};

/// Which direction of an estimator's raw score indicates a better architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

/// One cell of the rank-correlation evaluation grid.
#[derive(Debug, Clone, Serialize)]
pub struct RankCorrelationReport {
    pub estimator_name: String,
    pub budget_t: usize,
    pub rho: f64,
    pub n: usize,
    pub mean_over_seeds: bool,
}

impl RankCorrelationReport {
    /// CSV row in the stable `estimator,T,rho,n` order.
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.estimator_name, self.budget_t, self.rho, self.n)
    }
}

/// 1-based ranks with ties assigned the average of the ranks they span.
pub fn ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("ranks of empty sequence"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ranks input".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());

    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold equal values; they share the average rank
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    Ok(out)
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("need at least 2 points"));
    }
    let rx = ranks(x)?;
    let ry = ranks(y)?;
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("constant sequence has undefined correlation"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean final test accuracy of the k best-scoring members of a population.
/// Ties on score are broken by lexicographic arch_id.
pub fn topk_mean_final_acc(
    population: &[(String, f64, f64)], // (arch_id, score, final_test_acc)
    k: usize,
    orientation: Orientation,
) -> Result<f64> {
    if k == 0 || k > population.len() {
        return Err(Error::invalid(format!(
            "k={k} out of range [1, {}]",
            population.len()
        )));
    }
    let mut sorted: Vec<&(String, f64, f64)> = population.iter().collect();
    sorted.sort_by(|a, b| {
        let ord = match orientation {
            Orientation::LowerIsBetter => a.1.partial_cmp(&b.1).unwrap(),
            Orientation::HigherIsBetter => b.1.partial_cmp(&a.1).unwrap(),
        };
        ord.then_with(|| a.0.cmp(&b.0))
    });
    Ok(sorted[..k].iter().map(|r| r.2).sum::<f64>() / k as f64)
}

/// Mean and standard error (sample sd / sqrt(n); 0 when n = 1).
pub fn aggregate(runs: &[f64]) -> Result<(f64, f64)> {
    if runs.is_empty() {
        return Err(Error::invalid("aggregate of empty sequence"));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    if runs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = runs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt() / n.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_distinct_ties_singleton() {
        assert_eq!(ranks(&[10.0, 30.0, 20.0]).unwrap(), vec![1.0, 3.0, 2.0]);
        assert_eq!(ranks(&[5.0, 5.0, 1.0]).unwrap(), vec![2.5, 2.5, 1.0]);
        assert_eq!(ranks(&[7.0]).unwrap(), vec![1.0]);
        assert!(ranks(&[f64::NAN]).is_err());
    }

    #[test]
    fn spearman_monotone_orderings() {
        let x = [1.0, 2.0, 3.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[30.0, 20.0, 10.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn topk_selection() {
        let pop = vec![
            ("a".to_string(), 1.0, 0.9),
            ("b".to_string(), 2.0, 0.8),
            ("c".to_string(), 3.0, 0.7),
        ];
        assert_eq!(
            topk_mean_final_acc(&pop, 1, Orientation::LowerIsBetter).unwrap(),
            0.9
        );
        let all = topk_mean_final_acc(&pop, 3, Orientation::LowerIsBetter).unwrap();
        assert!((all - 0.8).abs() < 1e-15);
        assert!(topk_mean_final_acc(&pop, 4, Orientation::LowerIsBetter).is_err());
    }

    #[test]
    fn topk_tie_break_is_lexicographic() {
        let pop = vec![
            ("b".to_string(), 1.0, 0.5),
            ("a".to_string(), 1.0, 0.9),
        ];
        assert_eq!(
            topk_mean_final_acc(&pop, 1, Orientation::LowerIsBetter).unwrap(),
            0.9
        );
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[2.0, 2.0, 2.0]).unwrap(), (2.0, 0.0));
        let (m, se) = aggregate(&[0.0, 2.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        assert!((se - 1.0).abs() < 1e-15);
        assert_eq!(aggregate(&[5.0]).unwrap(), (5.0, 0.0));
        assert!(aggregate(&[]).is_err());
    }

    // Independent oracle: two-pass mean/sd.
    #[test]
    fn aggregate_matches_two_pass_oracle() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut vals = Vec::new();
        for _ in 0..20 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            vals.push((state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0);
        }
        let mean_o = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd_o = (vals.iter().map(|v| (v - mean_o).powi(2)).sum::<f64>()
            / (vals.len() - 1) as f64)
            .sqrt();
        let (m, se) = aggregate(&vals).unwrap();
        assert!((m - mean_o).abs() < 1e-12);
        assert!((se - sd_o / (vals.len() as f64).sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ranks_sum_to_triangular_number(values in proptest::collection::vec(-50i32..50, 1..40)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let n = values.len();
            let sum: f64 = ranks(&values).unwrap().iter().sum();
            prop_assert!((sum - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
        }

        #[test]
        fn spearman_symmetric_and_transform_invariant(
            x in proptest::collection::vec(-10.0f64..10.0, 3..12),
            y in proptest::collection::vec(-10.0f64..10.0, 3..12),
        ) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            if let (Ok(a), Ok(b)) = (spearman(x, y), spearman(y, x)) {
                prop_assert!((a - b).abs() < 1e-12);
                // strictly increasing transforms preserve ranks
                let ex: Vec<f64> = x.iter().map(|v| (v / 4.0).exp()).collect();
                let ay: Vec<f64> = y.iter().map(|v| 3.0 * v + 7.0).collect();
                prop_assert!((spearman(&ex, &ay).unwrap() - a).abs() < 1e-12);
            }
        }
    }
}
