//! Edge-level precision, recall and F-score against a gold taxonomy.
//!
//! An edge counts as correct only on an exact directed (hyponym, hypernym)
//! match after canonicalization. Values are percentages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terminology::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub n_predicted: usize,
    pub n_gold: usize,
    pub n_correct: usize,
}

impl EdgeMetrics {
    pub fn from_counts(n_predicted: usize, n_gold: usize, n_correct: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        EdgeMetrics {
            precision: ratio(n_correct, n_predicted),
            recall: ratio(n_correct, n_gold),
            // 2PR / (P + R) reduces to 2c / (|pred| + |gold|).
            f_score: ratio(2 * n_correct, n_predicted + n_gold),
            n_predicted,
            n_gold,
            n_correct,
        }
    }

    /// Harmonic mean of this row's precision and recall. Differs from
    /// `f_score` on averaged rows.
    pub fn f_of_precision_recall(&self) -> f64 {
        harmonic_mean(self.precision, self.recall)
    }
}

impl fmt::Display for EdgeMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.1} R={:.1} F={:.1}",
            self.precision, self.recall, self.f_score
        )
    }
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn evaluate(predicted: &Taxonomy, gold: &Taxonomy) -> Result<EdgeMetrics> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    Ok(EdgeMetrics::from_counts(
        predicted.edge_count(),
        gold.edge_count(),
        predicted.intersection_count(gold),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyStats {
    pub vertices: usize,
    pub edges: usize,
}

pub fn stats(taxonomy: &Taxonomy) -> TaxonomyStats {
    TaxonomyStats {
        vertices: taxonomy.vertices().len(),
        edges: taxonomy.edge_count(),
    }
}

/// Unweighted mean of P, R and F across rows; counts are summed.
pub fn average_metrics(rows: &[EdgeMetrics]) -> Result<EdgeMetrics> {
    if rows.is_empty() {
        return Err(Error::NothingToAverage);
    }
    if let [single] = rows {
        return Ok(*single);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&EdgeMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EdgeMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f_score: mean(|m| m.f_score),
        n_predicted: rows.iter().map(|m| m.n_predicted).sum(),
        n_gold: rows.iter().map(|m| m.n_gold).sum(),
        n_correct: rows.iter().map(|m| m.n_correct).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminology::{TaxonomyEdge, Term};
    use proptest::prelude::*;

    fn tax(pairs: &[(&str, &str)]) -> Taxonomy {
        pairs
            .iter()
            .map(|(a, b)| TaxonomyEdge::new(Term::new(a).unwrap(), Term::new(b).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn identity_is_perfect() {
        let gold = tax(&[("trout", "fish"), ("fish", "animal")]);
        let m = evaluate(&gold, &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (100.0, 100.0, 100.0));
    }

    #[test]
    fn half_overlap() {
        let m = evaluate(&tax(&[("a", "b"), ("c", "d")]), &tax(&[("a", "b"), ("c", "e")])).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (50.0, 50.0, 50.0));
        assert_eq!(m.n_correct, 1);
    }

    #[test]
    fn direction_matters() {
        let m = evaluate(&tax(&[("b", "a")]), &tax(&[("a", "b")])).unwrap();
        assert_eq!(m.n_correct, 0);
        assert_eq!(m.f_score, 0.0);
    }

    #[test]
    fn empty_prediction_and_gold() {
        let m = evaluate(&Taxonomy::new(), &tax(&[("a", "b")])).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (0.0, 0.0, 0.0));
        assert!(matches!(evaluate(&tax(&[("a", "b")]), &Taxonomy::new()), Err(Error::EmptyGold)));
    }

    #[test]
    fn stats_counts() {
        assert_eq!(stats(&Taxonomy::new()), TaxonomyStats { vertices: 0, edges: 0 });
        let s = stats(&tax(&[("trout", "fish"), ("fish", "animal")]));
        assert_eq!((s.vertices, s.edges), (3, 2));
    }

    #[test]
    fn averaging() {
        let a = EdgeMetrics::from_counts(10, 10, 3);
        assert_eq!(average_metrics(&[a]).unwrap(), a);
        let b = EdgeMetrics::from_counts(10, 10, 5);
        let avg = average_metrics(&[a, b]).unwrap();
        assert!((avg.f_score - 40.0).abs() < 1e-12);
        assert_eq!(avg.n_correct, 8);
        assert!(average_metrics(&[]).is_err());

        let skewed = average_metrics(&[
            EdgeMetrics::from_counts(10, 20, 10),
            EdgeMetrics::from_counts(20, 10, 2),
        ])
        .unwrap();
        assert!((skewed.f_of_precision_recall() - skewed.f_score).abs() > 1e-6);
    }

    fn small_taxonomy() -> impl Strategy<Value = Taxonomy> {
        prop::collection::vec((0u8..5, 0u8..5), 1..12).prop_map(|pairs| {
            pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| {
                    TaxonomyEdge::new(
                        Term::new(&format!("t{a}")).unwrap(),
                        Term::new(&format!("t{b}")).unwrap(),
                    )
                    .unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn f_between_p_and_r(pred in small_taxonomy(), gold in small_taxonomy()) {
            prop_assume!(!gold.is_empty());
            let m = evaluate(&pred, &gold).unwrap();
            prop_assert!(m.f_score >= 0.0 && m.f_score <= 100.0);
            if m.precision > 0.0 && m.recall > 0.0 {
                let lo = m.precision.min(m.recall) - 1e-9;
                let hi = m.precision.max(m.recall) + 1e-9;
                prop_assert!(lo <= m.f_score && m.f_score <= hi);
            }
            prop_assert_eq!(pred.intersection_count(&gold), gold.intersection_count(&pred));
        }

        #[test]
        fn adding_gold_edge_never_lowers_recall(pred in small_taxonomy(), gold in small_taxonomy()) {
            prop_assume!(!gold.is_empty());
            let before = evaluate(&pred, &gold).unwrap();
            let mut grown = pred.clone();
            grown.insert(gold.edges().next().unwrap().clone());
            let after = evaluate(&grown, &gold).unwrap();
            prop_assert!(after.recall >= before.recall);
        }
    }
}
