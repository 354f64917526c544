//! Inter-annotator agreement: Spearman rank correlation (conversation-level
//! scores) and Krippendorff's alpha with nominal distance (utterance-level
//! labels).

use super::MetricError;
use std::collections::BTreeMap;

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(MetricError::Precondition(format!(
            "spearman needs two equal-length non-empty vectors, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| v.is_nan()) {
        return Err(MetricError::Precondition("spearman input contains NaN".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("no NaN"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined(
            "zero variance in at least one rank vector".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Items x raters nominal ratings with absent cells allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingsMatrix {
    items: usize,
    raters: usize,
    cells: Vec<Option<String>>,
}

impl RatingsMatrix {
    pub fn new(items: usize, raters: usize) -> Result<Self, MetricError> {
        if raters < 2 {
            return Err(MetricError::Precondition(format!(
                "ratings matrix needs >= 2 raters, got {raters}"
            )));
        }
        Ok(Self {
            items,
            raters,
            cells: vec![None; items * raters],
        })
    }

    pub fn set(&mut self, item: usize, rater: usize, label: impl Into<String>) {
        assert!(item < self.items && rater < self.raters, "cell out of range");
        self.cells[item * self.raters + rater] = Some(label.into());
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn raters(&self) -> usize {
        self.raters
    }

    /// Ratings present for one item.
    pub fn item_ratings(&self, item: usize) -> Vec<&str> {
        self.cells[item * self.raters..(item + 1) * self.raters]
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }
}

/// Krippendorff's alpha with nominal distance, via the coincidence matrix.
/// Items with fewer than two ratings are unpairable and excluded; at least
/// one pairable item is required. A matrix with zero observed and zero
/// expected disagreement (every rating identical) is perfect agreement.
pub fn krippendorff_alpha(matrix: &RatingsMatrix) -> Result<f64, MetricError> {
    let mut coincidence: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut pairable_items = 0usize;

    for item in 0..matrix.items() {
        let ratings = matrix.item_ratings(item);
        let m = ratings.len();
        if m < 2 {
            continue;
        }
        pairable_items += 1;
        let weight = 1.0 / (m as f64 - 1.0);
        for (i, a) in ratings.iter().enumerate() {
            for (j, b) in ratings.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a.to_string(), b.to_string())).or_insert(0.0) += weight;
                }
            }
        }
    }
    if pairable_items == 0 {
        return Err(MetricError::Precondition(
            "no item carries two or more ratings".into(),
        ));
    }

    let mut label_totals: BTreeMap<String, f64> = BTreeMap::new();
    for ((a, _), value) in &coincidence {
        *label_totals.entry(a.clone()).or_insert(0.0) += value;
    }
    let n: f64 = label_totals.values().sum();

    let observed_disagreement: f64 = coincidence
        .iter()
        .filter(|((a, b), _)| a != b)
        .map(|(_, v)| v)
        .sum::<f64>()
        / n;

    let mut expected_disagreement = 0.0;
    for (a, na) in &label_totals {
        for (b, nb) in &label_totals {
            if a != b {
                expected_disagreement += na * nb;
            }
        }
    }
    expected_disagreement /= n * (n - 1.0);

    if expected_disagreement == 0.0 {
        // every pairable rating is the same label
        return Ok(if observed_disagreement == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - observed_disagreement / expected_disagreement)
}
