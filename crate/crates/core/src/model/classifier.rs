use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{ModelError, Result, SparseCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    /// `sign(score)`, with an exact zero resolved to `Positive`.
    pub fn from_score(score: f64) -> Self {
        if score < 0.0 {
            Self::Negative
        } else {
            Self::Positive
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Self::Positive => Self::Negative,
            Self::Negative => Self::Positive,
        }
    }
}

/// Linear discriminant `f(Γ) = wᵀΓ + ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    weights: Array1<f64>,
    bias: f64,
}

impl LinearClassifier {
    pub fn new(weights: Array1<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(ModelError::Empty("classifier weights"));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(ModelError::InvalidParameter("classifier has non-finite parameters".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.dot(&self.weights).sqrt()
    }

    pub fn score(&self, code: ArrayView1<f64>) -> f64 {
        self.weights.dot(&code) + self.bias
    }

    pub fn predict(&self, code: ArrayView1<f64>) -> BinaryLabel {
        BinaryLabel::from_score(self.score(code))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(ModelError::DimensionMismatch {
                context: "code length vs classifier weights",
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

/// `O_B = y (wᵀΓ + ω)`
pub fn binary_margin(code: &SparseCode, clf: &LinearClassifier, label: BinaryLabel) -> Result<f64> {
    clf.check(code.len())?;
    Ok(label.sign() * clf.score(code.values()))
}

/// `O*`: the smallest margin of a collection, `None` when it is empty.
pub fn dataset_margin<I: IntoIterator<Item = f64>>(margins: I) -> Option<f64> {
    margins.into_iter().reduce(f64::min)
}

/// `L` linear scorers stored as the columns of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiClassifier {
    weights: Array2<f64>,
    biases: Array1<f64>,
}

impl MultiClassifier {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>) -> Result<Self> {
        if weights.ncols() < 2 {
            return Err(ModelError::InvalidParameter(format!(
                "a multi-class classifier needs at least 2 classes, got {}",
                weights.ncols()
            )));
        }
        if weights.nrows() == 0 {
            return Err(ModelError::Empty("classifier weights"));
        }
        if biases.len() != weights.ncols() {
            return Err(ModelError::DimensionMismatch {
                context: "biases vs classes",
                expected: weights.ncols(),
                found: biases.len(),
            });
        }
        Ok(Self { weights, biases })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> ArrayView1<'_, f64> {
        self.biases.view()
    }

    pub fn scores(&self, code: ArrayView1<f64>) -> Array1<f64> {
        self.weights.t().dot(&code) + &self.biases
    }

    /// Argmax of the scores; ties go to the lowest class index.
    pub fn predict(&self, code: ArrayView1<f64>) -> usize {
        argmax(self.scores(code).view())
    }

    /// `φ(W) = max_{u≠v} ‖w_u − w_v‖₂`
    pub fn phi(&self) -> f64 {
        let cols: Vec<_> = self.weights.axis_iter(Axis(1)).collect();
        let mut best: f64 = 0.0;
        for u in 0..cols.len() {
            for v in (u + 1)..cols.len() {
                let diff = &cols[u] - &cols[v];
                best = best.max(diff.dot(&diff).sqrt());
            }
        }
        best
    }
}

pub(crate) fn argmax(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// `O_M = min_{v≠u} f_u(Γ) − f_v(Γ)` for the label `u`.
pub fn multiclass_margin(code: &SparseCode, clf: &MultiClassifier, label: usize) -> Result<f64> {
    if code.len() != clf.dim() {
        return Err(ModelError::DimensionMismatch {
            context: "code length vs classifier weights",
            expected: clf.dim(),
            found: code.len(),
        });
    }
    if label >= clf.num_classes() {
        return Err(ModelError::InvalidParameter(format!("class {label} out of range")));
    }
    let s = clf.scores(code.values());
    Ok((0..s.len())
        .filter(|&v| v != label)
        .map(|v| s[label] - s[v])
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binary_margin_examples() {
        let clf = LinearClassifier::new(array![1.0, -1.0], 0.0).unwrap();
        let g = SparseCode::from_dense(array![2.0, 0.5]);
        let pos = binary_margin(&g, &clf, BinaryLabel::Positive).unwrap();
        let neg = binary_margin(&g, &clf, BinaryLabel::Negative).unwrap();
        assert_eq!(pos, 1.5);
        assert_eq!(neg, -1.5);
        assert_eq!(dataset_margin([pos, neg]), Some(-1.5));
        assert_eq!(dataset_margin(Vec::<f64>::new()), None);
    }

    #[test]
    fn binary_margin_dimension_check() {
        let clf = LinearClassifier::new(array![1.0, -1.0], 0.0).unwrap();
        assert!(binary_margin(&SparseCode::zeros(3), &clf, BinaryLabel::Positive).is_err());
    }

    #[test]
    fn zero_score_is_positive() {
        assert_eq!(BinaryLabel::from_score(0.0), BinaryLabel::Positive);
        assert_eq!(BinaryLabel::from_score(-0.0), BinaryLabel::Positive);
        assert_eq!(BinaryLabel::from_score(-1e-300), BinaryLabel::Negative);
    }

    #[test]
    fn phi_of_antipodal_columns() {
        let w = array![[1.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        let m = MultiClassifier::new(w, array![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.phi(), 2.0);
    }

    #[test]
    fn phi_binary_reduction() {
        let w = array![3.0, -4.0];
        let half = &w * 0.5;
        let cols = ndarray::stack(Axis(1), &[half.view(), (-&half).view()]).unwrap();
        let m = MultiClassifier::new(cols, array![0.0, 0.0]).unwrap();
        assert_eq!(m.phi(), 5.0);
    }

    #[test]
    fn multiclass_margin_matches_score_table() {
        let w = array![[1.0, 0.0, -1.0], [0.0, 1.0, 0.0]];
        let m = MultiClassifier::new(w, array![0.0, 0.2, 0.0]).unwrap();
        let g = SparseCode::from_dense(array![1.0, 0.0]);
        // score table: f = (1.0, 0.2, -1.0)
        let table = [1.0, 0.2, -1.0];
        let predicted = m.predict(g.values());
        assert_eq!(predicted, 0);
        for u in 0..3 {
            let oracle = (0..3).filter(|&v| v != u).map(|v| table[u] - table[v]).fold(f64::INFINITY, f64::min);
            assert!((multiclass_margin(&g, &m, u).unwrap() - oracle).abs() < 1e-15);
        }
        assert!((multiclass_margin(&g, &m, 0).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn multiclass_needs_two_classes() {
        assert!(MultiClassifier::new(array![[1.0], [0.0]], array![0.0]).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let m = MultiClassifier::new(array![[1.0, 1.0, 0.0]], array![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.predict(array![1.0].view()), 0);
    }
}
