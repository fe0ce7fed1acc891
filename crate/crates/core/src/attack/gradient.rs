use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{AttackError, Result};
use crate::model::{BinaryLabel, ModelError, ModelStack};
use crate::pursuit::{classify, Classifier, Pipeline, Prediction, PursuitTrace};

/// Loss the attacker increases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Negative margin: `−y·f` for binary classifiers and
    /// `max_{j≠c} f_j − f_c` for multi-class ones.
    #[default]
    NegMargin,
    /// `log(1 + e^{−y·f})`, or softmax cross-entropy for multi-class.
    Logistic,
}

/// Ground truth the loss is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Binary(BinaryLabel),
    Class(usize),
}

impl Target {
    /// Whether `prediction` agrees with the target.
    pub fn matches(&self, prediction: &Prediction) -> bool {
        match (self, prediction) {
            (Self::Binary(y), Prediction::Binary { label, .. }) => y == label,
            (Self::Class(c), Prediction::Multi { class, .. }) => c == class,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineGradient {
    /// `∂loss/∂x`.
    pub grad: Array1<f64>,
    pub loss: f64,
    pub prediction: Prediction,
    /// Set when a basis-pursuit layer stopped at its iteration cap: the
    /// gradient is then exact for the returned iterate only.
    pub approximate: bool,
}

/// Loss value and its gradient with respect to the deepest code.
pub fn loss_and_grad(clf: &Classifier, code: ArrayView1<f64>, target: Target, loss: Loss) -> Result<(f64, Array1<f64>)> {
    match (clf, target) {
        (Classifier::Binary(c), Target::Binary(y)) => {
            let t = y.sign() * c.score(code);
            // dloss/dt, where t = y·f
            let (value, slope) = match loss {
                Loss::NegMargin => (-t, -1.0),
                Loss::Logistic => (softplus(-t), -sigmoid(-t)),
            };
            Ok((value, c.weights().mapv(|w| slope * y.sign() * w)))
        }
        (Classifier::Multi(c), Target::Class(label)) => {
            if label >= c.num_classes() {
                return Err(AttackError::InvalidSpec(format!(
                    "class {label} out of range for {} classes",
                    c.num_classes()
                )));
            }
            let scores = c.scores(code);
            let dscores = match loss {
                Loss::NegMargin => {
                    let rival = (0..scores.len())
                        .filter(|&j| j != label)
                        .fold(None, |best: Option<usize>, j| match best {
                            Some(b) if scores[b] >= scores[j] => Some(b),
                            _ => Some(j),
                        })
                        .ok_or_else(|| AttackError::InvalidSpec("multi-class loss needs two classes".into()))?;
                    let mut d = Array1::zeros(scores.len());
                    d[rival] = 1.0;
                    d[label] = -1.0;
                    (scores[rival] - scores[label], d)
                }
                Loss::Logistic => {
                    let top = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
                    let exp = scores.mapv(|s| (s - top).exp());
                    let total = exp.sum();
                    let mut d = exp / total;
                    let value = top + total.ln() - scores[label];
                    d[label] -= 1.0;
                    (value, d)
                }
            };
            let (value, d) = dscores;
            Ok((value, c.weights().dot(&d)))
        }
        _ => Err(AttackError::InvalidSpec("target kind does not match the classifier".into())),
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Runs `pipeline` on `x` with recording on and backpropagates the loss of
/// `clf` against `target` down to the input signal.
pub fn pipeline_gradient(
    x: ArrayView1<f64>,
    stack: &ModelStack,
    pipeline: &Pipeline,
    clf: &Classifier,
    target: Target,
    loss: Loss,
) -> Result<PipelineGradient> {
    let trace = pipeline.run_recorded(x, stack)?;
    let prediction = classify(&trace, clf)?;
    let (value, grad_code) = loss_and_grad(clf, trace.deepest().values(), target, loss)?;
    let grad = backprop(&trace, stack, grad_code)?;
    Ok(PipelineGradient { grad, loss: value, prediction, approximate: !trace.converged() })
}

fn backprop(trace: &PursuitTrace, stack: &ModelStack, grad_code: Array1<f64>) -> Result<Array1<f64>> {
    let mut grad = grad_code;
    for (layer, d) in trace.layers.iter().zip(stack.layers()).rev() {
        let tape = layer.tape.as_ref().ok_or(ModelError::Empty("layer tape"))?;
        grad = tape.backward(d, grad.view());
    }
    Ok(grad)
}
