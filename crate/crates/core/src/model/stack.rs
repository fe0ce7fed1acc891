use ndarray::Array1;
use serde::Serialize;

use super::{stripe_l0inf, Dictionary, ModelError, Result, SparseCode};

/// An ordered chain of dictionaries `D_1 … D_K` with per-layer `ℓ₀,∞`
/// budgets. Layer `i` maps codes of length `cols(D_i)` to signals of length
/// `rows(D_i)`, and `Γ_{i−1} = D_i Γ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStack {
    layers: Vec<Dictionary>,
    lambda: Vec<usize>,
}

impl ModelStack {
    pub fn new(layers: Vec<Dictionary>, lambda: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(ModelError::Empty("model stack"));
        }
        if lambda.len() != layers.len() {
            return Err(ModelError::DimensionMismatch {
                context: "sparsity budgets vs layers",
                expected: layers.len(),
                found: lambda.len(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(ModelError::DimensionMismatch {
                    context: "adjacent layer dimensions",
                    expected: pair[0].cols(),
                    found: pair[1].rows(),
                });
            }
        }
        Ok(Self { layers, lambda })
    }

    /// Single-layer stack with an unconstrained budget.
    pub fn single(d: Dictionary) -> Self {
        let budget = d.cols();
        Self {
            layers: vec![d],
            lambda: vec![budget],
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dictionary] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Dictionary {
        &self.layers[i]
    }

    pub fn lambda(&self) -> &[usize] {
        &self.lambda
    }

    pub fn signal_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn code_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BudgetViolation {
    /// 1-based layer index.
    pub layer: usize,
    pub stripe_norm: usize,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub signal: Array1<f64>,
    /// `Γ_1 … Γ_K`; entry `i` is the code of layer `i + 1`, the last one being
    /// the deepest code that was passed in.
    pub codes: Vec<SparseCode>,
    pub violations: Vec<BudgetViolation>,
}

impl Synthesis {
    pub fn within_budget(&self) -> bool {
        self.violations.is_empty()
    }

    /// Intermediate codes `Γ_1 … Γ_{K−1}`.
    pub fn intermediates(&self) -> &[SparseCode] {
        &self.codes[..self.codes.len() - 1]
    }
}

/// `X = D_1 D_2 ⋯ D_K Γ_K`, keeping every intermediate code and checking each
/// `‖Γ_i‖₀,∞` against its budget.
pub fn synthesize(stack: &ModelStack, deepest: &SparseCode) -> Result<Synthesis> {
    if deepest.len() != stack.code_dim() {
        return Err(ModelError::DimensionMismatch {
            context: "deepest code length",
            expected: stack.code_dim(),
            found: deepest.len(),
        });
    }
    let k = stack.depth();
    let mut codes = vec![deepest.clone()];
    for i in (1..k).rev() {
        let next = stack.layer(i).synthesis(codes[0].values());
        codes.insert(0, SparseCode::from_dense(next));
    }
    let signal = stack.layer(0).synthesis(codes[0].values());
    let mut violations = Vec::new();
    for (i, (code, d)) in codes.iter().zip(stack.layers()).enumerate() {
        let norm = stripe_l0inf(code, d)?;
        if norm > stack.lambda()[i] {
            violations.push(BudgetViolation {
                layer: i + 1,
                stripe_norm: norm,
                budget: stack.lambda()[i],
            });
        }
    }
    Ok(Synthesis {
        signal,
        codes,
        violations,
    })
}
