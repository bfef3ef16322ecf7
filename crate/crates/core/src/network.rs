//! Feedforward ReLU networks, their JSON formats and canonical properties.
//!
//! A model is a chain of affine layers with an elementwise ReLU between
//! consecutive layers and no activation after the last one. A property asks
//! that every row of `C . f(x) - t` is non-negative on an input box;
//! canonicalization folds `(C, t)` into the last affine layer so the
//! verification target becomes "every output >= 0".

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::BoxDomain;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::InvalidModel(format!(
                "bias has {} entries but weights have {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidModel(
                "layer has an empty weight matrix".into(),
            ));
        }
        if !weights.all_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.mul_vec(x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    layers: Vec<AffineLayer>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    layers: Vec<AffineLayer>,
}

impl NetworkModel {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidModel(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| AffineLayer::new(l.weights, l.bias))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&ModelFile {
            layers: self.layers.clone(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths of the ReLU layers, i.e. the outputs of every layer but the last.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(AffineLayer::out_dim)
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h
    }

    /// Pre-activation values of every layer (the last entry is the output).
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim(self.input_dim(), x.len())?;
        let mut out = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.apply(&h);
            h = z.iter().map(|v| v.max(0.0)).collect();
            out.push(z);
        }
        Ok(out)
    }

    /// Keeps only the listed rows of the output layer.
    pub fn select_outputs(&self, rows: &[usize]) -> Self {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("non-empty");
        let weights =
            Matrix::from_rows(rows.iter().map(|&r| last.weights.row(r).to_vec()).collect())
                .expect("rows share a width");
        let bias = rows.iter().map(|&r| last.bias[r]).collect();
        *last = AffineLayer { weights, bias };
        Self { layers }
    }
}

pub fn load_model<R: Read>(mut source: R) -> Result<NetworkModel> {
    let mut s = String::new();
    source
        .read_to_string(&mut s)
        .map_err(|e| Error::Parse(e.to_string()))?;
    NetworkModel::from_json_str(&s)
}

/// Conjunctive output specification: `C_k . y - t_k >= 0` for every row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySpec {
    pub input_box: BoxDomain,
    pub spec_rows: Matrix,
    pub thresholds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PropertyFile {
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    spec_matrix: Vec<Vec<f64>>,
    threshold: Vec<f64>,
}

impl PropertySpec {
    pub fn new(input_box: BoxDomain, spec_rows: Matrix, thresholds: Vec<f64>) -> Result<Self> {
        if spec_rows.rows() == 0 {
            return Err(Error::InvalidProperty(
                "specification needs at least one row".into(),
            ));
        }
        if spec_rows.rows() != thresholds.len() {
            return Err(Error::InvalidProperty(format!(
                "{} specification rows but {} thresholds",
                spec_rows.rows(),
                thresholds.len()
            )));
        }
        if input_box.is_empty() {
            return Err(Error::InvalidProperty("input box is empty".into()));
        }
        if !spec_rows.all_finite() || thresholds.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProperty(
                "non-finite specification entry".into(),
            ));
        }
        Ok(Self {
            input_box,
            spec_rows,
            thresholds,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: PropertyFile =
            serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let input_box = BoxDomain::new(file.input_lower, file.input_upper)
            .map_err(|e| Error::InvalidProperty(e.to_string()))?;
        let spec_rows = Matrix::from_rows(file.spec_matrix)?;
        Self::new(input_box, spec_rows, file.threshold)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&PropertyFile {
            input_lower: self.input_box.lower().to_vec(),
            input_upper: self.input_box.upper().to_vec(),
            spec_matrix: self.spec_rows.to_rows(),
            threshold: self.thresholds.clone(),
        })
        .expect("property serialization cannot fail")
    }
}

pub fn load_property<R: Read>(mut source: R) -> Result<PropertySpec> {
    let mut s = String::new();
    source
        .read_to_string(&mut s)
        .map_err(|e| Error::Parse(e.to_string()))?;
    PropertySpec::from_json_str(&s)
}

/// Verification problem in the form "every output of `model` is >= 0 on `input_box`".
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProblem {
    pub model: NetworkModel,
    pub input_box: BoxDomain,
    pub objective_count: usize,
}

impl CanonicalProblem {
    /// Treats the outputs of `model` directly as objectives.
    pub fn from_model(model: NetworkModel, input_box: BoxDomain) -> Result<Self> {
        check_dim(model.input_dim(), input_box.dim())?;
        let objective_count = model.output_dim();
        Ok(Self {
            model,
            input_box,
            objective_count,
        })
    }

    /// Minimum over objective rows of the canonical output at `x`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.model
            .evaluate_unchecked(x)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Sub-problem restricted to a single objective row.
    pub fn row(&self, k: usize) -> Self {
        Self {
            model: self.model.select_outputs(&[k]),
            input_box: self.input_box.clone(),
            objective_count: 1,
        }
    }
}

/// Folds the specification into the last layer: weights `C W_L`, bias `C b_L - t`.
pub fn canonicalize(model: &NetworkModel, prop: &PropertySpec) -> Result<CanonicalProblem> {
    check_dim(model.output_dim(), prop.spec_rows.cols())?;
    check_dim(model.input_dim(), prop.input_box.dim())?;
    let mut layers = model.layers().to_vec();
    let last = layers.pop().expect("non-empty");
    let weights = prop.spec_rows.matmul(&last.weights);
    let bias = prop
        .spec_rows
        .iter_rows()
        .zip(&prop.thresholds)
        .map(|(row, t)| crate::linalg::dot(row, &last.bias) - t)
        .collect();
    layers.push(AffineLayer::new(weights, bias)?);
    Ok(CanonicalProblem {
        model: NetworkModel::new(layers)?,
        input_box: prop.input_box.clone(),
        objective_count: prop.thresholds.len(),
    })
}
