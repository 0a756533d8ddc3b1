use super::features::PairFeature;
use crate::camera::PixelPoint;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use super::MlpError;

pub const MODEL_FORMAT: &str = "fisheye-distance-mlp";
pub const MODEL_VERSION: u32 = 1;

/// Hidden layers are 4 x 100, one scalar output.
pub const DEFAULT_LAYERS: [usize; 6] = [3, 100, 100, 100, 100, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Constants mapping raw features into network inputs and the network output
/// back to inches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    /// Polar origin used for feature extraction (the image center).
    pub origin: PixelPoint,
    /// Radii are divided by this (the image half-side).
    pub radius_scale: f64,
    pub angle_scale: f64,
    /// Network output times this is the distance in inches.
    pub output_scale: f64,
}

impl FeatureScaling {
    pub fn for_image(side: f64) -> Self {
        Self {
            origin: PixelPoint::new(side / 2.0, side / 2.0),
            radius_scale: side / 2.0,
            angle_scale: PI,
            output_scale: 1.0,
        }
    }

    pub fn encode(&self, f: &PairFeature) -> [f64; 3] {
        let f = f.canonical();
        [
            f.r_a / self.radius_scale,
            f.r_b / self.radius_scale,
            f.theta / self.angle_scale,
        ]
    }
}

impl Default for FeatureScaling {
    fn default() -> Self {
        Self::for_image(2048.0)
    }
}

/// Fully connected regression network. `weights[l]` has shape
/// `(layer_sizes[l + 1], layer_sizes[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
    pub scaling: FeatureScaling,
    pub seed: u64,
}

/// Per-layer intermediate values kept for backpropagation.
pub(crate) struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[l]` the output of layer l.
    pub activations: Vec<Array2<f64>>,
}

impl MlpModel {
    /// Uniform fan-in initialisation, `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`,
    /// zero biases.
    pub fn new(
        layer_sizes: &[usize],
        scaling: FeatureScaling,
        seed: u64,
    ) -> Result<Self, MlpError> {
        if layer_sizes.len() < 2 || layer_sizes[0] != 3 || *layer_sizes.last().unwrap() != 1 {
            return Err(MlpError::InvalidModel(format!(
                "layer sizes must start at 3 and end at 1, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(MlpError::InvalidModel("empty layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
            scaling,
            seed,
        })
    }

    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize], scaling: FeatureScaling) -> Result<Self, MlpError> {
        let mut m = Self::new(layer_sizes, scaling, 0)?;
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        Ok(m)
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let n = self.layer_sizes.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(MlpError::InvalidModel("layer count mismatch".into()));
        }
        if self.layer_sizes[0] != 3 || self.layer_sizes[n - 1] != 1 {
            return Err(MlpError::InvalidModel(
                "model must map 3 inputs to 1 output".into(),
            ));
        }
        for l in 0..n - 1 {
            if self.weights[l].dim() != (self.layer_sizes[l + 1], self.layer_sizes[l])
                || self.biases[l].len() != self.layer_sizes[l + 1]
            {
                return Err(MlpError::InvalidModel(format!(
                    "layer {l} has the wrong shape"
                )));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(MlpError::InvalidModel("non-finite parameter".into()));
        }
        let s = &self.scaling;
        if !(s.radius_scale > 0.0 && s.angle_scale > 0.0 && s.output_scale > 0.0) {
            return Err(MlpError::InvalidModel(
                "scaling constants must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, input: ArrayView2<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_owned());
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations[l].dot(&w.t());
            z += b;
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        ForwardCache { activations }
    }

    /// Raw network output for already-encoded inputs, shape `(batch,)`.
    pub fn forward(&self, input: ArrayView2<f64>) -> Array1<f64> {
        let mut x = input.to_owned();
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = x.dot(&w.t());
            z += b;
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            x = z;
        }
        x.index_axis_move(Axis(1), 0)
    }

    pub fn encode_batch(&self, features: &[PairFeature]) -> Array2<f64> {
        let mut x = Array2::zeros((features.len(), 3));
        for (mut row, f) in x.rows_mut().into_iter().zip(features) {
            let e = self.scaling.encode(f);
            row[0] = e[0];
            row[1] = e[1];
            row[2] = e[2];
        }
        x
    }

    /// Predicted distance in inches.
    pub fn predict(&self, v: &PairFeature) -> f64 {
        self.predict_batch(std::slice::from_ref(v))[0]
    }

    pub fn predict_batch(&self, features: &[PairFeature]) -> Vec<f64> {
        if features.is_empty() {
            return Vec::new();
        }
        let x = self.encode_batch(features);
        let scale = self.scaling.output_scale;
        self.forward(x.view()).iter().map(|v| v * scale).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        let path = path.as_ref();
        let file = ModelFile::from(self);
        let text = serde_json::to_string(&file).map_err(|e| MlpError::io(path, e))?;
        fs::write(path, text + "\n").map_err(|e| MlpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MlpError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MlpError::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| MlpError::io(path, e))?;
        file.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MlpError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| MlpError::InvalidModel(e.to_string()))?;
        file.into_model()
    }
}

/// On-disk model layout. Weights are flattened row-major `(out, in)`.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    scaling: FeatureScaling,
    seed: u64,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            layer_sizes: m.layer_sizes.clone(),
            activation: m.activation,
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            scaling: m.scaling,
            seed: m.seed,
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<MlpModel, MlpError> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(MlpError::InvalidModel(format!(
                "unsupported model file {} v{}",
                self.format, self.version
            )));
        }
        let n = self.layer_sizes.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(MlpError::InvalidModel("layer count mismatch".into()));
        }
        let mut weights = Vec::with_capacity(n - 1);
        for (l, w) in self.weights.into_iter().enumerate() {
            let shape = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            weights.push(
                Array2::from_shape_vec(shape, w)
                    .map_err(|_| MlpError::InvalidModel(format!("layer {l} weight shape")))?,
            );
        }
        let model = MlpModel {
            layer_sizes: self.layer_sizes,
            weights,
            biases: self.biases.into_iter().map(Array1::from).collect(),
            activation: self.activation,
            scaling: self.scaling,
            seed: self.seed,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(r_a: f64, r_b: f64, theta: f64) -> PairFeature {
        PairFeature { r_a, r_b, theta }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = MlpModel::zeros(&DEFAULT_LAYERS, FeatureScaling::default()).unwrap();
        assert_eq!(m.predict(&feature(300.0, 100.0, 1.0)), 0.0);
        assert_eq!(m.predict(&feature(0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn single_path_is_linear_in_radius() {
        // [3, 1, 1]: hidden = relu(w * r_a / 1024), out = hidden.
        let mut m = MlpModel::zeros(&[3, 1, 1], FeatureScaling::default()).unwrap();
        m.weights[0][(0, 0)] = 2.0;
        m.weights[1][(0, 0)] = 1.0;
        let y1 = m.predict(&feature(256.0, 10.0, 0.3));
        let y2 = m.predict(&feature(512.0, 10.0, 0.3));
        assert!((y1 - 0.5).abs() < 1e-15);
        assert!((y2 - 2.0 * y1).abs() < 1e-15);
    }

    #[test]
    fn swapped_inputs_predict_identically() {
        let m = MlpModel::new(&DEFAULT_LAYERS, FeatureScaling::default(), 7).unwrap();
        let a = m.predict(&feature(500.0, 120.0, 2.0));
        let b = m.predict(&feature(120.0, 500.0, 2.0));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn batch_matches_single() {
        let m = MlpModel::new(&DEFAULT_LAYERS, FeatureScaling::default(), 3).unwrap();
        let fs: Vec<_> = (0..10)
            .map(|i| feature(50.0 * i as f64, 30.0, 0.2 * i as f64))
            .collect();
        let batch = m.predict_batch(&fs);
        for (f, y) in fs.iter().zip(&batch) {
            assert!((m.predict(f) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpModel::new(&[2, 5, 1], FeatureScaling::default(), 0).is_err());
        assert!(MlpModel::new(&[3, 0, 1], FeatureScaling::default(), 0).is_err());
        let mut m = MlpModel::new(&[3, 4, 1], FeatureScaling::default(), 0).unwrap();
        m.weights[1] = Array2::zeros((1, 5));
        assert!(m.validate().is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut m = MlpModel::new(&DEFAULT_LAYERS, FeatureScaling::default(), 42).unwrap();
        m.biases[2][7] = 1.0 / 3.0;
        m.scaling.output_scale = 123.456789;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = MlpModel::load(&path).unwrap();
        assert_eq!(back.layer_sizes, m.layer_sizes);
        for (a, b) in m.weights.iter().zip(&back.weights) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for (a, b) in m.biases.iter().zip(&back.biases) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_foreign_files() {
        let m = MlpModel::new(&[3, 4, 1], FeatureScaling::default(), 0).unwrap();
        let text = m.to_json().replace(MODEL_FORMAT, "something-else");
        assert!(MlpModel::from_json(&text).is_err());
    }
}
