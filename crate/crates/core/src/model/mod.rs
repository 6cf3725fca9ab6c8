//! Model configuration, tensor records and the int8 quantizer.
//!
//! A [`Model`] is the in-memory form of a `.frgn` container: a config plus
//! one [`TensorRecord`] per entry of [`required_tensors`]. The tensor set is
//! a pure function of the config, and every constructor enforces it.

mod budget;
mod container;

pub use budget::{count_flops, count_params, dense_flops, FlopReport};
pub use container::{load_model, save_model, FORMAT_VERSION, MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{COND_INPUT_DIM, EMBED_DIM, NB_FEATURES, PITCH_MAX, PITCH_MIN};
use crate::nn::{Matrix, QMatrix, Weights};

pub const SUBFRAME_LEN: usize = 40;
pub const FRAME_SUBFRAMES: usize = 4;

/// How the 12-dimensional pitch embedding is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    #[default]
    FixedSinusoidal,
    /// One learned row per integer period in `[32, 320]`.
    LearnedTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Float,
    Int8,
}

/// Layer dimensions. The fixed fields exist so that containers are
/// self-describing; [`ModelConfig::validate`] rejects any other value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cond_hidden: usize,
    pub cond_sub_dim: usize,
    pub sub_hidden: usize,
    pub sub_layers: usize,
    pub subframe_len: usize,
    pub frame_subframes: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub pitch_min: usize,
    pub pitch_max: usize,
    pub embedding_kind: EmbeddingKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            cond_hidden: 256,
            cond_sub_dim: 128,
            sub_hidden: 256,
            sub_layers: 3,
            subframe_len: SUBFRAME_LEN,
            frame_subframes: FRAME_SUBFRAMES,
            feature_dim: NB_FEATURES,
            embed_dim: EMBED_DIM,
            pitch_min: PITCH_MIN,
            pitch_max: PITCH_MAX,
            embedding_kind: EmbeddingKind::FixedSinusoidal,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fixed = [
            ("subframe_len", self.subframe_len, SUBFRAME_LEN),
            ("frame_subframes", self.frame_subframes, FRAME_SUBFRAMES),
            ("feature_dim", self.feature_dim, NB_FEATURES),
            ("embed_dim", self.embed_dim, EMBED_DIM),
            ("pitch_min", self.pitch_min, PITCH_MIN),
            ("pitch_max", self.pitch_max, PITCH_MAX),
        ];
        for (name, got, want) in fixed {
            if got != want {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be {want}, found {got}"
                )));
            }
        }
        let sizes = [
            ("cond_hidden", self.cond_hidden),
            ("cond_sub_dim", self.cond_sub_dim),
            ("sub_hidden", self.sub_hidden),
            ("sub_layers", self.sub_layers),
        ];
        for (name, v) in sizes {
            if v == 0 || v > 4096 {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v} outside [1, 4096]"
                )));
            }
        }
        Ok(())
    }

    /// Parses a TOML `key = value` config; missing keys take default values.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Width of the feedback inputs shared by every subframe layer.
    pub fn feedback_dim(&self) -> usize {
        2 * self.subframe_len
    }

    /// Input width of hidden layer `i` of the subframe network.
    pub fn sub_layer_input(&self, i: usize) -> usize {
        let base = if i == 0 {
            self.cond_sub_dim
        } else {
            self.sub_hidden
        };
        base + self.feedback_dim()
    }

    pub fn embed_table_rows(&self) -> usize {
        self.pitch_max - self.pitch_min + 1
    }
}

// --- Tensor graph ---

/// One entry of the tensor graph implied by a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Weight matrices whose inputs are bounded to [-1, 1] and can therefore
    /// use the int8 path.
    pub quantizable: bool,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: &[usize], quantizable: bool) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            quantizable,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }
}

/// Every tensor the architecture needs, in canonical container order.
pub fn required_tensors(c: &ModelConfig) -> Vec<TensorSpec> {
    let (h, s, hs, n) = (c.cond_hidden, c.cond_sub_dim, c.sub_hidden, c.subframe_len);
    let up = c.frame_subframes * s;
    let mut t = Vec::new();
    if c.embedding_kind == EmbeddingKind::LearnedTable {
        t.push(TensorSpec::new("cond.embed.table", &[c.embed_table_rows(), c.embed_dim], false));
    }
    // Raw features are unbounded, so the first conditioning layer stays float.
    t.push(TensorSpec::new("cond.fc.weight", &[h, COND_INPUT_DIM], false));
    t.push(TensorSpec::new("cond.fc.bias", &[h], false));
    t.push(TensorSpec::new("cond.fc.glu", &[h, h], true));
    t.push(TensorSpec::new("cond.conv.weight", &[h, h, 3], true));
    t.push(TensorSpec::new("cond.conv.bias", &[h], false));
    t.push(TensorSpec::new("cond.conv.glu", &[h, h], true));
    t.push(TensorSpec::new("cond.up.weight", &[up, h], true));
    t.push(TensorSpec::new("cond.up.bias", &[up], false));
    t.push(TensorSpec::new("cond.up.glu", &[s, s], true));
    t.push(TensorSpec::new("sub.gain.weight", &[1, s], false));
    t.push(TensorSpec::new("sub.gain.bias", &[1], false));
    t.push(TensorSpec::new("sub.gate.weight", &[n, s], false));
    t.push(TensorSpec::new("sub.gate.bias", &[n], false));
    for i in 0..c.sub_layers {
        t.push(TensorSpec::new(format!("sub.layer{i}.weight"), &[hs, c.sub_layer_input(i)], true));
        t.push(TensorSpec::new(format!("sub.layer{i}.bias"), &[hs], false));
        t.push(TensorSpec::new(format!("sub.layer{i}.glu"), &[hs, hs], true));
    }
    t.push(TensorSpec::new("sub.out.weight", &[n, hs + c.feedback_dim()], true));
    t.push(TensorSpec::new("sub.out.bias", &[n], false));
    t
}

// --- Tensor records ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    I8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::I8 => 1,
        }
    }
}

/// A named tensor as stored in a container. Int8 tensors carry one `f32`
/// scale per row (first dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub scales: Vec<f32>,
    pub payload: Vec<u8>,
}

impl TensorRecord {
    pub fn from_f32(name: impl Into<String>, shape: &[usize], values: &[f32]) -> Result<Self> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::GraphMismatch(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(Self {
            name,
            dtype: DType::F32,
            shape: shape.to_vec(),
            scales: Vec::new(),
            payload: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
        })
    }

    pub fn from_qmatrix(name: impl Into<String>, shape: &[usize], q: &QMatrix) -> Self {
        Self {
            name: name.into(),
            dtype: DType::I8,
            shape: shape.to_vec(),
            scales: q.scales.clone(),
            payload: q.data.iter().map(|&v| v as u8).collect(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Checks payload and scale lengths against shape and dtype.
    pub fn check_consistent(&self) -> Result<()> {
        let want = self.numel() * self.dtype.size();
        if self.payload.len() != want {
            return Err(Error::Malformed(format!(
                "{}: payload has {} bytes, shape needs {want}",
                self.name,
                self.payload.len()
            )));
        }
        let want_scales = match self.dtype {
            DType::F32 => 0,
            DType::I8 => self.rows(),
        };
        if self.scales.len() != want_scales {
            return Err(Error::Malformed(format!(
                "{}: {} scales for {want_scales} rows",
                self.name,
                self.scales.len()
            )));
        }
        Ok(())
    }

    /// Values as `f32`, dequantizing int8 payloads.
    pub fn to_f32(&self) -> Vec<f32> {
        match self.dtype {
            DType::F32 => self
                .payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            DType::I8 => {
                let cols = self.cols().max(1);
                self.payload
                    .chunks_exact(cols)
                    .zip(&self.scales)
                    .flat_map(|(row, &s)| row.iter().map(move |&b| b as i8 as f32 * s))
                    .collect()
            }
        }
    }

    /// The tensor as a `rows x cols` weight matrix in its stored precision.
    pub fn to_weights(&self) -> Result<Weights> {
        let (rows, cols) = (self.rows(), self.cols());
        match self.dtype {
            DType::F32 => Ok(Weights::Float(Matrix::new(rows, cols, self.to_f32())?)),
            DType::I8 => Ok(Weights::Int8(QMatrix::new(
                rows,
                cols,
                self.payload.iter().map(|&b| b as i8).collect(),
                self.scales.clone(),
            )?)),
        }
    }

    fn quantized(&self) -> Self {
        let m = Matrix {
            rows: self.rows(),
            cols: self.cols(),
            data: self.to_f32(),
        };
        Self::from_qmatrix(self.name.clone(), &self.shape, &QMatrix::quantize(&m))
    }

    fn dequantized(&self) -> Self {
        Self::from_f32(self.name.clone(), &self.shape, &self.to_f32())
            .expect("shape is unchanged")
    }
}

// --- Model ---

/// Config plus the complete, canonically ordered tensor set.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    precision: Precision,
    tensors: Vec<TensorRecord>,
}

impl Model {
    /// Builds a model, checking the tensor set against the config's graph.
    ///
    /// Tensors may be given in any order; they are stored canonically.
    pub fn new(
        config: ModelConfig,
        precision: Precision,
        mut tensors: Vec<TensorRecord>,
    ) -> Result<Self> {
        config.validate()?;
        let specs = required_tensors(&config);
        let mut ordered = Vec::with_capacity(specs.len());
        for spec in &specs {
            let pos = tensors
                .iter()
                .position(|t| t.name == spec.name)
                .ok_or_else(|| Error::GraphMismatch(format!("missing tensor {}", spec.name)))?;
            let t = tensors.swap_remove(pos);
            if t.shape != spec.shape {
                return Err(Error::GraphMismatch(format!(
                    "{}: shape {:?}, expected {:?}",
                    t.name, t.shape, spec.shape
                )));
            }
            let want = match (precision, spec.quantizable) {
                (Precision::Int8, true) => DType::I8,
                _ => DType::F32,
            };
            if t.dtype != want {
                return Err(Error::GraphMismatch(format!(
                    "{}: dtype {:?}, expected {want:?} for a {precision:?} model",
                    t.name, t.dtype
                )));
            }
            t.check_consistent()?;
            if t.dtype == DType::I8 {
                if let Some(s) = t.scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::Malformed(format!("{}: row scale {s}", t.name)));
                }
            }
            ordered.push(t);
        }
        if let Some(extra) = tensors.first() {
            return Err(Error::GraphMismatch(format!("unexpected tensor {}", extra.name)));
        }
        Ok(Self {
            config,
            precision,
            tensors: ordered,
        })
    }

    /// Random float model with unit-variance-preserving uniform weights.
    ///
    /// Biases are drawn from `[-0.1, 0.1]`, the gain bias is `ln(0.1)`, and a
    /// learned embedding table (if any) from `[-1, 1]`.
    pub fn random(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = required_tensors(&config)
            .iter()
            .map(|spec| {
                let n = spec.numel();
                let values: Vec<f32> = if spec.name == "sub.gain.bias" {
                    vec![0.1f32.ln()]
                } else if spec.name == "cond.embed.table" {
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
                } else if spec.shape.len() == 1 {
                    (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
                } else {
                    let fan_in: usize = spec.shape[1..].iter().product();
                    let mut a = (3.0 / fan_in as f32).sqrt();
                    if spec.name == "sub.gain.weight" {
                        a *= 0.5;
                    }
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                };
                TensorRecord::from_f32(spec.name.clone(), &spec.shape, &values)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, Precision::Float, tensors)
    }

    /// Float model whose every tensor is zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let tensors = required_tensors(&config)
            .iter()
            .map(|s| TensorRecord::from_f32(s.name.clone(), &s.shape, &vec![0.0; s.numel()]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, Precision::Float, tensors)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn tensors(&self) -> &[TensorRecord] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorRecord> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::GraphMismatch(format!("missing tensor {name}")))
    }

    /// Replaces the values of one float tensor, keeping its shape.
    pub fn set_tensor(&mut self, name: &str, values: &[f32]) -> Result<()> {
        let t = self
            .tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::GraphMismatch(format!("missing tensor {name}")))?;
        let rec = TensorRecord::from_f32(name, &t.shape, values)?;
        if t.dtype == DType::I8 {
            *t = rec.quantized();
        } else {
            *t = rec;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(TensorRecord::numel).sum()
    }
}

/// Quantizes every eligible weight matrix to symmetric per-row int8.
///
/// Biases, the first conditioning layer, the gain and gate neurons and the
/// embedding table stay `f32`.
pub fn quantize_model(model: &Model) -> Result<Model> {
    if model.precision != Precision::Float {
        return Err(Error::InvalidArgument("model is already int8".into()));
    }
    let specs = required_tensors(&model.config);
    let tensors = model
        .tensors
        .iter()
        .zip(&specs)
        .map(|(t, s)| if s.quantizable { t.quantized() } else { t.clone() })
        .collect();
    Model::new(model.config, Precision::Int8, tensors)
}

/// Float model with every int8 tensor replaced by its dequantized values.
pub fn dequantize_model(model: &Model) -> Result<Model> {
    let tensors = model
        .tensors
        .iter()
        .map(|t| match t.dtype {
            DType::I8 => t.dequantized(),
            DType::F32 => t.clone(),
        })
        .collect();
    Model::new(model.config, Precision::Float, tensors)
}
