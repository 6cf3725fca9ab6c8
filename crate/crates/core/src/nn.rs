//! Neural kernels used by the conditioning and subframe networks.
//!
//! Every layer holds its weights either as `f32` or as symmetric per-row
//! int8 with one `f32` scale per output row. The int8 path quantizes its
//! input activations with the fixed scale 1/127 (inputs are bounded to
//! [-1, 1] by construction), accumulates in `i32`, and dequantizes before
//! the bias and activation, which stay in real arithmetic.

use crate::error::{Error, Result};

/// Fixed activation quantization scale.
pub const ACTIVATION_SCALE: f32 = 1.0 / 127.0;

// --- Activations ---

/// Rational activations shared by the float and int8 paths.
///
/// `tanh` is a 13/6 odd/even rational fit on [-7.90531, 7.90531]; its
/// absolute error against the exact function is below 1e-6 on all of `f32`.
pub mod act {
    const CLAMP: f32 = 7.905_311;
    const A1: f32 = 4.893_524_6e-3;
    const A3: f32 = 6.372_619_3e-4;
    const A5: f32 = 1.485_722_4e-5;
    const A7: f32 = 5.122_297e-8;
    const A9: f32 = -8.604_672e-11;
    const A11: f32 = 2.000_188e-13;
    const A13: f32 = -2.760_768_5e-16;
    const B0: f32 = 4.893_525e-3;
    const B2: f32 = 2.268_434_6e-3;
    const B4: f32 = 1.185_347e-4;
    const B6: f32 = 1.198_258_4e-6;
    // Largest f32 below one.
    const MAX: f32 = 1.0 - f32::EPSILON / 2.0;

    #[inline]
    pub fn tanh(x: f32) -> f32 {
        let x = x.clamp(-CLAMP, CLAMP);
        let x2 = x * x;
        let p = ((((((A13 * x2 + A11) * x2 + A9) * x2 + A7) * x2 + A5) * x2 + A3) * x2 + A1) * x;
        let q = ((B6 * x2 + B4) * x2 + B2) * x2 + B0;
        (p / q).clamp(-MAX, MAX)
    }

    #[inline]
    pub fn sigmoid(x: f32) -> f32 {
        (0.5 + 0.5 * tanh(0.5 * x)).min(MAX)
    }
}

/// Output nonlinearity of a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
    Exp,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => act::tanh(x),
            Activation::Sigmoid => act::sigmoid(x),
            Activation::Exp => x.exp(),
        }
    }

    fn apply_slice(self, x: &mut [f32]) {
        if self != Activation::Linear {
            x.iter_mut().for_each(|v| *v = self.apply(*v));
        }
    }
}

// --- Weight storage ---

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Row-major int8 matrix with one dequantization scale per row.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i8>,
    pub scales: Vec<f32>,
}

impl QMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>, scales: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "int8 matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if scales.len() != rows {
            return Err(Error::ShapeMismatch {
                context: "int8 matrix scales",
                expected: rows,
                got: scales.len(),
            });
        }
        if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "int8 row scale must be positive, found {s}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            scales,
        })
    }

    /// Symmetric per-row quantization: `scale = max|w| / 127`, `q = round(w / scale)`.
    ///
    /// All-zero rows get scale 1.
    pub fn quantize(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.data.len());
        let mut scales = Vec::with_capacity(m.rows);
        for r in 0..m.rows {
            let row = m.row(r);
            let max_abs = row.iter().fold(0.0f32, |a, &w| a.max(w.abs()));
            let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
            data.extend(
                row.iter()
                    .map(|&w| (w / scale).round().clamp(-127.0, 127.0) as i8),
            );
            scales.push(scale);
        }
        Self {
            rows: m.rows,
            cols: m.cols,
            data,
            scales,
        }
    }

    pub fn dequantize(&self) -> Matrix {
        let data = self
            .data
            .chunks_exact(self.cols.max(1))
            .zip(&self.scales)
            .flat_map(|(row, &s)| row.iter().map(move |&q| q as f32 * s))
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Weights of one layer, float or int8.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Float(Matrix),
    Int8(QMatrix),
}

impl Weights {
    pub fn rows(&self) -> usize {
        match self {
            Weights::Float(m) => m.rows,
            Weights::Int8(q) => q.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Weights::Float(m) => m.cols,
            Weights::Int8(q) => q.cols,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Weights::Int8(_))
    }

    pub fn quantized(&self) -> Weights {
        match self {
            Weights::Float(m) => Weights::Int8(QMatrix::quantize(m)),
            Weights::Int8(_) => self.clone(),
        }
    }

    pub fn dequantized(&self) -> Weights {
        match self {
            Weights::Float(_) => self.clone(),
            Weights::Int8(q) => Weights::Float(q.dequantize()),
        }
    }

    /// `out = W x`, dispatching on the storage type.
    fn matvec(&self, x: &[f32], out: &mut [f32]) {
        match self {
            Weights::Float(m) => matvec_f32(m, x, out),
            Weights::Int8(q) => {
                let xq = quantize_activations(x);
                matvec_q8(q, &xq, out)
            }
        }
    }
}

// --- Inner kernels ---

#[inline(always)]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut sum = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline(always)]
fn dot_i8(a: &[i8], b: &[i8]) -> i32 {
    let mut acc = [0i32; 32];
    let ca = a.chunks_exact(32);
    let cb = b.chunks_exact(32);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..32 {
            acc[i] = acc[i].wrapping_add(x[i] as i32 * y[i] as i32);
        }
    }
    // |sum| <= 127 * 127 * 4096 < 2^31, so wrapping never happens
    let mut sum = acc.iter().fold(0i32, |s, &a| s.wrapping_add(a));
    for (&x, &y) in ra.iter().zip(rb) {
        sum = sum.wrapping_add(x as i32 * y as i32);
    }
    sum
}

// The kernels are compiled twice: once for the baseline target and once with
// AVX2 enabled, picked at run time. FMA stays off so both builds round the
// same way and give bit-identical results.

#[inline(always)]
fn matvec_f32_body(m: &Matrix, x: &[f32], out: &mut [f32]) {
    if m.cols == 0 {
        out.fill(0.0);
        return;
    }
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols)) {
        *o = dot_f32(row, x);
    }
}

#[inline(always)]
fn matvec_q8_body(q: &QMatrix, x: &QVector, out: &mut [f32]) {
    if q.cols == 0 {
        out.fill(0.0);
        return;
    }
    for ((o, row), &s) in out
        .iter_mut()
        .zip(q.data.chunks_exact(q.cols))
        .zip(&q.scales)
    {
        *o = dot_i8(row, &x.data) as f32 * (s * x.scale);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matvec_f32_avx2(m: &Matrix, x: &[f32], out: &mut [f32]) {
    matvec_f32_body(m, x, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn matvec_q8_avx2(q: &QMatrix, x: &QVector, out: &mut [f32]) {
    matvec_q8_body(q, x, out)
}

fn matvec_f32(m: &Matrix, x: &[f32], out: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { matvec_f32_avx2(m, x, out) };
    }
    matvec_f32_body(m, x, out)
}

fn matvec_q8(q: &QMatrix, x: &QVector, out: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { matvec_q8_avx2(q, x, out) };
    }
    matvec_q8_body(q, x, out)
}

/// Activation vector quantized with a single scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector {
    pub data: Vec<i8>,
    pub scale: f32,
}

/// Quantizes `x` with the fixed scale 1/127, saturating outside [-1, 1].
pub fn quantize_activations(x: &[f32]) -> QVector {
    QVector {
        data: x
            .iter()
            .map(|&v| (v.clamp(-1.0, 1.0) * 127.0).round() as i8)
            .collect(),
        scale: ACTIVATION_SCALE,
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            context,
            expected,
            got,
        })
    }
}

// --- Layers ---

/// Fully-connected layer `activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Weights,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Weights, bias: Vec<f32>, activation: Activation) -> Result<Self> {
        check_len("dense bias", weights.rows(), bias.len())?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward_into(&self, x: &[f32], out: &mut [f32]) -> Result<()> {
        check_len("dense input", self.input_dim(), x.len())?;
        check_len("dense output", self.output_dim(), out.len())?;
        self.weights.matvec(x, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        self.activation.apply_slice(out);
        Ok(())
    }
}

/// Evaluates a dense layer on the path implied by its weight storage.
pub fn dense(layer: &DenseLayer, x: &[f32]) -> Result<Vec<f32>> {
    let mut out = vec![0.0; layer.output_dim()];
    layer.forward_into(x, &mut out)?;
    Ok(out)
}

/// Int8 dense evaluation on an already-quantized input.
pub fn dense_q8(layer: &DenseLayer, x: &QVector) -> Result<Vec<f32>> {
    let Weights::Int8(q) = &layer.weights else {
        return Err(Error::InvalidArgument(
            "dense_q8 requires int8 weights".into(),
        ));
    };
    check_len("dense_q8 input", q.cols, x.data.len())?;
    let mut out = vec![0.0; q.rows];
    matvec_q8(q, x, &mut out);
    for (o, b) in out.iter_mut().zip(&layer.bias) {
        *o += b;
    }
    layer.activation.apply_slice(&mut out);
    Ok(out)
}

/// Gated linear unit `x * sigmoid(W x)` with a square gate matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GluUnit {
    pub gate: Weights,
}

impl GluUnit {
    pub fn new(gate: Weights) -> Result<Self> {
        check_len("GLU gate (square)", gate.rows(), gate.cols())?;
        Ok(Self { gate })
    }

    pub fn dim(&self) -> usize {
        self.gate.rows()
    }

    /// Applies the unit in place.
    pub fn apply(&self, x: &mut [f32]) -> Result<()> {
        check_len("GLU input", self.dim(), x.len())?;
        let mut g = vec![0.0; x.len()];
        self.gate.matvec(x, &mut g);
        for (v, gi) in x.iter_mut().zip(&g) {
            *v *= act::sigmoid(*gi);
        }
        Ok(())
    }
}

pub fn glu(unit: &GluUnit, x: &[f32]) -> Result<Vec<f32>> {
    let mut y = x.to_vec();
    unit.apply(&mut y)?;
    Ok(y)
}

/// Causal 3-tap convolution over frame vectors, `tanh` then GLU.
///
/// Weights are stored `out x in x 3`, tap-minor: element `(o, i, k)` sits at
/// `o * 3 * in + 3 * i + k`, where tap `k = 0, 1, 2` multiplies the frame at
/// `t-2, t-1, t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3Layer {
    pub weights: Weights,
    pub bias: Vec<f32>,
    pub glu: GluUnit,
}

impl Conv3Layer {
    pub fn new(weights: Weights, bias: Vec<f32>, glu: GluUnit) -> Result<Self> {
        if !weights.cols().is_multiple_of(3) {
            return Err(Error::InvalidArgument(
                "conv3 weight columns must be a multiple of 3".into(),
            ));
        }
        check_len("conv3 bias", weights.rows(), bias.len())?;
        check_len("conv3 GLU", weights.rows(), glu.dim())?;
        Ok(Self { weights, bias, glu })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols() / 3
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward_into(
        &self,
        f_prev2: &[f32],
        f_prev1: &[f32],
        f_now: &[f32],
        out: &mut [f32],
    ) -> Result<()> {
        let n = self.input_dim();
        check_len("conv3 frame t-2", n, f_prev2.len())?;
        check_len("conv3 frame t-1", n, f_prev1.len())?;
        check_len("conv3 frame t", n, f_now.len())?;
        check_len("conv3 output", self.output_dim(), out.len())?;
        let mut interleaved = Vec::with_capacity(3 * n);
        for i in 0..n {
            interleaved.extend_from_slice(&[f_prev2[i], f_prev1[i], f_now[i]]);
        }
        self.weights.matvec(&interleaved, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o = act::tanh(*o + b);
        }
        self.glu.apply(out)
    }
}

pub fn conv3(layer: &Conv3Layer, f_prev2: &[f32], f_prev1: &[f32], f_now: &[f32]) -> Result<Vec<f32>> {
    let mut out = vec![0.0; layer.output_dim()];
    layer.forward_into(f_prev2, f_prev1, f_now, &mut out)?;
    Ok(out)
}

/// Number of subframe vectors produced per frame vector.
pub const UPSAMPLE: usize = 4;

/// 4x transposed convolution from the frame rate to the subframe rate.
///
/// Rows `s * out .. (s + 1) * out` of the weight matrix produce subframe `s`;
/// each position goes through `tanh` and the shared GLU.
#[derive(Debug, Clone, PartialEq)]
pub struct UpConv4Layer {
    pub weights: Weights,
    pub bias: Vec<f32>,
    pub glu: GluUnit,
}

impl UpConv4Layer {
    pub fn new(weights: Weights, bias: Vec<f32>, glu: GluUnit) -> Result<Self> {
        if !weights.rows().is_multiple_of(UPSAMPLE) {
            return Err(Error::InvalidArgument(
                "upconv4 weight rows must be a multiple of 4".into(),
            ));
        }
        check_len("upconv4 bias", weights.rows(), bias.len())?;
        check_len("upconv4 GLU", weights.rows() / UPSAMPLE, glu.dim())?;
        Ok(Self { weights, bias, glu })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows() / UPSAMPLE
    }

    /// Writes the four subframe vectors back to back into `out`.
    pub fn forward_into(&self, f: &[f32], out: &mut [f32]) -> Result<()> {
        check_len("upconv4 input", self.input_dim(), f.len())?;
        check_len("upconv4 output", self.weights.rows(), out.len())?;
        self.weights.matvec(f, out);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o = act::tanh(*o + b);
        }
        for chunk in out.chunks_exact_mut(self.output_dim()) {
            self.glu.apply(chunk)?;
        }
        Ok(())
    }
}

pub fn upconv4(layer: &UpConv4Layer, f: &[f32]) -> Result<[Vec<f32>; UPSAMPLE]> {
    let mut out = vec![0.0; layer.weights.rows()];
    layer.forward_into(f, &mut out)?;
    let d = layer.output_dim();
    Ok(std::array::from_fn(|s| out[s * d..(s + 1) * d].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f32) -> Matrix {
        Matrix::new(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-amp..amp)).collect(),
        )
        .unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    // Straight triple loop in f64, same activation function.
    #[allow(clippy::needless_range_loop)]
    fn naive_dense(m: &Matrix, b: &[f32], act: Activation, x: &[f32]) -> Vec<f32> {
        (0..m.rows)
            .map(|r| {
                let mut acc = b[r] as f64;
                for c in 0..m.cols {
                    acc += m.data[r * m.cols + c] as f64 * x[c] as f64;
                }
                act.apply(acc as f32)
            })
            .collect()
    }

    #[test]
    fn tanh_approximation_error() {
        let mut worst = 0.0f64;
        let mut x = -12.0f32;
        while x <= 12.0 {
            let e = (act::tanh(x) as f64 - (x as f64).tanh()).abs();
            worst = worst.max(e);
            x += 1e-3;
        }
        assert!(worst < 1e-6, "worst tanh error {worst}");
        assert_eq!(act::tanh(0.0), 0.0);
        assert_eq!(act::sigmoid(0.0), 0.5);
        assert!(act::tanh(1e30) < 1.0 && act::tanh(-1e30) > -1.0);
        assert!(act::sigmoid(-1e30) > 0.0 && act::sigmoid(1e30) < 1.0);
        assert!(act::tanh(f32::NAN).is_nan());
    }

    #[test]
    fn identity_linear_dense() {
        let layer = DenseLayer::new(
            Weights::Float(Matrix::identity(5)),
            vec![0.0; 5],
            Activation::Linear,
        )
        .unwrap();
        let x = vec![0.1, -0.7, 3.0, 0.0, -12.5];
        assert_eq!(dense(&layer, &x).unwrap(), x);
    }

    #[test]
    fn dense_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Linear, Activation::Tanh, Activation::Sigmoid] {
            let m = random_matrix(&mut rng, 8, 8, 1.0);
            let b = random_vec(&mut rng, 8);
            let x = random_vec(&mut rng, 8);
            let want = naive_dense(&m, &b, act, &x);
            let layer = DenseLayer::new(Weights::Float(m), b, act).unwrap();
            let got = dense(&layer, &x).unwrap();
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-6, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn dense_shape_errors() {
        let layer = DenseLayer::new(
            Weights::Float(Matrix::zeros(3, 4)),
            vec![0.0; 3],
            Activation::Tanh,
        )
        .unwrap();
        assert!(matches!(
            dense(&layer, &[0.0; 5]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(DenseLayer::new(
            Weights::Float(Matrix::zeros(3, 4)),
            vec![0.0; 2],
            Activation::Tanh
        )
        .is_err());
    }

    #[test]
    fn zero_weights_q8_matches_float() {
        let bias = vec![0.3, -0.2, 1.5];
        let f = DenseLayer::new(
            Weights::Float(Matrix::zeros(3, 16)),
            bias.clone(),
            Activation::Tanh,
        )
        .unwrap();
        let q = DenseLayer {
            weights: f.weights.quantized(),
            ..f.clone()
        };
        let x = vec![0.5; 16];
        assert_eq!(
            dense(&f, &x).unwrap(),
            dense_q8(&q, &quantize_activations(&x)).unwrap()
        );
        let Weights::Int8(qm) = &q.weights else {
            unreachable!()
        };
        assert!(qm.scales.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn dense_q8_relative_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 64, 256, 1.0 / 16.0);
            let x = random_vec(&mut rng, 256);
            let b = vec![0.0; 64];
            let f = DenseLayer::new(Weights::Float(m), b, Activation::Linear).unwrap();
            let q = DenseLayer {
                weights: f.weights.quantized(),
                ..f.clone()
            };
            let yf = dense(&f, &x).unwrap();
            let yq = dense_q8(&q, &quantize_activations(&x)).unwrap();
            let num: f64 = yf.iter().zip(&yq).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
            let den: f64 = yf.iter().map(|a| (*a as f64).powi(2)).sum();
            worst = worst.max((num / den).sqrt());
        }
        assert!(worst <= 0.02, "relative L2 error {worst}");
    }

    #[test]
    fn requantization_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 20, 33, 0.7);
        let q = QMatrix::quantize(&m);
        let q2 = QMatrix::quantize(&q.dequantize());
        assert_eq!(q.data, q2.data);
    }

    #[test]
    fn dense_q8_rejects_float_weights() {
        let layer = DenseLayer::new(
            Weights::Float(Matrix::zeros(2, 2)),
            vec![0.0; 2],
            Activation::Linear,
        )
        .unwrap();
        assert!(dense_q8(&layer, &quantize_activations(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn glu_basics() {
        let unit = GluUnit::new(Weights::Float(Matrix::zeros(4, 4))).unwrap();
        let x = vec![1.0, -2.0, 0.5, 0.0];
        assert_eq!(glu(&unit, &x).unwrap(), vec![0.5, -1.0, 0.25, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = GluUnit::new(Weights::Float(random_matrix(&mut rng, 6, 6, 2.0))).unwrap();
        assert!(glu(&unit, &[0.0; 6]).unwrap().iter().all(|&v| v == 0.0));
        let x = random_vec(&mut rng, 6);
        for (y, x) in glu(&unit, &x).unwrap().iter().zip(&x) {
            assert!(y.abs() <= x.abs());
        }
        assert!(GluUnit::new(Weights::Float(Matrix::zeros(3, 4))).is_err());
    }

    #[test]
    fn conv3_with_silent_history_depends_only_on_current_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 5;
        let w = random_matrix(&mut rng, 4, 3 * n, 0.5);
        let glu_w = random_matrix(&mut rng, 4, 4, 0.5);
        let layer = Conv3Layer::new(
            Weights::Float(w.clone()),
            vec![0.0; 4],
            GluUnit::new(Weights::Float(glu_w)).unwrap(),
        )
        .unwrap();
        let now = random_vec(&mut rng, n);
        let zeros = vec![0.0; n];
        let y = conv3(&layer, &zeros, &zeros, &now).unwrap();

        // Only the t taps (k = 2) matter.
        let cur = Matrix::new(
            4,
            n,
            (0..4)
                .flat_map(|o| (0..n).map(move |i| (o, i)))
                .map(|(o, i)| w.data[o * 3 * n + 3 * i + 2])
                .collect(),
        )
        .unwrap();
        let pre = naive_dense(&cur, &[0.0; 4], Activation::Tanh, &now);
        let want = glu(&layer.glu, &pre).unwrap();
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn upconv4_zero_input_gives_four_equal_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = UpConv4Layer::new(
            Weights::Float(random_matrix(&mut rng, 4 * 6, 5, 1.0)),
            vec![0.0; 24],
            GluUnit::new(Weights::Float(random_matrix(&mut rng, 6, 6, 1.0))).unwrap(),
        )
        .unwrap();
        let out = upconv4(&layer, &[0.0; 5]).unwrap();
        assert_eq!(out.len(), 4);
        for v in &out {
            assert_eq!(v, &out[0]);
            assert!(v.iter().all(|&x| x == 0.0));
        }
        assert!(upconv4(&layer, &[0.0; 4]).is_err());
    }
}
