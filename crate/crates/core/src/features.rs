//! Acoustic analysis: 18 BFCCs, pitch period and voicing every 10 ms.
//!
//! Each frame `i` covers samples `160 i .. 160 i + 160`. The cepstrum is
//! computed on a 320-sample Hann-windowed segment centred on the frame; the
//! pitch tracker looks back 720 samples from the end of that segment. The
//! signal is pre-emphasized before both. Samples before the start of the
//! stream and after its end are taken as zero.

use std::sync::OnceLock;

use rustfft::{num_complex::Complex64, Fft, FftPlanner};

use crate::dsp::{self, EmphasisState, EMPHASIS_ALPHA};
use crate::error::{Error, Result};

pub const FRAME_SIZE: usize = 160;
pub const ANALYSIS_WINDOW: usize = 320;
pub const NB_BANDS: usize = 18;
pub const NB_FEATURES: usize = 20;
pub const EMBED_DIM: usize = 12;
/// Conditioning input width: features plus pitch embedding.
pub const COND_INPUT_DIM: usize = NB_FEATURES + EMBED_DIM;
pub const PITCH_MIN: usize = 32;
pub const PITCH_MAX: usize = 320;
/// Samples of pre-emphasized history visible to the pitch tracker.
pub const PITCH_WINDOW: usize = 720;
/// Period reported before the first voiced frame.
pub const DEFAULT_PERIOD: f32 = 160.0;
/// Energy floor applied to band energies before the logarithm.
pub const BAND_ENERGY_FLOOR: f64 = 1e-10;

/// Band centres in Hz: 200 Hz spacing up to 1.6 kHz, then widening to 8 kHz.
pub const BAND_CENTERS_HZ: [f64; NB_BANDS] = [
    0.0, 200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0, 1600.0, 2000.0, 2400.0, 2800.0,
    3200.0, 4000.0, 4800.0, 5600.0, 6800.0, 8000.0,
];

const CORR_LEN: usize = PITCH_WINDOW - PITCH_MAX;
const NB_LAGS: usize = PITCH_MAX - PITCH_MIN + 1;
const VOICED_THRESHOLD: f32 = 0.4;
// Tracker costs, in correlation units per octave.
const OCTAVE_COST: f64 = 0.02;
const TRANSITION_COST: f64 = 0.1;
const SCORE_MEMORY: f64 = 0.5;

/// One 10 ms feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub bfcc: [f32; NB_BANDS],
    pub pitch_period: f32,
    pub voicing: f32,
}

impl FeatureFrame {
    pub fn new(bfcc: [f32; NB_BANDS], pitch_period: f32, voicing: f32) -> Result<Self> {
        let frame = Self {
            bfcc,
            pitch_period,
            voicing,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature frame"));
        }
        if !(PITCH_MIN as f32..=PITCH_MAX as f32).contains(&self.pitch_period) {
            return Err(Error::Features(format!(
                "pitch period {} outside [{PITCH_MIN}, {PITCH_MAX}]",
                self.pitch_period
            )));
        }
        if !(0.0..=1.0).contains(&self.voicing) {
            return Err(Error::Features(format!(
                "voicing {} outside [0, 1]",
                self.voicing
            )));
        }
        Ok(())
    }

    /// Layout used by `.ffe` files: BFCCs, pitch period in samples, voicing.
    pub fn to_array(&self) -> [f32; NB_FEATURES] {
        let mut out = [0.0; NB_FEATURES];
        out[..NB_BANDS].copy_from_slice(&self.bfcc);
        out[NB_BANDS] = self.pitch_period;
        out[NB_BANDS + 1] = self.voicing;
        out
    }

    pub fn from_array(v: &[f32; NB_FEATURES]) -> Result<Self> {
        let mut bfcc = [0.0; NB_BANDS];
        bfcc.copy_from_slice(&v[..NB_BANDS]);
        Self::new(bfcc, v[NB_BANDS], v[NB_BANDS + 1])
    }

    /// Integer period used for the long-term prediction lookback.
    pub fn period_samples(&self) -> usize {
        (self.pitch_period.round() as usize).clamp(PITCH_MIN, PITCH_MAX)
    }

    /// The 20 values fed to the conditioning network; the period is mapped
    /// to `log2(T / 32) / log2(10)`.
    pub fn conditioning_features(&self) -> [f32; NB_FEATURES] {
        let mut out = self.to_array();
        out[NB_BANDS] = normalized_period(self.pitch_period);
        out
    }
}

/// Maps a period in `[32, 320]` to `[0, 1]` on a log scale.
pub fn normalized_period(period: f32) -> f32 {
    let p = period.clamp(PITCH_MIN as f32, PITCH_MAX as f32) as f64;
    ((p / PITCH_MIN as f64).log2() / (PITCH_MAX as f64 / PITCH_MIN as f64).log2()) as f32
}

// --- Pitch embedding ---

/// Fixed 12-dimensional pitch embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEmbedding(pub [f32; EMBED_DIM]);

/// `[sin(2 pi k phi) for k in 1..=6, cos(2 pi k phi) for k in 1..=6]` with
/// `phi = log2(T / 32) / log2(10)`.
pub fn pitch_embedding(pitch_period: f32) -> PitchEmbedding {
    if !(PITCH_MIN as f32..=PITCH_MAX as f32).contains(&pitch_period) {
        log::warn!("pitch period {pitch_period} clamped to [{PITCH_MIN}, {PITCH_MAX}]");
    }
    let phi = normalized_period(pitch_period) as f64;
    let mut e = [0.0; EMBED_DIM];
    for k in 1..=EMBED_DIM / 2 {
        let a = 2.0 * std::f64::consts::PI * k as f64 * phi;
        e[k - 1] = a.sin() as f32;
        e[EMBED_DIM / 2 + k - 1] = a.cos() as f32;
    }
    PitchEmbedding(e)
}

// --- BFCC ---

struct CepstrumTables {
    fft: std::sync::Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    // band x bin triangular weights
    bands: Vec<[f64; NB_BANDS]>,
    // DCT-II, orthonormal: dct[k][n]
    dct: [[f64; NB_BANDS]; NB_BANDS],
}

fn cepstrum_tables() -> &'static CepstrumTables {
    static TABLES: OnceLock<CepstrumTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(ANALYSIS_WINDOW);
        let window = (0..ANALYSIS_WINDOW)
            .map(|n| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * n as f64 / ANALYSIS_WINDOW as f64).cos()
            })
            .collect();
        let bins = ANALYSIS_WINDOW / 2 + 1;
        let bands = (0..bins)
            .map(|k| triangular_weights(k as f64 * dsp::SAMPLE_RATE as f64 / ANALYSIS_WINDOW as f64))
            .collect();
        let mut dct = [[0.0; NB_BANDS]; NB_BANDS];
        for (k, row) in dct.iter_mut().enumerate() {
            let norm = if k == 0 {
                (1.0 / NB_BANDS as f64).sqrt()
            } else {
                (2.0 / NB_BANDS as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = norm
                    * (std::f64::consts::PI / NB_BANDS as f64 * (n as f64 + 0.5) * k as f64).cos();
            }
        }
        CepstrumTables {
            fft,
            window,
            bands,
            dct,
        }
    })
}

/// Weight of each band at frequency `f`; adjacent triangles sum to one.
pub fn triangular_weights(f: f64) -> [f64; NB_BANDS] {
    let mut w = [0.0; NB_BANDS];
    let c = &BAND_CENTERS_HZ;
    if f >= c[NB_BANDS - 1] {
        w[NB_BANDS - 1] = 1.0;
        return w;
    }
    for j in 0..NB_BANDS - 1 {
        if f >= c[j] && f < c[j + 1] {
            let frac = (f - c[j]) / (c[j + 1] - c[j]);
            w[j] = 1.0 - frac;
            w[j + 1] = frac;
            break;
        }
    }
    w
}

/// BFCCs of one 320-sample pre-emphasized segment.
pub fn compute_bfcc(window: &[f32]) -> Result<[f32; NB_BANDS]> {
    if window.len() != ANALYSIS_WINDOW {
        return Err(Error::ShapeMismatch {
            context: "BFCC analysis window",
            expected: ANALYSIS_WINDOW,
            got: window.len(),
        });
    }
    dsp::check_finite(window, "BFCC input")?;
    let t = cepstrum_tables();
    let mut buf: Vec<Complex64> = window
        .iter()
        .zip(&t.window)
        .map(|(&x, &w)| Complex64::new(x as f64 * w, 0.0))
        .collect();
    t.fft.process(&mut buf);

    let mut energy = [0.0f64; NB_BANDS];
    for (c, w) in buf.iter().zip(&t.bands) {
        let p = c.norm_sqr();
        for (e, wj) in energy.iter_mut().zip(w) {
            *e += wj * p;
        }
    }
    let log_e = energy.map(|e| e.max(BAND_ENERGY_FLOOR).log10());
    let mut out = [0.0f32; NB_BANDS];
    for (o, row) in out.iter_mut().zip(&t.dct) {
        *o = row.iter().zip(&log_e).map(|(a, b)| a * b).sum::<f64>() as f32;
    }
    Ok(out)
}

// --- Pitch ---

/// Normalized autocorrelation at every lag in `[32, 320]`, computed on the
/// last 400 samples of a 720-sample window.
fn normalized_correlations(w: &[f32]) -> Option<Vec<f64>> {
    let x = &w[w.len() - CORR_LEN..];
    let ex: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
    if ex < 1e-12 {
        return None;
    }
    let end = w.len();
    let mut out = Vec::with_capacity(NB_LAGS);
    for lag in PITCH_MIN..=PITCH_MAX {
        let y = &w[end - CORR_LEN - lag..end - lag];
        let mut xy = 0.0f64;
        let mut ey = 0.0f64;
        for (&a, &b) in x.iter().zip(y) {
            xy += a as f64 * b as f64;
            ey += (b as f64).powi(2);
        }
        out.push(if ey < 1e-12 { 0.0 } else { xy / (ex * ey).sqrt() });
    }
    Some(out)
}

/// Frame-to-frame pitch tracker.
///
/// Scores every lag with its normalized correlation minus a small cost per
/// octave above the shortest lag, then runs a causal Viterbi recursion that
/// charges a cost proportional to the log-ratio of consecutive periods. The
/// reported period is the best path's current state.
#[derive(Debug, Clone)]
pub struct PitchTracker {
    scores: Vec<f64>,
    log_lags: Vec<f64>,
    last_period: f32,
}

impl Default for PitchTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl PitchTracker {
    pub fn new() -> Self {
        Self {
            scores: vec![0.0; NB_LAGS],
            log_lags: (PITCH_MIN..=PITCH_MAX).map(|l| (l as f64).log2()).collect(),
            last_period: DEFAULT_PERIOD,
        }
    }

    /// Returns `(pitch_period, voicing)` for a window of at least 720 samples;
    /// only the last 720 are used.
    pub fn estimate(&mut self, window: &[f32]) -> Result<(f32, f32)> {
        if window.len() < PITCH_WINDOW {
            return Err(Error::InvalidArgument(format!(
                "pitch window needs {PITCH_WINDOW} samples, got {}",
                window.len()
            )));
        }
        dsp::check_finite(window, "pitch input")?;
        let w = &window[window.len() - PITCH_WINDOW..];
        let Some(corr) = normalized_correlations(w) else {
            self.scores.fill(0.0);
            return Ok((self.last_period, 0.0));
        };

        let base = self.log_lags[0];
        let mut next = vec![0.0f64; NB_LAGS];
        for (j, n) in next.iter_mut().enumerate() {
            let carried = self
                .scores
                .iter()
                .zip(&self.log_lags)
                .map(|(s, ll)| s - TRANSITION_COST * (self.log_lags[j] - ll).abs())
                .fold(f64::NEG_INFINITY, f64::max);
            *n = corr[j] - OCTAVE_COST * (self.log_lags[j] - base) + SCORE_MEMORY * carried;
        }
        let (best, &top) = next
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty lag range");
        next.iter_mut().for_each(|s| *s -= top);
        self.scores = next;

        let voicing = corr[best].clamp(0.0, 1.0) as f32;
        if voicing >= VOICED_THRESHOLD {
            self.last_period = (PITCH_MIN + best) as f32;
        }
        Ok((self.last_period, voicing))
    }
}

/// Single-window pitch estimate with a fresh tracker.
pub fn estimate_pitch(window: &[f32]) -> Result<(f32, f32)> {
    PitchTracker::new().estimate(window)
}

// --- Streaming analysis ---

/// Streaming feature extractor; one per audio stream.
#[derive(Debug, Clone)]
pub struct Analyzer {
    emphasis: EmphasisState,
    tracker: PitchTracker,
    // Pre-emphasized samples; buf[0] is at absolute index `base`.
    buf: Vec<f32>,
    base: i64,
    consumed: usize,
    emitted: usize,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl Analyzer {
    pub fn new() -> Self {
        let lead = PITCH_WINDOW - Self::window_end(0) as usize;
        Self {
            emphasis: EmphasisState::new(),
            tracker: PitchTracker::new(),
            buf: vec![0.0; lead],
            base: -(lead as i64),
            consumed: 0,
            emitted: 0,
        }
    }

    /// Absolute index one past the last sample of frame `i`'s analysis window.
    fn window_end(i: usize) -> i64 {
        (i * FRAME_SIZE + FRAME_SIZE + (ANALYSIS_WINDOW - FRAME_SIZE) / 2) as i64
    }

    /// Feeds samples and returns every frame whose analysis window is complete.
    pub fn push(&mut self, samples: &[f32]) -> Result<Vec<FeatureFrame>> {
        let pre = dsp::preemphasis(samples, EMPHASIS_ALPHA, &mut self.emphasis)?;
        self.buf.extend_from_slice(&pre);
        self.consumed += samples.len();
        let mut out = Vec::new();
        while self.consumed >= ANALYSIS_WINDOW
            && Self::window_end(self.emitted) <= self.consumed as i64
        {
            out.push(self.emit()?);
        }
        Ok(out)
    }

    /// Flushes the frames left at end of stream, zero-padding the last
    /// analysis windows. A stream shorter than 320 samples yields no frames.
    pub fn finish(mut self) -> Result<Vec<FeatureFrame>> {
        if self.consumed < ANALYSIS_WINDOW {
            return Ok(Vec::new());
        }
        let total = self.consumed / FRAME_SIZE;
        let mut out = Vec::new();
        while self.emitted < total {
            let need = (Self::window_end(self.emitted) - self.base) as usize;
            if self.buf.len() < need {
                self.buf.resize(need, 0.0);
            }
            out.push(self.emit()?);
        }
        Ok(out)
    }

    fn emit(&mut self) -> Result<FeatureFrame> {
        let end = (Self::window_end(self.emitted) - self.base) as usize;
        let bfcc = compute_bfcc(&self.buf[end - ANALYSIS_WINDOW..end])?;
        let (pitch_period, voicing) = self.tracker.estimate(&self.buf[end - PITCH_WINDOW..end])?;
        self.emitted += 1;

        // Keep what the next frame's pitch window needs.
        let keep_from = Self::window_end(self.emitted) - PITCH_WINDOW as i64;
        let drop = (keep_from - self.base).max(0) as usize;
        self.buf.drain(..drop.min(self.buf.len()));
        self.base += drop as i64;

        FeatureFrame::new(bfcc, pitch_period, voicing)
    }
}

/// One-shot analysis: one frame per 160 samples.
pub fn analyze(signal: &[f32]) -> Result<Vec<FeatureFrame>> {
    let mut a = Analyzer::new();
    let mut frames = a.push(signal)?;
    frames.extend(a.finish()?);
    Ok(frames)
}

// --- Feature files ---

/// Serializes frames as little-endian `f32`, 20 per frame, no header.
pub fn write_ffe(frames: &[FeatureFrame]) -> Vec<u8> {
    frames
        .iter()
        .flat_map(|f| f.to_array())
        .flat_map(f32::to_le_bytes)
        .collect()
}

pub fn read_ffe(bytes: &[u8]) -> Result<Vec<FeatureFrame>> {
    let frame_bytes = 4 * NB_FEATURES;
    if !bytes.len().is_multiple_of(frame_bytes) {
        return Err(Error::Features(format!(
            "{} bytes is not a multiple of the {frame_bytes}-byte frame",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(frame_bytes)
        .map(|chunk| {
            let mut v = [0.0f32; NB_FEATURES];
            for (dst, b) in v.iter_mut().zip(chunk.chunks_exact(4)) {
                *dst = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            FeatureFrame::from_array(&v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, n: usize, amp: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect()
    }

    #[test]
    fn triangles_partition_unity() {
        for k in 0..=160 {
            let w = triangular_weights(k as f64 * 50.0);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn silence_bfcc() {
        let c = compute_bfcc(&[0.0; ANALYSIS_WINDOW]).unwrap();
        let c0 = (1.0f64 / 18.0).sqrt() * 18.0 * (1e-10f64).log10();
        assert!((c[0] as f64 - c0).abs() < 1e-4);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn gain_only_moves_c0() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f32> = (0..ANALYSIS_WINDOW).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let y: Vec<f32> = x.iter().map(|v| v * 0.25).collect();
        let cx = compute_bfcc(&x).unwrap();
        let cy = compute_bfcc(&y).unwrap();
        let shift = (1.0f64 / 18.0).sqrt() * 18.0 * (0.0625f64).log10();
        assert!(((cy[0] - cx[0]) as f64 - shift).abs() < 1e-4);
        for k in 1..NB_BANDS {
            assert!((cx[k] - cy[k]).abs() < 1e-4, "c{k}");
        }
    }

    #[test]
    fn bfcc_wrong_length() {
        assert!(compute_bfcc(&[0.0; 100]).is_err());
    }

    #[test]
    fn sinusoid_pitch() {
        let (t, v) = estimate_pitch(&sine(100.0, PITCH_WINDOW, 0.5)).unwrap();
        assert!((t - 160.0).abs() <= 1.0, "{t}");
        assert!(v >= 0.9);
        let (t, _) = estimate_pitch(&sine(500.0, PITCH_WINDOW, 0.5)).unwrap();
        assert_eq!(t, 32.0);
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x: Vec<f32> = (0..PITCH_WINDOW).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, v) = estimate_pitch(&x).unwrap();
            assert!(v <= 0.4, "{v}");
        }
    }

    #[test]
    fn zero_window_keeps_previous_period() {
        let mut tr = PitchTracker::new();
        assert_eq!(tr.estimate(&[0.0; PITCH_WINDOW]).unwrap(), (160.0, 0.0));
        tr.estimate(&sine(250.0, PITCH_WINDOW, 0.5)).unwrap();
        assert_eq!(tr.estimate(&[0.0; PITCH_WINDOW]).unwrap(), (64.0, 0.0));
        assert!(tr.estimate(&[0.0; 100]).is_err());
    }

    #[test]
    fn embedding_boundaries() {
        for p in [32.0, 320.0] {
            let e = pitch_embedding(p).0;
            assert!(e[..6].iter().all(|v| v.abs() < 1e-6), "{e:?}");
            assert!(e[6..].iter().all(|v| (v - 1.0).abs() < 1e-6), "{e:?}");
        }
    }

    #[test]
    fn embedding_range_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let p = rng.gen_range(32.0f32..=320.0);
            assert!(pitch_embedding(p).0.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn frame_counts() {
        assert_eq!(analyze(&vec![0.0; 1600]).unwrap().len(), 10);
        assert_eq!(analyze(&vec![0.0; 319]).unwrap().len(), 0);
        assert_eq!(analyze(&vec![0.0; 320]).unwrap().len(), 2);
        assert_eq!(analyze(&[]).unwrap().len(), 0);
    }

    #[test]
    fn frame_validation() {
        assert!(FeatureFrame::new([0.0; 18], 20.0, 0.5).is_err());
        assert!(FeatureFrame::new([0.0; 18], 100.0, 1.5).is_err());
        assert!(FeatureFrame::new([f32::NAN; 18], 100.0, 0.5).is_err());
        let f = FeatureFrame::new([0.0; 18], 100.4, 0.5).unwrap();
        assert_eq!(f.period_samples(), 100);
        assert_eq!(normalized_period(32.0), 0.0);
        assert!((normalized_period(320.0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn ffe_round_trip_and_errors() {
        let frames = analyze(&sine(140.0, 3200, 0.3)).unwrap();
        let bytes = write_ffe(&frames);
        assert_eq!(bytes.len(), frames.len() * 80);
        assert_eq!(read_ffe(&bytes).unwrap(), frames);
        assert!(matches!(read_ffe(&bytes[..79]), Err(Error::Features(_))));
        let mut bad = bytes.clone();
        bad[72..76].copy_from_slice(&1000.0f32.to_le_bytes());
        assert!(read_ffe(&bad).is_err());
    }
}
