//! Signal primitives: emphasis filters, STFT magnitudes and WAV I/O.
//!
//! The emphasis filters are streaming: every call takes an explicit
//! [`EmphasisState`], and splitting a signal into arbitrary chunks gives
//! bit-identical output to processing it in one call.

use std::io::Cursor;

use rustfft::{num_complex::Complex32, FftPlanner};

use crate::error::{Error, Result};

/// Sampling rate of every signal handled by the crate.
pub const SAMPLE_RATE: u32 = 16_000;

/// Emphasis coefficient used by the synthesis output filter.
pub const EMPHASIS_ALPHA: f32 = 0.85;

/// STFT window sizes accepted by [`stft_mag`].
pub const STFT_WINDOW_SIZES: [usize; 12] =
    [64, 80, 128, 160, 256, 320, 512, 640, 1024, 1280, 2048, 2560];

/// Mono 16 kHz audio with finite samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signal {
    samples: Vec<f32>,
}

impl Signal {
    pub fn new(samples: Vec<f32>) -> Result<Self> {
        check_finite(&samples, "signal")?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

pub(crate) fn check_finite(x: &[f32], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_alpha(alpha: f32) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "emphasis coefficient {alpha} outside [0, 1)"
        )))
    }
}

// --- Emphasis filters ---

/// Memory of a first-order emphasis filter, kept in double precision.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmphasisState {
    pub mem: f64,
}

impl EmphasisState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Pre-emphasis `y(n) = x(n) - alpha * x(n-1)`; `state` holds the last input.
pub fn preemphasis(x: &[f32], alpha: f32, state: &mut EmphasisState) -> Result<Vec<f32>> {
    let mut y = x.to_vec();
    preemphasis_in_place(&mut y, alpha, state)?;
    Ok(y)
}

pub fn preemphasis_in_place(x: &mut [f32], alpha: f32, state: &mut EmphasisState) -> Result<()> {
    check_alpha(alpha)?;
    check_finite(x, "pre-emphasis input")?;
    let a = alpha as f64;
    for v in x.iter_mut() {
        let input = *v as f64;
        *v = (input - a * state.mem) as f32;
        state.mem = input;
    }
    Ok(())
}

/// De-emphasis `y(n) = x(n) + alpha * y(n-1)`, the inverse of [`preemphasis`].
pub fn deemphasis(x: &[f32], alpha: f32, state: &mut EmphasisState) -> Result<Vec<f32>> {
    let mut y = x.to_vec();
    deemphasis_in_place(&mut y, alpha, state)?;
    Ok(y)
}

pub fn deemphasis_in_place(x: &mut [f32], alpha: f32, state: &mut EmphasisState) -> Result<()> {
    check_alpha(alpha)?;
    check_finite(x, "de-emphasis input")?;
    let a = alpha as f64;
    for v in x.iter_mut() {
        let out = *v as f64 + a * state.mem;
        state.mem = out;
        *v = out as f32;
    }
    Ok(())
}

// --- STFT ---

/// Periodic Hann window of length `len`.
pub fn hann_periodic(len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| {
            let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
            (0.5 - 0.5 * phase.cos()) as f32
        })
        .collect()
}

/// One-sided STFT magnitudes, `frames x bins` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window_size: usize,
    pub frames: usize,
    pub bins: usize,
    pub magnitudes: Vec<f32>,
}

impl Spectrogram {
    pub fn hop(&self) -> usize {
        self.window_size / 4
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        &self.magnitudes[index * self.bins..(index + 1) * self.bins]
    }
}

/// Magnitude STFT with a periodic Hann window and 75% overlap.
///
/// Frames start at multiples of the hop `window_size / 4`; no padding is
/// applied, so the frame count is `1 + (len - window_size) / hop`.
pub fn stft_mag(x: &[f32], window_size: usize) -> Result<Spectrogram> {
    if !STFT_WINDOW_SIZES.contains(&window_size) {
        return Err(Error::InvalidArgument(format!(
            "unsupported STFT window size {window_size}"
        )));
    }
    if x.len() < window_size {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples is shorter than the {window_size}-sample window",
            x.len()
        )));
    }
    check_finite(x, "STFT input")?;

    let hop = window_size / 4;
    let frames = 1 + (x.len() - window_size) / hop;
    let bins = window_size / 2 + 1;
    let window = hann_periodic(window_size);

    let fft = FftPlanner::<f32>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex32::default(); window_size];
    let mut scratch = vec![Complex32::default(); fft.get_inplace_scratch_len()];
    let mut magnitudes = Vec::with_capacity(frames * bins);

    for f in 0..frames {
        let start = f * hop;
        for ((dst, &s), &w) in buf
            .iter_mut()
            .zip(&x[start..start + window_size])
            .zip(&window)
        {
            *dst = Complex32::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        magnitudes.extend(buf[..bins].iter().map(|c| c.norm()));
    }

    Ok(Spectrogram {
        window_size,
        frames,
        bins,
        magnitudes,
    })
}

// --- WAV I/O ---

/// Decodes a 16 kHz mono PCM16 WAV file. Samples are scaled by 1/32768.
pub fn wav_read(bytes: &[u8]) -> Result<Signal> {
    let reader =
        hound::WavReader::new(Cursor::new(bytes)).map_err(|e| Error::Wav(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "expected 16-bit integer PCM, found {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono audio, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Wav(format!(
            "expected {SAMPLE_RATE} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f32 / 32768.0)
                .map_err(|e| Error::Wav(e.to_string()))
        })
        .collect::<Result<Vec<f32>>>()?;
    Ok(Signal { samples })
}

/// Converts one sample to PCM16 with rounding and saturation.
pub fn to_pcm16(x: f32) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a signal as 16 kHz mono PCM16 WAV.
pub fn wav_write(signal: &Signal) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, spec).map_err(|e| Error::Wav(e.to_string()))?;
        for &s in signal.samples() {
            writer
                .write_sample(to_pcm16(s))
                .map_err(|e| Error::Wav(e.to_string()))?;
        }
        writer.finalize().map_err(|e| Error::Wav(e.to_string()))?;
    }
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(n: usize) -> Vec<f32> {
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x
    }

    #[test]
    fn preemphasis_zero_alpha_is_identity() {
        let x = vec![0.3, -0.2, 0.9, 0.0, -1.0];
        let y = preemphasis(&x, 0.0, &mut EmphasisState::new()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn preemphasis_impulse() {
        let y = preemphasis(&impulse(4), 0.85, &mut EmphasisState::new()).unwrap();
        assert_eq!(y, vec![1.0, -0.85, 0.0, 0.0]);
    }

    #[test]
    fn deemphasis_impulse_is_geometric() {
        let y = deemphasis(&impulse(50), 0.85, &mut EmphasisState::new()).unwrap();
        for (n, v) in y.iter().enumerate() {
            assert!((*v as f64 - 0.85f64.powi(n as i32)).abs() < 1e-6, "n={n}");
        }
    }

    #[test]
    fn deemphasis_zero_alpha_and_zero_input() {
        let x = vec![0.5, -0.25, 0.125];
        assert_eq!(deemphasis(&x, 0.0, &mut EmphasisState::new()).unwrap(), x);
        let z = deemphasis(&[0.0; 32], 0.85, &mut EmphasisState::new()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emphasis_rejects_bad_input() {
        let mut st = EmphasisState::new();
        assert!(matches!(
            preemphasis(&[0.0, f32::NAN], 0.85, &mut st),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            deemphasis(&[f32::INFINITY], 0.85, &mut st),
            Err(Error::NonFinite(_))
        ));
        assert!(preemphasis(&[0.0], 1.0, &mut st).is_err());
        assert!(deemphasis(&[0.0], -0.1, &mut st).is_err());
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let s = stft_mag(&[0.0; 1000], 320).unwrap();
        assert_eq!(s.bins, 161);
        assert_eq!(s.frames, 1 + (1000 - 320) / 80);
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn stft_sinusoid_peaks_at_its_bin() {
        let l = 320;
        let bin = 17;
        let f = bin as f64 * SAMPLE_RATE as f64 / l as f64;
        let x: Vec<f32> = (0..2000)
            .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / SAMPLE_RATE as f64).sin() as f32)
            .collect();
        let s = stft_mag(&x, l).unwrap();
        for fr in 0..s.frames {
            let row = s.frame(fr);
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(peak, bin);
        }
    }

    #[test]
    fn stft_rejects_bad_sizes() {
        assert!(stft_mag(&[0.0; 100], 320).is_err());
        assert!(stft_mag(&[0.0; 1000], 300).is_err());
    }

    #[test]
    fn wav_scale_and_empty_file() {
        let sig = Signal::new(vec![0.5, -1.0, 0.0]).unwrap();
        let bytes = wav_write(&sig).unwrap();
        let back = wav_read(&bytes).unwrap();
        assert_eq!(back.samples(), &[0.5, -1.0, 0.0]);
        assert_eq!(to_pcm16(0.5), 16384);
        assert_eq!(to_pcm16(1.5), 32767);
        assert_eq!(to_pcm16(-2.0), -32768);

        let empty = wav_write(&Signal::default()).unwrap();
        assert!(wav_read(&empty).unwrap().is_empty());
    }

    #[test]
    fn wav_rejects_wrong_format() {
        let mut cursor = Cursor::new(Vec::new());
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = wav_read(cursor.get_ref()).unwrap_err();
        assert!(err.to_string().contains("mono"), "{err}");

        let mut cursor = Cursor::new(Vec::new());
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        hound::WavWriter::new(&mut cursor, spec)
            .unwrap()
            .finalize()
            .unwrap();
        let err = wav_read(cursor.get_ref()).unwrap_err();
        assert!(err.to_string().contains("44100"), "{err}");

        assert!(matches!(wav_read(b"not a wav"), Err(Error::Wav(_))));
    }
}
