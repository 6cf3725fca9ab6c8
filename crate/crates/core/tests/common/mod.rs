//! Shared helpers: straight-line f64 reference implementations and signal
//! generators used as oracles by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use framevoc::features::{pitch_embedding, FeatureFrame};
use framevoc::model::{EmbeddingKind, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        cond_hidden: 48,
        cond_sub_dim: 32,
        sub_hidden: 64,
        sub_layers: 2,
        ..Default::default()
    }
}

pub fn sine(freq: f64, n: usize, amp: f64) -> Vec<f32> {
    (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
        .collect()
}

pub fn white_noise(n: usize, amp: f32, seed: u64) -> Vec<f32> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-amp..amp)).collect()
}

/// Periodic pulse-train-like signal with an exact period of `t` samples.
pub fn periodic(t: usize, n: usize) -> Vec<f32> {
    let shape: Vec<f64> = (0..t)
        .map(|i| {
            let x = i as f64 / t as f64;
            (-8.0 * x).exp() * (2.0 * PI * 3.0 * x).sin() + 0.3 * (2.0 * PI * x).cos()
        })
        .collect();
    (0..n).map(|i| (0.4 * shape[i % t]) as f32).collect()
}

/// Three seconds of speech-like audio: a harmonic source with gliding
/// pitch and syllabic envelope, alternating with noise bursts.
pub fn utterance() -> Vec<f32> {
    let mut r = rng(11);
    let mut phase = 0.0f64;
    (0..48_000)
        .map(|i| {
            let t = i as f64 / 16000.0;
            let f0 = 120.0 + 30.0 * (2.0 * PI * 0.7 * t).sin();
            phase += 2.0 * PI * f0 / 16000.0;
            let env = 0.3 * (0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin());
            let voiced = ((t * 2.0) as usize) % 3 != 2;
            let v = if voiced {
                (1..8).map(|k| (k as f64 * phase).sin() / k as f64).sum::<f64>()
            } else {
                r.gen_range(-0.5..0.5)
            };
            (0.5 * env * v) as f32
        })
        .collect()
}

/// Mean per-frame SNR over 160-sample frames whose reference energy is at
/// least 1e-6, each clamped to [-10, 35] dB.
pub fn segmental_snr(reference: &[f32], test: &[f32]) -> f64 {
    let mut snrs = Vec::new();
    for (a, b) in reference.chunks_exact(160).zip(test.chunks_exact(160)) {
        let e: f64 = a.iter().map(|&v| (v as f64).powi(2)).sum();
        if e < 1e-6 {
            continue;
        }
        let d: f64 = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum();
        snrs.push((10.0 * (e / d.max(1e-30)).log10()).clamp(-10.0, 35.0));
    }
    snrs.iter().sum::<f64>() / snrs.len() as f64
}

pub fn rel_l2(reference: &[f32], test: &[f32]) -> f64 {
    let num: f64 = reference
        .iter()
        .zip(test)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    let den: f64 = reference.iter().map(|&a| (a as f64).powi(2)).sum();
    (num / den).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reference network in f64 with exact `tanh`/`sigmoid`, written directly
/// from the layer equations and reading weights by tensor name.
pub struct RefNet {
    pub cfg: ModelConfig,
    t: HashMap<String, Vec<f64>>,
}

pub struct RefState {
    pub prev2: Vec<f64>,
    pub prev1: Vec<f64>,
    pub history: Vec<f64>,
    pub deemph: f64,
}

impl RefNet {
    pub fn new(model: &Model) -> Self {
        let t = model
            .tensors()
            .iter()
            .map(|r| (r.name.clone(), r.to_f32().iter().map(|&v| v as f64).collect()))
            .collect();
        Self {
            cfg: *model.config(),
            t,
        }
    }

    pub fn state(&self) -> RefState {
        RefState {
            prev2: vec![0.0; self.cfg.cond_hidden],
            prev1: vec![0.0; self.cfg.cond_hidden],
            history: vec![0.0; 360],
            deemph: 0.0,
        }
    }

    fn w(&self, name: &str) -> &[f64] {
        &self.t[name]
    }

    /// `W x` for the row-major tensor `name` with `x.len()` columns.
    fn mv(&self, name: &str, x: &[f64]) -> Vec<f64> {
        let w = self.w(name);
        let cols = x.len();
        assert_eq!(w.len() % cols, 0, "{name}");
        (0..w.len() / cols)
            .map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum())
            .collect()
    }

    fn glu(&self, name: &str, x: Vec<f64>) -> Vec<f64> {
        let g = self.mv(name, &x);
        x.iter().zip(&g).map(|(a, b)| a * sigmoid(*b)).collect()
    }

    fn bias_tanh(&self, name: &str, mut y: Vec<f64>) -> Vec<f64> {
        for (v, b) in y.iter_mut().zip(self.w(name)) {
            *v = (*v + b).tanh();
        }
        y
    }

    pub fn embedding(&self, period: f32) -> Vec<f64> {
        match self.cfg.embedding_kind {
            EmbeddingKind::FixedSinusoidal => {
                pitch_embedding(period).0.iter().map(|&v| v as f64).collect()
            }
            EmbeddingKind::LearnedTable => {
                let row = (period.round() as usize).clamp(32, 320) - 32;
                self.w("cond.embed.table")[row * 12..row * 12 + 12].to_vec()
            }
        }
    }

    pub fn cond(&self, st: &mut RefState, f: &FeatureFrame) -> Vec<Vec<f64>> {
        let mut input: Vec<f64> = f.conditioning_features().iter().map(|&v| v as f64).collect();
        input.extend(self.embedding(f.pitch_period));
        let fc = self.bias_tanh("cond.fc.bias", self.mv("cond.fc.weight", &input));
        let fc = self.glu("cond.fc.glu", fc);

        let h = self.cfg.cond_hidden;
        let w = self.w("cond.conv.weight");
        let b = self.w("cond.conv.bias");
        let taps = [&st.prev2, &st.prev1, &fc];
        let conv: Vec<f64> = (0..h)
            .map(|o| {
                let mut acc = b[o];
                for i in 0..h {
                    for (k, tap) in taps.iter().enumerate() {
                        acc += w[(o * h + i) * 3 + k] * tap[i];
                    }
                }
                acc.tanh()
            })
            .collect();
        let conv = self.glu("cond.conv.glu", conv);
        st.prev2 = std::mem::replace(&mut st.prev1, fc);

        let up = self.bias_tanh("cond.up.bias", self.mv("cond.up.weight", &conv));
        let s = self.cfg.cond_sub_dim;
        (0..4)
            .map(|k| self.glu("cond.up.glu", up[k * s..(k + 1) * s].to_vec()))
            .collect()
    }

    pub fn gain(&self, latent: &[f64]) -> f64 {
        (self.mv("sub.gain.weight", latent)[0] + self.w("sub.gain.bias")[0]).exp()
    }

    pub fn gate(&self, latent: &[f64]) -> Vec<f64> {
        self.mv("sub.gate.weight", latent)
            .iter()
            .zip(self.w("sub.gate.bias"))
            .map(|(a, b)| sigmoid(a + b))
            .collect()
    }

    /// One subframe with explicit gain and gate; appends to the history.
    pub fn subframe_with(
        &self,
        st: &mut RefState,
        latent: &[f64],
        g: f64,
        gate: &[f64],
        period: usize,
    ) -> Vec<f64> {
        let lag = if period >= 40 { period } else { 2 * period };
        let n = st.history.len();
        let mut fb: Vec<f64> = st.history[n - 40..].iter().map(|v| v / g).collect();
        fb.extend((0..40).map(|i| gate[i] * st.history[n - lag + i] / g));

        let mut h = latent.to_vec();
        for l in 0..self.cfg.sub_layers {
            let mut x = h.clone();
            x.extend_from_slice(&fb);
            let y = self.bias_tanh(
                &format!("sub.layer{l}.bias"),
                self.mv(&format!("sub.layer{l}.weight"), &x),
            );
            h = self.glu(&format!("sub.layer{l}.glu"), y);
        }
        h.extend_from_slice(&fb);
        let out: Vec<f64> = self
            .bias_tanh("sub.out.bias", self.mv("sub.out.weight", &h))
            .iter()
            .map(|v| v * g)
            .collect();
        st.history.drain(..40);
        st.history.extend_from_slice(&out);
        out
    }

    pub fn subframe(&self, st: &mut RefState, latent: &[f64], period: usize) -> Vec<f64> {
        let g = self.gain(latent);
        let gate = self.gate(latent);
        self.subframe_with(st, latent, g, &gate, period)
    }

    /// De-emphasized frame, before the output guard.
    pub fn frame(&self, st: &mut RefState, f: &FeatureFrame) -> Vec<f64> {
        let period = (f.pitch_period.round() as usize).clamp(32, 320);
        let latents = self.cond(st, f);
        let mut out = Vec::with_capacity(160);
        for l in &latents {
            out.extend(self.subframe(st, l, period));
        }
        for v in out.iter_mut() {
            *v += 0.85 * st.deemph;
            st.deemph = *v;
        }
        out
    }
}

pub fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}
