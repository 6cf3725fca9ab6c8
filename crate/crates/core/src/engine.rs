//! Streaming synthesis.
//!
//! A [`Network`] holds immutable weights and can be shared between threads
//! through an `Arc`. Each [`SynthStream`] owns its own conditioning and
//! synthesis memory, so streams never see each other's state.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::condnet::{cond_forward, CondNet, CondState};
use crate::dsp::{wav_read, wav_write, Signal, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::features::{analyze, FeatureFrame, FRAME_SIZE, NB_BANDS};
use crate::model::{count_flops, Model, ModelConfig, Precision};
use crate::subframe::{synth_frame, SubframeConditioning, SubframeNet, SynthState};

/// Compiled inference graph.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    precision: Precision,
    cond: CondNet,
    sub: SubframeNet,
}

impl Network {
    pub fn from_model(model: &Model) -> Result<Self> {
        let cond = CondNet::from_model(model)?;
        let sub = SubframeNet::from_model(model)?;
        Ok(Self {
            config: *model.config(),
            precision: model.precision(),
            cond,
            sub,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn cond_net(&self) -> &CondNet {
        &self.cond
    }

    pub fn subframe_net(&self) -> &SubframeNet {
        &self.sub
    }
}

/// Level above which the output guard starts to bend the waveform.
pub const CLIP_KNEE: f32 = 0.98;

/// Keeps samples in `[-1, 1)`: identity up to the knee, `tanh`-shaped above.
pub fn soft_clip(x: f32) -> f32 {
    let a = x.abs();
    let y = if a <= CLIP_KNEE {
        a
    } else {
        let room = 1.0 - CLIP_KNEE;
        CLIP_KNEE + room * ((a - CLIP_KNEE) / room).tanh()
    };
    if x < 0.0 {
        -y.min(1.0)
    } else {
        y.min(32767.0 / 32768.0)
    }
}

/// One synthesis session.
#[derive(Debug, Clone)]
pub struct SynthStream {
    net: Arc<Network>,
    cond: CondState,
    synth: SynthState,
    frames: u64,
    poisoned: bool,
}

impl SynthStream {
    pub fn new(net: Arc<Network>) -> Self {
        let cond = net.cond.new_state();
        Self {
            net,
            cond,
            synth: SynthState::new(),
            frames: 0,
            poisoned: false,
        }
    }

    /// Back to the freshly created state.
    pub fn reset(&mut self) {
        self.cond.reset();
        self.synth.reset();
        self.frames = 0;
        self.poisoned = false;
    }

    pub fn frames_synthesized(&self) -> u64 {
        self.frames
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.net
    }

    /// Synthesizes 160 samples from one feature frame.
    ///
    /// Invalid features are rejected without touching the stream. A numeric
    /// failure inside the network poisons the stream until [`reset`](Self::reset).
    pub fn synthesize_frame(&mut self, frame: &FeatureFrame) -> Result<[f32; FRAME_SIZE]> {
        if self.poisoned {
            return Err(Error::Poisoned);
        }
        frame.validate()?;
        match self.run(frame) {
            Ok(out) => {
                self.frames += 1;
                Ok(out)
            }
            Err(e) => {
                if e.is_numeric_error() {
                    self.poisoned = true;
                }
                Err(e)
            }
        }
    }

    fn run(&mut self, frame: &FeatureFrame) -> Result<[f32; FRAME_SIZE]> {
        let net = &*self.net;
        let embedding = net.cond.embedding(frame.pitch_period);
        let latents = cond_forward(&net.cond, &mut self.cond, frame, &embedding)?;
        let [a, b, c, d] = latents;
        let conds = [
            SubframeConditioning::new(&net.sub, a)?,
            SubframeConditioning::new(&net.sub, b)?,
            SubframeConditioning::new(&net.sub, c)?,
            SubframeConditioning::new(&net.sub, d)?,
        ];
        let mut out = synth_frame(&net.sub, &mut self.synth, &conds, frame.period_samples())?;
        for v in out.iter_mut() {
            *v = soft_clip(*v);
        }
        Ok(out)
    }

    /// Synthesizes consecutive frames, continuing this stream.
    pub fn synthesize(&mut self, frames: &[FeatureFrame]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(frames.len() * FRAME_SIZE);
        for f in frames {
            out.extend_from_slice(&self.synthesize_frame(f)?);
        }
        Ok(out)
    }
}

pub fn create_stream(net: &Arc<Network>) -> SynthStream {
    SynthStream::new(Arc::clone(net))
}

/// Batch synthesis on a fresh stream.
pub fn synthesize(net: &Arc<Network>, frames: &[FeatureFrame]) -> Result<Vec<f32>> {
    SynthStream::new(Arc::clone(net)).synthesize(frames)
}

/// Analysis followed by synthesis.
pub fn copy_synthesis(net: &Arc<Network>, signal: &[f32]) -> Result<Vec<f32>> {
    synthesize(net, &analyze(signal)?)
}

/// [`copy_synthesis`] on WAV bytes.
pub fn copy_synthesis_wav(net: &Arc<Network>, wav: &[u8]) -> Result<Vec<u8>> {
    let input = wav_read(wav)?;
    let out = copy_synthesis(net, input.samples())?;
    wav_write(&Signal::new(out)?)
}

/// Result of [`bench`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    /// Compute time divided by audio duration.
    pub rtf: f64,
    /// Nominal FLOPs per second of audio from the budget counter.
    pub flops_nominal: f64,
    pub samples_per_sec: f64,
    pub audio_seconds: f64,
    pub compute_seconds: f64,
}

/// Deterministic feature sequence with speech-like ranges: a wandering
/// pitch contour, alternating voiced and unvoiced stretches and a slowly
/// varying spectral envelope.
pub fn pseudo_features(frames: usize, seed: u64) -> Vec<FeatureFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut period: f32 = rng.gen_range(60.0..200.0);
    let mut env = [0.0f32; NB_BANDS];
    let mut voiced = true;
    (0..frames)
        .map(|_| {
            if rng.gen_bool(0.05) {
                voiced = !voiced;
            }
            period = (period * rng.gen_range(0.97f32..1.03)).clamp(40.0, 300.0);
            for (i, e) in env.iter_mut().enumerate() {
                let spread = if i == 0 { 4.0 } else { 1.0 / (1 + i) as f32 };
                *e = 0.8 * *e + 0.2 * rng.gen_range(-spread..spread);
            }
            let mut bfcc = env;
            bfcc[0] += if voiced { -4.0 } else { -12.0 };
            let voicing = if voiced {
                rng.gen_range(0.6..0.95)
            } else {
                rng.gen_range(0.0..0.3)
            };
            FeatureFrame::new(bfcc, period, voicing).expect("in range")
        })
        .collect()
}

/// Times synthesis of `seconds` of audio from [`pseudo_features`].
pub fn bench(net: &Arc<Network>, seconds: f64) -> Result<BenchReport> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bench duration must be positive, got {seconds}"
        )));
    }
    let n = ((seconds * SAMPLE_RATE as f64) / FRAME_SIZE as f64).ceil() as usize;
    let feats = pseudo_features(n, 0x5eed);
    let mut stream = SynthStream::new(Arc::clone(net));
    let start = Instant::now();
    let mut sink = 0.0f32;
    for f in &feats {
        sink += stream.synthesize_frame(f)?[0];
    }
    let compute_seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    let audio_seconds = (n * FRAME_SIZE) as f64 / SAMPLE_RATE as f64;
    Ok(BenchReport {
        rtf: compute_seconds / audio_seconds,
        flops_nominal: count_flops(&net.config).total(),
        samples_per_sec: (n * FRAME_SIZE) as f64 / compute_seconds,
        audio_seconds,
        compute_seconds,
    })
}
