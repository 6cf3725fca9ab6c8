//! Subframe synthesis network and the pitch-predictive feedback.
//!
//! Each 40-sample subframe is produced from its conditioning latent plus two
//! feedback vectors taken from the synthesis history: the previous subframe
//! and the pitch prediction `p(n)`, both divided by the subframe gain. The
//! output is `tanh` of a dense layer scaled back up by the gain. History
//! lives in the pre-emphasized domain; [`synth_frame`] de-emphasizes.

use crate::dsp::{deemphasis_in_place, EmphasisState, EMPHASIS_ALPHA};
use crate::error::{Error, Result};
use crate::features::{FRAME_SIZE, PITCH_MAX, PITCH_MIN};
use crate::model::{Model, FRAME_SUBFRAMES, SUBFRAME_LEN};
use crate::nn::{Activation, DenseLayer, GluUnit};

/// Samples of synthesis history kept between subframes.
pub const HISTORY_LEN: usize = PITCH_MAX + SUBFRAME_LEN;

#[derive(Debug, Clone)]
pub struct SubframeNet {
    gain: DenseLayer,
    gate: DenseLayer,
    layers: Vec<(DenseLayer, GluUnit)>,
    out: DenseLayer,
}

impl SubframeNet {
    pub fn from_model(model: &Model) -> Result<Self> {
        let w = |name: &str| model.tensor(name)?.to_weights();
        let b = |name: &str| Ok::<_, Error>(model.tensor(name)?.to_f32());
        let layers = (0..model.config().sub_layers)
            .map(|i| {
                let p = format!("sub.layer{i}");
                Ok((
                    DenseLayer::new(
                        w(&format!("{p}.weight"))?,
                        b(&format!("{p}.bias"))?,
                        Activation::Tanh,
                    )?,
                    GluUnit::new(w(&format!("{p}.glu"))?)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gain: DenseLayer::new(w("sub.gain.weight")?, b("sub.gain.bias")?, Activation::Exp)?,
            gate: DenseLayer::new(w("sub.gate.weight")?, b("sub.gate.bias")?, Activation::Sigmoid)?,
            layers,
            out: DenseLayer::new(w("sub.out.weight")?, b("sub.out.bias")?, Activation::Tanh)?,
        })
    }

    /// Size of the conditioning latent this network expects.
    pub fn latent_dim(&self) -> usize {
        self.gain.input_dim()
    }
}

/// Latent plus the gain and pitch gate derived from it.
///
/// Fields are public so callers can pin the gain or gate; a gate outside
/// the network's `(0, 1)` range is accepted as is.
#[derive(Debug, Clone, PartialEq)]
pub struct SubframeConditioning {
    pub latent: Vec<f32>,
    pub gain: f32,
    pub pitch_gate: [f32; SUBFRAME_LEN],
}

impl SubframeConditioning {
    pub fn new(net: &SubframeNet, latent: Vec<f32>) -> Result<Self> {
        let gain = compute_gain(net, &latent)?;
        let pitch_gate = compute_pitch_gate(net, &latent)?;
        Ok(Self {
            latent,
            gain,
            pitch_gate,
        })
    }

    pub fn with_gain(mut self, gain: f32) -> Self {
        self.gain = gain;
        self
    }
}

/// `exp(w . latent + b)`, always evaluated in float.
pub fn compute_gain(net: &SubframeNet, latent: &[f32]) -> Result<f32> {
    let mut g = [0.0f32];
    net.gain.forward_into(latent, &mut g)?;
    if !g[0].is_finite() || g[0] <= 0.0 {
        return Err(Error::NonFinite("subframe gain"));
    }
    Ok(g[0])
}

/// Per-sample pitch gate `sigmoid(W latent + b)`.
pub fn compute_pitch_gate(net: &SubframeNet, latent: &[f32]) -> Result<[f32; SUBFRAME_LEN]> {
    let mut g = [0.0f32; SUBFRAME_LEN];
    net.gate.forward_into(latent, &mut g)?;
    Ok(g)
}

/// Synthesis memory carried from one subframe to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthState {
    history: Vec<f32>,
    prev_gain: f32,
    deemph: EmphasisState,
}

impl Default for SynthState {
    fn default() -> Self {
        Self::new()
    }
}

impl SynthState {
    pub fn new() -> Self {
        Self {
            history: vec![0.0; HISTORY_LEN],
            prev_gain: 1.0,
            deemph: EmphasisState::new(),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new();
    }

    /// Gain of the last generated subframe, 1 before the first.
    pub fn prev_gain(&self) -> f32 {
        self.prev_gain
    }

    /// Pre-emphasized output history, oldest sample first.
    pub fn history(&self) -> &[f32] {
        &self.history
    }

    pub fn history_mut(&mut self) -> &mut [f32] {
        &mut self.history
    }

    pub fn prev_subframe(&self) -> &[f32] {
        &self.history[HISTORY_LEN - SUBFRAME_LEN..]
    }

    fn push(&mut self, sub: &[f32; SUBFRAME_LEN], gain: f32) {
        self.prev_gain = gain;
        self.history.copy_within(SUBFRAME_LEN.., 0);
        self.history[HISTORY_LEN - SUBFRAME_LEN..].copy_from_slice(sub);
    }
}

/// How far back the pitch prediction reads for period `t`: `t`, or `2t`
/// when one period is shorter than a subframe and would reach into samples
/// not yet generated.
pub fn lookback(t: usize) -> usize {
    if t >= SUBFRAME_LEN {
        t
    } else {
        2 * t
    }
}

/// Pitch prediction `p(n)` for the next subframe, `n = 0..40`, divided by
/// the gain of that subframe.
pub fn pitch_predict(state: &SynthState, period: usize, gain: f32) -> [f32; SUBFRAME_LEN] {
    let lag = lookback(period.clamp(PITCH_MIN, PITCH_MAX));
    let start = HISTORY_LEN - lag;
    let inv = 1.0 / gain;
    std::array::from_fn(|n| state.history[start + n] * inv)
}

/// Generates one subframe in the pre-emphasized domain and appends it to
/// the history.
pub fn subframe_forward(
    net: &SubframeNet,
    state: &mut SynthState,
    cond: &SubframeConditioning,
    period: usize,
) -> Result<[f32; SUBFRAME_LEN]> {
    let g = cond.gain;
    if !g.is_finite() || g <= 0.0 {
        return Err(Error::NonFinite("subframe gain"));
    }
    let inv = 1.0 / g;
    let pred = pitch_predict(state, period, g);
    let mut feedback = [0.0f32; 2 * SUBFRAME_LEN];
    for (f, &p) in feedback.iter_mut().zip(state.prev_subframe()) {
        *f = p * inv;
    }
    for n in 0..SUBFRAME_LEN {
        feedback[SUBFRAME_LEN + n] = cond.pitch_gate[n] * pred[n];
    }
    if feedback.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("subframe feedback"));
    }

    let mut h = cond.latent.clone();
    let mut input = Vec::new();
    for (layer, glu) in &net.layers {
        input.clear();
        input.extend_from_slice(&h);
        input.extend_from_slice(&feedback);
        h = vec![0.0; layer.output_dim()];
        layer.forward_into(&input, &mut h)?;
        glu.apply(&mut h)?;
    }
    input.clear();
    input.extend_from_slice(&h);
    input.extend_from_slice(&feedback);
    let mut out = [0.0f32; SUBFRAME_LEN];
    net.out.forward_into(&input, &mut out)?;
    for v in out.iter_mut() {
        *v *= g;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("subframe output"));
    }
    state.push(&out, g);
    Ok(out)
}

/// Runs the four subframes of a frame and de-emphasizes the result.
pub fn synth_frame(
    net: &SubframeNet,
    state: &mut SynthState,
    conds: &[SubframeConditioning; FRAME_SUBFRAMES],
    period: usize,
) -> Result<[f32; FRAME_SIZE]> {
    let mut frame = [0.0f32; FRAME_SIZE];
    for (chunk, c) in frame.chunks_exact_mut(SUBFRAME_LEN).zip(conds) {
        chunk.copy_from_slice(&subframe_forward(net, state, c, period)?);
    }
    deemphasis_in_place(&mut frame, EMPHASIS_ALPHA, &mut state.deemph)?;
    Ok(frame)
}
