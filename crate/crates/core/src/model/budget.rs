//! Parameter and FLOP accounting.
//!
//! One multiply-add counts as two FLOPs. Elementwise work is counted as one
//! FLOP per bias add, activation, multiply or divide; a GLU costs a sigmoid
//! and a multiply per element on top of its gate matrix.

use super::{required_tensors, ModelConfig};
use crate::features::EMBED_DIM;

/// Frames per second of audio.
const FRAME_RATE: f64 = 100.0;

/// Per-second FLOP breakdown of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlopReport {
    /// Multiply-adds per frame in the conditioning network.
    pub cond_macs_per_frame: u64,
    /// Multiply-adds per subframe in the subframe network.
    pub subframe_macs_per_subframe: u64,
    pub cond_flops: f64,
    pub subframe_flops: f64,
    pub elementwise_flops: f64,
}

impl FlopReport {
    pub fn total(&self) -> f64 {
        self.cond_flops + self.subframe_flops + self.elementwise_flops
    }
}

/// Number of trainable scalars.
pub fn count_params(config: &ModelConfig) -> usize {
    required_tensors(config).iter().map(|s| s.numel()).sum()
}

/// FLOPs per second contributed by an `inputs x outputs` matrix applied
/// `rate` times per second.
pub fn dense_flops(inputs: usize, outputs: usize, rate: f64) -> f64 {
    2.0 * inputs as f64 * outputs as f64 * rate
}

/// FLOPs per second of synthesized audio.
pub fn count_flops(c: &ModelConfig) -> FlopReport {
    let (h, s, hs, n) = (
        c.cond_hidden as u64,
        c.cond_sub_dim as u64,
        c.sub_hidden as u64,
        c.subframe_len as u64,
    );
    let up = c.frame_subframes as u64;
    let subframe_rate = FRAME_RATE * up as f64;

    let cond_macs = 32 * h      // fc
        + h * h                  // fc GLU
        + 3 * h * h              // conv
        + h * h                  // conv GLU
        + h * up * s             // upsampling
        + up * s * s; //            GLU per subframe

    let mut sub_macs = s + n * s; // gain and gate neurons
    for i in 0..c.sub_layers {
        sub_macs += c.sub_layer_input(i) as u64 * hs + hs * hs;
    }
    sub_macs += (hs + 2 * n) * n;

    let glu = 2;
    let cond_elem = EMBED_DIM as u64    // embedding
        + 2 * (h + h + glu * h)          // fc, conv: bias, tanh, GLU
        + up * (s + s + glu * s); //        upsampling
    let sub_elem = 2                     // gain bias, exp
        + 2 * n                          // gate bias, sigmoid
        + 3 * n                          // feedback normalization, gating
        + c.sub_layers as u64 * (hs + hs + glu * hs)
        + 3 * n                          // output bias, tanh, gain
        + 2 * n; //                         de-emphasis

    FlopReport {
        cond_macs_per_frame: cond_macs,
        subframe_macs_per_subframe: sub_macs,
        cond_flops: 2.0 * cond_macs as f64 * FRAME_RATE,
        subframe_flops: 2.0 * sub_macs as f64 * subframe_rate,
        elementwise_flops: cond_elem as f64 * FRAME_RATE + sub_elem as f64 * subframe_rate,
    }
}
