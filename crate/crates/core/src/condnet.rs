//! Frame conditioning network.
//!
//! `[features, pitch embedding]` (32 values) go through a dense layer, a
//! causal 3-tap convolution over frames and a 4x transposed convolution,
//! each followed by `tanh` and a GLU. The result is one latent vector per
//! 2.5 ms subframe.

use crate::error::{Error, Result};
use crate::features::{
    pitch_embedding, FeatureFrame, PitchEmbedding, COND_INPUT_DIM, EMBED_DIM, NB_FEATURES,
    PITCH_MAX, PITCH_MIN,
};
use crate::model::{EmbeddingKind, Model};
use crate::nn::{Activation, Conv3Layer, DenseLayer, GluUnit, UpConv4Layer, UPSAMPLE};

#[derive(Debug, Clone)]
pub struct CondNet {
    embed_table: Option<Vec<f32>>,
    fc: DenseLayer,
    fc_glu: GluUnit,
    conv: Conv3Layer,
    up: UpConv4Layer,
}

/// Post-dense frame vectors for `t-2` and `t-1`; zero at stream start.
#[derive(Debug, Clone, PartialEq)]
pub struct CondState {
    prev2: Vec<f32>,
    prev1: Vec<f32>,
}

impl CondState {
    pub fn new(hidden: usize) -> Self {
        Self {
            prev2: vec![0.0; hidden],
            prev1: vec![0.0; hidden],
        }
    }

    pub fn reset(&mut self) {
        self.prev2.fill(0.0);
        self.prev1.fill(0.0);
    }
}

impl CondNet {
    pub fn from_model(model: &Model) -> Result<Self> {
        let c = model.config();
        let embed_table = match c.embedding_kind {
            EmbeddingKind::FixedSinusoidal => None,
            EmbeddingKind::LearnedTable => {
                let table = model.tensor("cond.embed.table")?.to_f32();
                if table.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return Err(Error::Malformed(
                        "pitch embedding table values must lie in [-1, 1]".into(),
                    ));
                }
                Some(table)
            }
        };
        let w = |name: &str| model.tensor(name)?.to_weights();
        let b = |name: &str| Ok::<_, Error>(model.tensor(name)?.to_f32());
        Ok(Self {
            embed_table,
            fc: DenseLayer::new(w("cond.fc.weight")?, b("cond.fc.bias")?, Activation::Tanh)?,
            fc_glu: GluUnit::new(w("cond.fc.glu")?)?,
            conv: Conv3Layer::new(
                w("cond.conv.weight")?,
                b("cond.conv.bias")?,
                GluUnit::new(w("cond.conv.glu")?)?,
            )?,
            up: UpConv4Layer::new(
                w("cond.up.weight")?,
                b("cond.up.bias")?,
                GluUnit::new(w("cond.up.glu")?)?,
            )?,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.fc.output_dim()
    }

    pub fn sub_dim(&self) -> usize {
        self.up.output_dim()
    }

    pub fn new_state(&self) -> CondState {
        CondState::new(self.hidden_dim())
    }

    /// Pitch embedding in the variant this network was trained with.
    pub fn embedding(&self, pitch_period: f32) -> PitchEmbedding {
        match &self.embed_table {
            None => pitch_embedding(pitch_period),
            Some(table) => {
                let row = (pitch_period.round() as usize).clamp(PITCH_MIN, PITCH_MAX) - PITCH_MIN;
                let mut e = [0.0; EMBED_DIM];
                e.copy_from_slice(&table[row * EMBED_DIM..(row + 1) * EMBED_DIM]);
                PitchEmbedding(e)
            }
        }
    }
}

/// Runs one frame and returns its four subframe latents.
pub fn cond_forward(
    net: &CondNet,
    state: &mut CondState,
    features: &FeatureFrame,
    embedding: &PitchEmbedding,
) -> Result<[Vec<f32>; UPSAMPLE]> {
    let mut input = [0.0f32; COND_INPUT_DIM];
    input[..NB_FEATURES].copy_from_slice(&features.conditioning_features());
    input[NB_FEATURES..].copy_from_slice(&embedding.0);

    let mut frame = vec![0.0; net.hidden_dim()];
    net.fc.forward_into(&input, &mut frame)?;
    net.fc_glu.apply(&mut frame)?;

    let mut conv = vec![0.0; net.hidden_dim()];
    net.conv
        .forward_into(&state.prev2, &state.prev1, &frame, &mut conv)?;
    std::mem::swap(&mut state.prev2, &mut state.prev1);
    state.prev1 = frame;

    let d = net.sub_dim();
    let mut up = vec![0.0; UPSAMPLE * d];
    net.up.forward_into(&conv, &mut up)?;
    if up.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("conditioning output"));
    }
    Ok(std::array::from_fn(|s| up[s * d..(s + 1) * d].to_vec()))
}
