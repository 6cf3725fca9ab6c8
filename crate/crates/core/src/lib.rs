//! Frame-rate neural vocoder for 16 kHz speech.
//!
//! Features ([`features`]) describe 10 ms frames; a conditioning network
//! ([`condnet`]) turns each frame into four latents, and a subframe network
//! ([`subframe`]) produces 40 samples per latent, feeding back its own
//! output and a pitch-period-delayed copy of it. [`engine`] ties the two
//! together into streams.
//!
//! ```
//! use std::sync::Arc;
//! use framevoc::engine::{synthesize, Network};
//! use framevoc::features::FeatureFrame;
//! use framevoc::model::{Model, ModelConfig};
//!
//! let config = ModelConfig { cond_hidden: 32, cond_sub_dim: 16, sub_hidden: 32, sub_layers: 1, ..Default::default() };
//! let net = Arc::new(Network::from_model(&Model::random(config, 0)?)?);
//! let frame = FeatureFrame::new([0.0; 18], 100.0, 1.0)?;
//! assert_eq!(synthesize(&net, &[frame; 5])?.len(), 800);
//! # Ok::<(), framevoc::Error>(())
//! ```
//!
//! The guide in `book/` covers each stage in more depth.

pub mod condnet;
pub mod dsp;
pub mod engine;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod subframe;
pub use error::{Error, Result};

// Book chapters run as doctests so the guide cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/conditioning.md")]
    mod conditioning {}
    #[doc = include_str!("../../../book/src/subframe.md")]
    mod subframe {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/testing.md")]
    mod testing {}
}
