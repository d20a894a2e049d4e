//! Compositional augmentation of span-annotated tutor responses, chat-format
//! fine-tune export, token-overlap metrics, and an offline experiment
//! harness.

pub mod augment;
pub mod baseline;
pub mod corpus;
pub mod finetune;
pub mod harness;
pub mod metrics;
pub mod provider;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod util;
