//! The recurrent captioning model: vocabulary, teacher-forced
//! log-likelihoods with exact gradients, and greedy/sampled decoding.

mod decode;
mod model;
mod vocab;

pub use decode::{decode_greedy, decode_sample, DecodeOutput};
pub use model::{ce_loss_and_grad, ce_loss_and_grad_with_inputs, forward_logprobs, step_distributions, CaptionerParams};
pub use vocab::{build_vocabulary, Caption, Specials, Vocabulary, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN};

pub(crate) use decode::sample_index;
