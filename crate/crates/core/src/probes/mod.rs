//! Verification probes: score captions that were edited in controlled ways
//! and compare group means.
//!
//! - replacement: swap visual nouns, or everything else, for random words
//! - template: re-inject a caption's nouns into fixed sentence templates
//! - noun scaling: template captions carrying k = 3..7 scene nouns

mod replace;
mod report;
mod run;
mod template;

pub use replace::{replace_nonvisual_words, replace_visual_words, Replaced, WordPools};
pub use report::{GroupStat, ProbeItem, ProbeReport};
pub use run::{
    ce_inputs, noun_pool, run_noun_scaling_probe, run_replacement_probe, run_template_probe, visual_nouns, ProbeInput,
    K_RANGE,
};
pub use template::{build_template_caption, Slot, Template};
