//! Caption forensics: closed-lexicon POS tags, corpus statistics, top
//! unigrams, merged-tag prefixes and regular-expression sentence patterns.

mod patterns;
mod stats;
mod tagging;

pub use patterns::{summarize_patterns, PatternRule, COVERAGE_TARGET, MAX_RULES};
pub use stats::{mine_prefixes, sentence_stats, top_unigrams, PrefixRow, StatsReport};
pub use tagging::{merge_tags, pos_tag, MergedTag, TaggedCaption};
