//! Train a captioner against image-text matchers and probe what the matchers reward.
//!
//! The guide in `book/` walks through each module; its code blocks run as doctests.

pub mod captioner;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod forensics;
pub mod matcher;
pub mod nn;
pub mod pipeline;
pub mod probes;
pub mod rng;
pub mod textmetrics;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident) => {
            #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
            mod $name {}
        };
    }
    chapter!(introduction);
    chapter!(world);
    chapter!(matchers);
    chapter!(training);
    chapter!(metrics);
    chapter!(forensics);
    chapter!(probes);
    chapter!(pipeline);
}
