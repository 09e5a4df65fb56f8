pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod experiment;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod params;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/encoder.md")]
    mod encoder {}
    #[doc = include_str!("../../../book/src/cross_token.md")]
    mod cross_token {}
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
