//! Para-Kähler immersions into para-Kähler space forms.

pub mod builder;
pub mod classification;
pub mod diastasis;
pub mod domain;
pub mod dsl;
pub mod error;
pub mod jets;
pub mod linalg;
pub mod multiindex;
pub mod paracomplex;
pub mod pfaffian;
pub mod separability;
pub mod spaceforms;

pub use error::{PkError, Result};
