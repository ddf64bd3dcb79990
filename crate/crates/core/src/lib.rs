//! Branch-and-bound laboratory for learned variable selection.
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod bnb;
pub mod datagen;
pub mod encoding;
pub mod gcnn;
pub mod instances;
pub mod policies;
pub mod simplex;
