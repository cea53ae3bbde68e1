//! StocS: a Markovian ensemble language with predicate-based communication.

pub mod bikeshare;
pub mod ctmc;
pub mod error;
pub mod futs;
pub mod interface;
pub mod knowledge;
pub mod measure;
pub mod model;
pub mod rates;
pub mod report;
pub mod semantics;
pub mod sim;
pub mod syntax;
pub mod term;
pub mod value;
