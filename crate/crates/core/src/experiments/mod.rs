pub mod data;
pub mod run;
pub mod spec;

pub use data::*;
pub use run::*;
pub use spec::*;
