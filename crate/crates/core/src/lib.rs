pub mod cli;
pub mod error;
pub mod experiments;
pub mod factor;
pub mod mdp;
pub mod numerics;
pub mod robust;
pub mod synthetic;

pub use error::{Error, Result};
