#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod costs;
pub mod domain;
pub mod dynamics;
pub mod error;
pub mod kernels;
pub mod mpc;
pub mod run;
pub mod sim;
pub mod spectral;
pub mod svgd;

pub use error::{Error, Result};
