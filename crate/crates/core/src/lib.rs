#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod baselines;
pub mod cart;
pub mod data;
pub mod forest;
pub mod metrics;
pub mod netcompile;
mod num;
pub mod rng;
pub mod train;
