//! Independent oracles and fixtures backing the acceptance suite.

pub mod fixtures;
pub mod newton;
