//! Modelling, analysis and parameter tuning of Markov-switching positive
//! buffer networks.

pub mod config;
pub mod cli;
pub mod dcsolve;
pub mod gains;
pub mod instances;
pub mod netmodel;
pub mod posylog;
pub mod problems;
pub mod report;
