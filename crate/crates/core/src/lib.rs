pub mod cluster;
pub mod config;
pub mod cpu_model;
pub mod engine;
pub mod migration;
pub mod policies;
pub mod predictors;
pub mod trace;
