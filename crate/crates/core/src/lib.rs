//! Evolution of recurrent neural networks built from simple neurons and
//! gated memory cells (Δ-RNN, GRU, LSTM, MGU, UGRNN).
//!
//! Candidate networks are graph genomes ([`genome`]) that are trained for a
//! few epochs with backpropagation through time ([`trainer`]) starting from
//! weights inherited from their parents ([`evolution`]). An asynchronous
//! steady-state island population ([`islands`], [`runtime`]) keeps the best
//! networks, and [`harness`] drives repeated k-fold experiments over CSV
//! time series ([`data`]) and summarizes them.

pub mod cells;
pub mod data;
pub mod evolution;
pub mod genome;
pub mod harness;
pub mod islands;
pub mod runtime;
pub mod trainer;
