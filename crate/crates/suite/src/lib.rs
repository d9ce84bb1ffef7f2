//! Holds the end-to-end acceptance suite (`tests/acceptance.rs`).
//!
//! It lives in its own package so that a failing criterion cannot stop
//! `cargo test --workspace` from running the other packages' tests.
