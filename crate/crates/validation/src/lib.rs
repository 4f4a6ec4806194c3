//! Holds the acceptance report (`tests/acceptance.rs`); run it with
//! `cargo test -p hvsense-validation`. Kept in its own package so the rest of
//! the workspace's tests run before it.
