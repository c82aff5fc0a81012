//! Holds the `acceptance` test target (`tests/acceptance.rs`). Kept in its own
//! package so that `cargo test --workspace` runs it after every other suite.
