//! Holds the `acceptance` test target. The package sorts after the others so
//! that `cargo test --workspace` runs it last.
