//! Host package for the acceptance suite in `tests/acceptance.rs`.
//!
//! Run it with `cargo test -p dextra-validation --test acceptance`; it prints
//! one PASS/FAIL line per criterion and exits nonzero if any criterion fails.
