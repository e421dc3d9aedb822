//! Holds the `acceptance` test target; run it with
//! `cargo test -p whisker-validation --test acceptance -- --nocapture`.
