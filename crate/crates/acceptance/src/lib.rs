//! Holds the `acceptance` integration test; run it with
//! `cargo test -p adablur-acceptance --test acceptance -- --nocapture`.
