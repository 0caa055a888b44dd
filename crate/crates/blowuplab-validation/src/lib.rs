//! Holds the `acceptance` test target; run it with
//! `cargo test -p blowuplab-validation --test acceptance [-- criterion numbers]`.
