//! End-to-end acceptance checks for `ldx-core`. Everything lives in the
//! `acceptance` test target:
//!
//! ```text
//! cargo test -p ldx-validation --test acceptance
//! ```
