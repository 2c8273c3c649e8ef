//! Test-only package; the acceptance gate lives in `tests/acceptance.rs`.
