//! The acceptance suite lives in `tests/acceptance.rs`:
//! `cargo test -p mhhfl-verify --test acceptance`.
