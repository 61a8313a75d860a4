//! Tamper-evident runtime-verification toolkit.
//!
//! The crate is organised around one data path:
//!
//! * [`hsm`] — a simulated sealing device holding a random keystream that is
//!   consumed chunk-by-chunk, with burn-on-read semantics: once a chunk has
//!   keyed a seal it is overwritten with fresh random octets and can never be
//!   recovered from the device again. The only pristine copy lives on the
//!   forensic node ([`hsm::SafeCopy`]).
//! * [`seallog`] — appends application data to monitored log files and pairs
//!   every append with an authentication record in a single `SEAL_log`.
//! * [`verifier`] — forensic, sequential re-authentication of every record
//!   against the safe keystream copy, classifying any tampering it finds.
//! * [`rvmon`] — property automata folded over ordered boundary events;
//!   verdicts are themselves sealed through [`seallog`].
//! * [`taint`] — approximate matching of sensitive byte patterns against
//!   outbound buffers (coarse q-gram pre-filter, fine edit-distance matcher).
//! * [`bridge`] — newline-delimited wire protocol feeding out-of-process
//!   events into the monitor and scanner, sealing each raw event line before
//!   it can influence monitor state.

pub mod bridge;
pub mod hsm;
pub mod mac;
pub mod rvmon;
pub mod seallog;
pub mod taint;
pub mod verifier;
