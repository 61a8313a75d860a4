//! Operator tooling for the runtime-verification toolkit: provisioning,
//! bridge serving, forensic verification, tamper drills, and a desk-scale
//! overhead benchmark. The `rvtee` binary dispatches into [`commands`];
//! `rvtee-demo` is a small instrumented application for end-to-end drills.

pub mod bench;
pub mod commands;
pub mod config;
pub mod fixtures;
pub mod tamper;
