//! Files materialized by `init`: a starter property spec and pattern
//! registry that the demo application and the benchmark exercise.

/// Demo boundary properties: session handshake ordering and key-egress.
pub const PROPERTIES: &str = include_str!("../fixtures/properties.rvp");

/// Demo sensitive patterns: an API token and a PEM key marker.
pub const PATTERNS: &str = include_str!("../fixtures/patterns.tsv");
