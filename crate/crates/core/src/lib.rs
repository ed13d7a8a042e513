//! Cross-layer authentication for dense small-cell networks.
//!
//! The MT averages the received signal strength it hears from nearby access
//! points into a fingerprint key, masks and encrypts its identity with it and
//! sends the ciphertext together with the raw RSS vector. The authentication
//! slice re-derives the same key from the vector, recovers the identity,
//! checks the vector against a radio map of trusted zones with k-NN, and only
//! then runs MILENAGE-based AKA keyed by the fingerprint. A successful run is
//! cached per zone, so handovers between cells of one zone skip the exchange.
//!
//! Module map:
//!
//! - [`wire`]: canonical byte encodings
//! - [`radio`]: seeded channel model, mobility and radio-map synthesis
//! - [`fingerprint`]: RSS mean and key expansion
//! - [`aka`]: f1–f5, authentication vectors, identity masking/encryption
//! - [`zone`]: radio map, zone table, k-NN matching and legitimacy checks
//! - [`protocol`]: MT/NS/AS state machines, transport, sessions and worlds
//! - [`adversary`]: scripted attack scenarios
//! - [`cost`]: cost counters and the four-way comparison
//! - [`config`]: run configuration file and defaults

pub mod adversary;
pub mod aka;
pub mod config;
pub mod cost;
pub mod fingerprint;
pub mod protocol;
pub mod radio;
pub mod wire;
pub mod zone;

pub use aka::{AuthVector, Autn, Key128, Milenage, OperatorConstant, Sqn, SqnState};
pub use fingerprint::FingerprintKey;
pub use protocol::{Outcome, SessionVerdict, SlaMode, World};
pub use radio::{Environment, EnvironmentConfig, Position, SimRng};
pub use wire::{ProtocolMessage, ReasonCode, RssReading, RssVector};
pub use zone::{MatchResult, RadioMapRecord, TrustedZoneDb, ZoneTable};
