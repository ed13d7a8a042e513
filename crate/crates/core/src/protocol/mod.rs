//! Three-party protocol engine: MT, NS and AS state machines, both SLA
//! flows, the per-zone authentication cache and half-open bookkeeping.

mod entities;
mod transport;
mod world;

use thiserror::Error;

pub use entities::{
    AsState, CacheEntry, FastPath, HalfOpenEntry, HalfOpenTable, IssuedAv, MtState, NsState,
    Subscriber,
};
pub use transport::{Node, SessionId, Transport, WireRecord};
pub use world::{
    identity_of, run_session, static_key_of, SessionOptions, World, WorldSpec, WorldTemplate,
    DEFAULT_EPSILON_HEADROOM, WORLD_EPOCH_NS,
};

use crate::aka::{Amf, OperatorConstant, DEFAULT_AMF, DEFAULT_SQN_WINDOW};
use crate::cost::CostCounters;
use crate::radio::RadioError;
use crate::wire::{ReasonCode, WireError};
use crate::zone::DEFAULT_K;

/// Where the AS sends the authentication vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlaMode {
    /// AS answers the MT directly and checks RES itself.
    Decentralized,
    /// AV goes to the NS, which challenges the MT and checks RES.
    Centralized,
}

impl SlaMode {
    pub const ALL: [SlaMode; 2] = [SlaMode::Decentralized, SlaMode::Centralized];

    pub fn as_str(self) -> &'static str {
        match self {
            SlaMode::Decentralized => "decentralized",
            SlaMode::Centralized => "centralized",
        }
    }
}

impl std::str::FromStr for SlaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decentralized" => Ok(SlaMode::Decentralized),
            "centralized" => Ok(SlaMode::Centralized),
            other => Err(format!("unknown SLA mode {other:?}")),
        }
    }
}

impl std::fmt::Display for SlaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which exchange an MT runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    /// Fingerprint-keyed AKA behind a zone check.
    CrossLayer,
    /// Identity and static key sent in the clear, then AKA under that key.
    /// Exists only as the insecure baseline.
    LegacyKeyOverAir,
    /// Identity in the clear, AKA under a pre-shared static key, no location
    /// check.
    PlainAka,
    /// RSS vector only; the AS answers with a location verdict and no AKA.
    LocationOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    MutualAuthSuccess,
    FastPathSuccess,
    RejectedByAs,
    RejectedByMt,
    RejectedByNs,
    TimedOut,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::MutualAuthSuccess => "MutualAuthSuccess",
            Outcome::FastPathSuccess => "FastPathSuccess",
            Outcome::RejectedByAs => "RejectedByAs",
            Outcome::RejectedByMt => "RejectedByMt",
            Outcome::RejectedByNs => "RejectedByNs",
            Outcome::TimedOut => "TimedOut",
        }
    }

    pub fn is_success(self) -> bool {
        matches!(self, Outcome::MutualAuthSuccess | Outcome::FastPathSuccess)
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionVerdict {
    pub session: SessionId,
    pub mt_id: u32,
    pub outcome: Outcome,
    pub reason: ReasonCode,
    pub counters: CostCounters,
}

/// Tunables shared by all entities of a world.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub sqn_window: u64,
    pub knn_k: usize,
    /// Localization error range, in cdBm distance units.
    pub epsilon_cdbm: f64,
    pub freshness_window_ns: u64,
    pub half_open_capacity: usize,
    pub half_open_timeout_ns: u64,
    pub cache_ttl_ns: u64,
    pub hop_latency_ns: u64,
    pub amf: Amf,
    pub op: OperatorConstant,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            sqn_window: DEFAULT_SQN_WINDOW,
            knn_k: DEFAULT_K,
            epsilon_cdbm: f64::INFINITY,
            freshness_window_ns: 2_000_000_000,
            half_open_capacity: 64,
            half_open_timeout_ns: 500_000_000,
            cache_ttl_ns: 3_600_000_000_000,
            hop_latency_ns: 5_000_000,
            amf: DEFAULT_AMF,
            op: OperatorConstant::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("valid cached keys for zone {0}; use the fast path")]
    FastPathAvailable(u32),
    #[error("unknown MT {0}")]
    UnknownMt(u32),
    #[error("MT {0} already exists")]
    DuplicateMt(u32),
    #[error("cell {0} belongs to no zone")]
    UnzonedCell(u32),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Zone(#[from] crate::zone::ZoneError),
    #[error(transparent)]
    Aka(#[from] crate::aka::AkaError),
}
