//! A world is one deployment: environment, radio map, AS, NS, a set of MTs
//! and the transport between them. Building the radio map and calibrating
//! epsilon is the expensive part, so it lives in a [`WorldTemplate`] that can
//! stamp out fresh worlds cheaply.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::entities::{AsState, FastPath, MtState, NsState};
use super::transport::{Node, SessionId, Transport};
use super::{Flavor, Outcome, ProtocolError, ProtocolParams, SessionVerdict, SlaMode};
use crate::aka::{Block, Key128};
use crate::cost::CostCounters;
use crate::radio::{
    rng_from_seed, synthesize_radio_map, Environment, EnvironmentConfig, Position, SimRng,
};
use crate::wire::{ProtocolMessage, ReasonCode};
use crate::zone::{
    build_zone_table, calibrate_epsilon, Anchor, Calibration, RadioMapRecord, TrustedZoneDb,
    ZoneTable,
    DEFAULT_CELLS_PER_ZONE, DEFAULT_PERCENTILE,
};

/// Simulated time at which a fresh world starts.
pub const WORLD_EPOCH_NS: u64 = 1_000_000_000;

/// Inputs for building a [`WorldTemplate`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub env: EnvironmentConfig,
    pub cells_per_zone: usize,
    pub orientations: u32,
    pub samples_per_combo: u32,
    pub calibration_queries: usize,
    pub percentile: f64,
    /// Multiplier applied to the calibrated percentile.
    pub epsilon_headroom: f64,
    /// Fixed epsilon; skips calibration when set.
    pub epsilon_override: Option<f64>,
    pub params: ProtocolParams,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            env: EnvironmentConfig::default(),
            cells_per_zone: DEFAULT_CELLS_PER_ZONE,
            orientations: 4,
            samples_per_combo: 25,
            calibration_queries: 1000,
            percentile: DEFAULT_PERCENTILE,
            epsilon_headroom: DEFAULT_EPSILON_HEADROOM,
            epsilon_override: None,
            params: ProtocolParams::default(),
        }
    }
}

/// Default multiplier on the calibrated percentile.
pub const DEFAULT_EPSILON_HEADROOM: f64 = 1.0;

/// Shared, immutable parts of a world.
#[derive(Debug, Clone)]
pub struct WorldTemplate {
    pub env: Arc<Environment>,
    pub zones: Arc<ZoneTable>,
    pub db: Arc<TrustedZoneDb>,
    pub calibration: Option<Arc<Calibration>>,
    pub params: ProtocolParams,
    pub anchors: Arc<Vec<Anchor>>,
}

impl WorldTemplate {
    /// Synthesizes the radio map with the default layout and calibrates
    /// epsilon. The map uses the config seed; calibration uses a stream
    /// derived from it.
    pub fn build(spec: &WorldSpec) -> Result<Self, ProtocolError> {
        let (env, zones, db) = Self::synthesize_map(spec)?;
        Self::from_parts(env, zones, db, spec)
    }

    /// The default layout, its zone table and a freshly synthesized map,
    /// without calibration.
    pub fn synthesize_map(spec: &WorldSpec) -> Result<(Environment, ZoneTable, TrustedZoneDb), ProtocolError> {
        let env = Environment::default_layout(spec.env.clone())?;
        let zones = build_zone_table(&env.cell_ids(), spec.cells_per_zone)?;
        let mut rng = rng_from_seed(spec.env.seed);
        let samples = synthesize_radio_map(
            &env.default_map_grid(),
            spec.orientations,
            spec.samples_per_combo,
            env.aps(),
            &env.config,
            &mut rng,
        )?;
        let db = TrustedZoneDb::from_samples(samples, &env, &zones)?;
        Ok((env, zones, db))
    }

    /// The default layout over a map read from disk.
    pub fn with_map(spec: &WorldSpec, records: Vec<RadioMapRecord>) -> Result<Self, ProtocolError> {
        let env = Environment::default_layout(spec.env.clone())?;
        let zones = build_zone_table(&env.cell_ids(), spec.cells_per_zone)?;
        let db = TrustedZoneDb::new(records, env.config.noise_floor_cdbm)?;
        Self::from_parts(env, zones, db, spec)
    }

    /// Wraps an existing map, e.g. one loaded from disk.
    pub fn from_parts(
        env: Environment,
        zones: ZoneTable,
        db: TrustedZoneDb,
        spec: &WorldSpec,
    ) -> Result<Self, ProtocolError> {
        let mut params = spec.params.clone();
        let calibration = match spec.epsilon_override {
            Some(eps) => {
                params.epsilon_cdbm = eps;
                None
            }
            None => {
                let mut rng = rng_from_seed(spec.env.seed ^ 0x6361_6c69_6272_6174);
                let c = calibrate_epsilon(
                    &db,
                    &env,
                    params.knn_k,
                    spec.calibration_queries,
                    spec.percentile,
                    &mut rng,
                )?;
                params.epsilon_cdbm = c.epsilon * spec.epsilon_headroom;
                log::info!(
                    "calibrated epsilon {:.1} (p{} of {} legit queries, headroom {})",
                    params.epsilon_cdbm,
                    spec.percentile * 100.0,
                    c.samples.len(),
                    spec.epsilon_headroom
                );
                Some(Arc::new(c))
            }
        };
        let anchors = Arc::new(db.anchors());
        Ok(Self {
            env: Arc::new(env),
            zones: Arc::new(zones),
            db: Arc::new(db),
            calibration,
            params,
            anchors,
        })
    }

    /// A fresh world with MTs `0..n_mts` enrolled and parked at the first
    /// mapped location.
    pub fn instantiate(&self, n_mts: u32) -> World {
        let mut w = World {
            env: Arc::clone(&self.env),
            zones: Arc::clone(&self.zones),
            params: self.params.clone(),
            as_state: AsState::new(
                Arc::clone(&self.db),
                Arc::clone(&self.zones),
                self.params.half_open_capacity,
                self.params.half_open_timeout_ns,
            ),
            ns: NsState::new(self.params.half_open_capacity, self.params.half_open_timeout_ns),
            mts: BTreeMap::new(),
            transport: Transport::new(self.params.hop_latency_ns),
            clock_ns: WORLD_EPOCH_NS,
            next_session: 1,
            anchors: Arc::clone(&self.anchors),
        };
        for id in 0..n_mts {
            w.add_mt(id).expect("ids are unique");
        }
        w
    }
}

/// Permanent identity of MT `id`.
pub fn identity_of(id: u32) -> Block {
    let mut h = Sha256::new();
    h.update(b"im");
    h.update(id.to_be_bytes());
    h.finalize()[..16].try_into().expect("16 bytes")
}

/// Pre-shared static key of MT `id`; used only by the baseline flows.
pub fn static_key_of(id: u32) -> Key128 {
    let mut h = Sha256::new();
    h.update(b"static-key");
    h.update(id.to_be_bytes());
    Key128(h.finalize()[..16].try_into().expect("16 bytes"))
}

#[derive(Debug, Clone)]
pub struct World {
    pub env: Arc<Environment>,
    pub zones: Arc<ZoneTable>,
    pub params: ProtocolParams,
    pub as_state: AsState,
    pub ns: NsState,
    mts: BTreeMap<u32, MtState>,
    pub transport: Transport,
    pub clock_ns: u64,
    next_session: SessionId,
    anchors: Arc<Vec<Anchor>>,
}

impl World {
    /// Creates and enrolls MT `id`, placed at the first mapped location.
    pub fn add_mt(&mut self, id: u32) -> Result<(), ProtocolError> {
        if self.mts.contains_key(&id) {
            return Err(ProtocolError::DuplicateMt(id));
        }
        let im = identity_of(id);
        let key = static_key_of(id);
        let mt = MtState::new(id, im, key, self.params.sqn_window)?;
        self.as_state.enroll(im, key);
        self.mts.insert(id, mt);
        let a = self.anchors[0];
        self.place_mt(id, a.position, a.orientation)
    }

    /// Adds an MT without enrolling its identity, e.g. one run by an
    /// adversary with borrowed credentials.
    pub fn insert_mt(&mut self, mt: MtState) -> Result<(), ProtocolError> {
        let id = mt.id;
        if self.mts.contains_key(&id) {
            return Err(ProtocolError::DuplicateMt(id));
        }
        let pos = mt.position;
        let orientation = mt.orientation;
        self.mts.insert(id, mt);
        self.place_mt(id, pos, orientation)
    }

    pub fn remove_mt(&mut self, id: u32) -> Option<MtState> {
        self.mts.remove(&id)
    }

    pub fn mt(&self, id: u32) -> Option<&MtState> {
        self.mts.get(&id)
    }

    pub fn mt_mut(&mut self, id: u32) -> Option<&mut MtState> {
        self.mts.get_mut(&id)
    }

    pub fn mt_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.mts.keys().copied()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn db(&self) -> &TrustedZoneDb {
        self.as_state.db()
    }

    /// Moves an MT; its serving cell and zone follow from the position.
    pub fn place_mt(&mut self, id: u32, position: Position, orientation: u32) -> Result<(), ProtocolError> {
        let cell = self.env.serving_cell(&position);
        let zone = self.zones.zone_of(cell).ok_or(ProtocolError::UnzonedCell(cell))?;
        let mt = self.mts.get_mut(&id).ok_or(ProtocolError::UnknownMt(id))?;
        mt.position = position;
        mt.orientation = orientation;
        mt.serving_cell = cell;
        mt.current_zone = zone;
        Ok(())
    }

    /// Places an MT at a uniformly chosen mapped location/orientation.
    pub fn place_at_random_anchor(&mut self, id: u32, rng: &mut SimRng) -> Result<Anchor, ProtocolError> {
        let a = self.anchors[rng.gen_range(0..self.anchors.len())];
        self.place_mt(id, a.position, a.orientation)?;
        Ok(a)
    }

    pub fn new_session(&mut self) -> SessionId {
        let s = self.next_session;
        self.next_session += 1;
        s
    }

    pub fn advance(&mut self, ns: u64) {
        self.clock_ns += ns;
    }

    /// Drops expired half-open entries at both NS and AS.
    pub fn purge_expired(&mut self) -> usize {
        let now = self.clock_ns;
        self.ns.purge_expired(now).len() + self.as_state.pending.purge_expired(now).len()
    }
}

/// How a session is run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOptions {
    pub sla: SlaMode,
    pub use_zone_cache: bool,
    pub flavor: Flavor,
}

impl SessionOptions {
    pub fn cross_layer(sla: SlaMode) -> Self {
        Self {
            sla,
            use_zone_cache: true,
            flavor: Flavor::CrossLayer,
        }
    }
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self::cross_layer(SlaMode::Centralized)
    }
}

/// Runs one authentication for `mt_id` in `zone_id` at the world clock.
///
/// With the zone cache enabled and valid keys for `zone_id`, the handover
/// completes locally. Otherwise the full exchange runs over the transport;
/// a dropped message ends the session as timed out and moves the clock to
/// the half-open deadline. For [`Flavor::LocationOnly`] an accepted location
/// is reported as `MutualAuthSuccess`.
pub fn run_session(
    world: &mut World,
    mt_id: u32,
    zone_id: u32,
    opts: SessionOptions,
    rng: &mut SimRng,
) -> Result<SessionVerdict, ProtocolError> {
    let started = Instant::now();
    let mut costs = CostCounters::default();
    world.purge_expired();
    let session = world.new_session();
    let now = world.clock_ns;
    let mt = world.mts.get_mut(&mt_id).ok_or(ProtocolError::UnknownMt(mt_id))?;
    if !opts.use_zone_cache {
        mt.clear_cache();
    } else if let FastPath::Hit(_) = mt.fast_path(zone_id, now) {
        costs.wall_ns = started.elapsed().as_nanos() as u64;
        return Ok(SessionVerdict {
            session,
            mt_id,
            outcome: Outcome::FastPathSuccess,
            reason: ReasonCode::Ok,
            counters: costs,
        });
    }
    let (outcome, reason) = full_exchange(world, mt_id, zone_id, session, opts, rng, &mut costs)?;
    costs.wall_ns = started.elapsed().as_nanos() as u64;
    Ok(SessionVerdict {
        session,
        mt_id,
        outcome,
        reason,
        counters: costs,
    })
}

fn time_out(world: &mut World, mt_id: u32, sent_at: u64) -> (Outcome, ReasonCode) {
    world.clock_ns = world.clock_ns.max(sent_at + world.params.half_open_timeout_ns);
    world.purge_expired();
    if let Some(mt) = world.mts.get_mut(&mt_id) {
        mt.abandon();
    }
    (Outcome::TimedOut, ReasonCode::TimedOut)
}

#[allow(clippy::too_many_arguments)]
fn full_exchange(
    world: &mut World,
    mt_id: u32,
    zone_id: u32,
    session: SessionId,
    opts: SessionOptions,
    rng: &mut SimRng,
    costs: &mut CostCounters,
) -> Result<(Outcome, ReasonCode), ProtocolError> {
    let env = Arc::clone(&world.env);
    let mt_node = Node::Mt(mt_id);
    let authority = match opts.sla {
        SlaMode::Centralized => Node::Ns,
        SlaMode::Decentralized => Node::As,
    };
    let mut t = world.clock_ns;

    let mt = world.mts.get_mut(&mt_id).expect("checked by caller");
    let serving_cell = mt.serving_cell;
    let request = match opts.flavor {
        Flavor::CrossLayer => mt.initiate_auth(&env, zone_id, session, t, rng, costs)?,
        Flavor::LegacyKeyOverAir | Flavor::PlainAka => mt.initiate_baseline(opts.flavor, zone_id, session),
        Flavor::LocationOnly => {
            let rss = mt.measure(&env, t, rng)?;
            ProtocolMessage::AuthRequest {
                tim_ciphertext: Vec::new(),
                nonce: [0; 12],
                rss,
            }
        }
    };

    // Step 1: request to the NS (relayed on to the AS) or straight to the AS.
    let Some((arr, request)) =
        world
            .transport
            .send(t, session, mt_node, authority, &request, rng, costs)?
    else {
        return Ok(time_out(world, mt_id, t));
    };
    t = arr;
    if opts.sla == SlaMode::Centralized {
        if let Err(reason) = world.ns.admit(session, t) {
            return reject(world, session, mt_id, opts.sla, Node::Ns, Outcome::RejectedByNs, reason, t, rng, costs);
        }
        let Some((arr, _)) = world
            .transport
            .send(t, session, Node::Ns, Node::As, &request, rng, costs)?
        else {
            return Ok(time_out(world, mt_id, t));
        };
        t = arr;
    }

    // Step 2: the AS checks identity and location, then issues an AV.
    if opts.flavor == Flavor::LocationOnly {
        let ProtocolMessage::AuthRequest { rss, .. } = &request else {
            unreachable!("built above")
        };
        let checked = AsState::check_fresh(rss, t, &world.params)
            .and_then(|_| world.as_state.check_location(rss, serving_cell, &world.params, costs));
        return match checked {
            Ok(_) => {
                let ok = ProtocolMessage::Verdict {
                    accept: true,
                    reason: ReasonCode::Ok,
                };
                deliver_verdict(world, session, mt_id, opts.sla, &ok, t, rng, costs)?;
                world.ns.release(session);
                if let Some(mt) = world.mts.get_mut(&mt_id) {
                    mt.abandon();
                }
                Ok((Outcome::MutualAuthSuccess, ReasonCode::Ok))
            }
            Err(reason) => reject(world, session, mt_id, opts.sla, Node::As, Outcome::RejectedByAs, reason, t, rng, costs),
        };
    }
    let issued = match world
        .as_state
        .handle_message(&request, serving_cell, t, &world.params, rng, costs)
    {
        Ok(i) => i,
        Err(reason) => {
            return reject(world, session, mt_id, opts.sla, Node::As, Outcome::RejectedByAs, reason, t, rng, costs);
        }
    };
    let av = issued.av;
    let challenge = match opts.sla {
        SlaMode::Centralized => {
            let to_ns = ProtocolMessage::AvToNs {
                rand: av.rand,
                autn: av.autn.to_bytes(),
                xres: av.xres,
            };
            let Some((arr, to_ns)) = world
                .transport
                .send(t, session, Node::As, Node::Ns, &to_ns, rng, costs)?
            else {
                return Ok(time_out(world, mt_id, t));
            };
            t = arr;
            match world.ns.forward_challenge(session, &to_ns, t) {
                Ok(ch) => ch,
                Err(reason) => {
                    return reject(world, session, mt_id, opts.sla, Node::Ns, Outcome::RejectedByNs, reason, t, rng, costs);
                }
            }
        }
        SlaMode::Decentralized => {
            if let Err(reason) = world.as_state.pending.upsert(session, Some(av.xres), t) {
                return reject(world, session, mt_id, opts.sla, Node::As, Outcome::RejectedByAs, reason, t, rng, costs);
            }
            ProtocolMessage::Challenge {
                rand: av.rand,
                autn: av.autn.to_bytes(),
            }
        }
    };
    let Some((arr, challenge)) = world
        .transport
        .send(t, session, authority, mt_node, &challenge, rng, costs)?
    else {
        return Ok(time_out(world, mt_id, t));
    };
    t = arr;

    // Step 3: the MT validates the network and answers with RES.
    let ProtocolMessage::Challenge { rand, autn } = challenge else {
        unreachable!("built above")
    };
    let mt = world.mts.get_mut(&mt_id).expect("checked by caller");
    let res = match mt.handle_challenge(&rand, &autn, &world.params, costs) {
        Ok(res) => res,
        Err(reason) => {
            mt.abandon();
            let nack = ProtocolMessage::Verdict { accept: false, reason };
            world.transport.send(t, session, mt_node, authority, &nack, rng, costs)?;
            world.ns.release(session);
            world.as_state.pending.release(session);
            world.clock_ns = t;
            return Ok((Outcome::RejectedByMt, reason));
        }
    };
    let Some((arr, _)) = world.transport.send(
        t,
        session,
        mt_node,
        authority,
        &ProtocolMessage::ResResponse { res },
        rng,
        costs,
    )?
    else {
        return Ok(time_out(world, mt_id, t));
    };
    t = arr;
    let (checked, rejecter, outcome_on_reject) = match opts.sla {
        SlaMode::Centralized => (world.ns.verify(session, &res, t), Node::Ns, Outcome::RejectedByNs),
        SlaMode::Decentralized => (
            world.as_state.verify(session, &res, t),
            Node::As,
            Outcome::RejectedByAs,
        ),
    };
    if let Err(reason) = checked {
        return reject(world, session, mt_id, opts.sla, rejecter, outcome_on_reject, reason, t, rng, costs);
    }
    let ok = ProtocolMessage::Verdict {
        accept: true,
        reason: ReasonCode::Ok,
    };
    let Some((arr, _)) = world.transport.send(t, session, authority, mt_node, &ok, rng, costs)? else {
        return Ok(time_out(world, mt_id, t));
    };
    world.clock_ns = arr;
    let mt = world.mts.get_mut(&mt_id).expect("checked by caller");
    mt.handle_verdict(true, arr, &world.params);
    Ok((Outcome::MutualAuthSuccess, ReasonCode::Ok))
}

/// Sends a negative verdict from `from` towards the MT, releasing any
/// half-open entry on the way.
#[allow(clippy::too_many_arguments)]
fn reject(
    world: &mut World,
    session: SessionId,
    mt_id: u32,
    sla: SlaMode,
    from: Node,
    outcome: Outcome,
    reason: ReasonCode,
    t: u64,
    rng: &mut SimRng,
    costs: &mut CostCounters,
) -> Result<(Outcome, ReasonCode), ProtocolError> {
    let nack = ProtocolMessage::Verdict { accept: false, reason };
    world.ns.release(session);
    world.as_state.pending.release(session);
    let mut t = t;
    if from == Node::As && sla == SlaMode::Centralized {
        match world.transport.send(t, session, Node::As, Node::Ns, &nack, rng, costs)? {
            Some((arr, _)) => t = arr,
            None => return Ok(time_out(world, mt_id, t)),
        }
    }
    let src = if sla == SlaMode::Centralized { Node::Ns } else { from };
    let delivered = world.transport.send(t, session, src, Node::Mt(mt_id), &nack, rng, costs)?;
    if let Some(mt) = world.mts.get_mut(&mt_id) {
        mt.handle_verdict(false, t, &world.params);
    }
    match delivered {
        Some((arr, _)) => {
            world.clock_ns = arr;
            Ok((outcome, reason))
        }
        None => Ok(time_out(world, mt_id, t)),
    }
}

#[allow(clippy::too_many_arguments)]
fn deliver_verdict(
    world: &mut World,
    session: SessionId,
    mt_id: u32,
    sla: SlaMode,
    verdict: &ProtocolMessage,
    t: u64,
    rng: &mut SimRng,
    costs: &mut CostCounters,
) -> Result<(), ProtocolError> {
    let mut t = t;
    if sla == SlaMode::Centralized {
        if let Some((arr, _)) = world.transport.send(t, session, Node::As, Node::Ns, verdict, rng, costs)? {
            t = arr;
        }
        world.transport.send(t, session, Node::Ns, Node::Mt(mt_id), verdict, rng, costs)?;
    } else {
        world.transport.send(t, session, Node::As, Node::Mt(mt_id), verdict, rng, costs)?;
    }
    world.clock_ns = t + world.params.hop_latency_ns;
    Ok(())
}
