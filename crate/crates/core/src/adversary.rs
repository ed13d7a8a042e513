//! Scripted intruder. Each attack drives the protocol engine with an explicit
//! set of capabilities and reports how often the adversary got what it was
//! after.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::aka::{
    decrypt_tim_bound, unmask_tim, Autn, Block, Key128, Milenage, Sqn,
};
use crate::cost::CostCounters;
use crate::fingerprint::fingerprint;
use crate::protocol::{
    identity_of, run_session, Flavor, MtState, Node, Outcome, ProtocolError, SessionId,
    SessionOptions, SlaMode, WireRecord, World, WorldTemplate,
};
use crate::radio::{rng_from_seed, Position, SimRng, LIGHT_M_PER_NS};
use crate::wire::{decode_message, ProtocolMessage, ReasonCode, RssReading, RssVector};
use crate::zone::{epsilon_sweep, SweepRow};

/// MT id used for terminals the adversary runs.
pub const ADVERSARY_MT_ID: u32 = u32::MAX;

/// Minimum distance between a spoofing adversary and every mapped location
/// of the zone it claims.
pub const DEFAULT_SPOOF_DISTANCE_M: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryCapabilities {
    /// Read every transcript.
    pub observe_wire: bool,
    /// Send crafted messages.
    pub inject: bool,
    /// Store messages and resend them later.
    pub delay_replay: bool,
    /// Claim an arbitrary enrolled identity.
    pub spoof_im: bool,
    /// Recompute the fingerprint key from RSS vectors seen on the wire.
    pub recompute_fingerprint: bool,
    /// Where the adversary transmits from; attacks pick a position when unset.
    pub position: Option<Position>,
}

impl AdversaryCapabilities {
    /// Everything except fingerprint recomputation.
    pub fn standard() -> Self {
        Self {
            observe_wire: true,
            inject: true,
            delay_replay: true,
            spoof_im: true,
            recompute_fingerprint: false,
            position: None,
        }
    }

    pub fn none() -> Self {
        Self {
            observe_wire: false,
            inject: false,
            delay_replay: false,
            spoof_im: false,
            recompute_fingerprint: false,
            position: None,
        }
    }

    pub fn with_recompute(mut self) -> Self {
        self.observe_wire = true;
        self.recompute_fingerprint = true;
        self
    }
}

impl Default for AdversaryCapabilities {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub scenario: String,
    pub attempts: u64,
    pub successes: u64,
    pub success_criterion: String,
    /// SHA-256 over every transcript the attack produced.
    pub digest: String,
    pub reasons: BTreeMap<String, u64>,
    pub notes: Vec<String>,
}

impl AttackReport {
    fn new(scenario: &str, criterion: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            attempts: 0,
            successes: 0,
            success_criterion: criterion.to_string(),
            digest: String::new(),
            reasons: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }

    fn count(&mut self, reason: impl Into<String>) {
        *self.reasons.entry(reason.into()).or_default() += 1;
    }

    /// `scenario=<name> attempts=<n> successes=<k> rate=<r> digest=<hex>`
    pub fn machine_line(&self) -> String {
        format!(
            "scenario={} attempts={} successes={} rate={:.6} digest={}",
            self.scenario,
            self.attempts,
            self.successes,
            self.rate(),
            self.digest
        )
    }
}

impl fmt::Display for AttackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario:          {}", self.scenario)?;
        writeln!(f, "attempts:          {}", self.attempts)?;
        writeln!(f, "successes:         {}", self.successes)?;
        writeln!(f, "success rate:      {:.4}", self.rate())?;
        writeln!(f, "success criterion: {}", self.success_criterion)?;
        writeln!(f, "transcript digest: {}", self.digest)?;
        if !self.reasons.is_empty() {
            writeln!(f, "outcomes:")?;
            for (r, n) in &self.reasons {
                writeln!(f, "  {r:<28} {n}")?;
            }
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Running transcript hash.
#[derive(Default)]
struct Digest256(Sha256);

impl Digest256 {
    fn absorb(&mut self, records: &[WireRecord]) {
        for r in records {
            self.0.update(r.time_ns.to_be_bytes());
            self.0.update(r.session.to_be_bytes());
            self.0.update(r.from.to_string().as_bytes());
            self.0.update(b">");
            self.0.update(r.to.to_string().as_bytes());
            self.0.update([r.delivered as u8]);
            self.0.update((r.bytes.len() as u64).to_be_bytes());
            self.0.update(&r.bytes);
        }
    }

    fn hex(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Moves the world transcript into the digest.
fn drain(w: &mut World, d: &mut Digest256) -> Vec<WireRecord> {
    let records = w.transport.transcript().to_vec();
    d.absorb(&records);
    w.transport.clear_transcript();
    records
}

/// Number of times `secret` appears as a contiguous byte string in any
/// recorded message.
pub fn scan_for_secret(records: &[WireRecord], secret: &[u8]) -> usize {
    if secret.is_empty() {
        return 0;
    }
    records
        .iter()
        .map(|r| r.bytes.windows(secret.len()).filter(|w| *w == secret).count())
        .sum()
}

fn decoded(records: &[WireRecord]) -> Vec<(&WireRecord, ProtocolMessage)> {
    records
        .iter()
        .filter_map(|r| decode_message(&r.bytes).ok().map(|m| (r, m)))
        .collect()
}

/// Candidate keys an observer can form: every 16-byte window of every
/// message and, with recomputation, the fingerprint of every RSS vector.
fn candidate_keys(records: &[WireRecord], caps: &AdversaryCapabilities) -> Vec<Key128> {
    let mut out = Vec::new();
    for r in records {
        for w in r.bytes.windows(16) {
            out.push(Key128(w.try_into().expect("16-byte window")));
        }
    }
    if caps.recompute_fingerprint {
        for (_, m) in decoded(records) {
            if let ProtocolMessage::AuthRequest { rss, .. } = m {
                out.push(fingerprint(&rss).key);
            }
        }
    }
    out.sort_unstable_by_key(|k| k.0);
    out.dedup();
    out
}

/// SQN carried by an observed challenge, if `key` reproduces its MAC.
fn sqn_under_key(key: &Key128, rand: &Block, autn: &[u8; 16], world: &World) -> Option<u64> {
    let m = Milenage::new(key, &world.params.op);
    let autn = Autn::from_bytes(autn);
    let (_, ak) = m.f2_f5(rand);
    let mut sqn = autn.sqn_xor_ak;
    for (s, a) in sqn.iter_mut().zip(ak) {
        *s ^= a;
    }
    let sqn = Sqn::from_bytes(sqn);
    (m.f1(rand, sqn, &autn.amf) == autn.mac).then(|| sqn.value())
}

/// What a passive observer extracted from one exchange.
#[derive(Debug, Clone)]
struct Stolen {
    im: Block,
    key: Key128,
    rss: Option<RssVector>,
    /// Newest SQN seen under the stolen key.
    sqn: Option<u64>,
}

/// Tries every candidate key against the records of `session`.
fn recover_credentials(
    records: &[WireRecord],
    session: SessionId,
    caps: &AdversaryCapabilities,
    world: &World,
) -> Option<Stolen> {
    if !caps.observe_wire {
        return None;
    }
    let records: Vec<WireRecord> = records.iter().filter(|r| r.session == session).cloned().collect();
    let msgs = decoded(&records);
    let challenge = msgs.iter().find_map(|(_, m)| match m {
        ProtocolMessage::Challenge { rand, autn } => Some((*rand, *autn)),
        _ => None,
    });
    let clear_im = msgs.iter().find_map(|(_, m)| match m {
        ProtocolMessage::IdentityRequest { im } | ProtocolMessage::LegacyAuthRequest { im, .. } => Some(*im),
        _ => None,
    });
    let request = msgs.iter().find_map(|(_, m)| match m {
        ProtocolMessage::AuthRequest {
            tim_ciphertext,
            nonce,
            rss,
        } => Some((tim_ciphertext.clone(), *nonce, rss.clone())),
        _ => None,
    });
    let sqn_of = |key: &Key128| challenge.and_then(|(rand, autn)| sqn_under_key(key, &rand, &autn, world));
    for key in candidate_keys(&records, caps) {
        if let Some((ct, nonce, rss)) = &request {
            if let Ok(tim) = decrypt_tim_bound(ct, &key, nonce, &rss.to_bytes()) {
                return Some(Stolen {
                    im: unmask_tim(&tim, &key),
                    key,
                    rss: Some(rss.clone()),
                    sqn: sqn_of(&key),
                });
            }
        }
        if let Some(im) = clear_im {
            if let Some(sqn) = sqn_of(&key) {
                return Some(Stolen {
                    im,
                    key,
                    rss: None,
                    sqn: Some(sqn),
                });
            }
        }
    }
    None
}

/// Shifts every arrival time so that the newest reading lands at `now_ns`.
fn restamp(rss: &RssVector, now_ns: u64) -> RssVector {
    let newest = rss.max_toa_ns();
    let readings = rss
        .readings()
        .iter()
        .map(|r| RssReading {
            toa_ns: (r.toa_ns + now_ns).saturating_sub(newest).max(1),
            ..*r
        })
        .collect();
    RssVector::new(readings).expect("same ids and values")
}

fn full_auth_opts(flavor: Flavor, sla: SlaMode) -> SessionOptions {
    SessionOptions {
        sla,
        use_zone_cache: false,
        flavor,
    }
}

const VICTIM_RETRIES: usize = 5;
const VICTIM_ID: u32 = 0;

/// Places the victim at a random mapped location and runs full sessions
/// until one succeeds (a false location reject is retried from a new spot).
fn victim_session(
    w: &mut World,
    flavor: Flavor,
    sla: SlaMode,
    rng: &mut SimRng,
) -> Result<Option<SessionId>, ProtocolError> {
    for _ in 0..VICTIM_RETRIES {
        let a = w.place_at_random_anchor(VICTIM_ID, rng)?;
        let v = run_session(w, VICTIM_ID, a.zone_id, full_auth_opts(flavor, sla), rng)?;
        w.advance(1_000_000);
        if v.outcome == Outcome::MutualAuthSuccess {
            return Ok(Some(v.session));
        }
    }
    Ok(None)
}

/// Outcome of an exchange the adversary drives from its own radio.
#[derive(Debug, Clone, PartialEq)]
struct Driven {
    outcome: Outcome,
    reason: ReasonCode,
    av_issued: bool,
}

/// Centralized exchange with the adversary in the MT role: `request` is
/// injected at the NS claiming `serving_cell`, and `answer` produces the
/// RES the adversary returns for a challenge (`None` withholds it).
fn adversary_exchange(
    w: &mut World,
    request: &ProtocolMessage,
    serving_cell: u32,
    rng: &mut SimRng,
    mut answer: impl FnMut(&Block, &[u8; 16]) -> Option<[u8; 8]>,
) -> Result<Driven, ProtocolError> {
    let mut costs = CostCounters::default();
    w.purge_expired();
    let session = w.new_session();
    let lat = w.params.hop_latency_ns;
    let mut t = w.clock_ns;
    w.transport
        .send(t, session, Node::Adversary, Node::Ns, request, rng, &mut costs)?;
    t += lat;
    if let Err(reason) = w.ns.admit(session, t) {
        w.clock_ns = t;
        return Ok(Driven {
            outcome: Outcome::RejectedByNs,
            reason,
            av_issued: false,
        });
    }
    w.transport.send(t, session, Node::Ns, Node::As, request, rng, &mut costs)?;
    t += lat;
    let params = w.params.clone();
    let issued = w
        .as_state
        .handle_message(request, serving_cell, t, &params, rng, &mut costs);
    let av = match issued {
        Ok(i) => i.av,
        Err(reason) => {
            let nack = ProtocolMessage::Verdict { accept: false, reason };
            w.transport.send(t, session, Node::As, Node::Ns, &nack, rng, &mut costs)?;
            w.ns.release(session);
            w.transport
                .send(t + lat, session, Node::Ns, Node::Adversary, &nack, rng, &mut costs)?;
            w.clock_ns = t + 2 * lat;
            return Ok(Driven {
                outcome: Outcome::RejectedByAs,
                reason,
                av_issued: false,
            });
        }
    };
    let to_ns = ProtocolMessage::AvToNs {
        rand: av.rand,
        autn: av.autn.to_bytes(),
        xres: av.xres,
    };
    w.transport.send(t, session, Node::As, Node::Ns, &to_ns, rng, &mut costs)?;
    t += lat;
    let challenge = match w.ns.forward_challenge(session, &to_ns, t) {
        Ok(c) => c,
        Err(reason) => {
            w.clock_ns = t;
            return Ok(Driven {
                outcome: Outcome::RejectedByNs,
                reason,
                av_issued: true,
            });
        }
    };
    w.transport
        .send(t, session, Node::Ns, Node::Adversary, &challenge, rng, &mut costs)?;
    t += lat;
    let Some(res) = answer(&av.rand, &av.autn.to_bytes()) else {
        w.clock_ns = t + w.params.half_open_timeout_ns;
        w.purge_expired();
        return Ok(Driven {
            outcome: Outcome::TimedOut,
            reason: ReasonCode::TimedOut,
            av_issued: true,
        });
    };
    let rsp = ProtocolMessage::ResResponse { res };
    w.transport
        .send(t, session, Node::Adversary, Node::Ns, &rsp, rng, &mut costs)?;
    t += lat;
    let verdict = w.ns.verify(session, &res, t);
    let (accept, reason) = match verdict {
        Ok(()) => (true, ReasonCode::Ok),
        Err(r) => (false, r),
    };
    let v = ProtocolMessage::Verdict { accept, reason };
    w.transport.send(t, session, Node::Ns, Node::Adversary, &v, rng, &mut costs)?;
    w.clock_ns = t + lat;
    Ok(Driven {
        outcome: if accept {
            Outcome::MutualAuthSuccess
        } else {
            Outcome::RejectedByNs
        },
        reason,
        av_issued: true,
    })
}

/// Runs the victim's centralized cross-layer exchange up to the point where
/// the challenge reaches the radio. Returns the session and the challenge.
fn victim_until_challenge(
    w: &mut World,
    rng: &mut SimRng,
) -> Result<Option<(SessionId, Block, [u8; 16])>, ProtocolError> {
    let mut costs = CostCounters::default();
    let env = std::sync::Arc::clone(&w.env);
    let params = w.params.clone();
    let lat = params.hop_latency_ns;
    for _ in 0..VICTIM_RETRIES {
        let a = w.place_at_random_anchor(VICTIM_ID, rng)?;
        let session = w.new_session();
        let mut t = w.clock_ns;
        let mt = w.mt_mut(VICTIM_ID).expect("victim exists");
        mt.clear_cache();
        let cell = mt.serving_cell;
        let req = mt.initiate_auth(&env, a.zone_id, session, t, rng, &mut costs)?;
        w.transport
            .send(t, session, Node::Mt(VICTIM_ID), Node::Ns, &req, rng, &mut costs)?;
        t += lat;
        w.ns.admit(session, t).expect("table has room");
        w.transport.send(t, session, Node::Ns, Node::As, &req, rng, &mut costs)?;
        t += lat;
        let issued = w.as_state.handle_message(&req, cell, t, &params, rng, &mut costs);
        let Ok(issued) = issued else {
            w.ns.release(session);
            w.mt_mut(VICTIM_ID).expect("victim exists").abandon();
            w.clock_ns = t + lat;
            continue;
        };
        let av = issued.av;
        let to_ns = ProtocolMessage::AvToNs {
            rand: av.rand,
            autn: av.autn.to_bytes(),
            xres: av.xres,
        };
        w.transport.send(t, session, Node::As, Node::Ns, &to_ns, rng, &mut costs)?;
        t += lat;
        let ch = w.ns.forward_challenge(session, &to_ns, t).expect("entry open");
        w.transport
            .send(t, session, Node::Ns, Node::Mt(VICTIM_ID), &ch, rng, &mut costs)?;
        w.clock_ns = t + lat;
        return Ok(Some((session, av.rand, av.autn.to_bytes())));
    }
    Ok(None)
}

fn finish_victim(w: &mut World, session: SessionId) {
    w.ns.release(session);
    if let Some(mt) = w.mt_mut(VICTIM_ID) {
        mt.abandon();
    }
}

/// Impostor terminal using stolen or spoofed credentials, transmitting
/// through `serving_cell`.
fn plant_impostor(
    w: &mut World,
    im: Block,
    key: Key128,
    position: Position,
    serving_cell: u32,
    measurement: Option<RssVector>,
    sqn: Option<u64>,
) -> Result<(), ProtocolError> {
    w.remove_mt(ADVERSARY_MT_ID);
    let mut mt = MtState::new(ADVERSARY_MT_ID, im, key, w.params.sqn_window)?;
    mt.position = position;
    mt.measurement_override = measurement;
    if let Some(sqn) = sqn {
        mt.resync_sqn(sqn);
    }
    w.insert_mt(mt)?;
    let zone = w.zones.zone_of(serving_cell).ok_or(ProtocolError::UnzonedCell(serving_cell))?;
    let mt = w.mt_mut(ADVERSARY_MT_ID).expect("just inserted");
    mt.serving_cell = serving_cell;
    mt.current_zone = zone;
    Ok(())
}

/// Position used when the capabilities leave it open: outside the mapped area.
fn default_adversary_position(w: &World) -> Position {
    let (width, height) = w.env.bounds();
    Position::new(width + 150.0, height + 150.0)
}

/// Passive credential theft followed by impersonation. In the legacy
/// baseline the identity and key travel in the clear; in cross-layer mode
/// the adversary only has what the transcript yields.
pub fn attack_key_over_air(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    flavor: Flavor,
    n: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let name = match flavor {
        Flavor::LegacyKeyOverAir => "key-over-air-legacy",
        _ => "key-over-air-cross-layer",
    };
    let mut report = AttackReport::new(
        name,
        "adversary recovers the victim's key from the wire and completes an authentication as the victim",
    );
    let mut w = template.instantiate(1);
    let mut rng = rng_from_seed(seed);
    let mut digest = Digest256::default();
    let mut secret_hits = 0;
    for _ in 0..n {
        report.attempts += 1;
        let Some(session) = victim_session(&mut w, flavor, SlaMode::Centralized, &mut rng)? else {
            report.count("victim-never-authenticated");
            drain(&mut w, &mut digest);
            continue;
        };
        let records = drain(&mut w, &mut digest);
        let victim = w.mt(VICTIM_ID).expect("victim exists");
        let (victim_zone, victim_cell) = (victim.current_zone, victim.serving_cell);
        if flavor == Flavor::CrossLayer {
            // the key the victim derived for this exchange
            if let Some(rss) = decoded(&records).into_iter().find_map(|(_, m)| match m {
                ProtocolMessage::AuthRequest { rss, .. } => Some(rss),
                _ => None,
            }) {
                secret_hits += scan_for_secret(&records, &fingerprint(&rss).key.0);
            }
        }
        let Some(stolen) = recover_credentials(&records, session, caps, &w) else {
            report.count(if caps.observe_wire { "no-key-recovered" } else { "no-observation" });
            continue;
        };
        if !caps.inject {
            report.count("key-recovered-cannot-transmit");
            continue;
        }
        let position = caps.position.unwrap_or_else(|| default_adversary_position(&w));
        let forged = stolen.rss.as_ref().map(|r| restamp(r, w.clock_ns));
        plant_impostor(&mut w, stolen.im, stolen.key, position, victim_cell, forged, stolen.sqn)?;
        let v = run_session(
            &mut w,
            ADVERSARY_MT_ID,
            victim_zone,
            full_auth_opts(flavor, SlaMode::Centralized),
            &mut rng,
        )?;
        w.remove_mt(ADVERSARY_MT_ID);
        drain(&mut w, &mut digest);
        w.advance(1_000_000);
        if v.outcome == Outcome::MutualAuthSuccess {
            report.successes += 1;
            report.count("impersonation-accepted");
        } else {
            report.count(format!("impersonation-{}", v.reason));
        }
    }
    if flavor == Flavor::CrossLayer {
        report
            .notes
            .push(format!("fingerprint key bytes found on the wire: {secret_hits}"));
    }
    if caps.recompute_fingerprint {
        report.notes.push(
            "observer recomputes the fingerprint key from the RSS vector sent in the clear".into(),
        );
    }
    report.digest = digest.hex();
    Ok(report)
}

/// Replays a captured request (inside and outside the freshness window) and
/// a captured challenge.
pub fn attack_replay(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    n: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let mut report = AttackReport::new(
        "replay",
        "a replayed request or challenge yields an authentication attributed to the adversary, or the MT accepts a replayed challenge",
    );
    let mut w = template.instantiate(1);
    let mut rng = rng_from_seed(seed);
    let mut digest = Digest256::default();
    let mut in_window_avs = 0u64;
    for _ in 0..n {
        report.attempts += 1;
        if !(caps.observe_wire && caps.delay_replay && caps.inject) {
            report.count("missing-capability");
            continue;
        }
        let Some(session) = victim_session(&mut w, Flavor::CrossLayer, SlaMode::Centralized, &mut rng)? else {
            report.count("victim-never-authenticated");
            drain(&mut w, &mut digest);
            continue;
        };
        let records = drain(&mut w, &mut digest);
        let msgs: Vec<_> = decoded(&records)
            .into_iter()
            .filter(|(r, _)| r.session == session)
            .map(|(_, m)| m)
            .collect();
        let request = msgs.iter().find(|m| matches!(m, ProtocolMessage::AuthRequest { .. })).cloned();
        let challenge = msgs.iter().find_map(|m| match m {
            ProtocolMessage::Challenge { rand, autn } => Some((*rand, *autn)),
            _ => None,
        });
        let res = msgs.iter().find_map(|m| match m {
            ProtocolMessage::ResResponse { res } => Some(*res),
            _ => None,
        });
        let (Some(request), Some((rand, autn)), Some(res)) = (request, challenge, res) else {
            report.count("incomplete-capture");
            continue;
        };
        let cell = w.mt(VICTIM_ID).expect("victim").serving_cell;
        let mut succeeded = false;

        // request replay inside the freshness window
        let d = adversary_exchange(&mut w, &request, cell, &mut rng, |_, _| Some(res))?;
        if d.av_issued {
            in_window_avs += 1;
        }
        report.count(format!("request-in-window:{}", d.reason));
        succeeded |= d.outcome == Outcome::MutualAuthSuccess;

        // request replay after the freshness window
        w.advance(w.params.freshness_window_ns + 1_000_000_000);
        let d = adversary_exchange(&mut w, &request, cell, &mut rng, |_, _| Some(res))?;
        report.count(format!("request-stale:{}", d.reason));
        succeeded |= d.outcome == Outcome::MutualAuthSuccess;

        // challenge replay to the victim while it waits for a fresh one
        let mut costs = CostCounters::default();
        let env = std::sync::Arc::clone(&w.env);
        let now = w.clock_ns;
        let s = w.new_session();
        let params = w.params.clone();
        let mt = w.mt_mut(VICTIM_ID).expect("victim");
        mt.clear_cache();
        let zone = mt.current_zone;
        mt.initiate_auth(&env, zone, s, now, &mut rng, &mut costs)?;
        match mt.handle_challenge(&rand, &autn, &params, &mut costs) {
            Ok(_) => {
                succeeded = true;
                report.count("challenge:accepted");
            }
            Err(r) => report.count(format!("challenge:{r}")),
        }
        mt.abandon();
        drain(&mut w, &mut digest);
        w.advance(1_000_000);
        if succeeded {
            report.successes += 1;
        }
    }
    report.notes.push(format!(
        "in-window request replays that reached AV issuance: {in_window_avs} (stopped at the RES check)"
    ));
    report.digest = digest.hex();
    Ok(report)
}

/// Passive key recovery from the transcript plus challenge splicing.
pub fn attack_mitm(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    n: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let mut report = AttackReport::new(
        "mitm",
        "adversary recovers the session keys CK/IK, or the MT accepts a tampered challenge",
    );
    let mut w = template.instantiate(1);
    let mut rng = rng_from_seed(seed);
    let mut digest = Digest256::default();
    let mut keys_recovered = 0u64;
    let mut tamper_accepted = 0u64;
    for i in 0..n {
        report.attempts += 1;
        let mut succeeded = false;

        // passive: observe a complete exchange, try to derive CK/IK
        let Some(session) = victim_session(&mut w, Flavor::CrossLayer, SlaMode::Centralized, &mut rng)? else {
            report.count("victim-never-authenticated");
            drain(&mut w, &mut digest);
            continue;
        };
        let records = drain(&mut w, &mut digest);
        let victim = w.mt(VICTIM_ID).expect("victim");
        let truth = victim.cached(victim.current_zone).copied();
        let rand = decoded(&records).into_iter().find_map(|(r, m)| match m {
            ProtocolMessage::Challenge { rand, .. } if r.session == session => Some(rand),
            _ => None,
        });
        if let (Some(stolen), Some(truth), Some(rand)) = (recover_credentials(&records, session, caps, &w), truth, rand) {
            let m = Milenage::new(&stolen.key, &w.params.op);
            if m.f3(&rand) == truth.ck && m.f4(&rand) == truth.ik {
                keys_recovered += 1;
                succeeded = true;
                report.count("passive:keys-recovered");
            } else {
                report.count("passive:wrong-keys");
            }
        } else {
            report.count(if caps.observe_wire { "passive:no-key" } else { "passive:no-observation" });
        }

        // active: splice a modified challenge
        if caps.inject && caps.observe_wire {
            if let Some((s, mut rand, mut autn)) = victim_until_challenge(&mut w, &mut rng)? {
                match i % 3 {
                    0 => autn[15] ^= 1 << (i / 3 % 8),
                    1 => rand[i / 3 % 16] ^= 1,
                    _ => autn[i / 3 % 6] ^= 0x80,
                }
                let params = w.params.clone();
                let mut costs = CostCounters::default();
                let mt = w.mt_mut(VICTIM_ID).expect("victim");
                match mt.handle_challenge(&rand, &autn, &params, &mut costs) {
                    Ok(_) => {
                        tamper_accepted += 1;
                        succeeded = true;
                        report.count("tamper:accepted");
                    }
                    Err(r) => report.count(format!("tamper:{r}")),
                }
                finish_victim(&mut w, s);
            }
            drain(&mut w, &mut digest);
        } else {
            report.count("tamper:missing-capability");
        }
        w.advance(1_000_000);
        if succeeded {
            report.successes += 1;
        }
    }
    report.notes.push(format!(
        "session keys recovered: {keys_recovered}; tampered challenges accepted: {tamper_accepted}"
    ));
    report.digest = digest.hex();
    Ok(report)
}

/// Case 1: a fake NS replays a stale challenge and tries to reuse a RES it
/// relayed. Case 2: unsolicited challenges injected at an idle MT.
pub fn attack_impersonation(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    case: u8,
    n: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let (name, criterion) = match case {
        1 => (
            "impersonation-1",
            "fake NS makes the MT accept a stale challenge, or reuses a relayed RES in a second session",
        ),
        _ => ("impersonation-2", "MT answers a challenge it never asked for"),
    };
    let mut report = AttackReport::new(name, criterion);
    let mut w = template.instantiate(1);
    let mut rng = rng_from_seed(seed);
    let mut digest = Digest256::default();
    let params = w.params.clone();

    // a completed exchange supplies stale material
    let mut stale: Option<(Block, [u8; 16])> = None;
    if let Some(session) = victim_session(&mut w, Flavor::CrossLayer, SlaMode::Centralized, &mut rng)? {
        let records = drain(&mut w, &mut digest);
        stale = decoded(&records).into_iter().find_map(|(r, m)| match m {
            ProtocolMessage::Challenge { rand, autn } if r.session == session => Some((rand, autn)),
            _ => None,
        });
    }

    for i in 0..n {
        report.attempts += 1;
        if !caps.inject || (case == 1 && !caps.observe_wire) {
            report.count("missing-capability");
            continue;
        }
        let mut costs = CostCounters::default();
        let mut succeeded = false;
        if case == 1 {
            // stale AV pushed to a victim with a request outstanding
            if let Some((rand, autn)) = stale {
                let env = std::sync::Arc::clone(&w.env);
                let s = w.new_session();
                let now = w.clock_ns;
                let mt = w.mt_mut(VICTIM_ID).expect("victim");
                mt.clear_cache();
                let zone = mt.current_zone;
                mt.initiate_auth(&env, zone, s, now, &mut rng, &mut costs)?;
                match mt.handle_challenge(&rand, &autn, &params, &mut costs) {
                    Ok(_) => {
                        succeeded = true;
                        report.count("stale-av:accepted");
                    }
                    Err(r) => report.count(format!("stale-av:{r}")),
                }
                mt.abandon();
            }
            // live AV relayed unchanged; the observed RES is reused
            if let Some((s, rand, autn)) = victim_until_challenge(&mut w, &mut rng)? {
                let records = w.transport.transcript().to_vec();
                let request = decoded(&records).into_iter().find_map(|(r, m)| match m {
                    ProtocolMessage::AuthRequest { .. } if r.session == s => Some(m),
                    _ => None,
                });
                let mt = w.mt_mut(VICTIM_ID).expect("victim");
                let cell = mt.serving_cell;
                let observed = mt.handle_challenge(&rand, &autn, &params, &mut costs);
                finish_victim(&mut w, s);
                stale = Some((rand, autn));
                if let (Ok(res), Some(request)) = (observed, request) {
                    let d = adversary_exchange(&mut w, &request, cell, &mut rng, |_, _| Some(res))?;
                    report.count(format!("res-reuse:{}", d.reason));
                    succeeded |= d.outcome == Outcome::MutualAuthSuccess;
                } else {
                    report.count("res-reuse:victim-rejected-live-av");
                }
            }
        } else {
            let (rand, autn) = match (i % 2, stale) {
                (0, Some(s)) => s,
                _ => {
                    let mut r = [0u8; 16];
                    let mut a = [0u8; 16];
                    rng.fill(&mut r);
                    rng.fill(&mut a);
                    (r, a)
                }
            };
            let mt = w.mt_mut(VICTIM_ID).expect("victim");
            mt.abandon();
            match mt.handle_challenge(&rand, &autn, &params, &mut costs) {
                Ok(_) => {
                    succeeded = true;
                    report.count("unsolicited:accepted");
                }
                Err(r) => report.count(format!("unsolicited:{r}")),
            }
        }
        drain(&mut w, &mut digest);
        w.advance(1_000_000);
        if succeeded {
            report.successes += 1;
        }
    }
    report.digest = digest.hex();
    Ok(report)
}

/// Where a location-spoofing adversary transmits from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpoofPlacement {
    /// At least this many metres from every mapped location of the claimed zone.
    Outside { min_distance_m: f64 },
    /// At a mapped location of the claimed zone.
    AtVictimLocation,
    /// Reports every AP at the noise floor.
    NoiseFloor,
}

impl Default for SpoofPlacement {
    fn default() -> Self {
        SpoofPlacement::Outside {
            min_distance_m: DEFAULT_SPOOF_DISTANCE_M,
        }
    }
}

/// Positions in a margin around the deployment that keep `min_distance_m`
/// from every location in `zone_locations`.
fn outside_position(
    w: &World,
    zone_locations: &[Position],
    min_distance_m: f64,
    rng: &mut SimRng,
) -> Position {
    let (width, height) = w.env.bounds();
    let margin = 100.0;
    loop {
        let p = Position::new(
            rng.gen_range(-margin..width + margin),
            rng.gen_range(-margin..height + margin),
        );
        if zone_locations.iter().all(|l| l.distance(&p) >= min_distance_m) {
            return p;
        }
    }
}

fn zone_locations(w: &World, zone: u32) -> Vec<Position> {
    let mut v: Vec<Position> = w
        .anchors()
        .iter()
        .filter(|a| a.zone_id == zone)
        .map(|a| a.position)
        .collect();
    v.dedup();
    v
}

/// An AuthRequest from the adversary's own radio, claiming a cell of a
/// victim zone with a victim's identity when it can spoof one.
pub fn attack_location_spoof(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    placement: SpoofPlacement,
    n: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let mut report = AttackReport::new(
        "location-spoof",
        "AS issues an authentication vector to an adversary transmitting from outside the claimed zone",
    );
    let mut w = template.instantiate(1);
    let mut rng = rng_from_seed(seed);
    let mut digest = Digest256::default();
    let zones: Vec<u32> = w.zones.zone_ids().collect();
    let locations: BTreeMap<u32, Vec<Position>> = zones.iter().map(|&z| (z, zone_locations(&w, z))).collect();
    let noise_floor = w.env.config.noise_floor_cdbm;
    for _ in 0..n {
        report.attempts += 1;
        if !caps.inject {
            report.count("missing-capability");
            continue;
        }
        let zone = zones[rng.gen_range(0..zones.len())];
        let cells = w.zones.cells_in(zone);
        let cell = cells[rng.gen_range(0..cells.len())];
        let im = if caps.spoof_im {
            identity_of(VICTIM_ID)
        } else {
            identity_of(ADVERSARY_MT_ID)
        };
        let now = w.clock_ns;
        let (position, orientation, measurement) = match placement {
            SpoofPlacement::Outside { min_distance_m } => {
                let p = match caps.position {
                    Some(p) if locations[&zone].iter().all(|l| l.distance(&p) >= min_distance_m) => p,
                    _ => outside_position(&w, &locations[&zone], min_distance_m, &mut rng),
                };
                (p, rng.gen_range(0..4), None)
            }
            SpoofPlacement::AtVictimLocation => {
                let in_zone: Vec<_> = w.anchors().iter().filter(|a| a.zone_id == zone).copied().collect();
                let a = in_zone[rng.gen_range(0..in_zone.len())];
                (a.position, a.orientation, None)
            }
            SpoofPlacement::NoiseFloor => {
                let p = default_adversary_position(&w);
                let readings = w
                    .env
                    .aps()
                    .iter()
                    .map(|ap| RssReading {
                        ap_id: ap.ap_id,
                        rss_cdbm: noise_floor,
                        toa_ns: now + (ap.position.distance(&p) / LIGHT_M_PER_NS) as u64,
                    })
                    .collect();
                (p, 0, Some(RssVector::new(readings).expect("sorted ids")))
            }
        };
        plant_impostor(&mut w, im, Key128::default(), position, cell, measurement, None)?;
        w.mt_mut(ADVERSARY_MT_ID).expect("planted").orientation = orientation;
        let v = run_session(
            &mut w,
            ADVERSARY_MT_ID,
            zone,
            full_auth_opts(Flavor::CrossLayer, SlaMode::Centralized),
            &mut rng,
        );
        w.remove_mt(ADVERSARY_MT_ID);
        let v = match v {
            Ok(v) => v,
            Err(ProtocolError::Radio(_)) => {
                report.count("adversary-hears-no-ap");
                continue;
            }
            Err(e) => return Err(e),
        };
        drain(&mut w, &mut digest);
        w.advance(1_000_000);
        if v.outcome == Outcome::RejectedByAs {
            report.count(v.reason.as_str());
        } else {
            report.successes += 1;
            report.count(format!("av-issued:{}", v.outcome));
        }
    }
    report.notes.push(format!(
        "placement {placement:?}, epsilon {:.1}",
        w.params.epsilon_cdbm
    ));
    report.digest = digest.hex();
    Ok(report)
}

/// False-reject and false-accept rates of the zone check across epsilon
/// values, from `n` legitimate queries at mapped locations and `n` queries
/// from positions at least `min_distance_m` outside the claimed zone.
pub fn location_spoof_sweep(
    template: &WorldTemplate,
    n: usize,
    min_distance_m: f64,
    epsilons: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>, ProtocolError> {
    let w = template.instantiate(0);
    let mut rng = rng_from_seed(seed);
    let k = w.params.knn_k;
    let db = w.db();
    let mut legit = Vec::with_capacity(n);
    while legit.len() < n {
        let a = w.anchors()[rng.gen_range(0..w.anchors().len())];
        let Ok(q) = w.env.sample(&a.position, Some(a.orientation), 1, &mut rng) else {
            continue;
        };
        let m = db.knn(&q, k)?;
        legit.push((m.k_dh, m.matched_zone == a.zone_id));
    }
    let zones: Vec<u32> = w.zones.zone_ids().collect();
    let locations: BTreeMap<u32, Vec<Position>> = zones.iter().map(|&z| (z, zone_locations(&w, z))).collect();
    let mut impostor = Vec::with_capacity(n);
    while impostor.len() < n {
        let zone = zones[rng.gen_range(0..zones.len())];
        let p = outside_position(&w, &locations[&zone], min_distance_m, &mut rng);
        let Ok(q) = w.env.sample(&p, Some(rng.gen_range(0..4)), 1, &mut rng) else {
            continue;
        };
        let m = match db.knn(&q, k) {
            Ok(m) => m,
            Err(crate::zone::ZoneError::AllImputed) => continue,
            Err(e) => return Err(e.into()),
        };
        impostor.push((m.k_dh, m.matched_zone == zone));
    }
    Ok(epsilon_sweep(&legit, &impostor, epsilons))
}

/// Measurements from a half-open flood.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DosOutcome {
    pub capacity: usize,
    pub flood_requests: u64,
    pub admitted: u64,
    pub refused: u64,
    pub peak_occupancy: usize,
    pub capacity_exceeded: bool,
    pub purged: u64,
    /// Largest delay between an entry's deadline and its removal.
    pub max_purge_latency_ns: u64,
    /// Entries that outlived their deadline at any observation point.
    pub overdue_entries: u64,
    pub entries_left: usize,
    /// (time, outcome, reason) per legitimate attempt.
    pub legit_attempts: Vec<(u64, Outcome, ReasonCode)>,
    pub legit_completed: bool,
}

#[derive(Debug, Clone)]
enum Event {
    /// A radio node's message reaches the NS.
    NsFromRadio { session: SessionId, from: Node, msg: ProtocolMessage, cell: u32 },
    AsReceives { session: SessionId, from: Node, msg: ProtocolMessage, cell: u32 },
    NsFromAs { session: SessionId, to: Node, msg: ProtocolMessage },
    RadioReceives { session: SessionId, to: Node, msg: ProtocolMessage },
    Deadline,
    LegitStart,
}

struct FloodSim<'a> {
    w: &'a mut World,
    rng: SimRng,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    events: Vec<Option<Event>>,
    out: DosOutcome,
    costs: CostCounters,
    legit_session: Option<SessionId>,
    legit_tries: usize,
    flood_sessions: std::collections::BTreeSet<SessionId>,
}

const LEGIT_MAX_TRIES: usize = 6;

impl FloodSim<'_> {
    fn schedule(&mut self, t: u64, e: Event) {
        let id = self.events.len() as u64;
        self.events.push(Some(e));
        self.queue.push(Reverse((t, id)));
    }

    fn purge(&mut self, t: u64) {
        for (_, e) in self.w.ns.purge_expired(t) {
            self.out.purged += 1;
            self.out.max_purge_latency_ns = self.out.max_purge_latency_ns.max(t - e.deadline_ns);
        }
    }

    fn observe(&mut self, t: u64) {
        let len = self.w.ns.half_open.len();
        self.out.peak_occupancy = self.out.peak_occupancy.max(len);
        if len > self.out.capacity {
            self.out.capacity_exceeded = true;
        }
        let overdue = self
            .w
            .ns
            .half_open
            .entries()
            .filter(|(_, e)| e.deadline_ns < t)
            .count() as u64;
        self.out.overdue_entries = self.out.overdue_entries.max(overdue);
    }

    fn send_to_radio(&mut self, t: u64, session: SessionId, to: Node, msg: ProtocolMessage) -> Result<(), ProtocolError> {
        let lat = self.w.params.hop_latency_ns;
        self.w
            .transport
            .send(t, session, Node::Ns, to, &msg, &mut self.rng, &mut self.costs)?;
        self.schedule(t + lat, Event::RadioReceives { session, to, msg });
        Ok(())
    }

    fn legit_start(&mut self, t: u64) -> Result<(), ProtocolError> {
        self.legit_tries += 1;
        let env = std::sync::Arc::clone(&self.w.env);
        let session = self.w.new_session();
        let mt = self.w.mt_mut(VICTIM_ID).expect("legit MT");
        mt.clear_cache();
        let (zone, cell) = (mt.current_zone, mt.serving_cell);
        let req = mt.initiate_auth(&env, zone, session, t, &mut self.rng, &mut self.costs)?;
        self.legit_session = Some(session);
        let lat = self.w.params.hop_latency_ns;
        self.w
            .transport
            .send(t, session, Node::Mt(VICTIM_ID), Node::Ns, &req, &mut self.rng, &mut self.costs)?;
        self.schedule(
            t + lat,
            Event::NsFromRadio {
                session,
                from: Node::Mt(VICTIM_ID),
                msg: req,
                cell,
            },
        );
        Ok(())
    }

    fn legit_done(&mut self, t: u64, outcome: Outcome, reason: ReasonCode) {
        self.out.legit_attempts.push((t, outcome, reason));
        self.legit_session = None;
        let params = self.w.params.clone();
        if let Some(mt) = self.w.mt_mut(VICTIM_ID) {
            mt.handle_verdict(outcome == Outcome::MutualAuthSuccess, t, &params);
        }
        if outcome == Outcome::MutualAuthSuccess {
            self.out.legit_completed = true;
        } else if self.legit_tries < LEGIT_MAX_TRIES {
            // back off for one half-open timeout, then try again
            let retry = t + self.w.params.half_open_timeout_ns;
            self.schedule(retry, Event::LegitStart);
        }
    }

    fn step(&mut self, t: u64, e: Event) -> Result<(), ProtocolError> {
        let lat = self.w.params.hop_latency_ns;
        self.purge(t);
        match e {
            Event::Deadline => {}
            Event::LegitStart => self.legit_start(t)?,
            Event::NsFromRadio { session, from, msg, cell } => match msg {
                ProtocolMessage::AuthRequest { .. } => {
                    if self.flood_sessions.contains(&session) {
                        self.out.flood_requests += 1;
                    }
                    match self.w.ns.admit(session, t) {
                        Ok(()) => {
                            if self.flood_sessions.contains(&session) {
                                self.out.admitted += 1;
                            }
                            let deadline = self.w.ns.half_open.get(session).expect("admitted").deadline_ns;
                            self.schedule(deadline, Event::Deadline);
                            self.w
                                .transport
                                .send(t, session, Node::Ns, Node::As, &msg, &mut self.rng, &mut self.costs)?;
                            self.schedule(t + lat, Event::AsReceives { session, from, msg, cell });
                        }
                        Err(reason) => {
                            if self.flood_sessions.contains(&session) {
                                self.out.refused += 1;
                            }
                            let nack = ProtocolMessage::Verdict { accept: false, reason };
                            self.send_to_radio(t, session, from, nack)?;
                        }
                    }
                }
                ProtocolMessage::ResResponse { res } => {
                    let verdict = match self.w.ns.verify(session, &res, t) {
                        Ok(()) => ProtocolMessage::Verdict {
                            accept: true,
                            reason: ReasonCode::Ok,
                        },
                        Err(reason) => ProtocolMessage::Verdict { accept: false, reason },
                    };
                    self.send_to_radio(t, session, from, verdict)?;
                }
                ProtocolMessage::Verdict { .. } => self.w.ns.release(session),
                _ => {}
            },
            Event::AsReceives { session, from, msg, cell } => {
                let params = self.w.params.clone();
                let reply = match self
                    .w
                    .as_state
                    .handle_message(&msg, cell, t, &params, &mut self.rng, &mut self.costs)
                {
                    Ok(i) => ProtocolMessage::AvToNs {
                        rand: i.av.rand,
                        autn: i.av.autn.to_bytes(),
                        xres: i.av.xres,
                    },
                    Err(reason) => ProtocolMessage::Verdict { accept: false, reason },
                };
                self.w
                    .transport
                    .send(t, session, Node::As, Node::Ns, &reply, &mut self.rng, &mut self.costs)?;
                self.schedule(t + lat, Event::NsFromAs { session, to: from, msg: reply });
            }
            Event::NsFromAs { session, to, msg } => match msg {
                ProtocolMessage::AvToNs { .. } => {
                    if self.w.ns.half_open.get(session).is_none() {
                        // entry already expired; the late AV is dropped
                        return Ok(());
                    }
                    match self.w.ns.forward_challenge(session, &msg, t) {
                        Ok(ch) => {
                            let deadline = self.w.ns.half_open.get(session).expect("open").deadline_ns;
                            self.schedule(deadline, Event::Deadline);
                            self.send_to_radio(t, session, to, ch)?;
                        }
                        Err(reason) => {
                            self.send_to_radio(t, session, to, ProtocolMessage::Verdict { accept: false, reason })?;
                        }
                    }
                }
                other => {
                    self.w.ns.release(session);
                    self.send_to_radio(t, session, to, other)?;
                }
            },
            Event::RadioReceives { session, to, msg } => {
                if to != Node::Mt(VICTIM_ID) || self.legit_session != Some(session) {
                    // the flooding adversary never answers
                    return Ok(());
                }
                match msg {
                    ProtocolMessage::Challenge { rand, autn } => {
                        let params = self.w.params.clone();
                        let mt = self.w.mt_mut(VICTIM_ID).expect("legit MT");
                        match mt.handle_challenge(&rand, &autn, &params, &mut self.costs) {
                            Ok(res) => {
                                let rsp = ProtocolMessage::ResResponse { res };
                                self.w.transport.send(
                                    t,
                                    session,
                                    to,
                                    Node::Ns,
                                    &rsp,
                                    &mut self.rng,
                                    &mut self.costs,
                                )?;
                                self.schedule(
                                    t + lat,
                                    Event::NsFromRadio {
                                        session,
                                        from: to,
                                        msg: rsp,
                                        cell: 0,
                                    },
                                );
                            }
                            Err(reason) => self.legit_done(t, Outcome::RejectedByMt, reason),
                        }
                    }
                    ProtocolMessage::Verdict { accept: true, .. } => {
                        self.legit_done(t, Outcome::MutualAuthSuccess, ReasonCode::Ok)
                    }
                    ProtocolMessage::Verdict { reason, .. } => {
                        let outcome = match reason {
                            ReasonCode::HalfOpenCapacityExceeded
                            | ReasonCode::ResMismatch
                            | ReasonCode::Expired
                            | ReasonCode::NoPendingEntry => Outcome::RejectedByNs,
                            _ => Outcome::RejectedByAs,
                        };
                        self.legit_done(t, outcome, reason)
                    }
                    _ => {}
                }
            }
        }
        self.observe(t);
        Ok(())
    }
}

/// Gap between consecutive flood requests.
pub const FLOOD_GAP_NS: u64 = 100_000;

/// Floods the NS with `n_flood` requests while one legitimate MT tries to
/// authenticate. Case 1 sends requests under garbage keys. Case 2 spoofs
/// enrolled identities from inside the zone and never answers the
/// challenges, so every admitted entry lives until its deadline.
pub fn simulate_dos_flood(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    case: u8,
    n_flood: usize,
    seed: u64,
) -> Result<(DosOutcome, String), ProtocolError> {
    const SPOOFED: u32 = 8;
    let mut w = template.instantiate(1 + SPOOFED);
    let mut rng = rng_from_seed(seed);
    let legit_anchor = w.place_at_random_anchor(VICTIM_ID, &mut rng)?;
    let flood_anchor = w
        .anchors()
        .iter()
        .copied()
        .find(|a| a.zone_id == legit_anchor.zone_id)
        .expect("zone has mapped locations");
    let start = w.clock_ns;
    let capacity = w.params.half_open_capacity;
    let timeout = w.params.half_open_timeout_ns;
    let mut sim = FloodSim {
        w: &mut w,
        rng: rng_from_seed(seed ^ 0xf100d),
        queue: BinaryHeap::new(),
        events: Vec::new(),
        out: DosOutcome {
            capacity,
            ..DosOutcome::default()
        },
        costs: CostCounters::default(),
        legit_session: None,
        legit_tries: 0,
        flood_sessions: Default::default(),
    };
    let lat = sim.w.params.hop_latency_ns;
    let mut forgers: Vec<MtState> = (1..=SPOOFED)
        .map(|id| {
            let im = if caps.spoof_im {
                identity_of(id)
            } else {
                identity_of(ADVERSARY_MT_ID)
            };
            MtState::new(ADVERSARY_MT_ID - id, im, Key128::default(), sim.w.params.sqn_window)
        })
        .collect::<Result<_, _>>()?;
    if caps.inject {
        let adv_pos = caps.position.unwrap_or(flood_anchor.position);
        let env = std::sync::Arc::clone(&sim.w.env);
        for i in 0..n_flood {
            let t = start + i as u64 * FLOOD_GAP_NS;
            let session = sim.w.new_session();
            sim.flood_sessions.insert(session);
            let rss = match env.sample(&adv_pos, Some(flood_anchor.orientation), t, &mut rng) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let msg = if case == 1 {
                let mut ct = vec![0u8; crate::aka::TIM_CIPHERTEXT_LEN];
                let mut nonce = [0u8; 12];
                rng.fill(&mut ct[..]);
                rng.fill(&mut nonce);
                ProtocolMessage::AuthRequest {
                    tim_ciphertext: ct,
                    nonce,
                    rss,
                }
            } else {
                let f = &mut forgers[i % SPOOFED as usize];
                let mut c = CostCounters::default();
                let m = f.seal_request(&rss, session, flood_anchor.zone_id, &mut c);
                f.abandon();
                m
            };
            sim.w
                .transport
                .send(t, session, Node::Adversary, Node::Ns, &msg, &mut rng, &mut sim.costs)?;
            sim.schedule(
                t + lat,
                Event::NsFromRadio {
                    session,
                    from: Node::Adversary,
                    msg,
                    cell: flood_anchor_cell(&env, &flood_anchor.position),
                },
            );
        }
    }
    // the legitimate MT starts in the middle of the burst
    let mid = start + (n_flood as u64 * FLOOD_GAP_NS) / 2;
    sim.schedule(mid, Event::LegitStart);
    while let Some(Reverse((t, id))) = sim.queue.pop() {
        let e = sim.events[id as usize].take().expect("event runs once");
        sim.w.clock_ns = sim.w.clock_ns.max(t);
        sim.step(t, e)?;
    }
    let end = sim.w.clock_ns + timeout;
    sim.purge(end);
    sim.out.entries_left = sim.w.ns.half_open.len();
    let mut digest = Digest256::default();
    digest.absorb(sim.w.transport.transcript());
    Ok((sim.out, digest.hex()))
}

fn flood_anchor_cell(env: &crate::radio::Environment, p: &Position) -> u32 {
    env.serving_cell(p)
}

/// Flood report: successes count violated properties (table over capacity,
/// an entry outliving its deadline, entries left behind, the legitimate MT
/// never completing).
pub fn attack_dos_flood(
    template: &WorldTemplate,
    caps: &AdversaryCapabilities,
    case: u8,
    n_flood: usize,
    seed: u64,
) -> Result<AttackReport, ProtocolError> {
    let (out, digest) = simulate_dos_flood(template, caps, case, n_flood, seed)?;
    let mut report = AttackReport::new(
        if case == 1 { "dos-flood-1" } else { "dos-flood-2" },
        "half-open table exceeds capacity, an entry outlives its deadline, or the legitimate MT never completes",
    );
    report.attempts = n_flood as u64;
    report.successes = out.capacity_exceeded as u64
        + out.overdue_entries
        + out.entries_left as u64
        + (!out.legit_completed) as u64;
    report.digest = digest;
    report.reasons.insert("flood-admitted".into(), out.admitted);
    report.reasons.insert("flood-refused".into(), out.refused);
    report.reasons.insert("entries-purged".into(), out.purged);
    report.notes.push(format!(
        "capacity {}, peak occupancy {}, max purge latency {} ns",
        out.capacity, out.peak_occupancy, out.max_purge_latency_ns
    ));
    for (t, o, r) in &out.legit_attempts {
        report.notes.push(format!("legitimate attempt at t={t} ns: {o} ({r})"));
    }
    if case == 2 && caps.spoof_im {
        report.notes.push(
            "each admitted spoofed request advances the spoofed identity's issued SQN".into(),
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    KeyOverAirLegacy,
    KeyOverAirCrossLayer,
    Replay,
    Mitm,
    Impersonation1,
    Impersonation2,
    LocationSpoof,
    LocationSpoofAtVictim,
    LocationSpoofNoiseFloor,
    DosFlood1,
    DosFlood2,
}

impl Scenario {
    pub const ALL: [Scenario; 11] = [
        Scenario::KeyOverAirLegacy,
        Scenario::KeyOverAirCrossLayer,
        Scenario::Replay,
        Scenario::Mitm,
        Scenario::Impersonation1,
        Scenario::Impersonation2,
        Scenario::LocationSpoof,
        Scenario::LocationSpoofAtVictim,
        Scenario::LocationSpoofNoiseFloor,
        Scenario::DosFlood1,
        Scenario::DosFlood2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::KeyOverAirLegacy => "key-over-air-legacy",
            Scenario::KeyOverAirCrossLayer => "key-over-air-cross-layer",
            Scenario::Replay => "replay",
            Scenario::Mitm => "mitm",
            Scenario::Impersonation1 => "impersonation-1",
            Scenario::Impersonation2 => "impersonation-2",
            Scenario::LocationSpoof => "location-spoof",
            Scenario::LocationSpoofAtVictim => "location-spoof-at-victim",
            Scenario::LocationSpoofNoiseFloor => "location-spoof-noise-floor",
            Scenario::DosFlood1 => "dos-flood-1",
            Scenario::DosFlood2 => "dos-flood-2",
        }
    }

    /// Runs the scenario with `n` attempts (flood size for the DoS cases).
    pub fn run(
        self,
        template: &WorldTemplate,
        caps: &AdversaryCapabilities,
        n: usize,
        seed: u64,
    ) -> Result<AttackReport, ProtocolError> {
        let mut report = match self {
            Scenario::KeyOverAirLegacy => attack_key_over_air(template, caps, Flavor::LegacyKeyOverAir, n, seed),
            Scenario::KeyOverAirCrossLayer => attack_key_over_air(template, caps, Flavor::CrossLayer, n, seed),
            Scenario::Replay => attack_replay(template, caps, n, seed),
            Scenario::Mitm => attack_mitm(template, caps, n, seed),
            Scenario::Impersonation1 => attack_impersonation(template, caps, 1, n, seed),
            Scenario::Impersonation2 => attack_impersonation(template, caps, 2, n, seed),
            Scenario::LocationSpoof => attack_location_spoof(template, caps, SpoofPlacement::default(), n, seed),
            Scenario::LocationSpoofAtVictim => {
                attack_location_spoof(template, caps, SpoofPlacement::AtVictimLocation, n, seed)
            }
            Scenario::LocationSpoofNoiseFloor => {
                attack_location_spoof(template, caps, SpoofPlacement::NoiseFloor, n, seed)
            }
            Scenario::DosFlood1 => attack_dos_flood(template, caps, 1, n, seed),
            Scenario::DosFlood2 => attack_dos_flood(template, caps, 2, n, seed),
        }?;
        report.scenario = self.as_str().to_string();
        Ok(report)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
