//! Per-entity state machines. Each entity is owned by one execution context;
//! the radio map and zone table are shared read-only.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::transport::SessionId;
use super::{Flavor, ProtocolError, ProtocolParams};
use crate::aka::{
    self, build_av, decrypt_tim_bound, encrypt_tim_bound, mask_im, mt_process_challenge,
    prf_block_ops, unmask_tim, verify_res, AkaError, AuthVector, Autn, Block, Key128, Milenage,
    SqnIssuer, SqnState, AEAD_TIM_BLOCK_OPS,
};
use crate::cost::CostCounters;
use crate::fingerprint::{fingerprint, fingerprint_from_wire, FingerprintKey, KEY_CONTEXT};
use crate::radio::{Environment, Position, SimRng};
use crate::wire::{ProtocolMessage, ReasonCode, RssVector};
use crate::zone::{zone_legitimacy, MatchResult, TrustedZoneDb, ZoneError, ZoneTable};

fn charge_prf(costs: &mut CostCounters, len: usize) {
    costs.prf_calls += 1;
    costs.cipher_block_ops += prf_block_ops(len);
}

/// Fingerprint derivation, masking and TIM key derivation cost the same on
/// both sides.
fn charge_fingerprint_and_tim(costs: &mut CostCounters) {
    charge_prf(costs, 4 + KEY_CONTEXT.len());
    charge_prf(costs, aka::TIM_MASK_LABEL.len());
    charge_prf(costs, aka::TIM_ENC_LABEL.len());
    costs.cipher_block_ops += AEAD_TIM_BLOCK_OPS;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheEntry {
    pub ck: Block,
    pub ik: Block,
    pub expires_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastPath {
    Hit(CacheEntry),
    CacheMiss,
}

#[derive(Debug, Clone, Copy)]
struct PendingAuth {
    session: SessionId,
    key: Key128,
    zone: u32,
    staged: Option<(Block, Block)>,
}

/// Mobile terminal.
#[derive(Debug, Clone)]
pub struct MtState {
    pub id: u32,
    im: Block,
    /// Static long-term key, used only by the baseline flows.
    static_key: Key128,
    pub position: Position,
    pub orientation: u32,
    pub serving_cell: u32,
    pub current_zone: u32,
    sqn: SqnState,
    cache: BTreeMap<u32, CacheEntry>,
    pending: Option<PendingAuth>,
    nonce_counter: u64,
    /// Vector reported instead of a fresh measurement.
    pub measurement_override: Option<RssVector>,
}

impl MtState {
    pub fn new(id: u32, im: Block, static_key: Key128, sqn_window: u64) -> Result<Self, AkaError> {
        Ok(Self {
            id,
            im,
            static_key,
            position: Position::new(0.0, 0.0),
            orientation: 0,
            serving_cell: 0,
            current_zone: 0,
            sqn: SqnState::new(sqn_window)?,
            cache: BTreeMap::new(),
            pending: None,
            nonce_counter: 0,
            measurement_override: None,
        })
    }

    pub fn im(&self) -> &Block {
        &self.im
    }

    pub fn static_key(&self) -> &Key128 {
        &self.static_key
    }

    pub fn sqn_state(&self) -> &SqnState {
        &self.sqn
    }

    /// Moves the replay window so that `last_accepted` is the newest SQN seen.
    pub fn resync_sqn(&mut self, last_accepted: u64) {
        self.sqn.last_accepted = last_accepted;
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn pending_session(&self) -> Option<SessionId> {
        self.pending.map(|p| p.session)
    }

    /// The key the MT used for its outstanding request.
    pub fn pending_key(&self) -> Option<Key128> {
        self.pending.map(|p| p.key)
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
    }

    pub fn cached(&self, zone_id: u32) -> Option<&CacheEntry> {
        self.cache.get(&zone_id)
    }

    /// Handover inside a zone that already authenticated: no network round
    /// trip while the cached session keys are unexpired.
    pub fn fast_path(&self, zone_id: u32, now_ns: u64) -> FastPath {
        match self.cache.get(&zone_id) {
            Some(e) if now_ns < e.expires_ns => FastPath::Hit(*e),
            _ => FastPath::CacheMiss,
        }
    }

    fn next_nonce(&mut self) -> [u8; 12] {
        self.nonce_counter += 1;
        let mut n = [0u8; 12];
        n[..4].copy_from_slice(&self.id.to_be_bytes());
        n[4..].copy_from_slice(&self.nonce_counter.to_be_bytes());
        n
    }

    fn begin(&mut self, session: SessionId, key: Key128, zone: u32) {
        self.pending = Some(PendingAuth {
            session,
            key,
            zone,
            staged: None,
        });
    }

    /// Measures RSS at the current position and builds the first message.
    /// Refused when a valid cache entry for `zone_id` exists.
    #[allow(clippy::too_many_arguments)]
    pub fn initiate_auth(
        &mut self,
        env: &Environment,
        zone_id: u32,
        session: SessionId,
        now_ns: u64,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<ProtocolMessage, ProtocolError> {
        if let FastPath::Hit(_) = self.fast_path(zone_id, now_ns) {
            return Err(ProtocolError::FastPathAvailable(zone_id));
        }
        let rss = self.measure(env, now_ns, rng)?;
        Ok(self.seal_request(&rss, session, zone_id, costs))
    }

    /// RSS vector at the current position, or the override if one is set.
    pub fn measure(&self, env: &Environment, now_ns: u64, rng: &mut SimRng) -> Result<RssVector, ProtocolError> {
        match &self.measurement_override {
            Some(v) => Ok(v.clone()),
            None => Ok(env.sample(&self.position, Some(self.orientation), now_ns, rng)?),
        }
    }

    /// Builds an AuthRequest from an already measured vector.
    pub fn seal_request(
        &mut self,
        rss: &RssVector,
        session: SessionId,
        zone_id: u32,
        costs: &mut CostCounters,
    ) -> ProtocolMessage {
        let FingerprintKey { key, .. } = fingerprint(rss);
        charge_fingerprint_and_tim(costs);
        let tim = mask_im(&self.im, &key);
        let nonce = self.next_nonce();
        let tim_ciphertext = encrypt_tim_bound(&tim, &key, &nonce, &rss.to_bytes());
        self.begin(session, key, zone_id);
        ProtocolMessage::AuthRequest {
            tim_ciphertext,
            nonce,
            rss: rss.clone(),
        }
    }

    /// Baseline request carrying identity (and for the legacy flow, the key)
    /// in the clear.
    pub fn initiate_baseline(&mut self, flavor: Flavor, zone_id: u32, session: SessionId) -> ProtocolMessage {
        self.begin(session, self.static_key, zone_id);
        match flavor {
            Flavor::LegacyKeyOverAir => ProtocolMessage::LegacyAuthRequest {
                im: self.im,
                key: self.static_key.0,
            },
            _ => ProtocolMessage::IdentityRequest { im: self.im },
        }
    }

    /// Verifies the network and computes RES. The session keys are staged
    /// and only enter the zone cache once the final verdict accepts.
    pub fn handle_challenge(
        &mut self,
        rand: &Block,
        autn: &[u8; 16],
        params: &ProtocolParams,
        costs: &mut CostCounters,
    ) -> Result<[u8; 8], ReasonCode> {
        let Some(pending) = self.pending.as_mut() else {
            return Err(ReasonCode::UnsolicitedChallenge);
        };
        let m = Milenage::new(&pending.key, &params.op);
        let result = mt_process_challenge(&m, rand, &Autn::from_bytes(autn), &self.sqn);
        costs.cipher_block_ops += m.block_ops();
        match result {
            Ok(ok) => {
                self.sqn = ok.new_state;
                pending.staged = Some((ok.ck, ok.ik));
                Ok(ok.res)
            }
            Err(AkaError::MacMismatch) => Err(ReasonCode::MacMismatch),
            Err(_) => Err(ReasonCode::SqnOutOfRange),
        }
    }

    /// Final verdict from the network. Returns true if keys were cached.
    pub fn handle_verdict(&mut self, accept: bool, now_ns: u64, params: &ProtocolParams) -> bool {
        let Some(p) = self.pending.take() else {
            return false;
        };
        match (accept, p.staged) {
            (true, Some((ck, ik))) => {
                self.cache.insert(
                    p.zone,
                    CacheEntry {
                        ck,
                        ik,
                        expires_ns: now_ns.saturating_add(params.cache_ttl_ns),
                    },
                );
                true
            }
            _ => false,
        }
    }

    /// Gives up on the outstanding request.
    pub fn abandon(&mut self) {
        self.pending = None;
    }
}

/// A pending authentication awaiting the next message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfOpenEntry {
    pub opened_ns: u64,
    pub deadline_ns: u64,
    pub xres: Option<[u8; 8]>,
}

/// Bounded table of half-open authentications with per-entry deadlines.
#[derive(Debug, Clone)]
pub struct HalfOpenTable {
    entries: BTreeMap<SessionId, HalfOpenEntry>,
    capacity: usize,
    timeout_ns: u64,
    peak: usize,
}

impl HalfOpenTable {
    pub fn new(capacity: usize, timeout_ns: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            capacity,
            timeout_ns,
            peak: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Largest size the table has reached.
    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn get(&self, session: SessionId) -> Option<&HalfOpenEntry> {
        self.entries.get(&session)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SessionId, &HalfOpenEntry)> {
        self.entries.iter()
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.entries.values().map(|e| e.deadline_ns).min()
    }

    /// Opens or refreshes the entry for `session`. A new entry needs a free
    /// slot.
    pub fn upsert(&mut self, session: SessionId, xres: Option<[u8; 8]>, now_ns: u64) -> Result<(), ReasonCode> {
        let deadline_ns = now_ns + self.timeout_ns;
        if let Some(e) = self.entries.get_mut(&session) {
            e.deadline_ns = deadline_ns;
            if xres.is_some() {
                e.xres = xres;
            }
            return Ok(());
        }
        if self.entries.len() >= self.capacity {
            return Err(ReasonCode::HalfOpenCapacityExceeded);
        }
        self.entries.insert(
            session,
            HalfOpenEntry {
                opened_ns: now_ns,
                deadline_ns,
                xres,
            },
        );
        self.peak = self.peak.max(self.entries.len());
        Ok(())
    }

    /// Removes and returns the entry; an entry whose deadline has been
    /// reached is removed and reported as expired.
    pub fn take(&mut self, session: SessionId, now_ns: u64) -> Result<HalfOpenEntry, ReasonCode> {
        let e = self.entries.remove(&session).ok_or(ReasonCode::NoPendingEntry)?;
        if now_ns >= e.deadline_ns {
            return Err(ReasonCode::Expired);
        }
        Ok(e)
    }

    pub fn release(&mut self, session: SessionId) -> Option<HalfOpenEntry> {
        self.entries.remove(&session)
    }

    /// Drops every entry whose deadline is at or before `now_ns`.
    pub fn purge_expired(&mut self, now_ns: u64) -> Vec<(SessionId, HalfOpenEntry)> {
        let expired: Vec<SessionId> = self
            .entries
            .iter()
            .filter(|(_, e)| e.deadline_ns <= now_ns)
            .map(|(&s, _)| s)
            .collect();
        expired
            .into_iter()
            .map(|s| (s, self.entries.remove(&s).expect("present")))
            .collect()
    }
}

/// Network slice: relays requests, forwards challenges, checks RES.
#[derive(Debug, Clone)]
pub struct NsState {
    pub half_open: HalfOpenTable,
}

impl NsState {
    pub fn new(capacity: usize, timeout_ns: u64) -> Self {
        Self {
            half_open: HalfOpenTable::new(capacity, timeout_ns),
        }
    }

    /// Opens a half-open entry for a request about to be relayed to the AS.
    pub fn admit(&mut self, session: SessionId, now_ns: u64) -> Result<(), ReasonCode> {
        if self.half_open.get(session).is_some() {
            return Err(ReasonCode::Malformed);
        }
        self.half_open.upsert(session, None, now_ns)
    }

    /// Stores XRES with a fresh deadline and strips it from what the MT sees.
    pub fn forward_challenge(
        &mut self,
        session: SessionId,
        av: &ProtocolMessage,
        now_ns: u64,
    ) -> Result<ProtocolMessage, ReasonCode> {
        let ProtocolMessage::AvToNs { rand, autn, xres } = av else {
            return Err(ReasonCode::Malformed);
        };
        self.half_open.upsert(session, Some(*xres), now_ns)?;
        Ok(ProtocolMessage::Challenge {
            rand: *rand,
            autn: *autn,
        })
    }

    /// Compares RES with the stored XRES. The entry is removed either way.
    pub fn verify(&mut self, session: SessionId, res: &[u8; 8], now_ns: u64) -> Result<(), ReasonCode> {
        let entry = self.half_open.take(session, now_ns)?;
        let xres = entry.xres.ok_or(ReasonCode::NoPendingEntry)?;
        if verify_res(res, &xres) {
            Ok(())
        } else {
            Err(ReasonCode::ResMismatch)
        }
    }

    pub fn release(&mut self, session: SessionId) {
        self.half_open.release(session);
    }

    pub fn purge_expired(&mut self, now_ns: u64) -> Vec<(SessionId, HalfOpenEntry)> {
        self.half_open.purge_expired(now_ns)
    }
}

#[derive(Debug, Clone)]
pub struct Subscriber {
    pub enrolled: bool,
    pub issuer: SqnIssuer,
    pub static_key: Key128,
}

/// What the AS produced for an accepted request.
#[derive(Debug, Clone)]
pub struct IssuedAv {
    pub av: AuthVector,
    pub im: Block,
    pub fingerprint: Option<FingerprintKey>,
    pub location: Option<MatchResult>,
}

/// Authentication slice: subscriber registry, radio map, AV issuance.
#[derive(Debug, Clone)]
pub struct AsState {
    subscribers: BTreeMap<Block, Subscriber>,
    db: Arc<TrustedZoneDb>,
    zones: Arc<ZoneTable>,
    /// Pending XRES for the decentralized flow, where the AS itself checks RES.
    pub pending: HalfOpenTable,
}

impl AsState {
    pub fn new(db: Arc<TrustedZoneDb>, zones: Arc<ZoneTable>, capacity: usize, timeout_ns: u64) -> Self {
        Self {
            subscribers: BTreeMap::new(),
            db,
            zones,
            pending: HalfOpenTable::new(capacity, timeout_ns),
        }
    }

    pub fn enroll(&mut self, im: Block, static_key: Key128) {
        self.subscribers.insert(
            im,
            Subscriber {
                enrolled: true,
                issuer: SqnIssuer::default(),
                static_key,
            },
        );
    }

    pub fn subscriber(&self, im: &Block) -> Option<&Subscriber> {
        self.subscribers.get(im)
    }

    pub fn db(&self) -> &TrustedZoneDb {
        &self.db
    }

    pub fn zones(&self) -> &ZoneTable {
        &self.zones
    }

    /// Freshness: the newest arrival time must lie in
    /// `[now - freshness_window, now]`.
    pub fn check_fresh(rss: &RssVector, now_ns: u64, params: &ProtocolParams) -> Result<(), ReasonCode> {
        let newest = rss.max_toa_ns();
        if newest > now_ns || now_ns - newest > params.freshness_window_ns {
            return Err(ReasonCode::StaleRss);
        }
        Ok(())
    }

    /// k-NN match plus legitimacy against the zone of the serving cell.
    pub fn check_location(
        &self,
        rss: &RssVector,
        serving_cell: u32,
        params: &ProtocolParams,
        costs: &mut CostCounters,
    ) -> Result<MatchResult, ReasonCode> {
        let claimed = self.zones.zone_of(serving_cell).ok_or(ReasonCode::ZoneRejected)?;
        let m = match self.db.knn(rss, params.knn_k) {
            Ok(m) => m,
            Err(ZoneError::AllImputed) => {
                costs.knn_distance_evals += self.db.len() as u64;
                return Err(ReasonCode::ZoneRejected);
            }
            Err(_) => return Err(ReasonCode::ZoneRejected),
        };
        costs.knn_distance_evals += m.distance_evals;
        if zone_legitimacy(&m, claimed, params.epsilon_cdbm) {
            Ok(m)
        } else {
            Err(ReasonCode::ZoneRejected)
        }
    }

    fn issue(
        &mut self,
        im: &Block,
        key: &Key128,
        params: &ProtocolParams,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<AuthVector, ReasonCode> {
        let sub = self.subscribers.get_mut(im).ok_or(ReasonCode::UnknownIdentity)?;
        let mut rand = [0u8; 16];
        rng.fill(&mut rand);
        let m = Milenage::new(key, &params.op);
        let sqn = sub.issuer.next().map_err(|_| ReasonCode::SqnOutOfRange)?;
        let av = build_av(&m, sqn, &params.amf, &rand, &mut sub.issuer).map_err(|_| ReasonCode::SqnOutOfRange)?;
        costs.cipher_block_ops += m.block_ops();
        Ok(av)
    }

    /// Cross-layer step 2. Checks, in order: TIM decryption under the key
    /// re-derived from the received vector, enrollment, freshness, and zone
    /// legitimacy; only then is an AV built.
    #[allow(clippy::too_many_arguments)]
    pub fn handle_request(
        &mut self,
        tim_ciphertext: &[u8],
        nonce: &[u8; 12],
        rss: &RssVector,
        serving_cell: u32,
        now_ns: u64,
        params: &ProtocolParams,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<IssuedAv, ReasonCode> {
        let rss_bytes = rss.to_bytes();
        let fp = fingerprint_from_wire(&rss_bytes).map_err(|_| ReasonCode::Malformed)?;
        charge_fingerprint_and_tim(costs);
        let tim = decrypt_tim_bound(tim_ciphertext, &fp.key, nonce, &rss_bytes)
            .map_err(|_| ReasonCode::DecryptFailed)?;
        let im = unmask_tim(&tim, &fp.key);
        match self.subscribers.get(&im) {
            Some(s) if s.enrolled => {}
            _ => return Err(ReasonCode::UnknownIdentity),
        }
        Self::check_fresh(rss, now_ns, params)?;
        let location = self.check_location(rss, serving_cell, params, costs)?;
        let av = self.issue(&im, &fp.key, params, rng, costs)?;
        Ok(IssuedAv {
            av,
            im,
            fingerprint: Some(fp),
            location: Some(location),
        })
    }

    /// Baseline step 2: identity in the clear, static key, no location check.
    pub fn handle_baseline(
        &mut self,
        im: &Block,
        params: &ProtocolParams,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<IssuedAv, ReasonCode> {
        let key = match self.subscribers.get(im) {
            Some(s) if s.enrolled => s.static_key,
            _ => return Err(ReasonCode::UnknownIdentity),
        };
        let av = self.issue(im, &key, params, rng, costs)?;
        Ok(IssuedAv {
            av,
            im: *im,
            fingerprint: None,
            location: None,
        })
    }

    /// Dispatches any request message.
    pub fn handle_message(
        &mut self,
        msg: &ProtocolMessage,
        serving_cell: u32,
        now_ns: u64,
        params: &ProtocolParams,
        rng: &mut SimRng,
        costs: &mut CostCounters,
    ) -> Result<IssuedAv, ReasonCode> {
        match msg {
            ProtocolMessage::AuthRequest {
                tim_ciphertext,
                nonce,
                rss,
            } => self.handle_request(tim_ciphertext, nonce, rss, serving_cell, now_ns, params, rng, costs),
            ProtocolMessage::IdentityRequest { im } | ProtocolMessage::LegacyAuthRequest { im, .. } => {
                self.handle_baseline(im, params, rng, costs)
            }
            _ => Err(ReasonCode::Malformed),
        }
    }

    /// Decentralized step 3: the AS holds XRES and checks RES itself.
    pub fn verify(&mut self, session: SessionId, res: &[u8; 8], now_ns: u64) -> Result<(), ReasonCode> {
        let entry = self.pending.take(session, now_ns)?;
        let xres = entry.xres.ok_or(ReasonCode::NoPendingEntry)?;
        if verify_res(res, &xres) {
            Ok(())
        } else {
            Err(ReasonCode::ResMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_capacity_and_purge() {
        let mut t = HalfOpenTable::new(2, 100);
        t.upsert(1, None, 0).unwrap();
        t.upsert(2, None, 10).unwrap();
        assert_eq!(t.upsert(3, None, 10), Err(ReasonCode::HalfOpenCapacityExceeded));
        // refreshing an existing entry needs no slot
        t.upsert(1, Some([1; 8]), 20).unwrap();
        assert_eq!(t.get(1).unwrap().deadline_ns, 120);
        assert_eq!(t.purge_expired(109).len(), 0);
        let purged = t.purge_expired(110);
        assert_eq!(purged.len(), 1);
        assert_eq!(purged[0].0, 2);
        assert_eq!(t.len(), 1);
        assert_eq!(t.peak(), 2);
        t.upsert(3, None, 110).unwrap();
    }

    #[test]
    fn take_reports_expiry() {
        let mut t = HalfOpenTable::new(4, 100);
        t.upsert(1, Some([0; 8]), 0).unwrap();
        assert_eq!(t.take(1, 100), Err(ReasonCode::Expired));
        assert_eq!(t.take(1, 50), Err(ReasonCode::NoPendingEntry));
        t.upsert(2, Some([0; 8]), 0).unwrap();
        assert!(t.take(2, 99).is_ok());
    }

    #[test]
    fn ns_challenge_strips_xres() {
        let mut ns = NsState::new(4, 100);
        let av = ProtocolMessage::AvToNs {
            rand: [1; 16],
            autn: [2; 16],
            xres: [3; 8],
        };
        let ch = ns.forward_challenge(9, &av, 0).unwrap();
        assert_eq!(
            ch,
            ProtocolMessage::Challenge {
                rand: [1; 16],
                autn: [2; 16]
            }
        );
        assert_eq!(ns.verify(9, &[4; 8], 10), Err(ReasonCode::ResMismatch));
        // removed after the failed check
        assert_eq!(ns.verify(9, &[3; 8], 10), Err(ReasonCode::NoPendingEntry));
    }
}
