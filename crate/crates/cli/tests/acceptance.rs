//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Exits non-zero when a
//! criterion outside `KNOWN_RED` fails; known-red criteria still print FAIL
//! with their measurements.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use xlayer_core::adversary::{
    location_spoof_sweep, scan_for_secret, simulate_dos_flood, AdversaryCapabilities, Scenario,
    DEFAULT_SPOOF_DISTANCE_M,
};
use xlayer_core::aka::{build_av, encrypt_tim, encrypt_tim_bound, mask_im, prf, SqnIssuer, DEFAULT_AMF};
use xlayer_core::config::RunConfig;
use xlayer_core::cost::{check_trends, run_comparison, Approach};
use xlayer_core::fingerprint::{derive_key, fingerprint, KEY_CONTEXT};
use xlayer_core::protocol::{run_session, SessionOptions, WorldTemplate};
use xlayer_core::radio::rng_from_seed;
use xlayer_core::wire::decode_message;
use xlayer_core::zone::rss_sq_distance;
use xlayer_core::{Key128, Milenage, OperatorConstant, Outcome, ProtocolMessage, RssVector, SlaMode, Sqn};

const SEED: u64 = 7;

/// Criteria that fail for documented reasons (see the README).
const KNOWN_RED: &[u32] = &[1];

// pinned tolerances
const C1_SESSIONS_PER_MODE: usize = 1000;
const C1_MAX_RUNTIME: Duration = Duration::from_secs(10);
const C1_REQUIRED_RATE: f64 = 1.0;
const C3_QUERIES: usize = 500;
const C3_KS: [usize; 3] = [1, 3, 5];
const C3_MAX_RUNTIME: Duration = Duration::from_secs(5);
const C4_ATTEMPTS: usize = 1000;
const C5_ATTEMPTS: usize = 1000;
const C5_MAX_RATE: f64 = 0.01;
const C5_SWEEP_QUERIES: usize = 1000;
const C6_CELLS: [usize; 4] = [2, 4, 8, 16];
const C6_ROUNDS: usize = 3;
const C7_FLOOD_FACTOR: usize = 10;
const C8_ATTACK_N: &str = "50";

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn full(sla: SlaMode) -> SessionOptions {
    SessionOptions {
        use_zone_cache: false,
        ..SessionOptions::cross_layer(sla)
    }
}

/// Also returns how many transcript windows equal the session's k.
fn c1_completeness(t: &WorldTemplate) -> (Verdict, usize) {
    let start = Instant::now();
    let mut ok = 0usize;
    let mut total = 0usize;
    let mut k_hits = 0usize;
    let mut why: BTreeMap<String, usize> = BTreeMap::new();
    for sla in SlaMode::ALL {
        let mut w = t.instantiate(1);
        let mut rng = rng_from_seed(SEED);
        for _ in 0..C1_SESSIONS_PER_MODE {
            let a = w.place_at_random_anchor(0, &mut rng).expect("enrolled MT");
            let v = run_session(&mut w, 0, a.zone_id, full(sla), &mut rng).expect("session runs");
            total += 1;
            let records: Vec<_> = w.transport.session_transcript(v.session).cloned().collect();
            let rss = records.iter().find_map(|r| match decode_message(&r.bytes) {
                Ok(ProtocolMessage::AuthRequest { rss, .. }) => Some(rss),
                _ => None,
            });
            if let Some(rss) = &rss {
                k_hits += scan_for_secret(&records, &fingerprint(rss).key.0);
            }
            if v.outcome == Outcome::MutualAuthSuccess {
                ok += 1;
            } else {
                // split zone rejections into vote misses and threshold misses
                let label = match (&rss, v.reason) {
                    (Some(rss), xlayer_core::ReasonCode::ZoneRejected) => {
                        let m = t.db.knn(rss, t.params.knn_k).expect("knn");
                        if m.matched_zone != a.zone_id {
                            "zone-vote-miss".to_string()
                        } else {
                            "k_dh-above-epsilon".to_string()
                        }
                    }
                    (_, r) => r.to_string(),
                };
                *why.entry(label).or_default() += 1;
            }
            w.advance(1_000_000);
        }
    }
    let elapsed = start.elapsed();
    let rate = ok as f64 / total as f64;
    let pass = rate >= C1_REQUIRED_RATE && elapsed < C1_MAX_RUNTIME;
    (
        Verdict::new(
            pass,
            format!(
                "{ok}/{total} MutualAuthSuccess ({:.2}%), rejections {why:?}, epsilon {:.1}, {:.2} s (limit {} s)",
                100.0 * rate,
                t.params.epsilon_cdbm,
                elapsed.as_secs_f64(),
                C1_MAX_RUNTIME.as_secs()
            ),
        ),
        k_hits,
    )
}

fn oracle_vectors() -> BTreeMap<String, Vec<u8>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/oracle/vectors.txt");
    let text = std::fs::read_to_string(&path).expect("oracle vectors present");
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), hex::decode(v.trim()).expect("hex value")))
        .collect()
}

fn c2_crypto_oracle() -> Verdict {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    let mut check = |name: &str, got: &[u8], want: &[u8]| {
        checked += 1;
        if got != want {
            mismatches.push(name.to_string());
        }
    };
    let h = |s: &str| hex::decode(s).unwrap();

    // published conformance set 1
    let k = Key128(h("465b5ce8b199b49faa5f0a2ee238a6bc").try_into().unwrap());
    let op = OperatorConstant(h("cdc202d5123e20f62b6d676ac72cb318").try_into().unwrap());
    let rand: [u8; 16] = h("23553cbe9637a89d218ae64dae47bf35").try_into().unwrap();
    let sqn = Sqn::from_bytes(h("ff9bb4d0b607").try_into().unwrap());
    let amf = [0xb9, 0xb9];
    let m = Milenage::new(&k, &op);
    check("opc", &m.opc(), &h("cd63cb71954a9f4e48a5994e37a02baf"));
    check("f1", &m.f1(&rand, sqn, &amf), &h("4a9ffac354dfafb3"));
    check("f1*", &m.f1_star(&rand, sqn, &amf), &h("01cfaf9ec4e871e9"));
    check("f2", &m.f2(&rand), &h("a54211d5e3ba50bf"));
    check("f3", &m.f3(&rand), &h("b40ba9a3c58b2a05bbf0d987b21bf8cb"));
    check("f4", &m.f4(&rand), &h("f769bcd751044604127672711c6d3441"));
    check("f5", &m.f5(&rand), &h("aa689c648370"));
    check("f5*", &m.f5_star(&rand), &h("451e8beca43b"));

    // vectors produced by the scripted oracle
    let v = oracle_vectors();
    let want = |name: &str| v.get(name).unwrap_or_else(|| panic!("oracle vector {name} missing")).clone();
    for mean in [-7000, -6999] {
        let name = format!("derive_key({mean}, xlayer-k)");
        check(&name, &derive_key(mean, KEY_CONTEXT).0, &want(&name));
    }
    let key = derive_key(-7000, KEY_CONTEXT);
    check("av.k", &key.0, &want("av.k"));
    let rand: [u8; 16] = want("av.rand").try_into().unwrap();
    let m = Milenage::new(&key, &OperatorConstant::default());
    let av = build_av(&m, Sqn::new(1).unwrap(), &DEFAULT_AMF, &rand, &mut SqnIssuer::default()).expect("fresh SQN");
    check("av.mac", &av.autn.mac, &want("av.mac"));
    check("av.xres", &av.xres, &want("av.xres"));
    check("av.ck", &av.ck, &want("av.ck"));
    check("av.ik", &av.ik, &want("av.ik"));
    check("av.ak", &m.f5(&rand), &want("av.ak"));
    check("av.autn", &av.autn.to_bytes(), &want("av.autn"));
    let im: [u8; 16] = h("00112233445566778899aabbccddeeff").try_into().unwrap();
    check("mask(im, 0^128)", &mask_im(&im, &Key128::default()), &want("mask(im, 0^128)"));
    let tim = mask_im(&im, &key);
    check("mask(im, k)", &tim, &want("mask(im, k)"));
    check("tim-enc key", &prf(&key, b"tim-enc"), &want("tim-enc key"));
    let nonce: [u8; 12] = h("000000000000000000000001").try_into().unwrap();
    check("encrypt_tim(no aad)", &encrypt_tim(&tim, &key, &nonce), &want("encrypt_tim(no aad)"));
    let aad = h("0000000100000001ffffe4a800000000000003e8");
    check(
        "encrypt_tim(aad)",
        &encrypt_tim_bound(&tim, &key, &nonce, &aad),
        &want("encrypt_tim(aad)"),
    );
    Verdict::new(
        mismatches.is_empty(),
        format!("{checked} vectors checked, mismatches {mismatches:?}"),
    )
}

fn c3_knn(t: &WorldTemplate) -> Verdict {
    let mut rng = rng_from_seed(SEED);
    let mut queries: Vec<RssVector> = Vec::with_capacity(C3_QUERIES);
    while queries.len() < C3_QUERIES {
        let a = t.anchors[rng.gen_range(0..t.anchors.len())];
        if let Ok(q) = t.env.sample(&a.position, Some(a.orientation), 1, &mut rng) {
            queries.push(q);
        }
    }
    let floor = t.env.config.noise_floor_cdbm;
    let records = t.db.records();
    let mut indexed_time = Duration::ZERO;
    let mut mismatches = 0;
    for q in &queries {
        let mut all: Vec<(u64, usize)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (rss_sq_distance(q, &r.rss, floor).0, i))
            .collect();
        all.sort_unstable();
        for k in C3_KS {
            let start = Instant::now();
            let m = t.db.knn(q, k).expect("knn");
            indexed_time += start.elapsed();
            let top = &all[..k];
            let zones: Vec<u32> = top.iter().map(|&(_, i)| records[i].zone_id).collect();
            let count = |z: u32| zones.iter().filter(|&&x| x == z).count();
            let best = zones.iter().map(|&z| count(z)).max().unwrap();
            let zone = *zones.iter().find(|&&z| count(z) == best).unwrap();
            let same = m.neighbors.iter().map(|n| (n.sq_distance, n.index)).eq(top.iter().copied())
                && m.matched_zone == zone
                && m.k_dh == (top[0].0 as f64).sqrt();
            if !same {
                mismatches += 1;
            }
        }
    }
    let evaluated = C3_QUERIES * C3_KS.len();
    Verdict::new(
        mismatches == 0 && indexed_time < C3_MAX_RUNTIME,
        format!(
            "{}/{evaluated} identical to exhaustive scan over {} records, matcher time {:.2} s (limit {} s)",
            evaluated - mismatches,
            records.len(),
            indexed_time.as_secs_f64(),
            C3_MAX_RUNTIME.as_secs()
        ),
    )
}

fn c4_security(t: &WorldTemplate, k_hits: usize) -> Verdict {
    let caps = AdversaryCapabilities::standard();
    let run = |s: Scenario| s.run(t, &caps, C4_ATTEMPTS, SEED).expect("scenario runs");
    let legacy = run(Scenario::KeyOverAirLegacy);
    let replay = run(Scenario::Replay);
    let mitm = run(Scenario::Mitm);
    let unsolicited = run(Scenario::Impersonation2);
    let reason = |n: &str| mitm.reasons.get(n).copied().unwrap_or(0);
    let tamper = reason("tamper:accepted");
    let keys = reason("passive:keys-recovered");
    let n = C4_ATTEMPTS as u64;
    let pass = legacy.successes == n
        && replay.successes == 0
        && tamper == 0
        && keys == 0
        && unsolicited.successes == 0
        && k_hits == 0;
    Verdict::new(
        pass,
        format!(
            "legacy key recovery {}/{n}; replay {}/{n}; challenge tamper {tamper}/{n}; mitm key recovery {keys}/{n}; \
             unsolicited challenge {}/{n}; k found on wire {k_hits} times",
            legacy.successes, replay.successes, unsolicited.successes
        ),
    )
}

fn c5_location_spoof(t: &WorldTemplate) -> Verdict {
    let r = Scenario::LocationSpoof
        .run(t, &AdversaryCapabilities::standard(), C5_ATTEMPTS, SEED)
        .expect("scenario runs");
    let eps = t.params.epsilon_cdbm;
    let sweep = location_spoof_sweep(
        t,
        C5_SWEEP_QUERIES,
        DEFAULT_SPOOF_DISTANCE_M,
        &[0.5 * eps, eps, 1.5 * eps, 2.0 * eps],
        SEED,
    )
    .expect("sweep runs");
    let rows: Vec<String> = sweep
        .iter()
        .map(|s| format!("eps {:.0}: FRR {:.3} FAR {:.3}", s.epsilon, s.false_reject_rate, s.false_accept_rate))
        .collect();
    Verdict::new(
        r.rate() <= C5_MAX_RATE,
        format!(
            "{}/{} accepted from >= {DEFAULT_SPOOF_DISTANCE_M} m outside (limit {:.0}%), epsilon {eps:.1}; sweep [{}]",
            r.successes,
            r.attempts,
            100.0 * C5_MAX_RATE,
            rows.join("; ")
        ),
    )
}

fn c6_trends(t: &WorldTemplate) -> Verdict {
    let table = run_comparison(t, &Approach::ALL, &C6_CELLS, C6_ROUNDS, SEED).expect("comparison runs");
    let violations = check_trends(&table);
    let mut economy = Vec::new();
    for cells in C6_CELLS {
        let z = table.get(Approach::CrossLayerZones, cells).expect("row");
        let m = (C6_ROUNDS * cells) as u64;
        if z.full_auths != z.zones_visited || z.fast_paths != m - z.zones_visited || z.failures != 0 {
            economy.push(format!(
                "cells {cells}: full {} fast {} zones {} failures {}",
                z.full_auths, z.fast_paths, z.zones_visited, z.failures
            ));
        }
    }
    Verdict::new(
        violations.is_empty() && economy.is_empty(),
        format!(
            "cells {C6_CELLS:?} x {C6_ROUNDS} rounds; ordering violations {violations:?}; economy mismatches {economy:?}"
        ),
    )
}

fn c7_dos(t: &WorldTemplate) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let flood = C7_FLOOD_FACTOR * t.params.half_open_capacity;
    for case in [1, 2] {
        let (o, _) = simulate_dos_flood(t, &AdversaryCapabilities::standard(), case, flood, SEED).expect("flood runs");
        let ok = o.peak_occupancy <= o.capacity
            && !o.capacity_exceeded
            && o.overdue_entries == 0
            && o.max_purge_latency_ns == 0
            && o.entries_left == 0
            && o.legit_completed;
        pass &= ok;
        parts.push(format!(
            "case {case}: {} requests, peak {}/{}, purged {}, overdue {}, left {}, legit completed {}",
            o.flood_requests, o.peak_occupancy, o.capacity, o.purged, o.overdue_entries, o.entries_left, o.legit_completed
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn c8_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_xlayer");
    let commands: [&[&str]; 5] = [
        &["--seed", "11", "gen-map", "--out", "out.map"],
        &["run-auth", "--trace-len", "4", "--mts", "2"],
        &["run-auth", "--sla", "decentralized", "--drop", "0.2", "--trace-len", "4"],
        &["attack", "--scenario", "all", "--n", C8_ATTACK_N],
        &["bench", "--no-wall", "--entropy-positions", "200", "--out", "out.csv"],
    ];
    let run_in = |dir: &Path, args: &[&str]| -> Vec<u8> {
        let o = Command::new(bin).current_dir(dir).args(args).output().expect("binary runs");
        let mut bytes = o.stdout;
        bytes.extend(o.status.code().unwrap_or(-1).to_be_bytes());
        for f in ["out.map", "out.csv"] {
            if let Ok(b) = std::fs::read(dir.join(f)) {
                bytes.extend(b);
            }
        }
        bytes
    };
    let mut differing = Vec::new();
    for args in commands {
        let a = tempfile::tempdir().expect("tempdir");
        let b = tempfile::tempdir().expect("tempdir");
        if run_in(a.path(), args) != run_in(b.path(), args) {
            differing.push(args[..2].join(" "));
        }
    }
    Verdict::new(
        differing.is_empty(),
        format!("{} invocations run twice, differing {differing:?}", commands.len()),
    )
}

fn main() {
    let cfg = RunConfig {
        seed: SEED,
        ..RunConfig::default()
    };
    let spec = cfg.world_spec().expect("default config is valid");
    let t = WorldTemplate::build(&spec).expect("default world builds");

    let (c1, k_hits) = c1_completeness(&t);
    let results = [
        (1, "mutual-auth completeness", c1),
        (2, "crypto oracle equivalence", c2_crypto_oracle()),
        (3, "k-NN exhaustive equivalence", c3_knn(&t)),
        (4, "security contrast", c4_security(&t, k_hits)),
        (5, "location-spoof bound", c5_location_spoof(&t)),
        (6, "cost trend", c6_trends(&t)),
        (7, "DoS boundedness", c7_dos(&t)),
        (8, "CLI determinism", c8_determinism()),
    ];
    let mut unexpected = 0;
    for (n, name, v) in &results {
        let status = if v.pass { "PASS" } else { "FAIL" };
        let tag = if !v.pass && KNOWN_RED.contains(n) { " [known red]" } else { "" };
        println!("criterion {n} {name}: {status}{tag} {}", v.detail);
        if !v.pass && !KNOWN_RED.contains(n) {
            unexpected += 1;
        }
    }
    let passed = results.iter().filter(|(_, _, v)| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed, {unexpected} unexpected failures", results.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
