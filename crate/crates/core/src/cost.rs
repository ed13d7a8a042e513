//! Operation counters and the four-way cost comparison across small-cell
//! counts.
//!
//! Counters are deterministic given a seed; `wall_ns` is the only
//! hardware-dependent column.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::fingerprint::mean_rss;
use crate::protocol::{
    run_session, Flavor, Outcome, ProtocolError, SessionOptions, SlaMode, WorldTemplate,
};
use crate::radio::{
    generate_mobility_trace, rng_from_seed, Environment, EnvironmentConfig, Position, RadioError,
    SimRng,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CostCounters {
    pub cipher_block_ops: u64,
    pub prf_calls: u64,
    pub knn_distance_evals: u64,
    pub messages_sent: u64,
    pub bytes_sent: u64,
    pub wall_ns: u64,
}

impl CostCounters {
    /// Block-cipher invocations plus distance evaluations.
    pub fn compute_ops(&self) -> u64 {
        self.cipher_block_ops + self.knn_distance_evals
    }

    /// Every counter except `wall_ns`.
    pub fn deterministic(&self) -> [u64; 5] {
        [
            self.cipher_block_ops,
            self.prf_calls,
            self.knn_distance_evals,
            self.messages_sent,
            self.bytes_sent,
        ]
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.cipher_block_ops += o.cipher_block_ops;
        self.prf_calls += o.prf_calls;
        self.knn_distance_evals += o.knn_distance_evals;
        self.messages_sent += o.messages_sent;
        self.bytes_sent += o.bytes_sent;
        self.wall_ns += o.wall_ns;
    }
}

impl Add for CostCounters {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for CostCounters {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    /// Fingerprint and k-NN check per handover, no AKA.
    NonCrypto,
    /// AKA per handover under a static pre-shared key, no k-NN.
    CryptoOnly,
    /// Full cross-layer authentication in every cell.
    CrossLayerNoZones,
    /// Full cross-layer authentication once per zone, fast path otherwise.
    CrossLayerZones,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::NonCrypto,
        Approach::CryptoOnly,
        Approach::CrossLayerNoZones,
        Approach::CrossLayerZones,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::NonCrypto => "non-crypto",
            Approach::CryptoOnly => "crypto-only",
            Approach::CrossLayerNoZones => "cross-layer-no-zones",
            Approach::CrossLayerZones => "cross-layer-zones",
        }
    }

    pub fn session_options(self) -> SessionOptions {
        let (flavor, use_zone_cache) = match self {
            Approach::NonCrypto => (Flavor::LocationOnly, false),
            Approach::CryptoOnly => (Flavor::PlainAka, false),
            Approach::CrossLayerNoZones => (Flavor::CrossLayer, false),
            Approach::CrossLayerZones => (Flavor::CrossLayer, true),
        };
        SessionOptions {
            sla: SlaMode::Centralized,
            use_zone_cache,
            flavor,
        }
    }
}

impl FromStr for Approach {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| CostError::UnknownApproach(s.to_string()))
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("unknown approach {0:?}")]
    UnknownApproach(String),
    #[error("empty cost table")]
    EmptyTable,
    #[error("no cell counts given")]
    NoCellCounts,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub approach: Approach,
    pub cells: usize,
    pub counters: CostCounters,
    /// Trace points served by a network exchange.
    pub full_auths: u64,
    pub fast_paths: u64,
    /// Extra exchanges after a rejection; their cost is included.
    pub retries: u64,
    /// Trace points still unauthenticated after every attempt.
    pub failures: u64,
    /// Distinct zones per trace, summed over rounds.
    pub zones_visited: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
}

impl CostTable {
    pub fn get(&self, approach: Approach, cells: usize) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.approach == approach && r.cells == cells)
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.cells).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Simulated dwell time per cell in a comparison trace.
pub const TRACE_DWELL_NS: u64 = 10_000_000_000;

/// Attempts per trace point. A rejected MT measures again and retries.
pub const MAX_ATTEMPTS: usize = 3;

const MEASUREMENT_SALT: u64 = 0x6d65_6173_7572_6521;

/// Replays the same mobility traces under each approach. For each cell
/// count `m`, `rounds` traces of the first `m` cells (in zone order) are
/// generated; every approach runs each trace in a fresh world with MT 0.
/// A rejected exchange is retried up to [`MAX_ATTEMPTS`] times. RSS
/// measurements are drawn per trace point and attempt, so all approaches
/// see the same vectors.
pub fn run_comparison(
    template: &WorldTemplate,
    approaches: &[Approach],
    cell_counts: &[usize],
    rounds: usize,
    seed: u64,
) -> Result<CostTable, CostError> {
    if cell_counts.is_empty() {
        return Err(CostError::NoCellCounts);
    }
    let mut approaches = approaches.to_vec();
    approaches.sort_unstable();
    approaches.dedup();
    let cell_order = template.zones.cell_order();
    let anchor_positions = template.db.locations();
    let mut rows = Vec::new();
    for &cells in cell_counts {
        let mut trace_rng = rng_from_seed(seed ^ (cells as u64).wrapping_mul(0x9e37_79b9));
        let mut traces = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            traces.push(generate_mobility_trace(
                &template.env,
                &cell_order,
                &anchor_positions,
                cells,
                TRACE_DWELL_NS,
                crate::protocol::WORLD_EPOCH_NS,
                &mut trace_rng,
            )?);
        }
        for &approach in &approaches {
            let mut row = CostRow {
                approach,
                cells,
                counters: CostCounters::default(),
                full_auths: 0,
                fast_paths: 0,
                retries: 0,
                failures: 0,
                zones_visited: 0,
            };
            let opts = approach.session_options();
            for (round, trace) in traces.iter().enumerate() {
                let mut world = template.instantiate(1);
                let mut rng = rng_from_seed(seed ^ ((round as u64) << 32) ^ cells as u64);
                row.zones_visited += trace.distinct_zones() as u64;
                for (i, p) in trace.points.iter().enumerate() {
                    world.clock_ns = world.clock_ns.max(p.time_ns);
                    world.place_mt(0, p.position, 0)?;
                    for attempt in 0..MAX_ATTEMPTS {
                        // every approach sees the same measurement at the same trace point
                        let mut m_rng = rng_from_seed(
                            seed ^ MEASUREMENT_SALT
                                ^ ((cells as u64) << 48)
                                ^ ((round as u64) << 24)
                                ^ ((i as u64) << 8)
                                ^ attempt as u64,
                        );
                        let rss = template.env.sample(&p.position, Some(0), world.clock_ns, &mut m_rng)?;
                        world.mt_mut(0).expect("MT 0 exists").measurement_override = Some(rss);
                        let v = run_session(&mut world, 0, p.zone_id, opts, &mut rng)?;
                        row.counters += v.counters;
                        if attempt > 0 {
                            row.retries += 1;
                        }
                        if v.outcome.is_success() {
                            match v.outcome {
                                Outcome::FastPathSuccess => row.fast_paths += 1,
                                _ => row.full_auths += 1,
                            }
                            break;
                        }
                        log::warn!(
                            "{approach} cell {} round {round} attempt {attempt}: {} ({})",
                            p.cell_id,
                            v.outcome,
                            v.reason
                        );
                        if attempt + 1 == MAX_ATTEMPTS {
                            row.full_auths += 1;
                            row.failures += 1;
                        }
                        world.advance(1_000_000);
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok(CostTable { rows })
}

pub const CSV_HEADER: &str = "approach,cells,cipher_block_ops,prf_calls,knn_distance_evals,messages,bytes,wall_ns";

/// Rows ordered by approach, then cell count. `wall_ns` is written as 0
/// when `include_wall` is false.
pub fn to_csv(table: &CostTable, include_wall: bool) -> Result<String, CostError> {
    if table.rows.is_empty() {
        return Err(CostError::EmptyTable);
    }
    let mut rows: Vec<&CostRow> = table.rows.iter().collect();
    rows.sort_by_key(|r| (r.approach, r.cells));
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.counters;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.approach,
            r.cells,
            c.cipher_block_ops,
            c.prf_calls,
            c.knn_distance_evals,
            c.messages_sent,
            c.bytes_sent,
            if include_wall { c.wall_ns } else { 0 }
        );
    }
    Ok(out)
}

pub fn emit_csv(table: &CostTable, path: &Path, include_wall: bool) -> Result<(), CostError> {
    let text = to_csv(table, include_wall)?;
    std::fs::write(path, text).map_err(|source| CostError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Checks the qualitative relations between approaches. Returns one line per
/// violated relation; empty means all hold.
pub fn check_trends(table: &CostTable) -> Vec<String> {
    use Approach::*;
    let mut violations = Vec::new();
    let ge_all = |a: &CostCounters, b: &CostCounters| {
        a.deterministic().iter().zip(b.deterministic()).all(|(x, y)| *x >= y)
    };
    let mut last_gap: Option<(usize, i128)> = None;
    for cells in table.cell_counts() {
        let row = |a| table.get(a, cells);
        if let (Some(nz), Some(co)) = (row(CrossLayerNoZones), row(CryptoOnly)) {
            if !(ge_all(&nz.counters, &co.counters) && nz.counters.compute_ops() > co.counters.compute_ops()) {
                violations.push(format!("cells={cells}: cross-layer-no-zones not above crypto-only"));
            }
            let gap = nz.counters.compute_ops() as i128 - co.counters.compute_ops() as i128;
            if let Some((prev_cells, prev)) = last_gap {
                if gap < prev {
                    violations.push(format!(
                        "gap no-zones minus crypto-only fell from {prev} (cells={prev_cells}) to {gap} (cells={cells})"
                    ));
                }
            }
            last_gap = Some((cells, gap));
            if co.counters.compute_ops() == 0 {
                violations.push(format!("cells={cells}: crypto-only reports zero cost"));
            }
        }
        if let (Some(nz), Some(nc)) = (row(CrossLayerNoZones), row(NonCrypto)) {
            if !(ge_all(&nz.counters, &nc.counters) && nz.counters.compute_ops() > nc.counters.compute_ops()) {
                violations.push(format!("cells={cells}: cross-layer-no-zones not above non-crypto"));
            }
        }
        if let (Some(z), Some(nz)) = (row(CrossLayerZones), row(CrossLayerNoZones)) {
            let (a, b) = (z.counters, nz.counters);
            let strictly_less = a.cipher_block_ops < b.cipher_block_ops
                && a.prf_calls < b.prf_calls
                && a.messages_sent < b.messages_sent
                && a.bytes_sent < b.bytes_sent
                && a.knn_distance_evals <= b.knn_distance_evals;
            if !strictly_less {
                violations.push(format!("cells={cells}: cross-layer-zones not below cross-layer-no-zones"));
            }
        }
    }
    for r in &table.rows {
        let sessions = r.full_auths + r.fast_paths;
        let expected_full = match r.approach {
            CrossLayerZones => r.zones_visited,
            _ => sessions,
        };
        if r.full_auths != expected_full || r.failures != 0 {
            violations.push(format!(
                "{} cells={}: {} full auths, {} fast paths, {} failures (expected {} full)",
                r.approach, r.cells, r.full_auths, r.fast_paths, r.failures, expected_full
            ));
        }
    }
    violations
}

/// Shannon entropy (bits) of the empirical distribution of `values`.
pub fn shannon_entropy(values: &[i32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut hist: BTreeMap<i32, usize> = BTreeMap::new();
    for &v in values {
        *hist.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    hist.values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    pub sigma_cdbm: i32,
    pub samples: usize,
    pub distinct_means: usize,
    pub min_mean_cdbm: i32,
    pub max_mean_cdbm: i32,
    pub entropy_bits: f64,
}

/// Entropy of the fingerprint mean over `positions`, one measurement per
/// position, for each shadowing sigma.
pub fn key_entropy_report(
    base: &EnvironmentConfig,
    positions: &[Position],
    sigmas_cdbm: &[i32],
    seed: u64,
) -> Result<Vec<EntropyRow>, CostError> {
    let mut rows = Vec::new();
    for &sigma in sigmas_cdbm {
        let cfg = EnvironmentConfig {
            shadowing_sigma_cdbm: sigma,
            ..base.clone()
        };
        let env = Environment::default_layout(cfg)?;
        let mut rng = rng_from_seed(seed);
        let mut means = Vec::with_capacity(positions.len());
        for p in positions {
            if let Ok(v) = env.sample(p, None, 1, &mut rng) {
                means.push(mean_rss(&v));
            }
        }
        let mut distinct = means.clone();
        distinct.sort_unstable();
        distinct.dedup();
        rows.push(EntropyRow {
            sigma_cdbm: sigma,
            samples: means.len(),
            distinct_means: distinct.len(),
            min_mean_cdbm: distinct.first().copied().unwrap_or(0),
            max_mean_cdbm: distinct.last().copied().unwrap_or(0),
            entropy_bits: shannon_entropy(&means),
        });
    }
    Ok(rows)
}

/// `n` positions drawn uniformly over a `width` × `height` area.
pub fn random_positions(width: f64, height: f64, n: usize, rng: &mut SimRng) -> Vec<Position> {
    (0..n)
        .map(|_| Position::new(rng.gen_range(0.0..width), rng.gen_range(0.0..height)))
        .collect()
}
