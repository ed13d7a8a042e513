//! Seedable radio environment: access points, log-distance path loss with
//! log-normal shadowing, time of arrival, mobility traces and radio-map
//! synthesis.
//!
//! Every sampling function takes an explicit random stream, so independent
//! sessions never share generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{RssReading, RssVector, RSS_MAX_CDBM, RSS_MIN_CDBM};

/// Speed of light in meters per nanosecond.
pub const LIGHT_M_PER_NS: f64 = 0.299_792_458;

/// The single generator type used for every simulation stream.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("receiver coincides with access point {0}")]
    ZeroDistance(u32),
    #[error("no access point in radio range")]
    NoApInRange,
    #[error("access point list is empty")]
    NoAccessPoints,
    #[error("duplicate access point id {0}")]
    DuplicateAp(u32),
    #[error("access point {ap_id} transmit power {tx_power_cdbm} cdBm exceeds 3000")]
    TxPowerTooHigh { ap_id: u32, tx_power_cdbm: i32 },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("orientation and sample counts must be at least 1")]
    EmptyCombination,
    #[error("requested {requested} cells but only {available} are available")]
    NotEnoughCells { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessPoint {
    pub ap_id: u32,
    pub position: Position,
    pub tx_power_cdbm: i32,
    pub cell_id: u32,
}

/// Channel parameters. Field names double as the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub reference_loss_cdbm: i32,
    pub shadowing_sigma_cdbm: i32,
    pub toa_jitter_ns: u64,
    pub noise_floor_cdbm: i32,
    pub seed: u64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 3.0,
            reference_distance_m: 1.0,
            reference_loss_cdbm: 4000,
            shadowing_sigma_cdbm: 400,
            toa_jitter_ns: 50,
            noise_floor_cdbm: -9500,
            seed: 7,
        }
    }
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(1.5..=6.0).contains(&self.path_loss_exponent) {
            return Err(RadioError::InvalidConfig(format!(
                "path_loss_exponent {} outside [1.5, 6]",
                self.path_loss_exponent
            )));
        }
        if self.shadowing_sigma_cdbm < 0 {
            return Err(RadioError::InvalidConfig(
                "shadowing_sigma_cdbm must be >= 0".into(),
            ));
        }
        if self.reference_distance_m.is_nan() || self.reference_distance_m <= 0.0 {
            return Err(RadioError::InvalidConfig(
                "reference_distance_m must be > 0".into(),
            ));
        }
        if !(RSS_MIN_CDBM..=RSS_MAX_CDBM).contains(&self.noise_floor_cdbm) {
            return Err(RadioError::InvalidConfig(format!(
                "noise_floor_cdbm {} outside [-15000, 0]",
                self.noise_floor_cdbm
            )));
        }
        Ok(())
    }
}

/// Mean received power before shadowing, in (fractional) cdBm.
fn mean_rss_cdbm(d: f64, ap: &AccessPoint, cfg: &EnvironmentConfig) -> f64 {
    let loss = cfg.reference_loss_cdbm as f64
        + 1000.0 * cfg.path_loss_exponent * (d / cfg.reference_distance_m).log10();
    ap.tx_power_cdbm as f64 - loss
}

fn reading_with_offset(
    pos: &Position,
    ap: &AccessPoint,
    offset_cdbm: i32,
    cfg: &EnvironmentConfig,
    rng: &mut SimRng,
) -> Result<RssReading, RadioError> {
    let d = pos.distance(&ap.position);
    if d <= 0.0 {
        return Err(RadioError::ZeroDistance(ap.ap_id));
    }
    // Draw from the stream unconditionally so that the sequence consumed does
    // not depend on sigma or jitter settings.
    let z: f64 = rng.sample(StandardNormal);
    let jitter = rng.gen_range(0..=cfg.toa_jitter_ns);

    let rss = mean_rss_cdbm(d, ap, cfg) + offset_cdbm as f64 + z * cfg.shadowing_sigma_cdbm as f64;
    let rss_cdbm = (rss.round() as i64).clamp(cfg.noise_floor_cdbm as i64, RSS_MAX_CDBM as i64) as i32;
    let toa_ns = ((d / LIGHT_M_PER_NS).round() as u64).max(1) + jitter;
    Ok(RssReading {
        ap_id: ap.ap_id,
        rss_cdbm,
        toa_ns,
    })
}

/// One reading from `ap` at `pos`. The returned `toa_ns` is the propagation
/// delay plus jitter, relative to the moment of transmission.
pub fn rss_at(
    pos: &Position,
    ap: &AccessPoint,
    cfg: &EnvironmentConfig,
    rng: &mut SimRng,
) -> Result<RssReading, RadioError> {
    reading_with_offset(pos, ap, 0, cfg, rng)
}

/// Deterministic per-(orientation, AP) body-shadowing offset in [−300, 300] cdBm.
pub fn orientation_offset_cdbm(orientation: u32, ap_id: u32) -> i32 {
    // splitmix64 finalizer
    let mut z = ((orientation as u64) << 32 | ap_id as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z % 601) as i32 - 300
}

/// Samples every AP at `pos` measured at `at_ns` and keeps those heard above
/// the noise floor.
pub fn sample_rss_vector(
    pos: &Position,
    aps: &[AccessPoint],
    cfg: &EnvironmentConfig,
    at_ns: u64,
    rng: &mut SimRng,
) -> Result<RssVector, RadioError> {
    sample_oriented(pos, None, aps, cfg, at_ns, rng)
}

/// As [`sample_rss_vector`], with the receiver held in a given orientation.
pub fn sample_oriented(
    pos: &Position,
    orientation: Option<u32>,
    aps: &[AccessPoint],
    cfg: &EnvironmentConfig,
    at_ns: u64,
    rng: &mut SimRng,
) -> Result<RssVector, RadioError> {
    if aps.is_empty() {
        return Err(RadioError::NoAccessPoints);
    }
    let mut sorted: Vec<&AccessPoint> = aps.iter().collect();
    sorted.sort_by_key(|ap| ap.ap_id);

    let mut readings = Vec::with_capacity(sorted.len());
    for ap in sorted {
        let offset = orientation.map_or(0, |o| orientation_offset_cdbm(o, ap.ap_id));
        let mut r = reading_with_offset(pos, ap, offset, cfg, rng)?;
        if r.rss_cdbm > cfg.noise_floor_cdbm {
            r.toa_ns += at_ns;
            readings.push(r);
        }
    }
    if readings.is_empty() {
        return Err(RadioError::NoApInRange);
    }
    Ok(RssVector::new(readings).expect("sorted, in-range readings"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub cell_id: u32,
    pub center: Position,
}

/// Immutable description of the deployment: channel config, APs and cells.
#[derive(Debug, Clone)]
pub struct Environment {
    pub config: EnvironmentConfig,
    aps: Vec<AccessPoint>,
    cells: Vec<Cell>,
    width_m: f64,
    height_m: f64,
}

pub const DEFAULT_CELL_SIZE_M: f64 = 100.0;
pub const DEFAULT_CELLS_PER_SIDE: u32 = 4;
pub const DEFAULT_TX_POWER_CDBM: i32 = 2000;

impl Environment {
    pub fn new(
        config: EnvironmentConfig,
        aps: Vec<AccessPoint>,
        cells: Vec<Cell>,
        width_m: f64,
        height_m: f64,
    ) -> Result<Self, RadioError> {
        config.validate()?;
        if aps.is_empty() {
            return Err(RadioError::NoAccessPoints);
        }
        let mut aps = aps;
        aps.sort_by_key(|ap| ap.ap_id);
        for pair in aps.windows(2) {
            if pair[0].ap_id == pair[1].ap_id {
                return Err(RadioError::DuplicateAp(pair[0].ap_id));
            }
        }
        for ap in &aps {
            if ap.tx_power_cdbm > 3000 {
                return Err(RadioError::TxPowerTooHigh {
                    ap_id: ap.ap_id,
                    tx_power_cdbm: ap.tx_power_cdbm,
                });
            }
        }
        let mut cells = cells;
        cells.sort_by_key(|c| c.cell_id);
        Ok(Self {
            config,
            aps,
            cells,
            width_m,
            height_m,
        })
    }

    /// A 4×4 grid of 100 m small cells, one AP at each cell centre. Cell ids
    /// run 1..=16 in Z-order so that every four consecutive ids form a 2×2
    /// block.
    pub fn default_layout(config: EnvironmentConfig) -> Result<Self, RadioError> {
        let n = DEFAULT_CELLS_PER_SIDE;
        let mut cells = Vec::new();
        let mut aps = Vec::new();
        for row in 0..n {
            for col in 0..n {
                let id = z_order(col, row) + 1;
                let center = Position::new(
                    (col as f64 + 0.5) * DEFAULT_CELL_SIZE_M,
                    (row as f64 + 0.5) * DEFAULT_CELL_SIZE_M,
                );
                cells.push(Cell {
                    cell_id: id,
                    center,
                });
                aps.push(AccessPoint {
                    ap_id: id,
                    position: center,
                    tx_power_cdbm: DEFAULT_TX_POWER_CDBM,
                    cell_id: id,
                });
            }
        }
        let side = n as f64 * DEFAULT_CELL_SIZE_M;
        Self::new(config, aps, cells, side, side)
    }

    pub fn aps(&self) -> &[AccessPoint] {
        &self.aps
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_ids(&self) -> Vec<u32> {
        self.cells.iter().map(|c| c.cell_id).collect()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.width_m, self.height_m)
    }

    /// The cell whose centre is nearest to `pos`; ties go to the lower id.
    pub fn serving_cell(&self, pos: &Position) -> u32 {
        self.cells
            .iter()
            .min_by(|a, b| {
                a.center
                    .distance(pos)
                    .total_cmp(&b.center.distance(pos))
                    .then(a.cell_id.cmp(&b.cell_id))
            })
            .map(|c| c.cell_id)
            .expect("environment has cells")
    }

    /// Default radio-map grid: 7 × 10 = 70 points spread over the area.
    pub fn default_map_grid(&self) -> Vec<Position> {
        uniform_grid(self.width_m, self.height_m, 7, 10)
    }

    pub fn sample(
        &self,
        pos: &Position,
        orientation: Option<u32>,
        at_ns: u64,
        rng: &mut SimRng,
    ) -> Result<RssVector, RadioError> {
        sample_oriented(pos, orientation, &self.aps, &self.config, at_ns, rng)
    }
}

fn z_order(col: u32, row: u32) -> u32 {
    let mut id = 0;
    for bit in 0..16 {
        id |= ((col >> bit) & 1) << (2 * bit);
        id |= ((row >> bit) & 1) << (2 * bit + 1);
    }
    id
}

/// Cell-centred `nx` × `ny` grid over a `width` × `height` area, row-major.
pub fn uniform_grid(width: f64, height: f64, nx: u32, ny: u32) -> Vec<Position> {
    let mut out = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Position::new(
                width * (i as f64 + 0.5) / nx as f64,
                height * (j as f64 + 0.5) / ny as f64,
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    pub position: Position,
    pub orientation: u32,
    pub rss: RssVector,
}

/// Synthesizes `grid.len() * orientations * samples_per_combo` samples,
/// ordered by grid point, then orientation, then sample index.
pub fn synthesize_radio_map(
    grid: &[Position],
    orientations: u32,
    samples_per_combo: u32,
    aps: &[AccessPoint],
    cfg: &EnvironmentConfig,
    rng: &mut SimRng,
) -> Result<Vec<MapSample>, RadioError> {
    if grid.is_empty() {
        return Err(RadioError::EmptyGrid);
    }
    if orientations == 0 || samples_per_combo == 0 {
        return Err(RadioError::EmptyCombination);
    }
    let total = grid.len() * orientations as usize * samples_per_combo as usize;
    let mut out = Vec::with_capacity(total);
    for pos in grid {
        for orientation in 0..orientations {
            for _ in 0..samples_per_combo {
                let at_ns = (out.len() as u64 + 1) * 1_000_000;
                let rss = sample_oriented(pos, Some(orientation), aps, cfg, at_ns, rng)?;
                out.push(MapSample {
                    position: *pos,
                    orientation,
                    rss,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub time_ns: u64,
    pub position: Position,
    pub cell_id: u32,
    pub zone_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub points: Vec<TracePoint>,
}

impl MobilityTrace {
    pub fn distinct_zones(&self) -> usize {
        let mut zones: Vec<u32> = self.points.iter().map(|p| p.zone_id).collect();
        zones.dedup();
        zones.sort_unstable();
        zones.dedup();
        zones.len()
    }
}

/// Walks the first `cells_visited` entries of `cell_order` (pairs of cell and
/// zone id), dwelling `dwell_ns` in each. The position inside each cell is
/// drawn from the `anchors` served by that cell, falling back to a point just
/// off the cell centre.
pub fn generate_mobility_trace(
    env: &Environment,
    cell_order: &[(u32, u32)],
    anchors: &[Position],
    cells_visited: usize,
    dwell_ns: u64,
    start_ns: u64,
    rng: &mut SimRng,
) -> Result<MobilityTrace, RadioError> {
    if cells_visited == 0 {
        return Err(RadioError::InvalidConfig("cells_visited must be >= 1".into()));
    }
    if cells_visited > cell_order.len() {
        return Err(RadioError::NotEnoughCells {
            requested: cells_visited,
            available: cell_order.len(),
        });
    }
    let dwell_ns = dwell_ns.max(1);
    let mut points = Vec::with_capacity(cells_visited);
    for (i, &(cell_id, zone_id)) in cell_order[..cells_visited].iter().enumerate() {
        let local: Vec<&Position> = anchors
            .iter()
            .filter(|p| env.serving_cell(p) == cell_id)
            .collect();
        let position = if local.is_empty() {
            let c = env
                .cells()
                .iter()
                .find(|c| c.cell_id == cell_id)
                .map(|c| c.center)
                .unwrap_or(Position::new(0.0, 0.0));
            Position::new(c.x + 5.0, c.y + 5.0)
        } else {
            *local[rng.gen_range(0..local.len())]
        };
        points.push(TracePoint {
            time_ns: start_ns + i as u64 * dwell_ns,
            position,
            cell_id,
            zone_id,
        });
    }
    Ok(MobilityTrace { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap(id: u32, x: f64, y: f64) -> AccessPoint {
        AccessPoint {
            ap_id: id,
            position: Position::new(x, y),
            tx_power_cdbm: 2000,
            cell_id: id,
        }
    }

    fn quiet() -> EnvironmentConfig {
        EnvironmentConfig {
            shadowing_sigma_cdbm: 0,
            toa_jitter_ns: 0,
            ..EnvironmentConfig::default()
        }
    }

    #[test]
    fn reference_distance_loss() {
        let cfg = quiet();
        let mut rng = rng_from_seed(1);
        let r = rss_at(&Position::new(1.0, 0.0), &ap(1, 0.0, 0.0), &cfg, &mut rng).unwrap();
        assert_eq!(r.rss_cdbm, -2000);
        let r10 = rss_at(&Position::new(10.0, 0.0), &ap(1, 0.0, 0.0), &cfg, &mut rng).unwrap();
        assert_eq!(r.rss_cdbm - r10.rss_cdbm, 3000);
    }

    #[test]
    fn light_speed_toa() {
        let cfg = quiet();
        let mut rng = rng_from_seed(1);
        let r = rss_at(&Position::new(299.792458, 0.0), &ap(1, 0.0, 0.0), &cfg, &mut rng).unwrap();
        assert_eq!(r.toa_ns, 1000);
    }

    #[test]
    fn zero_distance_is_an_error() {
        let mut rng = rng_from_seed(1);
        assert_eq!(
            rss_at(&Position::new(3.0, 4.0), &ap(9, 3.0, 4.0), &quiet(), &mut rng).unwrap_err(),
            RadioError::ZeroDistance(9)
        );
    }

    #[test]
    fn sample_sorted_and_deterministic() {
        let aps = [ap(3, 0.0, 0.0), ap(1, 30.0, 0.0), ap(2, 0.0, 40.0)];
        let cfg = EnvironmentConfig::default();
        let pos = Position::new(10.0, 10.0);
        let a = sample_rss_vector(&pos, &aps, &cfg, 100, &mut rng_from_seed(5)).unwrap();
        let b = sample_rss_vector(&pos, &aps, &cfg, 100, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        let ids: Vec<u32> = a.readings().iter().map(|r| r.ap_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn out_of_range_ap_is_dropped() {
        // 40 dB + 30·log10(10 km) = 160 dB loss, far below the floor.
        let aps = [ap(1, 10_000.0, 0.0)];
        let err = sample_rss_vector(&Position::new(0.0, 0.0), &aps, &quiet(), 1, &mut rng_from_seed(1))
            .unwrap_err();
        assert_eq!(err, RadioError::NoApInRange);
        assert_eq!(
            sample_rss_vector(&Position::new(0.0, 0.0), &[], &quiet(), 1, &mut rng_from_seed(1))
                .unwrap_err(),
            RadioError::NoAccessPoints
        );
    }

    #[test]
    fn orientation_offsets_bounded() {
        for o in 0..8 {
            for id in 0..200 {
                let off = orientation_offset_cdbm(o, id);
                assert!((-300..=300).contains(&off));
                assert_eq!(off, orientation_offset_cdbm(o, id));
            }
        }
    }

    #[test]
    fn default_layout_shape() {
        let env = Environment::default_layout(EnvironmentConfig::default()).unwrap();
        assert_eq!(env.cells().len(), 16);
        assert_eq!(env.default_map_grid().len(), 70);
        // ids 1..=4 form the lower-left 2x2 block
        for id in 1..=4 {
            let c = env.cells().iter().find(|c| c.cell_id == id).unwrap();
            assert!(c.center.x < 200.0 && c.center.y < 200.0);
        }
        assert_eq!(env.serving_cell(&Position::new(10.0, 10.0)), 1);
        assert_eq!(env.serving_cell(&Position::new(390.0, 390.0)), 16);
    }

    #[test]
    fn synthesize_shape() {
        let env = Environment::default_layout(EnvironmentConfig::default()).unwrap();
        let one = synthesize_radio_map(
            &[Position::new(20.0, 20.0)],
            1,
            1,
            env.aps(),
            &env.config,
            &mut rng_from_seed(3),
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(
            synthesize_radio_map(&[], 4, 25, env.aps(), &env.config, &mut rng_from_seed(3))
                .unwrap_err(),
            RadioError::EmptyGrid
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnvironmentConfig {
            path_loss_exponent: 7.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.path_loss_exponent = 1.5;
        assert!(cfg.validate().is_ok());
        cfg.shadowing_sigma_cdbm = -1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mobility_trace_cases() {
        let env = Environment::default_layout(EnvironmentConfig::default()).unwrap();
        let order: Vec<(u32, u32)> = (1..=4).map(|c| (c, (c - 1) / 2)).collect();
        let grid = env.default_map_grid();
        let t = generate_mobility_trace(&env, &order, &grid, 4, 10, 0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(t.points.len(), 4);
        assert_eq!(t.distinct_zones(), 2);
        assert!(t.points.windows(2).all(|w| w[0].time_ns < w[1].time_ns));
        for p in &t.points {
            assert_eq!(env.serving_cell(&p.position), p.cell_id);
        }
        let single = generate_mobility_trace(&env, &order, &grid, 1, 10, 0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(single.points.len(), 1);

        let all: Vec<(u32, u32)> = (1..=16).map(|c| (c, (c - 1) / 4)).collect();
        assert_eq!(
            generate_mobility_trace(&env, &all, &grid, 20, 10, 0, &mut rng_from_seed(1)).unwrap_err(),
            RadioError::NotEnoughCells {
                requested: 20,
                available: 16
            }
        );
    }
}
