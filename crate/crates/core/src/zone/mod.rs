//! The radio trusted-zone database: radio map records, the cell→zone table,
//! k-NN matching of a received RSS vector against the map, and the
//! legitimacy decision with its localization error range.

mod calibrate;
mod knn;
mod map_file;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::radio::{Environment, MapSample, Position};
use crate::wire::RssVector;

pub use calibrate::{calibrate_epsilon, epsilon_sweep, Calibration, SweepRow, DEFAULT_PERCENTILE};
pub use knn::{knn_match, rss_sq_distance, zone_legitimacy, MatchResult, Neighbor};
pub use map_file::{load_radio_map, parse_radio_map, save_radio_map, write_radio_map, MAP_HEADER};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_CELLS_PER_ZONE: usize = 4;

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("radio map is empty")]
    EmptyDb,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("query shares no access point with any record")]
    AllImputed,
    #[error("cell list is empty")]
    NoCells,
    #[error("cells_per_zone must be at least 2, got {0}")]
    ZoneTooSmall(usize),
    #[error("duplicate cell id {0}")]
    DuplicateCell(u32),
    #[error("cell {0} has no zone")]
    UnknownCell(u32),
    #[error("unsupported radio map header {0:?}")]
    Version(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("calibration needs at least one query")]
    NoQueries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioMapRecord {
    pub location: Position,
    pub orientation: u32,
    pub zone_id: u32,
    pub cell_id: u32,
    pub rss: RssVector,
}

/// Contiguous grouping of cells into zones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneTable {
    cell_to_zone: BTreeMap<u32, u32>,
    zones: BTreeMap<u32, Vec<u32>>,
    cells_per_zone: usize,
}

impl ZoneTable {
    pub fn zone_of(&self, cell_id: u32) -> Option<u32> {
        self.cell_to_zone.get(&cell_id).copied()
    }

    pub fn cells_in(&self, zone_id: u32) -> &[u32] {
        self.zones.get(&zone_id).map_or(&[], Vec::as_slice)
    }

    pub fn zone_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.zones.keys().copied()
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    /// (cell, zone) pairs in zone order, then cell order within each zone.
    pub fn cell_order(&self) -> Vec<(u32, u32)> {
        self.zones
            .iter()
            .flat_map(|(&z, cells)| cells.iter().map(move |&c| (c, z)))
            .collect()
    }

    /// The last zone, if it holds fewer cells than requested.
    pub fn short_zone(&self) -> Option<u32> {
        self.zones
            .iter()
            .next_back()
            .filter(|(_, cells)| cells.len() < self.cells_per_zone)
            .map(|(&z, _)| z)
    }
}

/// Groups `cells` (in the given order) into zones of `cells_per_zone`,
/// numbered from 0. The last zone may be short; that is logged.
pub fn build_zone_table(cells: &[u32], cells_per_zone: usize) -> Result<ZoneTable, ZoneError> {
    if cells_per_zone < 2 {
        return Err(ZoneError::ZoneTooSmall(cells_per_zone));
    }
    if cells.is_empty() {
        return Err(ZoneError::NoCells);
    }
    let mut cell_to_zone = BTreeMap::new();
    let mut zones: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &cell) in cells.iter().enumerate() {
        let zone = (i / cells_per_zone) as u32;
        if cell_to_zone.insert(cell, zone).is_some() {
            return Err(ZoneError::DuplicateCell(cell));
        }
        zones.entry(zone).or_default().push(cell);
    }
    let table = ZoneTable {
        cell_to_zone,
        zones,
        cells_per_zone,
    };
    if let Some(z) = table.short_zone() {
        log::warn!(
            "zone {z} holds {} cell(s), fewer than {cells_per_zone}",
            table.cells_in(z).len()
        );
    }
    Ok(table)
}

/// The immutable radio map the AS matches against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustedZoneDb {
    records: Vec<RadioMapRecord>,
    noise_floor_cdbm: i32,
}

impl TrustedZoneDb {
    pub fn new(records: Vec<RadioMapRecord>, noise_floor_cdbm: i32) -> Result<Self, ZoneError> {
        if records.is_empty() {
            return Err(ZoneError::EmptyDb);
        }
        Ok(Self {
            records,
            noise_floor_cdbm,
        })
    }

    /// Labels synthesized samples with the cell serving each location and
    /// that cell's zone.
    pub fn from_samples(
        samples: Vec<MapSample>,
        env: &Environment,
        zones: &ZoneTable,
    ) -> Result<Self, ZoneError> {
        let mut records = Vec::with_capacity(samples.len());
        for s in samples {
            let cell_id = env.serving_cell(&s.position);
            let zone_id = zones.zone_of(cell_id).ok_or(ZoneError::UnknownCell(cell_id))?;
            records.push(RadioMapRecord {
                location: s.position,
                orientation: s.orientation,
                zone_id,
                cell_id,
                rss: s.rss,
            });
        }
        Self::new(records, env.config.noise_floor_cdbm)
    }

    pub fn records(&self) -> &[RadioMapRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn noise_floor_cdbm(&self) -> i32 {
        self.noise_floor_cdbm
    }

    pub fn knn(&self, query: &RssVector, k: usize) -> Result<MatchResult, ZoneError> {
        knn_match(query, &self.records, k, self.noise_floor_cdbm)
    }

    /// Distinct (location, orientation) combinations in record order.
    pub fn anchors(&self) -> Vec<Anchor> {
        let mut out: Vec<Anchor> = Vec::new();
        for r in &self.records {
            let a = Anchor {
                position: r.location,
                orientation: r.orientation,
                cell_id: r.cell_id,
                zone_id: r.zone_id,
            };
            if out.last() != Some(&a) && !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }

    /// Distinct mapped locations in record order.
    pub fn locations(&self) -> Vec<Position> {
        let mut out: Vec<Position> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.location) {
                out.push(r.location);
            }
        }
        out
    }
}

/// A mapped location/orientation combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub position: Position,
    pub orientation: u32,
    pub cell_id: u32,
    pub zone_id: u32,
}
