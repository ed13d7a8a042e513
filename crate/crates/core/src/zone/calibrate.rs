//! Localization error range: pick epsilon from the distribution of k_dh
//! observed for legitimate queries, and sweep candidate values against
//! impostor queries.

use rand::Rng;

use super::{TrustedZoneDb, ZoneError};
use crate::radio::{Environment, SimRng};

/// Default percentile of legitimate k_dh used as epsilon.
pub const DEFAULT_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub epsilon: f64,
    pub percentile: f64,
    /// Legitimate k_dh values, ascending.
    pub samples: Vec<f64>,
    /// Legitimate queries whose vote landed outside their own zone.
    pub zone_misses: usize,
}

impl Calibration {
    /// Nearest-rank percentile of the calibration samples.
    pub fn quantile(&self, p: f64) -> f64 {
        nearest_rank(&self.samples, p)
    }
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Samples `n_queries` legitimate measurements at random mapped
/// location/orientation combinations and takes the `percentile` of their
/// nearest-neighbor distance.
pub fn calibrate_epsilon(
    db: &TrustedZoneDb,
    env: &Environment,
    k: usize,
    n_queries: usize,
    percentile: f64,
    rng: &mut SimRng,
) -> Result<Calibration, ZoneError> {
    if n_queries == 0 {
        return Err(ZoneError::NoQueries);
    }
    let anchors = db.anchors();
    let mut samples = Vec::with_capacity(n_queries);
    let mut zone_misses = 0;
    for _ in 0..n_queries {
        let a = anchors[rng.gen_range(0..anchors.len())];
        let Ok(q) = env.sample(&a.position, Some(a.orientation), 1, rng) else {
            continue;
        };
        let m = db.knn(&q, k)?;
        if m.matched_zone != a.zone_id {
            zone_misses += 1;
        }
        samples.push(m.k_dh);
    }
    if samples.is_empty() {
        return Err(ZoneError::NoQueries);
    }
    samples.sort_by(f64::total_cmp);
    Ok(Calibration {
        epsilon: nearest_rank(&samples, percentile),
        percentile,
        samples,
        zone_misses,
    })
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub false_reject_rate: f64,
    pub false_accept_rate: f64,
}

/// For each candidate epsilon, the fraction of legitimate queries rejected
/// and of impostor queries accepted. Each query is `(k_dh, zone_matches)`.
pub fn epsilon_sweep(legit: &[(f64, bool)], impostor: &[(f64, bool)], epsilons: &[f64]) -> Vec<SweepRow> {
    let rate = |qs: &[(f64, bool)], eps: f64, accepted: bool| {
        if qs.is_empty() {
            return 0.0;
        }
        let n = qs
            .iter()
            .filter(|&&(d, zone_ok)| (d <= eps && zone_ok) == accepted)
            .count();
        n as f64 / qs.len() as f64
    };
    epsilons
        .iter()
        .map(|&epsilon| SweepRow {
            epsilon,
            false_reject_rate: rate(legit, epsilon, false),
            false_accept_rate: rate(impostor, epsilon, true),
        })
        .collect()
}
