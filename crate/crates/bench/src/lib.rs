//! Fixtures shared by the criterion benches.

use rand::Rng;
use xlayer_core::protocol::{WorldSpec, WorldTemplate};
use xlayer_core::radio::rng_from_seed;
use xlayer_core::RssVector;

pub const BENCH_SEED: u64 = 7;

/// Default world: synthesized 7000-record map, calibrated epsilon.
pub fn default_template() -> WorldTemplate {
    WorldTemplate::build(&WorldSpec::default()).expect("default spec builds")
}

/// Fresh measurements at random mapped locations.
pub fn sample_queries(template: &WorldTemplate, n: usize, seed: u64) -> Vec<RssVector> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = template.anchors[rng.gen_range(0..template.anchors.len())];
        if let Ok(v) = template.env.sample(&a.position, Some(a.orientation), 1, &mut rng) {
            out.push(v);
        }
    }
    out
}
