use std::sync::OnceLock;

use xlayer_core::adversary::{
    simulate_dos_flood, AdversaryCapabilities, Scenario, DEFAULT_SPOOF_DISTANCE_M,
};
use xlayer_core::protocol::{WorldSpec, WorldTemplate};

fn template() -> &'static WorldTemplate {
    static T: OnceLock<WorldTemplate> = OnceLock::new();
    T.get_or_init(|| WorldTemplate::build(&WorldSpec::default()).unwrap())
}

#[test]
fn more_capability_never_means_less_success() {
    let t = template();
    let ladder = [
        AdversaryCapabilities::none(),
        AdversaryCapabilities::standard(),
        AdversaryCapabilities::standard().with_recompute(),
    ];
    for s in Scenario::ALL {
        let rates: Vec<u64> = ladder.iter().map(|c| s.run(t, c, 20, 3).unwrap().successes).collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{s}: {rates:?}");
        assert_eq!(rates[0], 0, "{s} succeeds without capabilities");
    }
}

#[test]
fn reports_are_reproducible() {
    let t = template();
    let caps = AdversaryCapabilities::standard();
    for s in [Scenario::Mitm, Scenario::LocationSpoof, Scenario::DosFlood2] {
        let a = s.run(t, &caps, 30, 9).unwrap();
        assert_eq!(a, s.run(t, &caps, 30, 9).unwrap());
        assert_eq!(a.digest.len(), 64);
        assert_ne!(a.digest, s.run(t, &caps, 30, 10).unwrap().digest);
    }
}

#[test]
fn legacy_key_is_always_recovered() {
    let r = Scenario::KeyOverAirLegacy
        .run(template(), &AdversaryCapabilities::standard(), 100, 4)
        .unwrap();
    assert_eq!(r.successes, 100);
    let r = Scenario::KeyOverAirCrossLayer
        .run(template(), &AdversaryCapabilities::standard(), 100, 4)
        .unwrap();
    assert_eq!(r.successes, 0);
}

#[test]
fn spoofer_without_victim_identity_is_unknown() {
    let mut caps = AdversaryCapabilities::standard();
    caps.spoof_im = false;
    let r = Scenario::LocationSpoofAtVictim.run(template(), &caps, 20, 5).unwrap();
    assert_eq!(r.successes, 0);
    assert_eq!(r.reasons.get("unknown-identity"), Some(&20));
}

#[test]
fn outside_spoofer_is_rejected() {
    let r = Scenario::LocationSpoof
        .run(template(), &AdversaryCapabilities::standard(), 200, 6)
        .unwrap();
    assert!(r.rate() <= 0.01, "{}", r.machine_line());
    assert!(r.notes.iter().any(|n| n.contains(&format!("{DEFAULT_SPOOF_DISTANCE_M}"))));
}

#[test]
fn flood_stays_bounded_and_legit_mt_gets_through() {
    let t = template();
    for case in [1, 2] {
        let (o, _) = simulate_dos_flood(t, &AdversaryCapabilities::standard(), case, 640, 7).unwrap();
        assert!(o.peak_occupancy <= o.capacity, "case {case}: {o:?}");
        assert!(!o.capacity_exceeded);
        assert_eq!(o.overdue_entries, 0);
        assert_eq!(o.entries_left, 0);
        assert!(o.legit_completed, "case {case}: {:?}", o.legit_attempts);
        assert_eq!(o.admitted + o.refused, o.flood_requests);
    }
}
