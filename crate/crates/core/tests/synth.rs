use std::collections::BTreeMap;

use netstate_core::log::Activity;
use netstate_core::packet::{timestamp_regressions, Direction, TcpFlags};
use netstate_core::synth::{generate_cohort, generate_device, DeviceSpec, GameProfile};
use proptest::prelude::*;

fn spec(profile: GameProfile, packets: usize, seed: u64) -> DeviceSpec {
    DeviceSpec {
        device_id: "d1".into(),
        profile,
        client_ip: "10.0.0.2".parse().unwrap(),
        session_packets: vec![packets; 2],
        seed,
    }
}

fn label_mix(profile: &GameProfile, seed: u64) -> (BTreeMap<Activity, f64>, BTreeMap<Activity, f64>) {
    let recs = generate_device(&spec(profile.clone(), 40_000, seed)).unwrap();
    let mut seen: BTreeMap<Activity, f64> = BTreeMap::new();
    for r in &recs {
        *seen.entry(Activity::of_packet(r)).or_default() += 1.0 / recs.len() as f64;
    }
    (seen, profile.expected_label_mix())
}

#[test]
fn label_mix_matches_expectation() {
    for profile in [GameProfile::pushburst(), GameProfile::stream()] {
        let (seen, expected) = label_mix(&profile, 3);
        assert!((expected.values().sum::<f64>() - 1.0).abs() < 1e-9);
        for (label, p) in &expected {
            let got = seen.get(label).copied().unwrap_or(0.0);
            assert!((got - p).abs() <= 0.05, "{label}: {got:.4} vs {p:.4}");
        }
        assert!(seen.keys().all(|l| expected.contains_key(l)));
    }
}

#[test]
fn pushburst_pushes_more_from_the_client() {
    let share = |profile: GameProfile| {
        let recs = generate_device(&spec(profile, 20_000, 9)).unwrap();
        let push = recs
            .iter()
            .filter(|r| r.direction == Direction::ClientToServer && r.flags.contains(TcpFlags::PSH))
            .count();
        push as f64 / recs.len() as f64
    };
    let (burst, stream) = (share(GameProfile::pushburst()), share(GameProfile::stream()));
    assert!(burst >= 3.0 * stream, "pushburst {burst:.4}, stream {stream:.4}");
}

#[test]
fn cohorts_name_and_seed_devices() {
    let groups = [(GameProfile::pushburst(), 2), (GameProfile::stream(), 1)];
    let a = generate_cohort(&groups, 2, 300, 5).unwrap();
    let b = generate_cohort(&groups, 2, 300, 5).unwrap();
    assert_eq!(a, b);
    let ids: Vec<&str> = a.iter().map(|d| d.spec.device_id.as_str()).collect();
    assert_eq!(ids, ["d1", "d2", "d3"]);
    assert_ne!(a[0].records, a[1].records);
    assert!(generate_cohort(&[], 2, 300, 5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sessions_have_exact_budgets(budgets in prop::collection::vec(10usize..400, 1..4), seed in any::<u64>(), stream in any::<bool>()) {
        let profile = if stream { GameProfile::stream() } else { GameProfile::pushburst() };
        let s = DeviceSpec { session_packets: budgets.clone(), ..spec(profile, 0, seed) };
        let recs = generate_device(&s).unwrap();
        prop_assert_eq!(recs.len(), budgets.iter().sum::<usize>());
        for (i, b) in budgets.iter().enumerate() {
            prop_assert_eq!(recs.iter().filter(|r| r.session_number == i as u32 + 1).count(), *b);
        }
        prop_assert_eq!(timestamp_regressions(&recs), 0);
        let client = s.client_ip;
        for r in &recs {
            let from_client = r.source_ip == client;
            prop_assert_eq!(from_client, r.direction == Direction::ClientToServer);
            prop_assert!(from_client != (r.destination_ip == client));
        }
    }

    #[test]
    fn interpolation_stays_valid(t in 0.0f64..=1.0) {
        let mixed = GameProfile::pushburst().interpolate(&GameProfile::stream(), t).unwrap();
        prop_assert!(mixed.validate().is_ok());
    }
}
