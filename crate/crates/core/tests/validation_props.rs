use bandspeed::validation::{
    describe, drone_velocity, ks_statistic, match_gps_to_estimates, DistanceMetric,
    DroneCameraSpec, DroneObservation, DroneTrack, GpsMatchConfig, GpsPoint, GpsTrack,
    LocatedEstimate,
};
use chrono::{DateTime, Duration, FixedOffset};
use proptest::prelude::*;

fn base_time() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2024-05-01T10:00:00+03:00").unwrap()
}

proptest! {
    #[test]
    fn ks_is_invariant_under_monotone_maps(
        a in prop::collection::vec(-200i32..200, 1..80),
        b in prop::collection::vec(-200i32..200, 1..80),
    ) {
        let f = |x: i32| { let x = x as f64; x * x * x + 5.0 * x };
        let fa: Vec<f64> = a.iter().map(|&x| f(x)).collect();
        let fb: Vec<f64> = b.iter().map(|&x| f(x)).collect();
        let ra: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let rb: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        prop_assert_eq!(ks_statistic(&ra, &rb).unwrap(), ks_statistic(&fa, &fb).unwrap());
    }

    #[test]
    fn skewness_flips_sign_under_negation(x in prop::collection::vec(-1e3f64..1e3, 3..100)) {
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let (p, q) = (describe(&x).unwrap(), describe(&neg).unwrap());
        if let (Some(a), Some(b)) = (p.skewness, q.skewness) {
            prop_assert!((a + b).abs() < 1e-9);
        }
        prop_assert_eq!(p.excess_kurtosis.is_some(), q.excess_kurtosis.is_some());
    }

    #[test]
    fn drone_speed_depends_only_on_endpoints(
        first in (0f64..8000.0, 0f64..6000.0),
        last in (0f64..8000.0, 0f64..6000.0),
        middle in prop::collection::vec((0f64..8000.0, 0f64..6000.0), 0..10),
        alt in 10f64..200.0,
    ) {
        let spec = DroneCameraSpec::default();
        let obs = |pts: &[(f64, f64)]| -> Vec<DroneObservation> {
            pts.iter().enumerate().map(|(i, &(x, y))| DroneObservation {
                frame: i as u64 * 3, cx_px: x, cy_px: y, altitude_m: alt,
            }).collect()
        };
        let mut full = vec![first];
        full.extend(middle.iter().copied());
        full.push(last);
        // Same endpoints and frame span, with the interior replaced by a
        // straight walk.
        let n = full.len();
        let mut straight: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                (first.0 + s * (last.0 - first.0), first.1 + s * (last.1 - first.1))
            })
            .collect();
        straight[0] = first;
        straight[n - 1] = last;
        for m in [DistanceMetric::AsPrinted, DistanceMetric::Euclidean] {
            let a = drone_velocity(&DroneTrack::new(1, obs(&full)).unwrap(), &spec, m).unwrap();
            let b = drone_velocity(&DroneTrack::new(1, obs(&straight)).unwrap(), &spec, m).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn gps_matching_ignores_input_order(
        points in prop::collection::vec((0u64..4, -15f64..15.0, -15f64..15.0, -90i64..90, 0f64..120.0), 1..20),
        ests in prop::collection::vec((-5f64..5.0, -5f64..5.0, -30i64..30, 0f64..150.0), 1..6),
        seed in any::<u64>(),
    ) {
        let t0 = base_time();
        let mut by_track: std::collections::BTreeMap<u64, Vec<GpsPoint>> = Default::default();
        for &(tid, x, y, dt, s) in &points {
            by_track.entry(tid).or_default().push(GpsPoint {
                x, y, timestamp: t0 + Duration::seconds(dt), speed_kmh: s,
            });
        }
        let tracks: Vec<GpsTrack> = by_track
            .into_iter()
            .map(|(id, mut pts)| {
                pts.sort_by_key(|p| p.timestamp);
                GpsTrack::new(id, pts).unwrap()
            })
            .collect();
        let estimates: Vec<LocatedEstimate> = ests
            .iter()
            .enumerate()
            .map(|(i, &(x, y, dt, s))| LocatedEstimate {
                image_id: (i % 2) as u64,
                echo_id: i as u64,
                timestamp: t0 + Duration::seconds(dt),
                x, y, speed_kmh: s,
            })
            .collect();
        let cfg = GpsMatchConfig::default();
        let want = match_gps_to_estimates(&tracks, &estimates, &cfg).unwrap();

        // Deterministic permutation from the seed.
        let perm = |n: usize, salt: u64| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| (i as u64 ^ seed ^ salt).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            idx
        };
        let tracks2: Vec<GpsTrack> = perm(tracks.len(), 1).into_iter().map(|i| tracks[i].clone()).collect();
        let est2: Vec<LocatedEstimate> = perm(estimates.len(), 2).into_iter().map(|i| estimates[i]).collect();
        prop_assert_eq!(want, match_gps_to_estimates(&tracks2, &est2, &cfg).unwrap());
    }
}
