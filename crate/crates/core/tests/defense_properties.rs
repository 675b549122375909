use std::collections::BTreeMap;

use colink_core::dataset::{generate_synthetic, CheckInDataset, SyntheticParams};
use colink_core::defense::{
    generalize, hide, js_divergence, replace, user_distribution, utility, GeoLevel, SemLevel, DEFAULT_WALK_STEPS,
};

const SEEDS: u64 = 5;

fn synthetic(seed: u64) -> CheckInDataset {
    generate_synthetic(&SyntheticParams {
        seed,
        ..SyntheticParams::default()
    })
    .unwrap()
    .0
}

#[test]
fn hiding_utility_is_non_increasing_in_rho() {
    let rhos: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut mean = vec![0.0; rhos.len()];
    for s in 0..SEEDS {
        let ds = synthetic(s);
        for (i, &rho) in rhos.iter().enumerate() {
            let obf = hide(&ds, rho, 100 + s).unwrap();
            mean[i] += utility(&ds, &obf.dataset).unwrap().aggregate / SEEDS as f64;
        }
    }
    let inversions: Vec<f64> = mean.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    assert!(inversions.len() <= 1, "{mean:?}");
    assert!(inversions.iter().all(|d| *d <= 0.01), "{mean:?}");
}

#[test]
fn hiding_keeps_more_utility_than_replacement() {
    for rho in [0.2, 0.5, 0.8] {
        let (mut h, mut r) = (0.0, 0.0);
        for s in 0..SEEDS {
            let ds = synthetic(s);
            h += utility(&ds, &hide(&ds, rho, s).unwrap().dataset).unwrap().aggregate;
            r += utility(&ds, &replace(&ds, rho, DEFAULT_WALK_STEPS, s).unwrap().dataset)
                .unwrap()
                .aggregate;
        }
        assert!(h >= r, "rho {rho}: hiding {h} replacement {r}");
    }
}

#[test]
fn zero_rho_is_identity() {
    let ds = synthetic(3);
    for obf in [hide(&ds, 0.0, 1).unwrap(), replace(&ds, 0.0, DEFAULT_WALK_STEPS, 1).unwrap()] {
        assert_eq!(obf.dataset.checkins(), ds.checkins());
        assert_eq!(utility(&ds, &obf.dataset).unwrap().aggregate, 1.0);
    }
}

#[test]
fn replacement_lands_on_known_locations() {
    let ds = synthetic(4);
    let obf = replace(&ds, 0.6, DEFAULT_WALK_STEPS, 9).unwrap();
    assert_eq!(obf.dataset.len(), ds.len());
    for c in obf.dataset.checkins() {
        assert!(ds.locations().contains(&c.location), "{}", c.location);
        assert!(!ds.users().contains(&c.location));
    }
}

/// Every fine cell maps into exactly one coarser cell.
fn refines(fine: &[String], coarse: &[String]) -> bool {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    fine.iter()
        .zip(coarse)
        .all(|(f, c)| *map.entry(f.as_str()).or_insert(c.as_str()) == c.as_str())
}

#[test]
fn finest_generalization_refines_the_others() {
    let ds = synthetic(5);
    let ids = |g, s| -> Vec<String> {
        generalize(&ds, g, s)
            .unwrap()
            .dataset
            .checkins()
            .iter()
            .map(|c| c.location.clone())
            .collect()
    };
    let finest = ids(GeoLevel::Low, SemLevel::Low);
    for (g, s) in [
        (GeoLevel::Low, SemLevel::High),
        (GeoLevel::High, SemLevel::Low),
        (GeoLevel::High, SemLevel::High),
    ] {
        assert!(refines(&finest, &ids(g, s)), "{g:?} {s:?}");
    }
}

#[test]
fn divergence_is_symmetric_and_bounded() {
    let ds = synthetic(6);
    let obf = replace(&ds, 0.5, DEFAULT_WALK_STEPS, 2).unwrap().dataset;
    for u in ds.users() {
        let p = user_distribution(&ds, u).unwrap().mass;
        let q = user_distribution(&obf, u).unwrap().mass;
        let (a, b) = (js_divergence(&p, &q), js_divergence(&q, &p));
        assert!((a - b).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&a));
    }
}
