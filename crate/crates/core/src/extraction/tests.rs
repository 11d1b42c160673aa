use super::*;
use crate::synth::{dest_ip, flows, source_ip, Anomaly, TrafficConfig};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn kl_unit_values() {
    assert_eq!(kl_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    assert_abs_diff_eq!(kl_distance(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-12);
    // 0.5·log2(2) + 0.5·log2(2/3)
    let want = 0.5 + 0.5 * (2.0f64 / 3.0).log2();
    let got = kl_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    assert_abs_diff_eq!(got, 0.20752, epsilon = 1e-5);
}

#[test]
fn kl_edge_cases() {
    assert!(kl_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap().is_infinite());
    assert!(matches!(kl_distance(&[0.5, 0.6], &[0.5, 0.5]), Err(Error::Contract(_))));
}

#[test]
fn identical_intervals_do_not_alarm() {
    let counts = vec![vec![5.0, 3.0, 2.0, 7.0]; 30];
    // all differences are zero, so training is degenerate
    assert!(matches!(kl_detect(&counts, &KlConfig::default()), Err(Error::Degenerate(_))));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random_range(5.0..10.0)).collect()).collect();
    counts[26] = counts[25].clone();
    counts[27] = counts[25].clone();
    let s = kl_detect(&counts, &KlConfig::default()).unwrap();
    assert_eq!(s.d[26], 0.0);
    assert_eq!(s.delta[27], 0.0);
    assert!(!s.alarms[27]);
}

fn traffic(seed: u64, n_bins: usize, anomalies: &[Anomaly]) -> Vec<FlowRecord> {
    let cfg = TrafficConfig { n_bins, seed, ..Default::default() };
    flows(&cfg, anomalies).unwrap()
}

fn clone_counts(records: &[FlowRecord], feature: Feature, hash: PolyHash, m: usize, width: f64) -> Vec<Vec<f64>> {
    let binning = Binning::covering(records, width).unwrap();
    let mut out = vec![vec![0.0; m]; binning.n_bins(records)];
    for r in records {
        out[binning.index(r.t)][hash.bucket(r.feature(feature), m)] += 1.0;
    }
    out
}

#[test]
fn stationary_alarm_rate_is_low() {
    let (mut alarms, mut total) = (0, 0);
    for seed in 0..5 {
        let recs = traffic(100 + seed, 96, &[]);
        for (i, f) in [Feature::Sip, Feature::Dip, Feature::Dp].into_iter().enumerate() {
            let h = hash_family(3, seed * 10 + i as u64);
            for hash in h {
                let s = kl_detect(&clone_counts(&recs, f, hash, 256, 300.0), &KlConfig::default()).unwrap();
                alarms += s.alarms.iter().filter(|a| **a).count();
                total += s.alarms.len() - 22;
            }
        }
    }
    assert!((alarms as f64) < 0.01 * total as f64, "{alarms}/{total}");
}

#[test]
fn port_distribution_shift_alarms_at_both_ends() {
    let mut recs = traffic(3, 80, &[]);
    for r in recs.iter_mut() {
        let bin = (r.t / 300.0) as usize;
        if (40..50).contains(&bin) && r.dp == 443 {
            r.dp = 8080;
        }
    }
    let hash = hash_family(1, 4)[0];
    let s = kl_detect(&clone_counts(&recs, Feature::Dp, hash, 256, 300.0), &KlConfig::default()).unwrap();
    assert!(s.alarms[40]);
    assert!(s.alarms[50]);
    let others = (22..80).filter(|&t| t != 40 && t != 50 && s.alarms[t]).count();
    assert!(others <= 1, "{others}");
}

#[test]
fn single_offending_value_is_identified() {
    let recs = traffic(5, 40, &[Anomaly::PortScan { bin: 30, sip: source_ip(150), dip: dest_ip(7), ports: 150 }]);
    let binning = Binning::covering(&recs, 300.0).unwrap();
    let present: BTreeSet<u64> = recs.iter().filter(|r| binning.index(r.t) == 30).map(|r| r.feature(Feature::Sip)).collect();
    let hashes = hash_family(3, 11);
    let mut clones = Vec::new();
    for h in &hashes {
        let counts = clone_counts(&recs, Feature::Sip, *h, 256, 300.0);
        let s = kl_detect(&counts, &KlConfig::default()).unwrap();
        assert!(s.alarms[30]);
        let bins = identify_bins(&counts[29], &counts[30], s.d[29], s.threshold, 0.5).unwrap();
        assert!(!bins.is_empty());
        let mut hc = HistogramClone::new(256, *h);
        hc.bins = counts[30].clone();
        clones.push((hc, bins));
    }
    let refs: Vec<(&HistogramClone, &[usize])> = clones.iter().map(|(c, b)| (c, b.as_slice())).collect();
    let v = identify_values(&present, &refs);
    assert_eq!(v, BTreeSet::from([u64::from(source_ip(150))]));
}

#[test]
fn quiet_interval_identifies_nothing() {
    let prev = vec![10.0, 10.0, 10.0, 10.0];
    assert!(identify_bins(&prev, &prev, 0.0, 0.1, 0.5).unwrap().is_empty());
    assert!(identify_values(&BTreeSet::from([1, 2, 3]), &[]).is_empty());
}

#[test]
fn normal_values_rarely_survive_all_clones() {
    let m = 256;
    let hashes = hash_family(3, 21);
    let anomalous = 0xdead_beefu64;
    let clones: Vec<(HistogramClone, Vec<usize>)> = hashes
        .iter()
        .map(|h| {
            let c = HistogramClone::new(m, *h);
            let b = c.bin_of(anomalous);
            (c, vec![b])
        })
        .collect();
    let refs: Vec<(&HistogramClone, &[usize])> = clones.iter().map(|(c, b)| (c, b.as_slice())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let values: BTreeSet<u64> = (0..100_000).map(|_| rng.random::<u32>() as u64).collect();
    let survivors = identify_values(&values, &refs);
    // expected count is 1e5 / 256³ ≈ 0.006
    assert!(survivors.len() <= 1, "{survivors:?}");
    assert!(identify_values(&BTreeSet::from([anomalous]), &refs).contains(&anomalous));
}

/// All itemsets reaching the support, then only the maximal ones.
fn brute_force(txs: &[Vec<Item>], min_support: usize) -> Vec<ItemSet> {
    let mut counts: BTreeMap<Vec<Item>, usize> = BTreeMap::new();
    for t in txs {
        let mut t = t.clone();
        t.sort();
        for mask in 1u32..(1 << t.len()) {
            let set: Vec<Item> = (0..t.len()).filter(|i| mask >> i & 1 == 1).map(|i| t[i]).collect();
            *counts.entry(set).or_insert(0) += 1;
        }
    }
    let frequent: Vec<(Vec<Item>, usize)> = counts.into_iter().filter(|(_, s)| *s >= min_support).collect();
    let mut out: Vec<ItemSet> = frequent
        .iter()
        .filter(|(a, _)| !frequent.iter().any(|(b, _)| b.len() == a.len() + 1 && a.iter().all(|x| b.contains(x))))
        .map(|(a, s)| ItemSet { items: a.clone(), support: *s })
        .collect();
    out.sort_by(|a, b| b.items.len().cmp(&a.items.len()).then(b.support.cmp(&a.support)).then(a.items.cmp(&b.items)));
    out
}

#[test]
fn apriori_small_example() {
    let a = (Feature::Sip, 1);
    let b = (Feature::Dp, 80);
    let txs = vec![vec![a, b], vec![a, b], vec![a]];
    assert_eq!(apriori(&txs, 2).unwrap(), vec![ItemSet { items: vec![a, b], support: 2 }]);
    assert!(apriori(&txs, 4).unwrap().is_empty());
    assert!(apriori(&txs, 0).is_err());
}

#[test]
fn itemset_line_format() {
    let s = ItemSet { items: vec![(Feature::Dip, u64::from(u32::from_be_bytes([10, 0, 0, 5]))), (Feature::Dp, 7000)], support: 42 };
    assert_eq!(s.to_string(), "2  DIP=10.0.0.5,DP=7000  42");
}

#[test]
fn apriori_finds_dos_pattern() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let victim = u64::from(dest_ip(3));
    let mut txs: Vec<Vec<Item>> = (0..20_000)
        .map(|_| {
            let r = FlowRecord {
                t: 0.0,
                sip: rng.random(),
                dip: dest_ip(rng.random_range(0..60)),
                sp: rng.random_range(1024..=65535),
                dp: [80, 443, 53][rng.random_range(0..3)],
                proto: 6,
                packets: rng.random_range(1..20),
                bytes: rng.random_range(40..20_000),
            };
            transaction(&r)
        })
        .collect();
    for _ in 0..12_000 {
        let r = FlowRecord { t: 0.0, sip: rng.random(), dip: victim as u32, sp: rng.random_range(1024..=65535), dp: 7000, proto: 6, packets: 1, bytes: 46 };
        txs.push(transaction(&r));
    }
    let out = apriori(&txs, 10_000).unwrap();
    let want = vec![(Feature::Dip, victim), (Feature::Dp, 7000), (Feature::Proto, 6), (Feature::Packets, 1), (Feature::Bytes, 46)];
    assert_eq!(out[0].items, want);
    assert_eq!(out[0].support, 12_000);
}

fn small_corpus() -> impl Strategy<Value = Vec<Vec<Item>>> {
    let tx = prop::collection::vec(prop::option::of(0u64..3), 7).prop_map(|vals| {
        vals.into_iter()
            .zip(Feature::ALL)
            .filter_map(|(v, f)| v.map(|v| (f, v)))
            .collect::<Vec<Item>>()
    });
    prop::collection::vec(tx, 0..=12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apriori_matches_brute_force(txs in small_corpus(), min_support in 1usize..5) {
        prop_assert_eq!(apriori(&txs, min_support).unwrap(), brute_force(&txs, min_support));
    }

    #[test]
    fn apriori_supports_are_antimonotone(txs in small_corpus(), min_support in 1usize..4) {
        let out = apriori(&txs, min_support).unwrap();
        for a in &out {
            for b in &out {
                if a.items.len() < b.items.len() && a.items.iter().all(|x| b.items.contains(x)) {
                    prop_assert!(b.support <= a.support);
                }
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(raw_p in prop::collection::vec(0.01f64..1.0, 2..16), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw_q: Vec<f64> = raw_p.iter().map(|_| rng.random_range(0.01..1.0)).collect();
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<f64>>() };
        let (p, q) = (norm(&raw_p), norm(&raw_q));
        prop_assert!(kl_distance(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_distance(&p, &p).unwrap().abs() < 1e-12);
    }
}

#[test]
fn pipeline_on_clean_traffic_yields_no_itemsets() {
    for seed in 0..3 {
        let rep = extract_pipeline(&traffic(40 + seed, 96, &[]), &ExtractConfig::default()).unwrap();
        let sets: usize = rep.findings.iter().map(|f| f.itemsets.len()).sum();
        assert_eq!(sets, 0, "{:?}", rep.findings);
    }
}

#[test]
fn pipeline_names_the_scanner() {
    let sip = source_ip(150);
    let recs = traffic(50, 96, &[Anomaly::PortScan { bin: 60, sip, dip: dest_ip(9), ports: 120 }]);
    let rep = extract_pipeline(&recs, &ExtractConfig::default()).unwrap();
    let f = rep.findings.iter().find(|f| f.t_index == 60).expect("scan interval flagged");
    assert!(f.itemsets.iter().any(|s| s.items.contains(&(Feature::Sip, u64::from(sip)))), "{:?}", f.itemsets);
}

#[test]
fn pipeline_separates_two_anomalies() {
    let sip = source_ip(150);
    let victim = dest_ip(20);
    let recs = traffic(
        51,
        96,
        &[
            Anomaly::PortScan { bin: 60, sip, dip: dest_ip(9), ports: 120 },
            Anomaly::Dos { bin: 60, dip: victim, dp: 7000, sources: 150 },
        ],
    );
    let rep = extract_pipeline(&recs, &ExtractConfig::default()).unwrap();
    let f = rep.findings.iter().find(|f| f.t_index == 60).expect("anomalous interval flagged");
    let scan = f.itemsets.iter().find(|s| s.items.contains(&(Feature::Sip, u64::from(sip)))).expect("scan set");
    let dos = f.itemsets.iter().find(|s| s.items.contains(&(Feature::Dip, u64::from(victim)))).expect("dos set");
    // contradicting items mean no flow supports both
    assert!(scan.items.iter().any(|(ft, v)| dos.items.iter().any(|(g, w)| ft == g && v != w)));
}

#[test]
fn pipeline_is_deterministic() {
    let recs = traffic(52, 60, &[Anomaly::PortScan { bin: 40, sip: source_ip(3), dip: dest_ip(3), ports: 100 }]);
    let a = extract_pipeline(&recs, &ExtractConfig::default()).unwrap();
    let b = extract_pipeline(&recs, &ExtractConfig::default()).unwrap();
    assert_eq!(a, b);
}
