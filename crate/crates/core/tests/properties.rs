use pcad_core::anomaly::{
    p1_mean, pairwise_max_corr, pcad_scores, pn_means, rand_cc, rank, score_global, score_local, LocalRule,
    RankEntry,
};
use pcad_core::cluster::{kmeans, pkmeans, CentroidModel, ClusterConfig};
use pcad_core::eval::{rank_change, EvalReport, IterationRecord};
use pcad_core::seed::rng;
use pcad_core::synth::Preset;
use pcad_core::{max_xcorr, rotate, UniformSeries};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_corpus(n: usize, d: usize, seed: u64) -> Vec<UniformSeries> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
            UniformSeries::from_values(format!("r{i:03}"), &v).unwrap()
        })
        .collect()
}

/// Randomly rotated structured corpus, so clusters are not trivial.
fn shaped_corpus(n: usize, d: usize, seed: u64) -> Vec<UniformSeries> {
    Preset::Global.spec(n, d, seed).generate().unwrap().series
}

fn check_model(model: &CentroidModel, d: usize) {
    let total: f64 = model.proportions.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(model.proportions.iter().all(|&p| p >= 0.0));
    for c in &model.centroids {
        assert_eq!(c.len(), d);
        let norm: f64 = c.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pkmeans_error_never_rises(seed in any::<u64>(), k in 1usize..5, d_exp in 4u32..7) {
        let d = 1 << d_exp;
        let data = shaped_corpus(40, d, seed);
        let (model, state) = pkmeans(&data, &ClusterConfig::new(k, seed)).unwrap();
        for w in model.meta.error_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "error rose from {} to {}", w[0], w[1]);
        }
        prop_assert!(model.meta.iterations <= 100);
        prop_assert!(state.error >= 0.0 && state.error.is_finite());
        prop_assert!(state.assignments.iter().all(|&a| a < k));
        prop_assert!(state.phases.iter().all(|&p| p < d));
        check_model(&model, d);
    }

    #[test]
    fn pkmeans_terminates_under_tight_budget(seed in any::<u64>(), max_iter in 1usize..4) {
        let data = random_corpus(30, 32, seed);
        let (model, _) = pkmeans(&data, &ClusterConfig::new(3, seed).max_iter(max_iter)).unwrap();
        prop_assert!(model.meta.iterations <= max_iter);
    }

    #[test]
    fn clustering_is_deterministic(seed in any::<u64>(), k in 1usize..4) {
        let data = shaped_corpus(30, 32, seed);
        let cfg = ClusterConfig::new(k, seed);
        prop_assert_eq!(pkmeans(&data, &cfg).unwrap(), pkmeans(&data, &cfg).unwrap());
        prop_assert_eq!(kmeans(&data, &cfg).unwrap(), kmeans(&data, &cfg).unwrap());
    }

    #[test]
    fn rotating_a_centroid_offsets_every_shift(seed in any::<u64>(), s in 0usize..64) {
        let data = random_corpus(12, 64, seed);
        let centroid = &data[0];
        let moved = rotate(centroid, s);
        for y in &data[1..] {
            let a = max_xcorr(centroid, y).unwrap();
            let b = max_xcorr(&moved, y).unwrap();
            prop_assert!((a.corr - b.corr).abs() < 1e-12);
            prop_assert_eq!(b.shift, (a.shift + s) % 64);
        }
    }

    #[test]
    fn fixed_model_scores_ignore_rotation(seed in any::<u64>(), k in 1usize..4, s in 0usize..32) {
        let data = shaped_corpus(30, 32, seed);
        let (model, _) = pkmeans(&data, &ClusterConfig::new(k, seed)).unwrap();
        for x in &data {
            let turned = x.rotated(s);
            let g = score_global(x, &model).unwrap();
            prop_assert!((g - score_global(&turned, &model).unwrap()).abs() < 1e-12);
            let (l, j) = score_local(x, &model).unwrap();
            let (l2, j2) = score_local(&turned, &model).unwrap();
            prop_assert!((l - l2).abs() < 1e-12);
            prop_assert_eq!(j, j2);
        }
    }

    #[test]
    fn scores_stay_in_correlation_range(seed in any::<u64>(), k in 1usize..4, s in 1usize..20) {
        let data = random_corpus(20, 32, seed);
        let (model, _) = pkmeans(&data, &ClusterConfig::new(k, seed)).unwrap();
        let in_range = |v: f64| (-1.0..=1.0 + 1e-9).contains(&v);
        for sc in pcad_scores(&data, &model, LocalRule::Closest).unwrap() {
            prop_assert!(in_range(sc.global) && in_range(sc.local));
        }
        for e in pn_means(&data).unwrap().entries {
            prop_assert!(in_range(e.score));
        }
        for gauss in [false, true] {
            for e in rand_cc(&data, s, seed, gauss).unwrap().entries {
                prop_assert!(in_range(e.score));
            }
        }
    }

    #[test]
    fn single_centroid_scores_coincide(seed in any::<u64>()) {
        let data = shaped_corpus(25, 32, seed);
        let (model, _) = pkmeans(&data, &ClusterConfig::new(1, seed)).unwrap();
        let p1 = p1_mean(&data, seed).unwrap();
        for x in &data {
            let g = score_global(x, &model).unwrap();
            let (l, _) = score_local(x, &model).unwrap();
            prop_assert!((g - l).abs() < 1e-12);
            let e = p1.entries.iter().find(|e| e.id == x.id()).unwrap();
            prop_assert!((g - e.score).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_invariant_distance_is_symmetric(seed in any::<u64>()) {
        let data = random_corpus(15, 32, seed);
        let m = pairwise_max_corr(&data).unwrap();
        for i in 0..data.len() {
            for j in 0..data.len() {
                prop_assert!((m[i][j] - m[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pn_means_is_permutation_equivariant(seed in any::<u64>()) {
        let data = random_corpus(15, 32, seed);
        let mut shuffled = data.clone();
        let mut r = rng(seed ^ 1);
        for i in (1..shuffled.len()).rev() {
            let j = r.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let a = pn_means(&data).unwrap();
        let b = pn_means(&shuffled).unwrap();
        for e in &a.entries {
            let f = b.entries.iter().find(|f| f.id == e.id).unwrap();
            prop_assert!((e.score - f.score).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_sorted_and_stable(scores in proptest::collection::vec(-3i32..3, 1..40)) {
        let entries: Vec<RankEntry> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| RankEntry::new(format!("e{i:02}"), s as f64))
            .collect();
        let r = rank(entries, scores.len()).unwrap();
        for w in r.entries.windows(2) {
            prop_assert!(w[0].score <= w[1].score);
            if w[0].score == w[1].score {
                prop_assert!(w[0].id < w[1].id);
            }
        }
    }

    #[test]
    fn rank_change_against_itself_is_zero(n in 1usize..30, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<RankEntry> = (0..n).map(|i| RankEntry::new(format!("x{i}"), r.random::<f64>())).collect();
        let ranking = rank(entries, n).unwrap();
        for m in 0..=n {
            prop_assert_eq!(rank_change(&ranking, &ranking, m).unwrap(), vec![0; m]);
        }
    }

    #[test]
    fn report_mean_is_mean_of_rank_changes(
        changes in proptest::collection::vec(proptest::collection::vec(0usize..50, 1..20), 1..6)
    ) {
        let records: Vec<IterationRecord> = changes
            .iter()
            .enumerate()
            .map(|(i, rc)| IterationRecord {
                iteration: i,
                seed: i as u64,
                method: "PCAD_GLOBAL".into(),
                sample: 10,
                k: Some(1),
                precision: None,
                rank_changes: rc.clone(),
            })
            .collect();
        let report = EvalReport::from_records("PCAD_GLOBAL", 10, records);
        let all: Vec<usize> = changes.concat();
        let mean = all.iter().sum::<usize>() as f64 / all.len() as f64;
        prop_assert!((report.mean_rank_change - mean).abs() < 1e-12);
        prop_assert_eq!(report.rank_changes.len(), all.len());
    }
}
