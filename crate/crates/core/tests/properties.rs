use proptest::prelude::*;

use ctxforecast::collab::{build_incidence, propagate};
use ctxforecast::contexts::{kmeans, vectorize};
use ctxforecast::eval::{compute_metrics, rank_of_truth};
use ctxforecast::event::{DatasetSplits, EventQuintuple, Vocab};
use ctxforecast::model::{Model, Variant};
use ctxforecast::numerics::Matrix;
use ctxforecast::train::TrainConfig;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hit_rates_are_ordered(ranks in prop::collection::vec(1usize..60, 1..200)) {
        let m = compute_metrics(&ranks).unwrap();
        prop_assert!(m.hit1 <= m.hit3 && m.hit3 <= m.hit10);
        prop_assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        prop_assert!(m.mrr >= m.hit1);
    }

    #[test]
    fn ranks_lie_in_range(scores in prop::collection::vec(-5.0..5.0f64, 1..50), pick in any::<prop::sample::Index>()) {
        let truth = pick.index(scores.len());
        let r = rank_of_truth(&scores, truth).unwrap();
        prop_assert!(r >= 1 && r <= scores.len());
        let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r == 1, scores[truth] == best);
    }

    #[test]
    fn zero_layers_is_identity(t in matrix(4, 3), u in matrix(4, 3)) {
        let sets = vec![vec![0, 1], vec![1], vec![], vec![0, 1]];
        let out = propagate(&[t.clone(), u.clone()], &sets, 0).unwrap();
        prop_assert_eq!(&out[0], &t);
        prop_assert_eq!(&out[1], &u);
    }

    #[test]
    fn singleton_rows_never_change(t in matrix(3, 2), u in matrix(3, 2), v in matrix(3, 2), p in 1usize..4) {
        let sets = vec![vec![2], vec![0, 1, 2], vec![]];
        let out = propagate(&[t.clone(), u.clone(), v.clone()], &sets, p).unwrap();
        for (o, i) in out.iter().zip([&t, &u, &v]) {
            prop_assert_eq!(o.row(0), i.row(0));
            prop_assert_eq!(o.row(2), i.row(2));
        }
    }

    #[test]
    fn config_text_round_trips(
        dim in 1usize..300,
        layers in 1usize..4,
        hyper in 0usize..3,
        lr in 1e-6..1.0f64,
        wd in 0.0..1e-2f64,
        seed in any::<u64>(),
        lower in 0.01..0.3f64,
        variant in prop::sample::select(Variant::ALL.to_vec()),
    ) {
        let cfg = TrainConfig {
            dim, layers, hyper_layers: hyper, lr, weight_decay: wd, seed,
            rrelu_lower: lower, rrelu_upper: lower + 0.1, variant,
            ..TrainConfig::default()
        };
        prop_assert_eq!(TrainConfig::parse(&cfg.to_text(), "cfg").unwrap(), cfg);
    }

    #[test]
    fn tfidf_rows_are_unit_or_empty(docs in prop::collection::vec(prop::collection::vec(0usize..6, 0..8), 1..12)) {
        let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma"];
        let docs: Vec<Vec<String>> = docs.iter().map(|d| d.iter().map(|&i| words[i].to_string()).collect()).collect();
        prop_assume!(docs.iter().any(|d| !d.is_empty()));
        let v = vectorize(&docs).unwrap();
        for (row, empty) in v.vectors.iter().zip(&v.empty) {
            let norm: f64 = row.iter().map(|(_, w)| w * w).sum();
            if *empty {
                prop_assert!(row.is_empty());
            } else {
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_labels_are_nearest_centroids(points in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 4..30), seed in any::<u64>()) {
        let res = kmeans(&points, 3, seed, 100).unwrap();
        prop_assert!(res.inertia.windows(2).all(|w| w[1] <= w[0]));
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        for (p, &l) in points.iter().zip(&res.labels) {
            let own = dist(p, &res.centroids[l]);
            prop_assert!(res.centroids.iter().all(|c| dist(p, c) >= own - 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scores_are_distributions_and_branches_are_isolated(
        seed in any::<u64>(),
        events in prop::collection::vec((0usize..7, 0usize..2, 0usize..7, 0usize..8, 0usize..3), 10..60),
        s in 0usize..7,
        r in 0usize..4,
    ) {
        let vocab = Vocab::numbered(7, 2, 3).unwrap();
        let evs: Vec<_> = events.iter().map(|&(s, r, o, t, c)| EventQuintuple::new(s, r, o, t, c)).collect();
        let splits = DatasetSplits::from_original_events(&evs, &vocab, 8, Default::default()).unwrap();
        let cfg = TrainConfig { dim: 4, channels: 2, layers: 1, history: 2, seed, ..TrainConfig::default() };
        let mut model = Model::new(cfg, &vocab, build_incidence(&splits.train, &vocab)).unwrap();
        let tl = splits.timeline();
        let h = tl.history_window(7, 2).unwrap();
        let state = model.embed(&h).unwrap();
        let before: Vec<Vec<f64>> = (0..3).map(|c| model.scorer().score(&state, s, r, c).unwrap()).collect();
        for row in &before {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let avr = model.scorer().avr_context_score(&state, s, r).unwrap();
        prop_assert!((avr.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        // perturb every decoder parameter of context 1
        let ids: Vec<_> = model.store.iter().filter(|(_, p)| p.name.starts_with("ctx1.dec")).map(|(id, _)| id).collect();
        for id in ids {
            let m = model.store.value(id).map(|x| x + 0.5);
            *model.store.value_mut(id) = m;
        }
        let after: Vec<Vec<f64>> = (0..3).map(|c| model.scorer().score(&state, s, r, c).unwrap()).collect();
        prop_assert_eq!(&before[0], &after[0]);
        prop_assert_eq!(&before[2], &after[2]);
    }
}
