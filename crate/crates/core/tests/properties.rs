use proptest::prelude::*;

use tgl_core::graph::{build_session_graph, CapPolicy, EdgeChannel};
use tgl_core::metrics::{auc_pairs, brier_pairs, ece_pairs, score_histogram, trigger_std};
use tgl_core::model::{joint_loss, LossConfig};
use tgl_core::session::{Label, SessionRecord};
use tgl_core::synth::{generate_synthetic, SyntheticProfile};

// Scores on a k/64 grid keep every sum below exact in f64.
fn grid_pairs(max: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0u32..=64, any::<bool>()), 1..max)
        .prop_map(|v| v.into_iter().map(|(k, y)| (k as f64 / 64.0, y)).collect())
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Negative), Just(Label::Positive), Just(Label::Unlabeled)]
}

proptest! {
    #[test]
    fn auc_ignores_strictly_monotone_transforms(pairs in grid_pairs(50), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let warped: Vec<(f64, bool)> = pairs.iter().map(|&(s, y)| (a * s * s * s + s + b, y)).collect();
        prop_assert_eq!(auc_pairs(&pairs), auc_pairs(&warped));
    }

    #[test]
    fn auc_flips_under_reversal(pairs in grid_pairs(50)) {
        let neg: Vec<(f64, bool)> = pairs.iter().map(|&(s, y)| (-s, y)).collect();
        if let (Some(x), Some(y)) = (auc_pairs(&pairs), auc_pairs(&neg)) {
            prop_assert!((x + y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_ignores_event_order(pairs in grid_pairs(50), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        let mut z = seed;
        for i in (1..n).rev() {
            z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (z >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(brier_pairs(&pairs), brier_pairs(&shuffled));
        prop_assert_eq!(ece_pairs(&pairs, 20), ece_pairs(&shuffled, 20));
    }

    #[test]
    fn histogram_is_a_distribution(scores in prop::collection::vec(0.0f64..=1.0, 1..200)) {
        let h = score_histogram(&scores);
        prop_assert_eq!(h.fractions.len(), 20);
        prop_assert!((h.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((h.extremes - h.fractions[0] - h.fractions[19]).abs() < 1e-15);
    }

    #[test]
    fn std_of_copies_is_zero(pairs in grid_pairs(30), k in 2usize..6) {
        let (s, y): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        let sets = vec![(s, y); k];
        prop_assert_eq!(trigger_std(&sets).unwrap().std, 0.0);
    }

    #[test]
    fn unlabeled_slots_never_touch_the_loss(
        t in prop::collection::vec((-6.0f64..6.0, label()), 1..20),
        r in prop::collection::vec((-6.0f64..6.0, label()), 1..20),
        noise in -50.0f64..50.0,
    ) {
        let cfg = LossConfig::default();
        let (tl, tlab): (Vec<f64>, Vec<Label>) = t.iter().copied().unzip();
        let (rl, rlab): (Vec<f64>, Vec<Label>) = r.iter().copied().unzip();
        let base = joint_loss(&tl, &tlab, &rl, &rlab, &cfg);
        let bump = |l: &[f64], lab: &[Label]| -> Vec<f64> {
            l.iter().zip(lab).map(|(&x, &y)| if y == Label::Unlabeled { x + noise } else { x }).collect()
        };
        let moved = joint_loss(&bump(&tl, &tlab), &tlab, &bump(&rl, &rlab), &rlab, &cfg);
        prop_assert_eq!(base.total, moved.total);
        for (g, y) in base.d_trigger.iter().zip(&tlab) {
            if *y == Label::Unlabeled { prop_assert_eq!(*g, 0.0); }
        }
        for (g, y) in base.d_routing.iter().zip(&rlab) {
            if *y == Label::Unlabeled { prop_assert_eq!(*g, 0.0); }
        }
    }
}

fn sessions(seed: u64) -> Vec<SessionRecord> {
    let profile = SyntheticProfile { min_events: 1, max_events: 64, ..SyntheticProfile::default() };
    generate_synthetic(seed, 3, &profile).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn graph_channel_counts(seed in any::<u64>()) {
        for s in sessions(seed) {
            let g = build_session_graph(&s, CapPolicy::KeepFirst);
            let n = g.event_count();
            prop_assert!(n <= 64);
            prop_assert_eq!(g.count_channel(EdgeChannel::SelfLoop), g.nodes.len());
            prop_assert_eq!(g.count_channel(EdgeChannel::HasEntity), g.count_channel(EdgeChannel::BelongsTo));
            prop_assert_eq!(g.count_channel(EdgeChannel::TemporalFwd), n.saturating_sub(1));
            prop_assert_eq!(g.count_channel(EdgeChannel::TemporalBwd), n.saturating_sub(1));
            let mut loops = vec![0usize; g.nodes.len()];
            for e in &g.edges {
                if e.channel == EdgeChannel::SelfLoop {
                    prop_assert_eq!(e.src, e.dst);
                    loops[e.src] += 1;
                }
                if e.channel == EdgeChannel::HasEntity {
                    let mirrored = g.edges.iter().any(|m| m.channel == EdgeChannel::BelongsTo && m.src == e.dst && m.dst == e.src);
                    prop_assert!(mirrored);
                }
            }
            prop_assert!(loops.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn causal_prefixes_grow(seed in any::<u64>()) {
        for s in sessions(seed) {
            let g = build_session_graph(&s, CapPolicy::KeepFirst);
            let mut prev: Option<Vec<String>> = None;
            for t in 0..g.event_count() {
                let p = g.causal_prefix(t).unwrap();
                prop_assert_eq!(p.count_channel(EdgeChannel::TemporalBwd), 0);
                prop_assert_eq!(p.event_count(), t + 1);
                let ids: Vec<String> = p.nodes.iter().map(|n| n.node_id.clone()).collect();
                if let Some(before) = &prev {
                    prop_assert!(before.iter().all(|id| ids.contains(id)));
                }
                prev = Some(ids);
            }
        }
    }

    #[test]
    fn graph_build_is_deterministic(seed in any::<u64>()) {
        for s in sessions(seed) {
            prop_assert_eq!(build_session_graph(&s, CapPolicy::KeepFirst), build_session_graph(&s.clone(), CapPolicy::KeepFirst));
        }
    }
}
