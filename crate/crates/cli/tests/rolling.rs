use peer_ar::nalgebra::DMatrix;
use peer_ar::simulate::{gen_panel, gen_random_graph_alpha, AlphaMatrix, LinkWeight, McConfig};
use peer_ar::{ar_fe, default_peer_structure, IvSpec, Panel, Variant};
use peer_ar_cli::{rolling_ar, RollingSpec, WindowOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn null_panel(n: usize, t: usize, seed: u64) -> Panel {
    let cfg = McConfig {
        n,
        t,
        ..McConfig::default()
    };
    gen_panel(&cfg, &AlphaMatrix::zeros(n), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn tested(outcome: &WindowOutcome) -> (f64, f64) {
    match outcome {
        WindowOutcome::Tested {
            statistic, p_chisq, ..
        } => (*statistic, *p_chisq),
        WindowOutcome::Skipped { reason } => panic!("skipped: {reason}"),
    }
}

#[test]
fn full_window_matches_full_sample() {
    let p = null_panel(5, 30, 1);
    let peers = default_peer_structure(5).unwrap();
    let spec = RollingSpec { window: 30, step: 1 };
    let pts = rolling_ar(&p, &peers, spec, &IvSpec::Full, Variant::FeJl).unwrap();
    assert_eq!(pts.len(), 1);
    let full = ar_fe(&p, &peers, &IvSpec::Full, Variant::FeJl).unwrap();
    let (stat, pc) = tested(&pts[0].outcome);
    assert_eq!(stat, full.statistic);
    assert_eq!(pc, full.p_chisq.unwrap());
}

#[test]
fn point_count_and_skips() {
    let p = null_panel(5, 40, 2);
    let peers = default_peer_structure(5).unwrap();
    let pts = rolling_ar(&p, &peers, RollingSpec { window: 12, step: 1 }, &IvSpec::Full, Variant::FeJl)
        .unwrap();
    assert_eq!(pts.len(), 40 - 12 + 1);
    assert_eq!((pts[0].start, pts[0].end), (1, 12));
    let strided = rolling_ar(&p, &peers, RollingSpec { window: 12, step: 5 }, &IvSpec::Full, Variant::FeJl)
        .unwrap();
    assert_eq!(strided.iter().map(|p| p.start).collect::<Vec<_>>(), vec![1, 6, 11, 16, 21, 26]);
    // 5 periods leave N* = 16 < K* = 20
    let tiny = rolling_ar(&p, &peers, RollingSpec { window: 5, step: 10 }, &IvSpec::Full, Variant::FeJl)
        .unwrap();
    assert!(tiny
        .iter()
        .all(|pt| matches!(&pt.outcome, WindowOutcome::Skipped { reason } if reason.contains("instruments"))));
    assert!(rolling_ar(&p, &peers, RollingSpec { window: 41, step: 1 }, &IvSpec::Full, Variant::FeJl).is_err());
    assert!(rolling_ar(&p, &peers, RollingSpec { window: 10, step: 0 }, &IvSpec::Full, Variant::FeJl).is_err());
}

#[test]
fn constant_outcome_gives_zero_statistics() {
    let mut p = null_panel(4, 20, 3);
    p.y = vec![2.5; 80];
    let peers = default_peer_structure(4).unwrap();
    let pts = rolling_ar(&p, &peers, RollingSpec { window: 10, step: 1 }, &IvSpec::Full, Variant::FeJl)
        .unwrap();
    for pt in &pts {
        assert_eq!(tested(&pt.outcome).0, 0.0);
    }
}

#[test]
fn peer_effects_in_the_middle_are_located() {
    // peer effects only in periods 10..=40 of 80
    let (n, t) = (10, 80);
    let cfg = McConfig {
        n,
        t,
        ..McConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let alpha = gen_random_graph_alpha(n, 0.5, LinkWeight::Fixed(0.3), &mut rng).unwrap();
    let with = gen_panel(&cfg, &alpha, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let without = gen_panel(&cfg, &AlphaMatrix::zeros(n), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(with.x, without.x);
    let y = (0..n * t)
        .map(|r| {
            let period = r / n + 1;
            if (10..=40).contains(&period) { with.y[r] } else { without.y[r] }
        })
        .collect();
    let p = Panel::new(n, t, y, DMatrix::clone(&with.x)).unwrap();
    let peers = default_peer_structure(n).unwrap();
    let pts = rolling_ar(&p, &peers, RollingSpec { window: 20, step: 1 }, &IvSpec::Full, Variant::FeJl)
        .unwrap();
    let best = pts
        .iter()
        .min_by(|a, b| tested(&a.outcome).1.total_cmp(&tested(&b.outcome).1))
        .unwrap();
    assert!(best.start <= 40 && best.end >= 10, "minimum at {}..{}", best.start, best.end);
    assert!(tested(&best.outcome).1 < 0.05);
    let late_min = pts
        .iter()
        .filter(|pt| pt.start > 40)
        .map(|pt| tested(&pt.outcome).1)
        .fold(1.0, f64::min);
    assert!(late_min > tested(&best.outcome).1);
}
