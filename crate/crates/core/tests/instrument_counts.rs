//! Instrument counts at the simulation design size.

use nalgebra::DMatrix;
use peer_ar::artest::{fe_bundle, ArOptions};
use peer_ar::instruments::RANK_TOL;
use peer_ar::{assemble_q, build_z, default_peer_structure, within_transform, IvSpec, Panel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn panel(n: usize, t: usize) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let x = DMatrix::from_fn(n * t, 1, |_, _| StandardNormal.sample(&mut rng));
    let y = (0..n * t).map(|_| StandardNormal.sample(&mut rng)).collect();
    Panel::new(n, t, y, x).unwrap()
}

#[test]
fn untransformed_design_keeps_every_peer_column() {
    let p = panel(30, 50);
    let peers = default_peer_structure(30).unwrap();
    let z = build_z(&p, &peers, &IvSpec::Full).unwrap();
    let q = assemble_q(&p.x, &z, RANK_TOL).unwrap();
    assert_eq!(q.k(), 30 * 29 + 1);
    assert!(q.excluded.is_empty());
}

#[test]
fn within_transform_absorbs_the_regressor_direction() {
    // J x lies in the span of the transformed peer block once every unit
    // has all other units as potential peers.
    let p = panel(30, 50);
    let peers = default_peer_structure(30).unwrap();
    let tp = within_transform(&p).unwrap();
    let fast = fe_bundle(&p, &tp, &peers, &IvSpec::Full, &ArOptions::default()).unwrap();
    assert_eq!(fast.k(), 30 * 29);
    let slow = fe_bundle(
        &p,
        &tp,
        &peers,
        &IvSpec::Full,
        &ArOptions {
            force_generic: true,
            ..ArOptions::default()
        },
    )
    .unwrap();
    assert_eq!(slow.k(), 30 * 29);
    let lev = fast
        .leverage
        .iter()
        .zip(&slow.leverage)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(lev < 1e-9, "leverage difference {lev}");
}
