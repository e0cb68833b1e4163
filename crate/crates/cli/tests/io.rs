use std::fs;
use std::path::Path;

use peer_ar::nalgebra::DMatrix;
use peer_ar::Panel;
use peer_ar_cli::{load_adjacency, load_panel, load_peers, save_panel, CliError, LoadOptions};
use proptest::prelude::*;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn load(path: &Path) -> Result<Panel, CliError> {
    load_panel(path, &LoadOptions::default())
}

const TWO_BY_TWO: &str = "unit,time,y,x1\nA,1,1.5,0.1\nB,1,2.5,0.2\nA,2,3.5,0.3\nB,2,4.5,0.4\n";

#[test]
fn complete_grid() {
    let dir = TempDir::new().unwrap();
    let p = load(&write(&dir, "p.csv", TWO_BY_TWO)).unwrap();
    assert_eq!((p.n, p.t), (2, 2));
    assert_eq!(p.y, vec![1.5, 2.5, 3.5, 4.5]);
    assert_eq!(p.x[(3, 0)], 0.4);
    assert_eq!(p.unit_labels.as_deref(), Some(&["A".to_string(), "B".to_string()][..]));
}

#[test]
fn shuffled_rows_give_the_same_panel() {
    let dir = TempDir::new().unwrap();
    let shuffled = "unit,time,y,x1\nB,2,4.5,0.4\nA,1,1.5,0.1\nA,2,3.5,0.3\nB,1,2.5,0.2\n";
    let a = load(&write(&dir, "a.csv", TWO_BY_TWO)).unwrap();
    let b = load(&write(&dir, "b.csv", shuffled)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_duplicate_and_non_numeric_cells() {
    let dir = TempDir::new().unwrap();
    let missing = "unit,time,y,x1\nA,1,1,1\nB,1,1,1\nA,2,1,1\nB,2,1,1\nA,3,1,1\n";
    match load(&write(&dir, "m.csv", missing)) {
        Err(CliError::MissingCell { unit, time }) => {
            assert_eq!((unit.as_str(), time.as_str()), ("B", "3"));
        }
        other => panic!("{other:?}"),
    }
    let dup = "unit,time,y,x1\nA,1,1,1\nA,1,2,1\n";
    assert!(matches!(
        load(&write(&dir, "d.csv", dup)),
        Err(CliError::DuplicateCell { .. })
    ));
    let text = "unit,time,y,x1\nA,1,abc,1\n";
    match load(&write(&dir, "t.csv", text)) {
        Err(CliError::NonNumericValue { column, line, value }) => {
            assert_eq!((column.as_str(), line, value.as_str()), ("y", 2, "abc"));
        }
        other => panic!("{other:?}"),
    }
    let no_x = "unit,time,y\nA,1,1\n";
    assert!(matches!(load(&write(&dir, "x.csv", no_x)), Err(CliError::MissingColumn(_))));
}

#[test]
fn time_ordering() {
    let dir = TempDir::new().unwrap();
    let body = "unit,time,y,x1\nA,2,2,0\nB,2,2,0\nA,10,10,0\nB,10,10,0\n";
    let path = write(&dir, "t.csv", body);
    let lexical = load(&path).unwrap();
    assert_eq!(lexical.y, vec![10.0, 10.0, 2.0, 2.0]);
    let numeric = load_panel(
        &path,
        &LoadOptions {
            time_numeric: true,
            ..LoadOptions::default()
        },
    )
    .unwrap();
    assert_eq!(numeric.y, vec![2.0, 2.0, 10.0, 10.0]);
}

#[test]
fn wins_produced_outcome() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("unit,time,x1,three_pt,two_pt,ft,reb,stl,blk,mfg,mft,to,mins\n");
    body.push_str("A,1,0.5,1,0,0,0,0,0,0,0,0,1\n");
    body.push_str("B,1,0.1,0,0,0,0,0,0,0,0,1,2\n");
    body.push_str("A,2,0.2,0,0,0,0,0,0,0,0,0,3\n");
    body.push_str("B,2,0.3,0,0,0,0,0,0,0,0,0,4\n");
    let p = load_panel(
        &write(&dir, "w.csv", &body),
        &LoadOptions {
            wins_produced: true,
            ..LoadOptions::default()
        },
    )
    .unwrap();
    assert!((p.y[0] - 0.064).abs() < 1e-15);
    assert!((p.y[1] + 0.017).abs() < 1e-15);
    assert_eq!(p.y[2], 0.0);

    let bad = body.replace("A,2,0.2,0,0,0,0,0,0,0,0,0,3", "A,2,0.2,0,0,0,0,0,0,0,0,0,0");
    assert!(load_panel(
        &write(&dir, "bad.csv", &bad),
        &LoadOptions {
            wins_produced: true,
            ..LoadOptions::default()
        },
    )
    .is_err());
}

#[test]
fn peer_and_adjacency_files() {
    let dir = TempDir::new().unwrap();
    let p = load(&write(&dir, "p.csv", TWO_BY_TWO)).unwrap();
    let peers = load_peers(&write(&dir, "peers.csv", "unit,peer\nA,B\n"), &p).unwrap();
    assert_eq!(peers.peers(0), &[1]);
    assert!(peers.peers(1).is_empty());
    assert!(matches!(
        load_peers(&write(&dir, "bad.csv", "unit,peer\nA,Z\n"), &p),
        Err(CliError::UnknownUnit(_))
    ));
    let w = load_adjacency(&write(&dir, "w.csv", "0,1\n0.5,0\n")).unwrap();
    assert_eq!(w[(1, 0)], 0.5);
    assert!(load_adjacency(&write(&dir, "r.csv", "0,1,2\n0,1\n")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn save_then_load_is_identity(
        n in 2usize..6,
        t in 2usize..12,
        l in 1usize..3,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n * t, l, |_, _| rng.random_range(-1e6..1e6));
        let y = (0..n * t).map(|_| rng.random_range(-1e-3..1e3)).collect();
        let p = Panel::new(n, t, y, x).unwrap();
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("p.csv");
        save_panel(&path, &p).unwrap();
        let back = load(&path).unwrap();
        prop_assert_eq!(&back.y, &p.y);
        prop_assert_eq!(&back.x, &p.x);
        save_panel(&path, &back).unwrap();
        prop_assert_eq!(load(&path).unwrap(), back);
    }
}
