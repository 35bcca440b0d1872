//! Generated experiments are deterministic and survive a disk round trip.

use dextra::engine::RunConfig;
use dextra::experiment::{compare, Algorithm, Setup, SetupSpec, WeightStrategy};
use dextra::io::Manifest;

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.push((rel, std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn saving_twice_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = SetupSpec::seeded(5);
    spec.build().unwrap().save(a.path(), &Manifest::new()).unwrap();
    spec.build().unwrap().save(b.path(), &Manifest::new()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn standard_instance_round_trip_runs_identically() {
    let dir = tempfile::tempdir().unwrap();
    let setup = SetupSpec::seeded(0).build().unwrap();
    setup.save(dir.path(), &Manifest::new()).unwrap();
    let back = Setup::load(dir.path()).unwrap();
    assert_eq!(back.info.pi, setup.info.pi);
    let cfg = RunConfig::new(2.0, 600, 1e-10);
    let (r1, r2) = (
        setup.run(Algorithm::Dextra, &cfg).unwrap(),
        back.run(Algorithm::Dextra, &cfg).unwrap(),
    );
    assert_eq!(r1.residual, r2.residual);
    assert!(r1.converged());
}

#[test]
fn constant_weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let setup = SetupSpec {
        strategy: WeightStrategy::Constant(0.01),
        ..SetupSpec::seeded(4)
    }
    .build()
    .unwrap();
    setup.save(dir.path(), &Manifest::new()).unwrap();
    let back = Setup::load(dir.path()).unwrap();
    assert_eq!(back.strategy, "constant:0.01");
    assert_eq!(back.pair.a(), setup.pair.a());
}

#[test]
fn load_names_missing_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let err = Setup::load(&missing).unwrap_err().to_string();
    assert!(err.contains("nowhere"), "{err}");
}

#[test]
fn comparison_reports_dextra_linear_and_baselines_not() {
    let setup = SetupSpec::seeded(0).build().unwrap();
    let rows = compare(
        &setup,
        &[Algorithm::Dextra, Algorithm::GradientPush, Algorithm::DgdRow, Algorithm::Extra],
        &RunConfig::new(2.0, 2000, 1e-10),
        None,
    );
    for (algo, row) in rows {
        match algo {
            Algorithm::Extra => assert!(row.is_err(), "directed graph must be rejected"),
            Algorithm::Dextra => {
                let row = row.unwrap();
                assert!(row.trace.converged());
                assert!(row.linear());
            }
            _ => {
                let row = row.unwrap();
                assert!(!row.trace.converged(), "{algo}");
                assert!(!row.linear(), "{algo} {:?}", row.fit);
            }
        }
    }
}
