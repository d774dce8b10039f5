use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bistoch::{load_model, load_points, save_model, EmbeddingDefaults, Format};
use bistoch_core::{fit, FitConfig, Measure, PointSet, Strategy};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn bistoch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bistoch"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_points(path: &Path, seed: u64, m: usize, d: usize) {
    let mut r = StdRng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..m {
        let row: Vec<String> = (0..d).map(|_| format!("{:e}", r.gen_range(-1.0..1.0))).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn read(path: &Path) -> PointSet {
    load_points(fs::File::open(path).unwrap(), Format::default()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn extend_on_training_points_reproduces_embed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_points(&p.join("x.csv"), 1, 120, 4);
    let o = bistoch(
        &[
            "embed", "--points", "x.csv", "--ref-strategy", "fps", "--ref-size", "15",
            "--components", "4", "--time", "2", "--out", "e.csv", "--model-dir", "model",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("bi-stochastic residual"));
    // components and time come from the saved model
    let o = bistoch(&["extend", "--model-dir", "model", "--points-new", "x.csv", "--out", "f.csv"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = read(&p.join("e.csv"));
    let f = read(&p.join("f.csv"));
    assert_eq!((e.len(), e.dim()), (120, 4));
    assert_eq!((f.len(), f.dim()), (120, 4));
    for (a, b) in e.coords().as_slice().iter().zip(f.coords().as_slice()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn far_point_becomes_nan_row_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_points(&p.join("x.csv"), 2, 40, 2);
    fs::write(p.join("new.csv"), "0.1,0.2\n1000,1000\n-0.3,0.4\n").unwrap();
    let o = bistoch(
        &["embed", "--points", "x.csv", "--components", "2", "--out", "e.csv", "--model-dir", "m"],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = bistoch(&["extend", "--model-dir", "m", "--points-new", "new.csv", "--out", "f.csv"], p);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("[1]"), "{}", stderr(&o));
    let text = fs::read_to_string(p.join("f.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "NaN,NaN");
    assert!(!lines[0].contains("NaN") && !lines[2].contains("NaN"));
}

#[test]
fn validate_names_the_unreachable_reference() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut text = String::new();
    for i in 0..10 {
        text.push_str(&format!("{}\n{}\n", i as f64 * 0.01, 10.0 + i as f64 * 0.01));
    }
    fs::write(p.join("x.csv"), text).unwrap();
    fs::write(p.join("y.csv"), "0\n5\n10\n").unwrap();
    let o = bistoch(&["validate", "--points", "x.csv", "--ref-points", "y.csv", "--epsilon", "0.02"], p);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("offending columns: [1]"), "{out}");
    assert!(out.contains("increase epsilon"));

    // the same geometry is fine with a wide kernel
    let o = bistoch(&["validate", "--points", "x.csv", "--ref-points", "y.csv", "--epsilon", "50"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn external_affinity_embeds_but_cannot_extend() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("a.csv"), "1,0.5,0.1\n0.5,1,0.5\n0.1,0.5,1\n0.2,0.2,0.9\n").unwrap();
    let o = bistoch(
        &["embed", "--affinity", "a.csv", "--components", "1", "--out", "e.csv", "--model-dir", "m"],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta = fs::read_to_string(p.join("m/metadata.txt")).unwrap();
    assert!(meta.contains("affinity=external") && meta.contains("digest=sha256:"));
    fs::write(p.join("new.csv"), "0.5\n").unwrap();
    let o = bistoch(&["extend", "--model-dir", "m", "--points-new", "new.csv", "--out", "f.csv"], p);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn kernel_stats_reports_and_respects_size_limit() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_points(&p.join("x.csv"), 3, 60, 3);
    let o = bistoch(&["kernel-stats", "--points", "x.csv", "--ref-strategy", "uniform", "--ref-size", "10"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["symmetry error", "min eigenvalue", "row-sum residual", "spectrum match"] {
        assert!(out.contains(key), "{out}");
    }
    let o = bistoch(&["kernel-stats", "--points", "x.csv", "--max-m", "50"], p);
    assert_eq!(o.status.code(), Some(4));
    let o = bistoch(&["kernel-stats", "--points", "x.csv", "--max-m", "50", "--force-dense"], p);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_points(&p.join("x.csv"), 4, 20, 2);
    fs::write(p.join("bad.csv"), "1,2\n3,x\n").unwrap();
    fs::write(p.join("dup.csv"), "1,1\n1,1\n1,1\n").unwrap();

    assert_eq!(bistoch(&["--help"], p).status.code(), Some(0));
    assert_eq!(bistoch(&["--version"], p).status.code(), Some(0));
    assert_eq!(bistoch(&["frobnicate"], p).status.code(), Some(4));
    assert_eq!(bistoch(&["validate"], p).status.code(), Some(4));
    assert_eq!(bistoch(&["validate", "--points", "x.csv", "--epsilon", "-1"], p).status.code(), Some(4));
    assert_eq!(
        bistoch(&["validate", "--points", "x.csv", "--ref-strategy", "fps"], p).status.code(),
        Some(4)
    );
    assert_eq!(
        bistoch(&["embed", "--points", "x.csv", "--components", "99", "--out", "e.csv"], p).status.code(),
        Some(4)
    );
    assert_eq!(bistoch(&["validate", "--points", "missing.csv"], p).status.code(), Some(2));
    let o = bistoch(&["validate", "--points", "bad.csv"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    // identical points give a zero median bandwidth
    assert_eq!(bistoch(&["validate", "--points", "dup.csv"], p).status.code(), Some(3));
}

#[test]
fn measure_and_delimiter_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("x.tsv"), "a\tb\n0\t0\n1\t0\n0\t1\n1\t1\n").unwrap();
    fs::write(p.join("mu.tsv"), "w\n1\n2\n3\n4\n").unwrap();
    let o = bistoch(
        &[
            "embed", "--points", "x.tsv", "--measure", "mu.tsv", "--delimiter", "tab", "--header",
            "--components", "2", "--out", "e.tsv", "--out-header",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(p.join("e.tsv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# t=1"));
    assert_eq!(lines.next().unwrap(), "psi_2\tpsi_3");
    assert_eq!(lines.count(), 4);

    fs::write(p.join("short.tsv"), "w\n1\n2\n").unwrap();
    let o = bistoch(
        &["validate", "--points", "x.tsv", "--measure", "short.tsv", "--delimiter", "tab", "--header"],
        p,
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn model_round_trip_is_exact() {
    let mut r = StdRng::seed_from_u64(5);
    let x = PointSet::from_row_major(80, 3, (0..240).map(|_| r.gen::<f64>()).collect()).unwrap();
    let mu = Measure::new((0..80).map(|_| r.gen_range(0.1..2.0)).collect()).unwrap();
    let config = FitConfig {
        strategy: Strategy::Uniform,
        ref_size: 12,
        seed: 9,
        ..FitConfig::default()
    };
    let f = fit(&x, &mu, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let defaults = EmbeddingDefaults {
        components: 3,
        time: 0.5,
    };
    save_model(dir.path(), &f.model, Some(defaults)).unwrap();
    let (g, d) = load_model(dir.path()).unwrap();
    assert_eq!(d, Some(defaults));
    assert_eq!(g.eigenvalues(), f.model.eigenvalues());
    assert_eq!(g.eigenvectors(), f.model.eigenvectors());
    assert_eq!(g.omega(), f.model.omega());
    assert_eq!(g.reference().unwrap().points(), f.model.reference().unwrap().points());
    assert_eq!(g.provenance(), f.model.provenance());
    assert_eq!((g.m(), g.n(), g.d(), g.cutoff()), (f.model.m(), f.model.n(), f.model.d(), f.model.cutoff()));

    let a = bistoch_core::extend_new_points(&f.model, &x, 0.5, 3).unwrap();
    let b = bistoch_core::extend_new_points(&g, &x, 0.5, 3).unwrap();
    assert_eq!(a.embedding.coordinates, b.embedding.coordinates);
}

#[test]
fn model_rejects_unknown_version() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("metadata.txt"), "format_version=7\n").unwrap();
    let err = load_model(dir.path()).unwrap_err();
    assert!(err.to_string().contains("version 7"), "{err}");
}
