use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use tempfile::TempDir;

use spsu_cli::commands::{
    cmd_eval, cmd_generate, cmd_run, load_scene, run_seed, seed_dir_name, ABUNDANCES, CUBE,
    ENDMEMBERS, LABELS, PAN, TIMING,
};
use spsu_cli::formats::{
    decode_bin, decode_csv, decode_pgm, encode_bin, encode_csv, encode_pgm, read_matrix,
    write_matrix,
};
use spsu_cli::{RunConfig, Seeds};
use spsu_core::metrics::{permute_columns, permute_rows};
use spsu_core::{Matrix, Variant};

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    for o in [
        "height=20",
        "width=18",
        "bands=24",
        "r1=3",
        "r2=4",
        "k=5",
        "patch=5",
        "potts_sweeps=30",
        "max_iters=60",
    ] {
        cfg.apply_override(o).unwrap();
    }
    cfg
}

fn spsu() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spsu"))
}

fn file_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn finite_or_special() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => any::<f64>(),
        1 => Just(-0.0),
        1 => Just(f64::INFINITY),
        1 => Just(f64::MIN_POSITIVE / 4.0),
    ]
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (0usize..6, 0usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(finite_or_special(), r * c)
            .prop_map(move |v| Matrix::from_shape_vec((r, c), v).unwrap())
    })
}

fn same_bits(a: &Matrix, b: &Matrix) -> bool {
    a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #[test]
    fn bin_round_trip_is_bit_exact(m in matrix_strategy()) {
        let back = decode_bin(&encode_bin(&m).unwrap()).unwrap();
        prop_assert!(same_bits(&m, &back));
    }

    #[test]
    fn csv_round_trip_is_bit_exact(m in matrix_strategy()) {
        let back = decode_csv(&encode_csv(&m)).unwrap();
        prop_assert!(same_bits(&m, &back));
    }

    #[test]
    fn pgm_round_trip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..w * h).map(|i| (seed.rotate_left(i as u32) & 0xff) as u8).collect();
        let back = decode_pgm(&encode_pgm(w, h, &pixels).unwrap()).unwrap();
        prop_assert_eq!(back, (w, h, pixels));
    }
}

#[test]
fn nan_survives_both_formats() {
    let m = Matrix::from_shape_vec((1, 2), vec![f64::NAN, 1.5]).unwrap();
    let bin = decode_bin(&encode_bin(&m).unwrap()).unwrap();
    assert_eq!(bin[[0, 0]].to_bits(), f64::NAN.to_bits());
    let csv = decode_csv(&encode_csv(&m)).unwrap();
    assert!(csv[[0, 0]].is_nan() && csv[[0, 1]] == 1.5);
}

#[test]
fn files_pick_format_by_extension() {
    let dir = TempDir::new().unwrap();
    let m = Matrix::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 / 7.0);
    for name in ["m.spsu", "m.csv"] {
        let path = dir.path().join(name);
        write_matrix(&path, &m).unwrap();
        assert!(same_bits(&read_matrix(&path).unwrap(), &m));
    }
    assert!(fs::read_to_string(dir.path().join("m.csv")).unwrap().starts_with("3,4\n"));
    assert!(fs::read(dir.path().join("m.spsu")).unwrap().starts_with(b"SPSU"));
}

#[test]
fn endmember_file_replaces_the_library() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    let lib = Matrix::from_shape_fn((cfg.bands, cfg.r1), |(b, r)| 0.1 + 0.02 * b as f64 + 0.1 * r as f64);
    let path = dir.path().join("lib.csv");
    write_matrix(&path, &lib).unwrap();
    cfg.endmember_file = Some(path);
    cmd_generate(&cfg, &dir.path().join("scene"), &Seeds::Single(1)).unwrap();
    assert_eq!(read_matrix(&dir.path().join("scene").join(ENDMEMBERS)).unwrap(), lib);

    cfg.r1 = 4;
    let err = cmd_generate(&cfg, &dir.path().join("bad"), &Seeds::Single(1)).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn generated_files_match_config_dims() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config();
    cmd_generate(&cfg, dir.path(), &Seeds::Single(3)).unwrap();
    let p = cfg.height * cfg.width;
    assert_eq!(read_matrix(&dir.path().join(CUBE)).unwrap().dim(), (cfg.bands, p));
    assert_eq!(read_matrix(&dir.path().join(PAN)).unwrap().dim(), (cfg.height, cfg.width));
    assert_eq!(read_matrix(&dir.path().join(ENDMEMBERS)).unwrap().dim(), (cfg.bands, cfg.r1));
    assert_eq!(read_matrix(&dir.path().join(ABUNDANCES)).unwrap().dim(), (cfg.r1, p));
    assert_eq!(read_matrix(&dir.path().join(LABELS)).unwrap().dim(), (cfg.height, cfg.width));
    let (w, h, _) = decode_pgm(&fs::read(dir.path().join("pan.pgm")).unwrap()).unwrap();
    assert_eq!((w, h), (cfg.width, cfg.height));
}

#[test]
fn generation_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = small_config();
    let seeds = Seeds::parse_range("4..6").unwrap();
    cmd_generate(&cfg, a.path(), &seeds).unwrap();
    cmd_generate(&cfg, b.path(), &seeds).unwrap();
    assert_eq!(file_bytes(a.path()), file_bytes(b.path()));
    assert!(a.path().join(seed_dir_name(5)).join(CUBE).exists());
}

#[test]
fn single_region_gives_constant_labels() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg.apply_override("regions=1").unwrap();
    cmd_generate(&cfg, dir.path(), &Seeds::Single(0)).unwrap();
    let labels = read_matrix(&dir.path().join(LABELS)).unwrap();
    assert!(labels.iter().all(|&l| l == 0.0));
}

#[test]
fn seed_ranges() {
    assert_eq!(Seeds::parse_range("2..5").unwrap().list(), vec![2, 3, 4]);
    assert_eq!(Seeds::parse_range("2..=5").unwrap().list(), vec![2, 3, 4, 5]);
    assert!(Seeds::parse_range("5..5").is_err());
    assert!(Seeds::parse_range("a..b").is_err());
}

#[test]
fn runs_are_byte_identical_apart_from_timing() {
    let data = TempDir::new().unwrap();
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = small_config();
    let seeds = Seeds::parse_range("0..2").unwrap();
    cmd_generate(&cfg, data.path(), &seeds).unwrap();
    cmd_run(&cfg, data.path(), a.path(), &seeds).unwrap();
    cmd_run(&cfg, data.path(), b.path(), &seeds).unwrap();
    let strip = |v: Vec<(PathBuf, Vec<u8>)>| -> Vec<(PathBuf, Vec<u8>)> {
        v.into_iter().filter(|(p, _)| p != Path::new(TIMING)).collect()
    };
    let (fa, fb) = (strip(file_bytes(a.path())), strip(file_bytes(b.path())));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);
}

#[test]
fn every_method_runs() {
    let data = TempDir::new().unwrap();
    let cfg = small_config();
    cmd_generate(&cfg, data.path(), &Seeds::Single(1)).unwrap();
    let scene = load_scene(data.path()).unwrap();
    for method in Variant::ALL {
        let mut c = cfg.clone();
        c.method = method;
        let out = run_seed(&c, &scene, 1).unwrap();
        assert!(out.row.asam.unwrap().is_finite());
        assert_eq!(out.state.m.dim(), (cfg.bands, cfg.r1));
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }
}

#[test]
fn nmf_matches_sp2u_without_coupling() {
    let data = TempDir::new().unwrap();
    let mut cfg = small_config();
    for o in ["lambda1=0", "lambda2=0", "lambda_z=0", "max_iters=40"] {
        cfg.apply_override(o).unwrap();
    }
    cmd_generate(&cfg, data.path(), &Seeds::Single(2)).unwrap();
    let scene = load_scene(data.path()).unwrap();
    let mut nmf = cfg.clone();
    nmf.method = Variant::Nmf;
    let mut sp2u = cfg.clone();
    sp2u.method = Variant::Sp2u;
    let a = run_seed(&nmf, &scene, 2).unwrap();
    let b = run_seed(&sp2u, &scene, 2).unwrap();
    assert_eq!(a.trace.len(), b.trace.len());
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
    assert_eq!(a.state.m, b.state.m);
}

fn truth_as_result(truth: &Path, result: &Path, perm: &[usize]) {
    fs::create_dir_all(result).unwrap();
    let m = read_matrix(&truth.join(ENDMEMBERS)).unwrap();
    let a = read_matrix(&truth.join(ABUNDANCES)).unwrap();
    write_matrix(&result.join("M.spsu"), &permute_columns(&m, perm)).unwrap();
    write_matrix(&result.join("A.spsu"), &permute_rows(&a, perm)).unwrap();
}

#[test]
fn eval_of_truth_is_zero() {
    let truth = TempDir::new().unwrap();
    let result = TempDir::new().unwrap();
    let cfg = small_config();
    cmd_generate(&cfg, truth.path(), &Seeds::Single(0)).unwrap();
    for perm in [[0, 1, 2], [2, 0, 1]] {
        truth_as_result(truth.path(), result.path(), &perm);
        let rows = cmd_eval(truth.path(), result.path()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].asam < 1e-7);
        assert!(rows[0].rmse == 0.0);
        assert!(rows[0].re < 1e-15);
    }
}

#[test]
fn eval_aggregate_is_row_mean() {
    let truth = TempDir::new().unwrap();
    let result = TempDir::new().unwrap();
    let cfg = small_config();
    let seeds = Seeds::parse_range("0..10").unwrap();
    cmd_generate(&cfg, truth.path(), &seeds).unwrap();
    for s in seeds.list() {
        let name = seed_dir_name(s);
        // Pair each result with the next scene's truth to get non-zero metrics.
        let other = truth.path().join(seed_dir_name((s + 1) % 10));
        truth_as_result(&other, &result.path().join(&name), &[0, 1, 2]);
    }
    let rows = cmd_eval(truth.path(), result.path()).unwrap();
    assert_eq!(rows.len(), 10);
    let csv = fs::read_to_string(result.path().join("eval.csv")).unwrap();
    let mean_line = csv.lines().find(|l| l.starts_with("mean,")).unwrap();
    let fields: Vec<f64> = mean_line.split(',').skip(1).take(3).map(|f| f.parse().unwrap()).collect();
    let by_hand = |f: fn(&spsu_cli::commands::EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / 10.0;
    assert!((fields[0] - by_hand(|r| r.asam)).abs() < 1e-12);
    assert!((fields[1] - by_hand(|r| r.re)).abs() < 1e-12);
    assert!((fields[2] - by_hand(|r| r.rmse)).abs() < 1e-12);
    assert!(fields[0] > 0.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let status = |cmd: &mut Command| cmd.output().unwrap().status.code().unwrap();

    let gen = |out: &Path| {
        let mut c = spsu();
        c.args(["generate", "--out"]).arg(out);
        for o in ["height=16", "width=16", "bands=20", "r1=3", "potts_sweeps=10"] {
            c.args(["--override", o]);
        }
        c
    };
    assert_eq!(status(&mut gen(&root.join("data"))), 0);

    let mut unknown_method = spsu();
    unknown_method.args(["run", "--method", "pca", "--data"]).arg(root.join("data"));
    unknown_method.arg("--out").arg(root.join("res"));
    assert_eq!(status(&mut unknown_method), 2);

    let mut bad_flag = spsu();
    bad_flag.args(["generate", "--frobnicate"]);
    assert_eq!(status(&mut bad_flag), 2);

    let mut bad_key = gen(&root.join("other"));
    bad_key.args(["--override", "colour=red"]);
    assert_eq!(status(&mut bad_key), 2);

    let mut missing_data = spsu();
    missing_data.args(["run", "--method", "nmf", "--data"]).arg(root.join("nowhere"));
    missing_data.arg("--out").arg(root.join("res"));
    assert_eq!(status(&mut missing_data), 3);

    // A wrongly shaped estimate is a data error.
    let res = root.join("shape");
    fs::create_dir_all(&res).unwrap();
    write_matrix(&res.join("M.spsu"), &Matrix::ones((20, 2))).unwrap();
    write_matrix(&res.join("A.spsu"), &Matrix::ones((2, 256))).unwrap();
    let mut mismatch = spsu();
    mismatch.args(["eval", "--truth"]).arg(root.join("data"));
    mismatch.arg("--result").arg(&res);
    assert_eq!(status(&mut mismatch), 3);

    // Non-finite data is a data error too.
    let mut cube = read_matrix(&root.join("data").join(CUBE)).unwrap();
    cube[[0, 0]] = f64::NAN;
    write_matrix(&root.join("data").join(CUBE), &cube).unwrap();
    let mut nan_run = spsu();
    nan_run.args(["run", "--method", "nmf", "--override", "r1=3", "--data"]).arg(root.join("data"));
    nan_run.arg("--out").arg(root.join("res"));
    assert_eq!(status(&mut nan_run), 3);

    let mut config = spsu();
    let cfg_path = root.join("bad.cfg");
    fs::write(&cfg_path, "height = tall\n").unwrap();
    config.args(["generate", "--config"]).arg(&cfg_path).arg("--out").arg(root.join("x"));
    assert_eq!(status(&mut config), 2);
}

#[test]
fn binary_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let root = dir.path();
    let cfg_path = root.join("run.cfg");
    fs::write(&cfg_path, small_config().to_text()).unwrap();
    let run = |args: &[&str]| {
        let out = spsu().args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let c = cfg_path.to_str().unwrap();
    let data = root.join("data");
    let res = root.join("res");
    let (d, r) = (data.to_str().unwrap(), res.to_str().unwrap());
    run(&["generate", "--config", c, "--seeds", "0..2", "--out", d]);
    run(&["run", "--config", c, "--method", "cspu", "--seeds", "0..2", "--data", d, "--out", r]);
    run(&["eval", "--truth", d, "--result", r]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["method"], "cspu");
    assert_eq!(manifest["rows"].as_array().unwrap().len(), 2);
    let rows = manifest["rows"].as_array().unwrap();
    let mean: f64 = rows.iter().map(|r| r["re"].as_f64().unwrap()).sum::<f64>() / 2.0;
    assert!((manifest["aggregate"]["mean"]["re"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(res.join("seed-1").join("clusters.pgm").exists());
    assert!(res.join("eval.csv").exists());
}
