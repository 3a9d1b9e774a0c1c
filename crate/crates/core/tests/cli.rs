use std::path::Path;
use std::process::{Command, Output};

use m2m::cli::RunManifest;

fn m2m(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_m2m"))
        .args(args)
        .env_remove("M2M_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = m2m(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    serde_json::from_str(stderr.trim()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: [&str; 8] = [
    "--epochs",
    "2",
    "--steps-per-epoch",
    "1",
    "--k",
    "2",
    "--precision",
    "f64",
];

/// Phantom plus its noisy version in `dir`.
fn prepare(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let clean = dir.join("clean.pgm");
    let noisy = dir.join("noisy.pgm");
    ok(&["phantom", "--output", s(&clean), "--size", "24"]);
    ok(&[
        "add-noise",
        "--input",
        s(&clean),
        "--output",
        s(&noisy),
        "--ell",
        "3",
        "--sigma",
        "0.1",
        "--seed",
        "4",
    ]);
    (clean, noisy)
}

#[test]
fn full_pipeline_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, noisy) = prepare(dir.path());

    let pairs = dir.path().join("pairs");
    let out = ok(&[
        "sample",
        "--input",
        s(&noisy),
        "--out-dir",
        s(&pairs),
        "--seed",
        "1",
    ]);
    assert!(out.contains("wrote"));
    for pos in ["tl", "c", "br"] {
        assert!(pairs.join(format!("x1_{pos}.pgm")).is_file(), "{pos}");
        assert!(pairs.join(format!("x2_{pos}.pgm")).is_file(), "{pos}");
    }

    let denoised = dir.path().join("denoised.pgm");
    let mut args = vec!["denoise", "--input", s(&noisy), "--output", s(&denoised)];
    args.extend(TINY);
    ok(&args);
    let manifest_path = dir.path().join("denoised.pgm.json");
    let manifest = RunManifest::load(&manifest_path).unwrap();
    assert_eq!(manifest.invoked_as, "denoise");
    assert!(manifest.loss_trace.is_some());

    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--ref",
        s(&clean),
        "--test",
        s(&denoised),
    ]))
    .unwrap();
    assert!(report["psnr_db"].as_f64().unwrap().is_finite(), "{report}");
    assert!(report["ssim"].as_f64().unwrap() <= 1.0, "{report}");

    let replayed = ok(&["replay", "--manifest", s(&manifest_path)]);
    assert!(replayed.contains("identical"), "{replayed}");
}

#[test]
fn ablate_records_its_name_and_switch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, noisy) = prepare(dir.path());
    let out = dir.path().join("ablated.pgm");
    let mut args = vec![
        "ablate",
        "--variant",
        "no-ra",
        "--input",
        s(&noisy),
        "--output",
        s(&out),
    ];
    args.extend(TINY);
    ok(&args);
    let manifest = RunManifest::load(&dir.path().join("ablated.pgm.json")).unwrap();
    assert_eq!(manifest.invoked_as, "ablate");
    let m2m::cli::Invocation::Denoise { train, .. } = manifest.invocation else {
        panic!("ablate runs a denoise");
    };
    assert!(!train.sampling.random_assignment);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let (_, noisy) = prepare(dir.path());
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "# tiny run\nepochs = 2\nsteps_per_epoch = 1\nk = 2\nlr = 0.002\nseed = 9\n",
    )
    .unwrap();
    let out = dir.path().join("d.pgm");
    ok(&[
        "denoise",
        "--input",
        s(&noisy),
        "--output",
        s(&out),
        "--config",
        s(&config),
        "--seed",
        "3",
        "--precision",
        "f64",
    ]);
    let manifest = RunManifest::load(&dir.path().join("d.pgm.json")).unwrap();
    let m2m::cli::Invocation::Denoise { train, .. } = manifest.invocation else {
        panic!("denoise manifest");
    };
    assert_eq!(train.seed, 3);
    assert_eq!(train.epochs, 2);
    assert_eq!(train.adam.learning_rate, 0.002);
}

#[test]
fn job_count_does_not_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let (_, noisy) = prepare(dir.path());
    let mut outputs = Vec::new();
    for jobs in ["1", "2"] {
        let out = dir.path().join(format!("j{jobs}.pgm"));
        let mut args = vec![
            "--jobs",
            jobs,
            "denoise",
            "--input",
            s(&noisy),
            "--output",
            s(&out),
        ];
        args.extend(TINY);
        ok(&args);
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn benchmark_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    std::fs::create_dir(&clean_dir).unwrap();
    ok(&[
        "phantom",
        "--output",
        s(&clean_dir.join("a.pgm")),
        "--size",
        "18",
    ]);
    // the phantom's manifest sits next to it and must not be picked up
    let csv = dir.path().join("bench.csv");
    let mut args = vec![
        "benchmark",
        "--clean-dir",
        s(&clean_dir),
        "--ell-list",
        "1,3",
        "--sigma-list",
        "0.1",
        "--methods",
        "noisy,zsn2n",
        "--seeds",
        "0,1",
        "--out",
        s(&csv),
    ];
    args.extend(TINY);
    ok(&args);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2, "{text}");
}

#[test]
fn errors_are_single_line_json() {
    let out = m2m(&["denoise", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pgm");
    let out = m2m(&[
        "denoise",
        "--input",
        s(&missing),
        "--output",
        s(&dir.path().join("o.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "io");

    let (_, noisy) = prepare(dir.path());
    let out = m2m(&[
        "denoise",
        "--input",
        s(&noisy),
        "--output",
        "o.pgm",
        "--epochs",
        "many",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"], "invalid-argument");
    assert!(err["message"].as_str().unwrap().contains("epochs"), "{err}");

    let out = m2m(&[
        "--jobs",
        "0",
        "phantom",
        "--output",
        s(&dir.path().join("p.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = m2m(&[
        "add-noise",
        "--input",
        s(&noisy),
        "--output",
        "n.pgm",
        "--ell",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new("n.pgm").exists());

    assert!(m2m(&["--help"]).status.success());
}
