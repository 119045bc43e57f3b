//! End-to-end tests of the `rws` binary: exit codes, file outputs,
//! manifests, and idempotency. Fixtures are built with the library crate
//! and exercised through the real executable.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use rws_core::checkpoint::{Checkpoint, SignatureFile};
use rws_core::signature::{extract_rws, ProjectionMode};
use rws_core::tensor::Tensor;
use rws_core::trainer::{fresh_init, Arch, NetSpec};

fn rws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rws"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A small two-group checkpoint with seeded values.
fn small_ckpt(seed: u64) -> Checkpoint {
    let mut rng = rws_core::rng::SplitMix64::new(seed);
    let mut values = |n: usize| -> Vec<f32> {
        (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect()
    };
    Checkpoint::new(
        vec![
            ("conv1.weight".into(), Tensor::f32(vec![2, 3], values(6)).unwrap()),
            ("conv1.bias".into(), Tensor::f32(vec![2], values(2)).unwrap()),
            ("fc1.weight".into(), Tensor::f32(vec![4], values(4)).unwrap()),
        ],
        vec!["conv1".into(), "fc1".into()],
        BTreeMap::new(),
    )
    .unwrap()
}

fn write_fixture_trio(dir: &Path) -> (String, String, String) {
    let std_model = small_ckpt(1);
    let init = small_ckpt(2);
    let robust = small_ckpt(3);
    let std_path = dir.join("std.ckpt");
    let init_path = dir.join("init.ckpt");
    let robust_path = dir.join("robust.ckpt");
    std_model.write(&std_path).unwrap();
    init.write(&init_path).unwrap();
    robust.write(&robust_path).unwrap();
    (
        std_path.display().to_string(),
        init_path.display().to_string(),
        robust_path.display().to_string(),
    )
}

#[test]
fn no_arguments_prints_usage_and_exits_one() {
    let out = rws(&[]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("usage:"), "{}", stderr_of(&out));
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    let out = rws(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("unknown subcommand"));

    let out = rws(&["eval", "--bogus=1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("unknown flag"));

    let out = rws(&["eval", "--model"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("missing its '=value'"));
}

#[test]
fn missing_input_exits_two_and_garbage_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rws(&[
        "quantize",
        "--sig=/nonexistent/sig.rws",
        "--bits=8",
        &format!("--out={}", dir.path().join("q.rws").display()),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));

    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"not a checkpoint at all").unwrap();
    let out = rws(&[
        "eval",
        &format!("--model={}", garbage.display()),
        "--dataset=synthA",
        "--n=8",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr_of(&out));
}

#[test]
fn extract_writes_signature_and_manifest_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let sig_path = dir.path().join("sig.rws");
    let args = [
        "extract".to_string(),
        format!("--std={std_path}"),
        format!("--init={init_path}"),
        format!("--robust={robust_path}"),
        "--corruption=gaussian_noise:5".to_string(),
        format!("--out={}", sig_path.display()),
    ];
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rws(&arg_refs);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    // The file round-trips as a signature and matches the library result.
    let via_cli = SignatureFile::read(&sig_path).unwrap();
    let expected = extract_rws(
        &Checkpoint::read(Path::new(&std_path)).unwrap(),
        &Checkpoint::read(Path::new(&init_path)).unwrap(),
        &Checkpoint::read(Path::new(&robust_path)).unwrap(),
        ProjectionMode::Vector,
        2,
        Some("gaussian_noise:5"),
    )
    .unwrap();
    assert_eq!(via_cli, expected);

    let manifest_path = dir.path().join("sig.rws.manifest.json");
    let manifest_1 = std::fs::read(&manifest_path).unwrap();
    let sig_1 = std::fs::read(&sig_path).unwrap();

    // Rerunning reproduces both files byte for byte.
    let out = rws(&arg_refs);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&manifest_path).unwrap(), manifest_1);
    assert_eq!(std::fs::read(&sig_path).unwrap(), sig_1);

    // The manifest records the digest of the output it sits beside.
    let parsed: serde_json::Value = serde_json::from_slice(&manifest_1).unwrap();
    assert_eq!(parsed["command"], "extract");
    let recorded = parsed["outputs"][&sig_path.display().to_string()].as_str().unwrap();
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(&sig_1);
    assert_eq!(recorded, hex::encode(h.finalize()));
    assert!(parsed["inputs"][&std_path].is_string());
}

#[test]
fn empty_patch_reproduces_the_model_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.ckpt");
    small_ckpt(9).write(&model_path).unwrap();
    let out_path = dir.path().join("patched.ckpt");
    let out = rws(&[
        "patch",
        &format!("--model={}", model_path.display()),
        &format!("--out={}", out_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_eq!(
        std::fs::read(&model_path).unwrap(),
        std::fs::read(&out_path).unwrap()
    );
}

#[test]
fn patch_applies_signatures_with_alphas_and_recipes() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let sig_path = dir.path().join("sig.rws");
    extract_rws(
        &Checkpoint::read(Path::new(&std_path)).unwrap(),
        &Checkpoint::read(Path::new(&init_path)).unwrap(),
        &Checkpoint::read(Path::new(&robust_path)).unwrap(),
        ProjectionMode::Vector,
        2,
        Some("contrast:3"),
    )
    .unwrap()
    .write(&sig_path)
    .unwrap();

    // --sig with an explicit alpha.
    let flag_out = dir.path().join("via_flag.ckpt");
    let out = rws(&[
        "patch",
        &format!("--model={std_path}"),
        &format!("--sig={}:0.5", sig_path.display()),
        &format!("--out={}", flag_out.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    // The same entry through a recipe file.
    let recipe_path = dir.path().join("recipe.json");
    std::fs::write(
        &recipe_path,
        format!(r#"[{{"path": "{}", "alpha": 0.5}}]"#, sig_path.display()),
    )
    .unwrap();
    let recipe_out = dir.path().join("via_recipe.ckpt");
    let out = rws(&[
        "patch",
        &format!("--model={std_path}"),
        &format!("--recipe={}", recipe_path.display()),
        &format!("--out={}", recipe_out.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_eq!(
        std::fs::read(&flag_out).unwrap(),
        std::fs::read(&recipe_out).unwrap()
    );
    // And the patched model differs from the standard one.
    assert_ne!(
        std::fs::read(&flag_out).unwrap(),
        std::fs::read(Path::new(&std_path)).unwrap()
    );
}

#[test]
fn fingerprint_mismatch_exits_one_with_both_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let sig_path = dir.path().join("sig.rws");
    extract_rws(
        &Checkpoint::read(Path::new(&std_path)).unwrap(),
        &Checkpoint::read(Path::new(&init_path)).unwrap(),
        &Checkpoint::read(Path::new(&robust_path)).unwrap(),
        ProjectionMode::Vector,
        2,
        Some("contrast:3"),
    )
    .unwrap()
    .write(&sig_path)
    .unwrap();

    // A model with a different architecture cannot take this signature.
    let other = Checkpoint::new(
        vec![("fc9.weight".into(), Tensor::f32(vec![3], vec![1.0, 2.0, 3.0]).unwrap())],
        vec!["fc9".into()],
        BTreeMap::new(),
    )
    .unwrap();
    let other_path = dir.path().join("other.ckpt");
    other.write(&other_path).unwrap();

    let out = rws(&[
        "patch",
        &format!("--model={}", other_path.display()),
        &format!("--sig={}", sig_path.display()),
        &format!("--out={}", dir.path().join("x.ckpt").display()),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr_of(&out));
    let err = stderr_of(&out);
    assert!(err.contains("fingerprint"), "{err}");
    let expected_fp = other.arch_fingerprint();
    let found_fp = Checkpoint::read(Path::new(&std_path)).unwrap().arch_fingerprint();
    assert!(err.contains(&expected_fp), "{err}");
    assert!(err.contains(&found_fp), "{err}");
}

#[test]
fn sweep_writes_one_model_per_alpha_with_identity_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let sig_path = dir.path().join("sig.rws");
    extract_rws(
        &Checkpoint::read(Path::new(&std_path)).unwrap(),
        &Checkpoint::read(Path::new(&init_path)).unwrap(),
        &Checkpoint::read(Path::new(&robust_path)).unwrap(),
        ProjectionMode::Vector,
        2,
        Some("contrast:3"),
    )
    .unwrap()
    .write(&sig_path)
    .unwrap();

    let outdir = dir.path().join("sweep");
    let out = rws(&[
        "sweep",
        &format!("--model={std_path}"),
        &format!("--sig={}", sig_path.display()),
        "--alphas=0,0.5,1",
        &format!("--outdir={}", outdir.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(outdir.join("manifest.json").is_file());
    let at_zero = std::fs::read(outdir.join("patched_0.ckpt")).unwrap();
    assert_eq!(at_zero, std::fs::read(Path::new(&std_path)).unwrap());
    let at_one = std::fs::read(outdir.join("patched_1.ckpt")).unwrap();
    assert_ne!(at_one, at_zero);
    assert!(outdir.join("patched_0.5.ckpt").is_file());

    let out = rws(&[
        "sweep",
        &format!("--model={std_path}"),
        &format!("--sig={}", sig_path.display()),
        "--alphas=0,0",
        &format!("--outdir={}", outdir.display()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("twice"));
}

#[test]
fn quantize_and_dequantize_round_trip_within_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let sig_path = dir.path().join("sig.rws");
    extract_rws(
        &Checkpoint::read(Path::new(&std_path)).unwrap(),
        &Checkpoint::read(Path::new(&init_path)).unwrap(),
        &Checkpoint::read(Path::new(&robust_path)).unwrap(),
        ProjectionMode::Vector,
        2,
        Some("shot_noise:4"),
    )
    .unwrap()
    .write(&sig_path)
    .unwrap();

    let q_path = dir.path().join("sig.q8.rws");
    let out = rws(&[
        "quantize",
        &format!("--sig={}", sig_path.display()),
        "--bits=8",
        &format!("--out={}", q_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let d_path = dir.path().join("sig.dq.rws");
    let out = rws(&[
        "dequantize",
        &format!("--sig={}", q_path.display()),
        &format!("--out={}", d_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let original = SignatureFile::read(&sig_path).unwrap();
    let decoded = SignatureFile::read(&d_path).unwrap();
    assert_eq!(decoded.quant_bits(), 0);
    for ((name, t), (dname, dt)) in original.payload_tensors().zip(decoded.payload_tensors()) {
        assert_eq!(name, dname);
        let q = SignatureFile::read(&q_path).unwrap();
        let scale = q
            .checkpoint()
            .get(&format!("{name}#scale"))
            .map(|s| f64::from(s.data()[0]))
            .unwrap();
        for (a, b) in t.data().iter().zip(dt.data()) {
            assert!((f64::from(*a) - f64::from(*b)).abs() <= scale / 2.0 + 1e-12);
        }
    }

    let out = rws(&[
        "quantize",
        &format!("--sig={}", sig_path.display()),
        "--bits=9",
        &format!("--out={}", q_path.display()),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr_of(&out));
}

#[test]
fn reports_render_their_csv_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let (std_path, init_path, robust_path) = write_fixture_trio(dir.path());
    let std_model = Checkpoint::read(Path::new(&std_path)).unwrap();
    let init = Checkpoint::read(Path::new(&init_path)).unwrap();
    let robust = Checkpoint::read(Path::new(&robust_path)).unwrap();
    let sig_a = dir.path().join("a.rws");
    let sig_b = dir.path().join("b.rws");
    extract_rws(&std_model, &init, &robust, ProjectionMode::Vector, 2, Some("gaussian_noise:5"))
        .unwrap()
        .write(&sig_a)
        .unwrap();
    // A second, different signature: swap the robust/init roles.
    extract_rws(&std_model, &robust, &init, ProjectionMode::Vector, 2, Some("contrast:5"))
        .unwrap()
        .write(&sig_b)
        .unwrap();

    let cases = [
        (
            vec![
                "report".to_string(),
                "--kind=norms".to_string(),
                format!("--std={std_path}"),
                format!("--init={init_path}"),
                format!("--sig={}", sig_a.display()),
                format!("--sig={}", sig_b.display()),
            ],
            ",rws_over_std,",
        ),
        (
            vec![
                "report".to_string(),
                "--kind=layer-cosine".to_string(),
                "--layer=conv1".to_string(),
                format!("--sig={}", sig_a.display()),
                format!("--sig={}", sig_b.display()),
            ],
            ",gaussian_noise:5,contrast:5",
        ),
        (
            vec![
                "report".to_string(),
                "--kind=relationship".to_string(),
                format!("--sig={}", sig_a.display()),
                format!("--sig={}", sig_b.display()),
            ],
            ",gaussian_noise:5,contrast:5",
        ),
        (
            vec![
                "report".to_string(),
                "--kind=cross-dataset".to_string(),
                format!("--sig-a={}", sig_a.display()),
                format!("--sig-a={}", sig_b.display()),
                format!("--sig-b={}", sig_a.display()),
                format!("--sig-b={}", sig_b.display()),
            ],
            ",same_corruption,cross_corruption_mean",
        ),
        (
            vec![
                "report".to_string(),
                "--kind=storage".to_string(),
                format!("--std={std_path}"),
                format!("--sig={}", sig_a.display()),
            ],
            ",bytes,ratio_vs_standard",
        ),
    ];
    for (args, expected_head) in cases {
        let out_path = dir.path().join("report.csv");
        let mut full = args.clone();
        full.push(format!("--out={}", out_path.display()));
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        let out = rws(&refs);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr_of(&out));
        let csv = std::fs::read_to_string(&out_path).unwrap();
        assert!(csv.starts_with(expected_head), "{args:?} produced:\n{csv}");
        assert!(csv.ends_with('\n'));
    }

    let out = rws(&["report", "--kind=nonsense", "--out=/tmp/x.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("unknown report kind"));
}

#[test]
fn transfer_report_scores_models_against_the_standard() {
    let dir = tempfile::tempdir().unwrap();
    let std_path = dir.path().join("std.ckpt");
    let candidate_path = dir.path().join("candidate.ckpt");
    fresh_init(&NetSpec::mlp(), 41).unwrap().write(&std_path).unwrap();
    fresh_init(&NetSpec::mlp(), 42).unwrap().write(&candidate_path).unwrap();

    let out_path = dir.path().join("transfer.csv");
    let out = rws(&[
        "report",
        "--kind=transfer",
        &format!("--std={}", std_path.display()),
        &format!("--model={}", candidate_path.display()),
        "--dataset=synthA",
        "--n=24",
        "--severity=2",
        "--corruptions=gaussian_noise,contrast",
        &format!("--out={}", out_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), ",gaussian_noise,contrast");
    let row = lines.next().unwrap();
    assert!(row.starts_with("candidate,"), "{csv}");
    // The standard model against itself would be all zeros; a different
    // model still produces finite percentage-point gains.
    for cell in row.split(',').skip(1) {
        let v: f64 = cell.parse().unwrap();
        assert!((-100.0..=100.0).contains(&v), "{csv}");
    }
}

#[test]
fn train_eval_and_zero_epoch_handoff() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{"epochs": 1, "train_n": 48, "batch_size": 16, "seed": 7}"#,
    )
    .unwrap();
    let model_path = dir.path().join("model.ckpt");
    let out = rws(&[
        "train",
        "--dataset=synthA",
        "--arch=mlp",
        &format!("--config={}", config_path.display()),
        &format!("--out={}", model_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("epoch 1/1"));

    let out = rws(&[
        "eval",
        &format!("--model={}", model_path.display()),
        "--dataset=synthA",
        "--n=40",
        "--corruption=brightness:2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("eval emits JSON on stdout");
    let acc = parsed["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(parsed["corruption"], "brightness:2");
    assert_eq!(parsed["n"], 40);

    // Zero epochs with an init hands the init back bit-exactly.
    let init_path = dir.path().join("fresh.ckpt");
    fresh_init(&NetSpec::mlp(), 123).unwrap().write(&init_path).unwrap();
    std::fs::write(&config_path, r#"{"epochs": 0}"#).unwrap();
    let out_path = dir.path().join("handed_back.ckpt");
    let out = rws(&[
        "train",
        "--dataset=synthA",
        "--arch=mlp",
        &format!("--init={}", init_path.display()),
        &format!("--config={}", config_path.display()),
        &format!("--out={}", out_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert_eq!(
        std::fs::read(&init_path).unwrap(),
        std::fs::read(&out_path).unwrap()
    );

    let out = rws(&[
        "eval",
        &format!("--model={}", model_path.display()),
        "--dataset=synthA",
        "--corruption=not_a_kind:3",
    ]);
    assert_eq!(code(&out), 1, "{}", stderr_of(&out));
}

/// Hand-written IDX fixtures: 6 images of 8x8, labels cycling 0..3.
fn write_idx_pair(dir: &Path) -> (String, String) {
    let (n, side) = (6u32, 8u32);
    let mut images = Vec::new();
    images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    images.extend_from_slice(&n.to_be_bytes());
    images.extend_from_slice(&side.to_be_bytes());
    images.extend_from_slice(&side.to_be_bytes());
    for i in 0..(n * side * side) {
        images.push((i % 251) as u8);
    }
    let mut labels = Vec::new();
    labels.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    for i in 0..n {
        labels.push((i % 3) as u8);
    }
    let images_path = dir.join("images.idx");
    let labels_path = dir.join("labels.idx");
    std::fs::write(&images_path, images).unwrap();
    std::fs::write(&labels_path, labels).unwrap();
    (images_path.display().to_string(), labels_path.display().to_string())
}

#[test]
fn idx_datasets_flow_through_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (images_path, labels_path) = write_idx_pair(dir.path());
    let dataset = format!("idx:{images_path},{labels_path}");
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, r#"{"epochs": 1, "batch_size": 3, "seed": 4}"#).unwrap();
    let model_path = dir.path().join("idx_model.ckpt");
    let out = rws(&[
        "train",
        &format!("--dataset={dataset}"),
        "--arch=mlp",
        &format!("--config={}", config_path.display()),
        &format!("--out={}", model_path.display()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let model = Checkpoint::read(&model_path).unwrap();
    assert_eq!(model.metadata["train_dataset"], dataset);
    assert_eq!(model.metadata["train_n"], "6");

    let out = rws(&[
        "eval",
        &format!("--model={}", model_path.display()),
        &format!("--dataset={dataset}"),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["n"], 6);
}

#[test]
fn dump_features_writes_stable_pgms() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("conv.ckpt");
    fresh_init(&NetSpec::new(Arch::Convnet, 12, 12, 5), 31)
        .unwrap()
        .write(&model_path)
        .unwrap();
    let input_path = dir.path().join("input.pgm");
    let bytes: Vec<u8> = (0..144).map(|i| (i * 7 % 256) as u8).collect();
    rws_core::analyzer::write_pgm(&input_path, 12, 12, &bytes).unwrap();

    let outdir = dir.path().join("maps");
    let args = [
        "dump-features".to_string(),
        format!("--model={}", model_path.display()),
        format!("--input={}", input_path.display()),
        "--layers=conv1,conv2".to_string(),
        format!("--outdir={}", outdir.display()),
    ];
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rws(&refs);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let count = std::fs::read_dir(&outdir)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().map(|x| x == "pgm").unwrap_or(false)
        })
        .count();
    assert_eq!(count, 16 + 20);
    let first = std::fs::read(outdir.join("conv1_0.pgm")).unwrap();
    let manifest_1 = std::fs::read(outdir.join("manifest.json")).unwrap();

    let out = rws(&refs);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(outdir.join("conv1_0.pgm")).unwrap(), first);
    assert_eq!(std::fs::read(outdir.join("manifest.json")).unwrap(), manifest_1);

    // A dense layer is not dumpable.
    let args = [
        "dump-features".to_string(),
        format!("--model={}", model_path.display()),
        format!("--input={}", input_path.display()),
        "--layers=fc1".to_string(),
        format!("--outdir={}", outdir.display()),
    ];
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = rws(&refs);
    assert_eq!(code(&out), 1, "{}", stderr_of(&out));
}
