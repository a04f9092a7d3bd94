use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvvnet_core::manifest::{GridSpec, Manifest};
use cvvnet_core::{Condition, ViewGroup};
use cvvnet_eval::{write_embeddings, EvalRecord};
use cvvnet_model::BackboneConfig;
use cvvnet_train::{checkpoint_dir, TrainConfig};

const STEPS: usize = 3;

fn cvvnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvvnet"))
        .args(args)
        .env_remove(cvvnet_cli::OUT_DIR_ENV)
        .output()
        .expect("spawn cvvnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = cvvnet(args);
    assert_eq!(o.status.code(), Some(0), "cvvnet {args:?} failed:\n{}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_manifest() -> Manifest {
    let grid = GridSpec {
        identities: 2,
        first_identity_seed: 5,
        view_angles: vec![(ViewGroup::Low, vec![0.0]), (ViewGroup::High, vec![70.0])],
        conditions: vec![Condition::NM, Condition::BG],
        repeats: 2,
        n_frames: 6,
        seed: 1,
    };
    Manifest::grid(&grid).unwrap()
}

fn tiny_train_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.backbone = BackboneConfig { stage_channels: vec![2, 4], n_heads: 1, embed_dim: 4, num_classes: 2, ..BackboneConfig::toy() };
    c.p = 2;
    c.k = 2;
    c.clip_length = 3;
    c.schedule = c.schedule.with_total_steps(STEPS);
    c.checkpoint_every = 0;
    c
}

/// Renders the tiny dataset and trains on it; returns `(data, run)` directories.
fn trained_run(root: &Path) -> (PathBuf, PathBuf) {
    let manifest = root.join("manifest.txt");
    tiny_manifest().write(&manifest).unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", p(&manifest), "--out", p(&data)]);
    let cfg = root.join("train.config");
    fs::write(&cfg, tiny_train_config().render()).unwrap();
    let run = root.join("run");
    let out = ok(&["train", "--config", p(&cfg), "--seed", "4", "--data", p(&data), "--out", p(&run)]);
    assert!(out.contains(&format!("trained to step {STEPS}")), "{out}");
    (data, run)
}

fn duplicate_gallery(path: &Path) {
    let mut records = Vec::new();
    for id in 0..4u64 {
        let emb: Vec<f64> = (0..6).map(|i| ((id * 7 + i) % 5) as f64 - id as f64).collect();
        for (k, view) in [ViewGroup::Low, ViewGroup::High].into_iter().enumerate() {
            for rep in 0..2 {
                let seq = format!("id{id}-v{k}-r{rep}");
                records.push(EvalRecord::new(emb.clone(), 2, 3, id, Some(view), Some(Condition::NM), seq));
            }
        }
    }
    write_embeddings(path, &records, "pre-neck").unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    assert!(ok(&["--help"]).contains("ablate"));
    assert!(ok(&["spectrum", "--help"]).contains("--layer"));
}

#[test]
fn parse_errors_exit_one_and_name_the_flag() {
    let o = cvvnet(&["eval", "--bogus", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--bogus"), "{err}");
    assert!(err.contains("Usage: cvvnet eval"), "{err}");

    let o = cvvnet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let o = cvvnet(&["train", "--seed", "x", "--data", "d"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn semantic_usage_errors_exit_one_with_the_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("e.bin");
    duplicate_gallery(&emb);
    let o = cvvnet(&["eval", "--embeddings", p(&emb), "--protocol", "cmc", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--protocol") && err.contains("cmc"), "{err}");
    assert!(err.contains("Usage: cvvnet eval"), "{err}");

    let o = cvvnet(&["eval", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--embeddings is required"));

    let cfg = dir.path().join("bad.kv");
    fs::write(&cfg, "embeddings=x\ncolour=red\n").unwrap();
    let o = cvvnet(&["eval", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.bin");
    let o = cvvnet(&["eval", "--embeddings", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = cvvnet(&["heatmap", "--layer", "s7.b7", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("s7.b7") && err.contains("msaga.1"), "{err}");

    let o = cvvnet(&["train", "--data", p(&dir.path().join("absent")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_on_duplicate_gallery_prints_full_rank1() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("dup.bin");
    duplicate_gallery(&emb);
    let out_dir = dir.path().join("report");
    let text = ok(&["eval", "--embeddings", p(&emb), "--out", p(&out_dir)]);
    assert!(text.starts_with("rank-1 = 100.0\n"), "{text}");
    let kv = fs::read_to_string(out_dir.join("report.kv")).unwrap();
    assert!(kv.contains("rank1=100"), "{kv}");
    assert_eq!(fs::read_to_string(out_dir.join("report.txt")).unwrap(), text.split_once('\n').unwrap().1);

    let flat = ok(&["eval", "--embeddings", p(&emb), "--protocol", "flat", "--out", p(&out_dir)]);
    assert!(flat.starts_with("rank-1 = 100.0\n"));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("dup.bin");
    duplicate_gallery(&emb);
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_cvvnet"))
        .args(["eval", "--embeddings", p(&emb)])
        .env(cvvnet_cli::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(target.join("report.txt").is_file());

    let flag = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_cvvnet"))
        .args(["eval", "--embeddings", p(&emb), "--out", p(&flag)])
        .env(cvvnet_cli::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag.join("report.txt").is_file());
}

#[test]
fn synth_regenerates_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.txt");
    tiny_manifest().write(&manifest).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--config", p(&manifest), "--out", p(&a), "--format", "pgm"]);
    ok(&["synth", "--config", p(&manifest), "--out", p(&b), "--format", "pgm"]);
    let mut count = 0;
    for entry in walk(&a) {
        let rel = entry.strip_prefix(&a).unwrap();
        assert_eq!(fs::read(&entry).unwrap(), fs::read(b.join(rel)).unwrap(), "{}", rel.display());
        count += 1;
    }
    assert!(count > tiny_manifest().entries.len() * 6);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_runs_end_to_end_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained_run(dir.path());
    let ckpt = checkpoint_dir(&run, STEPS);
    assert!(ckpt.is_dir());

    let mut artifacts = Vec::new();
    for round in ["first", "second"] {
        let out = dir.path().join(round);
        ok(&["embed", "--data", p(&data), "--checkpoint", p(&ckpt), "--out", p(&out)]);
        let report = ok(&["eval", "--embeddings", p(&out.join("embeddings.bin")), "--out", p(&out)]);
        assert!(report.starts_with("rank-1 = "));
        assert!(report.contains("Low") && report.contains("High"));

        let spec = ok(&[
            "spectrum", "--layer", "msaga.1", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&out),
        ]);
        assert!(spec.contains("spectrum_msaga.1.png"), "{spec}");
        let csv = fs::read_to_string(out.join("spectrum_msaga.1.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("radius,magnitude"));
        let rows: Vec<(usize, f64)> = lines
            .map(|l| {
                let (r, m) = l.split_once(',').unwrap();
                (r.parse().unwrap(), m.parse().unwrap())
            })
            .collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().enumerate().all(|(i, &(r, m))| r == i && m >= 0.0 && m.is_finite()));
        let png = image::open(out.join("spectrum_msaga.1.png")).unwrap().to_luma8();
        assert!(png.width() > 0 && png.height() > 0);

        ok(&["heatmap", "--checkpoint", p(&ckpt), "--data", p(&data), "--sequence", "5", "--out", p(&out)]);
        let heat = image::open(out.join("heatmap_msaga.1.png")).unwrap().to_rgb8();
        assert_eq!(heat.dimensions(), (44, 64));
        artifacts.push((
            fs::read(out.join("embeddings.bin")).unwrap(),
            report,
            csv,
            png.into_raw(),
            heat.into_raw(),
        ));
    }
    assert!(artifacts[0] == artifacts[1], "artifacts differ between identical runs");
}

#[test]
fn training_twice_with_the_same_seed_gives_identical_checkpoints() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (_, run_a) = trained_run(a.path());
    let (_, run_b) = trained_run(b.path());
    let (ca, cb) = (checkpoint_dir(&run_a, STEPS), checkpoint_dir(&run_b, STEPS));
    for f in walk(&ca) {
        let rel = f.strip_prefix(&ca).unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(cb.join(rel)).unwrap(), "{}", rel.display());
    }
    assert_eq!(
        fs::read(run_a.join("metrics.tsv")).unwrap(),
        fs::read(run_b.join("metrics.tsv")).unwrap()
    );
}

#[test]
fn untrained_analysis_defaults_to_the_desk_grid() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["spectrum", "--seed", "2", "--reduce", "max", "--scale", "linear", "--out", p(dir.path())]);
    assert!(text.contains("msaga.1"));
    assert!(dir.path().join("spectrum_msaga.1.csv").is_file());
    let cfg = dir.path().join("heat.kv");
    fs::write(&cfg, "layer=stem\nsequence=102\n").unwrap();
    let text = ok(&["heatmap", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(text.contains("High view"), "{text}");
    assert!(dir.path().join("heatmap_stem.png").is_file());
}

#[test]
fn ablate_emits_six_rows_with_condition_columns() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.txt");
    tiny_manifest().write(&manifest).unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--config", p(&manifest), "--out", p(&data)]);
    let mut c = tiny_train_config();
    c.schedule = c.schedule.with_total_steps(1);
    c.selection = cvvnet_train::Selection { views: vec![ViewGroup::Low], conditions: Vec::new(), repeats: vec![0] };
    let cfg = dir.path().join("ablate.config");
    fs::write(&cfg, c.render()).unwrap();
    let out = dir.path().join("grid");
    let text =
        ok(&["ablate", "--config", p(&cfg), "--data", p(&data), "--seeds", "1", "--seed", "9", "--out", p(&out)]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8, "{text}");
    let header: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(header, ["FE.", "Aggr.", "NM", "BG", "CL"]);
    let labels: Vec<(&str, &str)> = lines[2..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            assert_eq!(f.len(), 5, "{l}");
            assert!(f[2..].iter().all(|v| (0.0..=100.0).contains(&v.parse::<f64>().unwrap())));
            (f[0], f[1])
        })
        .collect();
    assert_eq!(
        labels,
        [("P3D", "Add"), ("P3D", "Concat"), ("P3D", "DGA"), ("HLFE", "Add"), ("HLFE", "Concat"), ("HLFE", "DGA")]
    );
    assert_eq!(fs::read_to_string(out.join("ablation.txt")).unwrap(), text);
    assert!(out.join("hlfe-dga-seed9").is_dir());
}
