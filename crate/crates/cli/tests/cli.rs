use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evit")).args(args).env_remove("EVIT_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_total_params(o: &Output) -> usize {
    let text = stdout(o);
    let total = text.lines().find(|l| l.starts_with("total,")).unwrap();
    total.split(',').nth(2).unwrap().parse().unwrap()
}

#[test]
fn build_params_report_has_reference_columns() {
    let o = evit(&["build", "--variant", "tiny", "--input", "224", "--report", "params"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("12.13M") && text.contains("deviation"), "{text}");
    assert!(text.contains("1 MAC reported as 1 FLOP"));
}

#[test]
fn build_rejects_bad_input_and_variant_with_usage_exit() {
    let o = evit(&["build", "--variant", "tiny", "--input", "223"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("divisible by 32"), "{}", stderr(&o));
    let o = evit(&["build", "--variant", "huge"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("possible values"), "{}", stderr(&o));
}

#[test]
fn pattern_choice_does_not_change_parameter_total() {
    let a = evit(&["build", "--variant", "tiny", "--pattern", "parallel", "--report", "params", "--csv"]);
    let b = evit(&["build", "--variant", "tiny", "--pattern", "bifovea", "--report", "params", "--csv"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(csv_total_params(&a), csv_total_params(&b));
}

#[test]
fn flops_report_and_csv_table() {
    let o = evit(&["build", "--variant", "tiny", "--ffn", "cffn", "--report", "flops"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("flops (all MACs)"));
    let o = evit(&["build", "--variant", "tiny", "--report", "table", "--csv"]);
    assert!(stdout(&o).starts_with("layer,module,params,macs\n"));
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    let o = evit(&["gradcheck"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("stage") || l.starts_with("stem") || l.starts_with("head")).count(), 10);
    let o = evit(&["gradcheck", "-k", "0"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    let o = evit(&["gradcheck", "--inject-fault", "1.5"]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL"));
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("seed = 3\noptim.steps = 5\noptim.batch_size = 8\ndata.samples = 32\n{extra}")).unwrap();
    path.display().to_string()
}

fn train_into(dir: &Path, cfg: &str, tag: &str, env_seed: Option<&str>) -> (Output, Vec<u8>) {
    let ckpt = dir.join(format!("{tag}.ckpt"));
    let metrics = dir.join(format!("{tag}.csv"));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evit"));
    cmd.args(["train", "--config", cfg, "--checkpoint", ckpt.to_str().unwrap(), "--metrics", metrics.to_str().unwrap()]);
    cmd.env_remove("EVIT_SEED");
    if let Some(s) = env_seed {
        cmd.env("EVIT_SEED", s);
    }
    let o = cmd.output().unwrap();
    let bytes = fs::read(&ckpt).unwrap_or_default();
    (o, bytes)
}

#[test]
fn training_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (o, a) = train_into(dir.path(), &cfg, "a", None);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, b) = train_into(dir.path(), &cfg, "b", None);
    assert!(!a.is_empty() && a == b);
    let metrics = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,accuracy\n"));
    assert_eq!(metrics.lines().count(), 6);
    assert_eq!(metrics, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let (_, c) = train_into(dir.path(), &cfg, "c", Some("4"));
    assert_ne!(a, c);
}

#[test]
fn training_rejects_dataset_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for class in ["a", "b", "c"] {
        fs::create_dir_all(data.join(class)).unwrap();
        let mut pgm = b"P5\n32 32\n255\n".to_vec();
        pgm.extend(std::iter::repeat_n(7u8, 32 * 32));
        fs::write(data.join(class).join("x.pgm"), pgm).unwrap();
    }
    let cfg = write_config(dir.path(), &format!("data.source = directory\ndata.path = {}\n", data.display()));
    let (o, _) = train_into(dir.path(), &cfg, "m", None);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("3 classes"));
}

#[test]
fn attnmap_exports_one_map_per_head() {
    let dir = tempfile::tempdir().unwrap();
    let o = evit(&["attnmap", "--checkpoint", dir.path().join("none.ckpt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "");
    let untrained = dir.path().join("untrained.ckpt");
    let o = Command::new(env!("CARGO_BIN_EXE_evit"))
        .args(["train", "--config", &cfg, "--steps", "0", "--checkpoint", untrained.to_str().unwrap(), "--metrics", dir.path().join("u.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let (o, _) = train_into(dir.path(), &cfg, "trained", None);
    assert!(o.status.success());

    let export = |ckpt: &str, out: &str| {
        let o = evit(&["attnmap", "--checkpoint", ckpt, "--stage", "3", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o).lines().map(|l| fs::read(l).unwrap()).collect::<Vec<_>>()
    };
    let a = export(untrained.to_str().unwrap(), dir.path().join("ua").to_str().unwrap());
    let b = export(dir.path().join("trained.ckpt").to_str().unwrap(), dir.path().join("tb").to_str().unwrap());
    assert_eq!(a.len(), 4);
    assert!(a[0].starts_with(b"P5\n14 14\n255\n"));
    let l1: u64 = a.iter().zip(&b).flat_map(|(x, y)| x.iter().zip(y)).map(|(p, q)| (*p as i64 - *q as i64).unsigned_abs()).sum();
    assert!(l1 > 0);
}
