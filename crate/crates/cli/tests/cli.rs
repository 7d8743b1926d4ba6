//! End-to-end CLI tests: exit codes, the full subcommand pipeline on a small
//! synthetic corpus, and byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flowlm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_flowlm"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn flowlm")
}

fn write_small_config(dir: &Path) -> String {
    let path = dir.join("model.kv");
    fs::write(
        &path,
        "seed=9\nepochs=1\nembed_dim=16\nlstm_units=8\ndense_units=16\nbatch_size=64\n",
    )
    .unwrap();
    path.display().to_string()
}

fn synth_small(dir: &Path, out_name: &str) -> String {
    let out = dir.join(out_name).display().to_string();
    let status = flowlm(
        &[
            "synth", "--out", &out,
            "--set", "seed=5",
            "--set", "benign_dyad_hours=120",
            "--set", "attack_dyad_hours=8",
            "--set", "days=2",
            "--set", "ip_pool_size=24",
        ],
        &[],
    );
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    out
}

#[test]
fn unknown_flag_is_usage_error_with_exit_1() {
    let out = flowlm(&["run", "--bogus"], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let text = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(text.contains("usage") || text.contains("unexpected"), "{text}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = flowlm(&["frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = flowlm(&["--help"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("flowlm"));
}

#[test]
fn missing_input_file_is_data_error_with_exit_2() {
    let out = flowlm(
        &["ingest", "--in", "/nonexistent.csv", "--out", "/tmp/x.csv"],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("ingest") && text.contains("/nonexistent.csv"), "{text}");
}

#[test]
fn eval_on_single_class_scores_is_exit_2_naming_auc() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    fs::write(
        &scores,
        "ip_lo,ip_hi,hour,score,label,window_count\na,b,1,2.5,Normal,3\nc,d,2,1.5,Normal,4\n",
    )
    .unwrap();
    let out = flowlm(
        &[
            "eval",
            "--scores",
            &scores.display().to_string(),
            "--roc-out",
            &dir.path().join("roc.csv").display().to_string(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("AUC undefined"), "{text}");
}

#[test]
fn full_pipeline_ingest_train_score_eval() {
    let dir = tempfile::tempdir().unwrap();
    let raw = synth_small(dir.path(), "raw.csv");
    let config = write_small_config(dir.path());

    let canonical = dir.path().join("canonical.csv").display().to_string();
    let out = flowlm(&["ingest", "--in", &raw, "--out", &canonical], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let model = dir.path().join("model.bin").display().to_string();
    let vocab = dir.path().join("vocab.csv").display().to_string();
    let out = flowlm(
        &[
            "train", "--in", &canonical, "--scheme", "proto_byte",
            "--config", &config, "--model-out", &model, "--vocab-out", &vocab,
        ],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed=9"));

    let scores = dir.path().join("scores.csv").display().to_string();
    let out = flowlm(&["score", "--in", &canonical, "--model", &model, "--out", &scores], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let roc = dir.path().join("roc.csv").display().to_string();
    let out = flowlm(&["eval", "--scores", &scores, "--roc-out", &roc], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("auc="), "{summary}");
    assert!(summary.contains("attack=8"), "{summary}");

    let vocab_text = fs::read_to_string(dir.path().join("vocab.csv")).unwrap();
    assert!(vocab_text.starts_with("index,token\n0,<PAD>\n1,<UNK>\n"));
    let roc_text = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(roc_text.starts_with("fpr,tpr\n0,0\n"));
    assert!(roc_text.contains("# auc="));
}

#[test]
fn run_writes_artifacts_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let raw = synth_small(dir.path(), "corpus.csv");
    let config = write_small_config(dir.path());

    let run = |outdir: &str| {
        let out = flowlm(
            &[
                "run", "--scenario", "dirty", "--scheme", "proto_byte",
                "--in", &raw, "--outdir", outdir, "--config", &config,
            ],
            &[],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).to_string()
    };

    let out_a = dir.path().join("run_a").display().to_string();
    let out_b = dir.path().join("run_b").display().to_string();
    let stdout_a = run(&out_a);
    let stdout_b = run(&out_b);

    for name in ["model.bin", "scores.csv", "roc.csv", "vocab.csv"] {
        let a = fs::read(Path::new(&out_a).join(name)).unwrap();
        let b = fs::read(Path::new(&out_b).join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty());
    }
    for name in ["report.txt", "report.kv"] {
        assert!(Path::new(&out_a).join(name).exists());
    }

    // Reports echo config and match across runs except wall-time fields and
    // the artifact paths, which name the distinct outdirs.
    let strip_varying = |s: &str| {
        s.lines()
            .filter(|l| !l.contains("wall_time") && !l.contains("_path="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_varying(&stdout_a), strip_varying(&stdout_b));
    assert!(stdout_a.contains("scenario=dirty"));
    assert!(stdout_a.contains("seed=9"));
    assert!(stdout_a.contains("auc="));
}

#[test]
fn flowlm_seed_env_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv").display().to_string();
    let out_b = dir.path().join("b.csv").display().to_string();
    let base = [
        "--set", "benign_dyad_hours=30",
        "--set", "attack_dyad_hours=2",
        "--set", "days=1",
        "--set", "ip_pool_size=12",
    ];

    let mut args_a: Vec<&str> = vec!["synth", "--out", &out_a, "--set", "seed=1"];
    args_a.extend_from_slice(&base);
    let mut args_b: Vec<&str> = vec!["synth", "--out", &out_b, "--set", "seed=2"];
    args_b.extend_from_slice(&base);

    // Different config seeds, same env seed: outputs must match.
    assert!(flowlm(&args_a, &[("FLOWLM_SEED", "777")]).status.success());
    assert!(flowlm(&args_b, &[("FLOWLM_SEED", "777")]).status.success());
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());

    // Without the env override the seeds differ, so the corpora differ.
    assert!(flowlm(&args_a, &[]).status.success());
    assert!(flowlm(&args_b, &[]).status.success());
    assert_ne!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
}

#[test]
fn schema_mapped_ingest_normalizes_foreign_columns() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("foreign.csv");
    fs::write(
        &src,
        "startDateTime,totalDuration,source,destination,protocolName,sourcePort,destinationPort,totalSourceBytes,totalDestinationBytes,Tag\n\
         2010-06-12T08:00:00,2,192.168.2.107,192.168.5.122,tcp_ip,3342,80,1200,5300,Normal\n",
    )
    .unwrap();
    let schema = dir.path().join("schema.kv");
    fs::write(
        &schema,
        "start_time=startDateTime\nduration_s=totalDuration\nsrc_ip=source\ndst_ip=destination\n\
         protocol=protocolName\nsrc_port=sourcePort\ndst_port=destinationPort\n\
         bytes_src=totalSourceBytes\nbytes_dst=totalDestinationBytes\ntag=Tag\nprotocol.tcp_ip=TCP\n",
    )
    .unwrap();
    let out = dir.path().join("canonical.csv");
    let result = flowlm(
        &[
            "ingest",
            "--in", &src.display().to_string(),
            "--schema", &schema.display().to_string(),
            "--out", &out.display().to_string(),
        ],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "start_time,duration_s,src_ip,dst_ip,protocol,src_port,dst_port,bytes_src,bytes_dst,tag"
    );
    let row = lines.next().unwrap();
    assert!(row.contains(",TCP,"), "{row}");
    assert!(row.contains("192.168.2.107"));
}
