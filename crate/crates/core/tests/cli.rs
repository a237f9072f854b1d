//! End-to-end checks of the command-line interface: outputs, exit codes,
//! and byte-level idempotence in deterministic mode.

use std::path::Path;
use std::process::Command;

fn scrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scrl"))
}

fn write_config(path: &Path) {
    std::fs::write(
        path,
        "[env]\nkind = \"gridworld\"\nwidth = 3\nheight = 3\n\n\
         [data]\nnum_transitions = 600\n\n\
         [train]\nbatch_size = 16\ntotal_steps = 40\nepoch_len = 20\n\
         mlp_width = 16\nmlp_depth = 1\nrepr_dim = 4\ngamma = 0.9\n\n\
         [eval]\nnum_goals = 5\n",
    )
    .unwrap();
}

#[test]
fn full_pipeline_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.scrl");
    let cfg = dir.path().join("cfg.toml");
    write_config(&cfg);

    // gen-data twice: identical bytes
    for out in ["a.scrl", "b.scrl"] {
        let status = scrl()
            .args([
                "gen-data",
                "--env",
                "grid3",
                "--num-transitions",
                "600",
                "--seed",
                "4",
                "--out",
            ])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(dir.path().join("a.scrl")).unwrap();
    let b = std::fs::read(dir.path().join("b.scrl")).unwrap();
    assert_eq!(a, b, "gen-data must be byte-idempotent");
    std::fs::rename(dir.path().join("a.scrl"), &data).unwrap();

    // train twice into separate dirs: identical metrics + checkpoints
    for run in ["run1", "run2"] {
        let status = scrl()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(&data)
            .arg("--out-dir")
            .arg(dir.path().join(run))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["metrics.csv", "ckpt_final"] {
        let x = std::fs::read(dir.path().join("run1").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("run2").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let metrics = std::fs::read_to_string(dir.path().join("run1/metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "step,critic_loss,actor_loss,bc_loss,binary_accuracy,pos_logit_mean,neg_logit_mean,wall_ms"
    ));
    assert_eq!(metrics.lines().count(), 1 + 40);

    // resume reproduces the tail of an uninterrupted run
    let cfg_short = dir.path().join("cfg_short.toml");
    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg_short, text.replace("total_steps = 40", "total_steps = 20")).unwrap();
    let status = scrl()
        .args(["train", "--config"])
        .arg(&cfg_short)
        .arg("--data")
        .arg(&data)
        .arg("--out-dir")
        .arg(dir.path().join("short"))
        .status()
        .unwrap();
    assert!(status.success());
    let status = scrl()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .arg("--out-dir")
        .arg(dir.path().join("resumed"))
        .arg("--resume")
        .arg(dir.path().join("short/ckpt_final.resume"))
        .status()
        .unwrap();
    assert!(status.success());
    let full_ckpt = std::fs::read(dir.path().join("run1/ckpt_final")).unwrap();
    let res_ckpt = std::fs::read(dir.path().join("resumed/ckpt_final")).unwrap();
    assert_eq!(full_ckpt, res_ckpt, "resumed checkpoint differs");

    // eval, qtrace, interp
    let status = scrl()
        .args(["eval", "--ckpt"])
        .arg(dir.path().join("run1/ckpt_final"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("run1"))
        .args(["--rollouts", "10"])
        .status()
        .unwrap();
    assert!(status.success());
    let eval_csv = std::fs::read_to_string(dir.path().join("run1/eval.csv")).unwrap();
    assert!(eval_csv.starts_with("goal,success,steps"));
    assert_eq!(eval_csv.lines().count(), 1 + 10);

    let status = scrl()
        .args(["qtrace", "--ckpt"])
        .arg(dir.path().join("run1/ckpt_final"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("run1"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("run1/qtrace.csv").exists());

    let status = scrl()
        .args(["interp", "--ckpt"])
        .arg(dir.path().join("run1/ckpt_final"))
        .arg("--data")
        .arg(&data)
        .arg("--out-dir")
        .arg(dir.path().join("run1"))
        .status()
        .unwrap();
    assert!(status.success());
    let interp: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run1/interp.json")).unwrap())
            .unwrap();
    assert_eq!(interp["learned"]["alphas"].as_array().unwrap().len(), 8);

    // ablate on a tiny axis
    let status = scrl()
        .args(["ablate", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&data)
        .args(["--axis", "batch_size", "--values", "8,16", "--seeds", "0"])
        .arg("--out-dir")
        .arg(dir.path().join("abl"))
        .status()
        .unwrap();
    assert!(status.success());
    let ablate = std::fs::read_to_string(dir.path().join("abl/ablate.csv")).unwrap();
    assert!(ablate.starts_with("axis_value,seed,success_rate,binary_accuracy"));
    assert_eq!(ablate.lines().count(), 1 + 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // bad arguments -> 2 (clap)
    let status = scrl().args(["definitely-not-a-command"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // invalid-argument error -> 2
    let status = scrl()
        .args(["gen-data", "--env", "grid3", "--num-transitions", "0", "--out"])
        .arg(dir.path().join("x.scrl"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // missing config file -> 4 (I/O), message names the path
    let out = scrl()
        .args(["train", "--config"])
        .arg(dir.path().join("missing.toml"))
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    // unknown config key -> 2, message carries the line
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nbatch_size = 8\nnot_a_key = 1\n").unwrap();
    let out = scrl()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not_a_key"), "{stderr}");

    // corrupt store -> 4
    let store_path = dir.path().join("corrupt.scrl");
    std::fs::write(&store_path, b"SCRLgarbage").unwrap();
    let cfg_ok = dir.path().join("ok.toml");
    write_config(&cfg_ok);
    let status = scrl()
        .args(["train", "--config"])
        .arg(&cfg_ok)
        .arg("--data")
        .arg(&store_path)
        .arg("--out-dir")
        .arg(dir.path().join("o2"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));

    // gradcheck -> 0
    let status = scrl().arg("gradcheck").status().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn help_lists_flags_with_defaults() {
    for sub in ["gen-data", "train", "eval", "interp", "qtrace", "ablate"] {
        let out = scrl().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--"), "{sub} help has no flags");
        if sub == "eval" {
            assert!(text.contains("default: 10"), "eval default rollouts missing");
        }
        if sub == "interp" {
            assert!(text.contains("default: 8"), "interp default alphas missing");
        }
    }
}
