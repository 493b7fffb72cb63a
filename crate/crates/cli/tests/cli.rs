use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn protopipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protopipe"))
        .args(args)
        .env_remove("PROTOPIPE_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = protopipe(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn keys(v: &Value) -> Vec<&str> {
    let mut k: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    k.sort_unstable();
    k
}

fn first_clutter(manifest: &Value) -> String {
    manifest["users"][0]["objects"][0]["videos"]
        .as_array()
        .unwrap()
        .iter()
        .find(|v| v["kind"] == "clutter")
        .unwrap()["video_id"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn generator_is_deterministic_and_blank_free_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-synthetic", "--out", s(&a), "--users", "2"]);
    ok(&["gen-synthetic", "--out", s(&b), "--users", "2"]);
    assert_eq!(tree(&a), tree(&b));

    let c = dir.path().join("c");
    ok(&[
        "gen-synthetic",
        "--out",
        s(&c),
        "--users",
        "1",
        "--blank-fraction",
        "0",
    ]);
    assert_eq!(json(&c.join("blank_frames.json")), serde_json::json!({}));
}

#[test]
fn outputs_follow_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen-synthetic",
        "--out",
        s(&data),
        "--users",
        "2",
        "--blank-fraction",
        "0.5",
    ]);

    let manifest = json(&data.join("manifest.json"));
    assert_eq!(keys(&manifest), ["users"]);
    for user in manifest["users"].as_array().unwrap() {
        assert_eq!(keys(user), ["objects", "user_id"]);
        for object in user["objects"].as_array().unwrap() {
            assert_eq!(keys(object), ["label", "videos"]);
            for video in object["videos"].as_array().unwrap() {
                assert_eq!(keys(video), ["frames", "kind", "video_id"]);
                assert!(video["kind"] == "clean" || video["kind"] == "clutter");
                for f in video["frames"].as_array().unwrap() {
                    assert!(data.join(f.as_str().unwrap()).is_file());
                }
            }
        }
    }
    let sidecar = json(&data.join("blank_frames.json"));
    for (_, frames) in sidecar.as_object().unwrap() {
        assert!(frames.as_array().unwrap().iter().all(Value::is_u64));
    }

    let user = manifest["users"][0]["user_id"].as_str().unwrap();
    let protos = dir.path().join("protos.json");
    let audit = dir.path().join("audit.jsonl");
    ok(&[
        "personalize",
        "--dataset",
        s(&data),
        "--user",
        user,
        "--out",
        s(&protos),
        "--audit",
        s(&audit),
    ]);
    let p = json(&protos);
    assert_eq!(
        keys(&p),
        [
            "adapted",
            "config_digest",
            "dim",
            "labels",
            "raw",
            "user_id"
        ]
    );
    let dim = p["dim"].as_u64().unwrap() as usize;
    let n = p["labels"].as_array().unwrap().len();
    for m in [&p["raw"], &p["adapted"]] {
        let rows = m.as_array().unwrap();
        assert_eq!(rows.len(), n);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == dim));
    }
    assert_eq!(p["adapted"], p["raw"], "no adapter by default");
    let digest = p["config_digest"].as_str().unwrap();
    assert!(digest.len() == 64 && digest.chars().all(|c| c.is_ascii_hexdigit()));
    let lines = std::fs::read_to_string(&audit).unwrap();
    assert!(!lines.is_empty());
    for line in lines.lines() {
        let entry: Value = serde_json::from_str(line).unwrap();
        assert_eq!(
            keys(&entry),
            [
                "L",
                "clip_start",
                "invalid",
                "override",
                "removed",
                "video_id"
            ]
        );
    }

    let video = first_clutter(&manifest);
    let preds = dir.path().join("preds.json");
    ok(&[
        "recognize",
        "--prototypes",
        s(&protos),
        "--dataset",
        s(&data),
        "--video",
        &video,
        "--out",
        s(&preds),
    ]);
    let pr = json(&preds);
    assert_eq!(keys(&pr), ["labels", "per_frame", "video_id"]);
    assert_eq!(pr["labels"], p["labels"]);
    for f in pr["per_frame"].as_array().unwrap() {
        assert_eq!(keys(f), ["pred", "scores"]);
        assert_eq!(f["scores"].as_array().unwrap().len(), n);
        assert!(pr["labels"].as_array().unwrap().contains(&f["pred"]));
    }

    let bench = dir.path().join("bench.json");
    ok(&[
        "bench-loader",
        "--dataset",
        s(&data),
        "--threads",
        "1,2",
        "--latency-ms",
        "0",
        "--reps",
        "1",
        "--out",
        s(&bench),
    ]);
    let b = json(&bench);
    assert_eq!(keys(&b), ["configs"]);
    for row in b["configs"].as_array().unwrap() {
        assert_eq!(keys(row), ["latency_ms", "median_ms", "speedup", "threads"]);
    }
    assert_eq!(b["configs"][0]["speedup"], 1.0);

    let report = dir.path().join("report.json");
    ok(&[
        "evaluate",
        "--dataset",
        s(&data),
        "--ablation",
        "baseline,filter",
        "--out",
        s(&report),
    ]);
    let r = json(&report);
    assert_eq!(keys(&r), ["arms", "users"]);
    for arm in r["arms"].as_array().unwrap() {
        assert_eq!(
            keys(arm),
            [
                "aggregate",
                "arm",
                "config_digest",
                "description",
                "margin",
                "per_user",
                "query_frames"
            ]
        );
        assert_eq!(arm["per_user"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn exit_codes_separate_config_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--out", s(&data), "--users", "1"]);
    let manifest = json(&data.join("manifest.json"));
    let user = manifest["users"][0]["user_id"].as_str().unwrap();
    let out = dir.path().join("out.json");
    let code = |args: &[&str]| protopipe(args).status.code();

    assert_eq!(
        code(&[
            "personalize",
            "--dataset",
            s(&data),
            "--user",
            "nobody",
            "--out",
            s(&out)
        ]),
        Some(3)
    );
    assert_eq!(
        code(&[
            "personalize",
            "--dataset",
            s(&data),
            "--user",
            user,
            "--config",
            "missing.json",
            "--out",
            s(&out)
        ]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--dataset",
            s(&data),
            "--ablation",
            "bogus",
            "--out",
            s(&out)
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["gen-synthetic", "--out", s(&out), "--scenario", "odd"]),
        Some(2)
    );
    assert_eq!(code(&["personalize", "--dataset", s(&data)]), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sampler": {"clip_length": 8, "colour": 1}}"#).unwrap();
    assert_eq!(
        code(&[
            "personalize",
            "--dataset",
            s(&data),
            "--user",
            user,
            "--config",
            s(&bad),
            "--out",
            s(&out)
        ]),
        Some(2)
    );

    let protos = dir.path().join("protos.json");
    ok(&[
        "personalize",
        "--dataset",
        s(&data),
        "--user",
        user,
        "--out",
        s(&protos),
    ]);
    let small = dir.path().join("small.json");
    std::fs::write(
        &small,
        r#"{"embedder": {"kind": "patch_projection", "dim": 16}}"#,
    )
    .unwrap();
    let video = first_clutter(&manifest);
    assert_eq!(
        code(&[
            "recognize",
            "--prototypes",
            s(&protos),
            "--dataset",
            s(&data),
            "--video",
            &video,
            "--config",
            s(&small),
            "--out",
            s(&out)
        ]),
        Some(2)
    );

    let frame = manifest["users"][0]["objects"][0]["videos"][0]["frames"][0]
        .as_str()
        .unwrap();
    std::fs::write(data.join(frame), b"P6\n32 32\n255\nshort").unwrap();
    assert_eq!(
        code(&[
            "personalize",
            "--dataset",
            s(&data),
            "--user",
            user,
            "--out",
            s(&out)
        ]),
        Some(3)
    );
}

#[test]
fn seed_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen-synthetic", "--out", s(&data), "--users", "1"]);
    let user = json(&data.join("manifest.json"))["users"][0]["user_id"]
        .as_str()
        .unwrap()
        .to_string();
    let cfg = dir.path().join("random.json");
    std::fs::write(&cfg, r#"{"sampler": {"policy": "random"}}"#).unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| -> Vec<u8> {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_protopipe"));
        cmd.args([
            "personalize",
            "--dataset",
            s(&data),
            "--user",
            &user,
            "--config",
            s(&cfg),
            "--out",
            s(&out),
        ]);
        cmd.env_remove("PROTOPIPE_SEED");
        if let Some(e) = env {
            cmd.env("PROTOPIPE_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out).unwrap()
    };
    let by_env = run("env.json", Some("9"), None);
    let by_flag = run("flag.json", None, Some("9"));
    let both = run("both.json", Some("1"), Some("9"));
    assert_eq!(by_env, by_flag);
    assert_eq!(by_flag, both);
    assert_ne!(by_env, run("other.json", Some("1"), None));
}
