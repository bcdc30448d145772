use std::process::Command;

fn spv_nav() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spv-nav"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn help_lists_the_commands() {
    let out = spv_nav().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["run-autopilot", "run-session", "analyze", "serve"] {
        assert!(text.contains(cmd), "{cmd} missing from\n{text}");
    }
}

#[test]
fn autopilot_writes_log_and_images_then_analyze_needs_more_records() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trial.jsonl");
    let pgm = dir.path().join("frames");
    let out = spv_nav()
        .args([
            "run-autopilot",
            "--env",
            "env3",
            "--mode",
            "RoboticG",
            "--seed",
            "4",
            "--dump-every",
            "100",
        ])
        .arg("--log")
        .arg(&log)
        .arg("--dump-pgm")
        .arg(&pgm)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8_lossy(&out.stdout);
    assert!(
        line.contains("env3") && line.contains("Completed") && line.contains("bumps 0"),
        "{line}"
    );

    let text = std::fs::read_to_string(&log).unwrap();
    let parsed = spv_core::trials::parse_log(&text).unwrap();
    assert_eq!(parsed.seed, 4);
    assert_eq!(parsed.trials.len(), 1);
    let record = &parsed.trials[0];
    assert_eq!(record.recompute(), record.metrics);

    let mut names: Vec<String> = std::fs::read_dir(&pgm)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"phosphenes_00000.pgm".to_string()), "{names:?}");
    assert!(names.contains(&"scene_00100.pgm".to_string()), "{names:?}");
    let img = std::fs::read(pgm.join("phosphenes_00000.pgm")).unwrap();
    let head = b"P5\n256 256\n255\n";
    assert_eq!(&img[..head.len()], head);
    assert_eq!(img.len(), head.len() + 256 * 256);

    let out = spv_nav()
        .arg("analyze")
        .arg(&log)
        .arg("--out")
        .arg(dir.path().join("report"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient"));
}

#[test]
fn unknown_mode_is_rejected() {
    let out = spv_nav().args(["run-autopilot", "--mode", "Telepathy"]).output().unwrap();
    assert!(!out.status.success());
}
