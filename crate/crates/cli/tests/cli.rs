use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use laddernet::data::{fov_strategy, load_dataset};
use laddernet::pipeline::{evaluate_images, Model};

fn laddernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laddernet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn paths_counts_and_lists() {
    let o = laddernet(&["paths", "--levels", "5", "--pairs", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "5");

    let o = laddernet(&["paths", "--levels", "2", "--pairs", "1", "--list"]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.contains(&"A1 -> A2"));
    assert_eq!(lines[2], "2");
}

#[test]
fn params_of_default_config() {
    let o = laddernet(&["params"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n: usize = stdout(&o).trim().parse().unwrap();
    assert!((1_000_000..=2_000_000).contains(&n), "{n}");

    let o = laddernet(&["params", "--breakdown", "--set", "pairs=1"]);
    let out = stdout(&o);
    assert!(out.contains("level E blocks x1"), "{out}");
    let last: usize = out.lines().last().unwrap().trim().parse().unwrap();
    assert!(last < n);
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "levels = 3\n# comment\nwidth = 7\n").unwrap();
    let o = laddernet(&["params", "--config", p(&cfg)]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error category=config "), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let o = laddernet(&["params", "--set", "levels=lots"]);
    assert!(stderr(&o).starts_with("error category=config "));
    assert!(!o.status.success());
}

#[test]
fn usage_and_io_errors_are_one_line() {
    let o = laddernet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error category=usage "), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let o = laddernet(&["predict", "--checkpoint", p(&dir.path().join("missing.ldnw")), "--out", p(dir.path()), "x.pgm"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error category=io "), "{}", stderr(&o));

    let o = laddernet(&["eval", "--pred", p(dir.path()), "--truth", p(dir.path()), "--fov-mode", "ring"]);
    assert!(stderr(&o).starts_with("error category=data "), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes() {
    let o = laddernet(&["gradcheck", "--seed", "1"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().last().unwrap().starts_with("max_rel_error="));
}

#[test]
fn train_predict_eval_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let o = laddernet(&["synth", "--count", "20", "--seed", "3", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "train=18 test=2");

    let cfg = dir.path().join("tiny.cfg");
    fs::write(
        &cfg,
        "levels = 2\npairs = 1\nbase_channels = 2\nepochs = 50\nbatch_size = 8\npatches = 40\nlr_schedule = 0:0.01\nprecision = f64\n",
    )
    .unwrap();
    let o = laddernet(&[
        "train", "--config", p(&cfg), "--epochs", "2", "--seed", "4", "--data-dir", p(&data), "--out-dir", p(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(echo.contains("epochs = 2") && echo.contains("seed = 4"), "{echo}");
    assert_eq!(fs::read_to_string(run.join("history.csv")).unwrap().lines().count(), 3);

    let checkpoint = run.join("model.ldnw");
    let test_dir = data.join("test");
    let mut images: Vec<String> = fs::read_dir(&test_dir)
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .filter(|f| f.ends_with("_img.pgm"))
        .collect();
    images.sort();
    let preds = [dir.path().join("pred_a"), dir.path().join("pred_b")];
    for out in &preds {
        let mut args = vec!["predict", "--checkpoint", p(&checkpoint), "--out", p(out)];
        args.extend(images.iter().map(String::as_str));
        let o = laddernet(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().count(), images.len());
    }
    for entry in fs::read_dir(&preds[0]).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(fs::read(preds[0].join(&name)).unwrap(), fs::read(preds[1].join(&name)).unwrap());
    }

    let metrics = dir.path().join("metrics");
    let o = laddernet(&["eval", "--pred", p(&preds[0]), "--truth", p(&test_dir), "--out", p(&metrics)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cli_line = stdout(&o).trim().to_string();

    let mut model = Model::load(&checkpoint).unwrap();
    let truth = load_dataset(&test_dir, fov_strategy("auto").unwrap(), true).unwrap();
    let in_process = evaluate_images(&mut model, &truth, true).unwrap();
    assert_eq!(cli_line, in_process.summary());
    assert_eq!(fs::read_to_string(metrics.join("metrics.txt")).unwrap().trim(), cli_line);
    assert!(metrics.join("roc.csv").exists() && metrics.join("pr.csv").exists());

    let o = laddernet(&["eval", "--pred", p(&preds[0]), "--truth", p(&test_dir), "--out", p(&metrics), "--scoring", "both"]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], format!("scope=fov {cli_line}"));
    let all = evaluate_images(&mut model, &truth, false).unwrap();
    assert_eq!(lines[1], format!("scope=all {}", all.summary()));
    assert!(metrics.join("metrics_all.txt").exists() && metrics.join("roc_fov.csv").exists());
}
