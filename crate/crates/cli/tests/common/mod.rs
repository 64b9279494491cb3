#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aggnet"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write test file");
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Rows of a headed CSV file as numbers, keyed by the header.
pub fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = read(path);
    let mut lines = text.lines();
    let header = lines.next().expect("header").split(',').map(String::from).collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|s| s.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

/// Small four-group setup: config file plus paths for simulation and fit output.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Fixture {
    pub fn new(theta: f64, sampler: &str) -> Self {
        let dir = tempfile::tempdir().expect("temp dir");
        let config = dir.path().join("run.toml");
        write(
            &config,
            &format!(
                "[model]\nq = 2\n\n[truth]\ntheta = {theta}\ntau = 1.0\nsizes = [12, 20, 15, 25]\n\
                 centres = [[0.0, 0.0], [1.0, 0.0], [-0.5, 1.0], [0.3, -1.2]]\n\
                 scales = [0.3, 0.5, 0.2, 0.4]\nseed = 11\n\n[sampler]\n{sampler}\n"
            ),
        );
        Self { dir, config }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn simulate(&self, out: &str) -> Output {
        run(&["simulate", "--config", p(&self.config), "--out", p(&self.path(out))])
    }

    pub fn fit(&self, sim: &str, out: &str, extra: &[&str]) -> Output {
        let sim = self.path(sim);
        let mut args = vec![
            "fit".to_string(),
            "--config".into(),
            p(&self.config).into(),
            "--out".into(),
            p(&self.path(out)).into(),
            "--aggregate".into(),
            p(&sim.join("aggregate.csv")).into(),
            "--sizes".into(),
            p(&sim.join("sizes.csv")).into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().expect("binary runs")
    }
}

pub const QUICK_SAMPLER: &str = "chains = 2\nwarmup = 200\nsamples = 150\nseed = 5";

/// Byte contents of every file in a directory, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("dir entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("read file"),
            )
        })
        .collect();
    files.sort();
    files
}
