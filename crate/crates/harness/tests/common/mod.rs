use std::fs;
use std::path::{Path, PathBuf};

use fea_harness::validate_config;

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

pub fn read_config(name: &str) -> String {
    fs::read_to_string(repo_path("../../configs").join(name)).unwrap()
}

/// `(file, raw contents, required fragments)` for every documented
/// malformed config.
pub fn malformed_cases() -> Vec<(String, String, Vec<String>)> {
    let dir = repo_path("tests/malformed");
    fs::read_to_string(dir.join("expected.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|line| {
            let (file, needles) = line.split_once(':').unwrap();
            let raw = fs::read_to_string(dir.join(file.trim())).unwrap();
            let needles = needles.split(',').map(|s| s.trim().to_string()).collect();
            (file.trim().to_string(), raw, needles)
        })
        .collect()
}

/// `Ok` when the config is rejected and every fragment appears in some
/// error message.
pub fn check_malformed(raw: &str, needles: &[String]) -> Result<(), String> {
    let errs: Vec<String> = match validate_config(raw) {
        Ok(_) => return Err("accepted".into()),
        Err(errs) => errs.into_iter().map(|e| e.to_string()).collect(),
    };
    for n in needles {
        if !errs.iter().any(|e| e.contains(n.as_str())) {
            return Err(format!("no error mentions `{n}`: {errs:?}"));
        }
    }
    Ok(())
}
