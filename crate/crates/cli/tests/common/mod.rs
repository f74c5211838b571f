#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wildsynth_core::curation::{write_base_set, BaseImageRecord};
use wildsynth_core::fixtures::base_record;
use wildsynth_core::{BBox, DayNight};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wildsynth"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn wildsynth");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn bases(n: usize) -> Vec<BaseImageRecord> {
    let species = ["elk", "gray wolf", "raccoon", "mule deer", "red fox"];
    (0..n)
        .map(|i| {
            let dn = if i % 3 == 2 {
                DayNight::Night
            } else {
                DayNight::Day
            };
            base_record(
                &format!("img{i:04}.png"),
                species[i % species.len()],
                dn,
                Some(1 + (i % 12) as u32),
                BBox::new(0.35, 0.3, 0.3, 0.35).unwrap(),
            )
        })
        .collect()
}

pub fn write_bases(dir: &Path, records: &[BaseImageRecord]) -> PathBuf {
    let p = dir.join("base_set.jsonl");
    std::fs::write(&p, write_base_set(records, 7)).unwrap();
    p
}

/// Config with no retry sleeps.
pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{extra}\n[retry]\ndelays_ms = [0, 0, 0]\n")).unwrap();
    p
}
