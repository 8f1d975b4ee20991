//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use depthkit::depth_encoding::{CameraIntrinsics, DepthMap};
use depthkit::netpbm::encode_pfm;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn depthkit<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    depthkit_env(args, &[])
}

pub fn depthkit_env<I, S>(args: I, env: &[(&str, &str)]) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depthkit"));
    cmd.args(args).env_remove("DEPTHKIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("spawn depthkit");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn cam() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 50.0,
        fy: 50.0,
        cx: 31.5,
        cy: 23.5,
        baseline: 0.075,
    }
}

/// 64x48 view of a floor one metre below the camera and a wall four metres
/// ahead.
pub fn floor_wall(c: &CameraIntrinsics) -> DepthMap {
    let (w, h) = (64, 48);
    let mut vals = Vec::with_capacity(w * h);
    for v in 0..h {
        for _ in 0..w {
            let ry = (v as f64 - c.cy) / c.fy;
            let floor = if ry > 0.0 { 1.0 / ry } else { f64::INFINITY };
            vals.push(floor.min(4.0));
        }
    }
    DepthMap::from_meters(w, h, vals).unwrap()
}

pub fn write_pfm(path: &Path, d: &DepthMap) {
    let data: Vec<f32> = d.values().iter().map(|&v| v as f32).collect();
    std::fs::write(path, encode_pfm(d.width(), d.height(), 1, &data)).unwrap();
}

pub type Snapshot = Vec<(String, Vec<u8>)>;

/// Every file under `dir`, sorted by name, with contents.
pub fn snapshot(dir: &Path) -> Snapshot {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}
