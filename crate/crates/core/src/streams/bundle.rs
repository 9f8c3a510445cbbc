//! Recording bundle: a directory with `robot.csv`, `vertebra.csv`,
//! `platform.csv` and `meta.json`.

use std::fs;
use std::path::Path;

use super::csv_io::{ingest_pose_csv, ingest_robot_csv, write_pose_csv, write_robot_csv};
use super::{Recording, RecordingMeta, StreamError};
use crate::frames::FrameId;
use crate::io::write_atomic;

pub const ROBOT_FILE: &str = "robot.csv";
pub const VERTEBRA_FILE: &str = "vertebra.csv";
pub const PLATFORM_FILE: &str = "platform.csv";
pub const META_FILE: &str = "meta.json";

/// Loads a bundle and applies the per-file epoch offsets from `meta.json`.
pub fn load_recording(dir: &Path) -> Result<Recording, StreamError> {
    for name in [META_FILE, ROBOT_FILE, VERTEBRA_FILE, PLATFORM_FILE] {
        let p = dir.join(name);
        if !p.is_file() {
            return Err(StreamError::MissingFile(p));
        }
    }
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| StreamError::from(e).in_file(&meta_path))?;
    let meta: RecordingMeta =
        serde_json::from_str(&text).map_err(|e| StreamError::Meta(e.to_string()).in_file(&meta_path))?;
    let offsets = meta.epoch_offsets;

    let robot_path = dir.join(ROBOT_FILE);
    let robot = ingest_robot_csv(&robot_path)?
        .shifted(offsets.robot)
        .map_err(|e| e.in_file(&robot_path))?;
    let vertebra_path = dir.join(VERTEBRA_FILE);
    let vertebra = ingest_pose_csv(&vertebra_path, FrameId::Camera)?
        .shifted(offsets.vertebra)
        .map_err(|e| e.in_file(&vertebra_path))?;
    let platform_path = dir.join(PLATFORM_FILE);
    let platform = ingest_pose_csv(&platform_path, FrameId::Camera)?
        .shifted(offsets.platform)
        .map_err(|e| e.in_file(&platform_path))?;

    Ok(Recording {
        meta,
        robot,
        vertebra,
        platform,
    })
}

/// Writes a bundle; file timestamps are stored relative to the epoch offsets.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<(), StreamError> {
    fs::create_dir_all(dir)?;
    let offsets = rec.meta.epoch_offsets;

    let mut buf = Vec::new();
    write_robot_csv(&mut buf, &rec.robot.shifted(-offsets.robot)?)?;
    write_atomic(&dir.join(ROBOT_FILE), &buf)?;

    buf.clear();
    write_pose_csv(&mut buf, &rec.vertebra.shifted(-offsets.vertebra)?)?;
    write_atomic(&dir.join(VERTEBRA_FILE), &buf)?;

    buf.clear();
    write_pose_csv(&mut buf, &rec.platform.shifted(-offsets.platform)?)?;
    write_atomic(&dir.join(PLATFORM_FILE), &buf)?;

    let mut meta = serde_json::to_vec_pretty(&rec.meta).map_err(|e| StreamError::Meta(e.to_string()))?;
    meta.push(b'\n');
    write_atomic(&dir.join(META_FILE), &meta)?;
    Ok(())
}
