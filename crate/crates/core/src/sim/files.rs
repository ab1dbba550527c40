//! On-disk layout of a simulated (or recorded) session.
//!
//! ```text
//! <dir>/in.ndjson            header line, then one frame per line
//! <dir>/out.ndjson
//! <dir>/ground_truth.ndjson  header, one line per script event, final line
//! ```

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::noise::NoiseModel;
use super::rng::RNG_ALGORITHM;
use super::script::{ExpectedCounts, GroundTruth, GroundTruthEntry};
use super::simulate::SimOutput;
use crate::protocol::{parse_frame, serialize_frame, Camera, FrameObservation, ProtocolError};

pub const STREAM_FORMAT: &str = "gauzetrack-stream";
pub const GROUND_TRUTH_FORMAT: &str = "gauzetrack-ground-truth";
pub const FORMAT_VERSION: u32 = 1;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.ndjson";

pub fn stream_file_name(camera: Camera) -> &'static str {
    match camera {
        Camera::In => "in.ndjson",
        Camera::Out => "out.ndjson",
    }
}

/// First line of a stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub format: String,
    pub version: u32,
    pub camera: Camera,
    pub fps: u32,
    pub seed: u64,
    pub rng: String,
    pub noise: NoiseModel,
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: ProtocolError,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FileError + '_ {
    move |source| FileError::Io { path: path.to_path_buf(), source }
}

/// Writes `in.ndjson`, `out.ndjson` and `ground_truth.ndjson` into `dir`.
pub fn write_sim_output(dir: &Path, out: &SimOutput) -> Result<(), FileError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for camera in Camera::ALL {
        let header = StreamHeader {
            format: STREAM_FORMAT.into(),
            version: FORMAT_VERSION,
            camera,
            fps: out.fps,
            seed: out.seed,
            rng: RNG_ALGORITHM.into(),
            noise: out.noise,
        };
        write_stream_file(&dir.join(stream_file_name(camera)), Some(&header), out.stream(camera))?;
    }
    write_ground_truth(&dir.join(GROUND_TRUTH_FILE), out)
}

pub fn write_stream_file(
    path: &Path,
    header: Option<&StreamHeader>,
    frames: &[FrameObservation],
) -> Result<(), FileError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> io::Result<()> {
        if let Some(h) = header {
            writeln!(w, "{}", serde_json::to_string(h).map_err(io::Error::other)?)?;
        }
        for f in frames {
            writeln!(w, "{}", serialize_frame(f))?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Reads a stream file. A first line carrying a `format` key is the header.
pub fn read_stream_file(path: &Path) -> Result<(Option<StreamHeader>, Vec<FrameObservation>), FileError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut header = None;
    let mut frames = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if n == 0 && is_header(&line) {
            header = Some(serde_json::from_str(&line).map_err(|e| FileError::Malformed {
                path: path.to_path_buf(),
                line: 1,
                message: format!("bad stream header: {e}"),
            })?);
            continue;
        }
        let frame = parse_frame(&line).map_err(|source| FileError::Record {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?;
        frames.push(frame);
    }
    Ok((header, frames))
}

fn is_header(line: &str) -> bool {
    serde_json::from_str::<Value>(line)
        .ok()
        .and_then(|v| v.get("format").cloned())
        .is_some()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TruthLine {
    Header { format: String, version: u32, seed: u64, rng: String },
    Entry(GroundTruthEntry),
    Final(ExpectedCounts),
}

pub fn write_ground_truth(path: &Path, out: &SimOutput) -> Result<(), FileError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut lines = vec![TruthLine::Header {
        format: GROUND_TRUTH_FORMAT.into(),
        version: FORMAT_VERSION,
        seed: out.seed,
        rng: RNG_ALGORITHM.into(),
    }];
    lines.extend(out.ground_truth.entries.iter().copied().map(TruthLine::Entry));
    lines.push(TruthLine::Final(out.ground_truth.final_counts));
    let mut write = || -> io::Result<()> {
        for l in &lines {
            writeln!(w, "{}", serde_json::to_string(l).map_err(io::Error::other)?)?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth, FileError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    let mut final_counts = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TruthLine = serde_json::from_str(&line).map_err(|e| FileError::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        match parsed {
            TruthLine::Header { .. } => {}
            TruthLine::Entry(e) => entries.push(e),
            TruthLine::Final(c) => final_counts = Some(c),
        }
    }
    let final_counts = final_counts.ok_or_else(|| FileError::Malformed {
        path: path.to_path_buf(),
        line: 0,
        message: "missing final line".into(),
    })?;
    Ok(GroundTruth { entries, final_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate::{generate_scenario, GeneratorParams};
    use crate::sim::simulate::simulate;

    #[test]
    fn sim_output_survives_disk() {
        let dir = tempfile::tempdir().unwrap();
        let script = generate_scenario(4, &GeneratorParams::default());
        let out = simulate(&script, &NoiseModel::default(), 4).unwrap();
        write_sim_output(dir.path(), &out).unwrap();

        for camera in Camera::ALL {
            let (header, frames) = read_stream_file(&dir.path().join(stream_file_name(camera))).unwrap();
            let header = header.unwrap();
            assert_eq!(header.camera, camera);
            assert_eq!(header.seed, 4);
            assert_eq!(header.rng, RNG_ALGORITHM);
            assert_eq!(frames, out.stream(camera));
        }
        assert_eq!(read_ground_truth(&dir.path().join(GROUND_TRUTH_FILE)).unwrap(), out.ground_truth);
    }

    #[test]
    fn bad_record_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("in.ndjson");
        fs::write(
            &path,
            "{\"camera\":\"IN\",\"frame_index\":0,\"timestamp_ms\":0,\"detections\":[]}\n{\"camera\":\"IN\"\n",
        )
        .unwrap();
        match read_stream_file(&path) {
            Err(FileError::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
