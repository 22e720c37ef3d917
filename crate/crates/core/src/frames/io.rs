//! Frame files: binary 16-bit PGM (P5) or CSV (one row of pixels per line),
//! one file per frame, listed in a JSON manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::process::{roi_profile, ProcessedSeries, RoiSpec};
use super::{Frame, FrameMetadata, FrameStack};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    Pgm,
    Csv,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            FrameFormat::Csv => "csv",
        }
    }

    fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "pgm" => Some(FrameFormat::Pgm),
            "csv" => Some(FrameFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub format: FrameFormat,
    pub width: usize,
    pub height: usize,
    /// Frame file names, relative to the manifest's directory.
    pub frames: Vec<String>,
    #[serde(default)]
    pub fringe_period_px: Option<f64>,
    #[serde(default)]
    pub metadata: FrameMetadata,
}

fn malformed(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

pub fn save_frame(frame: &Frame, path: &Path, format: FrameFormat) -> Result<()> {
    let bytes = match format {
        FrameFormat::Pgm => encode_pgm(frame)?,
        FrameFormat::Csv => encode_csv(frame).into_bytes(),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_frame(path: &Path, format: FrameFormat) -> Result<Frame> {
    let bytes = fs::read(path)?;
    match format {
        FrameFormat::Pgm => decode_pgm(&bytes, path),
        FrameFormat::Csv => decode_csv(&bytes, path),
    }
}

fn encode_pgm(frame: &Frame) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes();
    out.reserve(frame.data.len() * 2);
    for &v in &frame.data {
        if !(0.0..=65535.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::NotPgmRepresentable(v));
        }
        out.extend_from_slice(&(v as u16).to_be_bytes());
    }
    Ok(out)
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(usize, usize)> {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, format!("byte {pos}"), format!("truncated header, expected {what}"))),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok((start, pos))
    };
    let (s, e) = token("magic")?;
    if &bytes[s..e] != b"P5" {
        return Err(malformed(path, "byte 0", "not a binary PGM (P5) file"));
    }
    let mut number = |what: &str| -> Result<usize> {
        let (s, e) = token(what)?;
        std::str::from_utf8(&bytes[s..e])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| malformed(path, format!("byte {s}"), format!("invalid {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(malformed(path, "header", format!("invalid header {width}x{height} maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster_start = pos + 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample_bytes;
    let raster = bytes.get(raster_start..).unwrap_or(&[]);
    if raster.len() != expected {
        return Err(malformed(
            path,
            format!("byte {raster_start}"),
            format!("raster has {} bytes, expected {expected}", raster.len()),
        ));
    }
    let mut data = Vec::with_capacity(width * height);
    for (i, chunk) in raster.chunks_exact(sample_bytes).enumerate() {
        let v = if sample_bytes == 1 {
            usize::from(chunk[0])
        } else {
            usize::from(u16::from_be_bytes([chunk[0], chunk[1]]))
        };
        if v > maxval {
            return Err(malformed(
                path,
                format!("byte {}", raster_start + i * sample_bytes),
                format!("sample {v} exceeds maxval {maxval}"),
            ));
        }
        data.push(v as f64);
    }
    Frame::new(width, height, data)
}

fn encode_csv(frame: &Frame) -> String {
    let mut out = String::with_capacity(frame.data.len() * 6);
    for y in 0..frame.height {
        for (i, v) in frame.row(y).iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn decode_csv(bytes: &[u8], path: &Path) -> Result<Frame> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(path, format!("byte {}", e.valid_up_to()), "not UTF-8"))?;
    let mut width = None;
    let mut data = Vec::new();
    let mut height = 0;
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (col, field) in line.split(',').enumerate() {
            let at = || format!("line {}, column {}", ln + 1, col + 1);
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(path, at(), format!("'{}' is not a number", field.trim())))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(malformed(path, at(), format!("pixel value {v} is negative or not finite")));
            }
            data.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(malformed(path, format!("line {}", ln + 1), format!("row has {count} values, expected {w}")))
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| malformed(path, "line 1", "empty frame"))?;
    Frame::new(width, height, data)
}

fn frame_name(index: usize, total: usize, format: FrameFormat) -> String {
    let digits = total.saturating_sub(1).to_string().len().max(5);
    format!("frame_{index:0digits$}.{}", format.extension())
}

/// Writes every frame plus `manifest.json` into `dir`; returns the manifest path.
pub fn save_stack(stack: &FrameStack, dir: &Path, format: FrameFormat) -> Result<PathBuf> {
    write_stack(
        stack.frames.iter().cloned().map(Ok),
        stack.len(),
        dir,
        format,
        stack.fringe_period_px,
        stack.metadata.clone(),
    )
}

/// Like [`save_stack`], consuming `count` frames one at a time.
pub fn write_stack(
    frames: impl IntoIterator<Item = Result<Frame>>,
    count: usize,
    dir: &Path,
    format: FrameFormat,
    fringe_period_px: Option<f64>,
    metadata: FrameMetadata,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut dims = None;
    let mut names = Vec::with_capacity(count);
    for (i, frame) in frames.into_iter().enumerate() {
        let frame = frame?;
        match dims {
            None => dims = Some(frame.dims()),
            Some(d) if d != frame.dims() => {
                return Err(Error::InconsistentDimensions {
                    expected: d,
                    got: frame.dims(),
                })
            }
            Some(_) => {}
        }
        let name = frame_name(i, count, format);
        save_frame(&frame, &dir.join(&name), format)?;
        names.push(name);
    }
    let Some((width, height)) = dims else {
        return Err(Error::BadOptics("a frame stack needs at least one frame".into()));
    };
    let manifest = StackManifest {
        format,
        width,
        height,
        frames: names,
        fringe_period_px,
        metadata,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn read_manifest(manifest_path: &Path) -> Result<StackManifest> {
    let text = fs::read_to_string(manifest_path)?;
    serde_json::from_str(&text).map_err(|e| {
        malformed(manifest_path, format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })
}

fn manifest_frames<'a>(
    manifest: &'a StackManifest,
    manifest_path: &'a Path,
) -> impl Iterator<Item = Result<Frame>> + 'a {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.frames.iter().map(move |name| {
        let frame = load_frame(&dir.join(name), manifest.format)?;
        if frame.dims() != (manifest.width, manifest.height) {
            return Err(Error::InconsistentDimensions {
                expected: (manifest.width, manifest.height),
                got: frame.dims(),
            });
        }
        Ok(frame)
    })
}

pub fn load_stack(manifest_path: &Path) -> Result<FrameStack> {
    let manifest = read_manifest(manifest_path)?;
    let frames = manifest_frames(&manifest, manifest_path).collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, manifest.fringe_period_px, manifest.metadata.clone())
}

/// ROI profiles of a stored stack, reading one frame at a time.
pub fn load_series(manifest_path: &Path, roi: &RoiSpec) -> Result<ProcessedSeries> {
    let manifest = read_manifest(manifest_path)?;
    roi.check_bounds(manifest.width, manifest.height)?;
    let profiles = manifest_frames(&manifest, manifest_path)
        .map(|f| f.map(|f| roi_profile(&f, roi)))
        .collect::<Result<Vec<_>>>()?;
    ProcessedSeries::new(profiles, roi.reference_column, manifest.fringe_period_px)
}

/// Loads loose frame files; the format follows each file's extension
/// unless given.
pub fn load_frames(paths: &[PathBuf], format: Option<FrameFormat>) -> Result<FrameStack> {
    let frames = paths
        .iter()
        .map(|p| {
            let fmt = format
                .or_else(|| FrameFormat::from_path(p))
                .ok_or_else(|| malformed(p, "name", "unknown frame format"))?;
            load_frame(p, fmt)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameStack::new(frames, None, FrameMetadata::default())
}
