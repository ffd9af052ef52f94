//! File formats: raw grids, 16-bit images and run manifests.
//!
//! Raw grid layout (stable):
//!
//! ```text
//! offset 0   8 bytes  magic  57 54 46 42 46 00 01 00  ("WTFBF\0\1\0")
//! offset 8   8 bytes  M as u64 little-endian
//! offset 16  (M+1)² f64 little-endian, row-major, entry k1*(M+1)+k2
//! ```
//!
//! Images put `k1` on rows and `k2` on columns, grayscale 16 bit, with an
//! affine min-max map whose constants go in the manifest, not the image.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::QuadratureSpec;
use crate::params::{FieldParams, GridSpec};

pub const RAW_MAGIC: [u8; 8] = *b"WTFBF\0\x01\0";
const RAW_HEADER_LEN: usize = 16;

pub fn encode_raw(grid: GridSpec, values: &[f64]) -> Result<Vec<u8>> {
    let side = grid.points_per_axis();
    if values.len() != side * side {
        return Err(Error::InvalidInput(format!("{} values for a {side}x{side} grid", values.len())));
    }
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * values.len());
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&(grid.resolution() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<(GridSpec, Vec<f64>)> {
    if bytes.len() < RAW_HEADER_LEN || bytes[..8] != RAW_MAGIC {
        return Err(Error::Format("missing WTFBF raw header".into()));
    }
    let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let grid = GridSpec::new(usize::try_from(m).map_err(|_| Error::Format(format!("resolution {m} too large")))?)?;
    let side = grid.points_per_axis();
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != 8 * side * side {
        return Err(Error::Format(format!("expected {} data bytes, found {}", 8 * side * side, body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((grid, values))
}

pub fn read_raw(path: &Path) -> Result<(GridSpec, Vec<f64>)> {
    decode_raw(&fs::read(path)?)
}

/// Constants of the map `v -> round((v - min) / (max - min) * 65535)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize non-finite values".into()));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Normalization { min, max })
    }

    /// A flat field maps to 0.
    pub fn level(&self, v: f64) -> u16 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0;
        }
        ((v - self.min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
    }

    pub fn levels(&self, values: &[f64]) -> Vec<u16> {
        values.iter().map(|&v| self.level(v)).collect()
    }
}

/// Binary PGM (P5), maxval 65535, samples big-endian as the format requires.
pub fn encode_pgm(side: usize, levels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n65535\n").into_bytes();
    out.reserve(2 * levels.len());
    for l in levels {
        out.extend_from_slice(&l.to_be_bytes());
    }
    out
}

pub fn encode_png(side: usize, levels: &[u16]) -> Result<Vec<u8>> {
    let side32 = u32::try_from(side).map_err(|_| Error::InvalidInput(format!("image side {side} too large")))?;
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(side32, side32, levels.to_vec())
        .ok_or_else(|| Error::InvalidInput("level buffer does not match image size".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Raw,
    Pgm,
    Png,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Raw => "raw",
            OutputFormat::Pgm => "pgm",
            OutputFormat::Png => "png",
        }
    }

    /// File bytes and, for images, the normalization used.
    pub fn encode(self, grid: GridSpec, values: &[f64]) -> Result<(Vec<u8>, Option<Normalization>)> {
        match self {
            OutputFormat::Raw => Ok((encode_raw(grid, values)?, None)),
            OutputFormat::Pgm | OutputFormat::Png => {
                let norm = Normalization::of(values)?;
                let levels = norm.levels(values);
                let side = grid.points_per_axis();
                let bytes = if self == OutputFormat::Pgm { encode_pgm(side, &levels) } else { encode_png(side, &levels)? };
                Ok((bytes, Some(norm)))
            }
        }
    }
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?
        .to_string_lossy();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalization: Option<Normalization>,
}

/// Everything needed to rerun a command. `arguments` is the argument list
/// after the program name; rerunning re-parses it with the output
/// directory replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub params: Option<FieldParams>,
    pub grid: Option<GridSpec>,
    pub base_seed: Option<u64>,
    pub samples: usize,
    pub noise_convention: String,
    pub quadrature: Option<QuadratureSpec>,
    pub outputs: Vec<OutputRecord>,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let manifest: RunManifest = serde_json::from_slice(&fs::read(path)?)?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(Error::Format(format!("manifest schema {} (expected {MANIFEST_SCHEMA})", manifest.schema)));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
