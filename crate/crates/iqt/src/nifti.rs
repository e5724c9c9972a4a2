//! NIfTI-1 file I/O.
//!
//! Reads and writes single-file NIfTI-1 (".nii", optionally gzip-compressed
//! ".nii.gz"), little-endian. Honoured header fields: dim[0..3], datatype,
//! bitpix, pixdim[1..3], vox_offset, scl_slope/scl_inter (applied on load
//! when slope != 0), magic. Orientation (sform/qform) is passed through
//! untouched on load and zeroed on save; all toolkit operations work in
//! voxel index space with spacing.
//!
//! Volumes are always written as float32 with vox_offset 352.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::{Compression, GzBuilder};

use crate::error::{IqtError, Result};
use crate::volume::Volume;

const HEADER_SIZE: usize = 348;
const MAGIC_OFFSET: usize = 344;

// NIfTI-1 datatype codes.
const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_COMPLEX64: i16 = 32;
const DT_FLOAT64: i16 = 64;
const DT_RGB24: i16 = 128;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;
const DT_COMPLEX128: i16 = 1792;

#[inline]
fn read_i16(buf: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([buf[off], buf[off + 1]])
}

#[inline]
fn read_i32(buf: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]])
}

#[inline]
fn read_f32(buf: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]])
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Read the raw (decompressed) bytes of a possibly gzipped file.
fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if is_gzip(&raw) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| IqtError::Format(format!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Load a NIfTI-1 volume from `path`.
///
/// Scalar datatypes (u8/i8/i16/u16/i32/u32/f32/f64) are cast to f64 and
/// scl_slope/scl_inter applied when slope is nonzero. Exactly three
/// dimensions are required. The slice axis defaults to 2.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(IqtError::Format(format!(
            "{}: file too small for a NIfTI-1 header ({} bytes)",
            path.display(),
            bytes.len()
        )));
    }

    let sizeof_hdr = read_i32(&bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            return Err(IqtError::Format(format!(
                "{}: big-endian NIfTI-1 is not supported",
                path.display()
            )));
        }
        return Err(IqtError::Format(format!(
            "{}: sizeof_hdr is {sizeof_hdr}, expected 348",
            path.display()
        )));
    }

    let magic = &bytes[MAGIC_OFFSET..MAGIC_OFFSET + 4];
    if magic != b"n+1\0" {
        if magic == b"ni1\0" {
            return Err(IqtError::Unsupported(format!(
                "{}: two-file (.hdr/.img) NIfTI-1 is not supported",
                path.display()
            )));
        }
        return Err(IqtError::Format(format!(
            "{}: missing NIfTI-1 magic \"n+1\"",
            path.display()
        )));
    }

    let ndim = read_i16(&bytes, 40);
    if ndim != 3 {
        return Err(IqtError::Shape(format!(
            "{}: expected a 3-dimensional volume, dim[0] = {ndim}",
            path.display()
        )));
    }
    let nx = read_i16(&bytes, 42);
    let ny = read_i16(&bytes, 44);
    let nz = read_i16(&bytes, 46);
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(IqtError::Shape(format!(
            "{}: non-positive dimension {nx}x{ny}x{nz}",
            path.display()
        )));
    }
    let dims = (nx as usize, ny as usize, nz as usize);
    let n = dims.0 * dims.1 * dims.2;

    let datatype = read_i16(&bytes, 70);
    let elem_size = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        DT_COMPLEX64 | DT_COMPLEX128 | DT_RGB24 => {
            return Err(IqtError::Unsupported(format!(
                "{}: non-scalar datatype code {datatype}",
                path.display()
            )));
        }
        other => {
            return Err(IqtError::Unsupported(format!(
                "{}: unsupported datatype code {other}",
                path.display()
            )));
        }
    };

    let pixdim = (
        read_f32(&bytes, 80) as f64,
        read_f32(&bytes, 84) as f64,
        read_f32(&bytes, 88) as f64,
    );
    for (i, s) in [pixdim.0, pixdim.1, pixdim.2].into_iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(IqtError::Format(format!(
                "{}: pixdim[{}] = {s} is not a positive voxel size",
                path.display(),
                i + 1
            )));
        }
    }

    let vox_offset = read_f32(&bytes, 108);
    if !vox_offset.is_finite() || vox_offset < HEADER_SIZE as f32 {
        return Err(IqtError::Format(format!(
            "{}: invalid vox_offset {vox_offset}",
            path.display()
        )));
    }
    let offset = vox_offset as usize;
    let needed = offset + n * elem_size;
    if bytes.len() < needed {
        return Err(IqtError::Format(format!(
            "{}: truncated payload, need {needed} bytes, have {}",
            path.display(),
            bytes.len()
        )));
    }

    let scl_slope = read_f32(&bytes, 112) as f64;
    let scl_inter = read_f32(&bytes, 116) as f64;
    let (slope, inter) = if scl_slope != 0.0 && scl_slope.is_finite() {
        (scl_slope, if scl_inter.is_finite() { scl_inter } else { 0.0 })
    } else {
        (1.0, 0.0)
    };

    let payload = &bytes[offset..needed];
    let mut data = Vec::with_capacity(n);
    match datatype {
        DT_UINT8 => data.extend(payload.iter().map(|&b| b as f64)),
        DT_INT8 => data.extend(payload.iter().map(|&b| b as i8 as f64)),
        DT_INT16 => data.extend(
            payload
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64),
        ),
        DT_UINT16 => data.extend(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64),
        ),
        DT_INT32 => data.extend(
            payload
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
        ),
        DT_UINT32 => data.extend(
            payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
        ),
        DT_FLOAT32 => data.extend(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64),
        ),
        DT_FLOAT64 => data.extend(payload.chunks_exact(8).map(|c| {
            f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]])
        })),
        _ => unreachable!(),
    }
    if slope != 1.0 || inter != 0.0 {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(IqtError::Format(format!(
            "{}: non-finite voxel value at linear index {pos}",
            path.display()
        )));
    }

    Volume::new(data, dims, pixdim)
}

/// Byte-serialise a volume as single-file NIfTI-1 float32.
fn encode(v: &Volume) -> Vec<u8> {
    let (nx, ny, nz) = v.dims();
    let (sx, sy, sz) = v.spacing();
    let mut header = [0u8; HEADER_SIZE];
    header[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    // dim[0..3]
    header[40..42].copy_from_slice(&3i16.to_le_bytes());
    header[42..44].copy_from_slice(&(nx as i16).to_le_bytes());
    header[44..46].copy_from_slice(&(ny as i16).to_le_bytes());
    header[46..48].copy_from_slice(&(nz as i16).to_le_bytes());
    for off in (48..56).step_by(2) {
        header[off..off + 2].copy_from_slice(&1i16.to_le_bytes());
    }
    header[70..72].copy_from_slice(&DT_FLOAT32.to_le_bytes());
    header[72..74].copy_from_slice(&32i16.to_le_bytes());
    // pixdim[0] is qfac; keep it 1.
    header[76..80].copy_from_slice(&1.0f32.to_le_bytes());
    header[80..84].copy_from_slice(&(sx as f32).to_le_bytes());
    header[84..88].copy_from_slice(&(sy as f32).to_le_bytes());
    header[88..92].copy_from_slice(&(sz as f32).to_le_bytes());
    header[92..96].copy_from_slice(&1.0f32.to_le_bytes());
    header[108..112].copy_from_slice(&352.0f32.to_le_bytes());
    header[112..116].copy_from_slice(&1.0f32.to_le_bytes()); // scl_slope
    header[116..120].copy_from_slice(&0.0f32.to_le_bytes()); // scl_inter
    header[123] = 2; // xyzt_units: mm
    header[MAGIC_OFFSET..MAGIC_OFFSET + 4].copy_from_slice(b"n+1\0");

    let n = nx * ny * nz;
    let mut out = Vec::with_capacity(352 + 4 * n);
    out.extend_from_slice(&header);
    out.extend_from_slice(&[0u8; 4]); // extension indicator: none
    for &val in v.data() {
        out.extend_from_slice(&(val as f32).to_le_bytes());
    }
    out
}

/// Save a volume as NIfTI-1 float32; gzip-compresses when the path ends in
/// ".gz". Writing is byte-deterministic (gzip mtime pinned to zero).
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(v);
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzBuilder::new()
            .mtime(0)
            .write(file, Compression::default());
        gz.write_all(&bytes)?;
        gz.finish()?;
    } else {
        let mut file = file;
        file.write_all(&bytes)?;
    }
    Ok(())
}
