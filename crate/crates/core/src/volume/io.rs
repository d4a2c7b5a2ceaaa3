//! Volume files: single-file NIfTI-1 (`.nii`, `.nii.gz`) and a raw
//! little-endian float32 format (`.rawvol` plus a `.rawvol.txt` sidecar).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{voxel_count, BinaryMask, Dims, Grid3, ProbabilityVolume, ScalarVolume};
use crate::error::{Error, Result};

const NIFTI_HEADER_LEN: usize = 348;
const NIFTI_DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeFormat {
    Nifti,
    NiftiGz,
    Raw,
}

impl VolumeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii.gz") {
            Ok(VolumeFormat::NiftiGz)
        } else if name.ends_with(".nii") {
            Ok(VolumeFormat::Nifti)
        } else if name.ends_with(".rawvol") {
            Ok(VolumeFormat::Raw)
        } else {
            Err(Error::Format {
                path: path.to_path_buf(),
                field: "extension",
                message: "expected .nii, .nii.gz or .rawvol".into(),
            })
        }
    }
}

/// Voxel payload decoded to f64 before it is narrowed to a volume kind.
#[derive(Debug)]
struct Decoded {
    dims: Dims,
    spacing: [f64; 3],
    values: Vec<f64>,
}

fn format_err(path: &Path, field: &'static str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field,
        message: message.into(),
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let data: Vec<f32> = decoded.values.iter().map(|&v| v as f32).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(format_err(path, "data", format!("non-finite voxel at index {i}")));
    }
    ScalarVolume::with_spacing(Grid3::new(decoded.dims, data)?, decoded.spacing)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let mut data = Vec::with_capacity(decoded.values.len());
    let [_, h, w] = decoded.dims;
    for (i, &v) in decoded.values.iter().enumerate() {
        if v == 0.0 {
            data.push(0);
        } else if v == 1.0 {
            data.push(1);
        } else {
            return Err(Error::Validation(format!(
                "{}: mask value {v} at voxel (z={}, y={}, x={}) is not 0 or 1",
                path.display(),
                i / (h * w),
                (i / w) % h,
                i % w
            )));
        }
    }
    Ok(BinaryMask::from_grid_unchecked(Grid3::new(decoded.dims, data)?))
}

pub fn save_volume(volume: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = volume.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(path.as_ref(), volume.dims(), volume.spacing(), DT_FLOAT32, &payload)
}

pub fn save_probability(volume: &ProbabilityVolume, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = volume.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    encode(path.as_ref(), volume.dims(), [1.0; 3], DT_FLOAT32, &payload)
}

/// Masks are written as uint8 NIfTI, or float32 in the raw format.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if VolumeFormat::from_path(path)? == VolumeFormat::Raw {
        let payload: Vec<u8> = mask
            .data()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        return encode(path, mask.dims(), [1.0; 3], DT_FLOAT32, &payload);
    }
    encode(path, mask.dims(), [1.0; 3], DT_UINT8, mask.data())
}

fn decode(path: &Path) -> Result<Decoded> {
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Raw => decode_raw(path),
        VolumeFormat::Nifti | VolumeFormat::NiftiGz => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
                let mut out = Vec::new();
                GzDecoder::new(bytes.as_slice())
                    .read_to_end(&mut out)
                    .map_err(|e| Error::io(path, e))?;
                out
            } else {
                bytes
            };
            decode_nifti(path, &bytes)
        }
    }
}

fn encode(path: &Path, dims: Dims, spacing: [f64; 3], datatype: i16, payload: &[u8]) -> Result<()> {
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Raw => {
            debug_assert_eq!(datatype, DT_FLOAT32);
            fs::write(path, payload).map_err(|e| Error::io(path, e))?;
            let sidecar = raw_sidecar(path);
            let text = format!(
                "dims {} {} {}\nspacing {} {} {}\n",
                dims[0], dims[1], dims[2], spacing[0], spacing[1], spacing[2]
            );
            fs::write(&sidecar, text).map_err(|e| Error::io(sidecar, e))
        }
        VolumeFormat::Nifti => {
            let mut bytes = nifti_header(dims, spacing, datatype);
            bytes.extend_from_slice(payload);
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        VolumeFormat::NiftiGz => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut enc = GzEncoder::new(std::io::BufWriter::new(file), Compression::fast());
            enc.write_all(&nifti_header(dims, spacing, datatype))
                .and_then(|_| enc.write_all(payload))
                .and_then(|_| enc.finish().map(|_| ()))
                .map_err(|e| Error::io(path, e))
        }
    }
}

fn raw_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

fn decode_raw(path: &Path) -> Result<Decoded> {
    let sidecar = raw_sidecar(path);
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let mut dims = None;
    let mut spacing = [1.0f64; 3];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let values: Vec<&str> = parts.collect();
        match key {
            "dims" => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    values.iter().map(|v| v.parse::<usize>()).collect();
                match parsed {
                    Ok(v) if v.len() == 3 && v.iter().all(|&d| d > 0) => dims = Some([v[0], v[1], v[2]]),
                    _ => return Err(format_err(&sidecar, "dims", format!("expected three positive integers, got `{line}`"))),
                }
            }
            "spacing" => {
                let parsed: std::result::Result<Vec<f64>, _> =
                    values.iter().map(|v| v.parse::<f64>()).collect();
                match parsed {
                    Ok(v) if v.len() == 3 && v.iter().all(|s| s.is_finite() && *s > 0.0) => {
                        spacing = [v[0], v[1], v[2]]
                    }
                    _ => return Err(format_err(&sidecar, "spacing", format!("expected three positive reals, got `{line}`"))),
                }
            }
            _ => return Err(format_err(&sidecar, "header", format!("unknown line `{line}`"))),
        }
    }
    let dims = dims.ok_or_else(|| format_err(&sidecar, "dims", "missing"))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = voxel_count(dims) * 4;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            "dims",
            format!("dims {dims:?} need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Decoded { dims, spacing, values })
}

fn nifti_header(dims: Dims, spacing: [f64; 3], datatype: i16) -> Vec<u8> {
    let mut h = vec![0u8; NIFTI_DATA_OFFSET];
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_i32 = |h: &mut [u8], off: usize, v: i32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    put_i32(&mut h, 0, NIFTI_HEADER_LEN as i32);
    // dim[0..8]: rank then (x, y, z) = (W, H, D)
    let dim = [3i16, dims[2] as i16, dims[1] as i16, dims[0] as i16, 1, 1, 1, 1];
    for (k, v) in dim.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * k, *v);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix(datatype));
    let pixdim = [1.0f32, spacing[2] as f32, spacing[1] as f32, spacing[0] as f32, 1.0, 1.0, 1.0, 1.0];
    for (k, v) in pixdim.iter().enumerate() {
        put_f32(&mut h, 76 + 4 * k, *v);
    }
    put_f32(&mut h, 108, NIFTI_DATA_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    h[123] = 2; // mm
    put_i16(&mut h, 254, 1); // sform: scanner
    put_f32(&mut h, 280, spacing[2] as f32);
    put_f32(&mut h, 296 + 4, spacing[1] as f32);
    put_f32(&mut h, 312 + 8, spacing[0] as f32);
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn bitpix(datatype: i16) -> i16 {
    match datatype {
        DT_UINT8 | DT_INT8 => 8,
        DT_INT16 | DT_UINT16 => 16,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 32,
        DT_FLOAT64 => 64,
        _ => 0,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        if self.big_endian {
            a.reverse();
        }
        a
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.arr(off))
    }
    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.arr(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.arr(off))
    }
}

fn decode_nifti(path: &Path, bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(format_err(
            path,
            "sizeof_hdr",
            format!("file has {} bytes, header needs {NIFTI_HEADER_LEN}", bytes.len()),
        ));
    }
    let le = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let big_endian = match le {
        348 => false,
        _ if i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == 348 => true,
        other => return Err(format_err(path, "sizeof_hdr", format!("expected 348, found {other}"))),
    };
    let r = Reader { bytes, big_endian };
    if &bytes[344..347] != b"n+1" {
        return Err(format_err(path, "magic", "expected single-file NIfTI-1 magic `n+1`"));
    }
    let rank = r.i16(40);
    if !(3..=7).contains(&rank) {
        return Err(format_err(path, "dim", format!("rank {rank} is not a 3D volume")));
    }
    let mut dim = [0i64; 8];
    for (k, d) in dim.iter_mut().enumerate() {
        *d = r.i16(40 + 2 * k) as i64;
    }
    if dim[1..4].iter().any(|&d| d <= 0) {
        return Err(format_err(path, "dim", format!("non-positive extent in {:?}", &dim[1..4])));
    }
    if (4..=rank as usize).any(|k| dim[k] > 1) {
        return Err(format_err(path, "dim", "multi-channel or 4D volumes are not supported"));
    }
    let dims = [dim[3] as usize, dim[2] as usize, dim[1] as usize];
    let datatype = r.i16(70);
    let width = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(format_err(path, "datatype", format!("unsupported code {other}"))),
    };
    let mut spacing = [1.0f64; 3];
    for k in 0..3 {
        let p = r.f32(76 + 4 * (k + 1)).abs() as f64;
        spacing[2 - k] = if p.is_finite() && p > 0.0 { p } else { 1.0 };
    }
    let offset = r.f32(108);
    if !(offset.is_finite() && offset >= NIFTI_HEADER_LEN as f32) {
        return Err(format_err(path, "vox_offset", format!("invalid offset {offset}")));
    }
    let offset = offset as usize;
    let n = voxel_count(dims);
    let end = offset + n * width;
    if bytes.len() < end {
        return Err(format_err(
            path,
            "dim",
            format!("dims {dims:?} need {} data bytes, file has {}", n * width, bytes.len().saturating_sub(offset)),
        ));
    }
    let slope = r.f32(112) as f64;
    let inter = r.f32(116) as f64;
    let scaled = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);
    let data = Reader { bytes: &bytes[offset..end], big_endian };
    let values = (0..n)
        .map(|i| {
            let o = i * width;
            let v = match datatype {
                DT_UINT8 => data.bytes[o] as f64,
                DT_INT8 => data.bytes[o] as i8 as f64,
                DT_INT16 => data.i16(o) as f64,
                DT_UINT16 => u16::from_le_bytes(data.arr(o)) as f64,
                DT_INT32 => data.i32(o) as f64,
                DT_UINT32 => u32::from_le_bytes(data.arr(o)) as f64,
                DT_FLOAT32 => data.f32(o) as f64,
                _ => f64::from_le_bytes(data.arr(o)),
            };
            if scaled {
                v * slope + inter
            } else {
                v
            }
        })
        .collect();
    Ok(Decoded { dims, spacing, values })
}
