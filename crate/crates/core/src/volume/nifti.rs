//! Minimal single-file NIfTI-1 (`.nii` / `.nii.gz`) support for 3D masks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Geometry, LabelVolume, VoxelMask};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const DATA_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";
const AFFINE_TOL: f64 = 1e-3;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

/// Reads a mask; voxels with value > 0.5 are foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<VoxelMask> {
    let (geometry, values) = read_volume(path.as_ref())?;
    VoxelMask::new(geometry, values.into_iter().map(|v| v > 0.5).collect())
}

/// Reads an integer label volume and attaches the caller's label table.
pub fn read_labels(path: impl AsRef<Path>, label_map: BTreeMap<u32, String>) -> Result<LabelVolume> {
    let (geometry, values) = read_volume(path.as_ref())?;
    let data = values
        .into_iter()
        .map(|v| {
            let r = v.round();
            if r < 0.0 || (r - v).abs() > 1e-3 {
                Err(Error::Format(format!("label value {v} is not a non-negative integer")))
            } else {
                Ok(r as u32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVolume::new(geometry, data, label_map)
}

/// Writes an 8-bit unsigned mask. A `.gz` extension selects gzip encoding.
pub fn write_mask(mask: &VoxelMask, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = mask.data().iter().map(|&v| v as u8).collect();
    write_volume(path.as_ref(), mask.geometry(), DT_UINT8, &data)
}

/// Writes a label volume as 16-bit signed integers.
pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let mut data = Vec::with_capacity(labels.data().len() * 2);
    for &l in labels.data() {
        let v = i16::try_from(l)
            .map_err(|_| Error::invalid(format!("label {l} does not fit in int16")))?;
        data.extend_from_slice(&v.to_le_bytes());
    }
    write_volume(path.as_ref(), labels.geometry(), DT_INT16, &data)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_volume(path: &Path) -> Result<(Geometry, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "{} bytes is shorter than a NIfTI-1 header",
            bytes.len()
        )));
    }
    if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<LittleEndian>(&bytes)
    } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
        parse::<BigEndian>(&bytes)
    } else {
        Err(Error::Format("sizeof_hdr is not 348".into()))
    }
}

fn parse<B: ByteOrder>(bytes: &[u8]) -> Result<(Geometry, Vec<f64>)> {
    if &bytes[344..348] != MAGIC {
        return Err(Error::Format(format!(
            "magic {:?} is not single-file NIfTI-1",
            &bytes[344..348]
        )));
    }
    let i16_at = |off: usize| B::read_i16(&bytes[off..off + 2]);
    let f32_at = |off: usize| B::read_f32(&bytes[off..off + 4]) as f64;

    let ndim = i16_at(40);
    if !(3..=7).contains(&ndim) {
        return Err(Error::Format(format!("dim[0] = {ndim}, expected a 3D volume")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let v = i16_at(42 + 2 * a);
        if v <= 0 {
            return Err(Error::Format(format!("dim[{}] = {v}", a + 1)));
        }
        *d = v as usize;
    }
    for extra in 3..ndim as usize {
        if i16_at(42 + 2 * extra) > 1 {
            return Err(Error::Format("only 3D volumes are supported".into()));
        }
    }

    let datatype = i16_at(70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => return Err(Error::Format(format!("unsupported datatype code {other}"))),
    };

    let pixdim: Vec<f64> = (0..8).map(|i| f32_at(76 + 4 * i)).collect();
    let vox_offset = f32_at(108);
    let slope = f32_at(112);
    let inter = f32_at(116);
    let qform_code = i16_at(252);
    let sform_code = i16_at(254);

    let affine = if sform_code > 0 {
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().take(3).enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(280 + 16 * r + 4 * c);
            }
        }
        m[3][3] = 1.0;
        m
    } else if qform_code > 0 {
        let q = [f32_at(256), f32_at(260), f32_at(264)];
        let offset = [f32_at(268), f32_at(272), f32_at(276)];
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        quatern_to_affine(q, offset, [pixdim[1], pixdim[2], pixdim[3]], qfac)
    } else {
        // Method 1 of the format: pixdim scaling only.
        let mut m = [[0.0; 4]; 4];
        for a in 0..3 {
            m[a][a] = pixdim[a + 1];
        }
        m[3][3] = 1.0;
        m
    };
    let geometry = Geometry::from_affine(dims, &affine, AFFINE_TOL)?;

    let start = if vox_offset.is_finite() && vox_offset >= DATA_OFFSET as f64 {
        vox_offset as usize
    } else {
        DATA_OFFSET
    };
    let n = geometry.len();
    let end = start + n * width;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "data truncated: need {end} bytes, file has {}",
            bytes.len()
        )));
    }
    let payload = &bytes[start..end];
    let mut values: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| b as f64).collect(),
        DT_INT16 => payload.chunks_exact(2).map(|c| B::read_i16(c) as f64).collect(),
        _ => payload.chunks_exact(4).map(|c| B::read_f32(c) as f64).collect(),
    };
    if slope.is_finite() && slope != 0.0 && (slope != 1.0 || inter != 0.0) {
        let inter = if inter.is_finite() { inter } else { 0.0 };
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok((geometry, values))
}

fn write_volume(path: &Path, geometry: &Geometry, datatype: i16, data: &[u8]) -> Result<()> {
    if geometry.dims.iter().any(|&d| d == 0 || d > i16::MAX as usize) {
        return Err(Error::invalid(format!(
            "dims {:?} cannot be stored in NIfTI-1",
            geometry.dims
        )));
    }
    let mut hdr = vec![0u8; DATA_OFFSET];
    LittleEndian::write_i32(&mut hdr[0..4], HEADER_SIZE as i32);
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for a in 0..3 {
        dim[a + 1] = geometry.dims[a] as i16;
    }
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut hdr[40 + 2 * i..], *d);
    }
    let bitpix: i16 = match datatype {
        DT_UINT8 => 8,
        DT_INT16 => 16,
        _ => 32,
    };
    LittleEndian::write_i16(&mut hdr[70..], datatype);
    LittleEndian::write_i16(&mut hdr[72..], bitpix);

    let affine = geometry.affine();
    let (quat, qfac) = affine_to_quatern(&affine, geometry.spacing);
    let mut pixdim = [1.0f32; 8];
    pixdim[0] = qfac as f32;
    for a in 0..3 {
        pixdim[a + 1] = geometry.spacing[a] as f32;
    }
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut hdr[76 + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut hdr[108..], DATA_OFFSET as f32);
    LittleEndian::write_f32(&mut hdr[112..], 1.0);
    hdr[123] = 2; // mm
    LittleEndian::write_i16(&mut hdr[252..], 1);
    LittleEndian::write_i16(&mut hdr[254..], 1);
    for i in 0..3 {
        LittleEndian::write_f32(&mut hdr[256 + 4 * i..], quat[i] as f32);
        LittleEndian::write_f32(&mut hdr[268 + 4 * i..], affine[i][3] as f32);
    }
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut hdr[280 + 16 * r + 4 * c..], affine[r][c] as f32);
        }
    }
    hdr[344..348].copy_from_slice(MAGIC);

    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let file = BufWriter::new(File::create(path)?);
    if gz {
        // mtime stays zero so repeated writes are byte-identical
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&hdr)?;
        enc.write_all(data)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(&hdr)?;
        file.write_all(data)?;
        file.flush()?;
    }
    Ok(())
}

fn quatern_to_affine(q: [f64; 3], offset: [f64; 3], pixdim: [f64; 3], qfac: f64) -> [[f64; 4]; 4] {
    let [b, c, d] = q;
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let scale = [pixdim[0], pixdim[1], pixdim[2] * qfac];
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * scale[j];
        }
        m[i][3] = offset[i];
    }
    m[3][3] = 1.0;
    m
}

/// Quaternion (b, c, d) and qfac for the rotation part of an affine.
fn affine_to_quatern(affine: &[[f64; 4]; 4], spacing: [f64; 3]) -> ([f64; 3], f64) {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = affine[i][j] / spacing[j];
        }
    }
    let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    let qfac = if det < 0.0 { -1.0 } else { 1.0 };
    if qfac < 0.0 {
        for row in &mut r {
            row[2] = -row[2];
        }
    }
    let trace = r[0][0] + r[1][1] + r[2][2] + 1.0;
    let (a, mut b, mut c, mut d);
    if trace > 0.5 {
        a = 0.5 * trace.sqrt();
        b = 0.25 * (r[2][1] - r[1][2]) / a;
        c = 0.25 * (r[0][2] - r[2][0]) / a;
        d = 0.25 * (r[1][0] - r[0][1]) / a;
    } else {
        let xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
        let yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
        let zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r[0][1] + r[1][0]) / b;
            d = 0.25 * (r[0][2] + r[2][0]) / b;
            a = 0.25 * (r[2][1] - r[1][2]) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r[0][1] + r[1][0]) / c;
            d = 0.25 * (r[1][2] + r[2][1]) / c;
            a = 0.25 * (r[0][2] - r[2][0]) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r[0][2] + r[2][0]) / d;
            c = 0.25 * (r[1][2] + r[2][1]) / d;
            a = 0.25 * (r[1][0] - r[0][1]) / d;
        }
        if a < 0.0 {
            b = -b;
            c = -c;
            d = -d;
        }
    }
    ([b, c, d], qfac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Orientation;

    #[test]
    fn quaternion_round_trips_every_axis_permutation() {
        for code in ["LAS", "RAS", "LPI", "RPS", "SAR", "AIL", "PIR", "ILA"] {
            let o: Orientation = code.parse().unwrap();
            let g = Geometry::new([4, 5, 6], [1.0, 2.0, 3.0], o, [-4.0, 7.5, 2.0]).unwrap();
            let affine = g.affine();
            let (q, qfac) = affine_to_quatern(&affine, g.spacing);
            let back = quatern_to_affine(q, g.origin, g.spacing, qfac);
            for i in 0..3 {
                for j in 0..4 {
                    assert!(
                        (back[i][j] - affine[i][j]).abs() < 1e-9,
                        "{code}: {back:?} vs {affine:?}"
                    );
                }
            }
        }
    }
}
