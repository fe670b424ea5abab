//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reading and writing.
//!
//! Only the voxel lattice is interpreted. Orientation fields are carried as
//! opaque header bytes so that a map written with [`write_nifti_like`] keeps
//! the geometry of the image it was derived from.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Dims, Mask3D, SubjectStack, Volume3D};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC: [u8; 4] = *b"n+1\0";

/// Datatype codes accepted on read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Self::Uint8,
            4 => Self::Int16,
            8 => Self::Int32,
            16 => Self::Float32,
            64 => Self::Float64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        match self {
            Self::Uint8 => 2,
            Self::Int16 => 4,
            Self::Int32 => 8,
            Self::Float32 => 16,
            Self::Float64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::Uint8 => 1,
            Self::Int16 => 2,
            Self::Int32 | Self::Float32 => 4,
            Self::Float64 => 8,
        }
    }
}

/// Decoded header fields plus the raw little-endian header bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: Datatype,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    /// The stream was big-endian and has been byte-swapped.
    pub swapped: bool,
    raw: Vec<u8>,
}

impl NiftiHeader {
    pub fn dims(&self) -> Dims {
        Dims::new(
            self.dim[1].max(1) as usize,
            self.dim[2].max(1) as usize,
            self.dim[3].max(1) as usize,
        )
    }

    /// Number of 3D volumes (1 for a 3D image).
    pub fn volumes(&self) -> usize {
        if self.dim[0] == 4 {
            self.dim[4].max(1) as usize
        } else {
            1
        }
    }

    pub fn voxel_size_mm(&self) -> [f64; 3] {
        let fix = |v: f32| {
            let v = (v as f64).abs();
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        };
        [fix(self.pixdim[1]), fix(self.pixdim[2]), fix(self.pixdim[3])]
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        (self.scl_slope != 0.0 && self.scl_slope.is_finite())
            .then_some((self.scl_slope as f64, self.scl_inter as f64))
    }
}

struct Fields<'a> {
    bytes: &'a [u8],
    big_endian: bool,
}

impl Fields<'_> {
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

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn decompress(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    MultiGzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::TruncatedStream {
                needed: HEADER_SIZE,
                found: out.len(),
            },
            _ => Error::Io(e),
        })?;
    Ok(out)
}

fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::TruncatedStream {
            needed: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[344..348]);
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let le = Fields {
        bytes,
        big_endian: false,
    };
    let big_endian = le.i32(0) != HEADER_SIZE as i32;
    let f = Fields { bytes, big_endian };
    if f.i32(0) != HEADER_SIZE as i32 {
        return Err(Error::InvalidVolume(format!(
            "sizeof_hdr = {} in either byte order",
            le.i32(0)
        )));
    }
    let mut dim = [0i16; 8];
    for (k, d) in dim.iter_mut().enumerate() {
        *d = f.i16(40 + 2 * k);
    }
    if !(dim[0] == 3 || dim[0] == 4) {
        return Err(Error::UnsupportedDim(dim[0]));
    }
    if dim[1..=dim[0] as usize].iter().any(|&d| d < 1) {
        return Err(Error::InvalidVolume(format!("non-positive extent in {dim:?}")));
    }
    let datatype = Datatype::from_code(f.i16(70))?;
    let mut pixdim = [0f32; 8];
    for (k, p) in pixdim.iter_mut().enumerate() {
        *p = f.f32(76 + 4 * k);
    }
    let header = NiftiHeader {
        dim,
        datatype,
        pixdim,
        vox_offset: f.f32(108),
        scl_slope: f.f32(112),
        scl_inter: f.f32(116),
        swapped: big_endian,
        raw: bytes[..HEADER_SIZE].to_vec(),
    };
    Ok(header)
}

fn decode_payload(header: &NiftiHeader, bytes: &[u8]) -> Result<Vec<f64>> {
    let n = header.dims().len() * header.volumes();
    let width = header.datatype.size();
    let start = header.vox_offset.max(HEADER_SIZE as f32) as usize;
    let needed = start + n * width;
    if bytes.len() < needed {
        return Err(Error::TruncatedStream {
            needed,
            found: bytes.len(),
        });
    }
    let payload = &bytes[start..needed];
    let f = Fields {
        bytes: payload,
        big_endian: header.swapped,
    };
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let off = i * width;
            match header.datatype {
                Datatype::Uint8 => payload[off] as f64,
                Datatype::Int16 => f.i16(off) as f64,
                Datatype::Int32 => f.i32(off) as f64,
                Datatype::Float32 => f.f32(off) as f64,
                Datatype::Float64 => f64::from_le_bytes(f.arr(off)),
            }
        })
        .collect();
    if let Some((slope, inter)) = header.scaling() {
        out.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    Ok(out)
}

fn read_image(bytes: &[u8]) -> Result<(NiftiHeader, Vec<f64>)> {
    let owned;
    let bytes = if is_gzip(bytes) {
        owned = decompress(bytes)?;
        &owned[..]
    } else {
        bytes
    };
    let header = parse_header(bytes)?;
    let data = decode_payload(&header, bytes)?;
    Ok((header, data))
}

/// Decodes a single 3D volume (a 4D image must hold exactly one volume).
pub fn read_nifti(bytes: &[u8]) -> Result<(Volume3D, NiftiHeader)> {
    let (header, data) = read_image(bytes)?;
    if header.volumes() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected one volume, found {}",
            header.volumes()
        )));
    }
    let vol = Volume3D::new(header.dims(), header.voxel_size_mm(), data)?;
    Ok((vol, header))
}

/// Decodes a 4D image into one subject per volume.
pub fn read_nifti_stack(bytes: &[u8]) -> Result<(SubjectStack, NiftiHeader)> {
    let (header, data) = read_image(bytes)?;
    let stack = SubjectStack::new(header.dims(), header.volumes(), data)?
        .with_voxel_size(header.voxel_size_mm());
    Ok((stack, header))
}

fn base_header(dims: Dims, volumes: usize, voxel: [f64; 3]) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let mut put = |off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
    put(0, &(HEADER_SIZE as i32).to_le_bytes());
    put(38, b"r");
    let ndim: i16 = if volumes > 1 { 4 } else { 3 };
    let dim: [i16; 8] = [
        ndim,
        dims.nx as i16,
        dims.ny as i16,
        dims.nz as i16,
        volumes as i16,
        1,
        1,
        1,
    ];
    for (k, d) in dim.iter().enumerate() {
        put(40 + 2 * k, &d.to_le_bytes());
    }
    put(70, &Datatype::Float32.code().to_le_bytes());
    put(72, &32i16.to_le_bytes());
    let pixdim = [1.0f32, voxel[0] as f32, voxel[1] as f32, voxel[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (k, p) in pixdim.iter().enumerate() {
        put(76 + 4 * k, &p.to_le_bytes());
    }
    put(108, &(VOX_OFFSET as f32).to_le_bytes());
    put(112, &1.0f32.to_le_bytes());
    put(116, &0.0f32.to_le_bytes());
    // xyzt_units: mm
    put(123, &[2u8]);
    put(344, &MAGIC);
    h
}

fn append_payload(out: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn masked(vol: &Volume3D, mask: Option<&Mask3D>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        m.check_dims(vol.dims())?;
    }
    Ok(vol
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| match mask {
            Some(m) if !m.contains(i) => 0.0,
            _ => v,
        })
        .collect())
}

/// Encodes `vol` as an uncompressed little-endian float32 NIfTI-1 stream.
/// Voxels outside `mask` are written as 0.
pub fn write_nifti(vol: &Volume3D, mask: Option<&Mask3D>) -> Result<Vec<u8>> {
    let values = masked(vol, mask)?;
    let mut out = base_header(vol.dims(), 1, vol.voxel_size_mm());
    out.reserve(values.len() * 4);
    append_payload(&mut out, values.into_iter());
    Ok(out)
}

/// Like [`write_nifti`], copying orientation and description fields from
/// `template`.
pub fn write_nifti_like(
    vol: &Volume3D,
    mask: Option<&Mask3D>,
    template: &NiftiHeader,
) -> Result<Vec<u8>> {
    let mut out = write_nifti(vol, mask)?;
    if !template.swapped {
        // descrip .. srow_z, then intent_name
        out[148..344].copy_from_slice(&template.raw[148..344]);
        out[123] = template.raw[123];
    }
    Ok(out)
}

pub fn write_nifti_stack(stack: &SubjectStack) -> Vec<u8> {
    let mut out = base_header(stack.dims(), stack.subjects(), stack.voxel_size_mm());
    out.reserve(stack.data().len() * 4);
    append_payload(&mut out, stack.data().iter().copied());
    out
}

pub fn gzip(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(bytes)?;
    Ok(enc.finish()?)
}

fn wants_gzip(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".gz")
}

/// Writes raw NIfTI bytes, gzip-compressing when the path ends in `.gz`.
pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if wants_gzip(path) {
        std::fs::write(path, gzip(bytes)?)?;
    } else {
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn load_volume(path: &Path) -> Result<(Volume3D, NiftiHeader)> {
    read_nifti(&std::fs::read(path)?)
}

pub fn load_stack(path: &Path) -> Result<(SubjectStack, NiftiHeader)> {
    read_nifti_stack(&std::fs::read(path)?)
}

pub fn save_volume(path: &Path, vol: &Volume3D, mask: Option<&Mask3D>) -> Result<()> {
    save_bytes(path, &write_nifti(vol, mask)?)
}
