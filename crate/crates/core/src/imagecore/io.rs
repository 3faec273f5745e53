//! File I/O dispatch for PGM, PNG, NRRD and raw+header.
//!
//! Integer readers return raw code values (an 8-bit PGM of constant 128
//! loads as 128.0) and record the code range in
//! [`Image::intensity_range`]. Integer writers map that range linearly onto
//! 16-bit codes, so loading then saving a 16-bit file reproduces its codes.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{nrrd, pnm, Image};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatHint {
    Pgm,
    Png,
    Nrrd,
    /// Headerless little-endian samples with a `key: value` sidecar (`.hdr`).
    Raw,
}

impl FormatHint {
    pub fn from_path(path: &Path) -> Option<FormatHint> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(FormatHint::Pgm),
            "png" => Some(FormatHint::Png),
            "nrrd" | "nhdr" => Some(FormatHint::Nrrd),
            "raw" | "hdr" => Some(FormatHint::Raw),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Endian {
    Little,
    Big,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum SampleType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    F32,
    F64,
}

impl SampleType {
    pub(super) fn size(self) -> usize {
        match self {
            SampleType::U8 | SampleType::I8 => 1,
            SampleType::U16 | SampleType::I16 => 2,
            SampleType::U32 | SampleType::I32 | SampleType::F32 => 4,
            SampleType::F64 => 8,
        }
    }

    pub(super) fn integer_max(self) -> Option<f64> {
        match self {
            SampleType::U8 => Some(u8::MAX as f64),
            SampleType::U16 => Some(u16::MAX as f64),
            _ => None,
        }
    }

    fn raw_name(self) -> &'static str {
        match self {
            SampleType::U8 => "uint8",
            SampleType::I8 => "int8",
            SampleType::U16 => "uint16",
            SampleType::I16 => "int16",
            SampleType::U32 => "uint32",
            SampleType::I32 => "int32",
            SampleType::F32 => "float32",
            SampleType::F64 => "float64",
        }
    }
}

pub(super) fn decode_samples(bytes: &[u8], sample: SampleType, endian: Endian) -> Vec<f64> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().unwrap();
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(arr),
                        Endian::Big => <$t>::from_be_bytes(arr),
                    }) as f64
                })
                .collect()
        };
    }
    match sample {
        SampleType::U8 => bytes.iter().map(|&b| b as f64).collect(),
        SampleType::I8 => bytes.iter().map(|&b| b as i8 as f64).collect(),
        SampleType::U16 => conv!(u16, 2),
        SampleType::I16 => conv!(i16, 2),
        SampleType::U32 => conv!(u32, 4),
        SampleType::I32 => conv!(i32, 4),
        SampleType::F32 => conv!(f32, 4),
        SampleType::F64 => conv!(f64, 8),
    }
}

/// Reads a 2D image (PGM/PNG/NRRD/raw) or a 3D volume (NRRD/raw).
pub fn load_image(path: &Path, hint: Option<FormatHint>) -> Result<Image> {
    let format = hint
        .or_else(|| FormatHint::from_path(path))
        .ok_or_else(|| Error::UnsupportedFormat(path.display().to_string()))?;
    match format {
        FormatHint::Pgm => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            pnm::decode(&bytes)
        }
        FormatHint::Png => read_png(path),
        FormatHint::Nrrd => nrrd::read(path),
        FormatHint::Raw => read_raw(path),
    }
}

/// Writes `img`; the format follows the file extension.
///
/// 2D images go to 16-bit PGM/PNG, float32 raw+header, or NRRD; volumes go
/// to float32 NRRD or raw+header.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let format = FormatHint::from_path(path)
        .ok_or_else(|| Error::UnsupportedFormat(path.display().to_string()))?;
    match format {
        FormatHint::Pgm | FormatHint::Png if img.rank() != 2 => Err(Error::UnsupportedFormat(
            format!("{} cannot hold a rank-{} image", path.display(), img.rank()),
        )),
        FormatHint::Pgm => {
            let codes = to_codes16(img);
            write_file(path, &pnm::encode16(img.dims()[0], img.dims()[1], &codes))
        }
        FormatHint::Png => write_png(img, path),
        FormatHint::Nrrd => write_file(path, &nrrd::encode(img)),
        FormatHint::Raw => write_raw(img, path),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_codes16(img: &Image) -> Vec<u16> {
    let (lo, hi) = img.intensity_range();
    let span = hi - lo;
    img.data()
        .iter()
        .map(|&v| {
            if !(span > 0.0) || !v.is_finite() {
                return 0;
            }
            let unit = ((v - lo) / span).clamp(0.0, 1.0);
            (unit * 65535.0).round() as u16
        })
        .collect()
}

fn read_png(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::Format {
        format: "PNG",
        message: e.to_string(),
    })?;
    let info = reader.info();
    let (color, depth) = (info.color_type, info.bit_depth);
    match color {
        png::ColorType::Grayscale => {}
        other => return Err(Error::ColorImage(format!("PNG color type {other:?}"))),
    }
    let max_code = match depth {
        png::BitDepth::Eight => 255.0,
        png::BitDepth::Sixteen => 65535.0,
        other => return Err(Error::UnsupportedBitDepth(format!("PNG {other:?}"))),
    };
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Format {
        format: "PNG",
        message: e.to_string(),
    })?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let bytes = &buf[..frame.buffer_size()];
    let data: Vec<f64> = if depth == png::BitDepth::Eight {
        bytes.iter().map(|&b| b as f64).collect()
    } else {
        bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Ok(Image::new(&[h, w], data)?.with_intensity_range(0.0, max_code))
}

fn write_png(img: &Image, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let (rows, cols) = (img.dims()[0], img.dims()[1]);
    let mut enc = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let png_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            format: "PNG",
            message: other.to_string(),
        },
    };
    let mut writer = enc.write_header().map_err(png_err)?;
    let bytes: Vec<u8> = to_codes16(img).iter().flat_map(|c| c.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

fn raw_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("raw"), path.with_extension("hdr"))
}

fn read_raw(path: &Path) -> Result<Image> {
    let (data_path, header_path) = raw_paths(path);
    let header = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let bad = |m: String| Error::Format {
        format: "raw header",
        message: m,
    };
    let mut dims = None;
    let mut spacing = None;
    let mut sample = None;
    for line in header.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| bad(format!("bad line '{line}'")))?;
        let value = value.trim();
        match key.trim() {
            "dims" => {
                let v: std::result::Result<Vec<usize>, _> =
                    value.split_whitespace().map(str::parse).collect();
                dims = Some(v.map_err(|_| bad("dims".into()))?);
            }
            "spacing" => {
                let v: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse).collect();
                spacing = Some(v.map_err(|_| bad("spacing".into()))?);
            }
            "dtype" => {
                sample = Some(match value {
                    "float32" => SampleType::F32,
                    "float64" => SampleType::F64,
                    "uint8" => SampleType::U8,
                    "uint16" => SampleType::U16,
                    other => return Err(Error::UnsupportedBitDepth(format!("raw dtype '{other}'"))),
                })
            }
            "endian" if value != "little" => {
                return Err(bad(format!("only little endian is supported, got '{value}'")))
            }
            _ => {}
        }
    }
    let dims = dims.ok_or_else(|| bad("missing dims".into()))?;
    let sample = sample.ok_or_else(|| bad("missing dtype".into()))?;
    let bytes = std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let n: usize = dims.iter().product();
    if bytes.len() != n * sample.size() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bytes.len() / sample.size(),
        });
    }
    let data = decode_samples(&bytes, sample, Endian::Little);
    let shape: Vec<usize> = dims.iter().rev().copied().collect();
    let mut img = Image::new(&shape, data)?;
    if let Some(sp) = spacing {
        let rev: Vec<f64> = sp.iter().rev().copied().collect();
        img = img.with_spacing(&rev)?;
    }
    if let Some(hi) = sample.integer_max() {
        img = img.with_intensity_range(0.0, hi);
    }
    Ok(img)
}

fn write_raw(img: &Image, path: &Path) -> Result<()> {
    let (data_path, header_path) = raw_paths(path);
    let sizes: Vec<String> = img.dims().iter().rev().map(|d| d.to_string()).collect();
    let spacing: Vec<String> = img.spacing().iter().rev().map(|s| format!("{s}")).collect();
    let header = format!(
        "dims: {}\nspacing: {}\ndtype: {}\nendian: little\n",
        sizes.join(" "),
        spacing.join(" "),
        SampleType::F32.raw_name()
    );
    let bytes: Vec<u8> = img.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    write_file(&data_path, &bytes)?;
    write_file(&header_path, header.as_bytes())
}
