//! NRRD reader/writer: attached or detached data, raw/gzip/ascii encodings.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

use super::io::{decode_samples, Endian, SampleType};
use super::Image;

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "NRRD",
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Raw,
    Gzip,
    Ascii,
}

#[derive(Debug)]
struct Header {
    sample: SampleType,
    sizes: Vec<usize>,
    encoding: Encoding,
    endian: Endian,
    spacings: Option<Vec<f64>>,
    data_file: Option<String>,
    byte_skip: i64,
}

fn parse_sample_type(s: &str) -> Result<SampleType> {
    Ok(match s {
        "uchar" | "unsigned char" | "uint8" | "uint8_t" => SampleType::U8,
        "signed char" | "int8" | "int8_t" => SampleType::I8,
        "ushort" | "unsigned short" | "unsigned short int" | "uint16" | "uint16_t" => SampleType::U16,
        "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => SampleType::I16,
        "uint" | "unsigned int" | "uint32" | "uint32_t" => SampleType::U32,
        "int" | "signed int" | "int32" | "int32_t" => SampleType::I32,
        "float" => SampleType::F32,
        "double" => SampleType::F64,
        other => return Err(Error::UnsupportedBitDepth(format!("NRRD type '{other}'"))),
    })
}

fn parse_vector_norm(s: &str) -> Option<f64> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let parts: Option<Vec<f64>> = inner.split(',').map(|p| p.trim().parse().ok()).collect();
    parts.map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Splits a header block from the bytes that follow its terminating blank line.
fn split_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut lines = Vec::new();
    let mut pos = 0;
    let mut terminated = false;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |e| pos + e);
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| format_err("header is not valid text"))?
            .trim_end_matches('\r')
            .to_string();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() {
            terminated = true;
            break;
        }
        lines.push(line);
    }
    let first = lines.first().ok_or_else(|| format_err("empty file"))?;
    if !first.starts_with("NRRD000") {
        return Err(format_err("missing NRRD magic"));
    }

    let mut sample = None;
    let mut dimension = None;
    let mut sizes = None;
    let mut encoding = None;
    let mut endian = Endian::Little;
    let mut spacings = None;
    let mut directions = None;
    let mut data_file = None;
    let mut byte_skip = 0i64;
    for line in &lines[1..] {
        if line.starts_with('#') || line.contains(":=") {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(format_err(format!("bad header line '{line}'")));
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "type" => sample = Some(parse_sample_type(value)?),
            "dimension" => {
                dimension = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| format_err("bad dimension"))?,
                )
            }
            "sizes" => {
                let v: std::result::Result<Vec<usize>, _> =
                    value.split_whitespace().map(str::parse).collect();
                sizes = Some(v.map_err(|_| format_err("bad sizes"))?);
            }
            "encoding" => {
                encoding = Some(match value {
                    "raw" => Encoding::Raw,
                    "gzip" | "gz" => Encoding::Gzip,
                    "ascii" | "text" | "txt" => Encoding::Ascii,
                    other => {
                        return Err(Error::UnsupportedFormat(format!("NRRD encoding '{other}'")))
                    }
                })
            }
            "endian" => {
                endian = match value {
                    "little" => Endian::Little,
                    "big" => Endian::Big,
                    other => return Err(format_err(format!("bad endian '{other}'"))),
                }
            }
            "spacings" => {
                let v: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse).collect();
                spacings = Some(v.map_err(|_| format_err("bad spacings"))?);
            }
            "space directions" => {
                let norms: Vec<Option<f64>> =
                    value.split_whitespace().map(parse_vector_norm).collect();
                directions = norms.into_iter().collect::<Option<Vec<f64>>>();
            }
            "data file" | "datafile" => data_file = Some(value.to_string()),
            "byte skip" | "byteskip" => {
                byte_skip = value.parse().map_err(|_| format_err("bad byte skip"))?
            }
            _ => {}
        }
    }
    let sample = sample.ok_or_else(|| format_err("missing 'type'"))?;
    let sizes = sizes.ok_or_else(|| format_err("missing 'sizes'"))?;
    let dimension = dimension.ok_or_else(|| format_err("missing 'dimension'"))?;
    if sizes.len() != dimension {
        return Err(format_err(format!(
            "dimension {dimension} but {} sizes",
            sizes.len()
        )));
    }
    let encoding = encoding.ok_or_else(|| format_err("missing 'encoding'"))?;
    if data_file.is_none() && !terminated {
        return Err(format_err("header not terminated by a blank line"));
    }
    Ok((
        Header {
            sample,
            sizes,
            encoding,
            endian,
            spacings: spacings.or(directions),
            data_file,
            byte_skip,
        },
        pos,
    ))
}

pub(super) fn read(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, data_start) = split_header(&bytes)?;
    let payload: Vec<u8> = match &header.data_file {
        Some(name) => {
            let data_path: PathBuf = path
                .parent()
                .map(|p| p.join(name))
                .unwrap_or_else(|| PathBuf::from(name));
            std::fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?
        }
        None => bytes[data_start..].to_vec(),
    };
    decode_payload(&header, payload)
}

fn decode_payload(header: &Header, payload: Vec<u8>) -> Result<Image> {
    let n: usize = header.sizes.iter().product();
    let payload = match header.encoding {
        Encoding::Gzip => {
            let mut out = Vec::new();
            GzDecoder::new(payload.as_slice())
                .read_to_end(&mut out)
                .map_err(|e| format_err(format!("gzip: {e}")))?;
            out
        }
        _ => payload,
    };
    let data = match header.encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(&payload).map_err(|_| format_err("ascii payload"))?;
            let values: std::result::Result<Vec<f64>, _> =
                text.split_whitespace().map(str::parse).collect();
            values.map_err(|_| format_err("ascii payload value"))?
        }
        _ => {
            let width = header.sample.size();
            let body = if header.byte_skip == -1 {
                let need = n * width;
                &payload[payload.len().saturating_sub(need)..]
            } else {
                let skip = usize::try_from(header.byte_skip)
                    .map_err(|_| format_err("negative byte skip"))?;
                payload.get(skip..).unwrap_or(&[])
            };
            if body.len() != n * width {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: body.len() / width,
                });
            }
            decode_samples(body, header.sample, header.endian)
        }
    };
    if data.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: data.len(),
        });
    }
    // NRRD lists the fastest axis first
    let dims: Vec<usize> = header.sizes.iter().rev().copied().collect();
    let mut img = Image::new(&dims, data)?;
    if let Some(sp) = &header.spacings {
        if sp.len() == dims.len() && sp.iter().all(|s| s.is_finite() && *s > 0.0) {
            let rev: Vec<f64> = sp.iter().rev().copied().collect();
            img = img.with_spacing(&rev)?;
        }
    }
    if let Some(hi) = header.sample.integer_max() {
        img = img.with_intensity_range(0.0, hi);
    }
    Ok(img)
}

/// Attached little-endian float32 NRRD.
pub(super) fn encode(img: &Image) -> Vec<u8> {
    let sizes: Vec<String> = img.dims().iter().rev().map(|d| d.to_string()).collect();
    let spacings: Vec<String> = img.spacing().iter().rev().map(|s| format!("{s}")).collect();
    let mut out = format!(
        "NRRD0004\n# written by curvefilt\ntype: float\ndimension: {}\nsizes: {}\nspacings: {}\nencoding: raw\nendian: little\n\n",
        img.rank(),
        sizes.join(" "),
        spacings.join(" ")
    )
    .into_bytes();
    out.reserve(img.len() * 4);
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}
