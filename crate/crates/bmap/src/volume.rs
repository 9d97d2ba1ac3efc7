//! A strict subset of the MetaImage format: a text header followed directly
//! by a little-endian, x-fastest payload in the same file.
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! DimSize = nx ny nz
//! ElementSpacing = sx sy sz
//! ElementType = MET_UCHAR | MET_FLOAT | MET_DOUBLE
//! ElementDataFile = LOCAL
//! ```

use std::path::Path;

use bmap_core::{LabelVolume, ScalarVolume, Shape3};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Float,
    Double,
}

impl ElementType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UChar => "MET_UCHAR",
            Self::Float => "MET_FLOAT",
            Self::Double => "MET_DOUBLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "MET_UCHAR" => Some(Self::UChar),
            "MET_FLOAT" => Some(Self::Float),
            "MET_DOUBLE" => Some(Self::Double),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::UChar => 1,
            Self::Float => 4,
            Self::Double => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub shape: Shape3,
    pub element: ElementType,
    /// Keys outside the supported subset, in file order. They are ignored.
    pub unknown_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    /// `MET_UCHAR` payload; the class count is one past the largest label
    /// (at least 2).
    Labels(LabelVolume),
    Scalar(ScalarVolume),
}

const REQUIRED: [&str; 6] = [
    "ObjectType",
    "NDims",
    "DimSize",
    "ElementSpacing",
    "ElementType",
    "ElementDataFile",
];

fn header_text(shape: &Shape3, element: ElementType) -> String {
    let [sx, sy, sz] = shape.spacing;
    format!(
        "ObjectType = Image\nNDims = 3\nDimSize = {} {} {}\nElementSpacing = {sx} {sy} {sz}\nElementType = {}\nElementDataFile = LOCAL\n",
        shape.nx,
        shape.ny,
        shape.nz,
        element.as_str()
    )
}

pub fn encode_labels(labels: &LabelVolume) -> Vec<u8> {
    let mut out = header_text(labels.shape(), ElementType::UChar).into_bytes();
    out.extend_from_slice(labels.labels());
    out
}

/// Float payloads store each value rounded to `f32`. Requesting `UChar`
/// is a usage error.
pub fn encode_scalar(volume: &ScalarVolume, element: ElementType) -> Result<Vec<u8>> {
    let mut out = header_text(volume.shape(), element).into_bytes();
    match element {
        ElementType::Double => volume
            .data()
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        ElementType::Float => volume
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        ElementType::UChar => {
            return Err(Error::Usage(
                "scalar volumes are written as MET_FLOAT or MET_DOUBLE".into(),
            ))
        }
    }
    Ok(out)
}

/// Parse the header, returning it with the byte offset of the payload.
pub fn parse_header(bytes: &[u8], path: &Path) -> Result<(Header, usize)> {
    let bad = |msg: String| Error::format(path, msg);
    let mut values: [Option<String>; 6] = Default::default();
    let mut unknown_keys = Vec::new();
    let mut next_required = 0;
    let mut pos = 0;
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(bad("header ends before ElementDataFile".into()));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + len])
            .map_err(|_| bad("header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        pos += len + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(bad(format!("malformed header line {line:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        match REQUIRED.iter().position(|k| *k == key) {
            Some(slot) => {
                if slot != next_required {
                    return Err(bad(format!(
                        "expected key {} but found {key}",
                        REQUIRED[next_required]
                    )));
                }
                values[slot] = Some(value.to_string());
                next_required += 1;
                if slot == REQUIRED.len() - 1 {
                    break;
                }
            }
            None if key.ends_with("ByteOrderMSB") => {
                if !value.eq_ignore_ascii_case("false") {
                    return Err(bad("big-endian payloads are not supported".into()));
                }
            }
            None => unknown_keys.push(key.to_string()),
        }
    }
    let [object, ndims, dims, spacing, element, data_file] = values.map(|v| v.unwrap_or_default());
    if object != "Image" {
        return Err(bad(format!("unsupported ObjectType {object}")));
    }
    if ndims != "3" {
        return Err(bad(format!("unsupported NDims {ndims}")));
    }
    if data_file != "LOCAL" {
        return Err(bad(format!(
            "non-local data file {data_file} is not supported"
        )));
    }
    let element = ElementType::parse(&element)
        .ok_or_else(|| bad(format!("unsupported ElementType {element}")))?;
    let dims: Vec<usize> = parse_list(&dims).ok_or_else(|| bad(format!("bad DimSize {dims}")))?;
    let spacing: Vec<f64> =
        parse_list(&spacing).ok_or_else(|| bad(format!("bad ElementSpacing {spacing}")))?;
    let shape = Shape3::with_spacing(
        dims[0],
        dims[1],
        dims[2],
        [spacing[0], spacing[1], spacing[2]],
    )?;
    Ok((
        Header {
            shape,
            element,
            unknown_keys,
        },
        pos,
    ))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    let v: Vec<T> = s
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    (v.len() == 3).then_some(v)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Header, Volume)> {
    let (header, offset) = parse_header(bytes, path)?;
    for key in &header.unknown_keys {
        log::warn!("{}: ignoring unknown header key {key}", path.display());
    }
    let payload = &bytes[offset..];
    let n = header.shape.len();
    let expected = n * header.element.size();
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let volume = match header.element {
        ElementType::UChar => {
            let k = payload.iter().copied().max().unwrap_or(0) as usize + 1;
            Volume::Labels(LabelVolume::new(header.shape, payload.to_vec(), k.max(2))?)
        }
        ElementType::Float => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Volume::Scalar(ScalarVolume::new(header.shape, data)?)
        }
        ElementType::Double => {
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Volume::Scalar(ScalarVolume::new(header.shape, data)?)
        }
    };
    Ok((header, volume))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    decode(&fsio::read(path)?, path).map(|(_, v)| v)
}

/// Read a `MET_UCHAR` volume. With `num_classes` the labels are checked
/// against it; otherwise the count is inferred.
pub fn read_labels(path: &Path, num_classes: Option<usize>) -> Result<LabelVolume> {
    match read_volume(path)? {
        Volume::Labels(l) => match num_classes {
            Some(k) if k != l.num_classes() => {
                Ok(LabelVolume::new(*l.shape(), l.into_labels(), k)?)
            }
            _ => Ok(l),
        },
        Volume::Scalar(_) => Err(Error::format(path, "expected a MET_UCHAR label volume")),
    }
}

/// Read an intensity volume; `MET_UCHAR` payloads are widened.
pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    match read_volume(path)? {
        Volume::Scalar(s) => Ok(s),
        Volume::Labels(l) => {
            let data = l.labels().iter().map(|&v| v as f64).collect();
            Ok(ScalarVolume::new(*l.shape(), data)?)
        }
    }
}

pub fn write_labels(path: &Path, labels: &LabelVolume) -> Result<()> {
    fsio::write_atomic(path, &encode_labels(labels))
}

pub fn write_scalar(path: &Path, volume: &ScalarVolume, element: ElementType) -> Result<()> {
    fsio::write_atomic(path, &encode_scalar(volume, element)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.mhd")
    }

    #[test]
    fn header_layout_is_exact() {
        let s = Shape3::with_spacing(3, 2, 1, [1.0, 0.5, 2.0]).unwrap();
        let bytes = encode_labels(&LabelVolume::background(s, 2).unwrap());
        let text = std::str::from_utf8(&bytes[..bytes.len() - 6]).unwrap();
        assert_eq!(
            text,
            "ObjectType = Image\nNDims = 3\nDimSize = 3 2 1\nElementSpacing = 1 0.5 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n"
        );
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let s = Shape3::new(2, 2, 2).unwrap();
        let mut bytes = encode_scalar(&ScalarVolume::zeros(s), ElementType::Double).unwrap();
        bytes.truncate(bytes.len() - 3);
        let msg = decode(&bytes, p()).unwrap_err().to_string();
        assert!(
            msg.contains("61 bytes") && msg.contains("expected 64"),
            "{msg}"
        );
    }

    #[test]
    fn unknown_keys_are_collected() {
        let text = "ObjectType = Image\nComment = hi\nNDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nBinaryDataByteOrderMSB = False\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n\x01";
        let (h, v) = decode(text.as_bytes(), p()).unwrap();
        assert_eq!(h.unknown_keys, vec!["Comment".to_string()]);
        assert!(matches!(v, Volume::Labels(l) if l.labels() == [1]));
    }

    #[test]
    fn rejects_unsupported_headers() {
        let cases = [
            "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementType = MET_SHORT\nElementDataFile = LOCAL\n",
            "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = data.raw\n",
            "ObjectType = Image\nNDims = 2\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n",
            "NDims = 3\nObjectType = Image\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n",
            "ObjectType = Image\nNDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementByteOrderMSB = True\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n",
            "ObjectType = Image\nNDims = 3\nDimSize = 1 1\nElementSpacing = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n",
            "ObjectType = Image\nNDims = 3\n",
        ];
        for text in cases {
            let mut bytes = text.as_bytes().to_vec();
            bytes.push(0);
            let err = decode(&bytes, p()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn float_payload_round_trips_f32_values() {
        let s = Shape3::new(3, 1, 1).unwrap();
        let v = ScalarVolume::new(s, vec![0.5, -1.25, 3.0e7]).unwrap();
        let bytes = encode_scalar(&v, ElementType::Float).unwrap();
        assert_eq!(bytes.len(), header_text(&s, ElementType::Float).len() + 12);
        let (_, back) = decode(&bytes, p()).unwrap();
        assert_eq!(back, Volume::Scalar(v));
    }

    #[test]
    fn label_count_is_inferred_or_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.mhd");
        let s = Shape3::new(4, 1, 1).unwrap();
        write_labels(&path, &LabelVolume::new(s, vec![0, 3, 1, 0], 4).unwrap()).unwrap();
        assert_eq!(read_labels(&path, None).unwrap().num_classes(), 4);
        assert_eq!(read_labels(&path, Some(6)).unwrap().num_classes(), 6);
        assert_eq!(read_labels(&path, Some(3)).unwrap_err().exit_code(), 2);
        assert_eq!(read_scalar(&path).unwrap().data(), &[0.0, 3.0, 1.0, 0.0]);
    }
}
