//! Tensor files: an NPY subset for exact interchange and headered CSV for
//! hand-written fixtures.
//!
//! NPY layout as read and written here:
//!
//! * magic `\x93NUMPY`, then major and minor version bytes (`1 0` or `2 0`);
//! * header length as little-endian `u16` (v1) or `u32` (v2);
//! * an ASCII dict literal such as
//!   `{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }`,
//!   padded with spaces and closed by `\n` so the data starts on a 64-byte
//!   boundary;
//! * C-order little-endian data. Readable dtypes are `<f4`, `<f8` and `<i8`;
//!   files are always written as v1 `<f8`.
//!
//! CSV files have one header row and one sample per row. Header cells of the
//! form `i_j_k` (row-major multi-indices) restore the per-sample shape of
//! higher-rank tensors; any other header yields a rank-2 tensor.

use std::fs;
use std::path::Path;

use super::IoError;
use crate::data::TensorSet;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    Npy,
    Csv,
}

impl TensorFormat {
    /// `.csv` means CSV; everything else is NPY.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => TensorFormat::Csv,
            _ => TensorFormat::Npy,
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("tensor")
        .to_string()
}

pub fn read_tensor(path: &Path) -> Result<TensorSet, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    match TensorFormat::from_path(path) {
        TensorFormat::Npy => decode_npy(&stem(path), &bytes),
        TensorFormat::Csv => decode_csv(&stem(path), &bytes),
    }
}

pub fn write_tensor(t: &TensorSet, path: &Path, format: TensorFormat) -> Result<(), IoError> {
    let bytes = match format {
        TensorFormat::Npy => encode_npy(t)?,
        TensorFormat::Csv => encode_csv(t)?,
    };
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

fn check_writable(t: &TensorSet) -> Result<(), IoError> {
    if t.sample_count() == 0 || t.sample_len() == 0 {
        return Err(IoError::RaggedRows(format!(
            "`{}` has shape {:?}; at least one value per sample is required",
            t.name(),
            t.shape()
        )));
    }
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(IoError::NonFinite(t.name().to_string()));
    }
    Ok(())
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

pub fn encode_npy(t: &TensorSet) -> Result<Vec<u8>, IoError> {
    check_writable(t)?;
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': {}, }}",
        shape_literal(t.shape())
    );
    let prefix = MAGIC.len() + 2 + 2;
    let total = (prefix + dict.len() + 1).div_ceil(ALIGN) * ALIGN;
    let mut header = dict.into_bytes();
    header.resize(total - prefix - 1, b' ');
    header.push(b'\n');

    let mut out = Vec::with_capacity(total + t.values().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(&header);
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct NpyHeader {
    descr: String,
    fortran: bool,
    shape: Vec<usize>,
}

fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str, IoError> {
    let needle = format!("'{key}'");
    let at = dict
        .find(&needle)
        .ok_or_else(|| IoError::MalformedHeader(format!("missing key {needle}")))?;
    let rest = dict[at + needle.len()..].trim_start();
    rest.strip_prefix(':')
        .map(str::trim_start)
        .ok_or_else(|| IoError::MalformedHeader(format!("no value for {needle}")))
}

fn parse_header(dict: &str) -> Result<NpyHeader, IoError> {
    let dict = dict.trim();
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return Err(IoError::MalformedHeader(
            "header is not a dict literal".into(),
        ));
    }
    let descr_src = dict_value(dict, "descr")?;
    let quote = descr_src.chars().next().filter(|c| *c == '\'' || *c == '"');
    let descr = match quote {
        Some(q) => descr_src[1..]
            .split(q)
            .next()
            .unwrap_or_default()
            .to_string(),
        None => return Err(IoError::MalformedHeader("descr is not a string".into())),
    };
    let fortran_src = dict_value(dict, "fortran_order")?;
    let fortran = if fortran_src.starts_with("True") {
        true
    } else if fortran_src.starts_with("False") {
        false
    } else {
        return Err(IoError::MalformedHeader(
            "fortran_order is not a boolean".into(),
        ));
    };
    let shape_src = dict_value(dict, "shape")?;
    let inner = shape_src
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| IoError::MalformedHeader("shape is not a tuple".into()))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| IoError::MalformedHeader(format!("bad shape entry `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NpyHeader {
        descr,
        fortran,
        shape,
    })
}

pub fn decode_npy(name: &str, bytes: &[u8]) -> Result<TensorSet, IoError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(IoError::MalformedHeader("missing NPY magic".into()));
    }
    let (header_len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        v => {
            return Err(IoError::MalformedHeader(format!(
                "unsupported NPY version {v}"
            )))
        }
    };
    let data_start = start + header_len;
    if bytes.len() < data_start {
        return Err(IoError::MalformedHeader("truncated header".into()));
    }
    let dict = std::str::from_utf8(&bytes[start..data_start])
        .map_err(|_| IoError::MalformedHeader("header is not text".into()))?;
    let header = parse_header(dict)?;
    if header.fortran {
        return Err(IoError::UnsupportedDtype("Fortran-ordered data".into()));
    }
    if header.shape.is_empty() {
        return Err(IoError::MalformedHeader(
            "rank 0 array has no sample axis".into(),
        ));
    }
    let count: usize = header.shape.iter().product();
    let width = match header.descr.as_str() {
        "<f8" | "<i8" => 8,
        "<f4" => 4,
        other => return Err(IoError::UnsupportedDtype(other.to_string())),
    };
    let data = &bytes[data_start..];
    if data.len() != count * width {
        return Err(IoError::MalformedHeader(format!(
            "expected {} data bytes, found {}",
            count * width,
            data.len()
        )));
    }
    let values: Vec<f64> = match header.descr.as_str() {
        "<f8" => data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        "<i8" => data
            .chunks_exact(8)
            .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")) as f64)
            .collect(),
        _ => data
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
    };
    Ok(TensorSet::new(name, header.shape, values)?)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn multi_index(mut flat: usize, dims: &[usize]) -> String {
    let mut idx = vec![0; dims.len()];
    for (slot, &d) in idx.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    idx.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("_")
}

pub fn encode_csv(t: &TensorSet) -> Result<Vec<u8>, IoError> {
    check_writable(t)?;
    let dims = &t.shape()[1..];
    let dims: Vec<usize> = if dims.is_empty() {
        vec![1]
    } else {
        dims.to_vec()
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..t.sample_len()).map(|j| multi_index(j, &dims)).collect();
    w.write_record(&header).map_err(IoError::csv)?;
    for row in t.samples() {
        w.write_record(row.iter().map(|v| format_f64(*v)))
            .map_err(IoError::csv)?;
    }
    w.into_inner().map_err(|e| IoError::Csv(e.to_string()))
}

/// Per-sample shape encoded by multi-index headers, if they enumerate one exactly.
fn shape_from_headers(headers: &[String]) -> Option<Vec<usize>> {
    let last: Vec<usize> = headers
        .last()?
        .split('_')
        .map(|p| p.parse().ok())
        .collect::<Option<_>>()?;
    let dims: Vec<usize> = last.iter().map(|i| i + 1).collect();
    if dims.iter().product::<usize>() != headers.len() {
        return None;
    }
    headers
        .iter()
        .enumerate()
        .all(|(j, h)| *h == multi_index(j, &dims))
        .then_some(dims)
}

pub fn decode_csv(name: &str, bytes: &[u8]) -> Result<TensorSet, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers: Vec<String> = r
        .headers()
        .map_err(IoError::csv)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(IoError::MalformedHeader("CSV has no header row".into()));
    }
    let mut values = Vec::new();
    let mut n = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(IoError::csv)?;
        if rec.len() != headers.len() {
            return Err(IoError::RaggedRows(format!(
                "row {} has {} fields, header has {}",
                line + 1,
                rec.len(),
                headers.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                IoError::MalformedHeader(format!("row {}: `{field}` is not a number", line + 1))
            })?;
            values.push(v);
        }
        n += 1;
    }
    let mut shape = vec![n];
    match shape_from_headers(&headers) {
        Some(dims) if dims.len() > 1 => shape.extend(dims),
        _ => shape.push(headers.len()),
    }
    Ok(TensorSet::new(name, shape, values)?)
}

/// Reads a column of non-negative integers (targets, labels) from any tensor file.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, IoError> {
    let t = read_tensor(path)?;
    if t.sample_len() != 1 {
        return Err(IoError::RaggedRows(format!(
            "{}: expected one value per sample, got {}",
            path.display(),
            t.sample_len()
        )));
    }
    t.values()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(IoError::MalformedHeader(format!(
                    "{}: `{v}` is not a class index",
                    path.display()
                )))
            }
        })
        .collect()
}

/// Writes integer labels as a one-column tensor.
pub fn write_labels(labels: &[usize], path: &Path, format: TensorFormat) -> Result<(), IoError> {
    let name = stem(path);
    let t = TensorSet::new(
        name,
        vec![labels.len(), 1],
        labels.iter().map(|&l| l as f64).collect(),
    )?;
    match format {
        TensorFormat::Npy => write_tensor(&t, path, format),
        TensorFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["label"]).map_err(IoError::csv)?;
            for l in labels {
                w.write_record([l.to_string()]).map_err(IoError::csv)?;
            }
            let bytes = w.into_inner().map_err(|e| IoError::Csv(e.to_string()))?;
            fs::write(path, bytes).map_err(|e| IoError::io(path, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, values: Vec<f64>) -> TensorSet {
        TensorSet::new("t", shape, values).unwrap()
    }

    #[test]
    fn npy_header_is_aligned() {
        let bytes = encode_npy(&t(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
        assert_eq!(bytes.len(), 10 + header_len + 48);
        let text = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(text.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }"));
    }

    #[test]
    fn npy_round_trip() {
        let src = t(
            vec![2, 3],
            vec![1.5, -0.0, 0.1, f64::MIN_POSITIVE, 1e300, -7.0],
        );
        let back = decode_npy("t", &encode_npy(&src).unwrap()).unwrap();
        assert_eq!(back.shape(), &[2, 3]);
        let bits = |x: &TensorSet| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&src));
        let one = t(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(decode_npy("t", &encode_npy(&one).unwrap()).unwrap(), one);
    }

    fn hand_npy(descr: &str, shape: &str, fortran: &str, data: &[u8], version: u8) -> Vec<u8> {
        let dict =
            format!("{{'descr': '{descr}', 'fortran_order': {fortran}, 'shape': {shape}, }}\n");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[version, 0]);
        if version == 1 {
            out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        } else {
            out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
        }
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn npy_other_dtypes() {
        let f4: Vec<u8> = [0.5f32, -2.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let got = decode_npy("x", &hand_npy("<f4", "(2,)", "False", &f4, 1)).unwrap();
        assert_eq!(got.values(), &[0.5, -2.0]);
        let i8s: Vec<u8> = [3i64, -4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let got = decode_npy("x", &hand_npy("<i8", "(1, 2)", "False", &i8s, 2)).unwrap();
        assert_eq!(got.values(), &[3.0, -4.0]);
        assert_eq!(got.shape(), &[1, 2]);
    }

    #[test]
    fn npy_rejections() {
        let be: Vec<u8> = 1.0f64.to_be_bytes().to_vec();
        assert!(matches!(
            decode_npy("x", &hand_npy(">f8", "(1,)", "False", &be, 1)),
            Err(IoError::UnsupportedDtype(_))
        ));
        assert!(matches!(
            decode_npy("x", &hand_npy("<f8", "(1,)", "True", &be, 1)),
            Err(IoError::UnsupportedDtype(_))
        ));
        assert!(matches!(
            decode_npy("x", &hand_npy("<f8", "(2,)", "False", &be, 1)),
            Err(IoError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_npy("x", b"not a numpy file"),
            Err(IoError::MalformedHeader(_))
        ));
    }

    #[test]
    fn write_rejects_empty_and_non_finite() {
        assert!(matches!(
            encode_npy(&t(vec![0, 3], vec![])),
            Err(IoError::RaggedRows(_))
        ));
        assert!(matches!(
            encode_csv(&t(vec![0, 3], vec![])),
            Err(IoError::RaggedRows(_))
        ));
        assert!(matches!(
            encode_npy(&t(vec![1, 1], vec![f64::NAN])),
            Err(IoError::NonFinite(_))
        ));
    }

    #[test]
    fn csv_examples() {
        let got = decode_csv("x", b"a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(got.shape(), &[2, 2]);
        assert_eq!(got.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            decode_csv("x", b"a,b\n1,2\n3\n"),
            Err(IoError::RaggedRows(_))
        ));

        let tenth = t(vec![1, 1], vec![0.1]);
        let back = decode_csv("x", &encode_csv(&tenth).unwrap()).unwrap();
        assert_eq!(back.values()[0].to_bits(), 0.1f64.to_bits());
    }

    #[test]
    fn csv_keeps_high_rank_shape() {
        let src = t(vec![2, 2, 3], (0..12).map(|v| v as f64 * 0.3).collect());
        let text = encode_csv(&src).unwrap();
        assert!(std::str::from_utf8(&text)
            .unwrap()
            .starts_with("0_0,0_1,0_2,1_0,1_1,1_2\n"));
        let back = decode_csv("t", &text).unwrap();
        assert_eq!(back, src);
    }

    #[test]
    fn shortest_decimal_round_trips() {
        for v in [
            0.1, -1e-300, 1e300, 123456.789, 5e-324, -0.0, 1e16, 9.999e15,
        ] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
