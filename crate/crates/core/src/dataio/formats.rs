//! Netpbm-family codecs: PFM for float depth, PPM for RGB, PGM for masks.
//!
//! Depth PFM payloads are row-major float32 starting at the top row, with the
//! little-endian scale line `-1.0`. Round trips are bit-exact.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use std::path::Path;

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::parse(path, msg)
}

/// Reads one whitespace-delimited ASCII token starting at `*pos`.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err(path, "unexpected end of header"));
    }
    Ok(&bytes[start..*pos])
}

fn token_str<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    let tok = next_token(bytes, pos, path)?;
    std::str::from_utf8(tok).map_err(|_| parse_err(path, "non-ASCII header token"))
}

fn parse_dim(s: &str, path: &Path) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| parse_err(path, format!("bad dimension `{s}`")))
}

pub fn encode_pfm(depth: &Array2<f32>) -> Vec<u8> {
    let (h, w) = (depth.shape()[0], depth.shape()[1]);
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for v in depth.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let mut pos = 0usize;
    let magic = token_str(bytes, &mut pos, path)?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(parse_err(
                path,
                "3-channel `PF` not supported for depth maps; expected single-channel `Pf`",
            ))
        }
        other => return Err(parse_err(path, format!("bad magic `{other}`"))),
    }
    let w = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let h = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let scale: f64 = token_str(bytes, &mut pos, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad scale line"))?;
    if scale == 0.0 {
        return Err(parse_err(path, "scale must be nonzero"));
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(path, "missing separator before payload"));
    }
    pos += 1;
    let need = h * w * 4;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(parse_err(
            path,
            format!("truncated payload: need {need} bytes, have {}", payload.len()),
        ));
    }
    let mut data = Vec::with_capacity(h * w);
    for chunk in payload[..need].chunks_exact(4) {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        data.push(v);
    }
    Array2::from_shape_vec((h, w), data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_pfm(path: &Path, depth: &Array2<f32>) -> Result<()> {
    std::fs::write(path, encode_pfm(depth)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Array2<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn encode_ppm(rgb: &Array3<f32>) -> Vec<u8> {
    let (h, w) = (rgb.shape()[0], rgb.shape()[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for v in rgb.iter() {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Array3<f32>> {
    let mut pos = 0usize;
    let magic = token_str(bytes, &mut pos, path)?;
    if magic != "P6" {
        return Err(parse_err(path, format!("bad magic `{magic}`, expected P6")));
    }
    let w = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let h = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let maxval = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    if maxval != 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(path, "missing separator before payload"));
    }
    pos += 1;
    let need = h * w * 3;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(parse_err(
            path,
            format!("truncated payload: need {need} bytes, have {}", payload.len()),
        ));
    }
    let data: Vec<f32> = payload[..need].iter().map(|&b| b as f32 / 255.0).collect();
    Array3::from_shape_vec((h, w, 3), data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_ppm(path: &Path, rgb: &Array3<f32>) -> Result<()> {
    std::fs::write(path, encode_ppm(rgb)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Array3<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, path)
}

pub fn encode_pgm(mask: &Array2<bool>) -> Vec<u8> {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.iter().map(|&m| if m { 255u8 } else { 0u8 }));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Array2<bool>> {
    let mut pos = 0usize;
    let magic = token_str(bytes, &mut pos, path)?;
    if magic != "P5" {
        return Err(parse_err(path, format!("bad magic `{magic}`, expected P5")));
    }
    let w = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let h = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    let maxval = parse_dim(token_str(bytes, &mut pos, path)?, path)?;
    if maxval != 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(path, "missing separator before payload"));
    }
    pos += 1;
    let need = h * w;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(parse_err(
            path,
            format!("truncated payload: need {need} bytes, have {}", payload.len()),
        ));
    }
    let data: Vec<bool> = payload[..need].iter().map(|&b| b >= 128).collect();
    Array2::from_shape_vec((h, w), data).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_pgm(path: &Path, mask: &Array2<bool>) -> Result<()> {
    std::fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Array2<bool>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn pfm_bytes_match_format_definition() {
        let depth = arr2(&[[1.0f32, 2.0], [3.0, 4.0]]);
        let bytes = encode_pfm(&depth);
        let mut expected = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), "Pf\n2 2\n-1.0\n".len() + 16);
    }

    #[test]
    fn pfm_round_trip_bit_exact() {
        let depth = arr2(&[[0.125f32, 7.5e-3, 1e9], [3.25, f32::MIN_POSITIVE, 42.0]]);
        let bytes = encode_pfm(&depth);
        let back = decode_pfm(&bytes, Path::new("mem.pfm")).unwrap();
        for (a, b) in depth.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pfm_rejects_three_channel_header() {
        let bytes = b"PF\n2 2\n-1.0\n".to_vec();
        let err = decode_pfm(&bytes, Path::new("bad.pfm")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.pfm"), "error should name the file: {msg}");
        assert!(msg.contains("PF"));
    }

    #[test]
    fn pfm_rejects_truncated_payload() {
        let depth = arr2(&[[1.0f32, 2.0], [3.0, 4.0]]);
        let mut bytes = encode_pfm(&depth);
        bytes.truncate(bytes.len() - 3);
        let err = decode_pfm(&bytes, Path::new("short.pfm")).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn pfm_reads_big_endian_scale() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        let arr = decode_pfm(&bytes, Path::new("be.pfm")).unwrap();
        assert_eq!(arr[[0, 0]], 2.5);
    }

    #[test]
    fn ppm_round_trip_within_quantization() {
        let rgb = Array3::from_shape_fn((4, 6, 3), |(i, j, k)| {
            ((i * 31 + j * 7 + k * 3) % 100) as f32 / 99.0
        });
        let bytes = encode_ppm(&rgb);
        let back = decode_ppm(&bytes, Path::new("mem.ppm")).unwrap();
        let max_err = rgb
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 255.0, "max_err = {max_err}");
    }

    #[test]
    fn pgm_round_trip_exact() {
        let mask = Array2::from_shape_fn((5, 3), |(i, j)| (i + j) % 2 == 0);
        let back = decode_pgm(&encode_pgm(&mask), Path::new("mem.pgm")).unwrap();
        assert_eq!(mask, back);
    }
}
