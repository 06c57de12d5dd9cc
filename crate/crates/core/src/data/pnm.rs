//! Binary PGM (P5) and PPM (P6) images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: message.into(),
    }
}

/// Encodes an image; one channel gives P5, three give P6, maxval 255.
pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    let plane = img.width * img.height;
    out.reserve(plane * img.channels);
    for i in 0..plane {
        for c in 0..img.channels {
            let v = img.data[c * plane + i].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_pnm(img: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

/// Splits the header into tokens, honouring `#` comments.
fn header(bytes: &[u8], path: &Path) -> Result<([usize; 3], usize, u8)> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'6') {
        return Err(Error::Version(format!("{}: not a binary PGM/PPM file", path.display())));
    }
    let kind = bytes[1];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(parse_err(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(path, "bad header field"))?;
    }
    // exactly one whitespace byte separates the header from the samples
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(parse_err(path, "missing separator after maxval"));
    }
    Ok((fields, pos + 1, kind))
}

pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Image> {
    let ([w, h, maxval], start, kind) = header(bytes, path)?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, format!("maxval {maxval} out of range")));
    }
    let channels = if kind == b'5' { 1 } else { 3 };
    let bps = if maxval > 255 { 2 } else { 1 };
    let need = w * h * channels * bps;
    let body = &bytes[start..];
    if body.len() < need {
        return Err(parse_err(path, format!("expected {need} sample bytes, found {}", body.len())));
    }
    let plane = w * h;
    let mut data = vec![0.0; plane * channels];
    let maxval = maxval as f64;
    for i in 0..plane {
        for c in 0..channels {
            let k = (i * channels + c) * bps;
            let raw = if bps == 2 {
                u16::from_be_bytes([body[k], body[k + 1]]) as f64
            } else {
                body[k] as f64
            };
            data[c * plane + i] = (raw / maxval).min(1.0);
        }
    }
    Image::from_planar(w, h, channels, data)
}

pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}
