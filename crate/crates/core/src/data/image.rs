//! Binary PGM (P5, 8-bit) reading and writing plus bilinear resizing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parses a binary 8-bit PGM into an `[H, W]` tensor scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::data(format!("not a binary PGM (magic {magic:?}, expected \"P5\")")));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in &mut header {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::data("malformed PGM header"))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::data(format!("PGM maxval {maxval} unsupported, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::data("PGM has zero extent"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::data("malformed PGM header"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    if payload.len() < width * height {
        return Err(Error::data(format!(
            "truncated PGM payload: {} of {} bytes",
            payload.len(),
            width * height
        )));
    }
    let data = payload[..width * height].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Tensor::new([height, width], data)?)
}

/// Encodes an `[H, W]` tensor with values in `[0, 1]` as binary PGM,
/// rounding to the nearest level.
pub fn encode_pgm(image: &Tensor) -> Result<Vec<u8>> {
    let [h, w] = image_dims(image)?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn save_image(path: &Path, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pgm(image)?).map_err(|e| Error::io(path, e))
}

/// Reads a PGM and resizes it to `[height, width]`.
pub fn load_image(path: &Path, height: usize, width: usize) -> Result<Tensor> {
    resize_bilinear(&read_pgm(path)?, height, width)
}

fn image_dims(image: &Tensor) -> Result<[usize; 2]> {
    match image.shape() {
        &[h, w] => Ok([h, w]),
        s => Err(Error::Input(format!("expected a 2-D image, got shape {s:?}"))),
    }
}

/// Bilinear resampling with pixel centers at half-integer coordinates and
/// edge clamping. Equal extents return a copy.
pub fn resize_bilinear(image: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let [h, w] = image_dims(image)?;
    if height == 0 || width == 0 {
        return Err(Error::Input("resize target has zero extent".into()));
    }
    if (h, w) == (height, width) {
        return Ok(image.clone());
    }
    let src = image.data();
    let axis = |dst: usize, from: usize, to: usize| {
        let x = ((dst as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = x.floor() as usize;
        (i0, (i0 + 1).min(from - 1), x - i0 as f64)
    };
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        let (r0, r1, fr) = axis(r, h, height);
        for c in 0..width {
            let (c0, c1, fc) = axis(c, w, width);
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bottom = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(Tensor::new([height, width], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(w: usize, h: usize, pixels: &[u8]) -> Vec<u8> {
        let mut b = format!("P5\n# comment\n{w} {h}\n255\n").into_bytes();
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn uniform_128() {
        let t = decode_pgm(&pgm(3, 2, &[128; 6])).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert!(t.data().iter().all(|&v| (v - 0.501961).abs() < 1e-6));
    }

    #[test]
    fn rejects_ascii_and_truncated() {
        let err = decode_pgm(b"P2\n2 2\n255\n0 0 0 0").unwrap_err();
        assert!(err.to_string().contains("P5"), "{err}");
        assert!(decode_pgm(&pgm(2, 2, &[1, 2, 3])).unwrap_err().to_string().contains("truncated"));
        assert!(decode_pgm(b"P5\n2 2\n65535\n").is_err());
    }

    #[test]
    fn checkerboard_same_size_is_identity() {
        let t = decode_pgm(&pgm(2, 2, &[0, 255, 255, 0])).unwrap();
        assert_eq!(resize_bilinear(&t, 2, 2).unwrap(), t);
    }

    #[test]
    fn resize_preserves_constants() {
        let t = Tensor::full([5, 7], 0.25);
        let r = resize_bilinear(&t, 16, 3).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn encode_decode_round_trip() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let t = Tensor::new([3, 4], data).unwrap();
        let back = decode_pgm(&encode_pgm(&t).unwrap()).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }
}
