//! Binary PGM (P5) and PPM (P6) images with 8-bit samples, mapped to and
//! from `[0, 1]`.

use std::path::Path;

use crate::error::{LbsError, Result};
use crate::numerics::DenseVector;

/// One grayscale plane or three color planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: Vec<DenseVector>,
}

impl Image {
    pub fn gray(plane: DenseVector) -> Self {
        Self {
            channels: vec![plane],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        let s = self.channels[0].shape();
        (s[0], s[1])
    }

    /// Channel mean for color images.
    pub fn luminance(&self) -> DenseVector {
        if self.channels.len() == 1 {
            return self.channels[0].clone();
        }
        let k = 1.0 / self.channels.len() as f64;
        let mut acc = self.channels[0].zeros_like();
        for c in &self.channels {
            acc.axpy_in_place(k, c).expect("channels share a shape");
        }
        acc
    }
}

fn format_err(msg: impl Into<String>) -> LbsError {
    LbsError::Format(msg.into())
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(format_err("file too short for a PNM header"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(format_err("truncated PNM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *f = text
            .parse()
            .map_err(|_| format_err(format!("bad PNM header field {text:?}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(format_err("missing whitespace after PNM header"));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_start: pos + 1,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let nch = match &h.magic {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(format_err(format!(
                "unsupported image type {:?}; expected binary P5 or P6",
                String::from_utf8_lossy(m)
            )))
        }
    };
    if h.maxval == 0 || h.maxval > 255 {
        return Err(format_err(format!("only 8-bit images are supported (maxval {})", h.maxval)));
    }
    if h.width == 0 || h.height == 0 {
        return Err(format_err("image has zero size"));
    }
    let n = h.width * h.height;
    let data = &bytes[h.data_start..];
    if data.len() < n * nch {
        return Err(format_err(format!(
            "pixel data truncated: {} of {} bytes",
            data.len(),
            n * nch
        )));
    }
    let scale = 1.0 / h.maxval as f64;
    let channels = (0..nch)
        .map(|c| {
            let plane = (0..n).map(|i| data[i * nch + c] as f64 * scale).collect();
            DenseVector::image(h.height, h.width, plane)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Image { channels })
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let (h, w) = image.dims();
    let nch = image.channels.len();
    let magic = match nch {
        1 => "P5",
        3 => "P6",
        _ => return Err(format_err(format!("cannot encode {nch} channels"))),
    };
    for c in &image.channels {
        if c.shape() != [h, w] {
            return Err(LbsError::Dimension("image channels differ in shape".into()));
        }
    }
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * nch);
    for i in 0..h * w {
        for c in &image.channels {
            out.push(quantize(c.data()[i]));
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    decode_pnm(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

/// A mask image: pixels at zero are missing.
pub fn read_mask(path: &Path) -> Result<crate::linops::Mask> {
    let img = read_image(path)?;
    Ok(crate::linops::Mask::from_dense(&img.luminance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn gray_round_trip_on_quantized_values() {
        let mut rng = SeededRng::new(1);
        let plane = rng.uniform_vector(&[5, 7], 0.0, 1.0).map(|v| (v * 255.0).round() / 255.0);
        let img = Image::gray(plane.clone());
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back.channels.len(), 1);
        assert!(back.channels[0].sub(&plane).unwrap().norm() < 1e-12);
    }

    #[test]
    fn color_round_trip_and_luminance() {
        let planes: Vec<DenseVector> = (0..3)
            .map(|c| DenseVector::filled(&[2, 3], c as f64 * 0.4))
            .collect();
        let img = Image { channels: planes };
        let bytes = encode_pnm(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(back.channels.len(), 3);
        assert!((back.luminance().at(1, 2) - 0.4).abs() < 1e-2);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.channels[0].data(), &[0.0, 1.0]);
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n2 2\n65535\n").is_err());
        assert!(decode_pnm(b"P5").is_err());
    }

    #[test]
    fn out_of_range_values_clamp() {
        let img = Image::gray(DenseVector::image(1, 2, vec![-0.5, 1.5]).unwrap());
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back.channels[0].data(), &[0.0, 1.0]);
    }
}
