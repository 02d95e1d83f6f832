//! Binary PPM (P6) previews.

use std::path::Path;

use crate::error::{Error, Result};
use crate::vlft::Tensor;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an H x W x 3 image in [0, 1], or an H x W map replicated to gray.
pub fn encode(img: &Tensor) -> Result<Vec<u8>> {
    let (h, w, channels) = match img.shape[..] {
        [h, w, 3] => (h, w, 3),
        [h, w] => (h, w, 1),
        _ => return Err(Error::pre(format!("cannot preview tensor of shape {:?}", img.shape))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for px in img.data.chunks_exact(channels) {
        if channels == 3 {
            out.extend(px.iter().map(|&v| to_byte(v)));
        } else {
            out.extend([to_byte(px[0]); 3]);
        }
    }
    Ok(out)
}

/// Scales a single-channel map to [0, 1] by its maximum before encoding.
pub fn encode_normalized(map: &Tensor) -> Result<Vec<u8>> {
    let max = map.data.iter().cloned().fold(0.0f32, f32::max);
    let scaled = Tensor {
        shape: map.shape.clone(),
        data: map.data.iter().map(|&v| if max > 0.0 { v / max } else { 0.0 }).collect(),
    };
    encode(&scaled)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_pixels() {
        let t = Tensor::new(vec![1, 2, 3], vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.2]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..11], b"P6\n2 1\n255\n");
        assert_eq!(&b[11..], &[0, 128, 255, 255, 0, 51]);
        let g = encode_normalized(&Tensor::new(vec![1, 2], vec![1.0, 4.0]).unwrap()).unwrap();
        assert_eq!(&g[11..], &[64, 64, 64, 255, 255, 255]);
        assert!(encode(&Tensor::zeros(vec![2])).is_err());
    }
}
