//! Interleaved RGB byte images and PPM (P6) interchange.

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major interleaved RGB image, one byte per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "empty image");
        assert_eq!(data.len(), width * height * CHANNELS, "pixel buffer length");
        Image { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Image::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Serialize as binary PPM (P6, maxval 255).
pub fn save_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// Parse binary PPM. Accepts arbitrary whitespace and `#` comments in the header.
pub fn load_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        return Err(Error::MalformedInput("not a P6 PPM".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = read_header_int(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::MalformedInput(format!("maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedInput("zero dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedInput("missing header terminator".into()));
    }
    pos += 1;
    let need = width * height * CHANNELS;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::MalformedInput(format!(
            "truncated pixel payload: have {} need {}",
            payload.len(),
            need
        )));
    }
    Ok(Image::new(width, height, payload[..need].to_vec()))
}

fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::MalformedInput("expected integer in PPM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedInput("bad integer in PPM header".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    pub(crate) fn random_image(seed: u64, w: usize, h: usize) -> Image {
        let mut s = derive_stream(seed, 0, 0, 0, Purpose::Synth);
        let data = (0..w * h * CHANNELS).map(|_| s.next_below(256) as u8).collect();
        Image::new(w, h, data)
    }

    #[test]
    fn smallest_image_serializes_exactly() {
        let img = Image::new(1, 1, vec![255, 0, 0]);
        assert_eq!(save_ppm(&img), b"P6\n1 1\n255\n\xff\x00\x00");
    }

    #[test]
    fn round_trip_is_byte_exact() {
        for seed in 0..100u64 {
            let img = random_image(seed, 7, 5);
            assert_eq!(load_ppm(&save_ppm(&img)).unwrap(), img);
        }
    }

    #[test]
    fn ascii_ppm_rejected() {
        assert!(matches!(load_ppm(b"P3\n1 1\n255\n1 2 3\n"), Err(Error::MalformedInput(_))));
    }

    #[test]
    fn wrong_maxval_rejected() {
        assert!(load_ppm(b"P6\n1 1\n65535\n\xff\x00\x00").is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        assert!(load_ppm(b"P6\n2 2\n255\n\xff\x00").is_err());
    }

    #[test]
    fn header_comments_accepted() {
        let bytes = b"P6 # a comment\n# another\n 1\t1 \n255\n\x01\x02\x03";
        let img = load_ppm(bytes).unwrap();
        assert_eq!(img.pixel(0, 0), [1, 2, 3]);
    }
}
