//! Planar 4:2:0 frames and the Y4M / raw containers that carry them.

mod raw;
mod y4m;

pub use raw::{read_raw, write_raw, RawReader};
pub use y4m::{read_y4m, write_y4m, Y4mReader, Y4mWriter};

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported chroma sampling `{0}` (only 4:2:0 is supported)")]
    UnsupportedChroma(String),
    #[error("invalid video format: {0}")]
    InvalidFormat(String),
    #[error("frame {frame_index}: truncated payload ({got} of {expected} bytes)")]
    TruncatedFrame {
        frame_index: u64,
        got: usize,
        expected: usize,
    },
    #[error("trailing partial frame after frame {frames}: {remainder} bytes left over")]
    TrailingBytes { frames: u64, remainder: usize },
    #[error("frame {frame_index}: malformed frame header: {detail}")]
    MalformedFrameHeader { frame_index: u64, detail: String },
    #[error("frame {frame_index}: sample value {value} exceeds {bit_depth}-bit range")]
    SampleOutOfRange {
        frame_index: u64,
        value: u16,
        bit_depth: u8,
    },
    #[error("frame does not match stream format: {0}")]
    FormatMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How out-of-range 10-bit container words are treated on read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SampleCheck {
    /// Reject any sample above `2^bit_depth - 1`.
    #[default]
    Strict,
    /// Mask the sample down to `bit_depth` bits.
    Permissive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u32,
    pub den: u32,
}

impl Rational {
    pub const fn new(num: u32, den: u32) -> Self {
        Self { num, den }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den.max(1))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// Only 4:2:0 exists; the enum leaves room for the error path to name what
/// was requested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChromaSampling {
    #[default]
    Cs420,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoFormat {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub chroma: ChromaSampling,
    pub frame_rate: Rational,
}

impl VideoFormat {
    pub fn new(width: usize, height: usize, bit_depth: u8) -> Result<Self, FrameIoError> {
        let format = Self {
            width,
            height,
            bit_depth,
            chroma: ChromaSampling::Cs420,
            frame_rate: Rational::new(25, 1),
        };
        format.check()?;
        Ok(format)
    }

    pub fn with_frame_rate(mut self, frame_rate: Rational) -> Self {
        self.frame_rate = frame_rate;
        self
    }

    pub fn check(&self) -> Result<(), FrameIoError> {
        if self.width == 0 || self.height == 0 {
            return Err(FrameIoError::InvalidFormat(format!(
                "zero dimension {}x{}",
                self.width, self.height
            )));
        }
        if self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(FrameIoError::InvalidFormat(format!(
                "4:2:0 needs even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        if self.bit_depth != 8 && self.bit_depth != 10 {
            return Err(FrameIoError::InvalidFormat(format!(
                "bit depth {} not in {{8, 10}}",
                self.bit_depth
            )));
        }
        Ok(())
    }

    pub fn max_value(&self) -> u16 {
        (1u16 << self.bit_depth) - 1
    }

    /// Bytes per sample in the container.
    pub fn sample_bytes(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    /// (width, height) of plane `index` (0 = Y, 1 = Cb, 2 = Cr).
    pub fn plane_dims(&self, index: usize) -> (usize, usize) {
        if index == 0 {
            (self.width, self.height)
        } else {
            (self.width / 2, self.height / 2)
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        self.width * self.height * 3 / 2
    }

    pub fn frame_bytes(&self) -> usize {
        self.samples_per_frame() * self.sample_bytes()
    }
}

/// One image plane, samples stored row-major as `u16` regardless of bit depth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u16) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [u16] {
        &mut self.data[y * self.width..(y + 1) * self.width]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub format: VideoFormat,
    pub planes: [Plane; 3],
}

impl Frame {
    /// A frame with every sample of plane `i` set to `values[i]`.
    pub fn filled(format: VideoFormat, values: [u16; 3]) -> Self {
        let plane = |i: usize| {
            let (w, h) = format.plane_dims(i);
            Plane::filled(w, h, values[i])
        };
        Self {
            format,
            planes: [plane(0), plane(1), plane(2)],
        }
    }

    pub fn black(format: VideoFormat) -> Self {
        let mid = 1u16 << (format.bit_depth - 1);
        Self::filled(format, [0, mid, mid])
    }

    pub fn luma(&self) -> &Plane {
        &self.planes[0]
    }

    /// Verifies plane shapes and sample range against `self.format`.
    pub fn check(&self) -> Result<(), FrameIoError> {
        self.check_shape()?;
        let max = self.format.max_value();
        for (i, plane) in self.planes.iter().enumerate() {
            if let Some(&v) = plane.data.iter().find(|&&v| v > max) {
                return Err(FrameIoError::FormatMismatch(format!(
                    "plane {i} holds sample {v} above {max}"
                )));
            }
        }
        Ok(())
    }

    /// Verifies plane shapes only.
    pub fn check_shape(&self) -> Result<(), FrameIoError> {
        for (i, plane) in self.planes.iter().enumerate() {
            let (w, h) = self.format.plane_dims(i);
            if plane.width != w || plane.height != h || plane.data.len() != w * h {
                return Err(FrameIoError::FormatMismatch(format!(
                    "plane {i} is {}x{} ({} samples), expected {w}x{h}",
                    plane.width,
                    plane.height,
                    plane.data.len()
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn matches(&self, format: &VideoFormat) -> Result<(), FrameIoError> {
        if self.format.width != format.width
            || self.format.height != format.height
            || self.format.bit_depth != format.bit_depth
        {
            return Err(FrameIoError::FormatMismatch(format!(
                "frame is {}x{} {}-bit, stream is {}x{} {}-bit",
                self.format.width,
                self.format.height,
                self.format.bit_depth,
                format.width,
                format.height,
                format.bit_depth
            )));
        }
        self.check()
    }
}

/// Decodes one frame payload (I420 / I010 little-endian layout).
pub(crate) fn unpack_frame(
    format: &VideoFormat,
    bytes: &[u8],
    frame_index: u64,
    check: SampleCheck,
) -> Result<Frame, FrameIoError> {
    debug_assert_eq!(bytes.len(), format.frame_bytes());
    let mut offset = 0;
    let mut planes = Vec::with_capacity(3);
    let max = format.max_value();
    for i in 0..3 {
        let (w, h) = format.plane_dims(i);
        let n = w * h;
        let data = if format.sample_bytes() == 1 {
            let src = &bytes[offset..offset + n];
            offset += n;
            src.iter().map(|&b| u16::from(b)).collect::<Vec<_>>()
        } else {
            let src = &bytes[offset..offset + 2 * n];
            offset += 2 * n;
            let mut data: Vec<u16> = src
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            match check {
                SampleCheck::Strict => {
                    if let Some(&value) = data.iter().find(|&&v| v > max) {
                        return Err(FrameIoError::SampleOutOfRange {
                            frame_index,
                            value,
                            bit_depth: format.bit_depth,
                        });
                    }
                }
                SampleCheck::Permissive => data.iter_mut().for_each(|v| *v &= max),
            }
            data
        };
        planes.push(Plane {
            width: w,
            height: h,
            data,
        });
    }
    let planes: [Plane; 3] = planes.try_into().expect("three planes");
    Ok(Frame {
        format: *format,
        planes,
    })
}

/// Appends the payload bytes of `frame` to `out`.
pub(crate) fn pack_frame(frame: &Frame, out: &mut Vec<u8>) {
    out.reserve(frame.format.frame_bytes());
    for plane in &frame.planes {
        if frame.format.sample_bytes() == 1 {
            out.extend(plane.data.iter().map(|&v| v as u8));
        } else {
            for &v in &plane.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

/// Fills `buf` completely unless EOF comes first; returns bytes read.
pub(crate) fn read_full<R: io::Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_rejects_odd_and_bad_depth() {
        assert!(VideoFormat::new(15, 16, 8).is_err());
        assert!(VideoFormat::new(16, 16, 12).is_err());
        assert!(VideoFormat::new(16, 16, 10).is_ok());
    }

    #[test]
    fn frame_bytes_layout() {
        let f8 = VideoFormat::new(16, 16, 8).unwrap();
        assert_eq!(f8.frame_bytes(), 384);
        let f10 = VideoFormat::new(16, 16, 10).unwrap();
        assert_eq!(f10.frame_bytes(), 2 * 384);
        assert_eq!(f10.plane_dims(2), (8, 8));
    }

    #[test]
    fn check_catches_out_of_range() {
        let format = VideoFormat::new(4, 4, 8).unwrap();
        let mut frame = Frame::filled(format, [1, 2, 3]);
        assert!(frame.check().is_ok());
        frame.planes[1].data[0] = 256;
        assert!(frame.check().is_err());
    }
}
