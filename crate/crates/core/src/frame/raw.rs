use std::io::{Read, Write};

use super::{pack_frame, read_full, unpack_frame, Frame, FrameIoError, SampleCheck, VideoFormat};

/// Headerless planar I420 (8-bit) / I010 (10-bit, little-endian) reader.
pub struct RawReader<R> {
    inner: R,
    format: VideoFormat,
    check: SampleCheck,
    frame_index: u64,
    buf: Vec<u8>,
    done: bool,
}

pub fn read_raw<R: Read>(stream: R, format: VideoFormat) -> Result<RawReader<R>, FrameIoError> {
    format.check()?;
    Ok(RawReader {
        inner: stream,
        format,
        check: SampleCheck::Strict,
        frame_index: 0,
        buf: vec![0; format.frame_bytes()],
        done: false,
    })
}

pub fn write_raw<'a, W, I>(format: VideoFormat, frames: I, mut sink: W) -> Result<u64, FrameIoError>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    format.check()?;
    let mut bytes = 0u64;
    let mut buf = Vec::with_capacity(format.frame_bytes());
    for frame in frames {
        frame.matches(&format)?;
        buf.clear();
        pack_frame(frame, &mut buf);
        sink.write_all(&buf)?;
        bytes += buf.len() as u64;
    }
    sink.flush()?;
    Ok(bytes)
}

impl<R: Read> RawReader<R> {
    pub fn with_sample_check(mut self, check: SampleCheck) -> Self {
        self.check = check;
        self
    }

    pub fn format(&self) -> VideoFormat {
        self.format
    }

    fn next_frame(&mut self) -> Result<Option<Frame>, FrameIoError> {
        let got = read_full(&mut self.inner, &mut self.buf)?;
        if got == 0 {
            return Ok(None);
        }
        if got < self.buf.len() {
            return Err(FrameIoError::TrailingBytes {
                frames: self.frame_index,
                remainder: got,
            });
        }
        let frame = unpack_frame(&self.format, &self.buf, self.frame_index, self.check)?;
        self.frame_index += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for RawReader<R> {
    type Item = Result<Frame, FrameIoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_frame().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fmt() -> VideoFormat {
        VideoFormat::new(16, 16, 8).unwrap()
    }

    #[test]
    fn empty_stream_has_no_frames() {
        let frames: Vec<_> = read_raw(Cursor::new(Vec::new()), fmt()).unwrap().collect();
        assert!(frames.is_empty());
    }

    #[test]
    fn exact_two_frames() {
        let data: Vec<u8> = (0..2 * 384).map(|i| (i % 251) as u8).collect();
        let frames: Vec<_> = read_raw(Cursor::new(data), fmt())
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].luma().data[0], (384 % 251) as u16);
    }

    #[test]
    fn partial_third_frame_errors_after_two() {
        let data = vec![7u8; 2 * 384 + 192];
        let mut reader = read_raw(Cursor::new(data), fmt()).unwrap();
        assert!(reader.next().unwrap().is_ok());
        assert!(reader.next().unwrap().is_ok());
        match reader.next() {
            Some(Err(FrameIoError::TrailingBytes { frames, remainder })) => {
                assert_eq!(frames, 2);
                assert_eq!(remainder, 192);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(reader.next().is_none());
    }
}
