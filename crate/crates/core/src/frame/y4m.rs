use std::io::{self, BufRead, Read, Write};

use super::{
    pack_frame, read_full, unpack_frame, ChromaSampling, Frame, FrameIoError, Rational,
    SampleCheck, VideoFormat,
};

const SIGNATURE: &str = "YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";
const MAX_HEADER: u64 = 4096;

/// Streaming Y4M reader; yields one [`Frame`] per `FRAME` record.
pub struct Y4mReader<R> {
    inner: R,
    format: VideoFormat,
    check: SampleCheck,
    frame_index: u64,
    buf: Vec<u8>,
    done: bool,
}

/// Opens a Y4M stream, parses its header and returns the format along with the
/// frame iterator.
pub fn read_y4m<R: BufRead>(stream: R) -> Result<(VideoFormat, Y4mReader<R>), FrameIoError> {
    let reader = Y4mReader::new(stream)?;
    Ok((reader.format, reader))
}

/// Writes a whole sequence and returns the number of bytes emitted.
pub fn write_y4m<'a, W, I>(format: VideoFormat, frames: I, sink: W) -> Result<u64, FrameIoError>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    let mut writer = Y4mWriter::new(sink, format)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    let (bytes, _) = writer.finish()?;
    Ok(bytes)
}

fn parse_ratio(value: &str, tag: char) -> Result<Rational, FrameIoError> {
    let (n, d) = value
        .split_once(':')
        .ok_or_else(|| FrameIoError::MalformedHeader(format!("{tag}{value}: expected n:d")))?;
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| FrameIoError::MalformedHeader(format!("{tag}{value}: bad number")))
    };
    Ok(Rational::new(parse(n)?, parse(d)?))
}

fn parse_header(line: &str) -> Result<VideoFormat, FrameIoError> {
    let mut tokens = line.split(' ').filter(|t| !t.is_empty());
    if tokens.next() != Some(SIGNATURE) {
        return Err(FrameIoError::MalformedHeader(format!(
            "missing {SIGNATURE} signature"
        )));
    }
    let mut width = None;
    let mut height = None;
    let mut frame_rate = Rational::new(25, 1);
    let mut bit_depth = 8u8;
    for token in tokens {
        let mut chars = token.chars();
        let tag = chars.next().unwrap_or(' ');
        let value = chars.as_str();
        let bad = || FrameIoError::MalformedHeader(format!("bad field `{token}`"));
        match tag {
            'W' => width = Some(value.parse::<usize>().map_err(|_| bad())?),
            'H' => height = Some(value.parse::<usize>().map_err(|_| bad())?),
            'F' => frame_rate = parse_ratio(value, 'F')?,
            'C' => {
                bit_depth = match value {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" | "420p8" => 8,
                    "420p10" => 10,
                    other => return Err(FrameIoError::UnsupportedChroma(other.to_string())),
                }
            }
            // interlacing, aspect, extensions: carried by the container, unused here
            'I' | 'A' | 'X' => {}
            _ => return Err(bad()),
        }
    }
    let width = width.ok_or_else(|| FrameIoError::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| FrameIoError::MalformedHeader("missing H".into()))?;
    let format = VideoFormat {
        width,
        height,
        bit_depth,
        chroma: ChromaSampling::Cs420,
        frame_rate,
    };
    format.check()?;
    Ok(format)
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FrameIoError> {
        let mut line = Vec::new();
        (&mut inner).take(MAX_HEADER).read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(FrameIoError::MalformedHeader(
                "header line not terminated".into(),
            ));
        }
        line.pop();
        let text = std::str::from_utf8(&line)
            .map_err(|_| FrameIoError::MalformedHeader("header is not ASCII".into()))?;
        let format = parse_header(text)?;
        Ok(Self {
            inner,
            format,
            check: SampleCheck::Strict,
            frame_index: 0,
            buf: vec![0; format.frame_bytes()],
            done: false,
        })
    }

    pub fn with_sample_check(mut self, check: SampleCheck) -> Self {
        self.check = check;
        self
    }

    pub fn format(&self) -> VideoFormat {
        self.format
    }

    fn next_frame(&mut self) -> Result<Option<Frame>, FrameIoError> {
        let mut line = Vec::new();
        (&mut self.inner).take(MAX_HEADER).read_until(b'\n', &mut line)?;
        if line.is_empty() {
            return Ok(None);
        }
        let malformed = |detail: &str| FrameIoError::MalformedFrameHeader {
            frame_index: self.frame_index,
            detail: detail.to_string(),
        };
        if line.last() != Some(&b'\n') {
            return Err(malformed("unterminated FRAME line"));
        }
        if !line.starts_with(FRAME_TAG) || !matches!(line[FRAME_TAG.len()], b'\n' | b' ') {
            return Err(malformed("expected FRAME"));
        }
        let got = read_full(&mut self.inner, &mut self.buf)?;
        if got != self.buf.len() {
            return Err(FrameIoError::TruncatedFrame {
                frame_index: self.frame_index,
                got,
                expected: self.buf.len(),
            });
        }
        let frame = unpack_frame(&self.format, &self.buf, self.frame_index, self.check)?;
        self.frame_index += 1;
        Ok(Some(frame))
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame, FrameIoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_frame() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub struct Y4mWriter<W> {
    inner: W,
    format: VideoFormat,
    bytes: u64,
    buf: Vec<u8>,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, format: VideoFormat) -> Result<Self, FrameIoError> {
        format.check()?;
        let chroma = if format.bit_depth == 8 {
            "420jpeg"
        } else {
            "420p10"
        };
        let header = format!(
            "{SIGNATURE} W{} H{} F{} Ip A1:1 C{chroma}\n",
            format.width, format.height, format.frame_rate
        );
        inner.write_all(header.as_bytes())?;
        Ok(Self {
            inner,
            format,
            bytes: header.len() as u64,
            buf: Vec::with_capacity(format.frame_bytes() + 6),
        })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), FrameIoError> {
        frame.matches(&self.format)?;
        self.buf.clear();
        self.buf.extend_from_slice(b"FRAME\n");
        pack_frame(frame, &mut self.buf);
        self.inner.write_all(&self.buf)?;
        self.bytes += self.buf.len() as u64;
        Ok(())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes
    }

    pub fn finish(mut self) -> io::Result<(u64, W)> {
        self.inner.flush()?;
        Ok((self.bytes, self.inner))
    }
}
