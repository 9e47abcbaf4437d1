//! Opening and writing Y4M or headerless raw video.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use grainkit::frame::{read_raw, FrameIoError, Y4mReader, Y4mWriter};
use grainkit::{Frame, VideoFormat};

use crate::error::CliError;

/// Raw input needs its geometry; Y4M carries its own.
#[derive(Args, Clone, Debug, Default)]
pub struct RawFormat {
    /// Width of headerless raw input.
    #[arg(long)]
    pub width: Option<usize>,
    /// Height of headerless raw input.
    #[arg(long)]
    pub height: Option<usize>,
    /// Bit depth of headerless raw input (8 or 10).
    #[arg(long)]
    pub bit_depth: Option<u8>,
}

pub type Frames = Box<dyn Iterator<Item = Result<Frame, FrameIoError>>>;

pub struct Input {
    pub path: PathBuf,
    pub format: VideoFormat,
    pub y4m: bool,
    pub frames: Frames,
}

fn is_y4m(path: &Path, head: &[u8]) -> bool {
    head.starts_with(b"YUV4MPEG2")
        || path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

pub fn open(path: &Path, raw: &RawFormat) -> Result<Input, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let head = reader.fill_buf().map_err(|e| CliError::io(path, e))?.to_vec();
    if is_y4m(path, &head) {
        let r = Y4mReader::new(reader).map_err(|e| CliError::from(e).at(path))?;
        return Ok(Input {
            path: path.to_owned(),
            format: r.format(),
            y4m: true,
            frames: Box::new(r),
        });
    }
    let (Some(w), Some(h)) = (raw.width, raw.height) else {
        return Err(CliError::usage(format!(
            "{}: raw input needs --width and --height (and --bit-depth for 10-bit)",
            path.display()
        )));
    };
    let format = VideoFormat::new(w, h, raw.bit_depth.unwrap_or(8)).map_err(CliError::from)?;
    let r = read_raw(reader, format)?;
    Ok(Input {
        path: path.to_owned(),
        format,
        y4m: false,
        frames: Box::new(r),
    })
}

/// Reads the whole input into memory.
pub fn read_all(path: &Path, raw: &RawFormat) -> Result<(VideoFormat, Vec<Frame>), CliError> {
    let input = open(path, raw)?;
    let frames = input
        .frames
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::from(e).at(path))?;
    Ok((input.format, frames))
}

pub enum Output {
    Y4m(Y4mWriter<BufWriter<File>>),
    Raw(BufWriter<File>, Vec<u8>),
}

pub struct VideoSink {
    path: PathBuf,
    out: Output,
}

impl VideoSink {
    /// Y4M when `y4m` or the path ends in `.y4m`, raw otherwise.
    pub fn create(path: &Path, format: VideoFormat, y4m: bool) -> Result<Self, CliError> {
        let file = BufWriter::with_capacity(1 << 20, File::create(path).map_err(|e| CliError::io(path, e))?);
        let y4m = y4m || is_y4m(path, b"");
        let out = if y4m {
            Output::Y4m(Y4mWriter::new(file, format).map_err(|e| CliError::from(e).at(path))?)
        } else {
            Output::Raw(file, Vec::new())
        };
        Ok(Self {
            path: path.to_owned(),
            out,
        })
    }

    pub fn write(&mut self, frame: &Frame) -> Result<(), CliError> {
        let r = match &mut self.out {
            Output::Y4m(w) => w.write_frame(frame),
            Output::Raw(w, buf) => {
                buf.clear();
                grainkit::frame::write_raw(frame.format, [frame], &mut *buf)
                    .and_then(|_| w.write_all(buf).map_err(FrameIoError::from))
            }
        };
        r.map_err(|e| CliError::from(e).at(&self.path))
    }

    pub fn finish(self) -> Result<(), CliError> {
        let r = match self.out {
            Output::Y4m(w) => w.finish().map(|_| ()),
            Output::Raw(mut w, _) => w.flush(),
        };
        r.map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CliError::io(path, e))?;
    Ok(buf)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
