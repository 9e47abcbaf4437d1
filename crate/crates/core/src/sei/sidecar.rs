//! `.fgs` sidecar: a flat sequence of records, one per frame that carries an
//! FGC SEI payload.
//!
//! ```text
//! frame_index  u32 little-endian
//! payload_len  u16 little-endian
//! payload      payload_len bytes
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::frame::read_full;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar record {record} truncated at byte {offset}")]
    Truncated { record: usize, offset: u64 },
    #[error("payload of {0} bytes does not fit a sidecar record")]
    PayloadTooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SidecarRecord {
    pub frame_index: u32,
    pub payload: Vec<u8>,
}

pub struct SidecarWriter<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> SidecarWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, bytes: 0 }
    }

    pub fn write_record(&mut self, frame_index: u32, payload: &[u8]) -> Result<(), SidecarError> {
        let len =
            u16::try_from(payload.len()).map_err(|_| SidecarError::PayloadTooLarge(payload.len()))?;
        self.inner.write_all(&frame_index.to_le_bytes())?;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(payload)?;
        self.bytes += 6 + payload.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<(u64, W)> {
        self.inner.flush()?;
        Ok((self.bytes, self.inner))
    }
}

pub struct SidecarReader<R> {
    inner: R,
    record: usize,
    offset: u64,
    done: bool,
}

impl<R: Read> SidecarReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            record: 0,
            offset: 0,
            done: false,
        }
    }

    fn next_record(&mut self) -> Result<Option<SidecarRecord>, SidecarError> {
        let mut head = [0u8; 6];
        let got = read_full(&mut self.inner, &mut head)?;
        if got == 0 {
            return Ok(None);
        }
        let truncated = |this: &Self, got: usize| SidecarError::Truncated {
            record: this.record,
            offset: this.offset + got as u64,
        };
        if got < head.len() {
            return Err(truncated(self, got));
        }
        let frame_index = u32::from_le_bytes([head[0], head[1], head[2], head[3]]);
        let len = usize::from(u16::from_le_bytes([head[4], head[5]]));
        let mut payload = vec![0; len];
        let got = read_full(&mut self.inner, &mut payload)?;
        if got < len {
            return Err(truncated(self, 6 + got));
        }
        self.offset += 6 + len as u64;
        self.record += 1;
        Ok(Some(SidecarRecord {
            frame_index,
            payload,
        }))
    }
}

impl<R: Read> Iterator for SidecarReader<R> {
    type Item = Result<SidecarRecord, SidecarError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_record().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub fn read_sidecar<R: Read>(reader: R) -> Result<Vec<SidecarRecord>, SidecarError> {
    SidecarReader::new(reader).collect()
}

pub fn write_sidecar<'a, W, I>(records: I, writer: W) -> Result<u64, SidecarError>
where
    W: Write,
    I: IntoIterator<Item = &'a SidecarRecord>,
{
    let mut w = SidecarWriter::new(writer);
    for r in records {
        w.write_record(r.frame_index, &r.payload)?;
    }
    Ok(w.finish()?.0)
}
