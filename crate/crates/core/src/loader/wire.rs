//! Binary framing of minibatches.
//!
//! Little-endian throughout. The stream starts with the magic `SBL1`, a
//! u16 format version and a u16 vocabulary hash. Each frame is a u32
//! payload length followed by the payload: u16 task id, u32 step, u16
//! rows, u16 source columns, u16 target columns, the per-row u16 source
//! and target lengths, then the row-major u32 source and target ids.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::batch::Minibatch;

pub const MAGIC: [u8; 4] = *b"SBL1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("bad stream magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("truncated stream at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("malformed frame at byte offset {offset}: {msg}")]
    Malformed { offset: u64, msg: String },
    #[error("batch does not fit the wire format: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_header<W: Write>(mut w: W, vocab_hash: u16) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u16::<LE>(FORMAT_VERSION)?;
    w.write_u16::<LE>(vocab_hash)
}

/// Size in bytes of the payload of `batch`.
pub fn payload_len(batch: &Minibatch) -> usize {
    let rows = batch.rows();
    2 + 4 + 2 + 2 + 2 + 4 * rows + 4 * (batch.src.len() + batch.tgt.len())
}

/// Serializes one frame, length prefix included.
pub fn encode_frame(batch: &Minibatch) -> Result<Vec<u8>, WireError> {
    let rows = batch.rows();
    let too_large = |what: &str| WireError::TooLarge(format!("{what} exceeds u16"));
    let n_rows = u16::try_from(rows).map_err(|_| too_large("row count"))?;
    let src_cols = u16::try_from(batch.src_cols).map_err(|_| too_large("source width"))?;
    let tgt_cols = u16::try_from(batch.tgt_cols).map_err(|_| too_large("target width"))?;
    if batch.src.len() != rows * batch.src_cols || batch.tgt.len() != rows * batch.tgt_cols {
        return Err(WireError::TooLarge("matrix size does not match its shape".into()));
    }
    let len = payload_len(batch);
    let len32 = u32::try_from(len).map_err(|_| WireError::TooLarge("payload exceeds u32".into()))?;
    let mut out = Vec::with_capacity(4 + len);
    out.write_u32::<LE>(len32)?;
    out.write_u16::<LE>(batch.task_id)?;
    out.write_u32::<LE>(batch.step)?;
    out.write_u16::<LE>(n_rows)?;
    out.write_u16::<LE>(src_cols)?;
    out.write_u16::<LE>(tgt_cols)?;
    for &l in batch.src_lens.iter().chain(&batch.tgt_lens) {
        out.write_u16::<LE>(l)?;
    }
    for &id in batch.src.iter().chain(&batch.tgt) {
        out.write_u32::<LE>(id)?;
    }
    Ok(out)
}

/// Parses one payload (without its length prefix). `offset` is the
/// stream position of the payload, used in error messages.
pub fn decode_payload(mut p: &[u8], offset: u64) -> Result<Minibatch, WireError> {
    let total = p.len();
    let malformed = |msg: &str| WireError::Malformed {
        offset,
        msg: msg.to_string(),
    };
    if total < 12 {
        return Err(malformed("payload shorter than its fixed fields"));
    }
    let task_id = p.read_u16::<LE>()?;
    let step = p.read_u32::<LE>()?;
    let rows = p.read_u16::<LE>()? as usize;
    let src_cols = p.read_u16::<LE>()? as usize;
    let tgt_cols = p.read_u16::<LE>()? as usize;
    if total != 12 + 4 * rows + 4 * rows * (src_cols + tgt_cols) {
        return Err(malformed("payload length does not match its shape"));
    }
    let mut read_u16s = |n: usize| -> io::Result<Vec<u16>> { (0..n).map(|_| p.read_u16::<LE>()).collect() };
    let src_lens = read_u16s(rows)?;
    let tgt_lens = read_u16s(rows)?;
    let mut read_u32s = |n: usize| -> io::Result<Vec<u32>> { (0..n).map(|_| p.read_u32::<LE>()).collect() };
    let src = read_u32s(rows * src_cols)?;
    let tgt = read_u32s(rows * tgt_cols)?;
    Ok(Minibatch {
        task_id,
        step,
        src_cols,
        tgt_cols,
        src,
        tgt,
        src_lens,
        tgt_lens,
    })
}

/// Incremental frame reader over any byte source.
pub struct StreamReader<R> {
    inner: R,
    offset: u64,
    vocab_hash: u16,
}

impl<R: Read> StreamReader<R> {
    /// Reads and validates the stream header.
    pub fn new(mut inner: R) -> Result<Self, WireError> {
        let mut header = [0u8; HEADER_LEN];
        let got = read_full(&mut inner, &mut header)?;
        if got < 4 {
            return Err(WireError::Truncated { offset: got as u64 });
        }
        let magic: [u8; 4] = header[..4].try_into().expect("four bytes");
        if magic != MAGIC {
            return Err(WireError::BadMagic(magic));
        }
        if got < HEADER_LEN {
            return Err(WireError::Truncated { offset: got as u64 });
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(WireError::BadVersion(version));
        }
        Ok(StreamReader {
            inner,
            offset: HEADER_LEN as u64,
            vocab_hash: u16::from_le_bytes([header[6], header[7]]),
        })
    }

    pub fn vocab_hash(&self) -> u16 {
        self.vocab_hash
    }

    /// Byte offset of the next unread frame.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Next frame, or `None` at a clean end of stream.
    pub fn next_batch(&mut self) -> Result<Option<Minibatch>, WireError> {
        let mut len = [0u8; 4];
        let got = read_full(&mut self.inner, &mut len)?;
        if got == 0 {
            return Ok(None);
        }
        if got < 4 {
            return Err(WireError::Truncated {
                offset: self.offset + got as u64,
            });
        }
        let n = u32::from_le_bytes(len) as usize;
        let mut payload = vec![0u8; n];
        let got = read_full(&mut self.inner, &mut payload)?;
        if got < n {
            return Err(WireError::Truncated {
                offset: self.offset + 4 + got as u64,
            });
        }
        let batch = decode_payload(&payload, self.offset + 4)?;
        self.offset += 4 + n as u64;
        Ok(Some(batch))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<Minibatch, WireError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_batch().transpose()
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
