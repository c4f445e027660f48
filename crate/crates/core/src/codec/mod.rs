//! Per-chunk filter pipeline: optional bit-shuffle followed by DEFLATE.
//!
//! Chains are applied front to back when encoding and back to front when
//! decoding. DEFLATE streams are raw (RFC 1951, no zlib or gzip wrapper).

pub mod bitshuffle;

use std::fmt;
use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("bit-shuffled stream has odd byte length {0}")]
    OddLength(usize),
    #[error("invalid codec chain: {0}")]
    InvalidChain(String),
    #[error("unknown codec id {0}")]
    UnknownId(u8),
    #[error("corrupt compressed stream: {0}")]
    Corrupt(String),
    #[error("decoded length {actual} does not match expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CodecStage {
    Raw,
    Bitshuffle16,
    Deflate,
}

/// Ordered filter stages applied to every chunk. Serialized as the stage
/// list; also deserializes from the `bitshuffle+deflate` text form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "Vec<CodecStage>")]
pub struct CodecChain(Vec<CodecStage>);

#[derive(Deserialize)]
#[serde(untagged)]
enum ChainRepr {
    Stages(Vec<CodecStage>),
    Text(String),
}

impl TryFrom<ChainRepr> for CodecChain {
    type Error = CodecError;

    fn try_from(r: ChainRepr) -> Result<Self, CodecError> {
        match r {
            ChainRepr::Stages(s) => CodecChain::new(s),
            ChainRepr::Text(t) => t.parse(),
        }
    }
}

impl CodecChain {
    pub fn new(stages: Vec<CodecStage>) -> Result<Self, CodecError> {
        let chain = CodecChain(stages);
        chain.validate()?;
        Ok(chain)
    }

    pub fn raw() -> Self {
        CodecChain(vec![CodecStage::Raw])
    }

    pub fn deflate() -> Self {
        CodecChain(vec![CodecStage::Deflate])
    }

    pub fn bitshuffle_deflate() -> Self {
        CodecChain(vec![CodecStage::Bitshuffle16, CodecStage::Deflate])
    }

    pub fn stages(&self) -> &[CodecStage] {
        &self.0
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let s = &self.0;
        if s.is_empty() {
            return Err(CodecError::InvalidChain("empty chain".into()));
        }
        if s.contains(&CodecStage::Raw) && s.len() != 1 {
            return Err(CodecError::InvalidChain("RAW must appear alone".into()));
        }
        let pos = |st| s.iter().position(|&x| x == st);
        if s.iter().filter(|&&x| x == CodecStage::Bitshuffle16).count() > 1
            || s.iter().filter(|&&x| x == CodecStage::Deflate).count() > 1
        {
            return Err(CodecError::InvalidChain("repeated stage".into()));
        }
        if let (Some(b), Some(d)) = (pos(CodecStage::Bitshuffle16), pos(CodecStage::Deflate)) {
            if b > d {
                return Err(CodecError::InvalidChain(
                    "BITSHUFFLE16 must precede DEFLATE".into(),
                ));
            }
        }
        Ok(())
    }

    /// Single-byte codec id used by the container and the wire protocol.
    pub fn wire_id(&self) -> Option<u8> {
        match self.0.as_slice() {
            [CodecStage::Raw] => Some(0),
            [CodecStage::Deflate] => Some(1),
            [CodecStage::Bitshuffle16, CodecStage::Deflate] => Some(2),
            _ => None,
        }
    }

    pub fn from_wire_id(id: u8) -> Result<Self, CodecError> {
        match id {
            0 => Ok(Self::raw()),
            1 => Ok(Self::deflate()),
            2 => Ok(Self::bitshuffle_deflate()),
            other => Err(CodecError::UnknownId(other)),
        }
    }

    pub fn encode(&self, raw: &[u8]) -> Result<Vec<u8>, CodecError> {
        chunk_encode(self, raw)
    }

    pub fn decode(&self, encoded: &[u8], raw_len: usize) -> Result<Vec<u8>, CodecError> {
        chunk_decode(self, encoded, raw_len)
    }
}

impl TryFrom<Vec<CodecStage>> for CodecChain {
    type Error = CodecError;

    fn try_from(stages: Vec<CodecStage>) -> Result<Self, CodecError> {
        CodecChain::new(stages)
    }
}

impl From<CodecChain> for Vec<CodecStage> {
    fn from(chain: CodecChain) -> Self {
        chain.0
    }
}

impl fmt::Display for CodecChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|s| match s {
                CodecStage::Raw => "RAW",
                CodecStage::Bitshuffle16 => "BITSHUFFLE16",
                CodecStage::Deflate => "DEFLATE",
            })
            .collect();
        f.write_str(&names.join("+"))
    }
}

impl std::str::FromStr for CodecChain {
    type Err = CodecError;

    /// Accepts `raw`, `deflate`, `bitshuffle+deflate` (case-insensitive) or a
    /// numeric wire id.
    fn from_str(s: &str) -> Result<Self, CodecError> {
        if let Ok(id) = s.parse::<u8>() {
            return CodecChain::from_wire_id(id);
        }
        let stages = s
            .split(['+', ','])
            .map(|p| match p.trim().to_ascii_uppercase().as_str() {
                "RAW" => Ok(CodecStage::Raw),
                "DEFLATE" => Ok(CodecStage::Deflate),
                "BITSHUFFLE16" | "BITSHUFFLE" | "SHUFFLE" => Ok(CodecStage::Bitshuffle16),
                other => Err(CodecError::InvalidChain(format!("unknown stage `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        CodecChain::new(stages)
    }
}

pub fn chunk_encode(chain: &CodecChain, raw: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut buf = raw.to_vec();
    for stage in chain.stages() {
        buf = match stage {
            CodecStage::Raw => buf,
            CodecStage::Bitshuffle16 => bitshuffle::encode_bytes(&buf)?,
            CodecStage::Deflate => {
                let mut enc =
                    DeflateEncoder::new(Vec::with_capacity(buf.len() / 2), Compression::default());
                enc.write_all(&buf)
                    .and_then(|_| enc.finish())
                    .map_err(|e| CodecError::Corrupt(e.to_string()))?
            }
        };
    }
    Ok(buf)
}

pub fn chunk_decode(
    chain: &CodecChain,
    encoded: &[u8],
    raw_len: usize,
) -> Result<Vec<u8>, CodecError> {
    let mut buf = encoded.to_vec();
    for stage in chain.stages().iter().rev() {
        buf = match stage {
            CodecStage::Raw => buf,
            CodecStage::Bitshuffle16 => bitshuffle::decode_bytes(&buf)?,
            CodecStage::Deflate => {
                let mut out = Vec::with_capacity(raw_len);
                // One byte of slack so an over-long stream is detected without
                // inflating it completely.
                DeflateDecoder::new(buf.as_slice())
                    .take(raw_len as u64 + 1)
                    .read_to_end(&mut out)
                    .map_err(|e| CodecError::Corrupt(e.to_string()))?;
                out
            }
        };
    }
    if buf.len() != raw_len {
        return Err(CodecError::LengthMismatch {
            expected: raw_len,
            actual: buf.len(),
        });
    }
    Ok(buf)
}

/// Byte length of the raw DEFLATE stream at the front of `buf`; used to
/// split back-to-back streams that carry no length prefix.
pub fn deflate_stream_len(buf: &[u8]) -> Result<usize, CodecError> {
    let mut d = flate2::Decompress::new(false);
    let mut scratch = vec![0u8; 64 << 10];
    loop {
        let (in0, out0) = (d.total_in(), d.total_out());
        let status = d
            .decompress(
                &buf[in0 as usize..],
                &mut scratch,
                flate2::FlushDecompress::None,
            )
            .map_err(|e| CodecError::Corrupt(e.to_string()))?;
        if status == flate2::Status::StreamEnd {
            return Ok(d.total_in() as usize);
        }
        if d.total_in() == in0 && d.total_out() == out0 {
            return Err(CodecError::Corrupt("truncated DEFLATE stream".into()));
        }
    }
}
