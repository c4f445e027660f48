//! `VSP1` framing and message bodies.
//!
//! ```text
//! frame   = "VSP1" | u8 msg_type | u32 payload_len | payload
//! tile    = u32 r | u32 c | u32 w | u32 level | u32 height | u32 width
//!           | u8 codec | 3 x u8 reserved | u64 raw_len | compressed bytes
//! ```
//!
//! Integers are little-endian. A reply carries the request type with the
//! high bit set; failures are answered with an `ERROR` frame holding
//! `{"code", "message"}`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vslide_core::codec::{CodecChain, CodecError};
use vslide_core::model::Colour;
use vslide_core::plane::le_bytes_to_samples;
use vslide_core::Plane;

pub const MAGIC: [u8; 4] = *b"VSP1";
pub const FRAME_HEADER_LEN: usize = 9;
pub const TILE_HEADER_LEN: usize = 36;
pub const DEFAULT_MAX_FRAME: u32 = 256 << 20;

pub const LIST: u8 = 0x01;
pub const GET_HEADER: u8 = 0x02;
pub const GET_TILE: u8 = 0x03;
pub const GET_SLAB: u8 = 0x04;
pub const START_SCAN: u8 = 0x10;
pub const REPLY: u8 = 0x80;
pub const ERROR: u8 = 0xFF;

pub const ALL_COLOURS: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("frame payload of {len} bytes exceeds the {max} byte limit")]
    TooLarge { len: u32, max: u32 },
    #[error("connection closed mid-frame")]
    Truncated,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("expected reply type {expected:#04x}, got {got:#04x}")]
    UnexpectedReply { expected: u8, got: u8 },
    #[error("server error {code}: {message}")]
    Remote { code: String, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ProtocolError {
    /// Whether the peer answered with an `ERROR` frame carrying `code`.
    pub fn is_remote(&self, code: &str) -> bool {
        matches!(self, ProtocolError::Remote { code: c, .. } if c == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        let body = ErrorBody {
            code: code.to_string(),
            message: message.into(),
        };
        Frame::new(ERROR, canonical(&body))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.msg_type);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.to_bytes())?;
    w.flush()
}

/// Reads one frame. `Ok(None)` is a clean end of stream before any byte of
/// a new frame. The length is checked against `max_frame` before the
/// payload buffer is allocated.
pub fn read_frame(r: &mut impl Read, max_frame: u32) -> Result<Option<Frame>, ProtocolError> {
    let mut head = [0u8; FRAME_HEADER_LEN];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let magic: [u8; 4] = head[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let msg_type = head[4];
    let len = u32::from_le_bytes(head[5..9].try_into().unwrap());
    if len > max_frame {
        return Err(ProtocolError::TooLarge { len, max: max_frame });
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
        _ => e.into(),
    })?;
    Ok(Some(Frame { msg_type, payload }))
}

/// Serializes through `serde_json::Value` so object keys come out sorted.
pub fn canonical<T: Serialize>(v: &T) -> Vec<u8> {
    let v = serde_json::to_value(v).expect("protocol types serialize");
    serde_json::to_vec(&v).expect("values serialize")
}

pub fn parse<'a, T: Deserialize<'a>>(payload: &'a [u8]) -> Result<T, ProtocolError> {
    serde_json::from_slice(payload).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub mod codes {
    pub const BAD_REQUEST: &str = "bad_request";
    pub const NOT_FOUND: &str = "not_found";
    pub const UNSUPPORTED: &str = "unsupported";
    pub const CONFLICT: &str = "conflict";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderRequest {
    pub slide: String,
}

fn default_pipeline() -> String {
    "raw".to_string()
}

fn default_codec() -> u8 {
    2
}

fn is_raw_pipeline(p: &str) -> bool {
    p == "raw"
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRequest {
    pub slide: String,
    pub r: u32,
    pub c: u32,
    /// Colour index; absent or `4294967295` for every colour.
    #[serde(default = "all_colours", skip_serializing_if = "is_all")]
    pub w: u32,
    #[serde(default = "one")]
    pub level: u32,
    #[serde(default = "default_pipeline", skip_serializing_if = "is_raw_pipeline")]
    pub pipeline: String,
    /// Wire codec id for the reply payload.
    #[serde(default = "default_codec")]
    pub codec: u8,
}

fn all_colours() -> u32 {
    ALL_COLOURS
}

fn is_all(w: &u32) -> bool {
    *w == ALL_COLOURS
}

fn one() -> u32 {
    1
}

impl TileRequest {
    pub fn new(slide: impl Into<String>, r: u32, c: u32, colour: Colour, level: u32) -> Self {
        TileRequest {
            slide: slide.into(),
            r,
            c,
            w: colour.to_wire(),
            level,
            pipeline: default_pipeline(),
            codec: default_codec(),
        }
    }

    pub fn colour(&self) -> Colour {
        Colour::from_wire(self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabRequest {
    pub slide: String,
    pub lower_index: u64,
    pub upper_index: u64,
    #[serde(default = "one")]
    pub level: u32,
    #[serde(default = "default_codec")]
    pub codec: u8,
}

/// One field of view (or one of its colours) on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePayload {
    pub r: u32,
    pub c: u32,
    pub w: u32,
    pub level: u32,
    pub height: u32,
    pub width: u32,
    pub codec: u8,
    pub raw_len: u64,
    pub data: Vec<u8>,
}

impl TilePayload {
    /// Encodes `planes` (all of equal size) with the chain of wire id `codec`.
    pub fn encode(r: u32, c: u32, colour: Colour, level: u32, planes: &[Plane], codec: u8) -> Result<Self, ProtocolError> {
        let chain = CodecChain::from_wire_id(codec)?;
        let (height, width) = planes
            .first()
            .map(|p| (p.height() as u32, p.width() as u32))
            .unwrap_or((0, 0));
        let mut raw = Vec::with_capacity(planes.iter().map(Plane::byte_len).sum());
        for p in planes {
            if (p.height() as u32, p.width() as u32) != (height, width) {
                return Err(ProtocolError::Malformed("planes of different sizes".into()));
            }
            raw.extend_from_slice(&p.to_le_bytes());
        }
        Ok(TilePayload {
            r,
            c,
            w: colour.to_wire(),
            level,
            height,
            width,
            codec,
            raw_len: raw.len() as u64,
            data: chain.encode(&raw)?,
        })
    }

    pub fn encoded_len(&self) -> usize {
        TILE_HEADER_LEN + self.data.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        for v in [self.r, self.c, self.w, self.level, self.height, self.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.codec);
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&self.raw_len.to_le_bytes());
        out.extend_from_slice(&self.data);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    /// Parses one payload from the front of `buf`. With `exact`, the
    /// compressed bytes are the rest of `buf`; otherwise their length is
    /// recovered by decoding (payloads inside a slab reply are
    /// back-to-back). Returns the payload and the bytes consumed.
    pub fn parse(buf: &[u8]) -> Result<Self, ProtocolError> {
        let (p, _) = Self::parse_prefix(buf, true)?;
        Ok(p)
    }

    fn parse_prefix(buf: &[u8], exact: bool) -> Result<(Self, usize), ProtocolError> {
        if buf.len() < TILE_HEADER_LEN {
            return Err(ProtocolError::Malformed(format!(
                "tile payload of {} bytes is shorter than its header",
                buf.len()
            )));
        }
        let u = |i: usize| u32::from_le_bytes(buf[i * 4..i * 4 + 4].try_into().unwrap());
        let codec = buf[24];
        let raw_len = u64::from_le_bytes(buf[28..36].try_into().unwrap());
        let (height, width) = (u(4), u(5));
        let plane_bytes = height as u64 * width as u64 * 2;
        if plane_bytes == 0 && raw_len != 0 || plane_bytes != 0 && raw_len % plane_bytes != 0 {
            return Err(ProtocolError::Malformed(format!(
                "raw length {raw_len} is not a whole number of {height}x{width} planes"
            )));
        }
        let len = if exact {
            buf.len() - TILE_HEADER_LEN
        } else {
            let chain = CodecChain::from_wire_id(codec)?;
            compressed_len(&chain, &buf[TILE_HEADER_LEN..], raw_len)?
        };
        let p = TilePayload {
            r: u(0),
            c: u(1),
            w: u(2),
            level: u(3),
            height,
            width,
            codec,
            raw_len,
            data: buf[TILE_HEADER_LEN..TILE_HEADER_LEN + len].to_vec(),
        };
        Ok((p, TILE_HEADER_LEN + len))
    }

    pub fn colour(&self) -> Colour {
        Colour::from_wire(self.w)
    }

    /// Decompresses and splits the payload into planes.
    pub fn planes(&self) -> Result<Vec<Plane>, ProtocolError> {
        let chain = CodecChain::from_wire_id(self.codec)?;
        let raw = chain.decode(&self.data, self.raw_len as usize)?;
        if raw.len() as u64 != self.raw_len {
            return Err(ProtocolError::Malformed("decoded length differs from raw_len".into()));
        }
        let (h, w) = (self.height as usize, self.width as usize);
        if h * w == 0 {
            return Ok(Vec::new());
        }
        le_bytes_to_samples(&raw)
            .chunks(h * w)
            .map(|s| Plane::new(h, w, s.to_vec()).map_err(|e| ProtocolError::Malformed(e.to_string())))
            .collect()
    }
}

/// Length of the single compressed stream at the front of `buf`.
fn compressed_len(chain: &CodecChain, buf: &[u8], raw_len: u64) -> Result<usize, ProtocolError> {
    if chain.stages().iter().all(|s| *s == vslide_core::codec::CodecStage::Raw) {
        if (buf.len() as u64) < raw_len {
            return Err(ProtocolError::Malformed("slab payload truncated".into()));
        }
        return Ok(raw_len as usize);
    }
    // DEFLATE streams are self-delimiting; the decoder reports where the
    // stream ended.
    vslide_core::codec::deflate_stream_len(buf).map_err(ProtocolError::from)
}

/// `u32 count` followed by `count` payloads.
pub fn encode_slab(payloads: &[TilePayload]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + payloads.iter().map(TilePayload::encoded_len).sum::<usize>());
    out.extend_from_slice(&(payloads.len() as u32).to_le_bytes());
    for p in payloads {
        p.write_to(&mut out);
    }
    out
}

pub fn decode_slab(buf: &[u8]) -> Result<Vec<TilePayload>, ProtocolError> {
    if buf.len() < 4 {
        return Err(ProtocolError::Malformed("slab reply without count".into()));
    }
    let count = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let mut at = 4;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (p, used) = TilePayload::parse_prefix(&buf[at..], false)?;
        out.push(p);
        at += used;
    }
    if at != buf.len() {
        return Err(ProtocolError::Malformed(format!("{} trailing bytes after slab", buf.len() - at)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planes(n: usize) -> Vec<Plane> {
        (0..n)
            .map(|k| Plane::from_fn(5, 7, |y, x| (y * 7 + x + k * 100) as u16))
            .collect()
    }

    #[test]
    fn frame_roundtrip_and_layout() {
        let f = Frame::new(GET_TILE, b"{}".to_vec());
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"VSP1");
        assert_eq!(bytes[4], 0x03);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        let back = read_frame(&mut &bytes[..], DEFAULT_MAX_FRAME).unwrap().unwrap();
        assert_eq!(back, f);
        assert!(read_frame(&mut &[][..], DEFAULT_MAX_FRAME).unwrap().is_none());
    }

    #[test]
    fn framing_errors() {
        let bytes = Frame::new(LIST, vec![1, 2, 3]).to_bytes();
        assert!(matches!(read_frame(&mut &bytes[..5], 100), Err(ProtocolError::Truncated)));
        assert!(matches!(read_frame(&mut &bytes[..10], 100), Err(ProtocolError::Truncated)));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_frame(&mut &bad[..], 100), Err(ProtocolError::BadMagic(_))));
        assert!(matches!(
            read_frame(&mut &bytes[..], 2),
            Err(ProtocolError::TooLarge { len: 3, max: 2 })
        ));
    }

    #[test]
    fn oversized_length_is_rejected_before_allocating() {
        let mut head = MAGIC.to_vec();
        head.push(GET_TILE);
        head.extend_from_slice(&u32::MAX.to_le_bytes());
        // no payload follows: allocating 4 GiB first would abort the test
        assert!(matches!(
            read_frame(&mut &head[..], DEFAULT_MAX_FRAME),
            Err(ProtocolError::TooLarge { .. })
        ));
    }

    #[test]
    fn tile_payload_roundtrip_for_every_codec() {
        for codec in 0..3u8 {
            let p = TilePayload::encode(3, 4, Colour::All, 2, &planes(3), codec).unwrap();
            let bytes = p.to_bytes();
            assert_eq!(bytes.len(), TILE_HEADER_LEN + p.data.len());
            let back = TilePayload::parse(&bytes).unwrap();
            assert_eq!(back, p);
            assert_eq!(back.planes().unwrap(), planes(3));
            assert_eq!(back.raw_len, 5 * 7 * 2 * 3);
            if codec == 0 {
                assert_eq!(back.data.len() as u64, back.raw_len);
            }
        }
        assert!(TilePayload::encode(0, 0, Colour::All, 1, &planes(1), 9).is_err());
    }

    #[test]
    fn slab_roundtrip() {
        for codec in 0..3u8 {
            let ps: Vec<TilePayload> = (0..4)
                .map(|i| TilePayload::encode(0, i, Colour::All, 1, &planes(2), codec).unwrap())
                .collect();
            let bytes = encode_slab(&ps);
            assert_eq!(decode_slab(&bytes).unwrap(), ps);
        }
        assert_eq!(decode_slab(&encode_slab(&[])).unwrap(), vec![]);
        let mut extra = encode_slab(&[]);
        extra.push(0);
        assert!(decode_slab(&extra).is_err());
    }

    #[test]
    fn corrupt_payload_is_reported() {
        let p = TilePayload::encode(0, 0, Colour::Index(0), 1, &planes(1), 1).unwrap();
        let mut bytes = p.to_bytes();
        let n = bytes.len();
        bytes.truncate(n - 4);
        assert!(TilePayload::parse(&bytes).unwrap().planes().is_err());
        let mut lying = p.clone();
        lying.raw_len += 2;
        assert!(TilePayload::parse(&lying.to_bytes()).is_err());
    }

    #[test]
    fn request_json_defaults() {
        let r: TileRequest = parse(br#"{"slide":"s","r":1,"c":2}"#).unwrap();
        assert_eq!((r.w, r.level, r.pipeline.as_str(), r.codec), (ALL_COLOURS, 1, "raw", 2));
        assert_eq!(String::from_utf8(canonical(&r)).unwrap(), r#"{"c":2,"codec":2,"level":1,"r":1,"slide":"s"}"#);
        assert!(parse::<TileRequest>(b"{").is_err());
    }
}
