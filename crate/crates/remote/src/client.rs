use std::io::BufReader;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;

use vslide_core::compositor::TileSource;
use vslide_core::model::{Colour, SlideHeader};
use vslide_core::{Error as CoreError, Plane};

use crate::protocol::{
    canonical, codes, decode_slab, parse, read_frame, write_frame, ErrorBody, Frame, HeaderRequest, ProtocolError,
    SlabRequest, TilePayload, TileRequest, DEFAULT_MAX_FRAME, ERROR, GET_HEADER, GET_SLAB, GET_TILE, LIST, REPLY,
    START_SCAN,
};

/// One connection to a tile dealer. Requests on a connection strictly
/// alternate with replies; use several clients for parallel fetches.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    max_frame: u32,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            max_frame: DEFAULT_MAX_FRAME,
        })
    }

    pub fn with_max_frame(mut self, max_frame: u32) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        Ok(write_frame(&mut self.writer, frame)?)
    }

    pub fn recv(&mut self) -> Result<Frame, ProtocolError> {
        read_frame(&mut self.reader, self.max_frame)?.ok_or(ProtocolError::Truncated)
    }

    /// Sends a request and returns the reply payload. `ERROR` replies become
    /// [`ProtocolError::Remote`].
    pub fn request(&mut self, msg_type: u8, payload: Vec<u8>) -> Result<Vec<u8>, ProtocolError> {
        self.send(&Frame::new(msg_type, payload))?;
        let reply = self.recv()?;
        if reply.msg_type == ERROR {
            let body: ErrorBody = parse(&reply.payload)?;
            return Err(ProtocolError::Remote {
                code: body.code,
                message: body.message,
            });
        }
        if reply.msg_type != msg_type | REPLY {
            return Err(ProtocolError::UnexpectedReply {
                expected: msg_type | REPLY,
                got: reply.msg_type,
            });
        }
        Ok(reply.payload)
    }

    pub fn list(&mut self) -> Result<Vec<String>, ProtocolError> {
        parse(&self.request(LIST, Vec::new())?)
    }

    /// Header JSON exactly as sent by the server.
    pub fn header_json(&mut self, slide: &str) -> Result<Vec<u8>, ProtocolError> {
        self.request(GET_HEADER, canonical(&HeaderRequest { slide: slide.into() }))
    }

    pub fn header(&mut self, slide: &str) -> Result<SlideHeader, ProtocolError> {
        SlideHeader::from_json(&self.header_json(slide)?).map_err(|e| ProtocolError::Malformed(e.to_string()))
    }

    pub fn tile_payload(&mut self, req: &TileRequest) -> Result<TilePayload, ProtocolError> {
        let p = TilePayload::parse(&self.request(GET_TILE, canonical(req))?)?;
        if (p.r, p.c, p.w, p.level) != (req.r, req.c, req.w, req.level) {
            return Err(ProtocolError::Malformed(format!(
                "reply for ({}, {}, {}, {}) to a request for ({}, {}, {}, {})",
                p.r, p.c, p.w, p.level, req.r, req.c, req.w, req.level
            )));
        }
        Ok(p)
    }

    pub fn get_tile(&mut self, req: &TileRequest) -> Result<Vec<Plane>, ProtocolError> {
        self.tile_payload(req)?.planes()
    }

    pub fn slab_payloads(&mut self, req: &SlabRequest) -> Result<Vec<TilePayload>, ProtocolError> {
        decode_slab(&self.request(GET_SLAB, canonical(req))?)
    }

    /// Planes of every field of view in the slab, in linear order.
    pub fn get_slab(&mut self, req: &SlabRequest) -> Result<Vec<Plane>, ProtocolError> {
        let mut out = Vec::new();
        for p in self.slab_payloads(req)? {
            out.extend(p.planes()?);
        }
        Ok(out)
    }

    pub fn start_scan(&mut self, plan_json: &[u8]) -> Result<serde_json::Value, ProtocolError> {
        parse(&self.request(START_SCAN, plan_json.to_vec())?)
    }
}

/// Splits `vsp://host:port/slide_id`.
pub fn parse_slide_url(url: &str) -> Option<(String, String)> {
    let rest = url.strip_prefix("vsp://")?;
    let (addr, slide) = rest.split_once('/')?;
    if addr.is_empty() || slide.is_empty() {
        return None;
    }
    Some((addr.to_string(), slide.to_string()))
}

/// A slide on a remote tile dealer, usable wherever a local reader is.
/// Connections are pooled so concurrent loads do not serialize.
pub struct RemoteSlide {
    addr: SocketAddr,
    slide_id: String,
    header: SlideHeader,
    codec: u8,
    pool: Mutex<Vec<Client>>,
}

impl RemoteSlide {
    pub fn connect(addr: impl ToSocketAddrs, slide_id: &str) -> Result<Self, ProtocolError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ProtocolError::Malformed("address resolves to nothing".into()))?;
        let mut client = Client::connect(addr)?;
        let header = client.header(slide_id)?;
        Ok(RemoteSlide {
            addr,
            slide_id: slide_id.to_string(),
            header,
            codec: 2,
            pool: Mutex::new(vec![client]),
        })
    }

    /// Wire codec requested for tile payloads (default bit-shuffle + DEFLATE).
    pub fn with_codec(mut self, codec: u8) -> Self {
        self.codec = codec;
        self
    }

    pub fn slide_id(&self) -> &str {
        &self.slide_id
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs `f` on a pooled connection. Connections that hit a transport
    /// error are dropped instead of being returned to the pool.
    pub fn with_client<T>(&self, f: impl FnOnce(&mut Client) -> Result<T, ProtocolError>) -> Result<T, ProtocolError> {
        let pooled = self.pool.lock().unwrap().pop();
        let mut client = match pooled {
            Some(c) => c,
            None => Client::connect(self.addr)?,
        };
        let out = f(&mut client);
        if matches!(&out, Ok(_) | Err(ProtocolError::Remote { .. })) {
            self.pool.lock().unwrap().push(client);
        }
        out
    }

    pub fn get_slab(&self, lower_index: u64, upper_index: u64, level: u32) -> Result<Vec<Plane>, ProtocolError> {
        let req = SlabRequest {
            slide: self.slide_id.clone(),
            lower_index,
            upper_index,
            level,
            codec: self.codec,
        };
        self.with_client(|c| c.get_slab(&req))
    }
}

impl TileSource for RemoteSlide {
    fn header(&self) -> &SlideHeader {
        &self.header
    }

    fn load_tile(&self, r: u32, c: u32, colour: Colour, level: u32) -> vslide_core::Result<Option<Vec<Plane>>> {
        let mut req = TileRequest::new(self.slide_id.clone(), r, c, colour, level);
        req.codec = self.codec;
        match self.with_client(|cl| cl.get_tile(&req)) {
            Ok(planes) => Ok(Some(planes)),
            Err(e) if e.is_remote(codes::NOT_FOUND) => Ok(None),
            Err(e) => Err(CoreError::Source(Box::new(e))),
        }
    }
}
