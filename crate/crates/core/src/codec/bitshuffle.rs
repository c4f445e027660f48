//! Bit-plane transposition of 16-bit samples.
//!
//! Samples are processed in blocks of [`BLOCK_SAMPLES`]. Inside a block, bit
//! `k` (LSB = 0) of sample `j` moves to output bit position `k * 4096 + j`,
//! where bit position `p` lives in byte `p / 8` at bit `p % 8`. High-order
//! bits that are zero across a block therefore become runs of zero bytes.
//! A trailing partial block is copied through as little-endian samples.

use super::CodecError;

pub const BLOCK_SAMPLES: usize = 4096;
const BLOCK_BYTES: usize = BLOCK_SAMPLES * 2;
const PLANE_BYTES: usize = BLOCK_SAMPLES / 8;

pub fn encode(samples: &[u16]) -> Vec<u8> {
    let mut out = vec![0u8; samples.len() * 2];
    encode_into(samples, &mut out);
    out
}

/// Shuffles a little-endian byte image of u16 samples.
pub fn encode_bytes(bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    if bytes.len() % 2 != 0 {
        return Err(CodecError::OddLength(bytes.len()));
    }
    let samples = crate::plane::le_bytes_to_samples(bytes);
    Ok(encode(&samples))
}

fn encode_into(samples: &[u16], out: &mut [u8]) {
    let full = samples.len() / BLOCK_SAMPLES;
    for (block, dst) in samples
        .chunks_exact(BLOCK_SAMPLES)
        .zip(out.chunks_exact_mut(BLOCK_BYTES))
    {
        for bit in 0..16 {
            let plane = &mut dst[bit * PLANE_BYTES..(bit + 1) * PLANE_BYTES];
            for (byte, group) in plane.iter_mut().zip(block.chunks_exact(8)) {
                let mut b = 0u8;
                for (t, s) in group.iter().enumerate() {
                    b |= (((s >> bit) & 1) as u8) << t;
                }
                *byte = b;
            }
        }
    }
    let tail = &samples[full * BLOCK_SAMPLES..];
    let tail_out = &mut out[full * BLOCK_BYTES..];
    for (s, dst) in tail.iter().zip(tail_out.chunks_exact_mut(2)) {
        dst.copy_from_slice(&s.to_le_bytes());
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<u16>, CodecError> {
    if bytes.len() % 2 != 0 {
        return Err(CodecError::OddLength(bytes.len()));
    }
    let n = bytes.len() / 2;
    let mut out = vec![0u16; n];
    let full = n / BLOCK_SAMPLES;
    for (src, block) in bytes
        .chunks_exact(BLOCK_BYTES)
        .zip(out.chunks_exact_mut(BLOCK_SAMPLES))
    {
        for bit in 0..16 {
            let plane = &src[bit * PLANE_BYTES..(bit + 1) * PLANE_BYTES];
            for (byte, group) in plane.iter().zip(block.chunks_exact_mut(8)) {
                for (t, s) in group.iter_mut().enumerate() {
                    *s |= (((byte >> t) & 1) as u16) << bit;
                }
            }
        }
    }
    for (dst, src) in out[full * BLOCK_SAMPLES..]
        .iter_mut()
        .zip(bytes[full * BLOCK_BYTES..].chunks_exact(2))
    {
        *dst = u16::from_le_bytes([src[0], src[1]]);
    }
    Ok(out)
}

/// Unshuffles into a little-endian byte image.
pub fn decode_bytes(bytes: &[u8]) -> Result<Vec<u8>, CodecError> {
    Ok(crate::plane::samples_to_le_bytes(&decode(bytes)?))
}
