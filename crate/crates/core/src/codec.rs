//! Byte-level codecs: PPP-style character stuffing, CRC-32 and the
//! big-endian integer vectors of the vector-sum exercise.

use thiserror::Error;

pub const FLAG: u8 = 0x7E;
pub const ESC: u8 = 0x7D;
const ESC_XOR: u8 = 0x20;

/// Largest payload accepted by [`stuff`].
pub const MAX_STUFF_PAYLOAD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("payload of {len} bytes exceeds the {max} byte limit")]
    TooLong { len: usize, max: usize },
    #[error("malformed frame at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("vector encoding of {len} bytes is not a multiple of 4")]
    Framing { len: usize },
}

/// A flag-delimited, escaped frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuffedFrame(Vec<u8>);

impl StuffedFrame {
    /// Wraps raw bytes without validation; [`destuff`] validates.
    pub fn from_raw(raw: Vec<u8>) -> Self {
        Self(raw)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl AsRef<[u8]> for StuffedFrame {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn stuff(payload: &[u8]) -> Result<StuffedFrame, CodecError> {
    if payload.len() > MAX_STUFF_PAYLOAD {
        return Err(CodecError::TooLong {
            len: payload.len(),
            max: MAX_STUFF_PAYLOAD,
        });
    }
    let specials = payload.iter().filter(|&&b| b == FLAG || b == ESC).count();
    let mut out = Vec::with_capacity(payload.len() + specials + 2);
    out.push(FLAG);
    for &b in payload {
        if b == FLAG || b == ESC {
            out.push(ESC);
            out.push(b ^ ESC_XOR);
        } else {
            out.push(b);
        }
    }
    out.push(FLAG);
    Ok(StuffedFrame(out))
}

pub fn destuff(frame: &StuffedFrame) -> Result<Vec<u8>, CodecError> {
    let raw = frame.as_bytes();
    if raw.first() != Some(&FLAG) {
        return Err(CodecError::Malformed {
            offset: 0,
            reason: "missing opening flag",
        });
    }
    if raw.len() < 2 || raw[raw.len() - 1] != FLAG {
        return Err(CodecError::Malformed {
            offset: raw.len().saturating_sub(1),
            reason: "missing closing flag",
        });
    }
    let body_end = raw.len() - 1;
    let mut out = Vec::with_capacity(body_end);
    let mut i = 1;
    while i < body_end {
        match raw[i] {
            ESC => {
                if i + 1 >= body_end {
                    return Err(CodecError::Malformed {
                        offset: i,
                        reason: "dangling escape",
                    });
                }
                match raw[i + 1] {
                    0x5E | 0x5D => out.push(raw[i + 1] ^ ESC_XOR),
                    _ => {
                        return Err(CodecError::Malformed {
                            offset: i,
                            reason: "invalid escape sequence",
                        })
                    }
                }
                i += 2;
            }
            FLAG => {
                return Err(CodecError::Malformed {
                    offset: i,
                    reason: "unescaped flag inside frame",
                })
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    Ok(out)
}

const CRC32_TABLE: [u32; 256] = crc32_table();

const fn crc32_table() -> [u32; 256] {
    // 0xEDB88320 is 0x04C11DB7 bit-reversed.
    let mut table = [0u32; 256];
    let mut n = 0;
    while n < 256 {
        let mut c = n as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[n] = c;
        n += 1;
    }
    table
}

/// CRC-32 (IEEE 802.3): reflected, init and final XOR `0xFFFFFFFF`.
pub fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = CRC32_TABLE[((crc ^ u32::from(b)) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

/// Ordered list of signed 32-bit integers carried in network byte order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntVector(pub Vec<i32>);

impl IntVector {
    pub fn encode(&self) -> Vec<u8> {
        encode_vector(self)
    }

    pub fn sum(&self) -> i32 {
        sum_vector(self)
    }
}

impl From<Vec<i32>> for IntVector {
    fn from(v: Vec<i32>) -> Self {
        Self(v)
    }
}

pub fn encode_vector(v: &IntVector) -> Vec<u8> {
    v.0.iter().flat_map(|x| x.to_be_bytes()).collect()
}

pub fn decode_vector(bytes: &[u8]) -> Result<IntVector, CodecError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(CodecError::Framing { len: bytes.len() });
    }
    Ok(IntVector(
        bytes
            .chunks_exact(4)
            .map(|c| i32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    ))
}

pub fn sum_vector(v: &IntVector) -> i32 {
    v.0.iter().fold(0i32, |acc, &x| acc.wrapping_add(x))
}

/// Incremental decoder for vectors sent over a byte stream.
///
/// Stream messages are a big-endian `u32` element count followed by the
/// elements. Bytes may arrive in arbitrary fragments; `push` returns each
/// vector as soon as its last byte has been fed.
#[derive(Debug, Default)]
pub struct VectorStreamDecoder {
    buf: Vec<u8>,
}

impl VectorStreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk: &[u8]) -> Vec<IntVector> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        loop {
            if self.buf.len() < 4 {
                break;
            }
            let count =
                u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]) as usize;
            let need = 4 + count * 4;
            if self.buf.len() < need {
                break;
            }
            let v = decode_vector(&self.buf[4..need]).expect("length is a multiple of 4");
            self.buf.drain(..need);
            out.push(v);
        }
        out
    }

    /// Bytes received but not yet part of a complete message.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }
}

/// Stream framing for [`VectorStreamDecoder`]: count prefix plus elements.
pub fn encode_vector_message(v: &IntVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + v.0.len() * 4);
    out.extend_from_slice(&(v.0.len() as u32).to_be_bytes());
    out.extend(encode_vector(v));
    out
}

/// Strips spaces, colons and an optional `0x` prefix, then parses hex.
pub fn parse_hex(text: &str) -> Option<Vec<u8>> {
    let cleaned: String = text
        .split_whitespace()
        .flat_map(|tok| {
            let tok = tok
                .strip_prefix("0x")
                .or_else(|| tok.strip_prefix("0X"))
                .unwrap_or(tok);
            tok.chars().filter(|&c| c != ':' && c != ',' && c != '-')
        })
        .collect();
    if !cleaned.len().is_multiple_of(2) {
        return None;
    }
    (0..cleaned.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(cleaned.get(i..i + 2)?, 16).ok())
        .collect()
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 3);
    for (i, b) in bytes.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&format!("{b:02X}"));
    }
    s
}
