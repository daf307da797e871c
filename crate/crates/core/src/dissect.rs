//! Classic pcap reader and a small Ethernet/IPv4/TCP/UDP dissector.
//!
//! A dissected packet is a [`PacketTree`]: ordered layers of named fields
//! with byte and bit offsets. Fields cover every byte of the packet, so the
//! tree can be written back to the exact original bytes. Fields can be
//! masked for exercises; masked values never appear in rendered output.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::codec::to_hex;

pub const MASK: &str = "????";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DissectError {
    #[error("pcap parse error at offset {offset}: {reason}")]
    Pcap { offset: usize, reason: String },
    #[error("pcapng files are not supported")]
    PcapNg,
    #[error("unknown field path `{0}`")]
    Path(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    Ethernet,
    RawIp,
}

impl LinkType {
    fn from_pcap(code: u32) -> Option<Self> {
        match code {
            1 => Some(LinkType::Ethernet),
            101 | 228 => Some(LinkType::RawIp),
            _ => None,
        }
    }

    fn pcap_code(self) -> u32 {
        match self {
            LinkType::Ethernet => 1,
            LinkType::RawIp => 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedPacket {
    /// Microseconds since the Unix epoch.
    pub ts_micros: u64,
    /// Length of the packet on the wire (may exceed `data.len()`).
    pub orig_len: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capture {
    pub link_type: LinkType,
    pub packets: Vec<TimedPacket>,
}

pub fn read_pcap(bytes: &[u8]) -> Result<Capture, DissectError> {
    let err = |offset: usize, reason: &str| DissectError::Pcap {
        offset,
        reason: reason.to_string(),
    };
    if bytes.len() >= 4 && bytes[..4] == [0x0A, 0x0D, 0x0D, 0x0A] {
        return Err(DissectError::PcapNg);
    }
    if bytes.len() < 24 {
        return Err(err(bytes.len(), "global header shorter than 24 bytes"));
    }
    let big_endian = match bytes[..4] {
        [0xA1, 0xB2, 0xC3, 0xD4] => true,
        [0xD4, 0xC3, 0xB2, 0xA1] => false,
        _ => return Err(err(0, "bad magic number")),
    };
    let u32_at = |off: usize| {
        let b = [bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]];
        if big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        }
    };
    let network = u32_at(20);
    let link_type =
        LinkType::from_pcap(network).ok_or_else(|| err(20, "unsupported link type"))?;

    let mut packets = Vec::new();
    let mut off = 24;
    while off < bytes.len() {
        if bytes.len() - off < 16 {
            return Err(err(off, "truncated record header"));
        }
        let ts_sec = u32_at(off);
        let ts_usec = u32_at(off + 4);
        let incl_len = u32_at(off + 8) as usize;
        let orig_len = u32_at(off + 12);
        if incl_len > orig_len as usize {
            return Err(err(off + 8, "captured length exceeds original length"));
        }
        let data_start = off + 16;
        if bytes.len() - data_start < incl_len {
            return Err(err(data_start, "truncated record data"));
        }
        packets.push(TimedPacket {
            ts_micros: u64::from(ts_sec) * 1_000_000 + u64::from(ts_usec),
            orig_len,
            data: bytes[data_start..data_start + incl_len].to_vec(),
        });
        off = data_start + incl_len;
    }
    Ok(Capture { link_type, packets })
}

/// Writes a little-endian, microsecond-resolution classic pcap file.
pub fn write_pcap(capture: &Capture) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xA1B2_C3D4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&capture.link_type.pcap_code().to_le_bytes());
    for p in &capture.packets {
        out.extend_from_slice(&((p.ts_micros / 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&((p.ts_micros % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&(p.data.len() as u32).to_le_bytes());
        out.extend_from_slice(&p.orig_len.to_le_bytes());
        out.extend_from_slice(&p.data);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum FieldValue {
    Uint(u64),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Field {
    pub name: String,
    pub byte_offset: usize,
    /// Offset of the first bit inside `byte_offset`, counted from the MSB.
    pub bit_offset: u8,
    pub bit_width: usize,
    #[serde(skip)]
    pub value: FieldValue,
    #[serde(skip)]
    pub display: String,
    pub masked: bool,
    /// Bit-level sub-fields nested inside this field (e.g. TCP flags).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Field>,
}

impl Field {
    fn uint(name: &str, byte_offset: usize, bit_offset: u8, bit_width: usize, value: u64) -> Self {
        Field {
            name: name.to_string(),
            byte_offset,
            bit_offset,
            bit_width,
            value: FieldValue::Uint(value),
            display: value.to_string(),
            masked: false,
            children: Vec::new(),
        }
    }

    fn bytes(name: &str, byte_offset: usize, data: &[u8]) -> Self {
        Field {
            name: name.to_string(),
            byte_offset,
            bit_offset: 0,
            bit_width: data.len() * 8,
            value: FieldValue::Bytes(data.to_vec()),
            display: to_hex(data),
            masked: false,
            children: Vec::new(),
        }
    }

    fn with_display(mut self, display: impl Into<String>) -> Self {
        self.display = display.into();
        self
    }

    /// Byte range `[start, end)` touched by this field.
    pub fn byte_span(&self) -> (usize, usize) {
        let start_bit = self.byte_offset * 8 + usize::from(self.bit_offset);
        let end_bit = start_bit + self.bit_width;
        (start_bit / 8, end_bit.div_ceil(8))
    }

    /// Integer view of the raw value, when it fits in 64 bits.
    pub fn as_u64(&self) -> Option<u64> {
        match &self.value {
            FieldValue::Uint(v) => Some(*v),
            FieldValue::Bytes(b) if b.len() <= 8 => {
                Some(b.iter().fold(0u64, |acc, &x| (acc << 8) | u64::from(x)))
            }
            FieldValue::Bytes(_) => None,
        }
    }

    fn write_into(&self, buf: &mut [u8]) {
        match &self.value {
            FieldValue::Bytes(b) => {
                buf[self.byte_offset..self.byte_offset + b.len()].copy_from_slice(b);
            }
            FieldValue::Uint(v) => {
                let start = self.byte_offset * 8 + usize::from(self.bit_offset);
                for i in 0..self.bit_width {
                    let bit = (v >> (self.bit_width - 1 - i)) & 1;
                    let pos = start + i;
                    let mask = 0x80u8 >> (pos % 8);
                    if bit == 1 {
                        buf[pos / 8] |= mask;
                    } else {
                        buf[pos / 8] &= !mask;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Layer {
    pub name: String,
    pub truncated: bool,
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketTree {
    pub len: usize,
    pub layers: Vec<Layer>,
}

impl PacketTree {
    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Resolves a dotted path such as `tcp.seq` or `tcp.flags.syn`.
    pub fn field(&self, path: &str) -> Option<&Field> {
        let (layer, rest) = path.split_once('.')?;
        let layer = self.layer(layer)?;
        let mut parts = rest.split('.');
        let first = parts.next()?;
        let mut field = layer.fields.iter().find(|f| f.name == first)?;
        for part in parts {
            field = field.children.iter().find(|f| f.name == part)?;
        }
        Some(field)
    }

    fn field_mut(&mut self, path: &str) -> Option<&mut Field> {
        let (layer, rest) = path.split_once('.')?;
        let layer = self.layers.iter_mut().find(|l| l.name == layer)?;
        let mut parts = rest.split('.');
        let first = parts.next()?;
        let mut field = layer.fields.iter_mut().find(|f| f.name == first)?;
        for part in parts {
            field = field.children.iter_mut().find(|f| f.name == part)?;
        }
        Some(field)
    }

    /// Writes every top-level field back into a fresh buffer.
    pub fn reserialize(&self) -> Vec<u8> {
        let mut buf = vec![0u8; self.len];
        for layer in &self.layers {
            for f in &layer.fields {
                f.write_into(&mut buf);
            }
        }
        buf
    }

    /// All fields in render order, with their dotted paths and effective
    /// masked state (a parent with a masked child is hidden too, and so are
    /// the children of a masked parent).
    pub fn flatten(&self) -> Vec<(String, &Field, bool)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for f in &layer.fields {
                let path = format!("{}.{}", layer.name, f.name);
                let hidden = f.masked || f.children.iter().any(|c| c.masked);
                out.push((path.clone(), f, hidden));
                for c in &f.children {
                    out.push((format!("{path}.{}", c.name), c, f.masked || c.masked));
                }
            }
        }
        out
    }

    /// Canonical text: one `path = display` line per field.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (path, f, hidden) in self.flatten() {
            let display = if hidden { MASK } else { f.display.as_str() };
            let _ = writeln!(s, "{path} = {display}");
        }
        s
    }

    /// Byte offsets covered by masked fields.
    pub fn masked_bytes(&self) -> Vec<bool> {
        let mut masked = vec![false; self.len];
        for (_, f, hidden) in self.flatten() {
            if hidden {
                let (a, b) = f.byte_span();
                for m in &mut masked[a..b.min(self.len)] {
                    *m = true;
                }
            }
        }
        masked
    }
}

/// 16 bytes per row with an offset gutter; masked bytes render as `??`.
pub fn hex_dump(data: &[u8], masked: Option<&[bool]>) -> String {
    let mut s = String::new();
    for (row, chunk) in data.chunks(16).enumerate() {
        let _ = write!(s, "{:04x} ", row * 16);
        for (i, b) in chunk.iter().enumerate() {
            let idx = row * 16 + i;
            if masked.is_some_and(|m| m.get(idx).copied().unwrap_or(false)) {
                s.push_str(" ??");
            } else {
                let _ = write!(s, " {b:02x}");
            }
        }
        s.push('\n');
    }
    s
}

fn be(data: &[u8]) -> u64 {
    data.iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b))
}

fn mac(b: &[u8]) -> String {
    b.iter()
        .map(|x| format!("{x:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}

fn ipv4_addr(b: &[u8]) -> String {
    format!("{}.{}.{}.{}", b[0], b[1], b[2], b[3])
}

fn truncated_layer(name: &str, offset: usize, rest: &[u8]) -> Layer {
    let fields = if rest.is_empty() {
        Vec::new()
    } else {
        vec![Field::bytes("truncated", offset, rest)]
    };
    Layer {
        name: name.to_string(),
        truncated: true,
        fields,
    }
}

fn opaque_layer(name: &str, field: &str, offset: usize, data: &[u8]) -> Layer {
    Layer {
        name: name.to_string(),
        truncated: false,
        fields: vec![Field::bytes(field, offset, data)],
    }
}

/// Dissects one packet. Never fails: short headers yield truncated layers.
pub fn dissect_packet(pkt: &[u8], link_type: LinkType) -> PacketTree {
    let mut layers = Vec::new();
    match link_type {
        LinkType::Ethernet => dissect_ethernet(pkt, &mut layers),
        LinkType::RawIp => dissect_ip(pkt, 0, &mut layers),
    }
    PacketTree {
        len: pkt.len(),
        layers,
    }
}

fn dissect_ethernet(pkt: &[u8], layers: &mut Vec<Layer>) {
    if pkt.len() < 14 {
        layers.push(truncated_layer("eth", 0, pkt));
        return;
    }
    let ethertype = be(&pkt[12..14]);
    layers.push(Layer {
        name: "eth".into(),
        truncated: false,
        fields: vec![
            Field::bytes("dst", 0, &pkt[0..6]).with_display(mac(&pkt[0..6])),
            Field::bytes("src", 6, &pkt[6..12]).with_display(mac(&pkt[6..12])),
            Field::uint("ethertype", 12, 0, 16, ethertype)
                .with_display(format!("0x{ethertype:04x}")),
        ],
    });
    if pkt.len() == 14 {
        return;
    }
    if ethertype == 0x0800 {
        dissect_ip(pkt, 14, layers);
    } else {
        layers.push(opaque_layer("payload", "data", 14, &pkt[14..]));
    }
}

fn dissect_ip(pkt: &[u8], base: usize, layers: &mut Vec<Layer>) {
    let ip = &pkt[base..];
    if ip.len() < 20 || ip[0] >> 4 != 4 || usize::from(ip[0] & 0x0F) * 4 < 20 {
        if ip.len() >= 20 && ip[0] >> 4 != 4 {
            layers.push(opaque_layer("payload", "data", base, ip));
        } else {
            layers.push(truncated_layer("ipv4", base, ip));
        }
        return;
    }
    let ihl = usize::from(ip[0] & 0x0F);
    let hlen = ihl * 4;
    if ip.len() < hlen {
        layers.push(truncated_layer("ipv4", base, ip));
        return;
    }
    let flags = u64::from(ip[6] >> 5);
    let proto = ip[9];
    let total_length = be(&ip[2..4]) as usize;
    let mut flags_field = Field::uint("flags", base + 6, 0, 3, flags).with_display(format!(
        "0x{flags:x}{}",
        match (flags & 0b010 != 0, flags & 0b001 != 0) {
            (true, true) => " (DF, MF)",
            (true, false) => " (DF)",
            (false, true) => " (MF)",
            (false, false) => "",
        }
    ));
    flags_field.children = vec![
        Field::uint("reserved", base + 6, 0, 1, flags >> 2),
        Field::uint("df", base + 6, 1, 1, (flags >> 1) & 1),
        Field::uint("mf", base + 6, 2, 1, flags & 1),
    ];
    let mut fields = vec![
        Field::uint("version", base, 0, 4, u64::from(ip[0] >> 4)),
        Field::uint("ihl", base, 4, 4, ihl as u64),
        Field::uint("dscp", base + 1, 0, 6, u64::from(ip[1] >> 2)),
        Field::uint("ecn", base + 1, 6, 2, u64::from(ip[1] & 3)),
        Field::uint("total_length", base + 2, 0, 16, total_length as u64),
        Field::uint("id", base + 4, 0, 16, be(&ip[4..6]))
            .with_display(format!("0x{:04x}", be(&ip[4..6]))),
        flags_field,
        Field::uint("frag_offset", base + 6, 3, 13, be(&ip[6..8]) & 0x1FFF),
        Field::uint("ttl", base + 8, 0, 8, u64::from(ip[8])),
        Field::uint("protocol", base + 9, 0, 8, u64::from(proto)),
        Field::uint("checksum", base + 10, 0, 16, be(&ip[10..12]))
            .with_display(format!("0x{:04x}", be(&ip[10..12]))),
        Field::bytes("src", base + 12, &ip[12..16]).with_display(ipv4_addr(&ip[12..16])),
        Field::bytes("dst", base + 16, &ip[16..20]).with_display(ipv4_addr(&ip[16..20])),
    ];
    if hlen > 20 {
        fields.push(Field::bytes("options", base + 20, &ip[20..hlen]));
    }
    layers.push(Layer {
        name: "ipv4".into(),
        truncated: false,
        fields,
    });

    // Bytes beyond total_length (e.g. Ethernet padding) go into a trailer.
    let end = if total_length >= hlen && total_length <= ip.len() {
        total_length
    } else {
        ip.len()
    };
    let body = &ip[hlen..end];
    let body_off = base + hlen;
    if !body.is_empty() {
        match proto {
            6 => dissect_tcp(body, body_off, layers),
            17 => dissect_udp(body, body_off, layers),
            _ => layers.push(opaque_layer("payload", "data", body_off, body)),
        }
    }
    if end < ip.len() {
        layers.push(opaque_layer("trailer", "padding", base + end, &ip[end..]));
    }
}

const TCP_FLAG_NAMES: [&str; 8] = ["cwr", "ece", "urg", "ack", "psh", "rst", "syn", "fin"];

fn dissect_tcp(seg: &[u8], base: usize, layers: &mut Vec<Layer>) {
    let data_offset = seg.get(12).map(|b| usize::from(b >> 4) * 4);
    let hlen = match data_offset {
        Some(h) if seg.len() >= 20 && h >= 20 && h <= seg.len() => h,
        _ => {
            layers.push(truncated_layer("tcp", base, seg));
            return;
        }
    };
    let flags = be(&seg[12..14]) & 0x0FFF;
    let set: Vec<String> = TCP_FLAG_NAMES
        .iter()
        .enumerate()
        .filter(|(i, _)| flags & (0x80 >> i) != 0)
        .map(|(_, n)| n.to_uppercase())
        .collect();
    let mut flags_field = Field::uint("flags", base + 12, 4, 12, flags).with_display(
        if set.is_empty() {
            format!("0x{flags:03x}")
        } else {
            format!("0x{flags:03x} ({})", set.join(", "))
        },
    );
    let mut children = vec![
        Field::uint("reserved", base + 12, 4, 3, (flags >> 9) & 0x7),
        Field::uint("ns", base + 12, 7, 1, (flags >> 8) & 1),
    ];
    for (i, name) in TCP_FLAG_NAMES.iter().enumerate() {
        children.push(Field::uint(name, base + 13, i as u8, 1, (flags >> (7 - i)) & 1));
    }
    flags_field.children = children;
    let mut fields = vec![
        Field::uint("src_port", base, 0, 16, be(&seg[0..2])),
        Field::uint("dst_port", base + 2, 0, 16, be(&seg[2..4])),
        Field::uint("seq", base + 4, 0, 32, be(&seg[4..8])),
        Field::uint("ack", base + 8, 0, 32, be(&seg[8..12])),
        Field::uint("data_offset", base + 12, 0, 4, (hlen / 4) as u64),
        flags_field,
        Field::uint("window", base + 14, 0, 16, be(&seg[14..16])),
        Field::uint("checksum", base + 16, 0, 16, be(&seg[16..18]))
            .with_display(format!("0x{:04x}", be(&seg[16..18]))),
        Field::uint("urgent_ptr", base + 18, 0, 16, be(&seg[18..20])),
    ];
    if hlen > 20 {
        fields.push(Field::bytes("options", base + 20, &seg[20..hlen]));
    }
    layers.push(Layer {
        name: "tcp".into(),
        truncated: false,
        fields,
    });
    if seg.len() > hlen {
        layers.push(opaque_layer("payload", "data", base + hlen, &seg[hlen..]));
    }
}

fn dissect_udp(seg: &[u8], base: usize, layers: &mut Vec<Layer>) {
    if seg.len() < 8 {
        layers.push(truncated_layer("udp", base, seg));
        return;
    }
    layers.push(Layer {
        name: "udp".into(),
        truncated: false,
        fields: vec![
            Field::uint("src_port", base, 0, 16, be(&seg[0..2])),
            Field::uint("dst_port", base + 2, 0, 16, be(&seg[2..4])),
            Field::uint("length", base + 4, 0, 16, be(&seg[4..6])),
            Field::uint("checksum", base + 6, 0, 16, be(&seg[6..8]))
                .with_display(format!("0x{:04x}", be(&seg[6..8]))),
        ],
    });
    if seg.len() > 8 {
        layers.push(opaque_layer("payload", "data", base + 8, &seg[8..]));
    }
}

/// Returns a copy of `tree` with the named fields masked.
pub fn mask_fields<S: AsRef<str>>(tree: &PacketTree, paths: &[S]) -> Result<PacketTree, DissectError> {
    let mut out = tree.clone();
    for p in paths {
        let p = p.as_ref();
        out.field_mut(p)
            .ok_or_else(|| DissectError::Path(p.to_string()))?
            .masked = true;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChecksumVerdict {
    Valid,
    Invalid { stored: u16, computed: u16 },
    /// UDP checksum field of zero: the sender did not compute one.
    Disabled,
    /// The captured bytes do not cover the checksummed range.
    Unverifiable,
}

/// Ones'-complement sum folded to 16 bits, complemented.
pub fn internet_checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut carry: Option<u8> = None;
    for chunk in chunks {
        for &b in *chunk {
            match carry.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => carry = Some(b),
            }
        }
    }
    if let Some(hi) = carry {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Recomputes IPv4 header and TCP/UDP checksums of `pkt`.
pub fn verify_checksums(tree: &PacketTree, pkt: &[u8]) -> Vec<(String, ChecksumVerdict)> {
    let mut out = Vec::new();
    let Some(ip) = tree.layer("ipv4").filter(|l| !l.truncated) else {
        return out;
    };
    let ip_start = ip.fields[0].byte_offset;
    let ihl = tree.field("ipv4.ihl").and_then(Field::as_u64).unwrap_or(5) as usize;
    let hlen = ihl * 4;
    let header = &pkt[ip_start..ip_start + hlen];
    let stored = u16::from_be_bytes([header[10], header[11]]);
    let mut zeroed = header.to_vec();
    zeroed[10] = 0;
    zeroed[11] = 0;
    let computed = internet_checksum(&[&zeroed]);
    out.push((
        "ipv4".to_string(),
        if stored == computed {
            ChecksumVerdict::Valid
        } else {
            ChecksumVerdict::Invalid { stored, computed }
        },
    ));

    let total_length = tree
        .field("ipv4.total_length")
        .and_then(Field::as_u64)
        .unwrap_or(0) as usize;
    let proto = tree.field("ipv4.protocol").and_then(Field::as_u64).unwrap_or(0) as u8;
    let (name, cksum_off) = match proto {
        6 => ("tcp", 16),
        17 => ("udp", 6),
        _ => return out,
    };
    let Some(layer) = tree.layer(name) else {
        return out;
    };
    if layer.truncated {
        out.push((name.to_string(), ChecksumVerdict::Unverifiable));
        return out;
    }
    let seg_start = ip_start + hlen;
    let seg_len = total_length.saturating_sub(hlen);
    if total_length < hlen || seg_start + seg_len > pkt.len() {
        out.push((name.to_string(), ChecksumVerdict::Unverifiable));
        return out;
    }
    let seg = &pkt[seg_start..seg_start + seg_len];
    let stored = u16::from_be_bytes([seg[cksum_off], seg[cksum_off + 1]]);
    if proto == 17 && stored == 0 {
        out.push((name.to_string(), ChecksumVerdict::Disabled));
        return out;
    }
    let mut seg_zeroed = seg.to_vec();
    seg_zeroed[cksum_off] = 0;
    seg_zeroed[cksum_off + 1] = 0;
    let len_bytes = (seg_len as u16).to_be_bytes();
    let pseudo = [
        &header[12..16],
        &header[16..20],
        &[0u8, proto][..],
        &len_bytes[..],
    ];
    let mut computed = internet_checksum(&[pseudo[0], pseudo[1], pseudo[2], pseudo[3], &seg_zeroed]);
    if proto == 17 && computed == 0 {
        computed = 0xFFFF;
    }
    out.push((
        name.to_string(),
        if stored == computed {
            ChecksumVerdict::Valid
        } else {
            ChecksumVerdict::Invalid { stored, computed }
        },
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ethernet + IPv4 + TCP SYN, checksums filled in by hand-written
    /// ones'-complement arithmetic below.
    fn syn_packet() -> Vec<u8> {
        let mut p = vec![
            0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00,
            // ipv4
            0x45, 0x00, 0x00, 0x28, 0x12, 0x34, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00, 10, 0, 0, 1,
            10, 0, 0, 2, // tcp
            0xc0, 0x01, 0x00, 0x50, 0x00, 0x00, 0x03, 0xe8, 0x00, 0x00, 0x00, 0x00, 0x50, 0x02,
            0xff, 0xff, 0x00, 0x00, 0x00, 0x00,
        ];
        let ipck = internet_checksum(&[&p[14..34]]);
        p[24..26].copy_from_slice(&ipck.to_be_bytes());
        let pseudo = [10, 0, 0, 1, 10, 0, 0, 2, 0, 6, 0, 20];
        let tcpck = internet_checksum(&[&pseudo, &p[34..54]]);
        p[50..52].copy_from_slice(&tcpck.to_be_bytes());
        p
    }

    #[test]
    fn internet_checksum_rfc1071_example() {
        // RFC 1071 section 3 worked example: sum 0xddf2, checksum 0x220d.
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(internet_checksum(&[&data]), 0x220d);
    }

    #[test]
    fn syn_flags() {
        let t = dissect_packet(&syn_packet(), LinkType::Ethernet);
        assert_eq!(t.field("tcp.flags").unwrap().as_u64(), Some(0x002));
        assert_eq!(t.field("tcp.flags.syn").unwrap().as_u64(), Some(1));
        assert_eq!(t.field("tcp.flags.ack").unwrap().as_u64(), Some(0));
        assert_eq!(t.field("tcp.seq").unwrap().as_u64(), Some(1000));
        assert_eq!(t.field("ipv4.ttl").unwrap().as_u64(), Some(64));
        assert_eq!(t.field("ipv4.flags.df").unwrap().as_u64(), Some(1));
        assert_eq!(t.field("ipv4.src").unwrap().display, "10.0.0.1");
        assert_eq!(t.field("tcp.flags").unwrap().display, "0x002 (SYN)");
    }

    #[test]
    fn reserialize_is_exact() {
        let p = syn_packet();
        assert_eq!(dissect_packet(&p, LinkType::Ethernet).reserialize(), p);
        assert_eq!(dissect_packet(&p[14..], LinkType::RawIp).reserialize(), &p[14..]);
    }

    #[test]
    fn short_input_is_truncated_not_fatal() {
        let t = dissect_packet(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], LinkType::Ethernet);
        assert_eq!(t.layers.len(), 1);
        assert!(t.layers[0].truncated);
        assert_eq!(t.reserialize(), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let t = dissect_packet(&[], LinkType::Ethernet);
        assert!(t.layers[0].truncated);
    }

    #[test]
    fn truncated_tcp_header() {
        let p = syn_packet();
        let t = dissect_packet(&p[..40], LinkType::Ethernet);
        let tcp = t.layer("tcp").unwrap();
        assert!(tcp.truncated);
        assert_eq!(t.reserialize(), &p[..40]);
    }

    #[test]
    fn mask_examples() {
        let t = dissect_packet(&syn_packet(), LinkType::Ethernet);
        let m = mask_fields(&t, &["tcp.seq"]).unwrap();
        assert!(m.field("tcp.seq").unwrap().masked);
        let masked_count = m.flatten().iter().filter(|(_, f, _)| f.masked).count();
        assert_eq!(masked_count, 1);
        assert_eq!(mask_fields::<&str>(&t, &[]).unwrap(), t);
        assert_eq!(
            mask_fields(&t, &["tcp.nonexistent"]),
            Err(DissectError::Path("tcp.nonexistent".into()))
        );
        assert!(m.render().contains("tcp.seq = ????"));
        assert!(!m.render().contains("tcp.seq = 1000"));
    }

    #[test]
    fn masking_a_flag_hides_the_aggregate() {
        let t = dissect_packet(&syn_packet(), LinkType::Ethernet);
        let m = mask_fields(&t, &["tcp.flags.syn"]).unwrap();
        let r = m.render();
        assert!(r.contains("tcp.flags = ????"));
        assert!(r.contains("tcp.flags.syn = ????"));
        assert!(r.contains("tcp.flags.fin = 0"));
    }

    #[test]
    fn mask_is_idempotent_and_order_free() {
        let t = dissect_packet(&syn_packet(), LinkType::Ethernet);
        let a = mask_fields(&t, &["tcp.seq", "ipv4.ttl"]).unwrap();
        let b = mask_fields(&t, &["ipv4.ttl", "tcp.seq"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(mask_fields(&a, &["tcp.seq", "ipv4.ttl"]).unwrap(), a);
    }

    #[test]
    fn checksum_verdicts() {
        let mut p = syn_packet();
        let t = dissect_packet(&p, LinkType::Ethernet);
        let v = verify_checksums(&t, &p);
        assert_eq!(v[0], ("ipv4".into(), ChecksumVerdict::Valid));
        assert_eq!(v[1], ("tcp".into(), ChecksumVerdict::Valid));
        p[25] ^= 0x01;
        let t = dissect_packet(&p, LinkType::Ethernet);
        assert!(matches!(
            verify_checksums(&t, &p)[0].1,
            ChecksumVerdict::Invalid { .. }
        ));
    }

    #[test]
    fn udp_zero_checksum_is_disabled() {
        let mut p = vec![
            0x45, 0x00, 0x00, 0x1e, 0x00, 0x01, 0x00, 0x00, 0x40, 0x11, 0x00, 0x00, 192, 168, 0,
            1, 192, 168, 0, 2, 0x30, 0x39, 0x00, 0x35, 0x00, 0x0a, 0x00, 0x00, 0xab, 0xcd,
        ];
        let ck = internet_checksum(&[&p[..20]]);
        p[10..12].copy_from_slice(&ck.to_be_bytes());
        let t = dissect_packet(&p, LinkType::RawIp);
        let v = verify_checksums(&t, &p);
        assert_eq!(v[1], ("udp".into(), ChecksumVerdict::Disabled));
        assert_eq!(t.field("payload.data").unwrap().display, "AB CD");
    }

    #[test]
    fn pcap_errors() {
        assert_eq!(
            read_pcap(&[0x0A, 0x0D, 0x0D, 0x0A, 0, 0, 0, 0]),
            Err(DissectError::PcapNg)
        );
        assert!(matches!(read_pcap(&[0; 10]), Err(DissectError::Pcap { .. })));
        assert!(matches!(
            read_pcap(&[0xde; 24]),
            Err(DissectError::Pcap { offset: 0, .. })
        ));
    }

    #[test]
    fn pcap_empty_body_and_both_endiannesses() {
        let cap = Capture {
            link_type: LinkType::Ethernet,
            packets: vec![],
        };
        let bytes = write_pcap(&cap);
        assert_eq!(read_pcap(&bytes).unwrap().packets.len(), 0);

        let cap = Capture {
            link_type: LinkType::Ethernet,
            packets: vec![TimedPacket {
                ts_micros: 1_500_000,
                orig_len: 54,
                data: syn_packet(),
            }],
        };
        let le = write_pcap(&cap);
        assert_eq!(read_pcap(&le).unwrap(), cap);
        let mut bev = Vec::new();
        bev.extend_from_slice(&0xA1B2_C3D4u32.to_be_bytes());
        bev.extend_from_slice(&2u16.to_be_bytes());
        bev.extend_from_slice(&4u16.to_be_bytes());
        bev.extend_from_slice(&[0; 8]);
        bev.extend_from_slice(&65535u32.to_be_bytes());
        bev.extend_from_slice(&1u32.to_be_bytes());
        for v in [1u32, 500_000, 54, 54] {
            bev.extend_from_slice(&v.to_be_bytes());
        }
        bev.extend_from_slice(&syn_packet());
        assert_eq!(read_pcap(&bev).unwrap(), cap);

        let truncated = &le[..le.len() - 1];
        assert!(matches!(
            read_pcap(truncated),
            Err(DissectError::Pcap { offset: 40, .. })
        ));
    }

    #[test]
    fn hex_dump_blanks_masked_bytes() {
        let t = dissect_packet(&syn_packet(), LinkType::Ethernet);
        let m = mask_fields(&t, &["tcp.seq"]).unwrap();
        let dump = hex_dump(&syn_packet(), Some(&m.masked_bytes()));
        assert!(dump.contains("?? ?? ?? ??"));
        assert!(!dump.contains("03 e8"));
        assert!(dump.starts_with("0000  00 11 22"));
    }
}
