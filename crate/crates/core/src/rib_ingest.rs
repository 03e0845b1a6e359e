//! MRT `TABLE_DUMP_V2` RIB snapshot parsing.
//!
//! Reads a bview file (plain, gzip or bzip2; the compression is detected
//! from the leading magic bytes) and extracts every `RIB_IPV4_UNICAST`
//! entry together with its AS path. All other record types and subtypes
//! are skipped and counted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read};
use std::net::Ipv4Addr;

use chrono::NaiveDate;
use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MRT_TABLE_DUMP_V2: u16 = 13;
pub const SUBTYPE_PEER_INDEX_TABLE: u16 = 1;
pub const SUBTYPE_RIB_IPV4_UNICAST: u16 = 2;

pub(crate) const ATTR_FLAG_EXTENDED_LENGTH: u8 = 0x10;
pub(crate) const ATTR_AS_PATH: u8 = 2;

pub(crate) const PEER_TYPE_IPV6: u8 = 0x01;
pub(crate) const PEER_TYPE_AS4: u8 = 0x02;

const MRT_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum MrtError {
    #[error("truncated MRT data at byte offset {offset}: {context}")]
    Truncated { offset: u64, context: &'static str },
    #[error("malformed MRT record at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("RIB entry references peer index {index} but the peer table has {peer_count} peers (offset {offset})")]
    UnknownPeer { index: u16, peer_count: usize, offset: u64 },
    #[error("I/O error reading MRT stream: {0}")]
    Io(#[from] io::Error),
}

/// AS path segment kinds as encoded in the BGP `AS_PATH` attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegmentKind {
    Set,
    Sequence,
    ConfedSequence,
    ConfedSet,
}

impl SegmentKind {
    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(SegmentKind::Set),
            2 => Some(SegmentKind::Sequence),
            3 => Some(SegmentKind::ConfedSequence),
            4 => Some(SegmentKind::ConfedSet),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SegmentKind::Set => 1,
            SegmentKind::Sequence => 2,
            SegmentKind::ConfedSequence => 3,
            SegmentKind::ConfedSet => 4,
        }
    }

    fn is_confed(self) -> bool {
        matches!(self, SegmentKind::ConfedSequence | SegmentKind::ConfedSet)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSegment {
    pub kind: SegmentKind,
    pub asns: Vec<u32>,
}

/// An ordered AS path, kept segment by segment so `AS_SET` members survive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AsPath {
    pub segments: Vec<PathSegment>,
}

impl AsPath {
    pub fn sequence(asns: impl IntoIterator<Item = u32>) -> Self {
        AsPath {
            segments: vec![PathSegment {
                kind: SegmentKind::Sequence,
                asns: asns.into_iter().collect(),
            }],
        }
    }

    pub fn push_set(mut self, asns: impl IntoIterator<Item = u32>) -> Self {
        self.segments.push(PathSegment {
            kind: SegmentKind::Set,
            asns: asns.into_iter().collect(),
        });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.segments.iter().all(|s| s.asns.is_empty())
    }

    /// Flattened ASN sequence in path order.
    pub fn asns(&self) -> impl Iterator<Item = u32> + '_ {
        self.segments.iter().flat_map(|s| s.asns.iter().copied())
    }

    /// Origin ASNs: the members of the last non-confederation segment.
    ///
    /// A trailing `AS_SET` yields every member (inclusive matching); a
    /// trailing `AS_SEQUENCE` yields its last ASN.
    pub fn origin(&self) -> BTreeSet<u32> {
        let last = self
            .segments
            .iter()
            .rev()
            .find(|s| !s.kind.is_confed() && !s.asns.is_empty());
        match last {
            Some(seg) if seg.kind == SegmentKind::Set => seg.asns.iter().copied().collect(),
            Some(seg) => seg.asns.last().copied().into_iter().collect(),
            None => BTreeSet::new(),
        }
    }
}

impl fmt::Display for AsPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for seg in &self.segments {
            if seg.asns.is_empty() {
                continue;
            }
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            let joined = seg
                .asns
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>();
            match seg.kind {
                SegmentKind::Sequence => write!(f, "{}", joined.join(" "))?,
                SegmentKind::Set => write!(f, "{{{}}}", joined.join(","))?,
                SegmentKind::ConfedSequence => write!(f, "({})", joined.join(" "))?,
                SegmentKind::ConfedSet => write!(f, "[{}]", joined.join(","))?,
            }
        }
        Ok(())
    }
}

/// One announced prefix as seen from one peer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RouteEntry {
    pub prefix: Ipv4Net,
    pub origin: BTreeSet<u32>,
    pub path: AsPath,
    pub peer_index: u16,
}

impl RouteEntry {
    pub fn new(prefix: Ipv4Net, path: AsPath, peer_index: u16) -> Self {
        RouteEntry {
            prefix,
            origin: path.origin(),
            path,
            peer_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerEntry {
    pub bgp_id: Ipv4Addr,
    pub address: std::net::IpAddr,
    pub asn: u32,
    pub as4: bool,
}

/// A parsed bview. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RibSnapshot {
    pub capture_date: NaiveDate,
    pub entries: Vec<RouteEntry>,
    pub peer_count: usize,
    pub peers: Vec<PeerEntry>,
    /// Records skipped, keyed by (MRT type, subtype).
    pub skipped: BTreeMap<(u16, u16), usize>,
}

impl RibSnapshot {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }

    /// Line-delimited text export: `prefix<TAB>origin_asns<TAB>path`.
    pub fn write_text<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.entries {
            let origin = e
                .origin
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{}\t{}\t{}", e.prefix, origin, e.path)?;
        }
        Ok(())
    }
}

/// Wrap `stream` in a decompressor chosen from its magic bytes.
pub fn sniff_decompress<'a, R: Read + 'a>(stream: R) -> io::Result<Box<dyn Read + 'a>> {
    let mut buffered = BufReader::new(stream);
    let head = buffered.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(flate2::read::MultiGzDecoder::new(buffered)))
    } else if head.starts_with(b"BZh") {
        Ok(Box::new(bzip2::read::MultiBzDecoder::new(buffered)))
    } else {
        Ok(Box::new(buffered))
    }
}

/// Parse a bview into a [`RibSnapshot`].
pub fn parse_bview<R: Read>(stream: R, capture_date: NaiveDate) -> Result<RibSnapshot, MrtError> {
    let mut reader = sniff_decompress(stream)?;
    let mut snapshot = RibSnapshot {
        capture_date,
        entries: Vec::new(),
        peer_count: 0,
        peers: Vec::new(),
        skipped: BTreeMap::new(),
    };

    let mut offset: u64 = 0;
    let mut body = Vec::new();
    loop {
        let mut header = [0u8; MRT_HEADER_LEN];
        let got = read_full(&mut reader, &mut header)?;
        if got == 0 {
            break;
        }
        if got < MRT_HEADER_LEN {
            return Err(MrtError::Truncated {
                offset: offset + got as u64,
                context: "MRT common header",
            });
        }
        let mrt_type = u16::from_be_bytes([header[4], header[5]]);
        let subtype = u16::from_be_bytes([header[6], header[7]]);
        let length = u32::from_be_bytes([header[8], header[9], header[10], header[11]]) as u64;

        body.clear();
        let read = (&mut reader).take(length).read_to_end(&mut body)? as u64;
        let body_offset = offset + MRT_HEADER_LEN as u64;
        if read < length {
            return Err(MrtError::Truncated {
                offset: body_offset + read,
                context: "MRT record body shorter than declared length",
            });
        }

        match (mrt_type, subtype) {
            (MRT_TABLE_DUMP_V2, SUBTYPE_PEER_INDEX_TABLE) => {
                snapshot.peers = parse_peer_table(&body, body_offset)?;
                snapshot.peer_count = snapshot.peers.len();
            }
            (MRT_TABLE_DUMP_V2, SUBTYPE_RIB_IPV4_UNICAST) => {
                parse_rib_ipv4(&body, body_offset, &snapshot.peers, &mut snapshot.entries)?;
            }
            other => *snapshot.skipped.entry(other).or_default() += 1,
        }
        offset = body_offset + length;
    }
    Ok(snapshot)
}

/// Deduplicated prefixes whose origin intersects `asns`.
///
/// The default route is never reported.
pub fn originated_prefixes(snapshot: &RibSnapshot, asns: &BTreeSet<u32>) -> BTreeSet<Ipv4Net> {
    snapshot
        .entries
        .iter()
        .filter(|e| e.prefix.prefix_len() > 0)
        .filter(|e| e.origin.iter().any(|a| asns.contains(a)))
        .map(|e| e.prefix)
        .collect()
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Bounds-checked cursor over one record body.
struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8], base: u64) -> Self {
        Cursor { data, pos: 0, base }
    }

    fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], MrtError> {
        if self.remaining() < n {
            return Err(MrtError::Truncated {
                offset: self.base + self.data.len() as u64,
                context,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, context: &'static str) -> Result<u8, MrtError> {
        Ok(self.take(1, context)?[0])
    }

    fn u16(&mut self, context: &'static str) -> Result<u16, MrtError> {
        let b = self.take(2, context)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, MrtError> {
        let b = self.take(4, context)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_peer_table(body: &[u8], base: u64) -> Result<Vec<PeerEntry>, MrtError> {
    let mut cur = Cursor::new(body, base);
    let _collector_id = cur.u32("collector BGP ID")?;
    let view_len = cur.u16("view name length")? as usize;
    cur.take(view_len, "view name")?;
    let count = cur.u16("peer count")? as usize;
    let mut peers = Vec::with_capacity(count);
    for _ in 0..count {
        let peer_type = cur.u8("peer type")?;
        let bgp_id = Ipv4Addr::from(cur.u32("peer BGP ID")?);
        let address = if peer_type & PEER_TYPE_IPV6 != 0 {
            let b = cur.take(16, "peer IPv6 address")?;
            let mut a = [0u8; 16];
            a.copy_from_slice(b);
            std::net::IpAddr::from(a)
        } else {
            std::net::IpAddr::from(Ipv4Addr::from(cur.u32("peer IPv4 address")?))
        };
        let as4 = peer_type & PEER_TYPE_AS4 != 0;
        let asn = if as4 {
            cur.u32("peer AS")?
        } else {
            cur.u16("peer AS")? as u32
        };
        peers.push(PeerEntry {
            bgp_id,
            address,
            asn,
            as4,
        });
    }
    Ok(peers)
}

fn parse_rib_ipv4(
    body: &[u8],
    base: u64,
    peers: &[PeerEntry],
    out: &mut Vec<RouteEntry>,
) -> Result<(), MrtError> {
    let mut cur = Cursor::new(body, base);
    let _sequence = cur.u32("RIB sequence number")?;
    let plen = cur.u8("prefix length")?;
    if plen > 32 {
        return Err(MrtError::Malformed {
            offset: cur.offset() - 1,
            reason: format!("IPv4 prefix length {plen} exceeds 32"),
        });
    }
    let nbytes = (plen as usize).div_ceil(8);
    let raw = cur.take(nbytes, "prefix bytes")?;
    let mut octets = [0u8; 4];
    octets[..nbytes].copy_from_slice(raw);
    let prefix = Ipv4Net::new(Ipv4Addr::from(octets), plen)
        .expect("length checked above")
        .trunc();

    let entry_count = cur.u16("RIB entry count")?;
    for _ in 0..entry_count {
        let entry_offset = cur.offset();
        let peer_index = cur.u16("peer index")?;
        if !peers.is_empty() && peer_index as usize >= peers.len() {
            return Err(MrtError::UnknownPeer {
                index: peer_index,
                peer_count: peers.len(),
                offset: entry_offset,
            });
        }
        let _originated = cur.u32("originated time")?;
        let attr_len = cur.u16("attribute length")? as usize;
        let attr_base = cur.offset();
        let attrs = cur.take(attr_len, "path attributes")?;
        let path = parse_as_path_attr(attrs, attr_base)?.unwrap_or_default();
        out.push(RouteEntry::new(prefix, path, peer_index));
    }
    Ok(())
}

/// Find and decode the `AS_PATH` attribute, if present.
fn parse_as_path_attr(attrs: &[u8], base: u64) -> Result<Option<AsPath>, MrtError> {
    let mut cur = Cursor::new(attrs, base);
    while cur.remaining() > 0 {
        let flags = cur.u8("attribute flags")?;
        let code = cur.u8("attribute type")?;
        let len = if flags & ATTR_FLAG_EXTENDED_LENGTH != 0 {
            cur.u16("attribute length")? as usize
        } else {
            cur.u8("attribute length")? as usize
        };
        let value_base = cur.offset();
        let value = cur.take(len, "attribute value")?;
        if code == ATTR_AS_PATH {
            // TABLE_DUMP_V2 mandates 4-byte ASNs; 2-byte encodings from legacy
            // writers are accepted when the 4-byte reading does not tile.
            return match decode_segments(value, 4) {
                Some(p) => Ok(Some(p)),
                None => decode_segments(value, 2).map(Some).ok_or(MrtError::Malformed {
                    offset: value_base,
                    reason: "AS_PATH segments do not tile the attribute".into(),
                }),
            };
        }
    }
    Ok(None)
}

fn decode_segments(value: &[u8], width: usize) -> Option<AsPath> {
    let mut segments = Vec::new();
    let mut pos = 0;
    while pos < value.len() {
        if value.len() - pos < 2 {
            return None;
        }
        let kind = SegmentKind::from_code(value[pos])?;
        let n = value[pos + 1] as usize;
        pos += 2;
        let need = n * width;
        if value.len() - pos < need {
            return None;
        }
        let asns = value[pos..pos + need]
            .chunks_exact(width)
            .map(|c| match width {
                4 => u32::from_be_bytes([c[0], c[1], c[2], c[3]]),
                _ => u16::from_be_bytes([c[0], c[1]]) as u32,
            })
            .collect();
        pos += need;
        segments.push(PathSegment { kind, asns });
    }
    Some(AsPath { segments })
}
