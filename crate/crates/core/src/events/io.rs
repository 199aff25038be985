//! `EGVDEVT1` binary event files and the `t,x,y,p` CSV interchange form.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! magic   [u8; 8]  "EGVDEVT1"
//! width   u16
//! height  u16
//! t_start u64
//! t_end   u64
//! count   u64
//! count × (t u64, x u16, y u16, p i8)
//! ```

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Event, EventStream};
use crate::error::{Error, Result};

pub const EVENT_MAGIC: &[u8; 8] = b"EGVDEVT1";
const HEADER_LEN: usize = 8 + 2 + 2 + 8 + 8 + 8;
const RECORD_LEN: usize = 8 + 2 + 2 + 1;

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    buf.extend_from_slice(EVENT_MAGIC);
    buf.extend_from_slice(&stream.width.to_le_bytes());
    buf.extend_from_slice(&stream.height.to_le_bytes());
    buf.extend_from_slice(&stream.t_start.to_le_bytes());
    buf.extend_from_slice(&stream.t_end.to_le_bytes());
    buf.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in &stream.events {
        buf.extend_from_slice(&e.t.to_le_bytes());
        buf.extend_from_slice(&e.x.to_le_bytes());
        buf.extend_from_slice(&e.y.to_le_bytes());
        buf.push(e.p as u8);
    }
    buf
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(format_err(
                self.bytes.len(),
                format!("truncated file while reading {what}"),
            ));
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.take::<2>(what).map(u16::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < EVENT_MAGIC.len() || &bytes[..8] != EVENT_MAGIC {
        return Err(format_err(0, "bad magic (expected EGVDEVT1)"));
    }
    let mut cur = Cursor { bytes, pos: 8 };
    let width = cur.u16("width")?;
    let height = cur.u16("height")?;
    let t_start = cur.u64("t_start")?;
    let t_end = cur.u64("t_end")?;
    if t_end < t_start {
        return Err(format_err(20, format!("t_end {t_end} precedes t_start {t_start}")));
    }
    let count = cur.u64("count")?;
    let expected = (count as u128) * RECORD_LEN as u128;
    let available = (bytes.len() - HEADER_LEN) as u128;
    if expected > available {
        return Err(format_err(
            bytes.len(),
            format!("truncated file: {count} records need {expected} bytes, {available} present"),
        ));
    }
    if expected < available {
        return Err(format_err(
            HEADER_LEN + expected as usize,
            "trailing bytes after last record",
        ));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut prev: Option<(u64, u16, u16, i8)> = None;
    for _ in 0..count {
        let offset = cur.pos;
        let t = cur.u64("t")?;
        let x = cur.u16("x")?;
        let y = cur.u16("y")?;
        let p = cur.take::<1>("p")?[0] as i8;
        if x >= width || y >= height {
            return Err(format_err(
                offset,
                format!("coordinates ({x}, {y}) outside {width}x{height}"),
            ));
        }
        if p != 1 && p != -1 {
            return Err(format_err(offset, format!("polarity {p} not in {{-1, +1}}")));
        }
        if t < t_start || t > t_end {
            return Err(format_err(
                offset,
                format!("timestamp {t} outside [{t_start}, {t_end}]"),
            ));
        }
        let e = Event { x, y, t, p };
        if prev.is_some_and(|k| k > e.sort_key()) {
            return Err(format_err(offset, "records not sorted by (t, y, x, p)"));
        }
        prev = Some(e.sort_key());
        events.push(e);
    }
    Ok(EventStream {
        width,
        height,
        t_start,
        t_end,
        events,
    })
}

pub fn write_events(stream: &EventStream, path: &Path) -> Result<()> {
    std::fs::write(path, encode_events(stream)).map_err(|e| Error::io(path, e))
}

/// Reads an event file, dispatching on content: binary when the magic
/// matches, CSV when the file starts with a `#` comment or `t,x,y,p` header.
pub fn read_events(path: &Path) -> Result<EventStream> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"#") || bytes.starts_with(b"t,") {
        return parse_csv(&bytes);
    }
    decode_events(&bytes)
}

/// CSV form: an optional `# width=W height=H t_start=A t_end=B` line, a
/// `t,x,y,p` header, then one event per row. Missing metadata is inferred
/// from the events.
pub fn write_events_csv(stream: &EventStream, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(
        out,
        "# width={} height={} t_start={} t_end={}",
        stream.width, stream.height, stream.t_start, stream.t_end
    )
    .map_err(io)?;
    writeln!(out, "t,x,y,p").map_err(io)?;
    for e in &stream.events {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_events_csv(path: &Path) -> Result<EventStream> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&bytes)
}

fn parse_csv(bytes: &[u8]) -> Result<EventStream> {
    let mut reader = BufReader::new(bytes);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| format_err(0, e.to_string()))?;
    let mut meta: [Option<u64>; 4] = [None; 4];
    let mut consumed = 0usize;
    if let Some(rest) = first.trim().strip_prefix('#') {
        consumed = first.len();
        for kv in rest.split_whitespace() {
            let Some((k, v)) = kv.split_once('=') else {
                continue;
            };
            let slot = match k {
                "width" => 0,
                "height" => 1,
                "t_start" => 2,
                "t_end" => 3,
                _ => continue,
            };
            meta[slot] = Some(
                v.parse()
                    .map_err(|_| format_err(0, format!("bad metadata value {kv}")))?,
            );
        }
    }
    let body = &bytes[consumed..];
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body);
    let headers = rdr
        .headers()
        .map_err(|e| format_err(consumed, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "y", "p"] {
        return Err(format_err(consumed, "expected header t,x,y,p"));
    }
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte()) as usize;
            format_err(consumed + off, e.to_string())
        })?;
        let offset = consumed + rec.position().map_or(0, |p| p.byte()) as usize;
        let field = |i: usize| -> Result<i64> {
            rec.get(i)
                .and_then(|s| s.parse::<i64>().ok())
                .ok_or_else(|| format_err(offset, format!("bad field {i} in row")))
        };
        let (t, x, y, p) = (field(0)?, field(1)?, field(2)?, field(3)?);
        if t < 0 || !(0..=u16::MAX as i64).contains(&x) || !(0..=u16::MAX as i64).contains(&y) {
            return Err(format_err(offset, "negative or oversized value"));
        }
        if p != 1 && p != -1 {
            return Err(format_err(offset, format!("polarity {p} not in {{-1, +1}}")));
        }
        events.push(Event {
            x: x as u16,
            y: y as u16,
            t: t as u64,
            p: p as i8,
        });
    }
    let width = meta[0].map_or_else(|| events.iter().map(|e| e.x as u64 + 1).max().unwrap_or(0), |v| v);
    let height = meta[1].map_or_else(|| events.iter().map(|e| e.y as u64 + 1).max().unwrap_or(0), |v| v);
    let t_start = meta[2].unwrap_or_else(|| events.iter().map(|e| e.t).min().unwrap_or(0));
    let t_end = meta[3].unwrap_or_else(|| events.iter().map(|e| e.t).max().unwrap_or(0));
    if width > u16::MAX as u64 || height > u16::MAX as u64 {
        return Err(format_err(0, "sensor size exceeds u16"));
    }
    EventStream::new(width as u16, height as u16, t_start, t_end, events).map_err(|e| {
        format_err(consumed, e.to_string())
    })
}
