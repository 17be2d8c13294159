//! Forward-only tar entry reader that owns its input.
//!
//! Supports the subset written by the `tar` crate's builder: ustar/GNU
//! headers, regular files, directories, GNU long names and pax `path`
//! records.

use std::io::{self, Read};

pub(crate) const BLOCK: usize = 512;

#[derive(Debug)]
pub(crate) struct RawEntry {
    pub path: String,
    /// Byte offset of the entry's first header block.
    #[allow(dead_code)]
    pub header_offset: u64,
    pub data: Vec<u8>,
}

pub(crate) struct TarEntries<R> {
    reader: R,
    position: u64,
    done: bool,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub(crate) fn parse_octal(field: &[u8]) -> io::Result<u64> {
    if field.first().is_some_and(|b| b & 0x80 != 0) {
        // Base-256 encoding for large sizes.
        let mut v: u64 = (field[0] & 0x7f) as u64;
        for &b in &field[1..] {
            v = v.checked_shl(8).ok_or_else(|| bad("size overflow"))? | b as u64;
        }
        return Ok(v);
    }
    let text: String = field
        .iter()
        .take_while(|&&b| b != 0)
        .map(|&b| b as char)
        .collect();
    let text = text.trim();
    if text.is_empty() {
        return Ok(0);
    }
    u64::from_str_radix(text, 8).map_err(|_| bad(format!("bad octal field {text:?}")))
}

pub(crate) fn c_string(field: &[u8]) -> String {
    let end = field.iter().position(|&b| b == 0).unwrap_or(field.len());
    String::from_utf8_lossy(&field[..end]).into_owned()
}

impl<R: Read> TarEntries<R> {
    pub fn new(reader: R) -> Self {
        Self::at(reader, 0)
    }

    /// Starts reading at a known header offset of the underlying stream.
    pub fn at(reader: R, position: u64) -> Self {
        Self {
            reader,
            position,
            done: false,
        }
    }

    fn read_block(&mut self, buf: &mut [u8; BLOCK]) -> io::Result<bool> {
        let mut filled = 0;
        while filled < BLOCK {
            match self.reader.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return Ok(false),
                Ok(0) => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated tar block")),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        self.position += BLOCK as u64;
        Ok(true)
    }

    fn read_payload(&mut self, size: u64) -> io::Result<Vec<u8>> {
        let mut data = vec![0u8; size as usize];
        self.reader.read_exact(&mut data)?;
        let padded = size.div_ceil(BLOCK as u64) * BLOCK as u64;
        let mut skip = vec![0u8; (padded - size) as usize];
        self.reader.read_exact(&mut skip)?;
        self.position += padded;
        Ok(data)
    }

    fn next_entry(&mut self) -> io::Result<Option<RawEntry>> {
        let mut long_name: Option<String> = None;
        let mut header_offset: Option<u64> = None;
        loop {
            let start = self.position;
            let mut header = [0u8; BLOCK];
            if !self.read_block(&mut header)? {
                return Ok(None);
            }
            if header.iter().all(|&b| b == 0) {
                return Ok(None);
            }
            let stored = parse_octal(&header[148..156])?;
            let computed: u64 = header
                .iter()
                .enumerate()
                .map(|(i, &b)| if (148..156).contains(&i) { b' ' as u64 } else { b as u64 })
                .sum();
            if stored != computed {
                return Err(bad(format!("tar header checksum mismatch at offset {start}")));
            }
            header_offset.get_or_insert(start);
            let size = parse_octal(&header[124..136])?;
            let kind = header[156];
            let data = self.read_payload(size)?;
            match kind {
                b'L' => long_name = Some(c_string(&data)),
                b'x' => {
                    let text = String::from_utf8_lossy(&data);
                    for record in text.lines() {
                        if let Some((_, kv)) = record.split_once(' ') {
                            if let Some(path) = kv.strip_prefix("path=") {
                                long_name = Some(path.to_string());
                            }
                        }
                    }
                }
                b'g' | b'5' => {
                    long_name = None;
                    header_offset = None;
                }
                b'0' | 0 | b'7' => {
                    let path = match long_name.take() {
                        Some(p) => p,
                        None => {
                            let name = c_string(&header[0..100]);
                            let prefix = if &header[257..262] == b"ustar" {
                                c_string(&header[345..500])
                            } else {
                                String::new()
                            };
                            if prefix.is_empty() {
                                name
                            } else {
                                format!("{prefix}/{name}")
                            }
                        }
                    };
                    return Ok(Some(RawEntry {
                        path,
                        header_offset: header_offset.unwrap_or(start),
                        data,
                    }));
                }
                other => return Err(bad(format!("unsupported tar entry type {:?}", other as char))),
            }
        }
    }
}

impl<R: Read> Iterator for TarEntries<R> {
    type Item = io::Result<RawEntry>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_entry() {
            Ok(Some(e)) => Some(Ok(e)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
