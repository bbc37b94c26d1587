//! Instance files.
//!
//! Binary layout: one ASCII JSON header line terminated by `\n`, then
//! little-endian `u64` row and column indices of the upper-triangle pattern,
//! `m` arrays of `f64` values, the optional `B` values, the optional `c`, and
//! finally a CRC-64/XZ of every preceding byte as a little-endian `u64`.
//! Files ending in `.json` use a text variant holding the same header and
//! arrays, with the checksum taken over the binary body.

use std::path::Path;
use std::sync::Arc;

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{InstanceMeta, Pattern, ProblemInstance};

pub const MAGIC: &str = "EIGPROX-INSTANCE";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_ALGO: &str = "crc-64/xz";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub magic: String,
    pub version: u32,
    pub n: u64,
    pub m: u64,
    pub nnz: u64,
    pub density: Option<f64>,
    pub seed: Option<u64>,
    pub scaling: Option<f64>,
    pub joint_pattern: bool,
    pub value_distribution: String,
    pub checksum: String,
    pub has_b: bool,
    pub has_c: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl FileHeader {
    fn of(inst: &ProblemInstance) -> Self {
        let meta = inst.meta();
        FileHeader {
            magic: MAGIC.into(),
            version: FORMAT_VERSION,
            n: inst.n() as u64,
            m: inst.m() as u64,
            nnz: inst.pattern().len() as u64,
            density: meta.density,
            seed: meta.seed,
            scaling: meta.scaling,
            joint_pattern: inst.joint_pattern(),
            value_distribution: meta.value_distribution.clone(),
            checksum: CHECKSUM_ALGO.into(),
            has_b: inst.b().is_some(),
            has_c: inst.c().is_some(),
            lipschitz: inst.lipschitz(),
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |r: String| Err(Error::format("header", r));
        if self.magic != MAGIC {
            return bad(format!("bad magic {:?}", self.magic));
        }
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.checksum != CHECKSUM_ALGO {
            return bad(format!("unsupported checksum {:?}", self.checksum));
        }
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be positive".into());
        }
        let full = self.n.checked_mul(self.n + 1).map(|v| v / 2);
        if full.is_none_or(|f| self.nnz > f) {
            return bad(format!("nnz {} exceeds n(n+1)/2 for n = {}", self.nnz, self.n));
        }
        if self.lipschitz.is_some_and(|l| !(l.is_finite() && l > 0.0)) {
            return bad("lipschitz must be positive".into());
        }
        Ok(())
    }

    fn meta(&self) -> InstanceMeta {
        InstanceMeta {
            density: self.density,
            seed: self.seed,
            scaling: self.scaling,
            value_distribution: self.value_distribution.clone(),
        }
    }

    /// Byte length of the binary body, or `None` on overflow.
    fn body_len(&self) -> Option<u64> {
        let arrays = self.m.checked_add(2 + u64::from(self.has_b))?;
        let c = if self.has_c { self.m } else { 0 };
        arrays.checked_mul(self.nnz)?.checked_add(c)?.checked_mul(8)
    }
}

fn body_bytes(inst: &ProblemInstance) -> Vec<u8> {
    let p = inst.pattern();
    let mut out = Vec::new();
    for &r in p.rows() {
        out.extend_from_slice(&(r as u64).to_le_bytes());
    }
    for &c in p.cols() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    let mut put = |vals: &[f64]| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    inst.matrices().iter().for_each(|a| put(a.values()));
    if let Some(b) = inst.b() {
        put(b.values());
    }
    if let Some(c) = inst.c() {
        put(c);
    }
    out
}

pub fn write_binary(inst: &ProblemInstance) -> Vec<u8> {
    let mut out = serde_json::to_vec(&FileHeader::of(inst)).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&body_bytes(inst));
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, count: u64, section: &'static str) -> Result<&[u8]> {
        let len = count
            .checked_mul(8)
            .and_then(|l| usize::try_from(l).ok())
            .filter(|&l| l <= self.buf.len() - self.pos)
            .ok_or_else(|| Error::format(section, "section runs past the end of the file"))?;
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn indices(&mut self, count: u64, n: u64) -> Result<Vec<usize>> {
        self.take(count, "pattern")?
            .chunks_exact(8)
            .map(|c| {
                let v = u64::from_le_bytes(c.try_into().expect("8 bytes"));
                if v >= n {
                    return Err(Error::format("pattern", format!("index {v} out of range for n = {n}")));
                }
                Ok(v as usize)
            })
            .collect()
    }

    fn floats(&mut self, count: u64, section: &'static str) -> Result<Vec<f64>> {
        self.take(count, section)?
            .chunks_exact(8)
            .map(|c| {
                let v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::format(section, "non-finite value"))
                }
            })
            .collect()
    }
}

/// Parses a binary instance. The checksum is verified before anything else,
/// so a truncated or altered file fails with a `checksum` error.
pub fn read_binary(bytes: &[u8]) -> Result<ProblemInstance> {
    if bytes.len() < 8 {
        return Err(Error::format("checksum", "file shorter than the checksum"));
    }
    let (data, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let actual = CRC64.checksum(data);
    if stored != actual {
        return Err(Error::format(
            "checksum",
            format!("stored {stored:016x}, computed {actual:016x}"),
        ));
    }
    let nl = data
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("header", "missing header line"))?;
    let header: FileHeader = serde_json::from_slice(&data[..nl])
        .map_err(|e| Error::format("header", e.to_string()))?;
    header.check()?;
    let body = &data[nl + 1..];
    match header.body_len() {
        Some(len) if len == body.len() as u64 => {}
        Some(len) => {
            return Err(Error::format(
                "header",
                format!("header implies {len} body bytes, file has {}", body.len()),
            ))
        }
        None => return Err(Error::format("header", "dimensions overflow")),
    }
    let mut cur = Cursor { buf: body, pos: 0 };
    let rows = cur.indices(header.nnz, header.n)?;
    let cols = cur.indices(header.nnz, header.n)?;
    let values = (0..header.m)
        .map(|_| cur.floats(header.nnz, "values"))
        .collect::<Result<Vec<_>>>()?;
    let b = header.has_b.then(|| cur.floats(header.nnz, "b")).transpose()?;
    let c = header.has_c.then(|| cur.floats(header.m, "c")).transpose()?;
    assemble(&header, rows, cols, values, b, c)
}

fn assemble(
    header: &FileHeader,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Vec<f64>>,
    b: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
) -> Result<ProblemInstance> {
    let positions: Vec<(usize, usize)> = rows.into_iter().zip(cols).collect();
    let strictly_sorted = positions.windows(2).all(|w| w[0] < w[1]);
    if !strictly_sorted || positions.iter().any(|&(r, c)| r > c) {
        return Err(Error::format(
            "pattern",
            "positions must be upper-triangle and strictly increasing",
        ));
    }
    let pattern = Pattern::new(header.n as usize, positions)
        .map_err(|e| Error::format("pattern", e.to_string()))?;
    let inst = ProblemInstance::from_parts(
        Arc::new(pattern),
        values,
        b,
        c,
        header.joint_pattern,
        header.meta(),
    )
    .map_err(|e| Error::format("values", e.to_string()))?;
    if let Some(l) = header.lipschitz {
        inst.set_lipschitz(l);
    }
    Ok(inst)
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    header: FileHeader,
    /// CRC-64/XZ of the binary body.
    crc: u64,
    rows: Vec<u64>,
    cols: Vec<u64>,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
}

pub fn write_json(inst: &ProblemInstance) -> String {
    let p = inst.pattern();
    let file = JsonFile {
        header: FileHeader::of(inst),
        crc: CRC64.checksum(&body_bytes(inst)),
        rows: p.rows().iter().map(|&r| r as u64).collect(),
        cols: p.cols().iter().map(|&c| c as u64).collect(),
        values: inst.matrices().iter().map(|a| a.values().to_vec()).collect(),
        b: inst.b().map(|b| b.values().to_vec()),
        c: inst.c().map(<[f64]>::to_vec),
    };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

pub fn read_json(text: &str) -> Result<ProblemInstance> {
    let file: JsonFile =
        serde_json::from_str(text).map_err(|e| Error::format("header", e.to_string()))?;
    let h = &file.header;
    h.check()?;
    let nnz = h.nnz as usize;
    if file.rows.len() != nnz || file.cols.len() != nnz {
        return Err(Error::format("pattern", "index arrays do not match nnz"));
    }
    if file.values.len() as u64 != h.m || file.values.iter().any(|v| v.len() != nnz) {
        return Err(Error::format("values", "value arrays do not match m and nnz"));
    }
    if file.b.is_some() != h.has_b || file.b.as_ref().is_some_and(|b| b.len() != nnz) {
        return Err(Error::format("b", "B values do not match the header"));
    }
    if file.c.is_some() != h.has_c || file.c.as_ref().is_some_and(|c| c.len() as u64 != h.m) {
        return Err(Error::format("c", "c does not match the header"));
    }
    if let Some(&bad) = file.rows.iter().chain(&file.cols).find(|&&i| i >= h.n) {
        return Err(Error::format("pattern", format!("index {bad} out of range")));
    }
    let inst = assemble(
        h,
        file.rows.iter().map(|&r| r as usize).collect(),
        file.cols.iter().map(|&c| c as usize).collect(),
        file.values,
        file.b,
        file.c,
    )?;
    let actual = CRC64.checksum(&body_bytes(&inst));
    if actual != file.crc {
        return Err(Error::format(
            "checksum",
            format!("stored {:016x}, computed {actual:016x}", file.crc),
        ));
    }
    Ok(inst)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Writes the binary format, or the text variant for `.json` paths.
pub fn save(inst: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_json(path) {
        write_json(inst).into_bytes()
    } else {
        write_binary(inst)
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_json(path) {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::format("header", e.to_string()))?;
        read_json(text)
    } else {
        read_binary(&bytes)
    }
}
