//! Binary and CSV dumps of block-Toeplitz operators.
//!
//! Binary layout, all integers `u64` little-endian:
//!
//! ```text
//! magic "HBOP0001" | kind | blocks | rows | cols
//! then per block: index | rows*cols f64 LE, row-major
//! ```
//!
//! CSV layout: header `kind,block,row,col,value`, one line per entry.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::potentials::{BlockOperator, OperatorKind};

pub const MAGIC: &[u8; 8] = b"HBOP0001";
pub const CSV_HEADER: [&str; 5] = ["kind", "block", "row", "col", "value"];

const HEADER_LEN: usize = 8 + 4 * 8;

fn dump_err(msg: impl Into<String>) -> Error {
    Error::Dump(msg.into())
}

pub fn encode_binary(op: &BlockOperator) -> Vec<u8> {
    let (rows, cols) = (op.targets(), op.sources());
    let mut out = Vec::with_capacity(HEADER_LEN + op.lags() * (8 + 8 * rows * cols));
    out.extend_from_slice(MAGIC);
    for v in [op.kind().code() as u64, op.lags() as u64, rows as u64, cols as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (index, block) in op.blocks().iter().enumerate() {
        out.extend_from_slice(&(index as u64).to_le_bytes());
        for i in 0..rows {
            for j in 0..cols {
                out.extend_from_slice(&block[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("eight bytes"))
}

fn dim(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| dump_err(format!("{what} {v} does not fit in memory")))
}

/// Decodes a binary dump; sizes are checked against the buffer before any allocation.
pub fn decode_binary(bytes: &[u8]) -> Result<BlockOperator> {
    if bytes.len() < HEADER_LEN {
        return Err(dump_err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(dump_err("bad magic"));
    }
    let code = read_u64(bytes, 8);
    let kind = u8::try_from(code)
        .ok()
        .and_then(OperatorKind::from_code)
        .ok_or_else(|| dump_err(format!("unknown operator kind {code}")))?;
    let blocks = dim(read_u64(bytes, 16), "block count")?;
    let rows = dim(read_u64(bytes, 24), "row count")?;
    let cols = dim(read_u64(bytes, 32), "column count")?;
    if blocks == 0 {
        return Err(dump_err("dump holds no blocks"));
    }
    let entries = rows.checked_mul(cols).ok_or_else(|| dump_err("block size overflows"))?;
    let block_bytes = entries
        .checked_mul(8)
        .and_then(|b| b.checked_add(8))
        .ok_or_else(|| dump_err("block size overflows"))?;
    let expected = blocks
        .checked_mul(block_bytes)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| dump_err("dump size overflows"))?;
    if bytes.len() != expected {
        return Err(dump_err(format!(
            "expected {expected} bytes for {blocks} blocks of {rows}x{cols}, found {}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(blocks);
    for k in 0..blocks {
        let base = HEADER_LEN + k * block_bytes;
        let index = read_u64(bytes, base);
        if index != k as u64 {
            return Err(dump_err(format!("block {k} carries index {index}")));
        }
        let data = &bytes[base + 8..base + block_bytes];
        let values = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
        out.push(DMatrix::from_row_iterator(rows, cols, values));
    }
    BlockOperator::new(kind, out)
}

fn kind_name(kind: OperatorKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn kind_from_name(name: &str) -> Option<OperatorKind> {
    serde_json::from_value(serde_json::Value::String(name.to_owned())).ok()
}

pub fn write_csv<W: Write>(op: &BlockOperator, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| dump_err(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let kind = kind_name(op.kind());
    for (index, block) in op.blocks().iter().enumerate() {
        for i in 0..op.targets() {
            for j in 0..op.sources() {
                w.write_record([
                    kind.clone(),
                    index.to_string(),
                    i.to_string(),
                    j.to_string(),
                    block[(i, j)].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn encode_csv(op: &BlockOperator) -> String {
    let mut buf = Vec::new();
    write_csv(op, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ASCII")
}

/// Upper bound on entries accepted by [`decode_csv`].
pub const MAX_CSV_ENTRIES: usize = 1 << 26;

/// Decodes a CSV dump. Every `(block, row, col)` cell must appear exactly once.
pub fn decode_csv(text: &str) -> Result<BlockOperator> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| dump_err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(dump_err("unexpected CSV header"));
    }
    let mut kind = None;
    let mut cells = Vec::new();
    let mut shape = (0usize, 0usize, 0usize);
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| dump_err(e.to_string()))?;
        let at = |msg: &str| dump_err(format!("record {}: {msg}", line + 1));
        if record.len() != 5 {
            return Err(at("expected 5 fields"));
        }
        let k = kind_from_name(&record[0]).ok_or_else(|| at("unknown operator kind"))?;
        if *kind.get_or_insert(k) != k {
            return Err(at("mixed operator kinds"));
        }
        let index = |i: usize| record[i].parse::<usize>().map_err(|_| at("bad index"));
        let (b, i, j) = (index(1)?, index(2)?, index(3)?);
        let value: f64 = record[4].parse().map_err(|_| at("bad value"))?;
        if cells.len() >= MAX_CSV_ENTRIES {
            return Err(at("too many entries"));
        }
        shape = (shape.0.max(b + 1), shape.1.max(i + 1), shape.2.max(j + 1));
        cells.push((b, i, j, value));
    }
    let kind = kind.ok_or_else(|| dump_err("dump holds no entries"))?;
    let (blocks, rows, cols) = shape;
    let total = blocks
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| dump_err("dump size overflows"))?;
    if total != cells.len() {
        return Err(dump_err(format!(
            "{} entries do not fill {blocks} blocks of {rows}x{cols}",
            cells.len()
        )));
    }
    let mut out = vec![DMatrix::zeros(rows, cols); blocks];
    let mut seen = vec![false; total];
    for (b, i, j, v) in cells {
        let flat = (b * rows + i) * cols + j;
        if std::mem::replace(&mut seen[flat], true) {
            return Err(dump_err(format!("duplicate entry ({b}, {i}, {j})")));
        }
        out[b][(i, j)] = v;
    }
    BlockOperator::new(kind, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BlockOperator {
        let blocks = (0..3)
            .map(|k| DMatrix::from_fn(2, 4, |i, j| k as f64 + 0.1 * i as f64 - 1e-300 * j as f64 + 1.0 / 3.0))
            .collect();
        BlockOperator::new(OperatorKind::CrossNormalDerivative, blocks).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let op = sample();
        let bytes = encode_binary(&op);
        assert_eq!(bytes.len(), HEADER_LEN + 3 * (8 + 8 * 8));
        assert_eq!(decode_binary(&bytes).unwrap(), op);
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let op = sample();
        let text = encode_csv(&op);
        assert!(text.starts_with("kind,block,row,col,value\ncross-normal-derivative,0,0,0,"));
        assert_eq!(decode_csv(&text).unwrap(), op);
    }

    #[test]
    fn binary_rejects_lies_about_size() {
        let mut bytes = encode_binary(&sample());
        bytes[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_binary(&bytes).is_err());
        let mut bytes = encode_binary(&sample());
        bytes.pop();
        assert!(decode_binary(&bytes).is_err());
        let mut bytes = encode_binary(&sample());
        bytes[0] = b'X';
        assert!(decode_binary(&bytes).is_err());
        assert!(decode_binary(&[]).is_err());
    }

    #[test]
    fn binary_rejects_out_of_order_blocks() {
        let mut bytes = encode_binary(&sample());
        bytes[HEADER_LEN] = 7;
        assert!(decode_binary(&bytes).is_err());
    }

    #[test]
    fn csv_rejects_missing_and_duplicate_cells() {
        let text = encode_csv(&sample());
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        assert!(decode_csv(&lines.join("\n")).is_err());
        let dup = lines[1];
        lines.push(dup);
        assert!(decode_csv(&lines.join("\n")).is_err());
    }
}
