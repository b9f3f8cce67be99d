//! Precomputed embedding tables.
//!
//! Layout: `TGLEMB\0\0`, u32 version, u32 dim, then records of a 20-byte
//! sha1 of the text followed by `dim` little-endian f32. Records are written
//! in key order so equal tables give equal files.

use std::path::Path;

use tgl_core::embed::{MissingKey, TableEmbedder};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"TGLEMB\0\0";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_table(table: &TableEmbedder) -> Vec<u8> {
    use tgl_core::embed::TextEmbedder;
    let dim = table.dim();
    let mut out = Vec::with_capacity(HEADER + table.len() * (20 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (key, vector) in table.entries() {
        out.extend_from_slice(key);
        for v in vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_table(bytes: &[u8], missing: MissingKey, path: &Path) -> Result<TableEmbedder> {
    let bad = |msg: String| Error::Parse { path: path.to_path_buf(), line: 0, msg };
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("not an embedding table (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("embedding table version {version}, expected {VERSION}")));
    }
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(bad("embedding table has dim 0".into()));
    }
    let record = 20 + 4 * dim;
    let body = &bytes[HEADER..];
    if body.len() % record != 0 {
        return Err(bad(format!("truncated record: {} trailing bytes", body.len() % record)));
    }
    let mut table = TableEmbedder::new(dim, missing);
    for chunk in body.chunks_exact(record) {
        let key: [u8; 20] = chunk[..20].try_into().unwrap();
        let vector = chunk[20..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        table.insert_key(key, vector)?;
    }
    Ok(table)
}

pub fn write_table(path: &Path, table: &TableEmbedder) -> Result<()> {
    std::fs::write(path, encode_table(table)).map_err(io_err(path))
}

pub fn read_table(path: &Path, missing: MissingKey) -> Result<TableEmbedder> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_table(&bytes, missing, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tgl_core::embed::TextEmbedder;

    #[test]
    fn table_round_trips() {
        let mut t = TableEmbedder::new(4, MissingKey::Error);
        t.insert_text("app:vscode", vec![1.0, -2.0, 0.5, 0.0]).unwrap();
        t.insert_text("file_ext:py", vec![0.25, 0.0, 0.0, 3.0]).unwrap();
        let bytes = encode_table(&t);
        assert_eq!(bytes.len(), 16 + 2 * (20 + 16));
        let back = decode_table(&bytes, MissingKey::Error, Path::new("t")).unwrap();
        assert_eq!(encode_table(&back), bytes);
        let mut out = [0.0f32; 4];
        back.embed_into("app:vscode", &mut out).unwrap();
        assert_eq!(out, [1.0, -2.0, 0.5, 0.0]);
        assert!(back.embed_into("app:zoom", &mut out).is_err());
    }

    #[test]
    fn truncated_table_is_rejected() {
        let mut t = TableEmbedder::new(2, MissingKey::Error);
        t.insert_text("x", vec![1.0, 2.0]).unwrap();
        let bytes = encode_table(&t);
        assert!(decode_table(&bytes[..bytes.len() - 1], MissingKey::Error, Path::new("t")).is_err());
        assert!(decode_table(b"NOTMAGIC\x01\0\0\0\x02\0\0\0", MissingKey::Error, Path::new("t")).is_err());
    }
}
