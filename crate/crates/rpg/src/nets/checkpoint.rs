//! Flat binary container of named arrays.
//!
//! Layout: the 4-byte magic `RPG1`, then repeated records of
//! (name length: u32 LE, name bytes: UTF-8, rank: u32 LE, dims: rank x
//! u64 LE, payload: product(dims) x f64 LE) until end of file. Checkpoints
//! and replay-buffer dumps both use this container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::RealArray;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RPG1";

const MAX_NAME: usize = 4096;
const MAX_ELEMENTS: u64 = 1 << 30;

pub fn write_container<P: AsRef<Path>>(path: P, entries: &[(String, &RealArray)]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    for (name, arr) in entries {
        let bytes = name.as_bytes();
        if bytes.len() > MAX_NAME {
            return Err(Error::format("container", format!("name too long: {} bytes", bytes.len())));
        }
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(arr.rows() as u64).to_le_bytes())?;
        w.write_all(&(arr.cols() as u64).to_le_bytes())?;
        for v in arr.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_container<P: AsRef<Path>>(path: P) -> Result<Vec<(String, RealArray)>> {
    let file = File::open(&path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("container", "file too short for magic"))?;
    if &magic != MAGIC {
        return Err(Error::format("container", format!("bad magic {magic:?}")));
    }
    let mut entries = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        if name_len > MAX_NAME {
            return Err(Error::format("container", format!("name length {name_len} too large")));
        }
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|_| Error::format("container", "truncated name"))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format("container", "name is not UTF-8"))?;
        let mut rank_buf = [0u8; 4];
        r.read_exact(&mut rank_buf)
            .map_err(|_| Error::format("container", "truncated rank"))?;
        let rank = u32::from_le_bytes(rank_buf);
        if rank == 0 || rank > 8 {
            return Err(Error::format("container", format!("rank {rank} out of range")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        let mut count: u64 = 1;
        for _ in 0..rank {
            let mut d = [0u8; 8];
            r.read_exact(&mut d).map_err(|_| Error::format("container", "truncated dims"))?;
            let dim = u64::from_le_bytes(d);
            if dim == 0 {
                return Err(Error::format("container", "zero dimension"));
            }
            count = count.saturating_mul(dim);
            dims.push(dim);
        }
        if count > MAX_ELEMENTS {
            return Err(Error::format("container", format!("array too large: {count} elements")));
        }
        let mut data = Vec::with_capacity(count as usize);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)
                .map_err(|_| Error::format("container", "truncated payload"))?;
            data.push(f64::from_le_bytes(buf));
        }
        // Collapse to 2-D: trailing dim is the column count.
        let (rows, cols) = match dims.len() {
            1 => (1, dims[0] as usize),
            _ => {
                let cols = *dims.last().unwrap() as usize;
                ((count / *dims.last().unwrap()) as usize, cols)
            }
        };
        let arr = RealArray::from_vec(rows, cols, data)
            .map_err(|e| Error::format("container", format!("record {name:?}: {e}")))?;
        entries.push((name, arr));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("arrays.rpg");
        let a = RealArray::from_vec(2, 3, vec![1.0, -2.5, 3.125, 0.1, 0.2, 0.3]).unwrap();
        let b = RealArray::scalar(42.0).unwrap();
        write_container(&path, &[("net/w".to_string(), &a), ("meta/t".to_string(), &b)]).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "net/w");
        assert_eq!(back[0].1.shape(), (2, 3));
        for (x, y) in back[0].1.data().iter().zip(a.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back[1].0, "meta/t");
        assert_eq!(back[1].1.data(), &[42.0]);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.rpg");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(read_container(&path).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.rpg");
        let a = RealArray::row(&[1.0, 2.0, 3.0]).unwrap();
        write_container(&path, &[("w".to_string(), &a)]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_container(&path).is_err());
    }
}
