//! CSV and binary encodings of [`PathPair`].
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! b"EFPP" | version u32 = 1 | meta_len u32 | meta JSON (CouplingKind)
//! t0 f64 | dt f64 | n_steps u64 | x [f64; n+1] | x_prime [f64; n+1] | together [u8; n+1]
//! ```

use super::{CouplingKind, PathPair, TimeGrid};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"EFPP";
const VERSION: u32 = 1;

impl PathPair {
    /// Columns `t,x,x_prime,together` with `together` as 0/1.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(48 * self.x.len());
        s.push_str("t,x,x_prime,together\n");
        for i in 0..self.x.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.grid.time(i),
                self.x[i],
                self.x_prime[i],
                u8::from(self.together[i])
            );
        }
        s
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.kind)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&self.grid.t0.to_le_bytes())?;
        w.write_all(&self.grid.dt.to_le_bytes())?;
        w.write_all(&(self.grid.n_steps as u64).to_le_bytes())?;
        for v in self.x.iter().chain(&self.x_prime) {
            w.write_all(&v.to_le_bytes())?;
        }
        let flags: Vec<u8> = self.together.iter().map(|&t| u8::from(t)).collect();
        w.write_all(&flags)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Decode("bad magic for path pair".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Decode(format!("unsupported path pair version {version}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let kind: CouplingKind = serde_json::from_slice(&meta)?;
        let t0 = read_f64(&mut r)?;
        let dt = read_f64(&mut r)?;
        let n_steps = read_u64(&mut r)? as usize;
        let grid = TimeGrid::new(t0, dt, n_steps).map_err(|e| Error::Decode(e.to_string()))?;
        let n = grid.len();
        let x = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let x_prime = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut flags = vec![0u8; n];
        r.read_exact(&mut flags)?;
        let pair = PathPair { grid, x, x_prime, together: flags.into_iter().map(|b| b != 0).collect(), kind };
        pair.validate().map_err(|e| Error::Decode(e.to_string()))?;
        Ok(pair)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use crate::paths::{sample_coalescing_pair, PathPair, TimeGrid};

    #[test]
    fn binary_round_trip() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let pair = sample_coalescing_pair(0.0, 0.1, &g, 4).unwrap();
        let mut buf = Vec::new();
        pair.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"EFPP");
        let back = PathPair::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, pair);
        buf[0] = b'X';
        assert!(PathPair::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let pair = sample_coalescing_pair(0.0, 0.0, &g, 4).unwrap();
        let csv = pair.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,x_prime,together");
        assert_eq!(lines.len(), 6);
        assert!(lines[1].ends_with(",1"));
    }
}
