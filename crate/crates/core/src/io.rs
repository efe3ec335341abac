//! Trajectory and state files.
//!
//! CSV dumps have the header `t,k,x_k` and one row per snapshot coordinate,
//! `k = 0..=n+1` (pinned origin and frozen boundary included).
//!
//! Binary dumps (version 1), all little-endian:
//!
//! ```text
//! magic    8 bytes  "PLMRTRAJ"
//! version  u32      1
//! n        u64
//! dt       f64
//! count    u64      number of snapshots
//! then count records of: t (f64), right_boundary (f64), x_1..x_n (f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::polymer::PolymerState;

pub const MAGIC: &[u8; 8] = b"PLMRTRAJ";
pub const VERSION: u32 = 1;

/// A dumped trajectory as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<PolymerState<f64>>,
}

pub fn write_csv<W: Write>(mut w: W, times: &[f64], states: &[PolymerState<f64>]) -> Result<()> {
    writeln!(w, "t,k,x_k")?;
    for (t, s) in times.iter().zip(states) {
        for k in 0..=s.n() + 1 {
            writeln!(w, "{t},{k},{}", s.at(k))?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(mut w: W, dt: f64, times: &[f64], states: &[PolymerState<f64>]) -> Result<()> {
    let n = states.first().map_or(0, PolymerState::n);
    if let Some(bad) = states.iter().find(|s| s.n() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: bad.n() });
    }
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&dt.to_le_bytes())?;
    w.write_all(&(states.len() as u64).to_le_bytes())?;
    for (t, s) in times.iter().zip(states) {
        w.write_all(&t.to_le_bytes())?;
        w.write_all(&s.right_boundary().to_le_bytes())?;
        for c in s.coords() {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Snapshots> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_u64(&mut r)? as usize;
    let dt = read_f64(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let mut times = Vec::with_capacity(count.min(1 << 20));
    let mut states = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        times.push(read_f64(&mut r)?);
        let right = read_f64(&mut r)?;
        let coords = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        states.push(PolymerState::new(coords, right)?);
    }
    Ok(Snapshots { dt, times, states })
}

pub fn save_csv(path: &Path, times: &[f64], states: &[PolymerState<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, times, states)?;
    w.flush()?;
    Ok(())
}

pub fn save_binary(path: &Path, dt: f64, times: &[f64], states: &[PolymerState<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(&mut w, dt, times, states)?;
    w.flush()?;
    Ok(())
}

pub fn load_binary(path: &Path) -> Result<Snapshots> {
    read_binary(BufReader::new(File::open(path)?))
}

pub fn save_state(path: &Path, state: &PolymerState<f64>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(state)?)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<PolymerState<f64>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<f64>, Vec<PolymerState<f64>>) {
        let a = PolymerState::new(vec![0.1, -2.5, 1.0 / 3.0], 4.0).unwrap();
        let b = PolymerState::new(vec![0.2, -2.0, 1e-300], 4.0).unwrap();
        (vec![0.0, 0.5], vec![a, b])
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let (t, s) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, 0.01, &t, &s).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 8 + 2 * 5 * 8);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, Snapshots { dt: 0.01, times: t, states: s });
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(matches!(read_binary(&b"NOTMAGIC"[..]), Err(Error::Format(_))));
        let (t, s) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, 0.01, &t, &s).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_binary(buf.as_slice()), Err(Error::Format(_))));
        buf[8] = 2;
        assert!(matches!(read_binary(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let (t, s) = sample();
        let mut buf = Vec::new();
        write_csv(&mut buf, &t[..1], &s[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,k,x_k");
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[2], "0,1,0.1");
        assert_eq!(lines[5], "0,4,4");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn state_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        let (_, s) = sample();
        save_state(&p, &s[0]).unwrap();
        assert_eq!(load_state(&p).unwrap(), s[0]);
    }
}
