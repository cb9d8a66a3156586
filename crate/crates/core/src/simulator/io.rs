//! Trajectory files.
//!
//! CSV: header `replica,particle,step,t,x,y`, one row per position.
//!
//! Binary: the magic bytes `KSW1`, then little-endian `u32 N`, `u32 steps`,
//! `u32 replicas`, `f64 dt`, then `f64` coordinate pairs in
//! (replica, step, particle) order.

use std::io::{Read, Write};

use super::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::geom::Vec2;

pub const MAGIC: &[u8; 4] = b"KSW1";

pub fn write_csv(ensemble: &TrajectoryEnsemble, mut w: impl Write) -> Result<()> {
    writeln!(w, "replica,particle,step,t,x,y")?;
    let n = ensemble.n_particles();
    let dt = ensemble.dt();
    for r in 0..ensemble.n_replicas() {
        for (k, x) in ensemble.path(r).iter().enumerate() {
            let (m, i) = (k / n, k % n);
            writeln!(w, "{r},{i},{m},{},{},{}", m as f64 * dt, x[0], x[1])?;
        }
    }
    Ok(())
}

pub fn write_binary(ensemble: &TrajectoryEnsemble, mut w: impl Write) -> Result<()> {
    let cfg = ensemble.config();
    let as_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Format(format!("{what} does not fit in u32")));
    w.write_all(MAGIC)?;
    w.write_all(&as_u32(cfg.n_particles, "particle count")?.to_le_bytes())?;
    w.write_all(&as_u32(cfg.n_steps, "step count")?.to_le_bytes())?;
    w.write_all(&as_u32(ensemble.n_replicas(), "replica count")?.to_le_bytes())?;
    w.write_all(&cfg.dt.to_le_bytes())?;
    for r in 0..ensemble.n_replicas() {
        for x in ensemble.path(r) {
            w.write_all(&x[0].to_le_bytes())?;
            w.write_all(&x[1].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Contents of a binary trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub n_particles: usize,
    pub n_steps: usize,
    pub dt: f64,
    /// One time-major vector per replica.
    pub paths: Vec<Vec<Vec2>>,
}

pub fn read_binary(mut r: impl Read) -> Result<TrajectoryData> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing KSW1 magic bytes".into()));
    }
    let mut u = [0u8; 4];
    let mut read_u32 = |r: &mut dyn Read| -> Result<usize> {
        r.read_exact(&mut u)?;
        Ok(u32::from_le_bytes(u) as usize)
    };
    let n_particles = read_u32(&mut r)?;
    let n_steps = read_u32(&mut r)?;
    let n_replicas = read_u32(&mut r)?;
    let mut f = [0u8; 8];
    r.read_exact(&mut f)?;
    let dt = f64::from_le_bytes(f);
    let per_replica = (n_steps + 1)
        .checked_mul(n_particles)
        .ok_or_else(|| Error::Format("trajectory dimensions overflow".into()))?;
    let mut paths = Vec::with_capacity(n_replicas);
    let mut buf = vec![0u8; per_replica * 16];
    for _ in 0..n_replicas {
        r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated trajectory data: {e}")))?;
        let path = buf
            .chunks_exact(16)
            .map(|c| {
                let x = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let y = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                [x, y]
            })
            .collect();
        paths.push(path);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after trajectory data".into()));
    }
    Ok(TrajectoryData { n_particles, n_steps, dt, paths })
}
