//! On-disk cache of infinite-chain ground states.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! magic "BNMPS\0\0\0" | schema u32 | key block | payload | sha256 of everything before it
//! key block:  kind u8, J f64, h f64, delta f64, u u32, chi u32, tol f64,
//!             n_steps u32, dt f64 × n_steps, max_steps u64, cutoff f64, seed u64
//! payload:    block u32, n_tensors u32, energy f64, then per tensor
//!             d u32, rows u32, cols u32, (re f64, im f64) row-major per physical index,
//!             then per bond len u32, f64 × len
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use sha2::{Digest, Sha256};

use super::itebd::{ground_state_umps_with, ItebdOptions, UniformMps};
use super::{ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scalar::{cplx, lit, to_f64, Real};

const MAGIC: &[u8; 8] = b"BNMPS\0\0\0";

/// Bumped whenever the solver or the layout changes meaningfully.
pub const SCHEMA_VERSION: u32 = 3;

#[derive(Clone, Debug)]
pub struct GroundStateCache {
    dir: PathBuf,
}

fn key_bytes(spec: &ModelSpec, opts: &ItebdOptions) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&SCHEMA_VERSION.to_le_bytes());
    out.push(spec.kind.code());
    for v in [spec.j, spec.h, spec.delta] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(spec.u as u32).to_le_bytes());
    out.extend_from_slice(&(opts.chi as u32).to_le_bytes());
    out.extend_from_slice(&opts.tol.to_le_bytes());
    out.extend_from_slice(&(opts.schedule.len() as u32).to_le_bytes());
    for dt in &opts.schedule {
        out.extend_from_slice(&dt.to_le_bytes());
    }
    out.extend_from_slice(&(opts.max_steps as u64).to_le_bytes());
    out.extend_from_slice(&opts.svd_cutoff.to_le_bytes());
    out.extend_from_slice(&opts.seed.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl GroundStateCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex digest identifying a (model, solver) pair.
    pub fn key(spec: &ModelSpec, opts: &ItebdOptions) -> String {
        let digest = Sha256::digest(key_bytes(spec, opts));
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    pub fn path(&self, spec: &ModelSpec, opts: &ItebdOptions) -> PathBuf {
        self.dir.join(format!("{}-{}.mps", spec.kind.name().to_ascii_lowercase(), Self::key(spec, opts)))
    }

    pub fn store<T: Real>(&self, spec: &ModelSpec, opts: &ItebdOptions, mps: &UniformMps<T>) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let mut buf = key_bytes(spec, opts);
        buf.extend_from_slice(&(mps.block as u32).to_le_bytes());
        buf.extend_from_slice(&(mps.n_tensors() as u32).to_le_bytes());
        buf.extend_from_slice(&to_f64(mps.energy_per_site).to_le_bytes());
        for t in &mps.tensors {
            let (rows, cols) = t[0].shape();
            for v in [t.len(), rows, cols] {
                buf.extend_from_slice(&(v as u32).to_le_bytes());
            }
            for m in t {
                for i in 0..rows {
                    for j in 0..cols {
                        buf.extend_from_slice(&to_f64(m[(i, j)].re).to_le_bytes());
                        buf.extend_from_slice(&to_f64(m[(i, j)].im).to_le_bytes());
                    }
                }
            }
        }
        for s in &mps.schmidt {
            buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
            for &x in s {
                buf.extend_from_slice(&to_f64(x).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);

        let path = self.path(spec, opts);
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// `Ok(None)` when no entry exists; `Err(Error::Cache)` when an entry
    /// exists but fails its integrity check or does not match the key.
    pub fn load<T: Real>(&self, spec: &ModelSpec, opts: &ItebdOptions) -> Result<Option<UniformMps<T>>> {
        let path = self.path(spec, opts);
        let buf = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        decode(&buf, spec, opts).map(Some)
    }

    /// Loads the state or computes and stores it. The flag is `true` on a
    /// cache hit. Corrupt entries are reported and recomputed.
    pub fn get_or_compute<T: Real>(&self, spec: &ModelSpec, opts: &ItebdOptions) -> Result<(UniformMps<T>, bool)> {
        match self.load(spec, opts) {
            Ok(Some(mps)) => {
                info!("cache hit for {spec} at {}", self.path(spec, opts).display());
                return Ok((mps, true));
            }
            Ok(None) => {}
            Err(Error::Cache(msg)) => {
                warn!("discarding cache entry {}: {msg}; recomputing", self.path(spec, opts).display());
            }
            Err(e) => return Err(e),
        }
        let mps = ground_state_umps_with::<T>(spec, opts)?;
        self.store(spec, opts, &mps)?;
        Ok((mps, false))
    }
}

fn decode<T: Real>(buf: &[u8], spec: &ModelSpec, opts: &ItebdOptions) -> Result<UniformMps<T>> {
    if buf.len() < MAGIC.len() + 4 + 32 || &buf[..MAGIC.len()] != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let (body, sum) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Cache("checksum mismatch".into()));
    }
    let key = key_bytes(spec, opts);
    if body.len() < key.len() || body[..key.len()] != key[..] {
        let schema = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if schema != SCHEMA_VERSION {
            return Err(Error::Cache(format!("schema {schema}, expected {SCHEMA_VERSION}")));
        }
        if ModelKind::from_code(body[12]).is_none() {
            return Err(Error::Cache("unknown model kind".into()));
        }
        return Err(Error::Cache("key fields do not match the request".into()));
    }
    let mut r = Reader { buf: body, pos: key.len() };
    let block = r.u32()? as usize;
    let n_tensors = r.u32()? as usize;
    let energy = r.f64()?;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let d = r.u32()? as usize;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut t = Vec::with_capacity(d);
        for _ in 0..d {
            let mut m = CMat::<T>::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    let re = r.f64()?;
                    let im = r.f64()?;
                    m[(i, j)] = cplx(lit(re), lit(im));
                }
            }
            t.push(m);
        }
        tensors.push(t);
    }
    let mut schmidt = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let len = r.u32()? as usize;
        let mut s = Vec::with_capacity(len);
        for _ in 0..len {
            s.push(lit(r.f64()?));
        }
        schmidt.push(s);
    }
    if r.pos != body.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    Ok(UniformMps { tensors, schmidt, block, chi: opts.chi, energy_per_site: lit(energy) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> ItebdOptions {
        ItebdOptions { chi: 4, ..ItebdOptions::default() }
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GroundStateCache::new(dir.path());
        let spec = ModelSpec::cluster_ising(0.0, 0.0);
        let (mps, hit) = cache.get_or_compute::<f64>(&spec, &opts()).unwrap();
        assert!(!hit);
        let (again, hit) = cache.get_or_compute::<f64>(&spec, &opts()).unwrap();
        assert!(hit);
        assert_eq!(mps.energy_per_site, again.energy_per_site);
        assert_eq!(mps.tensors, again.tensors);
        assert_eq!(mps.schmidt, again.schmidt);

        let path = cache.path(&spec, &opts());
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(cache.load::<f64>(&spec, &opts()), Err(Error::Cache(_))));
        let (fixed, hit) = cache.get_or_compute::<f64>(&spec, &opts()).unwrap();
        assert!(!hit);
        assert_eq!(fixed.tensors, mps.tensors);
    }

    #[test]
    fn key_depends_on_every_field() {
        let spec = ModelSpec::cluster_ising(0.3, 0.5);
        let base = GroundStateCache::key(&spec, &opts());
        assert_ne!(base, GroundStateCache::key(&spec.with_h(0.51), &opts()));
        let mut o = opts();
        o.tol = 1e-9;
        assert_ne!(base, GroundStateCache::key(&spec, &o));
        let mut o = opts();
        o.schedule.push(1e-4);
        assert_ne!(base, GroundStateCache::key(&spec, &o));
    }
}
