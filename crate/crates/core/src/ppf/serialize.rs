//! Binary model file, little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "PPFM"
//! version      u32      1
//! object_id    u32
//! dist_step    f64      meters
//! angle_step   f64      radians
//! n_angle      u32
//! n_points     u32
//! diameter     f64      meters
//! points       n_points x (x, y, z, nx, ny, nz) f64
//! n_keys       u64
//! n_entries    u64
//! per key:     key u64, count u32, count x (ref_index u32, alpha f64)
//! ```
//!
//! Scalars are widened to `f64` on write, so `f32` and `f64` models both
//! round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::feature::{PpfKey, Quantizer};
use super::model::{ModelEntry, PpfModel, PpfTable};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{UnitVec3, Vec3};
use crate::scalar::Real;

pub const MODEL_MAGIC: [u8; 4] = *b"PPFM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<S: Real>(path: &Path, model: &PpfModel<S>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode(&mut w, model).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model<S: Real>(path: &Path) -> Result<PpfModel<S>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::ModelFormat(format!("{}: truncated model file", path.display()))
        }
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn f(v: impl Real) -> [u8; 8] {
    v.as_f64().to_le_bytes()
}

pub(crate) fn encode<S: Real>(w: &mut impl Write, m: &PpfModel<S>) -> std::io::Result<()> {
    w.write_all(&MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&m.object_id.to_le_bytes())?;
    w.write_all(&f(m.quantizer.dist_step))?;
    w.write_all(&f(m.quantizer.angle_step))?;
    w.write_all(&m.quantizer.n_angle.to_le_bytes())?;
    w.write_all(&(m.model_cloud.len() as u32).to_le_bytes())?;
    w.write_all(&f(m.diameter))?;
    let normals = m.model_cloud.normals().expect("model clouds carry normals");
    for (p, n) in m.model_cloud.points().iter().zip(normals) {
        for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
            w.write_all(&f(v))?;
        }
    }
    w.write_all(&(m.table.num_keys() as u64).to_le_bytes())?;
    w.write_all(&(m.table.num_entries() as u64).to_le_bytes())?;
    for (key, entries) in m.table.iter() {
        w.write_all(&key.0.to_le_bytes())?;
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for e in entries {
            w.write_all(&e.ref_index.to_le_bytes())?;
            w.write_all(&f(e.alpha))?;
        }
    }
    Ok(())
}

struct Reader<'a, R>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| Error::io("", e))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn real<S: Real>(&mut self) -> Result<S> {
        Ok(S::lit(f64::from_le_bytes(self.bytes()?)))
    }
}

pub(crate) fn decode<S: Real>(r: &mut impl Read) -> Result<PpfModel<S>> {
    let mut r = Reader(r);
    if r.bytes::<4>()? != MODEL_MAGIC {
        return Err(Error::ModelFormat("bad magic; not a PPF model file".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let object_id = r.u32()?;
    let dist_step: S = r.real()?;
    let angle_step: S = r.real()?;
    let n_angle = r.u32()?;
    let n_points = r.u32()? as usize;
    let diameter: S = r.real()?;
    let mut quantizer = Quantizer::new(dist_step, n_angle)
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
    quantizer.angle_step = angle_step;

    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let p = Vec3::new(r.real()?, r.real()?, r.real()?);
        let n = Vec3::new(r.real()?, r.real()?, r.real()?);
        points.push(p);
        normals.push(UnitVec3::new_unchecked(n));
    }
    let model_cloud = PointCloud::new(points)
        .and_then(|c| c.with_normals(normals))
        .map_err(|e| Error::ModelFormat(e.to_string()))?;

    let n_keys = r.u64()? as usize;
    let n_entries = r.u64()? as usize;
    let mut keys = Vec::with_capacity(n_keys);
    let mut offsets = Vec::with_capacity(n_keys + 1);
    let mut entries = Vec::with_capacity(n_entries);
    for _ in 0..n_keys {
        let key = PpfKey(r.u64()?);
        if keys.last().is_some_and(|k: &PpfKey| *k >= key) {
            return Err(Error::ModelFormat("table keys not strictly ascending".into()));
        }
        keys.push(key);
        offsets.push(entries.len() as u32);
        let count = r.u32()?;
        for _ in 0..count {
            let ref_index = r.u32()?;
            if ref_index as usize >= n_points {
                return Err(Error::ModelFormat(format!(
                    "entry references point {ref_index} of {n_points}"
                )));
            }
            entries.push(ModelEntry {
                ref_index,
                alpha: r.real()?,
            });
        }
    }
    offsets.push(entries.len() as u32);
    if entries.len() != n_entries {
        return Err(Error::ModelFormat(format!(
            "header announces {n_entries} entries, found {}",
            entries.len()
        )));
    }
    Ok(PpfModel {
        object_id,
        quantizer,
        model_cloud,
        diameter,
        table: PpfTable::from_parts(keys, offsets, entries),
    })
}
