//! Binary checkpoints for teacher trajectories (`FTDT`) and synthetic sets
//! (`FTDS`).
//!
//! Both formats are little-endian, start with a 4-byte magic and a `u32`
//! version, and end with a CRC-32 of every preceding byte.
//!
//! ```text
//! FTDT v1: magic | version u32 | config_hash u64 | arch | expert_epochs u32
//!          | snapshots u32 | params u64 | snapshots × params f64
//!          | losses u32 | losses × f64 | degenerate_steps u64 | crc u32
//! FTDS v1: magic | version u32 | config_hash u64 | teacher_hash u64
//!          | ipc u32 | classes u32 | channels u32 | height u32 | width u32
//!          | step_size f64 | ema_decay f64 | rows u32 | rows × label u32
//!          | rows·dim × pixel f64 | rows·dim × ema pixel f64 | crc u32
//! arch:    family u8 | norm u8 | activation u8 | pooling u8 | width u32
//!          | depth u32 | channels u32 | height u32 | width u32 | classes u32
//! ```

use std::path::Path;

use ftd_core::autograd::ParamVector;
use ftd_core::buffer::TeacherTrajectory;
use ftd_core::data::SyntheticDataset;
use ftd_core::models::{Activation, ArchSpec, Family, InputShape, Network, Norm, Pooling};

use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 4] = b"FTDT";
pub const SYNTHETIC_MAGIC: &[u8; 4] = b"FTDS";
pub const TRAJECTORY_VERSION: u32 = 1;
pub const SYNTHETIC_VERSION: u32 = 1;

/// A synthetic set plus the hashes tying it to the run that produced it and
/// to the teacher trajectories it was distilled from.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCheckpoint {
    pub syn: SyntheticDataset,
    pub config_hash: u64,
    pub teacher_hash: u64,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, values: &[f64]) {
        for v in values {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.0.extend_from_slice(&crc.to_le_bytes());
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn end(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// Checks magic, checksum and version; returns the body after the version.
fn open<'a>(bytes: &'a [u8], magic: &[u8; 4], kind: &'static str, version: u32) -> Result<Reader<'a>> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::Format(format!("not an {kind} file: bad magic")));
    }
    if bytes.len() < 12 {
        return Err(Error::Format(format!("{kind} file too short")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let found = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if found != version {
        return Err(Error::Version { kind, found, expected: version });
    }
    Ok(Reader { buf: body, pos: 8 })
}

fn code<T: PartialEq + Copy>(all: &[T], v: T) -> u8 {
    all.iter().position(|&x| x == v).unwrap() as u8
}

fn decode<T: Copy>(all: &[T], c: u8, what: &str) -> Result<T> {
    all.get(c as usize).copied().ok_or_else(|| Error::Format(format!("unknown {what} code {c}")))
}

fn write_arch(w: &mut Writer, a: &ArchSpec) -> Result<()> {
    w.u8(code(Family::ALL, a.family));
    w.u8(code(Norm::ALL, a.norm));
    w.u8(code(Activation::ALL, a.activation));
    w.u8(code(Pooling::ALL, a.pooling));
    for v in [a.width, a.depth, a.input.channels, a.input.height, a.input.width, a.classes] {
        w.u32(v)?;
    }
    Ok(())
}

fn read_arch(r: &mut Reader<'_>) -> Result<ArchSpec> {
    let family = decode(Family::ALL, r.u8()?, "family")?;
    let norm = decode(Norm::ALL, r.u8()?, "norm")?;
    let activation = decode(Activation::ALL, r.u8()?, "activation")?;
    let pooling = decode(Pooling::ALL, r.u8()?, "pooling")?;
    let (width, depth) = (r.u32()?, r.u32()?);
    let input = InputShape::new(r.u32()?, r.u32()?, r.u32()?);
    let classes = r.u32()?;
    Ok(ArchSpec { family, width, depth, norm, activation, pooling, input, classes })
}

pub fn encode_trajectory(traj: &TeacherTrajectory) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.0.extend_from_slice(TRAJECTORY_MAGIC);
    w.u32(TRAJECTORY_VERSION as usize)?;
    w.u64(traj.config_hash);
    write_arch(&mut w, &traj.arch)?;
    w.u32(traj.expert_epochs)?;
    w.u32(traj.snapshots.len())?;
    let params = traj.snapshots.first().map_or(0, |s| s.len());
    w.u64(params as u64);
    for s in &traj.snapshots {
        if s.len() != params {
            return Err(Error::Format("snapshots have different lengths".into()));
        }
        w.f64s(s.values());
    }
    w.u32(traj.train_loss.len())?;
    w.f64s(&traj.train_loss);
    w.u64(traj.degenerate_steps as u64);
    Ok(w.finish())
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<TeacherTrajectory> {
    let mut r = open(bytes, TRAJECTORY_MAGIC, "FTDT", TRAJECTORY_VERSION)?;
    let config_hash = r.u64()?;
    let arch = read_arch(&mut r)?;
    let expert_epochs = r.u32()?;
    let count = r.u32()?;
    let params = r.u64()? as usize;
    let net = Network::build(arch)?;
    if net.param_count() != params {
        return Err(Error::Core(ftd_core::Error::LayoutMismatch(format!(
            "file stores {params} parameters, {} has {}",
            arch.id(),
            net.param_count()
        ))));
    }
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        snapshots.push(ParamVector::with_layout(r.f64s(params)?, net.layout().clone())?);
    }
    let losses = r.u32()?;
    let train_loss = r.f64s(losses)?;
    let degenerate_steps = r.u64()? as usize;
    r.end()?;
    Ok(TeacherTrajectory { arch, snapshots, expert_epochs, config_hash, train_loss, degenerate_steps })
}

pub fn encode_synthetic(ck: &SyntheticCheckpoint) -> Result<Vec<u8>> {
    let s = &ck.syn;
    let values = s.len() * s.dim();
    if s.pixels.len() != values || s.ema_pixels.len() != values {
        return Err(Error::Format("synthetic pixel buffers do not match |S| × dim".into()));
    }
    let mut w = Writer::default();
    w.0.extend_from_slice(SYNTHETIC_MAGIC);
    w.u32(SYNTHETIC_VERSION as usize)?;
    w.u64(ck.config_hash);
    w.u64(ck.teacher_hash);
    for v in [s.ipc, s.classes, s.shape.channels, s.shape.height, s.shape.width] {
        w.u32(v)?;
    }
    w.f64s(&[s.step_size, s.ema_decay]);
    w.u32(s.len())?;
    for &l in &s.labels {
        w.u32(l)?;
    }
    w.f64s(&s.pixels);
    w.f64s(&s.ema_pixels);
    Ok(w.finish())
}

pub fn decode_synthetic(bytes: &[u8]) -> Result<SyntheticCheckpoint> {
    let mut r = open(bytes, SYNTHETIC_MAGIC, "FTDS", SYNTHETIC_VERSION)?;
    let config_hash = r.u64()?;
    let teacher_hash = r.u64()?;
    let (ipc, classes) = (r.u32()?, r.u32()?);
    let shape = InputShape::new(r.u32()?, r.u32()?, r.u32()?);
    let step_size = r.f64s(1)?[0];
    let ema_decay = r.f64s(1)?[0];
    let rows = r.u32()?;
    if rows != ipc * classes {
        return Err(Error::Format(format!("{rows} rows for ipc {ipc} and {classes} classes")));
    }
    let labels = (0..rows).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Core(ftd_core::Error::LabelOutOfRange { label, classes }));
    }
    let pixels = r.f64s(rows * shape.dim())?;
    let ema_pixels = r.f64s(rows * shape.dim())?;
    r.end()?;
    let syn = SyntheticDataset { pixels, labels, ipc, classes, shape, step_size, ema_pixels, ema_decay };
    Ok(SyntheticCheckpoint { syn, config_hash, teacher_hash })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_trajectory(traj: &TeacherTrajectory, path: &Path) -> Result<()> {
    write(path, &encode_trajectory(traj)?)
}

pub fn load_trajectory(path: &Path) -> Result<TeacherTrajectory> {
    decode_trajectory(&read(path)?)
}

pub fn save_synthetic(ck: &SyntheticCheckpoint, path: &Path) -> Result<()> {
    write(path, &encode_synthetic(ck)?)
}

pub fn load_synthetic(path: &Path) -> Result<SyntheticCheckpoint> {
    decode_synthetic(&read(path)?)
}
