//! Store file format, version 1:
//!
//! ```text
//! magic "SCRL" | u32 version | u32 obs_kind | 3 x u32 obs dims
//! | u32 act_kind | u32 act dim | f32 act low | f32 act high
//! | u16-len env_id | u16-len behavior_id | u64 seed | u64 trajectory count
//! | per trajectory: u64 T, (T+1) obs records, T action records
//! | u32 crc32 of everything above
//! ```
//!
//! All integers and floats are little-endian. Observations are float32
//! (tabular indices, vectors) or uint8 (images); actions are uint8 (discrete)
//! or float32 (continuous). Round trips are bit-exact.

use super::{Trajectory, TrajectoryStore};
use crate::env::{Action, ActionSpace, Image, Obs, ObsSpace};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SCRL";
const VERSION: u32 = 1;

struct CountingCrcWriter<W: Write> {
    inner: W,
    crc: crc32fast::Hasher,
}

impl<W: Write> CountingCrcWriter<W> {
    fn new(inner: W) -> Self {
        CountingCrcWriter {
            inner,
            crc: crc32fast::Hasher::new(),
        }
    }
}

impl<W: Write> Write for CountingCrcWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.crc.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn obs_kind_tag(space: &ObsSpace) -> (u32, [u32; 3]) {
    match *space {
        ObsSpace::TabularIndex { n } => (0, [n as u32, 0, 0]),
        ObsSpace::Vector { dim } => (1, [dim as u32, 0, 0]),
        ObsSpace::Image { h, w, c } => (2, [h as u32, w as u32, c as u32]),
    }
}

fn act_kind_tag(space: &ActionSpace) -> (u32, u32, f32, f32) {
    match *space {
        ActionSpace::Discrete { n } => (0, n as u32, 0.0, 0.0),
        ActionSpace::Box { dim, low, high } => (1, dim as u32, low as f32, high as f32),
    }
}

fn write_obs<W: Write>(w: &mut W, obs: &Obs) -> std::io::Result<()> {
    match obs {
        Obs::Index(i) => w.write_all(&(*i as f32).to_le_bytes()),
        Obs::Vector(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        }
        Obs::Image(img) => w.write_all(&img.data),
    }
}

fn write_action<W: Write>(w: &mut W, a: &Action) -> std::io::Result<()> {
    match a {
        Action::Discrete(i) => w.write_all(&[*i as u8]),
        Action::Continuous(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        }
    }
}

/// Serialize a store to any writer.
pub fn write_store<W: Write>(store: &TrajectoryStore, out: W) -> Result<()> {
    let path = Path::new("<writer>");
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut w = CountingCrcWriter::new(out);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let (ok, od) = obs_kind_tag(&store.obs_space);
    w.write_all(&ok.to_le_bytes()).map_err(io_err)?;
    for d in od {
        w.write_all(&d.to_le_bytes()).map_err(io_err)?;
    }
    let (ak, ad, lo, hi) = act_kind_tag(&store.action_space);
    w.write_all(&ak.to_le_bytes()).map_err(io_err)?;
    w.write_all(&ad.to_le_bytes()).map_err(io_err)?;
    w.write_all(&lo.to_le_bytes()).map_err(io_err)?;
    w.write_all(&hi.to_le_bytes()).map_err(io_err)?;
    for s in [&store.env_id, &store.behavior_id] {
        let bytes = s.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::invalid("metadata string too long"));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(bytes).map_err(io_err)?;
    }
    w.write_all(&store.seed.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(store.trajectories.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for traj in &store.trajectories {
        w.write_all(&(traj.len() as u64).to_le_bytes()).map_err(io_err)?;
        for o in &traj.obs {
            write_obs(&mut w, o).map_err(io_err)?;
        }
        for a in &traj.actions {
            write_action(&mut w, a).map_err(io_err)?;
        }
    }
    let crc = w.crc.clone().finalize();
    w.write_all(&crc.to_le_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Write a store to `path`.
pub fn save_store(store: &TrajectoryStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_store(store, &mut buf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::corrupt(self.path, "unexpected end of file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::corrupt(self.path, "metadata is not utf-8"))
    }
}

/// Parse a store from bytes; `path` is used only for error messages.
pub fn read_store(data: &[u8], path: &Path) -> Result<TrajectoryStore> {
    if data.len() < MAGIC.len() + 8 {
        return Err(Error::corrupt(path, "file too short"));
    }
    let (body, tail) = data.split_at(data.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(body);
    if hasher.finalize() != stored_crc {
        return Err(Error::corrupt(path, "crc32 mismatch"));
    }
    let mut r = Reader {
        data: body,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::corrupt(path, format!("unsupported version {version}")));
    }
    let ok = r.u32()?;
    let od = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let obs_space = match ok {
        0 => ObsSpace::TabularIndex { n: od[0] },
        1 => ObsSpace::Vector { dim: od[0] },
        2 => ObsSpace::Image {
            h: od[0],
            w: od[1],
            c: od[2],
        },
        _ => return Err(Error::corrupt(path, "unknown obs kind")),
    };
    let ak = r.u32()?;
    let ad = r.u32()? as usize;
    let lo = r.f32()?;
    let hi = r.f32()?;
    let action_space = match ak {
        0 => ActionSpace::Discrete { n: ad },
        1 => ActionSpace::Box {
            dim: ad,
            low: lo as f64,
            high: hi as f64,
        },
        _ => return Err(Error::corrupt(path, "unknown action kind")),
    };
    let env_id = r.string()?;
    let behavior_id = r.string()?;
    let seed = r.u64()?;
    let n_traj = r.u64()? as usize;
    let mut trajectories = Vec::with_capacity(n_traj.min(1 << 20));
    for _ in 0..n_traj {
        let t = r.u64()? as usize;
        let mut obs = Vec::with_capacity(t + 1);
        for _ in 0..=t {
            obs.push(match obs_space {
                ObsSpace::TabularIndex { .. } => Obs::Index(r.f32()? as u32),
                ObsSpace::Vector { dim } => {
                    let mut v = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        v.push(r.f32()?);
                    }
                    Obs::Vector(v)
                }
                ObsSpace::Image { h, w, c } => {
                    let data = r.take(h * w * c)?.to_vec();
                    Obs::Image(Image { h, w, c, data })
                }
            });
        }
        let mut actions = Vec::with_capacity(t);
        for _ in 0..t {
            actions.push(match action_space {
                ActionSpace::Discrete { .. } => Action::Discrete(r.take(1)?[0] as u32),
                ActionSpace::Box { dim, .. } => {
                    let mut v = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        v.push(r.f32()?);
                    }
                    Action::Continuous(v)
                }
            });
        }
        trajectories.push(Trajectory { obs, actions });
    }
    if r.pos != body.len() {
        return Err(Error::corrupt(path, "trailing bytes"));
    }
    Ok(TrajectoryStore {
        obs_space,
        action_space,
        env_id,
        behavior_id,
        seed,
        trajectories,
    })
}

/// Load a store from `path`.
pub fn load_store(path: impl AsRef<Path>) -> Result<TrajectoryStore> {
    let path = path.as_ref();
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    read_store(&data, path)
}
