//! Checkpoint file format, version 1:
//!
//! ```text
//! magic "SCRLCKPT" | u32 version | u32 meta length | meta (json architecture
//! descriptor) | u64 parameter count | little-endian float32 parameter blob
//! (critic then policy) | u32 crc32 of everything above
//! ```
//!
//! Round trips are bit-exact: parameters are stored as float32 and training
//! state is kept in a separate resume file.

use super::{build_critic, build_policy, ArchConfig, CriticPair, PolicyKind, PolicyNet};
use crate::env::{ActionSpace, ObsSpace};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SCRLCKPT";
const VERSION: u32 = 1;

/// Architecture descriptor stored inside every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub obs_space: ObsSpace,
    pub action_space: ActionSpace,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub repr_dim: usize,
    pub use_layer_norm: bool,
    pub policy_std: f64,
    pub step: usize,
}

impl CheckpointMeta {
    pub fn arch(&self) -> ArchConfig {
        ArchConfig::for_obs(
            &self.obs_space,
            self.mlp_width,
            self.mlp_depth,
            self.use_layer_norm,
        )
    }
}

/// A loaded checkpoint: rebuilt networks plus their descriptor.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub critic: CriticPair,
    pub policy: PolicyNet,
}

pub fn write_checkpoint<W: Write>(
    meta: &CheckpointMeta,
    critic: &CriticPair,
    policy: &PolicyNet,
    mut out: W,
) -> Result<()> {
    let path = Path::new("<writer>");
    let io_err = |e: std::io::Error| Error::io(path, e);
    let meta_json =
        serde_json::to_vec(meta).map_err(|e| Error::invalid(format!("meta encode: {e}")))?;
    let mut body = Vec::new();
    body.extend_from_slice(MAGIC);
    body.extend_from_slice(&VERSION.to_le_bytes());
    body.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    body.extend_from_slice(&meta_json);
    let critic_params = critic.params();
    let policy_params = policy.params();
    let total = critic_params.len() + policy_params.len();
    body.extend_from_slice(&(total as u64).to_le_bytes());
    for p in critic_params.iter().chain(policy_params.iter()) {
        body.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&body);
    body.extend_from_slice(&hasher.finalize().to_le_bytes());
    out.write_all(&body).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
    critic: &CriticPair,
    policy: &PolicyNet,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(meta, critic, policy, std::io::BufWriter::new(file))
}

pub fn read_checkpoint(data: &[u8], path: &Path) -> Result<Checkpoint> {
    if data.len() < MAGIC.len() + 16 {
        return Err(Error::corrupt(path, "file too short"));
    }
    let (body, tail) = data.split_at(data.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(body);
    if hasher.finalize() != stored {
        return Err(Error::corrupt(path, "crc32 mismatch"));
    }
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > body.len() {
            return Err(Error::corrupt(path, "unexpected end of file"));
        }
        let s = &body[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::corrupt(path, format!("unsupported version {version}")));
    }
    let meta_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let meta: CheckpointMeta = serde_json::from_slice(take(&mut pos, meta_len)?)
        .map_err(|e| Error::corrupt(path, format!("meta decode: {e}")))?;
    let total = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let mut params = Vec::with_capacity(total);
    for _ in 0..total {
        let b = take(&mut pos, 4)?;
        params.push(f64::from(f32::from_le_bytes(b.try_into().unwrap())));
    }
    if pos != body.len() {
        return Err(Error::corrupt(path, "trailing bytes"));
    }
    let arch = meta.arch();
    let mut critic = build_critic(&meta.obs_space, &meta.action_space, &arch, meta.repr_dim)?;
    let mut policy = build_policy(&meta.obs_space, &meta.action_space, &arch, meta.policy_std)?;
    if let PolicyKind::Gaussian { std, .. } = policy.kind {
        debug_assert!(std > 0.0);
    }
    let nc = critic.param_count();
    let np = policy.param_count();
    if nc + np != total {
        return Err(Error::IncompatibleCheckpoint(format!(
            "descriptor implies {} parameters but blob holds {total}",
            nc + np
        )));
    }
    critic.write_params(&params[..nc]);
    policy.write_params(&params[nc..]);
    Ok(Checkpoint {
        meta,
        critic,
        policy,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    read_checkpoint(&data, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn small_meta() -> CheckpointMeta {
        CheckpointMeta {
            obs_space: ObsSpace::TabularIndex { n: 9 },
            action_space: ActionSpace::Discrete { n: 5 },
            mlp_width: 16,
            mlp_depth: 2,
            repr_dim: 4,
            use_layer_norm: true,
            policy_std: 0.15,
            step: 123,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let meta = small_meta();
        let arch = meta.arch();
        let mut rng = stream(5, 0);
        let mut critic =
            build_critic(&meta.obs_space, &meta.action_space, &arch, meta.repr_dim).unwrap();
        critic.phi.init(&mut rng);
        critic.psi.init(&mut rng);
        let mut policy =
            build_policy(&meta.obs_space, &meta.action_space, &arch, meta.policy_std).unwrap();
        policy.init(&mut rng);

        let mut bytes = Vec::new();
        write_checkpoint(&meta, &critic, &policy, &mut bytes).unwrap();
        let loaded = read_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(loaded.meta, meta);
        // params survive the f32 narrowing round trip exactly
        let mut bytes2 = Vec::new();
        write_checkpoint(&loaded.meta, &loaded.critic, &loaded.policy, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn corruption_detected() {
        let meta = small_meta();
        let arch = meta.arch();
        let critic =
            build_critic(&meta.obs_space, &meta.action_space, &arch, meta.repr_dim).unwrap();
        let policy =
            build_policy(&meta.obs_space, &meta.action_space, &arch, meta.policy_std).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&meta, &critic, &policy, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(
            read_checkpoint(&bad, Path::new("mem")),
            Err(Error::CorruptFile { .. })
        ));
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() / 2], Path::new("mem")),
            Err(Error::CorruptFile { .. })
        ));
    }
}
