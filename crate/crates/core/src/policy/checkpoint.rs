//! Policy checkpoint files.
//!
//! ```text
//! NSES-CHECKPOINT
//! format_version = 1
//! kind = mlp                 # PolicySpec keys follow
//! ...
//! param_count = 386
//! members = 5
//! optimizer = true
//! normalizer = false
//! pretrained = false
//! end
//! <binary body>
//! ```
//!
//! The header is `key = value` text terminated by a line `end`. The body is
//! little-endian IEEE-754 f64 values: for each member its parameter vector
//! (`param_count` values), then when `optimizer = true` the Adam first
//! moment, second moment (`param_count` values each) and step count (one
//! value); after all members, when `normalizer = true`, the observation mean
//! and standard deviation (`obs_dim` values each).

use std::fs;
use std::path::Path;

use super::{param_count, ParameterVector, Policy, PolicySpec};
use crate::error::{format_err, structure, Result};
use crate::es::{AdamMoments, ObsNormalizer};
use crate::kv::KvMap;

pub const MAGIC: &str = "NSES-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct MemberCheckpoint {
    pub params: ParameterVector,
    pub optimizer: Option<AdamMoments>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: PolicySpec,
    pub members: Vec<MemberCheckpoint>,
    pub normalizer: Option<ObsNormalizer>,
    pub pretrained: bool,
}

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(format_err("float payload is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl Checkpoint {
    pub fn single(policy: &Policy) -> Self {
        Self {
            spec: policy.spec.clone(),
            members: vec![MemberCheckpoint { params: policy.params.clone(), optimizer: None }],
            normalizer: policy.normalizer.clone(),
            pretrained: false,
        }
    }

    pub fn policy(&self, member: usize) -> Result<Policy> {
        let m = self
            .members
            .get(member)
            .ok_or_else(|| structure(format!("checkpoint has no member {member}")))?;
        Policy::new(self.spec.clone(), m.params.clone(), self.normalizer.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = param_count(&self.spec);
        if self.members.is_empty() {
            return Err(structure("checkpoint without members"));
        }
        let with_opt = self.members[0].optimizer.is_some();
        let mut body = Vec::new();
        for m in &self.members {
            m.params.check(&self.spec)?;
            if m.optimizer.is_some() != with_opt {
                return Err(structure("members disagree on optimizer state presence"));
            }
            body.extend_from_slice(m.params.as_slice());
            if let Some(opt) = &m.optimizer {
                if opt.m.len() != n || opt.v.len() != n {
                    return Err(structure("optimizer moments differ from genome length"));
                }
                body.extend_from_slice(&opt.m);
                body.extend_from_slice(&opt.v);
                body.push(opt.t as f64);
            }
        }
        if let Some(norm) = &self.normalizer {
            body.extend_from_slice(&norm.mean);
            body.extend_from_slice(&norm.std);
        }

        let mut kv = KvMap::new();
        kv.set("format_version", FORMAT_VERSION);
        self.spec.write_kv(&mut kv);
        kv.set("param_count", n);
        kv.set("members", self.members.len());
        kv.set("optimizer", with_opt);
        kv.set("normalizer", self.normalizer.is_some());
        kv.set("pretrained", self.pretrained);
        let mut out = format!("{MAGIC}\n{}end\n", kv.render()).into_bytes();
        out.extend(f64s_to_le_bytes(&body));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let marker = b"\nend\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| format_err("checkpoint header not terminated"))?;
        let header = std::str::from_utf8(&bytes[..split + 1]).map_err(|_| format_err("header is not UTF-8"))?;
        let body = &bytes[split + marker.len()..];
        let (magic, rest) = header.split_once('\n').ok_or_else(|| format_err("empty header"))?;
        if magic.trim() != MAGIC {
            return Err(format_err("not a checkpoint file"));
        }
        let mut kv = KvMap::parse(rest)?;
        let version: u32 = kv.take_required("format_version")?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported checkpoint version {version}")));
        }
        let spec = PolicySpec::take_kv(&mut kv)?;
        let n: usize = kv.take_required("param_count")?;
        if n != param_count(&spec) {
            return Err(format_err("param_count disagrees with the spec"));
        }
        let members: usize = kv.take_required("members")?;
        let with_opt: bool = kv.take_required("optimizer")?;
        let with_norm: bool = kv.take_required("normalizer")?;
        let pretrained: bool = kv.take_required("pretrained")?;
        kv.finish("checkpoint header")?;

        let values = le_bytes_to_f64s(body)?;
        let per_member = if with_opt { 3 * n + 1 } else { n };
        let expected = members * per_member + if with_norm { 2 * spec.obs_dim } else { 0 };
        if values.len() != expected || members == 0 {
            return Err(format_err(format!("checkpoint body has {} floats, expected {expected}", values.len())));
        }
        let mut chunks = values.chunks_exact(per_member);
        let members = (&mut chunks)
            .take(members)
            .map(|c| {
                Ok(MemberCheckpoint {
                    params: ParameterVector::new(c[..n].to_vec())?,
                    optimizer: with_opt.then(|| AdamMoments {
                        m: c[n..2 * n].to_vec(),
                        v: c[2 * n..3 * n].to_vec(),
                        t: c[3 * n] as u64,
                    }),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tail = &values[values.len() - if with_norm { 2 * spec.obs_dim } else { 0 }..];
        let normalizer = with_norm
            .then(|| ObsNormalizer::from_parts(tail[..spec.obs_dim].to_vec(), tail[spec.obs_dim..].to_vec()))
            .transpose()?;
        Ok(Self { spec, members, normalizer, pretrained })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
