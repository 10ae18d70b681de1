use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rotmath::{norm, AxisRange, EulerOrder, JointLimitTable, Vec3};

pub const CMU_OFFSETS_ASSET: &str = include_str!("../../assets/cmu_rest_offsets.txt");

/// One joint of a [`Skeleton`], used when building skeletons by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDef {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub order: EulerOrder,
    pub ranges: [AxisRange; 3],
    pub is_end_site: bool,
}

/// Joint hierarchy in topological order (`parent[j] < j`), rest offsets in
/// centimetres and per-joint rotation limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    orders: Vec<EulerOrder>,
    ranges: Vec<[AxisRange; 3]>,
    end_sites: Vec<bool>,
}

impl Skeleton {
    pub fn new(joints: Vec<JointDef>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Skeleton("skeleton has no joints".into()));
        }
        if joints[0].parent.is_some() {
            return Err(Error::Skeleton("joint 0 must be the root".into()));
        }
        for (j, d) in joints.iter().enumerate().skip(1) {
            match d.parent {
                Some(p) if p < j => {}
                Some(p) => {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` (index {j}) has parent {p}; parents must precede children",
                        d.name
                    )))
                }
                None => return Err(Error::Skeleton(format!("second root `{}`", d.name))),
            }
            if !(norm(d.offset) > 0.0) {
                return Err(Error::Skeleton(format!(
                    "joint `{}` has a zero-length bone",
                    d.name
                )));
            }
            for r in &d.ranges {
                if !(r.min <= r.max) {
                    return Err(Error::Skeleton(format!("joint `{}` has min > max", d.name)));
                }
            }
        }
        Ok(Skeleton {
            names: joints.iter().map(|d| d.name.clone()).collect(),
            parents: joints.iter().map(|d| d.parent).collect(),
            offsets: joints.iter().map(|d| d.offset).collect(),
            orders: joints.iter().map(|d| d.order).collect(),
            ranges: joints.iter().map(|d| d.ranges).collect(),
            end_sites: joints.iter().map(|d| d.is_end_site).collect(),
        })
    }

    /// The 57-joint CMU hierarchy with the shipped limit table and offsets.
    pub fn cmu() -> Self {
        Self::from_tables(&JointLimitTable::cmu(), CMU_OFFSETS_ASSET)
            .expect("shipped skeleton assets are valid")
    }

    pub fn from_tables(limits: &JointLimitTable, offsets_text: &str) -> Result<Self> {
        let offsets = parse_offsets(offsets_text)?;
        if offsets.len() != limits.len() {
            return Err(Error::Skeleton(format!(
                "offset table has {} joints, limit table has {}",
                offsets.len(),
                limits.len()
            )));
        }
        let parents = limits.parent_indices();
        let joints = limits
            .joints
            .iter()
            .zip(offsets)
            .zip(parents)
            .map(|((l, (name, offset)), parent)| {
                if name != l.name {
                    return Err(Error::Skeleton(format!(
                        "offset row `{name}` does not match limit row `{}`",
                        l.name
                    )));
                }
                Ok(JointDef {
                    name,
                    parent,
                    offset,
                    order: l.order,
                    ranges: l.ranges,
                    is_end_site: l.is_end_site,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(joints)
    }

    /// Joint count M.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// `6 + 3(M − 1)` decoder output channels per frame.
    pub fn raw_channels(&self) -> usize {
        6 + 3 * (self.len() - 1)
    }

    /// `3M` pose channels per frame.
    pub fn pose_channels(&self) -> usize {
        3 * self.len()
    }

    /// `3(M − 1)` local (non-root) position channels per frame.
    pub fn local_channels(&self) -> usize {
        3 * (self.len() - 1)
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        self.offsets[j]
    }

    pub fn order(&self, j: usize) -> EulerOrder {
        self.orders[j]
    }

    pub fn ranges(&self, j: usize) -> &[AxisRange; 3] {
        &self.ranges[j]
    }

    pub fn is_end_site(&self, j: usize) -> bool {
        self.end_sites[j]
    }

    pub fn children(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(j))
            .map(|(c, _)| c)
    }

    pub fn bone_length(&self, j: usize) -> f64 {
        norm(self.offsets[j])
    }

    /// Stable SHA-256 over names, parents, orders, offsets and limits.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for j in 0..self.len() {
            h.update(self.names[j].as_bytes());
            h.update([0u8]);
            h.update((self.parents[j].map_or(-1, |p| p as i64)).to_le_bytes());
            h.update(self.orders[j].to_string().as_bytes());
            for v in self.offsets[j] {
                h.update(v.to_le_bytes());
            }
            for r in &self.ranges[j] {
                h.update(r.min.to_le_bytes());
                h.update(r.max.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

fn parse_offsets(text: &str) -> Result<Vec<(String, Vec3)>> {
    let mut rows = Vec::new();
    let mut version = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[0] == "version" {
            version = f.get(1).and_then(|v| v.parse::<u32>().ok());
            continue;
        }
        if f.len() != 4 {
            return Err(Error::Skeleton(format!(
                "offset table line {}: expected 4 fields",
                lineno + 1
            )));
        }
        let mut v = [0.0; 3];
        for (k, s) in f[1..].iter().enumerate() {
            v[k] = s.parse().map_err(|_| {
                Error::Skeleton(format!(
                    "offset table line {}: bad number `{s}`",
                    lineno + 1
                ))
            })?;
        }
        rows.push((f[0].to_string(), v));
    }
    if version != Some(1) {
        return Err(Error::Skeleton(
            "offset table: missing or unsupported `version` line".into(),
        ));
    }
    Ok(rows)
}
