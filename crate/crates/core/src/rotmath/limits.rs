use std::collections::HashMap;

use super::euler::EulerOrder;
use super::AxisRange;
use crate::error::{Error, Result};

/// One row of the joint limit table.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLimit {
    pub name: String,
    pub parent: Option<String>,
    pub order: EulerOrder,
    /// Per-axis `[x, y, z]` ranges in radians.
    pub ranges: [AxisRange; 3],
    pub is_root: bool,
    pub is_end_site: bool,
}

impl JointLimit {
    /// Every axis is fixed (this includes end sites).
    pub fn is_fixed(&self) -> bool {
        self.ranges.iter().all(AxisRange::is_fixed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLimitTable {
    pub joints: Vec<JointLimit>,
}

pub const CMU_LIMITS_ASSET: &str = include_str!("../../assets/cmu_joint_limits.txt");

impl JointLimitTable {
    /// The CMU table shipped with the crate.
    pub fn cmu() -> Self {
        Self::parse(CMU_LIMITS_ASSET).expect("shipped joint limit table is valid")
    }

    /// Parses the versioned whitespace table: `name parent order xmin xmax
    /// ymin ymax zmin zmax` in degrees, `-` for end-site limits and for the
    /// root's parent.
    pub fn parse(text: &str) -> Result<Self> {
        let mut joints = Vec::new();
        let mut version = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "version" {
                version = fields.get(1).and_then(|v| v.parse::<u32>().ok());
                continue;
            }
            if fields.len() != 9 {
                return Err(Error::Skeleton(format!(
                    "limit table line {}: expected 9 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parent = (fields[1] != "-").then(|| fields[1].to_string());
            let order: EulerOrder = fields[2].parse()?;
            let is_end_site = fields[3..].iter().all(|f| *f == "-");
            let ranges = if is_end_site {
                [AxisRange::FIXED_ZERO; 3]
            } else {
                let mut vals = [0.0; 6];
                for (v, f) in vals.iter_mut().zip(&fields[3..]) {
                    *v = f.parse::<f64>().map_err(|_| {
                        Error::Skeleton(format!(
                            "limit table line {}: bad number `{f}`",
                            lineno + 1
                        ))
                    })?;
                }
                let mut r = [AxisRange::FIXED_ZERO; 3];
                for k in 0..3 {
                    if vals[2 * k] > vals[2 * k + 1] {
                        return Err(Error::Skeleton(format!(
                            "limit table line {}: min > max on axis {k}",
                            lineno + 1
                        )));
                    }
                    r[k] = AxisRange::from_degrees(vals[2 * k], vals[2 * k + 1]);
                }
                r
            };
            joints.push(JointLimit {
                name: fields[0].to_string(),
                is_root: parent.is_none(),
                parent,
                order,
                ranges,
                is_end_site,
            });
        }
        if version != Some(1) {
            return Err(Error::Skeleton(
                "limit table: missing or unsupported `version` line".into(),
            ));
        }
        let table = JointLimitTable { joints };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let roots = self.joints.iter().filter(|j| j.is_root).count();
        if roots != 1 {
            return Err(Error::Skeleton(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        if !self.joints.first().is_some_and(|j| j.is_root) {
            return Err(Error::Skeleton("root must be the first row".into()));
        }
        let mut seen = HashMap::new();
        for (i, j) in self.joints.iter().enumerate() {
            if let Some(p) = &j.parent {
                if !seen.contains_key(p.as_str()) {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` lists parent `{p}` that does not precede it",
                        j.name
                    )));
                }
            }
            if seen.insert(j.name.as_str(), i).is_some() {
                return Err(Error::Skeleton(format!("duplicate joint `{}`", j.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn parent_indices(&self) -> Vec<Option<usize>> {
        self.joints
            .iter()
            .map(|j| j.parent.as_deref().and_then(|p| self.index_of(p)))
            .collect()
    }

    /// Serialises back to the asset format.
    pub fn to_text(&self) -> String {
        let mut s =
            String::from("# name parent order x_min x_max y_min y_max z_min z_max\nversion 1\n");
        for j in &self.joints {
            let parent = j.parent.as_deref().unwrap_or("-");
            s.push_str(&format!("{} {} {}", j.name, parent, j.order));
            for r in &j.ranges {
                if j.is_end_site {
                    s.push_str(" - -");
                } else {
                    s.push_str(&format!(" {} {}", r.min.to_degrees(), r.max.to_degrees()));
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GimbalViolation {
    pub joint: String,
    pub order: EulerOrder,
    /// Range of the order's second axis, degrees.
    pub second_axis_range_deg: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GimbalAudit {
    /// Joints that were checked (non-root, non-fixed).
    pub checked: Vec<String>,
    pub violations: Vec<GimbalViolation>,
}

impl GimbalAudit {
    pub fn is_safe(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Confirms that for every movable non-root joint the second axis of its
/// order stays strictly inside (−90°, 90°).
pub fn audit_gimbal_safety(table: &JointLimitTable) -> GimbalAudit {
    let mut audit = GimbalAudit::default();
    let lim = std::f64::consts::FRAC_PI_2;
    for j in &table.joints {
        if j.is_root || j.is_end_site || j.is_fixed() {
            continue;
        }
        audit.checked.push(j.name.clone());
        let r = j.ranges[j.order.second_axis().index()];
        let safe = r.is_fixed() || (r.min > -lim && r.max < lim);
        if !safe {
            audit.violations.push(GimbalViolation {
                joint: j.name.clone(),
                order: j.order,
                second_axis_range_deg: (r.min.to_degrees(), r.max.to_degrees()),
            });
        }
    }
    audit
}
