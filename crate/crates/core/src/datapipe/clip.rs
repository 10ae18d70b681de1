use crate::error::{Error, Result};
use crate::rcfk::{encode_raw, forward_kinematics, LocalPoseFrame, Skeleton};
use crate::rotmath::{add, euler_to_matrix, Mat3, Vec3};

/// Frame rate of every stored clip.
pub const FPS: f64 = 60.0;
/// Shortest clip kept by the pipeline (four seconds).
pub const MIN_CLIP_FRAMES: usize = 240;

/// A motion at 60 fps on a known skeleton: world root positions, root
/// orientations and ranged Euler angles per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub name: String,
    pub class_label: String,
    pub source: String,
    pub root_positions: Vec<Vec3>,
    pub root_rotations: Vec<Mat3>,
    /// `angles[t][j]`; entry 0 (the root) is unused and zero.
    pub angles: Vec<Vec<[f64; 3]>>,
    /// Largest joint-limit excess (radians) clamped away when the frame was
    /// imported; zero for in-range frames.
    pub clamp: Vec<f64>,
}

impl MotionClip {
    pub fn len(&self) -> usize {
        self.root_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root_positions.is_empty()
    }

    pub fn validate(&self, skel: &Skeleton) -> Result<()> {
        let n = self.len();
        if self.root_rotations.len() != n || self.angles.len() != n || self.clamp.len() != n {
            return Err(Error::Shape(format!(
                "clip `{}` has ragged per-frame arrays",
                self.name
            )));
        }
        if self.angles.iter().any(|a| a.len() != skel.len()) {
            return Err(Error::Shape(format!(
                "clip `{}` does not match the skeleton",
                self.name
            )));
        }
        let finite = self.root_positions.iter().flatten().all(|v| v.is_finite())
            && self.root_rotations.iter().all(Mat3::is_finite)
            && self
                .angles
                .iter()
                .flatten()
                .flatten()
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("motion clip"));
        }
        Ok(())
    }

    /// Frames `range` as a new clip with `suffix` appended to the name.
    pub fn slice(&self, range: std::ops::Range<usize>, suffix: &str) -> MotionClip {
        MotionClip {
            name: format!("{}{suffix}", self.name),
            class_label: self.class_label.clone(),
            source: self.source.clone(),
            root_positions: self.root_positions[range.clone()].to_vec(),
            root_rotations: self.root_rotations[range.clone()].to_vec(),
            angles: self.angles[range.clone()].to_vec(),
            clamp: self.clamp[range].to_vec(),
        }
    }

    pub fn joint_rotations(&self, t: usize, skel: &Skeleton) -> Vec<Mat3> {
        (0..skel.len())
            .map(|j| {
                if j == 0 || skel.is_end_site(j) {
                    Mat3::IDENTITY
                } else {
                    euler_to_matrix(self.angles[t][j], skel.order(j))
                }
            })
            .collect()
    }

    pub fn decode(&self, t: usize, skel: &Skeleton) -> LocalPoseFrame {
        let joint_rotations = self.joint_rotations(t, skel);
        let local = forward_kinematics(&joint_rotations, skel);
        let r = self.root_rotations[t];
        LocalPoseFrame {
            root_rotation: r,
            joint_angles: self.angles[t].clone(),
            joint_positions: local.iter().map(|p| r.mul_vec(*p)).collect(),
            joint_rotations,
        }
    }

    /// `3M` keyframe vector: root world position, then the other joints
    /// relative to the root with its orientation applied.
    pub fn pose_vector(&self, t: usize, skel: &Skeleton) -> Vec<f64> {
        let f = self.decode(t, skel);
        let mut v = self.root_positions[t].to_vec();
        v.extend(f.joint_positions[1..].iter().flatten());
        v
    }

    /// Root-relative non-root positions with root orientation, `3(M − 1)`.
    pub fn local_vector(&self, t: usize, skel: &Skeleton) -> Vec<f64> {
        self.decode(t, skel).local_vector()
    }

    /// `Λ`: non-root positions in the root's own frame, `3(M − 1)`.
    pub fn lambda_vector(&self, t: usize, skel: &Skeleton) -> Vec<f64> {
        let local = forward_kinematics(&self.joint_rotations(t, skel), skel);
        local[1..].iter().flatten().copied().collect()
    }

    pub fn world_positions(&self, t: usize, skel: &Skeleton) -> Vec<Vec3> {
        let root = self.root_positions[t];
        self.decode(t, skel)
            .joint_positions
            .iter()
            .map(|p| add(*p, root))
            .collect()
    }

    pub fn raw(&self, t: usize, skel: &Skeleton) -> Vec<f64> {
        encode_raw(&self.root_rotations[t], &self.angles[t], skel)
    }
}
