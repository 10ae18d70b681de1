use std::fmt::Write as _;

use super::clip::{MotionClip, FPS};
use crate::error::{Error, Result};
use crate::rcfk::Skeleton;
use crate::rotmath::{matrix_to_euler, Axis, EulerOrder, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Position(Axis),
    Rotation(Axis),
}

impl Channel {
    fn parse(s: &str) -> Option<Channel> {
        let axis = match s.as_bytes().first()?.to_ascii_uppercase() {
            b'X' => Axis::X,
            b'Y' => Axis::Y,
            b'Z' => Axis::Z,
            _ => return None,
        };
        match s[1..].to_ascii_lowercase().as_str() {
            "position" => Some(Channel::Position(axis)),
            "rotation" => Some(Channel::Rotation(axis)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvhJoint {
    /// End sites are named after their parent with `_Nub` appended.
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
    pub end_site: bool,
}

/// A parsed BVH file: hierarchy plus the raw channel rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BvhDocument {
    pub joints: Vec<BvhJoint>,
    pub frame_time: f64,
    pub frames: Vec<Vec<f64>>,
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |w| (i + 1, w)))
            .collect();
        Tokens { items, pos: 0 }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or(self.items.last())
            .map_or(0, |(l, _)| *l)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::BvhParse {
            line: self.line(),
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .items
            .get(self.pos)
            .map(|(_, w)| *w)
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(t)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|(_, w)| *w)
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next()?;
        if t.eq_ignore_ascii_case(word) {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected `{word}`, found `{t}`")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse::<f64>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found `{t}`"))
        })
    }
}

fn parse_joint(tok: &mut Tokens, parent: Option<usize>, joints: &mut Vec<BvhJoint>) -> Result<()> {
    let name = tok.next()?.to_string();
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    let offset = [tok.number()?, tok.number()?, tok.number()?];
    tok.expect("CHANNELS")?;
    let count = tok.number()?;
    if count < 0.0 || count.fract() != 0.0 {
        return Err(tok.err("channel count must be a non-negative integer"));
    }
    let mut channels = Vec::new();
    for _ in 0..count as usize {
        let c = tok.next()?;
        channels.push(Channel::parse(c).ok_or_else(|| {
            tok.pos -= 1;
            tok.err(format!("unknown channel `{c}`"))
        })?);
    }
    let me = joints.len();
    joints.push(BvhJoint {
        name: name.clone(),
        parent,
        offset,
        channels,
        end_site: false,
    });
    loop {
        match tok.next()? {
            "}" => return Ok(()),
            w if w.eq_ignore_ascii_case("JOINT") => parse_joint(tok, Some(me), joints)?,
            w if w.eq_ignore_ascii_case("End") => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                let offset = [tok.number()?, tok.number()?, tok.number()?];
                tok.expect("}")?;
                joints.push(BvhJoint {
                    name: format!("{name}_Nub"),
                    parent: Some(me),
                    offset,
                    channels: Vec::new(),
                    end_site: true,
                });
            }
            w => {
                tok.pos -= 1;
                return Err(tok.err(format!("unexpected `{w}` in joint `{name}`")));
            }
        }
    }
}

/// Parses hierarchy and motion sections.
pub fn parse_bvh(text: &str) -> Result<BvhDocument> {
    let mut tok = Tokens::new(text);
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut tok, None, &mut joints)?;
    if tok.peek().is_none() {
        return Err(tok.err("missing MOTION section"));
    }
    tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let n = tok.number()?;
    if n < 0.0 || n.fract() != 0.0 {
        return Err(tok.err("frame count must be a non-negative integer"));
    }
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let frame_time = tok.number()?;
    if !(frame_time > 0.0 && frame_time.is_finite()) {
        return Err(tok.err("frame time must be positive"));
    }
    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut frames = Vec::with_capacity(n as usize);
    for _ in 0..n as usize {
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            row.push(tok.number()?);
        }
        frames.push(row);
    }
    if let Some(extra) = tok.peek() {
        return Err(tok.err(format!("trailing data `{extra}` after motion rows")));
    }
    Ok(BvhDocument {
        joints,
        frame_time,
        frames,
    })
}

struct FrameChannels {
    root_position: Vec3,
    rotations: Vec<Mat3>,
}

impl BvhDocument {
    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }

    fn decode_row(&self, row: &[f64]) -> FrameChannels {
        let mut rotations = vec![Mat3::IDENTITY; self.joints.len()];
        let mut root_position = [0.0; 3];
        let mut i = 0;
        for (j, joint) in self.joints.iter().enumerate() {
            let mut r = Mat3::IDENTITY;
            for c in &joint.channels {
                let v = row[i];
                i += 1;
                match c {
                    Channel::Position(a) if j == 0 => root_position[a.index()] = v,
                    Channel::Position(_) => {}
                    Channel::Rotation(a) => r = r * a.rotation(v.to_radians()),
                }
            }
            rotations[j] = r;
        }
        FrameChannels {
            root_position,
            rotations,
        }
    }

    /// Maps the hierarchy onto `skel` by joint name, converts every rotation
    /// into the table's order and range, and resamples to 60 fps. Skeleton
    /// joints missing from the file keep the identity rotation.
    pub fn to_clip(&self, skel: &Skeleton, class_label: &str, name: &str) -> Result<MotionClip> {
        let mut map = vec![None; self.joints.len()];
        for (i, j) in self.joints.iter().enumerate() {
            let target = match skel.index_of(&j.name) {
                Some(t) => Some(t),
                None if j.end_site => None,
                None => return Err(Error::UnknownJoint(j.name.clone())),
            };
            if let (Some(t), Some(p)) = (target, j.parent) {
                if map[p] != skel.parent(t) {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` has a different parent than the skeleton",
                        j.name
                    )));
                }
            }
            if i == 0 && target != Some(0) {
                return Err(Error::Skeleton(format!(
                    "BVH root `{}` is not the skeleton root",
                    j.name
                )));
            }
            map[i] = target;
        }
        let decoded: Vec<FrameChannels> = self.frames.iter().map(|r| self.decode_row(r)).collect();
        let src_fps = self.fps();
        let n_src = decoded.len();
        let same_rate = ((src_fps - FPS) / FPS).abs() < 1e-3;
        let n_out = if n_src == 0 || same_rate {
            n_src
        } else {
            ((n_src - 1) as f64 * FPS / src_fps + 1e-6).floor() as usize + 1
        };
        let mut clip = MotionClip {
            name: name.to_string(),
            class_label: class_label.to_string(),
            source: String::new(),
            root_positions: Vec::with_capacity(n_out),
            root_rotations: Vec::with_capacity(n_out),
            angles: Vec::with_capacity(n_out),
            clamp: Vec::with_capacity(n_out),
        };
        for k in 0..n_out {
            let s = if same_rate {
                k as f64
            } else {
                k as f64 * src_fps / FPS
            };
            let i0 = (s.floor() as usize).min(n_src - 1);
            let i1 = (i0 + 1).min(n_src - 1);
            let frac = s - i0 as f64;
            let (a, b) = (decoded[i0].root_position, decoded[i1].root_position);
            clip.root_positions
                .push([0, 1, 2].map(|c| a[c] + frac * (b[c] - a[c])));
            let near = &decoded[(s.round() as usize).min(n_src - 1)];
            let mut local = vec![Mat3::IDENTITY; skel.len()];
            let mut root = Mat3::IDENTITY;
            for (i, t) in map.iter().enumerate() {
                match t {
                    Some(0) => root = near.rotations[i],
                    Some(t) => local[*t] = near.rotations[i],
                    None => {}
                }
            }
            let mut angles = vec![[0.0; 3]; skel.len()];
            let mut clamp = 0.0f64;
            for j in 1..skel.len() {
                if skel.is_end_site(j) {
                    continue;
                }
                let e = matrix_to_euler(&local[j], skel.order(j), Some(skel.ranges(j)))?;
                angles[j] = e.angles;
                clamp = clamp.max(e.violation);
            }
            clip.root_rotations.push(root);
            clip.angles.push(angles);
            clip.clamp.push(clamp);
        }
        clip.validate(skel)?;
        Ok(clip)
    }
}

fn axis_letter(a: Axis) -> char {
    match a {
        Axis::X => 'X',
        Axis::Y => 'Y',
        Axis::Z => 'Z',
    }
}

fn write_joint(out: &mut String, skel: &Skeleton, j: usize, depth: usize) {
    let pad = "  ".repeat(depth);
    let o = skel.offset(j);
    if skel.is_end_site(j) {
        let _ = writeln!(
            out,
            "{pad}End Site\n{pad}{{\n{pad}  OFFSET {} {} {}\n{pad}}}",
            o[0], o[1], o[2]
        );
        return;
    }
    let kind = if j == 0 { "ROOT" } else { "JOINT" };
    let _ = writeln!(
        out,
        "{pad}{kind} {}\n{pad}{{\n{pad}  OFFSET {} {} {}",
        skel.name(j),
        o[0],
        o[1],
        o[2]
    );
    if j == 0 {
        let _ = writeln!(
            out,
            "{pad}  CHANNELS 6 Xposition Yposition Zposition Yrotation Xrotation Zrotation"
        );
    } else {
        let axes = skel
            .order(j)
            .axes()
            .map(|a| format!("{}rotation", axis_letter(a)));
        let _ = writeln!(out, "{pad}  CHANNELS 3 {}", axes.join(" "));
    }
    for c in skel.children(j) {
        write_joint(out, skel, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Writes `clip` as a 60 fps BVH with the skeleton's offsets and orders.
pub fn export_bvh(clip: &MotionClip, skel: &Skeleton) -> Result<String> {
    clip.validate(skel)?;
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skel, 0, 0);
    let _ = writeln!(
        out,
        "MOTION\nFrames: {}\nFrame Time: {}",
        clip.len(),
        1.0 / FPS
    );
    for t in 0..clip.len() {
        let mut row: Vec<f64> = clip.root_positions[t].to_vec();
        let e = matrix_to_euler(&clip.root_rotations[t], EulerOrder::Yxz, None)?;
        row.extend(
            EulerOrder::Yxz
                .axes()
                .map(|a| e.angles[a.index()].to_degrees()),
        );
        for j in 1..skel.len() {
            if skel.is_end_site(j) {
                continue;
            }
            row.extend(
                skel.order(j)
                    .axes()
                    .map(|a| clip.angles[t][j][a.index()].to_degrees()),
            );
        }
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}
