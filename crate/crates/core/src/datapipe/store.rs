use std::path::Path;

use super::clip::MotionClip;
use crate::error::{Error, Result};
use crate::rcfk::Skeleton;
use crate::rotmath::Mat3;

const MAGIC: &[u8; 8] = b"GTWNCLIP";
const VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: impl IntoIterator<Item = f64>) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode_clip(c: &MotionClip) -> Vec<u8> {
    let mut out = Vec::new();
    put_str(&mut out, &c.name);
    put_str(&mut out, &c.class_label);
    put_str(&mut out, &c.source);
    out.extend_from_slice(&(c.len() as u32).to_le_bytes());
    for t in 0..c.len() {
        put_f64s(&mut out, c.root_positions[t]);
        put_f64s(&mut out, c.root_rotations[t].0.iter().flatten().copied());
        put_f64s(&mut out, c.angles[t].iter().flatten().copied());
        put_f64s(&mut out, [c.clamp[t]]);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Store("truncated record".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Store("non-UTF-8 string".into()))
    }
}

fn decode_clip(bytes: &[u8], joints: usize) -> Result<MotionClip> {
    let mut r = Reader { buf: bytes };
    let name = r.string()?;
    let class_label = r.string()?;
    let source = r.string()?;
    let n = r.u32()? as usize;
    let mut c = MotionClip {
        name,
        class_label,
        source,
        root_positions: Vec::with_capacity(n),
        root_rotations: Vec::with_capacity(n),
        angles: Vec::with_capacity(n),
        clamp: Vec::with_capacity(n),
    };
    for _ in 0..n {
        c.root_positions.push([r.f64()?, r.f64()?, r.f64()?]);
        let mut m = [[0.0; 3]; 3];
        for row in &mut m {
            for v in row.iter_mut() {
                *v = r.f64()?;
            }
        }
        c.root_rotations.push(Mat3(m));
        let mut a = Vec::with_capacity(joints);
        for _ in 0..joints {
            a.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        c.angles.push(a);
        c.clamp.push(r.f64()?);
    }
    if !r.buf.is_empty() {
        return Err(Error::Store("record has trailing bytes".into()));
    }
    Ok(c)
}

/// Versioned clip container: header with the skeleton hash, an index of
/// `(offset, length, crc32)` per clip, then the records.
pub fn store_to_bytes(clips: &[MotionClip], skel: &Skeleton) -> Result<Vec<u8>> {
    let records: Vec<Vec<u8>> = clips
        .iter()
        .map(|c| c.validate(skel).map(|_| encode_clip(c)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&skel.hash());
    out.extend_from_slice(&(skel.len() as u32).to_le_bytes());
    out.extend_from_slice(&(clips.len() as u32).to_le_bytes());
    let header_len = out.len() + clips.len() * 20 + 4;
    let mut offset = header_len as u64;
    for r in &records {
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(r.len() as u64).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(r).to_le_bytes());
        offset += r.len() as u64;
    }
    let header_crc = crc32fast::hash(&out);
    out.extend_from_slice(&header_crc.to_le_bytes());
    for r in records {
        out.extend_from_slice(&r);
    }
    Ok(out)
}

pub fn store_from_bytes(bytes: &[u8], skel: &Skeleton) -> Result<Vec<MotionClip>> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != MAGIC {
        return Err(Error::Store("not a clip store".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Store(format!("unsupported store version {version}")));
    }
    let hash = r.take(32)?;
    let joints = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut index = Vec::with_capacity(count);
    for _ in 0..count {
        index.push((r.u64()? as usize, r.u64()? as usize, r.u32()?));
    }
    let header_end = bytes.len() - r.buf.len();
    if crc32fast::hash(&bytes[..header_end]) != r.u32()? {
        return Err(Error::Store("header checksum mismatch".into()));
    }
    if hash != skel.hash() || joints != skel.len() {
        return Err(Error::Store(
            "store was written for a different skeleton".into(),
        ));
    }
    let mut clips = Vec::with_capacity(count);
    for (i, (off, len, crc)) in index.into_iter().enumerate() {
        let rec = bytes
            .get(off..off + len)
            .ok_or_else(|| Error::Store(format!("record {i} out of bounds")))?;
        if crc32fast::hash(rec) != crc {
            return Err(Error::Store(format!("record {i} checksum mismatch")));
        }
        let c = decode_clip(rec, joints)?;
        c.validate(skel)?;
        clips.push(c);
    }
    Ok(clips)
}

pub fn save_store(path: &Path, clips: &[MotionClip], skel: &Skeleton) -> Result<()> {
    std::fs::write(path, store_to_bytes(clips, skel)?).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path, skel: &Skeleton) -> Result<Vec<MotionClip>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    store_from_bytes(&bytes, skel)
}
