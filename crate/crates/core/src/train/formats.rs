//! Binary clip and checkpoint files, and the caption manifest.
//!
//! All integers and floats are little-endian; there is no padding.
//!
//! ```text
//! RVID  "RVID" u32 version=1, u32 T, u32 H, u32 W, u32 C, f32 fps, f32[T*H*W*C]
//! LTXK  "LTXK" u32 version=1, u32 count,
//!       count x { u16 name_len, name (utf-8), u8 rank, u32 dims[rank], f32[prod(dims)] }
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::{LatentTensor, VideoTensor};

pub const RVID_MAGIC: &[u8; 4] = b"RVID";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LTXK";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos as u64,
            msg: msg.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or(Error::Parse {
            offset: self.pos as u64,
            msg: format!("{what} length overflows"),
        })?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            self.pos = 0;
            return self.fail(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(m), String::from_utf8_lossy(magic)));
        }
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            self.pos -= 4;
            return self.fail(format!("unsupported version {v}"));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return self.fail(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Contents of an RVID file: a `[T, H, W, C]` clip of pixels or latents.
#[derive(Clone, Debug, PartialEq)]
pub struct RawVideoFile {
    pub dims: [usize; 4],
    pub fps: f32,
    pub data: Vec<f32>,
}

impl RawVideoFile {
    pub fn from_tensor<S: Scalar>(x: &Tensor<S>, fps: f64) -> Result<Self> {
        if x.rank() != 4 {
            return Err(Error::dim(format!("clip files hold [T,H,W,C] tensors, got {:?}", x.shape())));
        }
        let s = x.shape();
        Ok(Self {
            dims: [s[0], s[1], s[2], s[3]],
            fps: fps as f32,
            data: x.data().iter().map(|v| v.to_f32_lossy()).collect(),
        })
    }

    pub fn from_video<S: Scalar>(v: &VideoTensor<S>) -> Self {
        Self::from_tensor(&v.pixels, v.fps).expect("videos are rank 4")
    }

    pub fn from_latent<S: Scalar>(z: &LatentTensor<S>) -> Self {
        Self::from_tensor(&z.values, z.fps).expect("latents are rank 4")
    }

    pub fn tensor<S: Scalar>(&self) -> Tensor<S> {
        Tensor::new(&self.dims, self.data.iter().map(|&v| S::of(v as f64)).collect())
    }

    pub fn video<S: Scalar>(&self) -> Result<VideoTensor<S>> {
        VideoTensor::new(self.tensor(), self.fps as f64)
    }

    pub fn latent<S: Scalar>(&self) -> LatentTensor<S> {
        LatentTensor::new(self.tensor(), self.fps as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + 4 * self.data.len());
        out.extend_from_slice(RVID_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.fps.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(RVID_MAGIC)?;
        let mut dims = [0usize; 4];
        for (d, name) in dims.iter_mut().zip(["T", "H", "W", "C"]) {
            *d = r.u32(name)? as usize;
        }
        let fps = f32::from_le_bytes(r.take(4, "fps")?.try_into().unwrap());
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(n) = n else {
            return r.fail("clip dimensions overflow");
        };
        let data = r.f32s(n, "clip payload")?;
        r.finish()?;
        Ok(Self { dims, fps, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Ordered named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointFile {
    pub entries: Vec<CheckpointEntry>,
}

impl CheckpointFile {
    pub fn from_module<S: Scalar, M: Module<S> + ?Sized>(module: &mut M) -> Self {
        let mut c = Self::default();
        module.visit("", &mut |name, t| c.push(name, &t.detach()));
        c
    }

    pub fn push<S: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<S>) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.to_f32_lossy()).collect(),
        });
    }

    /// Appends every entry of `other` with `prefix.` in front of its name.
    pub fn extend_prefixed(&mut self, prefix: &str, other: CheckpointFile) {
        for mut e in other.entries {
            e.name = format!("{prefix}.{}", e.name);
            self.entries.push(e);
        }
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn tensor<S: Scalar>(&self, name: &str) -> Result<Tensor<S>> {
        let e = self
            .get(name)
            .ok_or_else(|| Error::Config(format!("checkpoint has no tensor {name:?}")))?;
        Ok(Tensor::new(&e.shape, e.data.iter().map(|&v| S::of(v as f64)).collect()))
    }

    /// Entries whose names start with `prefix.`, with the prefix removed.
    pub fn subset(&self, prefix: &str) -> CheckpointFile {
        let p = format!("{prefix}.");
        CheckpointFile {
            entries: self
                .entries
                .iter()
                .filter_map(|e| {
                    e.name.strip_prefix(&p).map(|n| CheckpointEntry {
                        name: n.to_string(),
                        ..e.clone()
                    })
                })
                .collect(),
        }
    }

    /// Overwrites every parameter of `module` by name. Missing names or shape
    /// mismatches are errors; extra entries are ignored.
    pub fn load_into<S: Scalar, M: Module<S> + ?Sized>(&self, module: &mut M) -> Result<()> {
        let index: HashMap<&str, &CheckpointEntry> = self.entries.iter().map(|e| (e.name.as_str(), e)).collect();
        let mut err = None;
        module.visit("", &mut |name, t| {
            if err.is_some() {
                return;
            }
            match index.get(name.as_str()) {
                Some(e) if e.shape == t.shape() => {
                    *t = Tensor::param(&e.shape, e.data.iter().map(|&v| S::of(v as f64)).collect());
                }
                Some(e) => err = Some(Error::dim(format!("{name}: checkpoint shape {:?}, model {:?}", e.shape, t.shape()))),
                None => err = Some(Error::Config(format!("checkpoint lacks parameter {name:?}"))),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = e.name.as_bytes();
            let nlen = u16::try_from(name.len()).map_err(|_| Error::Config(format!("tensor name too long: {}", e.name)))?;
            let rank = u8::try_from(e.shape.len()).map_err(|_| Error::Config(format!("{} has too many axes", e.name)))?;
            if e.shape.iter().product::<usize>() != e.data.len() {
                return Err(Error::dim(format!("{}: shape {:?} vs {} values", e.name, e.shape, e.data.len())));
            }
            out.extend_from_slice(&nlen.to_le_bytes());
            out.extend_from_slice(name);
            out.push(rank);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header(CHECKPOINT_MAGIC)?;
        let count = r.u32("tensor count")?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let nlen = r.u16("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(nlen, "name")?)
                .map_err(|_| Error::Parse {
                    offset: at as u64,
                    msg: "tensor name is not utf-8".into(),
                })?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let Some(n) = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)) else {
                return r.fail(format!("{name}: dimensions overflow"));
            };
            let data = r.f32s(n, "tensor payload")?;
            entries.push(CheckpointEntry { name, shape, data });
        }
        r.finish()?;
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// `filename<TAB>caption` lines.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (f, c) in rows {
        if f.contains(['\t', '\n']) || c.contains(['\t', '\n']) {
            return Err(Error::Config(format!("manifest fields may not contain tabs or newlines: {f:?}")));
        }
        s.push_str(f);
        s.push('\t');
        s.push_str(c);
        s.push('\n');
    }
    write_file(path.as_ref(), s.as_bytes())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Parse {
        offset: e.utf8_error().valid_up_to() as u64,
        msg: format!("{} is not utf-8", path.display()),
    })?;
    let mut offset = 0u64;
    let mut rows = Vec::new();
    for line in text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        if !body.is_empty() {
            let Some((f, c)) = body.split_once('\t') else {
                return Err(Error::Parse {
                    offset,
                    msg: format!("manifest line without a tab: {body:?}"),
                });
            };
            rows.push((f.to_string(), c.to_string()));
        }
        offset += line.len() as u64;
    }
    Ok(rows)
}
