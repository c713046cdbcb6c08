//! The `OTSW` tensor container.
//!
//! Little-endian throughout:
//!
//! ```text
//! "OTSW"  u32 version (=1)  u32 tensor_count
//! per tensor: u16 name_len, name (UTF-8), u8 rank, rank x u64 dims, f32 values
//! trailer:    u8 provenance (0 pretrained, 1 random), u64 seed, u16 label_len, label (UTF-8)
//! ```
//!
//! Weight bundles, feature matrices and SVM models all use this layout; only
//! the tensor names differ.

use std::fs::File;
use std::io::{self, BufReader, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use layergauge_core::Tensor;

use crate::atomic::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OTSW";
pub const VERSION: u32 = 1;

pub const TAG_PRETRAINED: u8 = 0;
pub const TAG_RANDOM: u8 = 1;

const MAX_RANK: usize = 4;
const CHUNK: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub tensors: Vec<(String, Tensor)>,
    pub tag: u8,
    pub seed: u64,
    pub label: String,
}

impl Container {
    pub fn new(tag: u8, seed: u64, label: impl Into<String>) -> Self {
        Container {
            tensors: Vec::new(),
            tag,
            seed,
            label: label.into(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Either the bytes are not a container, or reading them failed.
#[derive(Debug)]
pub enum ReadError {
    Format(String),
    Io(io::Error),
}

impl From<io::Error> for ReadError {
    fn from(e: io::Error) -> Self {
        ReadError::Io(e)
    }
}

fn write_str<W: Write + ?Sized>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| io::Error::new(ErrorKind::InvalidInput, "string longer than 65535 bytes"))?;
    w.write_u16::<LE>(len)?;
    w.write_all(s.as_bytes())
}

pub fn write_to<W: Write + ?Sized>(w: &mut W, c: &Container) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    let count = u32::try_from(c.tensors.len()).map_err(|_| io::Error::new(ErrorKind::InvalidInput, "too many tensors"))?;
    w.write_u32::<LE>(count)?;
    let mut buf = Vec::new();
    for (name, t) in &c.tensors {
        write_str(w, name)?;
        w.write_u8(t.rank() as u8)?;
        for &d in t.shape() {
            w.write_u64::<LE>(d as u64)?;
        }
        for chunk in t.data().chunks(CHUNK) {
            buf.clear();
            buf.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    w.write_u8(c.tag)?;
    w.write_u64::<LE>(c.seed)?;
    write_str(w, &c.label)
}

fn read_str<R: Read>(r: &mut R, what: &str) -> Result<String, ReadError> {
    let len = r.read_u16::<LE>()? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| ReadError::Format(format!("{what} is not UTF-8")))
}

pub fn read_from<R: Read>(r: &mut R) -> Result<Container, ReadError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..])? {
            0 => break,
            k => got += k,
        }
    }
    if got == 0 {
        return Err(ReadError::Format("empty file".into()));
    }
    if got < 4 || magic != MAGIC {
        return Err(ReadError::Format("bad magic (expected OTSW)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(ReadError::Format(format!("unsupported version {version}")));
    }
    let count = r.read_u32::<LE>()?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name = read_str(r, "tensor name")?;
        let rank = r.read_u8()? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(ReadError::Format(format!("tensor {name}: rank {rank} outside 1..={MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.read_u64::<LE>()?;
            shape.push(usize::try_from(d).map_err(|_| ReadError::Format(format!("tensor {name}: dimension {d} too large")))?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(4).is_some())
            .ok_or_else(|| ReadError::Format(format!("tensor {name}: element count overflows")))?;
        // Grow as data arrives so a corrupt header cannot force a huge allocation.
        let mut data = Vec::with_capacity(len.min(CHUNK));
        let mut chunk = vec![0f32; CHUNK.min(len)];
        while data.len() < len {
            let k = (len - data.len()).min(CHUNK);
            r.read_f32_into::<LE>(&mut chunk[..k])?;
            data.extend_from_slice(&chunk[..k]);
        }
        let t = Tensor::new(shape, data).map_err(|e| ReadError::Format(format!("tensor {name}: {e}")))?;
        tensors.push((name, t));
    }
    let tag = r.read_u8()?;
    if tag != TAG_PRETRAINED && tag != TAG_RANDOM {
        return Err(ReadError::Format(format!("unknown provenance tag {tag}")));
    }
    let seed = r.read_u64::<LE>()?;
    let label = read_str(r, "label")?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(ReadError::Format("trailing bytes after the label".into()));
    }
    Ok(Container {
        tensors,
        tag,
        seed,
        label,
    })
}

pub fn save(path: &Path, c: &Container) -> Result<()> {
    write_atomic(path, |w| write_to(w, c))
}

pub fn load(path: &Path) -> Result<Container> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(&mut BufReader::new(file)).map_err(|e| match e {
        ReadError::Format(m) => Error::format(path, m),
        ReadError::Io(e) => Error::io(path, e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new(TAG_RANDOM, 42, "unit");
        c.push("a", Tensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, f32::MIN_POSITIVE, 7.0, -0.0]).unwrap());
        c.push("b", Tensor::vector(vec![3.25]));
        c
    }

    fn bytes(c: &Container) -> Vec<u8> {
        let mut out = Vec::new();
        write_to(&mut out, c).unwrap();
        out
    }

    #[test]
    fn layout_matches_the_documented_header() {
        let b = bytes(&sample());
        assert_eq!(&b[..4], b"OTSW");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(b[12..14].try_into().unwrap()), 1);
        assert_eq!(b[14], b'a');
        assert_eq!(b[15], 2);
        // header 12 + tensor a (2+1+1+16+24) + tensor b (2+1+1+8+4) + trailer (1+8+2+4)
        assert_eq!(b.len(), 12 + 44 + 16 + 15);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = read_from(&mut bytes(&c).as_slice()).unwrap();
        assert_eq!(back.tensors.len(), 2);
        for ((na, ta), (nb, tb)) in c.tensors.iter().zip(&back.tensors) {
            assert_eq!(na, nb);
            assert_eq!(ta.shape(), tb.shape());
            assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!((back.tag, back.seed, back.label.as_str()), (TAG_RANDOM, 42, "unit"));
    }

    #[test]
    fn classifies_bad_input() {
        assert!(matches!(read_from(&mut &b""[..]), Err(ReadError::Format(_))));
        assert!(matches!(read_from(&mut &b"OTSX\x01\0\0\0\0\0\0\0"[..]), Err(ReadError::Format(_))));
        assert!(matches!(read_from(&mut &b"OTSW\x02\0\0\0\0\0\0\0"[..]), Err(ReadError::Format(_))));

        let b = bytes(&sample());
        for cut in [6, 13, 30, b.len() - 1] {
            match read_from(&mut &b[..cut]) {
                Err(ReadError::Io(e)) => assert_eq!(e.kind(), ErrorKind::UnexpectedEof),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut extra = b.clone();
        extra.push(0);
        assert!(matches!(read_from(&mut extra.as_slice()), Err(ReadError::Format(_))));
    }

    #[test]
    fn huge_declared_shape_fails_without_allocating() {
        let mut b = Vec::new();
        b.extend_from_slice(b"OTSW");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.push(b'x');
        b.push(2);
        b.extend_from_slice(&(1u64 << 40).to_le_bytes());
        b.extend_from_slice(&(1u64 << 30).to_le_bytes());
        assert!(matches!(read_from(&mut b.as_slice()), Err(ReadError::Format(_))));
        b.truncate(b.len() - 8);
        b.extend_from_slice(&4u64.to_le_bytes());
        assert!(matches!(read_from(&mut b.as_slice()), Err(ReadError::Io(_))));
    }
}
