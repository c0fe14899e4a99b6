//! Binary dataset container.
//!
//! Layout, all integers and scalars little-endian:
//!
//! ```text
//! magic  "MSGV"                      4 bytes
//! u32    version = 1
//! u32    sample count
//! u32    stream count
//! u32    T  (frames per sequence)
//! u32    C  (class count)
//! per stream:  u8 tag length, tag bytes, u32 F
//! per sample:  u32 label, then per stream T*F f32 values row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, GestureSample, StreamSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"MSGV";
pub const DATASET_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn as_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Argument(format!("{what} {v} exceeds u32 range")))
}

/// Serialize a dataset; the round trip through [`read_dataset`] is bit-exact.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    dataset.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    write_u32(&mut w, DATASET_VERSION)?;
    write_u32(&mut w, as_u32(dataset.samples.len(), "sample count")?)?;
    write_u32(&mut w, as_u32(dataset.streams.len(), "stream count")?)?;
    write_u32(&mut w, as_u32(dataset.sequence_length, "sequence length")?)?;
    write_u32(&mut w, as_u32(dataset.class_count, "class count")?)?;
    for spec in &dataset.streams {
        let tag = spec.tag.as_bytes();
        if tag.len() > u8::MAX as usize {
            return Err(Error::Argument(format!(
                "stream tag '{}' exceeds 255 bytes",
                spec.tag
            )));
        }
        w.write_all(&[tag.len() as u8])?;
        w.write_all(tag)?;
        write_u32(&mut w, as_u32(spec.frame_dim, "frame dim")?)?;
    }
    for sample in &dataset.samples {
        write_u32(&mut w, as_u32(sample.label, "label")?)?;
        for tensor in &sample.streams {
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "bad dataset magic {magic:?}, expected {DATASET_MAGIC:?}"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}, expected {DATASET_VERSION}"
        )));
    }
    let sample_count = read_u32(&mut r)? as usize;
    let stream_count = read_u32(&mut r)? as usize;
    let sequence_length = read_u32(&mut r)? as usize;
    let class_count = read_u32(&mut r)? as usize;
    if stream_count == 0 {
        return Err(Error::Format("dataset header declares zero streams".into()));
    }

    let mut streams = Vec::with_capacity(stream_count);
    for _ in 0..stream_count {
        let mut len = [0u8; 1];
        r.read_exact(&mut len)?;
        let mut tag = vec![0u8; len[0] as usize];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag)
            .map_err(|e| Error::Format(format!("stream tag is not UTF-8: {e}")))?;
        let frame_dim = read_u32(&mut r)? as usize;
        if frame_dim == 0 {
            return Err(Error::Format(format!("stream '{tag}' has zero frame dim")));
        }
        streams.push(StreamSpec { tag, frame_dim });
    }

    let mut samples = Vec::with_capacity(sample_count);
    let mut scalar = [0u8; 4];
    for i in 0..sample_count {
        let label = read_u32(&mut r)? as usize;
        if label >= class_count {
            return Err(Error::Format(format!(
                "sample {i} label {label} out of range ({class_count} classes)"
            )));
        }
        let stream_tensors = streams
            .iter()
            .map(|spec| {
                let numel = sequence_length * spec.frame_dim;
                let mut data = Vec::with_capacity(numel);
                for _ in 0..numel {
                    r.read_exact(&mut scalar)?;
                    data.push(f32::from_le_bytes(scalar));
                }
                Tensor::new(&[sequence_length, spec.frame_dim], data)
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(GestureSample {
            label,
            streams: stream_tensors,
        });
    }

    let dataset = Dataset {
        sequence_length,
        class_count,
        streams,
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}
