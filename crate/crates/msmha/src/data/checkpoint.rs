//! Model checkpoints: a length-prefixed UTF-8 manifest naming every tensor,
//! its shape and its byte offset, followed by the raw little-endian f32
//! payload. Reloading reproduces every tensor bit for bit.
//!
//! ```text
//! u32   manifest byte length
//! text  "msmha-checkpoint v1\n"
//!       "config feature_width=.. head_count=.. ...\n"
//!       "tensor <name> <d0>x<d1>.. <payload byte offset>\n"  (one per tensor)
//! raw   f32 little-endian payload, tensors back to back
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;

use super::super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HEADER_LINE: &str = "msmha-checkpoint v1";

/// Write parameters and their configuration to `path`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams<f32>,
    config: &ModelConfig,
) -> Result<()> {
    config.validate()?;
    let names = params.names();
    let tensors = params.tensors();

    let mut manifest = String::new();
    manifest.push_str(HEADER_LINE);
    manifest.push('\n');
    manifest.push_str(&config_line(config));
    manifest.push('\n');
    let mut offset = 0u64;
    for (name, tensor) in names.iter().zip(&tensors) {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("tensor {name} {} {offset}\n", dims.join("x")));
        offset += 4 * tensor.numel() as u64;
    }

    let mut w = BufWriter::new(File::create(path)?);
    let manifest_bytes = manifest.as_bytes();
    let len = u32::try_from(manifest_bytes.len())
        .map_err(|_| Error::Argument("manifest exceeds u32 length".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(manifest_bytes)?;
    for tensor in &tensors {
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back into parameters and configuration.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, ModelConfig)> {
    let mut r = BufReader::new(File::open(path)?);

    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let manifest_len = u32::from_le_bytes(len_buf) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)?;
    let manifest = String::from_utf8(manifest_bytes)
        .map_err(|e| Error::Format(format!("manifest is not UTF-8: {e}")))?;

    let mut lines = manifest.lines();
    match lines.next() {
        Some(HEADER_LINE) => {}
        other => {
            return Err(Error::Format(format!(
                "bad checkpoint header line: {other:?}"
            )))
        }
    }
    let config = parse_config_line(lines.next().unwrap_or_default())?;

    struct Entry {
        name: String,
        shape: Vec<usize>,
        offset: u64,
    }
    let mut entries = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("tensor"), Some(name), Some(shape), Some(offset)) => {
                let shape = shape
                    .split('x')
                    .map(|d| {
                        d.parse::<usize>()
                            .map_err(|e| Error::Format(format!("bad extent '{d}': {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let offset = offset
                    .parse::<u64>()
                    .map_err(|e| Error::Format(format!("bad offset '{offset}': {e}")))?;
                entries.push(Entry {
                    name: name.to_string(),
                    shape,
                    offset,
                });
            }
            _ => return Err(Error::Format(format!("bad manifest line: '{line}'"))),
        }
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    // offsets must tile the payload exactly, in order and without overlap
    let mut expected_offset = 0u64;
    for e in &entries {
        if e.offset != expected_offset {
            return Err(Error::Format(format!(
                "tensor '{}' offset {} overlaps or leaves a gap (expected {expected_offset})",
                e.name, e.offset
            )));
        }
        expected_offset += 4 * e.shape.iter().product::<usize>() as u64;
    }
    if expected_offset != payload.len() as u64 {
        return Err(Error::Format(format!(
            "manifest declares {expected_offset} payload bytes but file holds {}",
            payload.len()
        )));
    }

    let mut by_name: HashMap<String, Tensor<f32>> = HashMap::with_capacity(entries.len());
    for e in &entries {
        let numel: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let data: Vec<f32> = (0..numel)
            .map(|i| {
                let at = start + 4 * i;
                f32::from_le_bytes(payload[at..at + 4].try_into().expect("bounds checked"))
            })
            .collect();
        let tensor = Tensor::param(&e.shape, data)?;
        if by_name.insert(e.name.clone(), tensor).is_some() {
            return Err(Error::Format(format!("duplicate tensor '{}'", e.name)));
        }
    }

    // assemble a parameter set of the right structure, then fill each slot
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::<f32>::init(&config, &mut rng)?;
    let names = params.names();
    let mut tensors = Vec::with_capacity(names.len());
    for name in &names {
        let tensor = by_name
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing tensor '{name}' in manifest")))?;
        tensors.push(tensor);
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::Format(format!(
            "manifest has unexpected tensor '{extra}'"
        )));
    }
    params.set_tensors(tensors)?;
    Ok((params, config))
}

fn config_line(config: &ModelConfig) -> String {
    format!(
        "config feature_width={} head_count={} stage_count={} sequence_length={} \
         class_count={} ffn_width={} input_frame_dim={} positional_encoding={}",
        config.feature_width,
        config.head_count,
        config.stage_count,
        config.sequence_length,
        config.class_count,
        config.ffn_width(),
        config.input_frame_dim,
        u8::from(config.positional_encoding),
    )
}

fn parse_config_line(line: &str) -> Result<ModelConfig> {
    let mut fields: HashMap<&str, &str> = HashMap::new();
    let mut parts = line.split(' ');
    if parts.next() != Some("config") {
        return Err(Error::Format(format!("bad config line: '{line}'")));
    }
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad config field '{kv}'")))?;
        fields.insert(k, v);
    }
    let get_usize = |key: &str| -> Result<usize> {
        fields
            .get(key)
            .ok_or_else(|| Error::Format(format!("config field '{key}' missing")))?
            .parse()
            .map_err(|e| Error::Format(format!("config field '{key}': {e}")))
    };
    let config = ModelConfig {
        feature_width: get_usize("feature_width")?,
        head_count: get_usize("head_count")?,
        stage_count: get_usize("stage_count")?,
        sequence_length: get_usize("sequence_length")?,
        class_count: get_usize("class_count")?,
        ffn_width: Some(get_usize("ffn_width")?),
        input_frame_dim: get_usize("input_frame_dim")?,
        positional_encoding: get_usize("positional_encoding")? != 0,
    };
    config.validate()?;
    Ok(config)
}
