//! Checkpoint container: a single binary file holding the architecture,
//! all parameter tensors, Adam state, and run metadata.
//!
//! Layout: 8-byte magic, little-endian u32 header length, UTF-8 JSON header
//! (version, float width, architecture, step, seed, tensor table, optimizer
//! hyperparameters, metrics), then for each tensor in canonical order its
//! raw little-endian values followed by its Adam first and second moments,
//! and finally a little-endian CRC32 of everything before it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{AdamConfig, AdamState};
use crate::model::{ArchitectureConfig, Localizer, Param, ParameterSet};
use crate::train::metrics::EvalReport;
use crate::{Error, Real, Result, REAL_BITS};

const MAGIC: &[u8; 8] = b"CUELOCKP";
pub const FORMAT_VERSION: u32 = 1;

/// IEEE CRC32 (reflected, polynomial 0xEDB88320), as used by PNG and zip.
pub fn crc32(bytes: &[u8]) -> u32 {
    const TABLE: [u32; 256] = {
        let mut table = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            table[i] = c;
            i += 1;
        }
        table
    };
    let mut c = u32::MAX;
    for &b in bytes {
        c = TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ u32::MAX
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    real_bits: u32,
    architecture: ArchitectureConfig,
    step: u64,
    seed: u64,
    adam: AdamConfig,
    /// Update counts of the per-tensor Adam states, in tensor order.
    adam_t: Vec<u64>,
    tensors: Vec<TensorInfo>,
    metrics: Option<EvalReport>,
}

/// A complete training state: everything needed to run inference or to
/// continue training bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: ArchitectureConfig,
    pub params: ParameterSet,
    pub adam_cfg: AdamConfig,
    /// One state per parameter entry, in canonical order.
    pub adam: Vec<AdamState>,
    /// Optimizer steps taken.
    pub step: u64,
    /// Master seed of the training run.
    pub seed: u64,
    /// Last validation report, if any evaluation ran.
    pub metrics: Option<EvalReport>,
}

fn push_reals(buf: &mut Vec<u8>, vals: &[Real]) {
    for &v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_reals(bytes: &[u8], pos: &mut usize, n: usize) -> Result<Vec<Real>> {
    const W: usize = std::mem::size_of::<Real>();
    let end = *pos + n * W;
    if end > bytes.len() {
        return Err(Error::Corrupt(format!(
            "payload truncated: need {end} bytes, file has {}",
            bytes.len()
        )));
    }
    let out = bytes[*pos..end]
        .chunks_exact(W)
        .map(|c| Real::from_le_bytes(c.try_into().expect("chunk width")))
        .collect();
    *pos = end;
    Ok(out)
}

impl Checkpoint {
    /// Freshly initialized state at step 0.
    pub fn fresh(architecture: ArchitectureConfig, adam_cfg: AdamConfig, seed: u64) -> Result<Self> {
        let params = ParameterSet::init(&architecture, seed)?;
        let adam = params.entries().iter().map(|e| AdamState::new(e.tensor.numel())).collect();
        Ok(Checkpoint { architecture, params, adam_cfg, adam, step: 0, seed, metrics: None })
    }

    /// Inference view of the stored parameters.
    pub fn localizer(&self) -> Localizer {
        Localizer::new(self.architecture.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.adam.len() != self.params.entries().len() {
            return Err(Error::contract(
                "save_checkpoint",
                format!(
                    "{} adam states for {} tensors",
                    self.adam.len(),
                    self.params.entries().len()
                ),
            ));
        }
        let header = Header {
            version: FORMAT_VERSION,
            real_bits: REAL_BITS,
            architecture: self.architecture.clone(),
            step: self.step,
            seed: self.seed,
            adam: self.adam_cfg,
            adam_t: self.adam.iter().map(|s| s.t).collect(),
            tensors: self
                .params
                .entries()
                .iter()
                .map(|e| TensorInfo { name: e.name.clone(), shape: e.tensor.shape().to_vec() })
                .collect(),
            metrics: self.metrics.clone(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_json);
        for (entry, st) in self.params.entries().iter().zip(&self.adam) {
            push_reals(&mut buf, entry.tensor.data());
            push_reals(&mut buf, &st.m);
            push_reals(&mut buf, &st.v);
        }
        let crc = crc32(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::Corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::Corrupt("bad magic; not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32(body);
        if stored != actual {
            return Err(Error::Corrupt(format!(
                "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
            )));
        }
        let header_len =
            u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12 + header_len;
        if header_end > body.len() {
            return Err(Error::Corrupt(format!("header length {header_len} exceeds file")));
        }
        let header: Header = serde_json::from_slice(&bytes[12..header_end])
            .map_err(|e| Error::Corrupt(format!("header parse: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!(
                "format version {} unsupported (this build reads {FORMAT_VERSION})",
                header.version
            )));
        }
        if header.real_bits != REAL_BITS {
            return Err(Error::Corrupt(format!(
                "checkpoint holds {}-bit floats, this build uses {REAL_BITS}-bit",
                header.real_bits
            )));
        }
        if header.adam_t.len() != header.tensors.len() {
            return Err(Error::Corrupt(format!(
                "{} adam counters for {} tensors",
                header.adam_t.len(),
                header.tensors.len()
            )));
        }
        let mut pos = header_end;
        let mut entries = Vec::with_capacity(header.tensors.len());
        let mut adam = Vec::with_capacity(header.tensors.len());
        for (info, &t) in header.tensors.iter().zip(&header.adam_t) {
            let numel: usize = info.shape.iter().product();
            let data = read_reals(body, &mut pos, numel)?;
            let tensor = crate::autograd::Tensor::new(info.shape.clone(), data)
                .map_err(|e| Error::Corrupt(format!("tensor {}: {e}", info.name)))?;
            entries.push(Param { name: info.name.clone(), tensor });
            let m = read_reals(body, &mut pos, numel)?;
            let v = read_reals(body, &mut pos, numel)?;
            adam.push(AdamState { m, v, t });
        }
        if pos != body.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing payload bytes",
                body.len() - pos
            )));
        }
        let ckpt = Checkpoint {
            architecture: header.architecture,
            params: ParameterSet::from_entries(entries),
            adam_cfg: header.adam,
            adam,
            step: header.step,
            seed: header.seed,
            metrics: header.metrics,
        };
        ckpt.check_shapes()?;
        Ok(ckpt)
    }

    /// Verify the stored tensors against the embedded architecture by
    /// binding them to a scratch tape.
    fn check_shapes(&self) -> Result<()> {
        let mut tape = crate::autograd::Tape::new();
        crate::model::bind_params(&mut tape, &self.architecture, &self.params)
            .map(|_| ())
            .map_err(|e| Error::Corrupt(format!("tensor table does not fit architecture: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::ingestion(path, format!("read checkpoint: {e}")))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_checkpoint() -> Checkpoint {
        let mut ck =
            Checkpoint::fresh(ArchitectureConfig::tiny(), AdamConfig::default(), 11).unwrap();
        // Touch the optimizer state so the round trip covers nonzero moments.
        ck.adam[0].m[0] = 0.125;
        ck.adam[0].v[0] = 0.5;
        ck.adam[0].t = 3;
        ck.step = 3;
        ck
    }

    #[test]
    fn crc32_reference_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = tiny_checkpoint();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params.max_abs_diff(&ck.params).unwrap(), 0.0);
        // Byte-stable: serializing again produces the same file.
        assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = tiny_checkpoint().to_bytes().unwrap();
        for cut in [3, 11, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Corrupt(_)) => {}
                other => panic!("cut {cut}: expected corrupt, got {other:?}"),
            }
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = tiny_checkpoint().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Corrupt(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let bytes = tiny_checkpoint().to_bytes().unwrap();
        // Rewrite the version field in the JSON header and re-seal the file.
        let text = String::from_utf8(bytes[12..].to_vec()).ok();
        let _ = text;
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[12..12 + header_len]).unwrap();
        let bumped = header.replacen("\"version\":1", "\"version\":9", 1);
        assert_ne!(bumped, header, "version field present");
        let mut out = Vec::new();
        out.extend_from_slice(&bytes[..8]);
        out.extend_from_slice(&(bumped.len() as u32).to_le_bytes());
        out.extend_from_slice(bumped.as_bytes());
        out.extend_from_slice(&bytes[12 + header_len..bytes.len() - 4]);
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        match Checkpoint::from_bytes(&out) {
            Err(Error::Corrupt(msg)) => assert!(msg.contains("version 9")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut bytes = tiny_checkpoint().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn architecture_shape_mismatch_rejected() {
        // Tensors from the desk architecture under a tiny header: the
        // payload parses but the shape audit must fail.
        let mut ck = tiny_checkpoint();
        ck.params = ParameterSet::init(&ArchitectureConfig::desk(), 1).unwrap();
        ck.adam = ck
            .params
            .entries()
            .iter()
            .map(|e| AdamState::new(e.tensor.numel()))
            .collect();
        let bytes = ck.to_bytes().unwrap();
        match Checkpoint::from_bytes(&bytes) {
            Err(Error::Corrupt(msg)) => assert!(msg.contains("architecture")),
            other => panic!("expected shape audit failure, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_ingestion_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Checkpoint::load(&dir.path().join("absent.ckpt")),
            Err(Error::Ingestion { .. })
        ));
    }
}
