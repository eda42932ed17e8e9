//! TPV1 persistence for soft prompts and task prompt vectors.
//!
//! Layout (all integers little-endian):
//!
//! | bytes  | content                              |
//! |--------|--------------------------------------|
//! | 0..4   | magic `TPV1`                         |
//! | 4      | version, always 1                    |
//! | 5      | dtype, 1 = f32 little-endian         |
//! | 6..8   | reserved, zero                       |
//! | 8..16  | `prompt_len` as u64                  |
//! | 16..24 | `embed_dim` as u64                   |
//! | 24..32 | reserved, zero                       |
//! | 32..   | `prompt_len * embed_dim` f32, row-major |
//!
//! Provenance lives next to the tensor in a JSON sidecar with the same
//! basename and a `.json` extension.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{first_non_finite, Shape, SoftPrompt, TaskPromptVector};

pub const MAGIC: &[u8; 4] = b"TPV1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32_LE: u8 = 1;
pub const HEADER_LEN: usize = 32;

/// Provenance record stored in the `.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sidecar {
    SoftPrompt {
        init_id: String,
        #[serde(default)]
        task_id: Option<String>,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    },
    TaskPromptVector {
        init_id: String,
        task_ids: Vec<String>,
        #[serde(default)]
        scale_history: Vec<f64>,
        #[serde(default)]
        meta: BTreeMap<String, String>,
    },
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Serializes a tensor into TPV1 bytes. Refuses non-finite payloads.
pub fn encode_tensor(shape: Shape, data: &[f32]) -> Result<Vec<u8>> {
    if data.len() != shape.len() {
        return Err(Error::WeightCount {
            prompt_len: shape.prompt_len,
            embed_dim: shape.embed_dim,
            expected: shape.len(),
            actual: data.len(),
        });
    }
    if let Some(index) = first_non_finite(data) {
        return Err(Error::NonFinite {
            index,
            offset: None,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32_LE);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(shape.prompt_len as u64).to_le_bytes());
    out.extend_from_slice(&(shape.embed_dim as u64).to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses TPV1 bytes. `path` is only used for error messages.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<(Shape, Vec<f32>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotTpv1 {
            path: path.to_path_buf(),
        });
    }
    let bad = |detail: String| Error::BadHeader {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("header truncated to {} bytes", bytes.len())));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("version {} (expected {VERSION})", bytes[4])));
    }
    if bytes[5] != DTYPE_F32_LE {
        return Err(bad(format!("dtype {} (expected {DTYPE_F32_LE})", bytes[5])));
    }
    if bytes[6..8] != [0, 0] || bytes[24..32] != [0; 8] {
        return Err(bad("reserved bytes are not zero".into()));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (rows, cols) = (read_u64(8), read_u64(16));
    if rows == 0 || cols == 0 {
        return Err(bad(format!("zero dimension {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad(format!("dimensions {rows}x{cols} overflow")))?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    if expected != actual {
        return Err(Error::PayloadLengthMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let shape = Shape::new(rows as usize, cols as usize)?;
    let mut data = Vec::with_capacity(shape.len());
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite {
                index,
                offset: Some((HEADER_LEN + index * 4) as u64),
            });
        }
        data.push(v);
    }
    Ok((shape, data))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(path: &Path, shape: Shape, data: &[f32]) -> Result<()> {
    let bytes = encode_tensor(shape, data)?;
    write_atomic(path, &bytes)
}

pub fn read_tensor(path: &Path) -> Result<(Shape, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(sidecar)?;
    json.push(b'\n');
    write_atomic(&sidecar_path(path), &json)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = match fs::read(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::ManifestNotFound { path: side })
        }
        Err(e) => return Err(Error::io(side, e)),
    };
    serde_json::from_slice(&text).map_err(|source| Error::Sidecar { path: side, source })
}

pub fn save_prompt(prompt: &SoftPrompt, path: &Path) -> Result<()> {
    let bytes = encode_tensor(prompt.shape(), prompt.weights())?;
    write_atomic(path, &bytes)?;
    write_sidecar(
        path,
        &Sidecar::SoftPrompt {
            init_id: prompt.init_id().to_string(),
            task_id: prompt.task_id().map(str::to_string),
            meta: prompt.meta.clone(),
        },
    )
}

pub fn load_prompt(path: &Path) -> Result<SoftPrompt> {
    let (shape, data) = read_tensor(path)?;
    match read_sidecar(path)? {
        Sidecar::SoftPrompt {
            init_id,
            task_id,
            meta,
        } => {
            let mut p = SoftPrompt::new(shape.prompt_len, shape.embed_dim, data, init_id)?;
            p.set_task_id(task_id);
            p.meta = meta;
            Ok(p)
        }
        Sidecar::TaskPromptVector { .. } => Err(Error::invalid(format!(
            "{} holds a task prompt vector, not a soft prompt",
            path.display()
        ))),
    }
}

pub fn save_tpv(tpv: &TaskPromptVector, path: &Path) -> Result<()> {
    let bytes = encode_tensor(tpv.shape(), tpv.delta())?;
    write_atomic(path, &bytes)?;
    write_sidecar(
        path,
        &Sidecar::TaskPromptVector {
            init_id: tpv.init_id().to_string(),
            task_ids: tpv.task_ids().to_vec(),
            scale_history: tpv.scale_history.clone(),
            meta: tpv.meta.clone(),
        },
    )
}

pub fn load_tpv(path: &Path) -> Result<TaskPromptVector> {
    let (shape, data) = read_tensor(path)?;
    match read_sidecar(path)? {
        Sidecar::TaskPromptVector {
            init_id,
            task_ids,
            scale_history,
            meta,
        } => {
            let mut t =
                TaskPromptVector::new(shape.prompt_len, shape.embed_dim, data, init_id, task_ids)?;
            t.scale_history = scale_history;
            t.meta = meta;
            Ok(t)
        }
        Sidecar::SoftPrompt { .. } => Err(Error::invalid(format!(
            "{} holds a soft prompt, not a task prompt vector",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_layout() {
        let shape = Shape::new(2, 3).unwrap();
        let bytes = encode_tensor(shape, &[0.0; 6]).unwrap();
        assert_eq!(bytes.len(), 32 + 24);
        assert_eq!(&bytes[..4], b"TPV1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert!(bytes[32..].iter().all(|b| *b == 0));
    }

    #[test]
    fn full_scale_payload_length() {
        let shape = Shape::new(100, 768).unwrap();
        let bytes = encode_tensor(shape, &vec![0.5; shape.len()]).unwrap();
        assert_eq!(bytes.len() - HEADER_LEN, 307_200);
    }

    #[test]
    fn row_major_little_endian() {
        let shape = Shape::new(2, 2).unwrap();
        let bytes = encode_tensor(shape, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(&bytes[32..36], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[40..44], &3.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = encode_tensor(Shape::new(1, 1).unwrap(), &[1.0]).unwrap();
        bytes[0] = b'X';
        let err = decode_tensor(&bytes, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("not a TPV1 file"), "{err}");
    }

    #[test]
    fn rejects_truncation() {
        let bytes = encode_tensor(Shape::new(2, 2).unwrap(), &[1.0; 4]).unwrap();
        let err = decode_tensor(&bytes[..bytes.len() - 1], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
        let err = decode_tensor(&bytes[..20], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::BadHeader { .. }));
    }

    #[test]
    fn rejects_version_and_reserved() {
        let good = encode_tensor(Shape::new(1, 2).unwrap(), &[1.0, 2.0]).unwrap();
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(
            decode_tensor(&b, Path::new("x")),
            Err(Error::BadHeader { .. })
        ));
        let mut b = good.clone();
        b[5] = 2;
        assert!(matches!(
            decode_tensor(&b, Path::new("x")),
            Err(Error::BadHeader { .. })
        ));
        let mut b = good;
        b[30] = 1;
        assert!(matches!(
            decode_tensor(&b, Path::new("x")),
            Err(Error::BadHeader { .. })
        ));
    }

    #[test]
    fn nan_payload_names_offset() {
        let mut bytes = encode_tensor(Shape::new(1, 3).unwrap(), &[1.0, 2.0, 3.0]).unwrap();
        bytes[36..40].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_tensor(&bytes, Path::new("x")).unwrap_err() {
            Error::NonFinite { index, offset } => {
                assert_eq!(index, 1);
                assert_eq!(offset, Some(36));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn refuses_to_encode_inf() {
        let err = encode_tensor(Shape::new(1, 2).unwrap(), &[1.0, f32::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
    }

    #[test]
    fn prompt_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tpv");
        let p = SoftPrompt::new(2, 2, vec![0.1, -0.2, 3.5, 1e-30], "init-3")
            .unwrap()
            .with_task("mnli")
            .with_meta("lambda", "1");
        save_prompt(&p, &path).unwrap();
        assert!(dir.path().join("p.json").exists());
        assert_eq!(load_prompt(&path).unwrap(), p);
    }

    #[test]
    fn tpv_round_trip_keeps_task_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("combo.tpv");
        let mut t = TaskPromptVector::new(
            1,
            2,
            vec![0.25, -1.0],
            "init-0",
            vec!["qnli".into(), "mnli".into()],
        )
        .unwrap();
        t.scale_history.push(0.5);
        save_tpv(&t, &path).unwrap();
        let back = load_tpv(&path).unwrap();
        assert_eq!(back.task_ids(), &["qnli".to_string(), "mnli".to_string()]);
        assert_eq!(back, t);
    }

    #[test]
    fn missing_sidecar_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tpv");
        write_tensor(&path, Shape::new(1, 1).unwrap(), &[1.0]).unwrap();
        let err = load_tpv(&path).unwrap_err();
        assert!(err.to_string().contains("manifest not found"), "{err}");
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tpv");
        save_prompt(&SoftPrompt::zeros(1, 1, "i").unwrap(), &path).unwrap();
        assert!(load_tpv(&path).is_err());
    }
}
