//! Plug-in interface for pretrained encoders and the binary feature format
//! they exchange: `L: u32`, `d: u32`, then `L * d` row-major `f32`, all
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use ndarray::Array2;

use super::{FeatureSequence, Modality};
use crate::error::{Error, Result};

/// Anything that turns an image reference or a caption into features.
pub trait FeatureAdapter: Send + Sync {
    fn encode_image(&self, image_ref: &str) -> Result<FeatureSequence>;
    fn encode_text(&self, caption: &str) -> Result<FeatureSequence>;
}

pub fn write_features<W: Write>(mut w: W, features: &FeatureSequence) -> std::io::Result<()> {
    w.write_all(&(features.len() as u32).to_le_bytes())?;
    w.write_all(&(features.width() as u32).to_le_bytes())?;
    for v in features.values().iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R, modality: Modality) -> Result<FeatureSequence> {
    let mut word = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut word)
            .map_err(|e| Error::Adapter(format!("truncated feature header: {e}")))?;
        Ok(u32::from_le_bytes(word))
    };
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Adapter("feature dimensions overflow".into()))?;
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Adapter(format!("expected {rows}x{cols} values: {e}")))?;
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let values = Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::Adapter(e.to_string()))?;
    FeatureSequence::new(values, modality)
}

pub fn write_feature_file(path: &Path, features: &FeatureSequence) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_features(&mut w, features).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: &Path, modality: Modality) -> Result<FeatureSequence> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(file), modality)
}

/// Runs an external encoder once per input.
///
/// Images: `<program> <args..> image <image_ref>`.
/// Captions: `<program> <args..> text`, caption on stdin.
/// Either way the features are read from stdout.
#[derive(Debug, Clone)]
pub struct CommandAdapter {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub expected_width: Option<usize>,
}

impl CommandAdapter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        CommandAdapter {
            program: program.into(),
            args: Vec::new(),
            expected_width: None,
        }
    }

    fn run(&self, mode: &str, arg: Option<&str>, stdin: Option<&str>, modality: Modality) -> Result<FeatureSequence> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).arg(mode);
        if let Some(a) = arg {
            cmd.arg(a);
        }
        cmd.stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::Adapter(format!("spawn {}: {e}", self.program.display())))?;
        if let Some(text) = stdin {
            let mut pipe = child.stdin.take().expect("stdin is piped");
            pipe.write_all(text.as_bytes())
                .map_err(|e| Error::Adapter(format!("write caption: {e}")))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Adapter(e.to_string()))?;
        if !out.status.success() {
            return Err(Error::Adapter(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let features = read_features(out.stdout.as_slice(), modality)?;
        if let Some(w) = self.expected_width {
            if features.width() != w {
                return Err(Error::Adapter(format!(
                    "adapter produced width {}, expected {w}",
                    features.width()
                )));
            }
        }
        Ok(features)
    }
}

impl FeatureAdapter for CommandAdapter {
    fn encode_image(&self, image_ref: &str) -> Result<FeatureSequence> {
        self.run("image", Some(image_ref), None, Modality::Visual)
    }

    fn encode_text(&self, caption: &str) -> Result<FeatureSequence> {
        self.run("text", None, Some(caption), Modality::Textual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binary_layout() {
        let f = FeatureSequence::new(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]], Modality::Visual).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 4);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(&buf[8..12], &1.0f32.to_le_bytes());
        assert_eq!(read_features(buf.as_slice(), Modality::Visual).unwrap(), f);
    }

    #[test]
    fn rejects_truncated_and_non_finite() {
        let mut buf = Vec::new();
        buf.extend(1u32.to_le_bytes());
        buf.extend(2u32.to_le_bytes());
        buf.extend(1.0f32.to_le_bytes());
        assert!(read_features(buf.as_slice(), Modality::Textual).is_err());
        buf.extend(f32::NAN.to_le_bytes());
        assert!(matches!(
            read_features(buf.as_slice(), Modality::Textual),
            Err(Error::NonFinite(_))
        ));
        let mut empty = Vec::new();
        empty.extend(0u32.to_le_bytes());
        empty.extend(4u32.to_le_bytes());
        assert!(read_features(empty.as_slice(), Modality::Textual).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn command_adapter_reads_stdout() {
        use std::os::unix::fs::PermissionsExt;

        let dir = tempfile::tempdir().unwrap();
        let feat = dir.path().join("f.bin");
        let f = FeatureSequence::new(array![[0.25, -1.0]], Modality::Textual).unwrap();
        write_feature_file(&feat, &f).unwrap();
        let script = dir.path().join("enc.sh");
        std::fs::write(
            &script,
            format!("#!/bin/sh\ncat > /dev/null\ncat {}\n", feat.display()),
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

        let mut adapter = CommandAdapter::new(&script);
        let got = adapter.encode_text("কিছু একটা").unwrap();
        assert_eq!(got.values(), f.values());
        assert_eq!(got.modality(), Modality::Textual);
        let img = adapter.encode_image("x.png").unwrap();
        assert_eq!(img.modality(), Modality::Visual);

        adapter.expected_width = Some(3);
        assert!(adapter.encode_text("x").is_err());
    }
}
