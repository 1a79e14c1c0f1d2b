//! Static C export of a [`NetworkSpec`] and differential validation of the
//! exported sources against the reference runtime.

mod emit;
pub mod harness;

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::snn::{ControllerVariant, Mode, NetworkSpec};

pub use emit::{emit, hex_float};
pub use harness::{
    compare_traces, harness_inputs, read_harness_input, read_harness_output, reference_trace,
    validate_export, write_harness_input, write_harness_output, Harness, Trace, ValidationReport,
    ValidationStatus,
};

pub const EXPORT_FORMAT: &str = "neuroflap-export";
pub const EXPORT_FORMAT_VERSION: u32 = 1;
pub const HEADER_FILE: &str = "nf_net.h";
pub const KERNEL_FILE: &str = "nf_net.c";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const NUMERIC_FORMAT: &str = "ieee754-binary32";

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance record binding generated sources to the spec they came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub format_version: u32,
    pub spec_hash: String,
    pub mode: Mode,
    pub numeric_format: String,
    pub variant: ControllerVariant,
    pub header_sha256: String,
    pub kernel_sha256: String,
}

impl Manifest {
    fn new(spec: &NetworkSpec, mode: Mode, header: &str, kernel: &str) -> Self {
        Self {
            format_version: EXPORT_FORMAT_VERSION,
            spec_hash: spec.content_hash(),
            mode,
            numeric_format: NUMERIC_FORMAT.into(),
            variant: spec.variant,
            header_sha256: sha256_hex(header),
            kernel_sha256: sha256_hex(kernel),
        }
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "format: {EXPORT_FORMAT}\n\
             format_version: {}\n\
             spec_hash: {}\n\
             mode: {}\n\
             numeric_format: {}\n\
             controller_variant: {}\n\
             header: {HEADER_FILE}\n\
             header_sha256: {}\n\
             kernel: {KERNEL_FILE}\n\
             kernel_sha256: {}\n",
            self.format_version,
            self.spec_hash,
            self.mode.as_str(),
            self.numeric_format,
            self.variant.as_str(),
            self.header_sha256,
            self.kernel_sha256,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("manifest line {}: expected `key: value`", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("manifest lacks {k:?}")))
        };
        if get("format")? != EXPORT_FORMAT {
            return Err(Error::Format(format!("not an export manifest: {:?}", get("format")?)));
        }
        let format_version: u32 = get("format_version")?
            .parse()
            .map_err(|_| Error::Format("manifest format_version is not an integer".into()))?;
        if format_version != EXPORT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported export format version {format_version}")));
        }
        Ok(Self {
            format_version,
            spec_hash: get("spec_hash")?.into(),
            mode: Mode::parse(get("mode")?)?,
            numeric_format: get("numeric_format")?.into(),
            variant: ControllerVariant::parse(get("controller_variant")?)?,
            header_sha256: get("header_sha256")?.into(),
            kernel_sha256: get("kernel_sha256")?.into(),
        })
    }
}

/// Generated declarations, definitions and manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportArtifact {
    pub header_text: String,
    pub kernel_text: String,
    pub manifest: Manifest,
}

impl ExportArtifact {
    /// Reject sources edited after emission, or a manifest that names a
    /// different spec than `spec`.
    pub fn verify(&self, spec: &NetworkSpec) -> Result<()> {
        self.verify_sources()?;
        let actual = spec.content_hash();
        if self.manifest.spec_hash != actual {
            return Err(Error::Format(format!(
                "artifact was generated from spec {}, not {actual}",
                self.manifest.spec_hash
            )));
        }
        Ok(())
    }

    /// Check the source hashes recorded in the manifest.
    pub fn verify_sources(&self) -> Result<()> {
        if sha256_hex(&self.header_text) != self.manifest.header_sha256
            || sha256_hex(&self.kernel_text) != self.manifest.kernel_sha256
        {
            return Err(Error::Format("generated sources do not match their manifest".into()));
        }
        Ok(())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            (HEADER_FILE, &self.header_text),
            (KERNEL_FILE, &self.kernel_text),
            (MANIFEST_FILE, &self.manifest.to_text()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Load a written artifact and check its source hashes.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let artifact = Self {
            header_text: read(HEADER_FILE)?,
            kernel_text: read(KERNEL_FILE)?,
            manifest: Manifest::parse(&read(MANIFEST_FILE)?)?,
        };
        artifact.verify_sources()?;
        Ok(artifact)
    }
}
