//! [`NetworkSpec`] serialization on top of [`Archive`].
//!
//! Manifest keys describe the topology (`<net>.layers`, `<net>.layerN.kind`,
//! `<net>.layerN.size`, `<net>.inputs`, `<net>.outputs`); row-major weight
//! blocks, per-neuron parameter blocks and scale vectors follow as tensors.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::layer::{LayerKind, NeuronParams, Readout, SpikingLayer};
use super::network::{ControllerVariant, Mode, NetworkSpec, SubNetwork};

pub const NETWORK_FORMAT: &str = "neuroflap-network";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

pub(crate) fn put_subnetwork(a: &mut Archive, prefix: &str, net: &SubNetwork<f32>) {
    a.set(&format!("{prefix}.inputs"), net.inputs());
    a.set(&format!("{prefix}.outputs"), net.outputs());
    a.set(&format!("{prefix}.layers"), net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let p = format!("{prefix}.layer{l}");
        let n = layer.size();
        a.set(&format!("{p}.kind"), layer.kind.as_str());
        a.set(&format!("{p}.size"), n);
        a.put_f32(&format!("{p}.w_in"), &[n, layer.inputs()], layer.w_in.as_slice());
        if let Some(w) = &layer.w_rec {
            a.put_f32(&format!("{p}.w_rec"), &[n, n], w.as_slice());
        }
        a.put_f32(&format!("{p}.alpha"), &[n], &layer.params.alpha);
        a.put_f32(&format!("{p}.beta"), &[n], &layer.params.beta);
        a.put_f32(&format!("{p}.theta"), &[n], &layer.params.theta);
    }
    let w = &net.readout.w_out;
    a.put_f32(&format!("{prefix}.readout.w_out"), &[w.rows(), w.cols()], w.as_slice());
    a.put_f32(&format!("{prefix}.input_scale"), &[net.inputs()], &net.input_scale);
    a.put_f32(&format!("{prefix}.output_scale"), &[net.outputs()], &net.output_scale);
}

pub(crate) fn get_subnetwork(a: &Archive, prefix: &str) -> Result<SubNetwork<f32>> {
    let inputs: usize = a.parse_key(&format!("{prefix}.inputs"))?;
    let outputs: usize = a.parse_key(&format!("{prefix}.outputs"))?;
    let count: usize = a.parse_key(&format!("{prefix}.layers"))?;
    let mut layers = Vec::with_capacity(count);
    let mut width = inputs;
    for l in 0..count {
        let p = format!("{prefix}.layer{l}");
        let kind = LayerKind::parse(a.require(&format!("{p}.kind"))?)?;
        let n: usize = a.parse_key(&format!("{p}.size"))?;
        let w_in = Matrix::from_vec(n, width, a.f32(&format!("{p}.w_in"), &[n, width])?)?;
        let w_rec = match kind {
            LayerKind::Recurrent => Some(Matrix::from_vec(
                n,
                n,
                a.f32(&format!("{p}.w_rec"), &[n, n])?,
            )?),
            LayerKind::Feedforward => {
                if a.has_tensor(&format!("{p}.w_rec")) {
                    return Err(Error::Format(format!("{p}: feedforward layer with w_rec")));
                }
                None
            }
        };
        let params = NeuronParams {
            alpha: a.f32(&format!("{p}.alpha"), &[n])?,
            beta: a.f32(&format!("{p}.beta"), &[n])?,
            theta: a.f32(&format!("{p}.theta"), &[n])?,
        };
        layers.push(SpikingLayer {
            kind,
            w_in,
            w_rec,
            params,
        });
        width = n;
    }
    let w_out = Matrix::from_vec(
        outputs,
        width,
        a.f32(&format!("{prefix}.readout.w_out"), &[outputs, width])?,
    )?;
    let net = SubNetwork {
        layers,
        readout: Readout { w_out },
        input_scale: a.f32(&format!("{prefix}.input_scale"), &[inputs])?,
        output_scale: a.f32(&format!("{prefix}.output_scale"), &[outputs])?,
    };
    net.validate()?;
    Ok(net)
}

impl NetworkSpec {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(NETWORK_FORMAT, NETWORK_FORMAT_VERSION);
        a.set("numeric-format", "ieee754-binary32");
        a.set("mode", self.mode.as_str());
        a.set("controller-variant", self.variant.as_str());
        put_subnetwork(&mut a, "estimator", &self.estimator);
        put_subnetwork(&mut a, "controller", &self.controller);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_format(NETWORK_FORMAT, NETWORK_FORMAT_VERSION)?;
        let spec = NetworkSpec {
            estimator: get_subnetwork(a, "estimator")?,
            controller: get_subnetwork(a, "controller")?,
            variant: ControllerVariant::parse(a.require("controller-variant")?)?,
            mode: Mode::parse(a.require("mode")?)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        self.to_archive().to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_archive(&Archive::parse(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }

    /// SHA-256 of the canonical serialization, lowercase hex.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
