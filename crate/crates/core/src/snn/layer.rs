use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Feedforward,
    Recurrent,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Feedforward => "feedforward",
            LayerKind::Recurrent => "recurrent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "feedforward" => Ok(LayerKind::Feedforward),
            "recurrent" => Ok(LayerKind::Recurrent),
            other => Err(Error::Format(format!("unknown layer kind {other:?}"))),
        }
    }
}

/// Per-neuron leak factors and thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronParams<F = f32> {
    /// Synaptic-current leak, each in (0, 1).
    pub alpha: Vec<F>,
    /// Membrane leak, each in (0, 1).
    pub beta: Vec<F>,
    /// Firing threshold; learned, so any finite value.
    pub theta: Vec<F>,
}

impl<F: Real> NeuronParams<F> {
    pub fn uniform(n: usize, alpha: F, beta: F, theta: F) -> Self {
        Self {
            alpha: vec![alpha; n],
            beta: vec![beta; n],
            theta: vec![theta; n],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.theta.len();
        check_len("neuron alpha", n, self.alpha.len())?;
        check_len("neuron beta", n, self.beta.len())?;
        for (i, (&a, &b)) in self.alpha.iter().zip(&self.beta).enumerate() {
            let open = |v: F| v > F::zero() && v < F::one();
            if !open(a) || !open(b) {
                return Err(Error::contract(format!(
                    "neuron {i}: leak factors alpha={a}, beta={b} must lie in (0, 1)"
                )));
            }
        }
        if let Some(i) = self.theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("threshold of neuron {i}")));
        }
        Ok(())
    }
}

/// Synaptic currents, membrane potentials and spike flags of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState<F = f32> {
    pub syn_current: Vec<F>,
    pub membrane: Vec<F>,
    /// Exactly 0 or 1.
    pub spikes: Vec<F>,
}

impl<F: Real> LayerState<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            syn_current: vec![F::zero(); n],
            membrane: vec![F::zero(); n],
            spikes: vec![F::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn reset(&mut self) {
        for v in self
            .syn_current
            .iter_mut()
            .chain(self.membrane.iter_mut())
            .chain(self.spikes.iter_mut())
        {
            *v = F::zero();
        }
    }
}

/// Parameters of one bias-free spiking layer.
///
/// `w_in` is `N x d_in`. For the first layer of a subnetwork it projects the
/// continuous input into an injected current; for deeper layers it carries
/// the spikes of the layer below.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikingLayer<F = f32> {
    pub kind: LayerKind,
    pub w_in: Matrix<F>,
    /// `N x N`, present iff `kind` is recurrent.
    pub w_rec: Option<Matrix<F>>,
    pub params: NeuronParams<F>,
}

impl<F: Real> SpikingLayer<F> {
    pub fn size(&self) -> usize {
        self.w_in.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w_in.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        check_len("layer parameters", n, self.params.len())?;
        self.params.validate()?;
        match (self.kind, &self.w_rec) {
            (LayerKind::Recurrent, Some(w)) => {
                if w.rows() != n || w.cols() != n {
                    return Err(Error::contract(format!(
                        "recurrent matrix is {}x{}, layer has {n} neurons",
                        w.rows(),
                        w.cols()
                    )));
                }
            }
            (LayerKind::Feedforward, None) => {}
            (LayerKind::Recurrent, None) => {
                return Err(Error::contract("recurrent layer without recurrent weights"))
            }
            (LayerKind::Feedforward, Some(_)) => {
                return Err(Error::contract("feedforward layer with recurrent weights"))
            }
        }
        if !self.w_in.is_finite() || self.w_rec.as_ref().is_some_and(|w| !w.is_finite()) {
            return Err(Error::NonFinite("layer weights".into()));
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> SpikingLayer<G> {
        let c = |v: F| G::lit(v.as_f64());
        SpikingLayer {
            kind: self.kind,
            w_in: self.w_in.map(c),
            w_rec: self.w_rec.as_ref().map(|w| w.map(c)),
            params: NeuronParams {
                alpha: self.params.alpha.iter().map(|&v| c(v)).collect(),
                beta: self.params.beta.iter().map(|&v| c(v)).collect(),
                theta: self.params.theta.iter().map(|&v| c(v)).collect(),
            },
        }
    }
}

/// Bias-free linear map from the last layer's spikes to the outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout<F = f32> {
    /// `O x M`.
    pub w_out: Matrix<F>,
}

impl<F: Real> Readout<F> {
    pub fn outputs(&self) -> usize {
        self.w_out.rows()
    }

    pub fn cast<G: Real>(&self) -> Readout<G> {
        Readout {
            w_out: self.w_out.map(|v| G::lit(v.as_f64())),
        }
    }
}
