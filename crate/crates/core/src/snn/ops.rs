//! Equation-level CUBA-LIF operations.
//!
//! These functions are the reference semantics of one neuron-layer update.
//! The runtime in [`super::network`] uses the column-sweep kernels at the
//! bottom of this file, which perform the same floating-point operations in
//! the same order, so both paths agree bit for bit.
//!
//! Per tick, a layer holding `(I[t], V[t], S[t])` advances as
//!
//! ```text
//! V[t+1] = beta * V[t] * (1 - S[t]) + I[t]
//! I[t+1] = alpha * I[t] + W_in S_ff + W_rec S[t] + U[t]
//! S[t+1] = H(V[t+1] - theta),  H(0) = 1
//! ```
//!
//! All weighted sums accumulate presynaptic columns in ascending index order.

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

use super::layer::{LayerState, SpikingLayer};

pub(crate) fn ensure_binary<F: Real>(what: &str, spikes: &[F]) -> Result<()> {
    if let Some((i, v)) = spikes
        .iter()
        .enumerate()
        .find(|(_, &v)| v != F::zero() && v != F::one())
    {
        return Err(Error::contract(format!(
            "{what}: spike[{i}] = {v} is not binary"
        )));
    }
    Ok(())
}

fn matvec<F: Real>(context: &'static str, w: &Matrix<F>, x: &[F]) -> Result<Vec<F>> {
    check_len(context, w.cols(), x.len())?;
    let mut out = vec![F::zero(); w.rows()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = F::zero();
        for (&wij, &xj) in w.row(i).iter().zip(x) {
            acc += wij * xj;
        }
        *o = acc;
    }
    Ok(out)
}

/// Injected current `j[t] = W_in x[t]` for a continuous (already scaled) input.
pub fn inject_input<F: Real>(w_in: &Matrix<F>, x: &[F]) -> Result<Vec<F>> {
    matvec("inject_input", w_in, x)
}

/// Next synaptic current `I[t+1]`.
///
/// `ff_spikes` drives `w_in` for layers fed by a spiking layer; layers fed by
/// continuous signals pass `None` there and supply `injected = W_in x` instead.
/// `rec_spikes` is the layer's own previous spike vector and is required
/// exactly when the layer is recurrent.
pub fn step_synaptic_current<F: Real>(
    state: &LayerState<F>,
    ff_spikes: Option<&[F]>,
    rec_spikes: Option<&[F]>,
    injected: Option<&[F]>,
    layer: &SpikingLayer<F>,
) -> Result<Vec<F>> {
    let n = layer.size();
    check_len("step_synaptic_current state", n, state.len())?;

    let ff = match ff_spikes {
        Some(s) => {
            ensure_binary("feedforward spikes", s)?;
            Some(matvec("step_synaptic_current ff", &layer.w_in, s)?)
        }
        None => None,
    };
    let rec = match (rec_spikes, &layer.w_rec) {
        (Some(s), Some(w)) => {
            ensure_binary("recurrent spikes", s)?;
            Some(matvec("step_synaptic_current rec", w, s)?)
        }
        (None, None) => None,
        (Some(_), None) => {
            return Err(Error::contract(
                "recurrent spikes supplied to a feedforward layer",
            ))
        }
        (None, Some(_)) => {
            return Err(Error::contract("recurrent layer needs its previous spikes"))
        }
    };
    if let Some(u) = injected {
        check_len("step_synaptic_current injected", n, u.len())?;
    }

    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = layer.params.alpha[i] * state.syn_current[i];
        if let Some(ff) = &ff {
            v += ff[i];
        }
        if let Some(rec) = &rec {
            v += rec[i];
        }
        if let Some(u) = injected {
            v += u[i];
        }
        next.push(v);
    }
    Ok(next)
}

/// Next membrane potential with hard reset: `V[t+1] = beta V[t] (1 - S[t]) + I[t]`.
pub fn step_membrane<F: Real>(state: &LayerState<F>, layer: &SpikingLayer<F>) -> Result<Vec<F>> {
    let n = layer.size();
    check_len("step_membrane", n, state.len())?;
    let beta = &layer.params.beta;
    Ok((0..n)
        .map(|i| membrane_update(beta[i], state.membrane[i], state.spikes[i], state.syn_current[i]))
        .collect())
}

#[inline(always)]
pub(crate) fn membrane_update<F: Real>(beta: F, v: F, s: F, i: F) -> F {
    beta * v * (F::one() - s) + i
}

/// Heaviside spike emission, `S = 1` iff `V >= theta`.
pub fn fire<F: Real>(membrane: &[F], theta: &[F]) -> Result<Vec<F>> {
    check_len("fire", theta.len(), membrane.len())?;
    membrane
        .iter()
        .zip(theta)
        .map(|(&v, &th)| {
            if v.is_nan() {
                Err(Error::contract("NaN membrane potential"))
            } else {
                Ok(spike(v, th))
            }
        })
        .collect()
}

#[inline(always)]
pub(crate) fn spike<F: Real>(v: F, theta: F) -> F {
    if v >= theta {
        F::one()
    } else {
        F::zero()
    }
}

/// Bias-free linear readout of a spike vector.
pub fn readout<F: Real>(w_out: &Matrix<F>, spikes: &[F]) -> Result<Vec<F>> {
    ensure_binary("readout spikes", spikes)?;
    matvec("readout", w_out, spikes)
}

/// Ascending indices of the neurons that fired.
pub fn active_set<F: Real>(spikes: &[F]) -> Vec<usize> {
    spikes
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == F::one())
        .map(|(j, _)| j)
        .collect()
}

/// Sum of the columns of `w` selected by `active`.
///
/// With `active` in ascending order this equals `w · s` bit for bit.
pub fn event_driven_accumulate<F: Real>(w: &Matrix<F>, active: &[usize]) -> Result<Vec<F>> {
    if let Some(&j) = active.iter().find(|&&j| j >= w.cols()) {
        return Err(Error::contract(format!(
            "active index {j} out of range for {} presynaptic neurons",
            w.cols()
        )));
    }
    let mut out = vec![F::zero(); w.rows()];
    for &j in active {
        for (i, o) in out.iter_mut().enumerate() {
            *o += w.get(i, j);
        }
    }
    Ok(out)
}

/// Column-major copy of a weight matrix, laid out so that presynaptic
/// column `j` is contiguous.
#[derive(Clone, Debug)]
pub(crate) struct ColMajor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> ColMajor<F> {
    pub(crate) fn from_matrix(w: &Matrix<F>) -> Self {
        let (rows, cols) = (w.rows(), w.cols());
        let mut data = vec![F::zero(); rows * cols];
        for i in 0..rows {
            for (j, &v) in w.row(i).iter().enumerate() {
                data[j * rows + i] = v;
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub(crate) fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub(crate) fn column(&self, j: usize) -> &[F] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

/// `acc = W x` by sweeping every column in ascending order.
#[inline]
pub(crate) fn dense_sweep<F: Real>(acc: &mut [F], w: &ColMajor<F>, x: &[F]) {
    debug_assert_eq!(acc.len(), w.rows);
    debug_assert_eq!(x.len(), w.cols);
    acc.iter_mut().for_each(|a| *a = F::zero());
    for (j, &xj) in x.iter().enumerate() {
        for (a, &wij) in acc.iter_mut().zip(w.column(j)) {
            *a += wij * xj;
        }
    }
}

/// `acc = sum of columns in active`, ascending.
#[inline]
pub(crate) fn event_sweep<F: Real>(acc: &mut [F], w: &ColMajor<F>, active: &[usize]) {
    debug_assert_eq!(acc.len(), w.rows);
    acc.iter_mut().for_each(|a| *a = F::zero());
    for &j in active {
        for (a, &wij) in acc.iter_mut().zip(w.column(j)) {
            *a += wij;
        }
    }
}

/// Refill `active` with the indices of `spikes` that are set.
#[inline]
pub(crate) fn collect_active<F: Real>(spikes: &[F], active: &mut Vec<usize>) {
    active.clear();
    for (j, &s) in spikes.iter().enumerate() {
        if s == F::one() {
            active.push(j);
        }
    }
}
