//! Surrogate-gradient backpropagation through time for spiking subnetworks.
//!
//! The forward pass is the inference runtime itself, with every layer's
//! `(I, V, S)` recorded per tick. The backward pass walks ticks in reverse
//! and layers top-down, replacing `dS/dV` with the surrogate and treating the
//! reset gate `1 - S` as a constant.

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::snn::{Mode, SubNetwork, SubRuntime};

use super::loss::objective_grad;
use super::model::{GradConfig, Trainable};

/// Stand-in for the derivative of the spike step: `1 / (1 + kappa (v - theta)^2)`.
pub fn surrogate_grad<F: Real>(v: F, theta: F, kappa: F) -> F {
    let d = v - theta;
    F::one() / (F::one() + kappa * d * d)
}

/// States of one layer over a window, row `k` holding tick `k`.
#[derive(Clone, Debug)]
pub struct LayerTrace<F> {
    pub syn_current: Vec<F>,
    pub membrane: Vec<F>,
    pub spikes: Vec<F>,
    active: Vec<u32>,
    active_ptr: Vec<usize>,
}

impl<F> LayerTrace<F> {
    fn active(&self, k: usize) -> &[u32] {
        &self.active[self.active_ptr[k]..self.active_ptr[k + 1]]
    }

    /// Total spikes over the window.
    pub fn spike_total(&self) -> usize {
        self.active.len()
    }
}

/// Recorded forward pass of a subnetwork.
#[derive(Clone, Debug)]
pub struct SnnTrace<F> {
    pub steps: usize,
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerTrace<F>>,
    /// Scaled readout, `T x O`.
    pub outputs: Matrix<F>,
}

/// Run `net` from zero state over scaled inputs and record every state.
pub fn forward_record<F: Real>(net: &SubNetwork<F>, x: &Matrix<F>) -> Result<SnnTrace<F>> {
    check_len("training input width", net.inputs(), x.cols())?;
    let t = x.rows();
    let mut rt = SubRuntime::new(net, Mode::EventDriven)?;
    let sizes: Vec<usize> = net.layers.iter().map(|l| l.size()).collect();
    let mut layers: Vec<LayerTrace<F>> = sizes
        .iter()
        .map(|&n| LayerTrace {
            syn_current: Vec::with_capacity(t * n),
            membrane: Vec::with_capacity(t * n),
            spikes: Vec::with_capacity(t * n),
            active: Vec::new(),
            active_ptr: vec![0],
        })
        .collect();
    let o = net.outputs();
    let mut outputs = Vec::with_capacity(t * o);
    for k in 0..t {
        outputs.extend_from_slice(rt.step_scaled(x.row(k))?);
        for (rec, lr) in layers.iter_mut().zip(&rt.layers) {
            rec.syn_current.extend_from_slice(&lr.state.syn_current);
            rec.membrane.extend_from_slice(&lr.state.membrane);
            rec.spikes.extend_from_slice(&lr.state.spikes);
            rec.active.extend(lr.active.iter().map(|&j| j as u32));
            rec.active_ptr.push(rec.active.len());
        }
    }
    Ok(SnnTrace {
        steps: t,
        sizes,
        layers,
        outputs: Matrix::from_vec(t, o, outputs)?,
    })
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct LayerSlots {
    pub w_in: Range<usize>,
    pub w_rec: Option<Range<usize>>,
    pub alpha: Range<usize>,
    pub beta: Range<usize>,
    pub theta: Range<usize>,
}

pub(crate) fn param_slots<F: Real>(net: &SubNetwork<F>) -> (Vec<LayerSlots>, Range<usize>) {
    let mut at = 0;
    let mut take = |n: usize| {
        let r = at..at + n;
        at += n;
        r
    };
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let n = l.size();
            LayerSlots {
                w_in: take(n * l.inputs()),
                w_rec: l.w_rec.as_ref().map(|_| take(n * n)),
                alpha: take(n),
                beta: take(n),
                theta: take(n),
            }
        })
        .collect();
    let w_out = take(net.readout.w_out.len());
    (layers, w_out)
}

#[inline]
fn axpy<F: Real>(a: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Column-major accumulator: column `j` is contiguous.
struct ColGrad<F> {
    rows: usize,
    data: Vec<F>,
}

impl<F: Real> ColGrad<F> {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            data: vec![F::zero(); rows * cols],
        }
    }

    fn col(&mut self, j: usize) -> &mut [F] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Scatter into a row-major slice.
    fn write_row_major(&self, out: &mut [F]) {
        let cols = self.data.len() / self.rows.max(1);
        for j in 0..cols {
            for i in 0..self.rows {
                out[i * cols + j] = self.data[j * self.rows + i];
            }
        }
    }
}

/// Gradient of the loss whose output gradient is `gy` (`T x O`, scaled
/// units), in [`Trainable::params`] order.
pub fn backward<F: Real>(
    net: &SubNetwork<F>,
    x: &Matrix<F>,
    trace: &SnnTrace<F>,
    gy: &Matrix<F>,
    kappa: F,
) -> Result<Vec<F>> {
    let t = trace.steps;
    check_len("input steps", t, x.rows())?;
    check_len("output gradient steps", t, gy.rows())?;
    check_len("output gradient width", net.outputs(), gy.cols())?;
    check_len("trace layers", net.layers.len(), trace.layers.len())?;
    let depth = net.layers.len();
    let (slots, out_slot) = param_slots(net);
    let mut grad = vec![F::zero(); out_slot.end];

    let sizes = &trace.sizes;
    let mut g_in: Vec<ColGrad<F>> = net
        .layers
        .iter()
        .map(|l| ColGrad::new(l.size(), l.inputs()))
        .collect();
    let mut g_rec: Vec<Option<ColGrad<F>>> = net
        .layers
        .iter()
        .map(|l| l.w_rec.as_ref().map(|_| ColGrad::new(l.size(), l.size())))
        .collect();
    let o = net.outputs();
    let mut g_out = ColGrad::new(o, sizes[depth - 1]);

    let mut gi_next: Vec<Vec<F>> = sizes.iter().map(|&n| vec![F::zero(); n]).collect();
    let mut gv_next = gi_next.clone();
    let mut gi_cur = gi_next.clone();
    let mut gv_cur = gi_next.clone();
    let mut gs: Vec<Vec<F>> = gi_next.clone();

    for k in (0..t).rev() {
        for l in (0..depth).rev() {
            let layer = &net.layers[l];
            let n = sizes[l];
            let tr = &trace.layers[l];
            let g_s = &mut gs[l];
            g_s.iter_mut().for_each(|v| *v = F::zero());
            if l + 1 == depth {
                for (r, &g) in gy.row(k).iter().enumerate() {
                    if g != F::zero() {
                        axpy(g, net.readout.w_out.row(r), g_s);
                    }
                }
            } else {
                let above = &net.layers[l + 1].w_in;
                for (r, &g) in gi_cur[l + 1].iter().enumerate() {
                    if g != F::zero() {
                        axpy(g, above.row(r), g_s);
                    }
                }
            }
            if let Some(w) = &layer.w_rec {
                for (r, &g) in gi_next[l].iter().enumerate() {
                    if g != F::zero() {
                        axpy(g, w.row(r), g_s);
                    }
                }
            }

            let row = k * n;
            let prev = if k > 0 { Some((k - 1) * n) } else { None };
            let p = &layer.params;
            let s = &slots[l];
            for i in 0..n {
                let v = tr.membrane[row + i];
                let sig = surrogate_grad(v, p.theta[i], kappa);
                let gate = F::one() - tr.spikes[row + i];
                let gsig = g_s[i] * sig;
                let gv = gsig + gv_next[l][i] * p.beta[i] * gate;
                let gi = gv_next[l][i] + p.alpha[i] * gi_next[l][i];
                grad[s.theta.start + i] -= gsig;
                if let Some(pr) = prev {
                    grad[s.alpha.start + i] += gi * tr.syn_current[pr + i];
                    let prev_gate = F::one() - tr.spikes[pr + i];
                    grad[s.beta.start + i] += gv * tr.membrane[pr + i] * prev_gate;
                }
                gv_cur[l][i] = gv;
                gi_cur[l][i] = gi;
            }

            let gi = &gi_cur[l];
            if l == 0 {
                for (j, &xj) in x.row(k).iter().enumerate() {
                    if xj != F::zero() {
                        axpy(xj, gi, g_in[0].col(j));
                    }
                }
            } else {
                for &j in trace.layers[l - 1].active(k) {
                    axpy(F::one(), gi, g_in[l].col(j as usize));
                }
            }
            if let (Some(g), true) = (&mut g_rec[l], k > 0) {
                for &j in tr.active(k - 1) {
                    axpy(F::one(), gi, g.col(j as usize));
                }
            }
            if l + 1 == depth {
                for &j in tr.active(k) {
                    axpy(F::one(), gy.row(k), g_out.col(j as usize));
                }
            }
        }
        std::mem::swap(&mut gi_next, &mut gi_cur);
        std::mem::swap(&mut gv_next, &mut gv_cur);
    }

    for (l, s) in slots.iter().enumerate() {
        g_in[l].write_row_major(&mut grad[s.w_in.clone()]);
        if let (Some(g), Some(r)) = (&g_rec[l], &s.w_rec) {
            g.write_row_major(&mut grad[r.clone()]);
        }
    }
    g_out.write_row_major(&mut grad[out_slot]);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("spiking network gradient".into()));
    }
    Ok(grad)
}

impl<F: Real> Trainable<F> for SubNetwork<F> {
    fn param_count(&self) -> usize {
        param_slots(self).1.end
    }

    fn params(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w_in.as_slice());
            if let Some(w) = &l.w_rec {
                out.extend_from_slice(w.as_slice());
            }
            out.extend_from_slice(&l.params.alpha);
            out.extend_from_slice(&l.params.beta);
            out.extend_from_slice(&l.params.theta);
        }
        out.extend_from_slice(self.readout.w_out.as_slice());
        out
    }

    fn set_params(&mut self, p: &[F]) -> Result<()> {
        let (slots, out_slot) = param_slots(self);
        check_len("parameter vector", out_slot.end, p.len())?;
        for (l, s) in self.layers.iter_mut().zip(&slots) {
            l.w_in.as_mut_slice().copy_from_slice(&p[s.w_in.clone()]);
            if let (Some(w), Some(r)) = (&mut l.w_rec, &s.w_rec) {
                w.as_mut_slice().copy_from_slice(&p[r.clone()]);
            }
            l.params.alpha.copy_from_slice(&p[s.alpha.clone()]);
            l.params.beta.copy_from_slice(&p[s.beta.clone()]);
            l.params.theta.copy_from_slice(&p[s.theta.clone()]);
        }
        self.readout.w_out.as_mut_slice().copy_from_slice(&p[out_slot]);
        Ok(())
    }

    fn leak_ranges(&self) -> Vec<Range<usize>> {
        param_slots(self)
            .0
            .into_iter()
            .flat_map(|s| [s.alpha, s.beta])
            .collect()
    }

    fn predict(&self, x: &Matrix<F>) -> Result<Matrix<F>> {
        check_len("prediction input width", self.inputs(), x.cols())?;
        let mut rt = SubRuntime::new(self, Mode::EventDriven)?;
        let mut out = Vec::with_capacity(x.rows() * self.outputs());
        for k in 0..x.rows() {
            out.extend_from_slice(rt.step_scaled(x.row(k))?);
        }
        Matrix::from_vec(x.rows(), self.outputs(), out)
    }

    fn value_and_grad(&self, x: &Matrix<F>, y: &Matrix<F>, cfg: &GradConfig) -> Result<(f64, Vec<F>)> {
        let trace = forward_record(self, x)?;
        let (loss, gy) = objective_grad(cfg.objective, &trace.outputs, y, &cfg.loss)?;
        let grad = backward(self, x, &trace, &gy, F::lit(cfg.kappa))?;
        Ok((loss, grad))
    }
}
