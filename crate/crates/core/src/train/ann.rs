//! Bias-free ReLU baseline with the same topology as the spiking networks:
//! `h[t] = relu(W_in p[t] + W_rec h[t-1])`, `y[t] = W_out h[t]`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::archive::Archive;
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;
use crate::snn::{LayerKind, Topology};

use super::loss::objective_grad;
use super::model::{GradConfig, Trainable};

#[derive(Clone, Debug, PartialEq)]
pub struct AnnLayer<F = f32> {
    pub kind: LayerKind,
    pub w_in: Matrix<F>,
    pub w_rec: Option<Matrix<F>>,
}

impl<F: Real> AnnLayer<F> {
    pub fn size(&self) -> usize {
        self.w_in.rows()
    }

    pub fn inputs(&self) -> usize {
        self.w_in.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnNet<F = f32> {
    pub layers: Vec<AnnLayer<F>>,
    pub w_out: Matrix<F>,
    pub input_scale: Vec<F>,
    pub output_scale: Vec<F>,
}

impl<F: Real> AnnNet<F> {
    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs())
    }

    pub fn outputs(&self) -> usize {
        self.w_out.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::contract("ANN without hidden layers"));
        }
        let mut width = self.inputs();
        for l in &self.layers {
            check_len("ANN layer input width", width, l.inputs())?;
            match (l.kind, &l.w_rec) {
                (LayerKind::Recurrent, Some(w)) => {
                    check_len("ANN recurrent rows", l.size(), w.rows())?;
                    check_len("ANN recurrent cols", l.size(), w.cols())?;
                }
                (LayerKind::Feedforward, None) => {}
                _ => return Err(Error::contract("ANN layer kind does not match its weights")),
            }
            width = l.size();
        }
        check_len("ANN readout width", width, self.w_out.cols())?;
        check_len("ANN input scale", self.inputs(), self.input_scale.len())?;
        check_len("ANN output scale", self.outputs(), self.output_scale.len())?;
        let finite = self.w_out.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.w_in.is_finite() && l.w_rec.as_ref().is_none_or(|w| w.is_finite()));
        if !finite {
            return Err(Error::NonFinite("ANN weights".into()));
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> AnnNet<G> {
        let c = |v: F| G::lit(v.as_f64());
        AnnNet {
            layers: self
                .layers
                .iter()
                .map(|l| AnnLayer {
                    kind: l.kind,
                    w_in: l.w_in.map(c),
                    w_rec: l.w_rec.as_ref().map(|w| w.map(c)),
                })
                .collect(),
            w_out: self.w_out.map(c),
            input_scale: self.input_scale.iter().map(|&v| c(v)).collect(),
            output_scale: self.output_scale.iter().map(|&v| c(v)).collect(),
        }
    }

    /// Multiply-accumulates per tick; every product is evaluated.
    pub fn macs_per_tick(&self) -> u64 {
        let mut n = self.w_out.len() as u64;
        for l in &self.layers {
            n += l.w_in.len() as u64;
            if let Some(w) = &l.w_rec {
                n += w.len() as u64;
            }
        }
        n
    }
}

/// Gaussian weights with standard deviation `gain / sqrt(fan_in)`.
pub fn init_ann<R: Rng>(topo: &Topology, input_gain: f32, recurrent_gain: f32, rng: &mut R) -> AnnNet<f32> {
    let mut gaussian = |rows: usize, cols: usize, gain: f32| {
        let normal = Normal::new(0.0f32, gain / (cols.max(1) as f32).sqrt()).expect("finite std");
        Matrix::from_fn(rows, cols, |_, _| normal.sample(rng))
    };
    let mut layers = Vec::new();
    let mut width = topo.inputs;
    for &(kind, n) in &topo.layers {
        let w_in = gaussian(n, width, input_gain);
        let w_rec = match kind {
            LayerKind::Recurrent => Some(gaussian(n, n, recurrent_gain)),
            LayerKind::Feedforward => None,
        };
        layers.push(AnnLayer { kind, w_in, w_rec });
        width = n;
    }
    AnnNet {
        layers,
        w_out: gaussian(topo.outputs, width, 1.0),
        input_scale: vec![1.0; topo.inputs],
        output_scale: vec![1.0; topo.outputs],
    }
}

/// Stateful ANN inference with preallocated buffers.
#[derive(Clone, Debug)]
pub struct AnnRuntime<F = f32> {
    net: AnnNet<F>,
    hidden: Vec<Vec<F>>,
    scratch: Vec<F>,
    scaled_in: Vec<F>,
    out: Vec<F>,
}

fn matvec_acc<F: Real>(w: &Matrix<F>, x: &[F], acc: &mut [F]) {
    for (a, r) in acc.iter_mut().zip(0..w.rows()) {
        let mut s = F::zero();
        for (&wij, &xj) in w.row(r).iter().zip(x) {
            s += wij * xj;
        }
        *a += s;
    }
}

impl<F: Real> AnnRuntime<F> {
    pub fn new(net: &AnnNet<F>) -> Result<Self> {
        net.validate()?;
        let widest = net.layers.iter().map(|l| l.size()).max().unwrap_or(0);
        Ok(Self {
            net: net.clone(),
            hidden: net.layers.iter().map(|l| vec![F::zero(); l.size()]).collect(),
            scratch: vec![F::zero(); widest],
            scaled_in: vec![F::zero(); net.inputs()],
            out: vec![F::zero(); net.outputs()],
        })
    }

    pub fn reset(&mut self) {
        for h in &mut self.hidden {
            h.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    /// One tick on physical-unit inputs.
    pub fn step(&mut self, x: &[F]) -> Result<&[F]> {
        check_len("ANN input", self.scaled_in.len(), x.len())?;
        for ((s, &v), &c) in self.scaled_in.iter_mut().zip(x).zip(&self.net.input_scale) {
            *s = v * c;
        }
        self.advance();
        for (o, &c) in self.out.iter_mut().zip(&self.net.output_scale) {
            *o = *o / c;
        }
        Ok(&self.out)
    }

    /// One tick on scaled inputs, returning scaled outputs.
    pub fn step_scaled(&mut self, x: &[F]) -> Result<&[F]> {
        check_len("ANN input", self.scaled_in.len(), x.len())?;
        self.scaled_in.copy_from_slice(x);
        self.advance();
        Ok(&self.out)
    }

    fn advance(&mut self) {
        for l in 0..self.net.layers.len() {
            let layer = &self.net.layers[l];
            let n = layer.size();
            let acc = &mut self.scratch[..n];
            acc.iter_mut().for_each(|v| *v = F::zero());
            let (below, rest) = self.hidden.split_at_mut(l);
            let input: &[F] = if l == 0 { &self.scaled_in } else { &below[l - 1] };
            matvec_acc(&layer.w_in, input, acc);
            let h = &mut rest[0];
            if let Some(w) = &layer.w_rec {
                matvec_acc(w, h, acc);
            }
            for (hi, &a) in h.iter_mut().zip(acc.iter()) {
                *hi = a.max(F::zero());
            }
        }
        let top = self.hidden.last().expect("validated non-empty");
        self.out.iter_mut().for_each(|v| *v = F::zero());
        matvec_acc(&self.net.w_out, top, &mut self.out);
    }

    /// Output of the last step, in the units that step returned.
    pub fn last_output(&self) -> &[F] {
        &self.out
    }

    pub fn hidden(&self) -> &[Vec<F>] {
        &self.hidden
    }
}

/// Scaled output sequence of `net` from zero state.
pub fn ann_forward<F: Real>(net: &AnnNet<F>, x: &Matrix<F>) -> Result<Matrix<F>> {
    check_len("ANN input width", net.inputs(), x.cols())?;
    let mut rt = AnnRuntime::new(net)?;
    let mut out = Vec::with_capacity(x.rows() * net.outputs());
    for k in 0..x.rows() {
        out.extend_from_slice(rt.step_scaled(x.row(k))?);
    }
    Matrix::from_vec(x.rows(), net.outputs(), out)
}

fn slots<F: Real>(net: &AnnNet<F>) -> (Vec<(Range<usize>, Option<Range<usize>>)>, Range<usize>) {
    let mut at = 0;
    let mut take = |n: usize| {
        let r = at..at + n;
        at += n;
        r
    };
    let layers = net
        .layers
        .iter()
        .map(|l| (take(l.w_in.len()), l.w_rec.as_ref().map(|w| take(w.len()))))
        .collect();
    (layers, take(net.w_out.len()))
}

impl<F: Real> Trainable<F> for AnnNet<F> {
    fn param_count(&self) -> usize {
        slots(self).1.end
    }

    fn params(&self) -> Vec<F> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(l.w_in.as_slice());
            if let Some(w) = &l.w_rec {
                p.extend_from_slice(w.as_slice());
            }
        }
        p.extend_from_slice(self.w_out.as_slice());
        p
    }

    fn set_params(&mut self, p: &[F]) -> Result<()> {
        let (ls, out) = slots(self);
        check_len("ANN parameter vector", out.end, p.len())?;
        for (l, (wi, wr)) in self.layers.iter_mut().zip(ls) {
            l.w_in.as_mut_slice().copy_from_slice(&p[wi]);
            if let (Some(w), Some(r)) = (&mut l.w_rec, wr) {
                w.as_mut_slice().copy_from_slice(&p[r]);
            }
        }
        self.w_out.as_mut_slice().copy_from_slice(&p[out]);
        Ok(())
    }

    fn leak_ranges(&self) -> Vec<Range<usize>> {
        Vec::new()
    }

    fn predict(&self, x: &Matrix<F>) -> Result<Matrix<F>> {
        ann_forward(self, x)
    }

    fn value_and_grad(&self, x: &Matrix<F>, y: &Matrix<F>, cfg: &GradConfig) -> Result<(f64, Vec<F>)> {
        check_len("ANN input width", self.inputs(), x.cols())?;
        let t = x.rows();
        let depth = self.layers.len();
        let mut rt = AnnRuntime::new(self)?;
        let mut hist: Vec<Vec<F>> = self.layers.iter().map(|l| Vec::with_capacity(t * l.size())).collect();
        let mut out = Vec::with_capacity(t * self.outputs());
        for k in 0..t {
            out.extend_from_slice(rt.step_scaled(x.row(k))?);
            for (h, cur) in hist.iter_mut().zip(rt.hidden()) {
                h.extend_from_slice(cur);
            }
        }
        let pred = Matrix::from_vec(t, self.outputs(), out)?;
        let (loss, gy) = objective_grad(cfg.objective, &pred, y, &cfg.loss)?;

        let (ls, out_slot) = slots(self);
        let mut grad = vec![F::zero(); out_slot.end];
        let sizes: Vec<usize> = self.layers.iter().map(|l| l.size()).collect();
        let mut ga_next: Vec<Vec<F>> = sizes.iter().map(|&n| vec![F::zero(); n]).collect();
        let mut ga_cur = ga_next.clone();
        let mut gh: Vec<Vec<F>> = ga_next.clone();
        let o = self.outputs();
        for k in (0..t).rev() {
            for l in (0..depth).rev() {
                let n = sizes[l];
                let layer = &self.layers[l];
                let g = &mut gh[l];
                g.iter_mut().for_each(|v| *v = F::zero());
                if l + 1 == depth {
                    for r in 0..o {
                        let a = gy.get(k, r);
                        for (gj, &w) in g.iter_mut().zip(self.w_out.row(r)) {
                            *gj += a * w;
                        }
                    }
                } else {
                    let above = &self.layers[l + 1].w_in;
                    for (r, &a) in ga_cur[l + 1].iter().enumerate() {
                        if a != F::zero() {
                            for (gj, &w) in g.iter_mut().zip(above.row(r)) {
                                *gj += a * w;
                            }
                        }
                    }
                }
                if let Some(w) = &layer.w_rec {
                    for (r, &a) in ga_next[l].iter().enumerate() {
                        if a != F::zero() {
                            for (gj, &wv) in g.iter_mut().zip(w.row(r)) {
                                *gj += a * wv;
                            }
                        }
                    }
                }
                let h = &hist[l][k * n..(k + 1) * n];
                for i in 0..n {
                    ga_cur[l][i] = if h[i] > F::zero() { g[i] } else { F::zero() };
                }
                let ga = &ga_cur[l];
                let u: &[F] = if l == 0 {
                    x.row(k)
                } else {
                    &hist[l - 1][k * sizes[l - 1]..(k + 1) * sizes[l - 1]]
                };
                let d = u.len();
                let wi = &ls[l].0;
                for (i, &a) in ga.iter().enumerate() {
                    if a != F::zero() {
                        let row = &mut grad[wi.start + i * d..wi.start + (i + 1) * d];
                        for (gr, &uj) in row.iter_mut().zip(u) {
                            *gr += a * uj;
                        }
                    }
                }
                if let (Some(wr), true) = (&ls[l].1, k > 0) {
                    let prev = &hist[l][(k - 1) * n..k * n];
                    for (i, &a) in ga.iter().enumerate() {
                        if a != F::zero() {
                            let row = &mut grad[wr.start + i * n..wr.start + (i + 1) * n];
                            for (gr, &hj) in row.iter_mut().zip(prev) {
                                *gr += a * hj;
                            }
                        }
                    }
                }
                if l + 1 == depth {
                    for r in 0..o {
                        let a = gy.get(k, r);
                        let row = &mut grad[out_slot.start + r * n..out_slot.start + (r + 1) * n];
                        for (gr, &hj) in row.iter_mut().zip(h) {
                            *gr += a * hj;
                        }
                    }
                }
            }
            std::mem::swap(&mut ga_next, &mut ga_cur);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("ANN gradient".into()));
        }
        Ok((loss, grad))
    }
}

pub const ANN_FORMAT: &str = "neuroflap-ann";

pub(crate) fn put_ann(a: &mut Archive, prefix: &str, net: &AnnNet<f32>) {
    a.set(&format!("{prefix}.inputs"), net.inputs());
    a.set(&format!("{prefix}.outputs"), net.outputs());
    a.set(&format!("{prefix}.layers"), net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let p = format!("{prefix}.layer{l}");
        a.set(&format!("{p}.kind"), layer.kind.as_str());
        a.set(&format!("{p}.size"), layer.size());
        a.put_f32(&format!("{p}.w_in"), &[layer.size(), layer.inputs()], layer.w_in.as_slice());
        if let Some(w) = &layer.w_rec {
            a.put_f32(&format!("{p}.w_rec"), &[w.rows(), w.cols()], w.as_slice());
        }
    }
    let w = &net.w_out;
    a.put_f32(&format!("{prefix}.w_out"), &[w.rows(), w.cols()], w.as_slice());
    a.put_f32(&format!("{prefix}.input_scale"), &[net.inputs()], &net.input_scale);
    a.put_f32(&format!("{prefix}.output_scale"), &[net.outputs()], &net.output_scale);
}

pub(crate) fn get_ann(a: &Archive, prefix: &str) -> Result<AnnNet<f32>> {
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
            LayerKind::Recurrent => Some(Matrix::from_vec(n, n, a.f32(&format!("{p}.w_rec"), &[n, n])?)?),
            LayerKind::Feedforward => None,
        };
        layers.push(AnnLayer { kind, w_in, w_rec });
        width = n;
    }
    let net = AnnNet {
        layers,
        w_out: Matrix::from_vec(outputs, width, a.f32(&format!("{prefix}.w_out"), &[outputs, width])?)?,
        input_scale: a.f32(&format!("{prefix}.input_scale"), &[inputs])?,
        output_scale: a.f32(&format!("{prefix}.output_scale"), &[outputs])?,
    };
    net.validate()?;
    Ok(net)
}
