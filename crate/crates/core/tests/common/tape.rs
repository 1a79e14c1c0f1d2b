//! Minimal tape-based reverse-mode differentiation, used to check the
//! hand-written backward pass against an independently built graph of the
//! same surrogate-relaxed forward equations.

use neuroflap::snn::SubNetwork;

#[derive(Clone, Copy, Debug)]
pub struct Var(pub usize);

#[derive(Default)]
pub struct Tape {
    vals: Vec<f64>,
    parents: Vec<Vec<(usize, f64)>>,
}

impl Tape {
    fn push(&mut self, v: f64, parents: Vec<(usize, f64)>) -> Var {
        self.vals.push(v);
        self.parents.push(parents);
        Var(self.vals.len() - 1)
    }

    pub fn leaf(&mut self, v: f64) -> Var {
        self.push(v, Vec::new())
    }

    pub fn val(&self, a: Var) -> f64 {
        self.vals[a.0]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.val(a) + self.val(b), vec![(a.0, 1.0), (b.0, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(self.val(a) - self.val(b), vec![(a.0, 1.0), (b.0, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.push(x * y, vec![(a.0, y), (b.0, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.push(x / y, vec![(a.0, 1.0 / y), (b.0, -x / (y * y))])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(self.val(a) * c, vec![(a.0, c)])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let r = self.val(a).sqrt();
        self.push(r, vec![(a.0, 0.5 / r)])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.val(x)).sum();
        self.push(v, xs.iter().map(|x| (x.0, 1.0)).collect())
    }

    pub fn huber(&mut self, a: Var, delta: f64) -> Var {
        let e = self.val(a);
        let (v, d) = if e.abs() <= delta {
            (0.5 * e * e, e)
        } else {
            (delta * e.abs() - 0.5 * delta * delta, delta * e.signum())
        };
        self.push(v, vec![(a.0, d)])
    }

    /// Heaviside forward (closed at 0), arctan-type surrogate backward.
    pub fn spike(&mut self, d: Var, kappa: f64) -> Var {
        let x = self.val(d);
        let s = if x >= 0.0 { 1.0 } else { 0.0 };
        self.push(s, vec![(d.0, 1.0 / (1.0 + kappa * x * x))])
    }

    /// Adjoints of every node with respect to `out`.
    pub fn grad(&self, out: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.vals.len()];
        adj[out.0] = 1.0;
        for n in (0..=out.0).rev() {
            let a = adj[n];
            if a == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[n] {
                adj[p] += a * d;
            }
        }
        adj
    }
}

/// Leaves of every parameter, in the trainer's flat order.
pub struct NetVars {
    pub w_in: Vec<Vec<Vec<Var>>>,
    pub w_rec: Vec<Option<Vec<Vec<Var>>>>,
    pub alpha: Vec<Vec<Var>>,
    pub beta: Vec<Vec<Var>>,
    pub theta: Vec<Vec<Var>>,
    pub w_out: Vec<Vec<Var>>,
    pub flat: Vec<Var>,
}

pub fn net_vars(tape: &mut Tape, net: &SubNetwork<f64>) -> NetVars {
    let mut flat = Vec::new();
    let mat = |tape: &mut Tape, flat: &mut Vec<Var>, m: &neuroflap::matrix::Matrix<f64>| {
        (0..m.rows())
            .map(|r| {
                (0..m.cols())
                    .map(|c| {
                        let v = tape.leaf(m.get(r, c));
                        flat.push(v);
                        v
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let vec = |tape: &mut Tape, flat: &mut Vec<Var>, xs: &[f64]| {
        xs.iter()
            .map(|&x| {
                let v = tape.leaf(x);
                flat.push(v);
                v
            })
            .collect::<Vec<_>>()
    };
    let mut nv = NetVars {
        w_in: vec![],
        w_rec: vec![],
        alpha: vec![],
        beta: vec![],
        theta: vec![],
        w_out: vec![],
        flat: vec![],
    };
    for l in &net.layers {
        nv.w_in.push(mat(tape, &mut flat, &l.w_in));
        nv.w_rec.push(l.w_rec.as_ref().map(|w| mat(tape, &mut flat, w)));
        nv.alpha.push(vec(tape, &mut flat, &l.params.alpha));
        nv.beta.push(vec(tape, &mut flat, &l.params.beta));
        nv.theta.push(vec(tape, &mut flat, &l.params.theta));
    }
    nv.w_out = mat(tape, &mut flat, &net.readout.w_out);
    nv.flat = flat;
    nv
}

fn dot(tape: &mut Tape, w: &[Var], x: &[Var]) -> Var {
    let terms: Vec<Var> = w.iter().zip(x).map(|(&a, &b)| tape.mul(a, b)).collect();
    tape.sum(&terms)
}

/// Forward pass built node by node: returns `outputs[k][o]`.
pub fn forward(tape: &mut Tape, nv: &NetVars, x: &[Vec<f64>], kappa: f64) -> Vec<Vec<Var>> {
    let depth = nv.alpha.len();
    let zero = tape.leaf(0.0);
    let mut i_state: Vec<Vec<Var>> = nv.alpha.iter().map(|a| vec![zero; a.len()]).collect();
    let mut v_state = i_state.clone();
    let mut s_state = i_state.clone();
    let mut outputs = Vec::with_capacity(x.len());
    for xk in x {
        let mut below: Vec<Var> = xk.iter().map(|&v| tape.leaf(v)).collect();
        for l in 0..depth {
            let n = nv.alpha[l].len();
            let mut i_new = Vec::with_capacity(n);
            let mut v_new = Vec::with_capacity(n);
            let mut s_new = Vec::with_capacity(n);
            for i in 0..n {
                // Reset gate enters as a constant.
                let gate = tape.leaf(1.0 - tape.val(s_state[l][i]));
                let bv = tape.mul(nv.beta[l][i], v_state[l][i]);
                let bvg = tape.mul(bv, gate);
                let v = tape.add(bvg, i_state[l][i]);
                let ff = dot(tape, &nv.w_in[l][i], &below);
                let ai = tape.mul(nv.alpha[l][i], i_state[l][i]);
                let mut cur = tape.add(ai, ff);
                if let Some(w) = &nv.w_rec[l] {
                    let rec = dot(tape, &w[i], &s_state[l]);
                    cur = tape.add(cur, rec);
                }
                let d = tape.sub(v, nv.theta[l][i]);
                let s = tape.spike(d, kappa);
                v_new.push(v);
                i_new.push(cur);
                s_new.push(s);
            }
            i_state[l] = i_new;
            v_state[l] = v_new;
            s_state[l] = s_new.clone();
            below = s_new;
        }
        let out: Vec<Var> = nv.w_out.iter().map(|row| dot(tape, row, &below)).collect();
        outputs.push(out);
    }
    outputs
}

/// Mean Huber over steps `start..` of `pred - target`.
pub fn huber_mean(tape: &mut Tape, pred: &[Vec<Var>], target: &[Vec<f64>], start: usize, delta: f64) -> Var {
    let mut terms = Vec::new();
    for (p, t) in pred.iter().zip(target).skip(start) {
        for (&pv, &tv) in p.iter().zip(t) {
            let tl = tape.leaf(tv);
            let e = tape.sub(pv, tl);
            terms.push(tape.huber(e, delta));
        }
    }
    let s = tape.sum(&terms);
    tape.scale(s, 1.0 / terms.len() as f64)
}

/// Mean over channels of the temporal correlation.
pub fn pearson_mean(tape: &mut Tape, pred: &[Vec<Var>], target: &[Vec<f64>]) -> Var {
    let t = pred.len() as f64;
    let channels = pred[0].len();
    let mut rhos = Vec::new();
    for c in 0..channels {
        let col: Vec<Var> = pred.iter().map(|p| p[c]).collect();
        let tgt: Vec<f64> = target.iter().map(|r| r[c]).collect();
        let tm = tgt.iter().sum::<f64>() / t;
        let s = tape.sum(&col);
        let pm = tape.scale(s, 1.0 / t);
        let mut cross = Vec::new();
        let mut sq = Vec::new();
        for (&p, &y) in col.iter().zip(&tgt) {
            let dp = tape.sub(p, pm);
            let dy = tape.leaf(y - tm);
            cross.push(tape.mul(dp, dy));
            sq.push(tape.mul(dp, dp));
        }
        let stt: f64 = tgt.iter().map(|y| (y - tm) * (y - tm)).sum();
        let spt = tape.sum(&cross);
        let spp = tape.sum(&sq);
        let stt = tape.leaf(stt);
        let prod = tape.mul(spp, stt);
        let den = tape.sqrt(prod);
        rhos.push(tape.div(spt, den));
    }
    let s = tape.sum(&rhos);
    tape.scale(s, 1.0 / channels as f64)
}
