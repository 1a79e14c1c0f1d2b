//! Gradient-check fixtures: toy problems with partially active spiking and
//! the tape oracle wired to the training objectives.

use super::tape::{forward, huber_mean, net_vars, pearson_mean, Tape};
use super::{gaussian_matrix, rel_error, toy_net};
use neuroflap::matrix::Matrix;
use neuroflap::snn::SubNetwork;
use neuroflap::train::{forward_record, GradConfig, LossConfig, Objective, Trainable};

pub fn grad_cfg(objective: Objective, burn_in: usize) -> GradConfig {
    GradConfig {
        objective,
        loss: LossConfig {
            burn_in,
            ..LossConfig::default()
        },
        kappa: 2.0,
    }
}

/// Random net whose last layer fires on some but not all ticks of a
/// Gaussian input, with a Gaussian target.
pub fn draw(seed: u64, max_width: usize, steps: usize) -> (SubNetwork<f64>, Matrix<f64>, Matrix<f64>) {
    for attempt in 0.. {
        let s = seed * 1000 + attempt;
        let net = toy_net(s, max_width);
        let x = gaussian_matrix(steps, net.inputs(), s + 7);
        let trace = forward_record(&net, &x).unwrap();
        let last = trace.layers.last().unwrap();
        let total = last.spike_total();
        if total > 0 && total < last.spikes.len() {
            let y = gaussian_matrix(steps, net.outputs(), s + 11);
            return (net, x, y);
        }
    }
    unreachable!()
}

/// Relative error of the hand-written readout gradient against central
/// differences of the true loss.
pub fn readout_fd_error(net: &SubNetwork<f64>, x: &Matrix<f64>, y: &Matrix<f64>, cfg: &GradConfig) -> f64 {
    let (_, g) = net.value_and_grad(x, y, cfg).unwrap();
    let p = net.params();
    let start = p.len() - net.readout.w_out.len();
    let h = 1e-6;
    let mut fd = Vec::new();
    for i in start..p.len() {
        let mut up = net.clone();
        let mut q = p.clone();
        q[i] += h;
        up.set_params(&q).unwrap();
        let mut dn = net.clone();
        q[i] -= 2.0 * h;
        dn.set_params(&q).unwrap();
        fd.push((up.value(x, y, cfg).unwrap() - dn.value(x, y, cfg).unwrap()) / (2.0 * h));
    }
    rel_error(&g[start..], &fd)
}

pub fn oracle_grad(net: &SubNetwork<f64>, x: &Matrix<f64>, y: &Matrix<f64>, cfg: &GradConfig) -> (f64, Vec<f64>) {
    let mut tape = Tape::default();
    let nv = net_vars(&mut tape, net);
    let xs: Vec<Vec<f64>> = (0..x.rows()).map(|k| x.row(k).to_vec()).collect();
    let ys: Vec<Vec<f64>> = (0..y.rows()).map(|k| y.row(k).to_vec()).collect();
    let out = forward(&mut tape, &nv, &xs, cfg.kappa);
    let loss = match cfg.objective {
        Objective::Estimator => huber_mean(&mut tape, &out, &ys, cfg.loss.burn_in, cfg.loss.delta),
        Objective::Controller => {
            let h = huber_mean(&mut tape, &out, &ys, 0, cfg.loss.delta);
            let rho = pearson_mean(&mut tape, &out, &ys);
            let one = tape.leaf(1.0);
            let gap = tape.sub(one, rho);
            let pen = tape.scale(gap, cfg.loss.corr_weight);
            tape.add(h, pen)
        }
    };
    let adj = tape.grad(loss);
    (tape.val(loss), nv.flat.iter().map(|v| adj[v.0]).collect())
}
