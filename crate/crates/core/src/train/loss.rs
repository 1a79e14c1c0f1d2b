//! Imitation losses on `T x O` sequences (rows are time steps).

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::real::Real;

/// Loss hyperparameters shared by both objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub delta: f64,
    /// Leading steps excluded from the estimator loss.
    pub burn_in: usize,
    /// Weight of the correlation term in the controller loss.
    pub corr_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            burn_in: 100,
            corr_weight: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.corr_weight >= 0.0) {
            return Err(Error::contract("loss needs delta > 0 and corr_weight >= 0"));
        }
        Ok(())
    }
}

/// Which supervised objective a network is trained with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Huber after burn-in.
    Estimator,
    /// Huber over the full sequence plus the correlation penalty.
    Controller,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Estimator => "estimator",
            Objective::Controller => "controller",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "estimator" => Ok(Objective::Estimator),
            "controller" => Ok(Objective::Controller),
            other => Err(Error::Format(format!("unknown objective {other:?}"))),
        }
    }
}

pub fn huber(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * a - 0.5 * delta * delta
    }
}

pub fn huber_grad(e: f64, delta: f64) -> f64 {
    e.clamp(-delta, delta)
}

fn column<F: Real>(m: &Matrix<F>, c: usize) -> impl Iterator<Item = f64> + '_ {
    (0..m.rows()).map(move |r| m.get(r, c).as_f64())
}

/// Correlation of one channel and its gradient with respect to `pred`.
/// A constant channel on either side contributes 0 with zero gradient.
fn pearson_with_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let pm = pred.iter().sum::<f64>() / n;
    let tm = target.iter().sum::<f64>() / n;
    let (mut spt, mut spp, mut stt) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.iter().zip(target) {
        let (dp, dt) = (p - pm, t - tm);
        spt += dp * dt;
        spp += dp * dp;
        stt += dt * dt;
    }
    if spp == 0.0 || stt == 0.0 {
        return (0.0, vec![0.0; pred.len()]);
    }
    let denom = (spp * stt).sqrt();
    let rho = spt / denom;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (t - tm) / denom - rho * (p - pm) / spp)
        .collect();
    (rho, grad)
}

/// Correlation over time of a single channel.
pub fn pearson(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len("pearson target", pred.len(), target.len())?;
    if pred.len() < 2 {
        return Err(Error::contract("pearson needs at least two samples"));
    }
    Ok(pearson_with_grad(pred, target).0)
}

fn check_pair<F: Real>(pred: &Matrix<F>, target: &Matrix<F>) -> Result<()> {
    check_len("target steps", pred.rows(), target.rows())?;
    check_len("target channels", pred.cols(), target.cols())
}

/// Correlation per channel and window, averaged over windows and channels.
pub fn pearson_batch<F: Real>(preds: &[Matrix<F>], targets: &[Matrix<F>]) -> Result<f64> {
    check_len("pearson batch", preds.len(), targets.len())?;
    if preds.is_empty() {
        return Err(Error::contract("pearson of an empty batch"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        check_pair(p, t)?;
        if p.rows() < 2 {
            return Err(Error::contract("pearson needs at least two steps"));
        }
        for c in 0..p.cols() {
            let pc: Vec<f64> = column(p, c).collect();
            let tc: Vec<f64> = column(t, c).collect();
            sum += pearson_with_grad(&pc, &tc).0;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Mean Huber over steps `burn_in..T` of one window.
pub fn loss_estimator<F: Real>(pred: &Matrix<F>, target: &Matrix<F>, cfg: &LossConfig) -> Result<f64> {
    Ok(objective_grad(Objective::Estimator, pred, target, cfg)?.0)
}

/// Mean Huber over the full window plus `corr_weight * (1 - rho)`.
pub fn loss_controller<F: Real>(pred: &Matrix<F>, target: &Matrix<F>, cfg: &LossConfig) -> Result<f64> {
    Ok(objective_grad(Objective::Controller, pred, target, cfg)?.0)
}

/// Loss of one window and its gradient with respect to every prediction.
pub fn objective_grad<F: Real>(
    objective: Objective,
    pred: &Matrix<F>,
    target: &Matrix<F>,
    cfg: &LossConfig,
) -> Result<(f64, Matrix<F>)> {
    cfg.validate()?;
    check_pair(pred, target)?;
    let (t, o) = (pred.rows(), pred.cols());
    let start = match objective {
        Objective::Estimator => {
            if t <= cfg.burn_in {
                return Err(Error::contract(format!(
                    "window of {t} steps does not exceed the {}-step burn-in",
                    cfg.burn_in
                )));
            }
            cfg.burn_in
        }
        Objective::Controller => {
            if t < 2 {
                return Err(Error::contract("controller loss needs at least two steps"));
            }
            0
        }
    };
    let count = ((t - start) * o) as f64;
    let mut grad = vec![0.0f64; t * o];
    let mut loss = 0.0;
    for r in start..t {
        for c in 0..o {
            let e = pred.get(r, c).as_f64() - target.get(r, c).as_f64();
            loss += huber(e, cfg.delta);
            grad[r * o + c] = huber_grad(e, cfg.delta) / count;
        }
    }
    loss /= count;
    if objective == Objective::Controller && cfg.corr_weight > 0.0 {
        let mut rho_sum = 0.0;
        for c in 0..o {
            let pc: Vec<f64> = column(pred, c).collect();
            let tc: Vec<f64> = column(target, c).collect();
            let (rho, g) = pearson_with_grad(&pc, &tc);
            rho_sum += rho;
            let scale = -cfg.corr_weight / o as f64;
            for (r, gr) in g.iter().enumerate() {
                grad[r * o + c] += scale * gr;
            }
        }
        loss += cfg.corr_weight * (1.0 - rho_sum / o as f64);
    }
    let grad = Matrix::from_vec(t, o, grad.into_iter().map(F::lit).collect())?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(values: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(2.0, 1.0), 1.5);
        assert_eq!(huber(1.0, 1.0), 0.5);
        assert_eq!(huber(-1.0, 1.0), 0.5);
        let d = 1.7;
        let above = huber(d + 1e-9, d);
        assert_eq!(huber(d, d), d * d / 2.0);
        assert!((above - d * d / 2.0).abs() < 1e-8);
    }

    #[test]
    fn pearson_cases() {
        let t: Vec<f64> = (0..50).map(|k| (k as f64 * 0.3).sin()).collect();
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        let affine: Vec<f64> = t.iter().map(|v| 2.5 * v + 7.0).collect();
        assert!((pearson(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&neg, &t).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&affine, &t).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&t, &[3.0; 50]).unwrap(), 0.0);
    }

    #[test]
    fn estimator_loss_cases() {
        let cfg = LossConfig::default();
        let target: Vec<f64> = (0..300).map(|k| k as f64 * 0.01).collect();
        assert_eq!(loss_estimator(&seq(&target), &seq(&target), &cfg).unwrap(), 0.0);
        let mut early = target.clone();
        for v in &mut early[..100] {
            *v += 5.0;
        }
        assert_eq!(loss_estimator(&seq(&early), &seq(&target), &cfg).unwrap(), 0.0);
        let shifted: Vec<f64> = target.iter().map(|v| v + 0.5).collect();
        assert_eq!(loss_estimator(&seq(&shifted), &seq(&target), &cfg).unwrap(), 0.125);
        assert!(loss_estimator(&seq(&target[..100]), &seq(&target[..100]), &cfg).is_err());
    }

    #[test]
    fn controller_loss_cases() {
        let cfg = LossConfig::default();
        let target: Vec<f64> = (0..200).map(|k| (k as f64 * 0.05).cos()).collect();
        assert_eq!(loss_controller(&seq(&target), &seq(&target), &cfg).unwrap(), 0.0);
        let shifted: Vec<f64> = target.iter().map(|v| v + 0.5).collect();
        let l = loss_controller(&seq(&shifted), &seq(&target), &cfg).unwrap();
        assert!((l - 0.125).abs() < 1e-12, "{l}");
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            pred in prop::collection::vec(-3.0f64..3.0, 12),
            target in prop::collection::vec(-3.0f64..3.0, 12),
            controller in any::<bool>(),
        ) {
            let cfg = LossConfig { burn_in: 2, ..LossConfig::default() };
            let objective = if controller { Objective::Controller } else { Objective::Estimator };
            let p = Matrix::from_vec(6, 2, pred.clone()).unwrap();
            let t = Matrix::from_vec(6, 2, target).unwrap();
            let (_, g) = objective_grad(objective, &p, &t, &cfg).unwrap();
            let h = 1e-6;
            for i in 0..pred.len() {
                let mut up = p.clone();
                up.as_mut_slice()[i] += h;
                let mut dn = p.clone();
                dn.as_mut_slice()[i] -= h;
                let fd = (objective_grad(objective, &up, &t, &cfg).unwrap().0
                    - objective_grad(objective, &dn, &t, &cfg).unwrap().0) / (2.0 * h);
                let a = g.as_slice()[i];
                prop_assert!((a - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "{i}: {a} vs {fd}");
            }
        }

        #[test]
        fn losses_are_non_negative(
            pred in prop::collection::vec(-5.0f64..5.0, 20),
            target in prop::collection::vec(-5.0f64..5.0, 20),
        ) {
            let cfg = LossConfig { burn_in: 5, ..LossConfig::default() };
            prop_assert!(loss_estimator(&seq(&pred), &seq(&target), &cfg).unwrap() >= 0.0);
            prop_assert!(loss_controller(&seq(&pred), &seq(&target), &cfg).unwrap() >= 0.0);
        }

        #[test]
        fn burn_in_perturbation_is_invisible(
            target in prop::collection::vec(-5.0f64..5.0, 130),
            noise in prop::collection::vec(-5.0f64..5.0, 100),
        ) {
            let cfg = LossConfig::default();
            let mut pred = target.clone();
            let base = loss_estimator(&seq(&pred), &seq(&target), &cfg).unwrap();
            for (p, n) in pred.iter_mut().zip(&noise) {
                *p += n;
            }
            prop_assert_eq!(loss_estimator(&seq(&pred), &seq(&target), &cfg).unwrap(), base);
        }
    }
}
