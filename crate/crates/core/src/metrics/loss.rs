use std::fmt;
use std::str::FromStr;

use super::ssim::SsimConfig;
use crate::error::Error;
use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    NegSsim,
    Mae,
    Mse,
}

/// Which output scales the loss supervises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossScales {
    #[default]
    Multi,
    /// Full resolution only.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossSpec {
    pub kind: LossKind,
    pub scales: LossScales,
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            LossKind::NegSsim => "neg_ssim",
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        };
        match self.scales {
            LossScales::Multi => write!(f, "{kind}"),
            LossScales::Single => write!(f, "{kind}_single"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (base, scales) = match s.strip_suffix("_single") {
            Some(b) => (b, LossScales::Single),
            None => (s, LossScales::Multi),
        };
        let kind = match base {
            "neg_ssim" | "ssim" => LossKind::NegSsim,
            "mae" | "l1" => LossKind::Mae,
            "mse" | "l2" => LossKind::Mse,
            other => return Err(Error::Config(format!("unknown loss kind {other:?}"))),
        };
        Ok(LossSpec { kind, scales })
    }
}

/// Ground truth at 1/4, 1/2 and full resolution (coarsest first), formed by
/// repeated 2×2 average pooling.
pub fn gt_pyramid<T: Real>(gt: &Tensor<T>) -> [Tensor<T>; 3] {
    let half = crate::tensor::avg_pool2_tensor(gt);
    let quarter = crate::tensor::avg_pool2_tensor(&half);
    [quarter, half, gt.clone()]
}

/// One scale's term, summed over batch items: `-Σ SSIM`, `Σ mean|d-g|` or
/// `Σ mean (d-g)²`.
pub fn scale_term<T: Real>(g: &mut Graph<T>, derained: Var, gt: Var, kind: LossKind) -> Var {
    let [n, _, h, w] = g.shape(derained);
    match kind {
        LossKind::NegSsim => {
            let cfg = SsimConfig::default().fitted(h, w);
            let s = g.ssim(derained, gt, cfg);
            let total = g.sum(s);
            g.scale(total, -1.0)
        }
        LossKind::Mae | LossKind::Mse => {
            let d = g.sub(derained, gt);
            let e = if kind == LossKind::Mae { g.abs(d) } else { g.square(d) };
            let m = g.mean(e);
            g.scale(m, n as f64)
        }
    }
}

/// Sum of per-scale terms. `derained` and `gt` are ordered coarsest first.
pub fn multiscale_loss<T: Real>(g: &mut Graph<T>, derained: &[Var], gt: &[Var], spec: LossSpec) -> Var {
    assert_eq!(derained.len(), gt.len());
    assert!(!derained.is_empty());
    let first = match spec.scales {
        LossScales::Multi => 0,
        LossScales::Single => derained.len() - 1,
    };
    let mut total: Option<Var> = None;
    for i in first..derained.len() {
        let t = scale_term(g, derained[i], gt[i], spec.kind);
        total = Some(match total {
            Some(acc) => g.add(acc, t),
            None => t,
        });
    }
    total.expect("at least one scale")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for s in ["neg_ssim", "mae", "mse", "neg_ssim_single", "mse_single"] {
            assert_eq!(s.parse::<LossSpec>().unwrap().to_string(), s);
        }
        assert!("huber".parse::<LossSpec>().is_err());
    }

    #[test]
    fn pyramid_shapes() {
        let gt: Tensor<f64> = Tensor::full([2, 3, 16, 8], 0.5);
        let p = gt_pyramid(&gt);
        assert_eq!(p[0].shape, [2, 3, 4, 2]);
        assert_eq!(p[1].shape, [2, 3, 8, 4]);
        assert_eq!(p[2].shape, [2, 3, 16, 8]);
    }
}
