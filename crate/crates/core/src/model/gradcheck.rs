//! Central-difference check of the analytic gradients in 64-bit mode.

use alloc::vec::Vec;

use super::arch::Layout;
use super::forward::{HeadRows, Mode, Network};
use super::input::{NetInput, Targets};
use super::loss::LossConfig;
use super::step::{loss_and_gradients, loss_only};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor index of the worst coordinate.
    pub worst_tensor: usize,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a LeakyReLU kink.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_tensor = other.worst_tensor;
        }
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn kink_signature(net: &Network<'_, f64>, input: &NetInput) -> Result<Vec<bool>> {
    let (_, cache) = net.forward(input, HeadRows::all(input), Mode::Eval)?;
    Ok(cache.layers.iter().flat_map(|l| l.z.iter().map(|&z| z > 0.0)).collect())
}

/// Checks every coordinate of `params` (dropout off).
pub fn check_gradients(
    arch: &super::arch::Architecture,
    layout: &Layout,
    params: &[f64],
    input: &NetInput,
    targets: &Targets,
    cfg: &LossConfig,
    step: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let net = Network::new(arch, layout, params);
    let (_, grads) = loss_and_gradients(&net, input, targets, Mode::Eval, cfg)?;
    let base_sig = kink_signature(&net, input)?;
    let mut report = GradCheckReport::default();
    let mut p = params.to_vec();
    for (t, spec) in layout.specs.iter().enumerate() {
        for idx in spec.offset..spec.offset + spec.len {
            let orig = p[idx];
            p[idx] = orig + step;
            let plus_net = Network::new(arch, layout, &p);
            let plus = loss_only(&plus_net, input, targets, Mode::Eval, cfg)?.total;
            let crosses_plus = kink_signature(&plus_net, input)? != base_sig;
            p[idx] = orig - step;
            let minus_net = Network::new(arch, layout, &p);
            let minus = loss_only(&minus_net, input, targets, Mode::Eval, cfg)?.total;
            let crosses_minus = kink_signature(&minus_net, input)? != base_sig;
            p[idx] = orig;
            if crosses_plus || crosses_minus {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grads[idx], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_tensor = t;
            }
        }
    }
    Ok(report)
}
