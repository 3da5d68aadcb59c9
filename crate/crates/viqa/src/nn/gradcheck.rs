use super::{Network, NnError, Tensor};

const FD_STEP: f64 = 1e-4;
const PARAM_LIMIT: usize = 5000;
const DENOM_FLOOR: f64 = 1e-8;

/// A scalar objective on a network output, providing both the value and the
/// gradient with respect to the output.
pub trait ScalarLoss {
    fn value_and_grad(&self, output: &Tensor) -> (f64, Tensor);
}

/// Sum of squared deviations from a target.
pub struct QuadraticLoss {
    pub target: Tensor,
}

impl ScalarLoss for QuadraticLoss {
    fn value_and_grad(&self, output: &Tensor) -> (f64, Tensor) {
        let mut value = 0.0;
        let mut grad = Tensor::zeros(output.shape());
        for (i, (&o, &t)) in output.data().iter().zip(self.target.data()).enumerate() {
            let d = o - t;
            value += d * d;
            grad.data_mut()[i] = 2.0 * d;
        }
        (value, grad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameters skipped because their perturbation crossed a relu kink.
    pub skipped: usize,
}

/// Central-difference verification of analytic parameter gradients.
/// Parameters whose two-sided perturbation flips any relu activation mask
/// (the non-differentiable-point policy) are excluded from the comparison.
pub fn grad_check(
    net: &mut Network,
    loss: &dyn ScalarLoss,
    input: &Tensor,
) -> Result<GradCheckReport, NnError> {
    let count = net.param_count();
    if count > PARAM_LIMIT {
        return Err(NnError::TooManyParams {
            count,
            limit: PARAM_LIMIT,
        });
    }
    let trace = net.forward(input)?;
    let (_, out_grad) = loss.value_and_grad(trace.output());
    let (grads, _) = net.backward(&trace, &out_grad)?;
    let analytic = grads.to_flat();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..count {
        let original = net.get_param(i);

        net.set_param(i, original + FD_STEP);
        let trace_plus = net.forward(input)?;
        let masks_plus = net.relu_masks(&trace_plus);
        let (value_plus, _) = loss.value_and_grad(trace_plus.output());

        net.set_param(i, original - FD_STEP);
        let trace_minus = net.forward(input)?;
        let masks_minus = net.relu_masks(&trace_minus);
        let (value_minus, _) = loss.value_and_grad(trace_minus.output());

        net.set_param(i, original);

        if masks_plus != masks_minus {
            report.skipped += 1;
            continue;
        }
        let fd = (value_plus - value_minus) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(fd.abs()).max(DENOM_FLOOR);
        let rel = (fd - analytic[i]).abs() / denom;
        report.max_rel_err = report.max_rel_err.max(rel);
        report.checked += 1;
    }
    Ok(report)
}
