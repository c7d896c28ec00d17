//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs in `f64`. Elements whose ±step evaluations land on a different
//! piece of a piecewise-linear op (ReLU sign flip, max-pool winner change)
//! are skipped and counted, since the difference quotient straddles a kink.

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Added to every analytic gradient before comparison. Test hook used to
    /// confirm the harness can fail.
    pub analytic_offset: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-3,
            rel_tol: 1e-4,
            abs_tol: 1e-6,
            analytic_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub tensor: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_abs_err: f64,
    /// Largest relative error among elements whose absolute error exceeds
    /// the absolute tolerance.
    pub max_rel_err: f64,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }

    fn record(
        &mut self,
        cfg: &GradCheck,
        tensor: usize,
        element: usize,
        analytic: f64,
        numeric: f64,
    ) {
        self.checked += 1;
        let abs = (analytic - numeric).abs();
        self.max_abs_err = self.max_abs_err.max(abs);
        if abs <= cfg.abs_tol {
            return;
        }
        let rel = abs / analytic.abs().max(numeric.abs());
        self.max_rel_err = self.max_rel_err.max(rel);
        if rel > cfg.rel_tol {
            self.failures.push(Mismatch {
                tensor,
                element,
                analytic,
                numeric,
            });
        }
    }
}

impl GradCheck {
    /// Checks gradients with respect to free input tensors.
    pub fn inputs<F>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let mut scratch = ParamStore::new();
        let eval = |values: &[Tensor<f64>]| -> Result<(Tape<f64>, Var, Vec<Var>)> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = values.iter().map(|t| tape.input(t.clone())).collect();
            let loss = f(&mut tape, &vars)?;
            Ok((tape, loss, vars))
        };
        let (tape, loss, vars) = eval(inputs)?;
        let grads = tape.backward(loss, &mut scratch)?;
        let base_pattern = tape.activation_pattern();
        let analytic: Vec<Tensor<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect();

        let mut report = GradCheckReport::default();
        let mut work = inputs.to_vec();
        for t in 0..inputs.len() {
            for e in 0..inputs[t].numel() {
                let orig = work[t].data()[e];
                work[t].data_mut()[e] = orig + self.step;
                let (tp, lp, _) = eval(&work)?;
                work[t].data_mut()[e] = orig - self.step;
                let (tm, lm, _) = eval(&work)?;
                work[t].data_mut()[e] = orig;
                if tp.activation_pattern() != base_pattern
                    || tm.activation_pattern() != base_pattern
                {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * self.step);
                report.record(
                    self,
                    t,
                    e,
                    analytic[t].data()[e] + self.analytic_offset,
                    numeric,
                );
            }
        }
        Ok(report)
    }

    /// Checks gradients with respect to every parameter in `store`.
    pub fn params<F>(&self, store: &mut ParamStore<f64>, mut f: F) -> Result<GradCheckReport>
    where
        F: FnMut(&mut Tape<f64>, &mut ParamStore<f64>) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        store.zero_grad();
        tape.backward(loss, store)?;
        let base_pattern = tape.activation_pattern();
        let analytic: Vec<Tensor<f64>> = store
            .params()
            .iter()
            .map(|p| p.grad.clone().expect("zeroed"))
            .collect();

        let mut report = GradCheckReport::default();
        let ids: Vec<_> = store.ids().collect();
        for (t, id) in ids.into_iter().enumerate() {
            for e in 0..store.param(id).value.numel() {
                let orig = store.param(id).value.data()[e];
                store.param_mut(id).value.data_mut()[e] = orig + self.step;
                let mut tp = Tape::new();
                let lp = f(&mut tp, store)?;
                store.param_mut(id).value.data_mut()[e] = orig - self.step;
                let mut tm = Tape::new();
                let lm = f(&mut tm, store)?;
                store.param_mut(id).value.data_mut()[e] = orig;
                if tp.activation_pattern() != base_pattern
                    || tm.activation_pattern() != base_pattern
                {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * self.step);
                report.record(
                    self,
                    t,
                    e,
                    analytic[t].data()[e] + self.analytic_offset,
                    numeric,
                );
            }
        }
        Ok(report)
    }
}
