use rand::seq::index::sample;

use super::graph::{Graph, Precision, Var};
use super::params::{ParamStore, Session};
use super::tensor::Tensor;
use crate::error::Result;
use crate::seed::rng_from;

/// Central-difference gradient verification settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub h: f64,
    /// Coordinates sampled per tensor; `None` checks every coordinate.
    pub per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            per_tensor: Some(24),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// (tensor name, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Denominator floor keeps near-zero gradients from dominating through
/// round-off in the difference quotient.
pub(crate) const REL_ERR_FLOOR: f64 = 1e-6;

pub(crate) fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares backprop gradients of `f` with central differences over the
/// parameters in `store`. Always runs in 64-bit.
pub fn grad_check<F>(store: &mut ParamStore, cfg: GradCheck, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Session) -> Result<Var>,
{
    let analytic = {
        let mut s = Session::new(store, Precision::F64);
        let loss = f(&mut s)?;
        s.param_grads(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut s = Session::inference(store, Precision::F64);
        let loss = f(&mut s)?;
        Ok(s.graph.scalar(loss))
    };
    let mut rng = rng_from(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    for p in 0..store.len() {
        let n = store.tensor_at(p).len();
        let coords: Vec<usize> = match cfg.per_tensor {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = store.tensor_at(p).data()[i];
            store.tensor_at_mut(p).data_mut()[i] = orig + cfg.h;
            let plus = eval(store)?;
            store.tensor_at_mut(p).data_mut()[i] = orig - cfg.h;
            let minus = eval(store)?;
            store.tensor_at_mut(p).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic[p].as_ref().map_or(0.0, |g| g.data()[i]);
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                let name = store.names().nth(p).unwrap_or_default().to_string();
                report.worst = Some((name, i, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Checks every coordinate of small standalone inputs; returns the max
/// relative error.
pub fn finite_difference_check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    for (i, t) in inputs.iter().enumerate() {
        store.insert(format!("x{i}"), t.clone());
    }
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let report = grad_check(
        &mut store,
        GradCheck {
            h,
            per_tensor: None,
            seed: 0,
        },
        |s| {
            let vars = names.iter().map(|n| s.param(n)).collect::<Result<Vec<_>>>()?;
            f(&mut s.graph, &vars)
        },
    )?;
    Ok(report.max_rel_err)
}
