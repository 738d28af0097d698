use crate::error::{Error, Result};
use crate::integrals::{IntegralTable, Node};
use crate::models::NoiseModel;
use crate::real::{vec, Real};

use super::local::{g_value, lupdate};
use super::{grid_nodes, Corrector, SampleOutput, SolverConfig, TraceStep};

/// Substep counts of the macro steps: as many full-order steps as fit, then
/// one shorter step for the remainder.
pub fn singlestep_partition(steps: usize, order: usize) -> Vec<usize> {
    let mut parts = vec![order; steps / order];
    if steps % order != 0 {
        parts.push(steps % order);
    }
    parts
}

/// Singlestep sampling: each macro step of `k` substeps is anchored at its
/// first point and uses only values computed inside it.
pub fn singlestep_sample<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    tab: &IntegralTable<T>,
    cfg: &SolverConfig<T>,
    x_init: &[T],
) -> Result<SampleOutput<T>> {
    cfg.validate()?;
    if cfg.order > 3 {
        return Err(Error::arg("singlestep sampling supports order ≤ 3"));
    }
    if cfg.corrector != Corrector::None {
        return Err(Error::arg("singlestep sampling has no corrector"));
    }
    let sched = &tab.ems.schedule;
    let nodes = grid_nodes(tab, &cfg.grid)?;
    let steps = cfg.grid.steps();

    let mut x = x_init.to_vec();
    let mut eps = model.eps(sched, &x, nodes[0].lam)?;
    let mut nfe = 1;
    let mut trace = Vec::with_capacity(steps);
    let mut i0 = 0;

    for k in singlestep_partition(steps, cfg.order) {
        let anchor = nodes[i0];
        let x_s = x.clone();
        let g_s = g_value(tab, anchor, anchor, &x_s, &eps);
        let mut inner: Vec<(Node<T>, Vec<T>)> = Vec::with_capacity(k);
        for i in 0..k {
            let target = i0 + i + 1;
            let x_t = lupdate(tab, anchor, &x_s, &g_s, &inner, nodes[target], cfg.pseudo_predictor)?;
            let last = target == steps;
            let eps_norm = if last {
                None
            } else {
                eps = model.eps(sched, &x_t, nodes[target].lam)?;
                nfe += 1;
                if i + 1 < k {
                    inner.push((nodes[target], g_value(tab, anchor, nodes[target], &x_t, &eps)));
                }
                Some(vec::norm2(&eps))
            };
            trace.push(TraceStep {
                step: target,
                t: cfg.grid.timesteps[target],
                lambda: nodes[target].lam,
                x: x_t.clone(),
                eps_norm,
                g_norm: vec::norm2(&g_s),
                order: i + 1,
                corrected: false,
            });
            x = x_t;
        }
        i0 += k;
    }

    Ok(SampleOutput {
        x_final: x,
        trace,
        nfe,
        corrections: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::{degenerate_table, DegenerateKind};
    use crate::models::{CountingModel, ModelSpec};
    use crate::schedule::{GridKind, Schedule};
    use crate::solver::multistep_sample;

    #[test]
    fn partition() {
        assert_eq!(singlestep_partition(9, 3), vec![3, 3, 3]);
        assert_eq!(singlestep_partition(10, 3), vec![3, 3, 3, 1]);
        assert_eq!(singlestep_partition(5, 3), vec![3, 2]);
        assert_eq!(singlestep_partition(1, 2), vec![1]);
        assert_eq!(singlestep_partition(4, 1), vec![1; 4]);
    }

    #[test]
    fn first_order_matches_multistep() {
        let sched = Schedule::<f64>::vp_cosine_default();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 600, (-7.0, 7.0), 2).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let grid = sched.make_time_grid(15, GridKind::UniformLambda, 0.95, 0.01).unwrap();
        let model = ModelSpec::mixture(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![-1.0, 0.5]], vec![0.3, 0.25]).unwrap();
        let cfg = SolverConfig::new(1, Corrector::None, grid);
        let a = singlestep_sample(&model, &tab, &cfg, &[0.3, -0.7]).unwrap();
        let b = multistep_sample(&model, &tab, &cfg, &[0.3, -0.7]).unwrap();
        assert_eq!(a.x_final, b.x_final);
        assert_eq!(a.nfe, b.nfe);
    }

    #[test]
    fn nfe_and_rejections() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 400, (-8.0, 8.0), 1).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let grid = sched.make_time_grid(11, GridKind::UniformLambda, 1.0, 1e-3).unwrap();
        let model = CountingModel::new(ModelSpec::point_gaussian(vec![0.4]));
        let out = singlestep_sample(&model, &tab, &SolverConfig::new(3, Corrector::None, grid.clone()), &[1.0]).unwrap();
        assert_eq!(out.nfe, 11);
        assert_eq!(model.eps_calls(), 11);
        assert!(singlestep_sample(&model, &tab, &SolverConfig::new(2, Corrector::Full, grid.clone()), &[1.0]).is_err());
        assert!(singlestep_sample(&model, &tab, &SolverConfig::new(4, Corrector::None, grid), &[1.0]).is_err());
    }
}
