use std::collections::VecDeque;

use crate::error::Result;
use crate::integrals::{IntegralTable, Node};
use crate::models::NoiseModel;
use crate::real::{vec, Real};

use super::local::{g_value, lupdate};
use super::{grid_nodes, Correction, Corrector, SampleOutput, SolverConfig, TraceStep};

/// Cached states and noise predictions of the most recent grid points.
#[derive(Clone, Debug)]
pub struct SolverState<T> {
    /// `(grid index, x̂)`, oldest first.
    pub q1: VecDeque<(usize, Vec<T>)>,
    /// `(grid index, ε̂)`, aligned with `q1`.
    pub q2: VecDeque<(usize, Vec<T>)>,
    pub m: usize,
    capacity: usize,
}

impl<T: Clone> SolverState<T> {
    pub fn new(order: usize) -> Self {
        SolverState {
            q1: VecDeque::with_capacity(order + 1),
            q2: VecDeque::with_capacity(order + 1),
            m: 0,
            capacity: order + 1,
        }
    }

    pub fn push(&mut self, index: usize, x: Vec<T>, eps: Vec<T>) {
        if self.q1.len() == self.capacity {
            self.q1.pop_front();
            self.q2.pop_front();
        }
        self.q1.push_back((index, x));
        self.q2.push_back((index, eps));
    }

    /// Cached `(x̂_i, ε̂_i)`.
    pub fn get(&self, index: usize) -> (&[T], &[T]) {
        let pos = self
            .q1
            .iter()
            .position(|(i, _)| *i == index)
            .expect("grid index evicted from the solver cache");
        (&self.q1[pos].1, &self.q2[pos].1)
    }
}

fn half_active<T: Real>(tab: &IntegralTable<T>, t: T) -> bool {
    t / tab.ems.schedule.t_max() <= T::lit(0.5)
}

/// Multistep predictor-corrector sampling from `grid.timesteps[0]` down to the
/// last timestep. Exactly `M` model evaluations for an `M`-step grid.
pub fn multistep_sample<T: Real, M: NoiseModel<T> + ?Sized>(
    model: &M,
    tab: &IntegralTable<T>,
    cfg: &SolverConfig<T>,
    x_init: &[T],
) -> Result<SampleOutput<T>> {
    cfg.validate()?;
    let sched = &tab.ems.schedule;
    let nodes = grid_nodes(tab, &cfg.grid)?;
    let steps = cfg.grid.steps();

    let mut state = SolverState::new(cfg.order);
    let eps0 = model.eps(sched, x_init, nodes[0].lam)?;
    let mut nfe = 1;
    state.push(0, x_init.to_vec(), eps0);

    let mut trace = Vec::with_capacity(steps);
    let mut corrections = Vec::new();
    let mut x_final = x_init.to_vec();

    for m in 1..=steps {
        state.m = m;
        let nm = cfg.order.min(m);
        let anchor = nodes[m - 1];
        let g_at = |i: usize, x: &[T], eps: &[T]| g_value(tab, anchor, nodes[i], x, eps);

        let (x_s, eps_s) = state.get(m - 1);
        let x_s = x_s.to_vec();
        let g_s = g_at(m - 1, &x_s, eps_s);
        let history: Vec<(Node<T>, Vec<T>)> = (m - nm..m - 1)
            .rev()
            .map(|i| {
                let (x, e) = state.get(i);
                (nodes[i], g_at(i, x, e))
            })
            .collect();

        let x_pred = lupdate(tab, anchor, &x_s, &g_s, &history, nodes[m], cfg.pseudo_predictor)?;
        let g_norm = vec::norm2(&g_s);

        if m == steps {
            trace.push(TraceStep {
                step: m,
                t: cfg.grid.timesteps[m],
                lambda: nodes[m].lam,
                x: x_pred.clone(),
                eps_norm: None,
                g_norm,
                order: nm,
                corrected: false,
            });
            x_final = x_pred;
            break;
        }

        let eps = model.eps(sched, &x_pred, nodes[m].lam)?;
        nfe += 1;

        let active = match cfg.corrector {
            Corrector::None => false,
            Corrector::Full => true,
            Corrector::Half => half_active(tab, cfg.grid.timesteps[m]),
        };
        // history[0] is t_{m−2}; the corrector drops the oldest point unless pseudo
        let keep = if cfg.pseudo_corrector { history.len() } else { history.len().saturating_sub(1) };
        let use_corrector = active && (cfg.pseudo_corrector || nm >= 2);

        let (x_new, eps_new) = if use_corrector {
            let g_m = g_at(m, &x_pred, &eps);
            let mut extras = Vec::with_capacity(keep + 1);
            extras.push((nodes[m], g_m.clone()));
            extras.extend(history.iter().take(keep).cloned());
            let x_c = lupdate(tab, anchor, &x_s, &g_s, &extras, nodes[m], cfg.pseudo_corrector)?;
            let l = tab.l_at(nodes[m]);
            let sigma = sched.sigma_at(nodes[m].lam);
            let eps_c: Vec<T> = (0..eps.len())
                .map(|i| eps[i] + l[i] * (x_c[i] - x_pred[i]) / sigma)
                .collect();
            corrections.push(Correction {
                step: m,
                g_predicted: g_m,
                g_corrected: g_at(m, &x_c, &eps_c),
            });
            (x_c, eps_c)
        } else {
            (x_pred, eps)
        };

        trace.push(TraceStep {
            step: m,
            t: cfg.grid.timesteps[m],
            lambda: nodes[m].lam,
            x: x_new.clone(),
            eps_norm: Some(vec::norm2(&eps_new)),
            g_norm,
            order: nm,
            corrected: use_corrector,
        });
        state.push(m, x_new, eps_new);
    }

    Ok(SampleOutput {
        x_final,
        trace,
        nfe,
        corrections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ems::{degenerate_table, DegenerateKind};
    use crate::integrals::Quadrature;
    use crate::models::{CountingModel, ModelSpec};
    use crate::schedule::{GridKind, Schedule};
    use crate::solver::ddim_step;

    fn mixture() -> ModelSpec<f64> {
        ModelSpec::mixture(
            vec![0.3, 0.7],
            vec![vec![1.0, -0.5, 0.2], vec![-0.8, 0.4, 0.6]],
            vec![0.3, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn cache_evicts_oldest() {
        let mut st = SolverState::new(1);
        st.push(0, vec![0.0], vec![1.0]);
        st.push(1, vec![2.0], vec![3.0]);
        st.push(2, vec![4.0], vec![5.0]);
        assert_eq!(st.q1.len(), 2);
        assert_eq!(st.get(2), (&[4.0][..], &[5.0][..]));
        assert_eq!(st.q1.front().unwrap().0, 1);
    }

    #[test]
    fn single_step_is_first_order_update() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::NoisePred, &sched, 10, (-8.0, 8.0), 3).unwrap();
        let tab = IntegralTable::with_quadrature(ems, Quadrature::Exact).unwrap();
        let grid = sched.make_time_grid(1, GridKind::UniformT, 0.9, 0.2).unwrap();
        let model = mixture();
        let x = vec![0.2, 0.1, -0.4];
        for order in 1..=3 {
            let cfg = SolverConfig::new(order, Corrector::None, grid.clone());
            let out = multistep_sample(&model, &tab, &cfg, &x).unwrap();
            let eps = model.eps(&sched, &x, grid.lambdas[0]).unwrap();
            let want = ddim_step(&sched, &x, &eps, 0.9, 0.2).unwrap();
            assert!(vec::max_abs_diff(&out.x_final, &want) < 1e-12);
            assert_eq!(out.nfe, 1);
        }
    }

    #[test]
    fn nfe_equals_steps() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 400, (-8.0, 8.0), 3).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let grid = sched.make_time_grid(12, GridKind::UniformLambda, 1.0, 1e-3).unwrap();
        let model = CountingModel::new(mixture());
        for c in [Corrector::None, Corrector::Full, Corrector::Half] {
            model.reset();
            let cfg = SolverConfig::new(3, c, grid.clone());
            let out = multistep_sample(&model, &tab, &cfg, &[0.1, 0.5, -0.3]).unwrap();
            assert_eq!(out.nfe, 12);
            assert_eq!(model.eps_calls(), 12);
            assert_eq!(out.trace.len(), 12);
            assert!(out.trace.last().unwrap().eps_norm.is_none());
        }
    }

    #[test]
    fn half_corrector_only_late() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 400, (-8.0, 8.0), 3).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let grid = sched.make_time_grid(10, GridKind::UniformT, 1.0, 1e-3).unwrap();
        let cfg = SolverConfig::new(2, Corrector::Half, grid.clone());
        let out = multistep_sample(&mixture(), &tab, &cfg, &[0.1, 0.5, -0.3]).unwrap();
        for st in &out.trace {
            let want = st.step < 10 && st.t <= 0.5 && st.order >= 2;
            assert_eq!(st.corrected, want, "step {}", st.step);
        }
        assert!(out.trace.iter().any(|s| s.corrected));
    }

    #[test]
    fn corrector_keeps_g() {
        let sched = Schedule::<f64>::edm();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 800, (-5.0, 7.0), 3).unwrap();
        let tab = IntegralTable::new(ems).unwrap();
        let grid = sched.make_time_grid(20, GridKind::UniformLambda, 80.0, 0.002).unwrap();
        let cfg = SolverConfig::new(3, Corrector::Full, grid).with_pseudo(false, true);
        let out = multistep_sample(&mixture(), &tab, &cfg, &[30.0, -20.0, 5.0]).unwrap();
        assert_eq!(out.corrections.len(), 19);
        for c in &out.corrections {
            let scale = vec::norm_inf(&c.g_predicted).max(1.0);
            assert!(vec::max_abs_diff(&c.g_predicted, &c.g_corrected) <= 1e-12 * scale);
        }
    }

    #[test]
    fn rejects_collapsed_grid() {
        let sched = Schedule::<f64>::vp_linear_default();
        let ems = degenerate_table(DegenerateKind::DataPred, &sched, 4, (-8.0, 8.0), 1).unwrap();
        let tab = IntegralTable::with_quadrature(ems, Quadrature::Trapezoid).unwrap();
        let grid = sched.make_time_grid(20, GridKind::UniformLambda, 1.0, 1e-3).unwrap();
        let cfg = SolverConfig::new(1, Corrector::None, grid);
        assert!(multistep_sample(&ModelSpec::point_gaussian(vec![0.0]), &tab, &cfg, &[1.0]).is_err());
    }
}
