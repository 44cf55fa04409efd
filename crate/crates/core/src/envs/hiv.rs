//! Six-compartment HIV treatment model with two drugs.

use std::io::Write;

use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub const DECISION_DAYS: f64 = 5.0;
pub const EPISODE_STEPS: usize = 200;
pub const SUBSTEP_FRACTION: f64 = 0.001;
pub const N_ACTIONS: usize = 4;
pub const DISCOUNT: f64 = 0.98;
pub const PERTURBATION: f64 = 0.05;
const FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HivState {
    pub t1: f64,
    pub t2: f64,
    pub t1_star: f64,
    pub t2_star: f64,
    pub v: f64,
    pub e: f64,
}

impl HivState {
    /// Unhealthy initial state, rounded to whole cells.
    pub const INITIAL: HivState = HivState {
        t1: 163573.0,
        t2: 5.0,
        t1_star: 11945.0,
        t2_star: 46.0,
        v: 63919.0,
        e: 24.0,
    };

    pub fn from_array(x: [f64; 6]) -> Self {
        Self {
            t1: x[0],
            t2: x[1],
            t1_star: x[2],
            t2_star: x[3],
            v: x[4],
            e: x[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.t1, self.t2, self.t1_star, self.t2_star, self.v, self.e]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }

    /// Multiply each coordinate by an independent factor in `[1-p, 1+p]`.
    pub fn perturbed<R: Rng>(&self, rng: &mut R, p: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * rng.random_range(1.0 - p..=1.0 + p)))
    }

    /// Base-10 logs of the six biomarkers.
    pub fn log_features(&self) -> [f64; 6] {
        self.to_array().map(f64::log10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HivAction {
    pub rti_on: bool,
    pub pi_on: bool,
}

impl HivAction {
    pub const ALL: [HivAction; 4] = [
        HivAction::from_index(0),
        HivAction::from_index(1),
        HivAction::from_index(2),
        HivAction::from_index(3),
    ];

    pub const fn from_index(i: usize) -> Self {
        Self {
            rti_on: i & 1 != 0,
            pi_on: i & 2 != 0,
        }
    }

    pub fn index(self) -> usize {
        self.rti_on as usize | (self.pi_on as usize) << 1
    }

    pub fn eps1(self) -> f64 {
        if self.rti_on {
            0.7
        } else {
            0.0
        }
    }

    pub fn eps2(self) -> f64 {
        if self.pi_on {
            0.3
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HivParams {
    pub lambda1: f64,
    pub d1: f64,
    pub k1: f64,
    pub lambda2: f64,
    pub d2: f64,
    pub f: f64,
    pub k2: f64,
    pub delta: f64,
    pub m1: f64,
    pub m2: f64,
    pub n_t: f64,
    pub c: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub lambda_e: f64,
    pub b_e: f64,
    pub k_b: f64,
    pub d_e: f64,
    pub k_d: f64,
    pub delta_e: f64,
}

impl Default for HivParams {
    fn default() -> Self {
        Self {
            lambda1: 1e4,
            d1: 0.01,
            k1: 8e-7,
            lambda2: 31.98,
            d2: 0.01,
            f: 0.34,
            k2: 1e-4,
            delta: 0.7,
            m1: 1e-5,
            m2: 1e-5,
            n_t: 100.0,
            c: 13.0,
            rho1: 1.0,
            rho2: 1.0,
            lambda_e: 1.0,
            b_e: 0.3,
            k_b: 100.0,
            d_e: 0.25,
            k_d: 500.0,
            delta_e: 0.1,
        }
    }
}

impl HivParams {
    pub fn derivative(&self, x: &[f64; 6], a: HivAction) -> [f64; 6] {
        let [t1, t2, t1s, t2s, v, e] = *x;
        let (e1, e2) = (a.eps1(), a.eps2());
        let inf1 = (1.0 - e1) * self.k1 * v * t1;
        let inf2 = (1.0 - self.f * e1) * self.k2 * v * t2;
        let infected = t1s + t2s;
        [
            self.lambda1 - self.d1 * t1 - inf1,
            self.lambda2 - self.d2 * t2 - inf2,
            inf1 - self.delta * t1s - self.m1 * e * t1s,
            inf2 - self.delta * t2s - self.m2 * e * t2s,
            (1.0 - e2) * self.n_t * self.delta * infected
                - self.c * v
                - (self.rho1 * inf1 + self.rho2 * inf2),
            self.lambda_e + self.b_e * infected / (infected + self.k_b) * e
                - self.d_e * infected / (infected + self.k_d) * e
                - self.delta_e * e,
        ]
    }

    /// Fixed-step RK4 over `dt` days using `substeps` equal steps.
    pub fn integrate(&self, x: HivState, a: HivAction, dt: f64, substeps: usize) -> Result<HivState> {
        if dt < 0.0 || substeps == 0 {
            return Err(Error::Integration {
                substep: 0,
                detail: format!("bad horizon dt={dt}, substeps={substeps}"),
            });
        }
        let h = dt / substeps as f64;
        let mut y = x.to_array();
        let axpy = |y: &[f64; 6], k: &[f64; 6], s: f64| -> [f64; 6] {
            std::array::from_fn(|i| y[i] + s * k[i])
        };
        for step in 0..substeps {
            let k1 = self.derivative(&y, a);
            let k2 = self.derivative(&axpy(&y, &k1, h / 2.0), a);
            let k3 = self.derivative(&axpy(&y, &k2, h / 2.0), a);
            let k4 = self.derivative(&axpy(&y, &k3, h), a);
            for i in 0..6 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Integration {
                    substep: step,
                    detail: format!("coordinate {i} became {}", y[i]),
                });
            }
        }
        Ok(HivState::from_array(y.map(|v| v.max(FLOOR))))
    }

    pub fn step(&self, x: HivState, a: HivAction, dt: f64) -> Result<HivState> {
        if dt <= 0.0 {
            return Err(Error::Integration {
                substep: 0,
                detail: format!("non-positive step {dt}"),
            });
        }
        self.integrate(x, a, dt, (1.0 / SUBSTEP_FRACTION).round() as usize)
    }

    /// Newton's method from the initial state toward the untreated
    /// steady state.
    pub fn unhealthy_equilibrium(&self) -> Result<HivState> {
        let a = HivAction::from_index(0);
        let mut x = Vector6::from(HivState::INITIAL.to_array());
        for _ in 0..50 {
            let arr: [f64; 6] = x.into();
            let fx = Vector6::from(self.derivative(&arr, a));
            let mut jac = Matrix6::zeros();
            for j in 0..6 {
                let step = 1e-7 * arr[j].abs().max(1.0);
                let mut hi = arr;
                let mut lo = arr;
                hi[j] += step;
                lo[j] -= step;
                let d = (Vector6::from(self.derivative(&hi, a))
                    - Vector6::from(self.derivative(&lo, a)))
                    / (2.0 * step);
                jac.set_column(j, &d);
            }
            let dx = jac
                .lu()
                .solve(&fx)
                .ok_or_else(|| Error::LinearSolve("singular Jacobian at equilibrium".into()))?;
            x -= dx;
            if dx.iter().zip(x.iter()).all(|(d, v)| d.abs() <= 1e-12 * v.abs()) {
                break;
            }
        }
        let state = HivState::from_array(x.into());
        if !state.is_valid() {
            return Err(Error::Integration {
                substep: 0,
                detail: "equilibrium search left the positive orthant".into(),
            });
        }
        Ok(state)
    }
}

/// One decision epoch with the canonical parameters.
pub fn hiv_step(x: HivState, a: HivAction, dt: f64) -> Result<HivState> {
    HivParams::default().step(x, a, dt)
}

pub fn hiv_reward(x: &HivState, a: HivAction) -> f64 {
    let (e1, e2) = (a.eps1(), a.eps2());
    -0.1 * x.v - 20000.0 * e1 * e1 - 2000.0 * e2 * e2 + 1000.0 * x.e
}

/// States visited, actions taken, and rewards received in one episode.
/// `states` has one more entry than `actions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HivEpisode {
    pub states: Vec<HivState>,
    pub actions: Vec<HivAction>,
    pub rewards: Vec<f64>,
}

impl HivEpisode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Roll out `steps` decisions from `start`; the reward is scored on the
/// state reached after each decision.
pub fn run_episode<F>(start: HivState, steps: usize, mut policy: F) -> Result<HivEpisode>
where
    F: FnMut(usize, &HivState) -> HivAction,
{
    let params = HivParams::default();
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    states.push(start);
    let mut x = start;
    for t in 0..steps {
        let a = policy(t, &x);
        x = params.step(x, a, DECISION_DAYS)?;
        rewards.push(hiv_reward(&x, a));
        actions.push(a);
        states.push(x);
    }
    Ok(HivEpisode {
        states,
        actions,
        rewards,
    })
}

/// Write episodes as CSV: episode, t, six biomarkers, action, reward.
pub fn write_episodes_csv<W: Write>(episodes: &[HivEpisode], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "episode", "t", "t1", "t2", "t1_star", "t2_star", "v", "e", "action", "reward",
    ])?;
    for (i, ep) in episodes.iter().enumerate() {
        for t in 0..ep.len() {
            let mut row = vec![i.to_string(), t.to_string()];
            row.extend(ep.states[t].to_array().iter().map(|v| format!("{v:e}")));
            row.push(ep.actions[t].index().to_string());
            row.push(format!("{:e}", ep.rewards[t]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// log10 transform followed by per-coordinate standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl FeatureScaler {
    pub fn fit(states: &[HivState]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidSpec("cannot scale an empty batch".into()));
        }
        let n = states.len() as f64;
        let logs: Vec<[f64; 6]> = states.iter().map(HivState::log_features).collect();
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for l in &logs {
            for i in 0..6 {
                mean[i] += l[i] / n;
            }
        }
        for l in &logs {
            for i in 0..6 {
                std[i] += (l[i] - mean[i]).powi(2) / n;
            }
        }
        // A constant coordinate carries no information; leave it centred.
        let std = std.map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &HivState) -> FeatureVector {
        let l = x.log_features();
        FeatureVector::new((0..6).map(|i| (l[i] - self.mean[i]) / self.std[i]).collect())
            .expect("positive states have finite logs")
    }
}
