//! Gauss-Newton SQP over a multiple-shooting transcription.
//!
//! Shooting nodes s_0..s_N and inputs w_0..w_{N-1} are linearized together;
//! the state increments are condensed out through the linearized dynamics so
//! each iteration solves a dense box QP in the inputs only.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use super::model::{BicycleModel, Input, InputJac, State, StateJac};
use super::qp::solve_box_qp;
use super::{NmpcConfig, NmpcSolution};
use crate::error::{Result, SimError};
use crate::geometry::{wrap_angle, Pose2D};
use crate::station::RefPoseMsg;
use crate::vehicle::VehicleParams;

const MAX_RES: usize = 8;

type Vec5 = SVector<f64, 5>;
type Mat5 = SMatrix<f64, 5, 5>;

/// Stacked residuals of one shooting node and their Jacobian rows.
struct NodeResiduals {
    r: [f64; MAX_RES],
    j: [Vec5; MAX_RES],
    m: usize,
}

impl NodeResiduals {
    fn new() -> Self {
        Self {
            r: [0.0; MAX_RES],
            j: [Vec5::zeros(); MAX_RES],
            m: 0,
        }
    }

    fn push(&mut self, r: f64, j: Vec5) {
        self.r[self.m] = r;
        self.j[self.m] = j;
        self.m += 1;
    }

    fn sq_norm(&self) -> f64 {
        self.r[..self.m].iter().map(|r| r * r).sum()
    }

    /// (JᵀJ, Jᵀr)
    fn normal(&self) -> (Mat5, Vec5) {
        let mut q = Mat5::zeros();
        let mut g = Vec5::zeros();
        for k in 0..self.m {
            q += self.j[k] * self.j[k].transpose();
            g += self.j[k] * self.r[k];
        }
        (q, g)
    }
}

#[derive(Debug, Clone)]
pub struct Nmpc {
    cfg: NmpcConfig,
    model: BicycleModel,
    speed_gain: f64,
}

struct Target<'a> {
    pose: Pose2D,
    v_ref: f64,
    path: &'a [Pose2D],
}

impl Nmpc {
    pub fn new(cfg: NmpcConfig, params: &VehicleParams) -> Self {
        Self {
            cfg,
            model: BicycleModel {
                l_r: params.l_r,
                wheelbase: params.wheelbase,
            },
            speed_gain: params.speed_gain,
        }
    }

    pub fn config(&self) -> &NmpcConfig {
        &self.cfg
    }

    pub fn model(&self) -> &BicycleModel {
        &self.model
    }

    fn bounds(&self) -> (Input, Input) {
        (
            Input::new(-self.cfg.steer_rate_bound, self.cfg.accel_min),
            Input::new(self.cfg.steer_rate_bound, self.cfg.accel_max),
        )
    }

    fn clamp_input(&self, w: &Input) -> Input {
        let (lo, hi) = self.bounds();
        Input::new(w[0].clamp(lo[0], hi[0]), w[1].clamp(lo[1], hi[1]))
    }

    fn node_residuals(&self, k: usize, z: &State, tgt: &Target) -> NodeResiduals {
        let w = &self.cfg.weights;
        let n = self.cfg.intervals;
        let mut out = NodeResiduals::new();
        let (v, delta) = (z[3], z[4]);

        let sw = w.w_speed.sqrt();
        out.push(sw * (v - tgt.v_ref), Vec5::new(0.0, 0.0, 0.0, sw, 0.0));

        if w.w_path > 0.0 && !tgt.path.is_empty() {
            let (i, nearest) = tgt
                .path
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da = (a.x - z[0]).powi(2) + (a.y - z[1]).powi(2);
                    let db = (b.x - z[0]).powi(2) + (b.y - z[1]).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            let (tx, ty) = nearest.forward();
            // nothing is known about the path before the oldest pose
            let behind = i == 0 && tx * (z[0] - nearest.x) + ty * (z[1] - nearest.y) < 0.0;
            if !behind {
                let (nx, ny) = nearest.left();
                let sp = w.w_path.sqrt();
                out.push(
                    sp * (nx * (z[0] - nearest.x) + ny * (z[1] - nearest.y)),
                    Vec5::new(sp * nx, sp * ny, 0.0, 0.0, 0.0),
                );
            }
        }

        if w.w_lat > 0.0 {
            let sl = w.w_lat.sqrt();
            let beta = self.model.slip(delta);
            let db = self.model.slip_rate(delta);
            let lr = self.model.l_r;
            out.push(
                sl * v * v * beta.sin() / lr,
                Vec5::new(
                    0.0,
                    0.0,
                    0.0,
                    sl * 2.0 * v * beta.sin() / lr,
                    sl * v * v * beta.cos() * db / lr,
                ),
            );
        }

        let sb = w.w_bound.sqrt();
        let over = delta.abs() - self.cfg.delta_max;
        if over > 0.0 {
            out.push(sb * over, Vec5::new(0.0, 0.0, 0.0, 0.0, sb * delta.signum()));
        } else {
            out.push(0.0, Vec5::zeros());
        }
        if v < 0.0 {
            out.push(-sb * v, Vec5::new(0.0, 0.0, 0.0, -sb, 0.0));
        } else {
            out.push(0.0, Vec5::zeros());
        }

        if k == n {
            let (tx, ty) = tgt.pose.forward();
            let (nx, ny) = tgt.pose.left();
            let (ex, ey) = (z[0] - tgt.pose.x, z[1] - tgt.pose.y);
            let sa = w.w_pos_along.sqrt();
            let sl = w.w_pos.sqrt();
            out.push(sa * (tx * ex + ty * ey), Vec5::new(sa * tx, sa * ty, 0.0, 0.0, 0.0));
            out.push(sl * (nx * ex + ny * ey), Vec5::new(sl * nx, sl * ny, 0.0, 0.0, 0.0));
            let sh = w.w_head.sqrt();
            out.push(
                sh * wrap_angle(z[2] - tgt.pose.heading),
                Vec5::new(0.0, 0.0, sh, 0.0, 0.0),
            );
        }
        out
    }

    fn input_cost(&self, w: &Input) -> f64 {
        let wt = &self.cfg.weights;
        wt.w_dsteer * w[0] * w[0] + wt.w_accel * w[1] * w[1]
    }

    /// Σ r² over all nodes and inputs.
    fn cost(&self, s: &[State], w: &[Input], tgt: &Target) -> f64 {
        let nodes: f64 = (1..s.len()).map(|k| self.node_residuals(k, &s[k], tgt).sq_norm()).sum();
        nodes + w.iter().map(|u| self.input_cost(u)).sum::<f64>()
    }

    /// (Σ‖defect‖₁ including the initial-value gap, max |defect|)
    fn defects(&self, z0: &State, s: &[State], w: &[Input]) -> (f64, f64) {
        let h = self.cfg.dt();
        let mut l1 = (z0 - s[0]).abs().sum();
        let mut mx = (z0 - s[0]).amax();
        for k in 0..w.len() {
            let d = self.model.step(&s[k], &w[k], h) - s[k + 1];
            l1 += d.abs().sum();
            mx = mx.max(d.amax());
        }
        (l1, mx)
    }

    fn merit(&self, z0: &State, s: &[State], w: &[Input], tgt: &Target) -> (f64, f64) {
        let (l1, mx) = self.defects(z0, s, w);
        (0.5 * self.cost(s, w, tgt) + self.cfg.merit_penalty * l1, mx)
    }

    fn rollout(&self, z0: &State, w: &[Input]) -> Vec<State> {
        let h = self.cfg.dt();
        let mut s = Vec::with_capacity(w.len() + 1);
        s.push(*z0);
        for u in w {
            let next = self.model.step(s.last().unwrap(), u, h);
            s.push(next);
        }
        s
    }

    fn initial_guess(&self, z0: &State, warm: Option<&NmpcSolution>) -> (Vec<State>, Vec<Input>) {
        let n = self.cfg.intervals;
        match warm {
            Some(prev) if prev.u_seq.len() == n && prev.x_seq.len() == n + 1 => {
                let mut w: Vec<Input> = prev.u_seq[1..].iter().map(|u| Input::new(u[0], u[1])).collect();
                let tail_input = prev.u_seq[n - 1];
                w.push(Input::new(tail_input[0], tail_input[1]));
                let mut s: Vec<State> = prev.x_seq[1..].iter().map(|x| State::from_row_slice(x)).collect();
                let tail = self.model.step(&s[n - 1], &w[n - 1], self.cfg.dt());
                s.push(tail);
                let w = w.iter().map(|u| self.clamp_input(u)).collect();
                (s, w)
            }
            _ => {
                let w = vec![Input::zeros(); n];
                (self.rollout(z0, &w), w)
            }
        }
    }

    /// Solves the tracking problem from `z0` towards `target`.
    ///
    /// `path` holds previously received reference poses used by the stage
    /// path-fidelity term.
    pub fn solve(
        &self,
        z0: &State,
        target: &RefPoseMsg,
        path: &[Pose2D],
        warm: Option<&NmpcSolution>,
    ) -> Result<NmpcSolution> {
        if !z0.iter().all(|v| v.is_finite()) {
            return Err(SimError::InfeasibleStart("non-finite state".into()));
        }
        if z0[4].abs() > self.cfg.delta_max + 1e-9 || z0[3] < -1e-9 {
            return Err(SimError::InfeasibleStart(format!(
                "steer {:.4} rad or speed {:.4} m/s outside bounds",
                z0[4], z0[3]
            )));
        }
        if !target.x_ref.is_finite() || !target.v_ref.is_finite() {
            return Err(SimError::InfeasibleStart("non-finite reference".into()));
        }
        let tgt = Target {
            pose: target.x_ref,
            v_ref: target.v_ref,
            path,
        };
        let n = self.cfg.intervals;
        let h = self.cfg.dt();
        let (lo, hi) = self.bounds();
        let wt = &self.cfg.weights;
        let r_diag = Input::new(wt.w_dsteer, wt.w_accel);

        let (mut s, mut w) = self.initial_guess(z0, warm);
        let (mut merit, mut max_defect) = self.merit(z0, &s, &w, &tgt);
        let mut converged = false;
        let mut iterations = 0;

        let mut a_mats: Vec<StateJac> = vec![StateJac::zeros(); n];
        let mut b_mats: Vec<InputJac> = vec![InputJac::zeros(); n];
        let mut d_vecs: Vec<State> = vec![State::zeros(); n];
        let mut q_mats: Vec<Mat5> = vec![Mat5::zeros(); n + 1];
        let mut qr: Vec<Vec5> = vec![Vec5::zeros(); n + 1];

        for it in 0..self.cfg.sqp_iters {
            iterations = it + 1;
            for k in 0..n {
                let (next, a, b) = self.model.step_with_sens(&s[k], &w[k], h);
                a_mats[k] = a;
                b_mats[k] = b;
                d_vecs[k] = next - s[k + 1];
            }
            let e0 = z0 - s[0];
            for k in 1..=n {
                let (q, g) = self.node_residuals(k, &s[k], &tgt).normal();
                q_mats[k] = q;
                qr[k] = g;
            }

            // affine part of the condensed state increments
            let mut gk = vec![State::zeros(); n + 1];
            gk[0] = e0;
            for k in 0..n {
                gk[k + 1] = a_mats[k] * gk[k] + d_vecs[k];
            }
            // adjoints and cost-to-go curvature
            let mut lam = vec![Vec5::zeros(); n + 1];
            let mut p = vec![Mat5::zeros(); n + 1];
            lam[n] = qr[n] + q_mats[n] * gk[n];
            p[n] = q_mats[n];
            for k in (1..n).rev() {
                lam[k] = qr[k] + q_mats[k] * gk[k] + a_mats[k].transpose() * lam[k + 1];
                p[k] = q_mats[k] + a_mats[k].transpose() * p[k + 1] * a_mats[k];
            }

            let nv = 2 * n;
            let mut hess = DMatrix::<f64>::zeros(nv, nv);
            let mut grad = DVector::<f64>::zeros(nv);
            let mut carried: Vec<InputJac> = Vec::with_capacity(n);
            for j in 0..n {
                let y = p[j + 1] * b_mats[j];
                let gj = b_mats[j].transpose() * lam[j + 1] + r_diag.component_mul(&w[j]);
                grad[2 * j] = gj[0];
                grad[2 * j + 1] = gj[1];
                let hjj = b_mats[j].transpose() * y;
                hess[(2 * j, 2 * j)] = hjj[(0, 0)] + r_diag[0];
                hess[(2 * j, 2 * j + 1)] = hjj[(0, 1)];
                hess[(2 * j + 1, 2 * j)] = hjj[(1, 0)];
                hess[(2 * j + 1, 2 * j + 1)] = hjj[(1, 1)] + r_diag[1];
                for (i, c) in carried.iter().enumerate() {
                    let hij = c.transpose() * y;
                    for a in 0..2 {
                        for b in 0..2 {
                            hess[(2 * i + a, 2 * j + b)] = hij[(a, b)];
                            hess[(2 * j + b, 2 * i + a)] = hij[(a, b)];
                        }
                    }
                }
                carried.push(b_mats[j]);
                if j + 1 < n {
                    for c in carried.iter_mut() {
                        *c = a_mats[j + 1] * *c;
                    }
                }
            }

            let lo_v = DVector::from_fn(nv, |r, _| lo[r % 2] - w[r / 2][r % 2]);
            let hi_v = DVector::from_fn(nv, |r, _| hi[r % 2] - w[r / 2][r % 2]);
            let qp = solve_box_qp(&hess, &grad, &lo_v, &hi_v, 50);
            let dw: Vec<Input> = (0..n).map(|i| Input::new(qp.x[2 * i], qp.x[2 * i + 1])).collect();
            let mut ds = vec![State::zeros(); n + 1];
            ds[0] = e0;
            for k in 0..n {
                ds[k + 1] = a_mats[k] * ds[k] + b_mats[k] * dw[k] + d_vecs[k];
            }

            let (defect_l1, _) = self.defects(z0, &s, &w);
            let mut slope = -self.cfg.merit_penalty * defect_l1;
            for k in 1..=n {
                let res = self.node_residuals(k, &s[k], &tgt);
                let mut jr = Vec5::zeros();
                for m in 0..res.m {
                    jr += res.j[m] * res.r[m];
                }
                slope += jr.dot(&ds[k]);
            }
            for i in 0..n {
                slope += r_diag.component_mul(&w[i]).dot(&dw[i]);
            }

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let s_try: Vec<State> = s.iter().zip(&ds).map(|(a, b)| a + alpha * b).collect();
                let w_try: Vec<Input> = w
                    .iter()
                    .zip(&dw)
                    .map(|(a, b)| self.clamp_input(&(a + alpha * b)))
                    .collect();
                let (m_try, mx) = self.merit(z0, &s_try, &w_try, &tgt);
                if m_try <= merit + 1e-4 * alpha * slope.min(0.0) {
                    accepted = Some((s_try, w_try, m_try, mx));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((s_new, w_new, m_new, mx)) = accepted else {
                break;
            };
            let step = dw.iter().map(|d| d.amax()).fold(0.0, f64::max) * alpha;
            s = s_new;
            w = w_new;
            merit = m_new;
            max_defect = mx;
            if max_defect <= self.cfg.tol && step <= self.cfg.step_tol {
                converged = true;
                break;
            }
        }

        let cost = self.cost(&s, &w, &tgt);
        // speed target whose proportional tracking yields the planned
        // acceleration, capped at the operator speed
        let v_opt = (z0[3] + w[0][1] / self.speed_gain).clamp(0.0, tgt.v_ref.max(0.0));
        Ok(NmpcSolution {
            u_seq: w.iter().map(|u| [u[0], u[1]]).collect(),
            x_seq: s.iter().map(|x| [x[0], x[1], x[2], x[3], x[4]]).collect(),
            cost,
            converged,
            iterations,
            max_defect,
            v_opt,
        })
    }

    /// Total cost Σ r² of the single-shooting rollout of `inputs` from `z0`.
    pub fn rollout_cost(&self, z0: &State, target: &RefPoseMsg, path: &[Pose2D], inputs: &[Input]) -> f64 {
        let tgt = Target {
            pose: target.x_ref,
            v_ref: target.v_ref,
            path,
        };
        let s = self.rollout(z0, inputs);
        self.cost(&s, inputs, &tgt)
    }

    /// Gradient of [`Nmpc::rollout_cost`] with respect to the inputs,
    /// computed with the same sensitivities the SQP uses.
    pub fn rollout_gradient(&self, z0: &State, target: &RefPoseMsg, path: &[Pose2D], inputs: &[Input]) -> Vec<f64> {
        let tgt = Target {
            pose: target.x_ref,
            v_ref: target.v_ref,
            path,
        };
        let n = inputs.len();
        let h = self.cfg.dt();
        let s = self.rollout(z0, inputs);
        let mut a_mats = Vec::with_capacity(n);
        let mut b_mats = Vec::with_capacity(n);
        for k in 0..n {
            let (_, a, b) = self.model.step_with_sens(&s[k], &inputs[k], h);
            a_mats.push(a);
            b_mats.push(b);
        }
        let mut lam = vec![Vec5::zeros(); n + 1];
        for k in (1..=n).rev() {
            let (_, g) = self.node_residuals(k, &s[k], &tgt).normal();
            lam[k] = if k == n {
                g
            } else {
                g + a_mats[k].transpose() * lam[k + 1]
            };
        }
        let wt = &self.cfg.weights;
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let g = b_mats[i].transpose() * lam[i + 1];
            out.push(2.0 * (g[0] + wt.w_dsteer * inputs[i][0]));
            out.push(2.0 * (g[1] + wt.w_accel * inputs[i][1]));
        }
        out
    }
}
