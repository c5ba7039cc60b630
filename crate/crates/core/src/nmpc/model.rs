//! Kinematic bicycle prediction model and its RK4 discretization.

use nalgebra::{SMatrix, SVector};

/// (x, y, ψ, v, δ)
pub type State = SVector<f64, 5>;
/// (steer rate, acceleration)
pub type Input = SVector<f64, 2>;
pub type StateJac = SMatrix<f64, 5, 5>;
pub type InputJac = SMatrix<f64, 5, 2>;

type Sens = SMatrix<f64, 5, 7>;

/// Kinematic bicycle referenced at the CG with slip angle β = atan(l_r·tanδ/L).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicycleModel {
    pub l_r: f64,
    pub wheelbase: f64,
}

impl BicycleModel {
    pub fn slip(&self, delta: f64) -> f64 {
        (self.l_r * delta.tan() / self.wheelbase).atan()
    }

    /// dβ/dδ
    pub fn slip_rate(&self, delta: f64) -> f64 {
        let t = delta.tan();
        let c = self.l_r / self.wheelbase;
        c * (1.0 + t * t) / (1.0 + c * c * t * t)
    }

    /// Yaw rate v·sinβ/l_r.
    pub fn yaw_rate(&self, v: f64, delta: f64) -> f64 {
        v * self.slip(delta).sin() / self.l_r
    }

    pub fn f(&self, z: &State, w: &Input) -> State {
        let beta = self.slip(z[4]);
        let (s, c) = (z[2] + beta).sin_cos();
        State::new(z[3] * c, z[3] * s, z[3] * beta.sin() / self.l_r, w[1], w[0])
    }

    pub fn jac_x(&self, z: &State) -> StateJac {
        let v = z[3];
        let beta = self.slip(z[4]);
        let db = self.slip_rate(z[4]);
        let (s, c) = (z[2] + beta).sin_cos();
        let mut j = StateJac::zeros();
        j[(0, 2)] = -v * s;
        j[(0, 3)] = c;
        j[(0, 4)] = -v * s * db;
        j[(1, 2)] = v * c;
        j[(1, 3)] = s;
        j[(1, 4)] = v * c * db;
        j[(2, 3)] = beta.sin() / self.l_r;
        j[(2, 4)] = v * beta.cos() * db / self.l_r;
        j
    }

    /// One RK4 step of length `h`.
    pub fn step(&self, z: &State, w: &Input, h: f64) -> State {
        let k1 = self.f(z, w);
        let k2 = self.f(&(z + 0.5 * h * k1), w);
        let k3 = self.f(&(z + 0.5 * h * k2), w);
        let k4 = self.f(&(z + h * k3), w);
        z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// RK4 step together with its exact derivatives with respect to z and w.
    pub fn step_with_sens(&self, z: &State, w: &Input, h: f64) -> (State, StateJac, InputJac) {
        let mut base = Sens::zeros();
        base.fixed_view_mut::<5, 5>(0, 0).copy_from(&StateJac::identity());
        let mut ju = Sens::zeros();
        ju[(3, 6)] = 1.0;
        ju[(4, 5)] = 1.0;

        let k1 = self.f(z, w);
        let s1 = self.jac_x(z) * base + ju;
        let z2 = z + 0.5 * h * k1;
        let k2 = self.f(&z2, w);
        let s2 = self.jac_x(&z2) * (base + 0.5 * h * s1) + ju;
        let z3 = z + 0.5 * h * k2;
        let k3 = self.f(&z3, w);
        let s3 = self.jac_x(&z3) * (base + 0.5 * h * s2) + ju;
        let z4 = z + h * k3;
        let k4 = self.f(&z4, w);
        let s4 = self.jac_x(&z4) * (base + h * s3) + ju;

        let next = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let sens = base + h / 6.0 * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
        let a = sens.fixed_view::<5, 5>(0, 0).into_owned();
        let b = sens.fixed_view::<5, 2>(0, 5).into_owned();
        (next, a, b)
    }
}
