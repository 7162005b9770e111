use rand::Rng;
use serde::{Deserialize, Serialize};

/// Coefficients of the Lorenz system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl LorenzParams {
    pub const SIGMA_RANGE: (f64, f64) = (9.0, 11.0);
    pub const RHO_RANGE: (f64, f64) = (26.0, 30.0);
    pub const BETA_RANGE: (f64, f64) = (2.3, 3.1);

    /// The classical values σ = 10, ρ = 28, β = 8/3.
    pub fn classical() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }

    /// The non-trivial fixed point C+ = (√(β(ρ−1)), √(β(ρ−1)), ρ−1).
    pub fn fixed_point_plus(&self) -> LorenzState {
        let r = (self.beta * (self.rho - 1.0)).sqrt();
        LorenzState::new(r, r, self.rho - 1.0)
    }
}

/// A point in Lorenz state space. `x` plays the role of order flow, `y` of the
/// price change rate and `z` of volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LorenzState {
    pub const INIT_RANGE: (f64, f64) = (0.18, 0.22);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    fn axpy(self, a: f64, d: LorenzState) -> LorenzState {
        LorenzState::new(self.x + a * d.x, self.y + a * d.y, self.z + a * d.z)
    }
}

impl From<[f64; 3]> for LorenzState {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self::new(x, y, z)
    }
}

/// Right-hand side of the Lorenz system.
#[inline]
pub fn lorenz_deriv(s: LorenzState, p: LorenzParams) -> LorenzState {
    LorenzState::new(p.sigma * (s.y - s.x), s.x * (p.rho - s.z) - s.y, s.x * s.y - p.beta * s.z)
}

/// One classical fourth-order Runge–Kutta step.
#[inline]
pub fn rk4_step(s: LorenzState, p: LorenzParams, dt: f64) -> LorenzState {
    let k1 = lorenz_deriv(s, p);
    let k2 = lorenz_deriv(s.axpy(0.5 * dt, k1), p);
    let k3 = lorenz_deriv(s.axpy(0.5 * dt, k2), p);
    let k4 = lorenz_deriv(s.axpy(dt, k3), p);
    let w = dt / 6.0;
    LorenzState::new(
        s.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        s.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        s.z + w * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
    )
}

/// Draw perturbed coefficients and an initial state, uniformly and
/// independently per coordinate.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R) -> (LorenzParams, LorenzState) {
    let (s0, s1) = LorenzParams::SIGMA_RANGE;
    let (r0, r1) = LorenzParams::RHO_RANGE;
    let (b0, b1) = LorenzParams::BETA_RANGE;
    let (i0, i1) = LorenzState::INIT_RANGE;
    let params = LorenzParams {
        sigma: rng.random_range(s0..=s1),
        rho: rng.random_range(r0..=r1),
        beta: rng.random_range(b0..=b1),
    };
    let init = LorenzState::new(
        rng.random_range(i0..=i1),
        rng.random_range(i0..=i1),
        rng.random_range(i0..=i1),
    );
    (params, init)
}

/// Fixed-step RK4 integrator that counts the steps it has taken.
#[derive(Debug, Clone)]
pub struct LorenzIntegrator {
    pub state: LorenzState,
    pub params: LorenzParams,
    pub dt: f64,
    steps: u64,
}

impl LorenzIntegrator {
    pub fn new(state: LorenzState, params: LorenzParams, dt: f64) -> Self {
        Self { state, params, dt, steps: 0 }
    }

    /// Advance `n` steps. Returns `false` (leaving the offending state in
    /// place) as soon as a coordinate turns non-finite.
    pub fn advance(&mut self, n: u64) -> bool {
        for _ in 0..n {
            self.state = rk4_step(self.state, self.params, self.dt);
            self.steps += 1;
            if !self.state.is_finite() {
                return false;
            }
        }
        true
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}
