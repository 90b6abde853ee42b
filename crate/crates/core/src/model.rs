//! State space, free motion, collision kernels and the Bird/Nanbu jump rules.
//!
//! Jumps are additive increments: a kernel that "sets" a new state encodes
//! it as `h = new - old`.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use crate::error::{invalid, Error, Result};
use crate::rng::keyed_gaussian;

/// Largest supported state dimension (position and velocity in R³).
pub const MAX_DIM: usize = 6;

/// A point of R^d, `d ≤ MAX_DIM`.
#[derive(Clone, Copy, PartialEq)]
pub struct State {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl State {
    /// # Panics
    /// Panics when `values.len() > MAX_DIM`.
    #[must_use]
    pub fn new(values: &[f64]) -> Self {
        assert!(values.len() <= MAX_DIM, "state dimension above {MAX_DIM}");
        let mut coords = [0.0; MAX_DIM];
        coords[..values.len()].copy_from_slice(values);
        Self {
            coords,
            dim: values.len() as u8,
        }
    }

    #[must_use]
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "state dimension above {MAX_DIM}");
        Self {
            coords: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    #[must_use]
    pub fn scalar(x: f64) -> Self {
        Self::new(&[x])
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        usize::from(self.dim)
    }

    #[must_use]
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        let d = self.dim();
        &mut self.coords[..d]
    }

    #[must_use]
    pub fn get(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    #[must_use]
    pub fn plus(&self, h: &State) -> State {
        let mut out = *self;
        for (x, dx) in out.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *x += dx;
        }
        out
    }

    #[must_use]
    pub fn minus(&self, other: &State) -> State {
        let mut out = *self;
        for (x, y) in out.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *x -= y;
        }
        out
    }

    #[must_use]
    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.as_slice().iter().all(|&x| x == 0.0)
    }

    fn vec3(&self, offset: usize) -> [f64; 3] {
        [
            self.coords[offset],
            self.coords[offset + 1],
            self.coords[offset + 2],
        ]
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Collision kernel `μ̂(z, a, dh, dk)` with total mass bounded by
/// [`CollisionKernel::mass_bound`].
///
/// The marginal `μ(z, a, dh) = μ̂(z, a, dh × R^d)` has the same total mass as
/// the joint kernel; its sampler defaults to the first component of a joint
/// draw.
pub trait CollisionKernel: Send + Sync {
    fn dim(&self) -> usize;

    /// Upper bound of `mass(z, a)` over all pairs.
    fn mass_bound(&self) -> f64;

    /// `μ̂(z, a, R^{2d})`.
    fn mass(&self, z: &State, a: &State) -> f64;

    /// `(H, K) ~ μ̂(z, a, ·, ·) / mass(z, a)`. Only called when the mass is
    /// positive.
    fn sample_joint(&self, z: &State, a: &State, rng: &mut dyn RngCore) -> (State, State);

    /// `H ~ μ(z, a, ·) / μ(z, a, R^d)`.
    fn sample_marginal(&self, z: &State, a: &State, rng: &mut dyn RngCore) -> State {
        self.sample_joint(z, a, rng).0
    }
}

/// Bird jump: `(zi + H, zj + K)`.
pub fn bird_jump(
    kernel: &dyn CollisionKernel,
    zi: &State,
    zj: &State,
    rng: &mut dyn RngCore,
) -> Result<(State, State)> {
    if !(kernel.mass(zi, zj) > 0.0) {
        return Err(Error::InvalidCall("bird_jump with zero kernel mass".into()));
    }
    let (h, k) = kernel.sample_joint(zi, zj, rng);
    Ok((zi.plus(&h), zj.plus(&k)))
}

/// Nanbu jump under `μ̂' = μ ⊗ δ_0 + δ_0 ⊗ μ`: exactly one particle moves.
pub fn nanbu_jump(
    kernel: &dyn CollisionKernel,
    zi: &State,
    zj: &State,
    rng: &mut dyn RngCore,
) -> Result<(State, State)> {
    let mi = kernel.mass(zi, zj);
    let mj = kernel.mass(zj, zi);
    let total = mi + mj;
    if !(total > 0.0) {
        return Err(Error::InvalidCall(
            "nanbu_jump with zero kernel mass".into(),
        ));
    }
    let u: f64 = rng.random::<f64>() * total;
    if u < mi {
        let h = kernel.sample_marginal(zi, zj, rng);
        Ok((zi.plus(&h), *zj))
    } else {
        let k = kernel.sample_marginal(zj, zi, rng);
        Ok((*zi, zj.plus(&k)))
    }
}

/// Maxwell collision transform for velocities.
pub fn maxwell_collision(v: [f64; 3], w: [f64; 3], nu: [f64; 3]) -> Result<([f64; 3], [f64; 3])> {
    let norm2 = dot(nu, nu);
    if !((norm2 - 1.0).abs() <= 1e-9) {
        return invalid("collision direction must be a unit vector");
    }
    Ok(maxwell_unchecked(v, w, nu))
}

fn maxwell_unchecked(v: [f64; 3], w: [f64; 3], nu: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let c = dot([w[0] - v[0], w[1] - v[1], w[2] - v[2]], nu);
    let dv = [c * nu[0], c * nu[1], c * nu[2]];
    let vs = [v[0] + dv[0], v[1] + dv[1], v[2] + dv[2]];
    let ws = [w[0] - dv[0], w[1] - dv[1], w[2] - dv[2]];
    (vs, ws)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Cross section `B(v - w, ν)`.
#[derive(Clone)]
pub enum CrossSection {
    Constant(f64),
    Custom(Arc<dyn Fn([f64; 3], [f64; 3]) -> f64 + Send + Sync>),
}

impl fmt::Debug for CrossSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossSection::Constant(b) => write!(f, "Constant({b})"),
            CrossSection::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl CrossSection {
    #[must_use]
    pub fn eval(&self, rel: [f64; 3], nu: [f64; 3]) -> f64 {
        match self {
            CrossSection::Constant(b) => *b,
            CrossSection::Custom(f) => f(rel, nu),
        }
    }

    /// `∫_{S²} B(rel, ν) dν`; exact for a constant cross section,
    /// Gauss-Legendre in `cos θ` times a periodic trapezoid rule in `φ`
    /// otherwise.
    #[must_use]
    pub fn sphere_integral(&self, rel: [f64; 3]) -> f64 {
        match self {
            CrossSection::Constant(b) => 4.0 * core::f64::consts::PI * b,
            CrossSection::Custom(_) => sphere_quadrature(|nu| self.eval(rel, nu), 32, 64),
        }
    }
}

/// Product quadrature on the unit sphere.
#[must_use]
pub fn sphere_quadrature(f: impl Fn([f64; 3]) -> f64, n_theta: usize, n_phi: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n_theta);
    let dphi = core::f64::consts::TAU / n_phi as f64;
    let mut acc = 0.0;
    for (&c, &wc) in nodes.iter().zip(&weights) {
        let s = libm::sqrt((1.0 - c * c).max(0.0));
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            acc += wc * dphi * f([s * libm::cos(phi), s * libm::sin(phi), c]);
        }
    }
    acc
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[must_use]
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn same_cell(x: [f64; 3], y: [f64; 3], delta: f64) -> bool {
    (0..3).all(|k| libm::floor(x[k] / delta) == libm::floor(y[k] / delta))
}

/// `∫_{S²} I^δ(x, y) B(v - w, ν) dν` with `I^δ(x, y) = δ^{-3} Σ_Δ 1_Δ(x) 1_Δ(y)`
/// over the cubic cells of side `δ`.
#[must_use]
pub fn mollified_mass(
    x: [f64; 3],
    v: [f64; 3],
    y: [f64; 3],
    w: [f64; 3],
    b: &CrossSection,
    delta: f64,
) -> f64 {
    if !same_cell(x, y, delta) {
        return 0.0;
    }
    let rel = [v[0] - w[0], v[1] - w[1], v[2] - w[2]];
    b.sphere_integral(rel) / (delta * delta * delta)
}

/// Kac caricature: one velocity per particle, collisions rotate `(v, w)` by
/// a uniform angle, constant mass `rate`.
#[derive(Debug, Clone)]
pub struct KacKernel {
    pub rate: f64,
}

impl CollisionKernel for KacKernel {
    fn dim(&self) -> usize {
        1
    }

    fn mass_bound(&self) -> f64 {
        self.rate
    }

    fn mass(&self, _z: &State, _a: &State) -> f64 {
        self.rate
    }

    fn sample_joint(&self, z: &State, a: &State, rng: &mut dyn RngCore) -> (State, State) {
        let theta = rng.random::<f64>() * core::f64::consts::TAU;
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let (v, w) = (z.get(0), a.get(0));
        (
            State::scalar(v * c - w * s - v),
            State::scalar(v * s + w * c - w),
        )
    }
}

/// Mollified Maxwell molecules in R³ × R³: cell indicator, cross section
/// `B`, collision direction with density proportional to `B`.
#[derive(Debug, Clone)]
pub struct MollifiedMaxwellKernel {
    pub cross_section: CrossSection,
    pub delta: f64,
    /// Upper bound of `B` and of its sphere integral divided by `4π`.
    pub b_max: f64,
}

impl MollifiedMaxwellKernel {
    #[must_use]
    pub fn constant(b: f64, delta: f64) -> Self {
        Self {
            cross_section: CrossSection::Constant(b),
            delta,
            b_max: b,
        }
    }
}

impl CollisionKernel for MollifiedMaxwellKernel {
    fn dim(&self) -> usize {
        6
    }

    fn mass_bound(&self) -> f64 {
        4.0 * core::f64::consts::PI * self.b_max / (self.delta * self.delta * self.delta)
    }

    fn mass(&self, z: &State, a: &State) -> f64 {
        mollified_mass(
            z.vec3(0),
            z.vec3(3),
            a.vec3(0),
            a.vec3(3),
            &self.cross_section,
            self.delta,
        )
    }

    fn sample_joint(&self, z: &State, a: &State, rng: &mut dyn RngCore) -> (State, State) {
        let (v, w) = (z.vec3(3), a.vec3(3));
        let rel = [v[0] - w[0], v[1] - w[1], v[2] - w[2]];
        let nu = loop {
            let nu: [f64; 3] = UnitSphere.sample(rng);
            let accept = match &self.cross_section {
                CrossSection::Constant(_) => true,
                c => rng.random::<f64>() * self.b_max < c.eval(rel, nu),
            };
            if accept {
                break nu;
            }
        };
        let (vs, ws) = maxwell_unchecked(v, w, nu);
        let h = State::new(&[0.0, 0.0, 0.0, vs[0] - v[0], vs[1] - v[1], vs[2] - v[2]]);
        let k = State::new(&[0.0, 0.0, 0.0, ws[0] - w[0], ws[1] - w[1], ws[2] - w[2]]);
        (h, k)
    }
}

/// Law of a scalar increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    Rademacher,
    Constant(f64),
    Normal { mean: f64, sd: f64 },
}

impl JumpLaw {
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            JumpLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            JumpLaw::Constant(c) => c,
            JumpLaw::Normal { mean, sd } => {
                let g: f64 = StandardNormal.sample(rng);
                mean + sd * g
            }
        }
    }

    #[must_use]
    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Rademacher => 0.0,
            JumpLaw::Constant(c) => c,
            JumpLaw::Normal { mean, .. } => mean,
        }
    }

    #[must_use]
    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::Rademacher => 1.0,
            JumpLaw::Constant(c) => c * c,
            JumpLaw::Normal { mean, sd } => mean * mean + sd * sd,
        }
    }

    /// `E[cos(u H)]`.
    #[must_use]
    pub fn cos_transform(&self, u: f64) -> f64 {
        match *self {
            JumpLaw::Rademacher => libm::cos(u),
            JumpLaw::Constant(c) => libm::cos(u * c),
            JumpLaw::Normal { mean, sd } => libm::cos(u * mean) * libm::exp(-0.5 * u * u * sd * sd),
        }
    }
}

/// Linear toy kernel: both partners receive independent increments from a
/// fixed law, regardless of their states. Constant mass `rate`.
#[derive(Debug, Clone)]
pub struct LinearToyKernel {
    pub rate: f64,
    pub jump: JumpLaw,
}

impl CollisionKernel for LinearToyKernel {
    fn dim(&self) -> usize {
        1
    }

    fn mass_bound(&self) -> f64 {
        self.rate
    }

    fn mass(&self, _z: &State, _a: &State) -> f64 {
        self.rate
    }

    fn sample_joint(&self, _z: &State, _a: &State, rng: &mut dyn RngCore) -> (State, State) {
        let h = self.jump.sample(rng);
        let k = self.jump.sample(rng);
        (State::scalar(h), State::scalar(k))
    }
}

/// A kernel with zero mass everywhere.
#[derive(Debug, Clone)]
pub struct NullKernel {
    pub dim: usize,
}

impl CollisionKernel for NullKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mass_bound(&self) -> f64 {
        0.0
    }

    fn mass(&self, _z: &State, _a: &State) -> f64 {
        0.0
    }

    fn sample_joint(&self, _z: &State, _a: &State, _rng: &mut dyn RngCore) -> (State, State) {
        (State::zeros(self.dim), State::zeros(self.dim))
    }
}

/// Motion between collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreeMotion {
    /// Pure jump process.
    Still,
    /// `x ← x + v dt` with positions in coordinates `0..3` and velocities in `3..6`.
    Transport,
    /// Euler-Maruyama Ornstein-Uhlenbeck `dX = -θ X dt + σ dW` on the global
    /// mesh `{k h}`; the state is held constant between mesh points.
    OrnsteinUhlenbeck { theta: f64, sigma: f64, step: f64 },
}

impl FreeMotion {
    #[must_use]
    pub fn is_diffusive(&self) -> bool {
        matches!(self, FreeMotion::OrnsteinUhlenbeck { .. })
    }

    /// Advances `s` from time `t0` to `t1 ≥ t0`. Diffusion increments are
    /// addressed by `(noise_seed, particle, mesh index)`, so two systems that
    /// share a particle key see the same Brownian path.
    #[must_use]
    pub fn advance(&self, s: &State, t0: f64, t1: f64, noise_seed: u64, particle: u64) -> State {
        match *self {
            FreeMotion::Still => *s,
            FreeMotion::Transport => {
                let dt = t1 - t0;
                let mut out = *s;
                let c = out.as_mut_slice();
                for k in 0..3 {
                    c[k] += c[k + 3] * dt;
                }
                out
            }
            FreeMotion::OrnsteinUhlenbeck { theta, sigma, step } => {
                let first = mesh_index_after(t0, step);
                let last = mesh_index_at_or_before(t1, step);
                let mut out = *s;
                let sq = libm::sqrt(step);
                for k in first..=last {
                    if k == 0 {
                        continue;
                    }
                    for (c, x) in out.as_mut_slice().iter_mut().enumerate() {
                        let g = keyed_gaussian(noise_seed, particle, k, c as u64);
                        *x += -theta * *x * step + sigma * sq * g;
                    }
                }
                out
            }
        }
    }
}

fn mesh_index_after(t: f64, h: f64) -> u64 {
    libm::floor(t / h + 1e-9) as u64 + 1
}

fn mesh_index_at_or_before(t: f64, h: f64) -> u64 {
    libm::floor(t / h + 1e-9) as u64
}

/// Initial law `P̃_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac(State),
    /// Independent uniform coordinates on `[lo_i, hi_i)`.
    Uniform {
        lo: State,
        hi: State,
    },
    /// Independent normal coordinates.
    Normal {
        mean: State,
        sd: f64,
    },
}

impl InitialLaw {
    #[must_use]
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac(s) => s.dim(),
            InitialLaw::Uniform { lo, .. } => lo.dim(),
            InitialLaw::Normal { mean, .. } => mean.dim(),
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> State {
        match self {
            InitialLaw::Dirac(s) => *s,
            InitialLaw::Uniform { lo, hi } => {
                let mut out = *lo;
                for (x, (&a, &b)) in out
                    .as_mut_slice()
                    .iter_mut()
                    .zip(lo.as_slice().iter().zip(hi.as_slice()))
                {
                    *x = a + (b - a) * rng.random::<f64>();
                }
                out
            }
            InitialLaw::Normal { mean, sd } => {
                let mut out = *mean;
                for x in out.as_mut_slice() {
                    let g: f64 = StandardNormal.sample(rng);
                    *x += sd * g;
                }
                out
            }
        }
    }
}

/// Bird (both partners jump) or Nanbu (exactly one partner jumps).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpMode {
    Bird,
    Nanbu,
}

/// Full model description: state dimension, free motion, kernel, jump
/// mode, initial law and the bound `Λ` on the mass of the active kernel
/// (`μ̂` for Bird, `μ̂'` for Nanbu).
#[derive(Clone)]
pub struct ModelSpec {
    pub name: &'static str,
    dim: usize,
    motion: FreeMotion,
    kernel: Arc<dyn CollisionKernel>,
    mode: JumpMode,
    initial: InitialLaw,
    lambda: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("motion", &self.motion)
            .field("mode", &self.mode)
            .field("initial", &self.initial)
            .field("lambda", &self.lambda)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Builds a model; `lambda = None` picks the smallest admissible bound.
    pub fn new(
        name: &'static str,
        motion: FreeMotion,
        kernel: Arc<dyn CollisionKernel>,
        mode: JumpMode,
        initial: InitialLaw,
        lambda: Option<f64>,
    ) -> Result<Self> {
        let dim = kernel.dim();
        if initial.dim() != dim {
            return invalid("initial law and kernel dimensions differ");
        }
        if matches!(motion, FreeMotion::Transport) && dim != 6 {
            return invalid("transport needs d = 6 (position and velocity)");
        }
        if let FreeMotion::OrnsteinUhlenbeck { theta, sigma, step } = motion {
            if !(step > 0.0) || !theta.is_finite() || !(sigma >= 0.0) {
                return invalid("invalid Ornstein-Uhlenbeck parameters");
            }
        }
        let needed = match mode {
            JumpMode::Bird => kernel.mass_bound(),
            JumpMode::Nanbu => 2.0 * kernel.mass_bound(),
        };
        let lambda = lambda.unwrap_or(needed);
        if !(lambda > 0.0) || !lambda.is_finite() {
            return invalid("Λ must be positive and finite");
        }
        if lambda < needed * (1.0 - 1e-12) {
            return invalid("Λ is below the mass bound of the active kernel");
        }
        Ok(Self {
            name,
            dim,
            motion,
            kernel,
            mode,
            initial,
            lambda,
        })
    }

    /// Kac caricature with collision rate `rate`, velocities uniform on
    /// `[-√3, √3]` (unit variance).
    pub fn kac(rate: f64, mode: JumpMode) -> Result<Self> {
        let r = libm::sqrt(3.0);
        Self::new(
            "kac",
            FreeMotion::Still,
            Arc::new(KacKernel { rate }),
            mode,
            InitialLaw::Uniform {
                lo: State::scalar(-r),
                hi: State::scalar(r),
            },
            None,
        )
    }

    /// Mollified Maxwell molecules with constant cross section `b` and cell
    /// size `delta`; positions uniform on `[0, 2δ)³`, velocities uniform on
    /// `[-1, 1)³`.
    pub fn mollified_maxwell(b: f64, delta: f64, mode: JumpMode) -> Result<Self> {
        let l = 2.0 * delta;
        Self::new(
            "maxwell",
            FreeMotion::Transport,
            Arc::new(MollifiedMaxwellKernel::constant(b, delta)),
            mode,
            InitialLaw::Uniform {
                lo: State::new(&[0.0, 0.0, 0.0, -1.0, -1.0, -1.0]),
                hi: State::new(&[l, l, l, 1.0, 1.0, 1.0]),
            },
            None,
        )
    }

    /// Linear toy model started at `z0`.
    pub fn linear_toy(rate: f64, jump: JumpLaw, z0: f64, mode: JumpMode) -> Result<Self> {
        Self::new(
            "linear",
            FreeMotion::Still,
            Arc::new(LinearToyKernel { rate, jump }),
            mode,
            InitialLaw::Dirac(State::scalar(z0)),
            None,
        )
    }

    /// Particles that never interact; `Λ` still drives the clocks.
    pub fn non_interacting(lambda: f64, motion: FreeMotion, initial: InitialLaw) -> Result<Self> {
        let dim = initial.dim();
        Self::new(
            "free",
            motion,
            Arc::new(NullKernel { dim }),
            JumpMode::Bird,
            initial,
            Some(lambda),
        )
    }

    #[must_use]
    pub fn with_motion(mut self, motion: FreeMotion) -> Self {
        self.motion = motion;
        self
    }

    #[must_use]
    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        assert_eq!(initial.dim(), self.dim, "initial law dimension mismatch");
        self.initial = initial;
        self
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[must_use]
    pub fn mode(&self) -> JumpMode {
        self.mode
    }

    #[must_use]
    pub fn motion(&self) -> &FreeMotion {
        &self.motion
    }

    #[must_use]
    pub fn kernel(&self) -> &dyn CollisionKernel {
        &*self.kernel
    }

    #[must_use]
    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    /// Mass of the active kernel at `(z, a)`.
    #[must_use]
    pub fn active_mass(&self, z: &State, a: &State) -> f64 {
        match self.mode {
            JumpMode::Bird => self.kernel.mass(z, a),
            JumpMode::Nanbu => self.kernel.mass(z, a) + self.kernel.mass(a, z),
        }
    }

    /// One candidate interaction: accept with probability
    /// `active_mass / Λ`, then apply the jump rule. Returns `None` when the
    /// candidate is thinned out.
    pub fn collide(&self, zi: &State, zj: &State, rng: &mut dyn RngCore) -> Option<(State, State)> {
        let m = self.active_mass(zi, zj);
        debug_assert!(m <= self.lambda * (1.0 + 1e-12), "mass above Λ");
        let u: f64 = rng.random();
        if !(u * self.lambda < m) {
            return None;
        }
        let out = match self.mode {
            JumpMode::Bird => bird_jump(&*self.kernel, zi, zj, rng),
            JumpMode::Nanbu => nanbu_jump(&*self.kernel, zi, zj, rng),
        };
        out.ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.4).abs() < 1e-13);
    }

    #[test]
    fn transport_is_exact() {
        let s = State::new(&[0.0, 1.0, 2.0, 1.0, -1.0, 0.5]);
        let a = FreeMotion::Transport.advance(&s, 0.0, 0.3, 0, 0);
        let b = FreeMotion::Transport.advance(
            &FreeMotion::Transport.advance(&s, 0.0, 0.1, 0, 0),
            0.1,
            0.3,
            0,
            0,
        );
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(FreeMotion::Transport.advance(&s, 0.2, 0.2, 0, 0), s);
    }

    #[test]
    fn ou_mesh_composes() {
        let m = FreeMotion::OrnsteinUhlenbeck {
            theta: 1.0,
            sigma: 0.5,
            step: 0.01,
        };
        let s = State::scalar(1.0);
        let a = m.advance(&s, 0.0, 0.5, 3, 1);
        let b = m.advance(&m.advance(&s, 0.0, 0.237, 3, 1), 0.237, 0.5, 3, 1);
        assert!((a.get(0) - b.get(0)).abs() < 1e-14);
        assert_eq!(m.advance(&s, 0.3, 0.3, 3, 1), s);
    }

    #[test]
    fn nanbu_lambda_doubles() {
        let bird = ModelSpec::kac(1.0, JumpMode::Bird).unwrap();
        let nanbu = ModelSpec::kac(1.0, JumpMode::Nanbu).unwrap();
        assert_eq!(bird.lambda(), 1.0);
        assert_eq!(nanbu.lambda(), 2.0);
        assert!(ModelSpec::new(
            "k",
            FreeMotion::Still,
            Arc::new(KacKernel { rate: 1.0 }),
            JumpMode::Nanbu,
            InitialLaw::Dirac(State::scalar(0.0)),
            Some(1.5)
        )
        .is_err());
    }

    #[test]
    fn zero_mass_jump_is_invalid_call() {
        let k = NullKernel { dim: 1 };
        let mut rng = stream(0);
        let z = State::scalar(0.0);
        assert!(matches!(
            bird_jump(&k, &z, &z, &mut rng),
            Err(Error::InvalidCall(_))
        ));
        assert!(matches!(
            nanbu_jump(&k, &z, &z, &mut rng),
            Err(Error::InvalidCall(_))
        ));
    }
}
