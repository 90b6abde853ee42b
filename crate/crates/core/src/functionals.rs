//! Ready-made bounded path functionals.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::forward::{Functional, PathView, Query};
use crate::model::State;

fn pair(
    name: &str,
    times: Vec<f64>,
    bound: f64,
    f: impl Fn(&[PathView<'_>]) -> f64 + Send + Sync + 'static,
) -> Functional {
    Functional {
        name: name.to_string(),
        arity: 2,
        bound,
        query: Query::Times(times),
        symmetric: false,
        mean: None,
        f: Arc::new(f),
    }
}

fn x(z: &State) -> f64 {
    z.get(0)
}

/// Eight bounded pair functionals of scalar paths on `[0, t]`, mixing
/// one- and two-particle dependence, several query times and the jump
/// count.
#[must_use]
pub fn pair_battery(t: f64) -> Vec<Functional> {
    let half = t / 2.0;
    vec![
        pair("cos_first", vec![t], 1.0, move |p| {
            libm::cos(x(&p[0].state_at(t)))
        }),
        pair("cos_cos", vec![t], 1.0, move |p| {
            libm::cos(x(&p[0].state_at(t))) * libm::cos(x(&p[1].state_at(t)))
        }),
        pair("sin_sin", vec![t], 1.0, move |p| {
            libm::sin(x(&p[0].state_at(t))) * libm::sin(x(&p[1].state_at(t)))
        }),
        pair("both_positive", vec![t], 1.0, move |p| {
            f64::from(u8::from(
                x(&p[0].state_at(t)) > 0.0 && x(&p[1].state_at(t)) > 0.0,
            ))
        }),
        pair("tanh_half_tanh_end", vec![half, t], 1.0, move |p| {
            libm::tanh(x(&p[0].state_at(half))) * libm::tanh(x(&p[1].state_at(t)))
        }),
        pair("cos_difference", vec![t], 1.0, move |p| {
            libm::cos(x(&p[0].state_at(t)) - x(&p[1].state_at(t)))
        }),
        pair("gaussian_bump", vec![t], 1.0, move |p| {
            let (a, b) = (x(&p[0].state_at(t)), x(&p[1].state_at(t)));
            libm::exp(-a * a - b * b)
        }),
        Functional {
            name: "jumps_times_cos".to_string(),
            arity: 2,
            bound: 1.0,
            query: Query::FullPath,
            symmetric: false,
            mean: None,
            f: Arc::new(move |p| {
                let jumps = p[0].jumps_until(t).min(3) as f64 / 3.0;
                jumps * libm::cos(x(&p[1].state_at(t)))
            }),
        },
    ]
}

/// `z ↦ cos(z_t)`.
#[must_use]
pub fn cos_at(t: f64) -> Functional {
    Functional::at_time("cos", t, 1.0, |z| libm::cos(z.get(0)))
}

/// `z ↦ sin(z_t)`.
#[must_use]
pub fn sin_at(t: f64) -> Functional {
    Functional::at_time("sin", t, 1.0, |z| libm::sin(z.get(0)))
}

/// `z ↦ cos(2 z_t)`.
#[must_use]
pub fn cos2_at(t: f64) -> Functional {
    Functional::at_time("cos2", t, 1.0, |z| libm::cos(2.0 * z.get(0)))
}

/// `z ↦ tanh(z_t)`.
#[must_use]
pub fn tanh_at(t: f64) -> Functional {
    Functional::at_time("tanh", t, 1.0, |z| libm::tanh(z.get(0)))
}

/// `z ↦ z_t` clipped to `[-c, c]`.
#[must_use]
pub fn clipped_at(t: f64, c: f64) -> Functional {
    Functional::at_time("clipped", t, c, move |z| z.get(0).clamp(-c, c))
}

/// Unclipped first coordinate at `t`; unbounded, with `bound` recording
/// the caller's a-priori range.
#[must_use]
pub fn coordinate_at(t: f64, bound: f64) -> Functional {
    Functional::at_time("coordinate", t, bound, |z| z.get(0))
}

/// Indicator of the whole space.
#[must_use]
pub fn one() -> Functional {
    Functional::constant(1, 1.0)
}

/// `z ↦ min(#jumps of z on [0, t], cap)`.
#[must_use]
pub fn capped_jumps(t: f64, cap: usize) -> Functional {
    Functional {
        name: "capped_jumps".to_string(),
        arity: 1,
        bound: cap as f64,
        query: Query::FullPath,
        symmetric: true,
        mean: None,
        f: Arc::new(move |p| p[0].jumps_until(t).min(cap) as f64),
    }
}

/// `E[min(J, cap)]` for `J ~ Poisson(a)`.
#[must_use]
pub fn poisson_capped_mean(a: f64, cap: usize) -> f64 {
    let mut p = libm::exp(-a);
    let mut tail = 1.0;
    let mut acc = 0.0;
    for k in 0..cap {
        tail -= p;
        acc += tail;
        p *= a / (k + 1) as f64;
    }
    acc
}
