//! Discrete gradient descent with optional additive Gaussian jitter.
//!
//! One step maps `p` to `p - τ∇f(p) - n`, where `n` has independent
//! `N(0, ε²)` coordinates. With `ε = 0` no random numbers are consumed and
//! the step is the plain deterministic update.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::exprfield::DomainError;
use crate::landscape::{Point2, ScalarField};

pub const DEFAULT_GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_ESCAPE_BOUND: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("step size tau must be positive and finite, got {0}")]
    Tau(f64),
    #[error("noise scale eps must be nonnegative and finite, got {0}")]
    Eps(f64),
    #[error("max_steps must be at least 1")]
    Steps,
    #[error("grad_tol must be nonnegative, got {0}")]
    GradTol(f64),
    #[error("escape_bound must be positive, got {0}")]
    EscapeBound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentParams {
    /// Step size τ.
    pub tau: f64,
    /// Per-coordinate standard deviation ε of the jitter.
    pub eps: f64,
    pub max_steps: usize,
    /// Early stop on `‖∇f‖ ≤ grad_tol`; only consulted when `eps == 0`.
    pub grad_tol: f64,
    /// A trajectory with `|x|` or `|y|` beyond this is abandoned.
    pub escape_bound: f64,
}

impl DescentParams {
    pub fn new(tau: f64, eps: f64, max_steps: usize) -> Self {
        DescentParams {
            tau,
            eps,
            max_steps,
            grad_tol: DEFAULT_GRAD_TOL,
            escape_bound: DEFAULT_ESCAPE_BOUND,
        }
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_escape_bound(mut self, escape_bound: f64) -> Self {
        self.escape_bound = escape_bound;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ParamError::Tau(self.tau));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(ParamError::Eps(self.eps));
        }
        if self.max_steps == 0 {
            return Err(ParamError::Steps);
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return Err(ParamError::GradTol(self.grad_tol));
        }
        if self.escape_bound.is_nan() || self.escape_bound <= 0.0 {
            return Err(ParamError::EscapeBound(self.escape_bound));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.eps == 0.0
    }
}

/// Reproducible random stream keyed by `(base_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index in the cipher's stream word, so
/// distinct indices give independent sequences and the output never depends
/// on which thread consumes it.
#[derive(Debug, Clone)]
pub struct RngStream {
    base_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(stream_index);
        RngStream {
            base_seed,
            stream_index,
            rng,
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals by the Box–Muller transform.
    pub fn gaussian_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (radius * c, radius * s)
    }
}

/// One descent update from a known gradient.
pub fn apply_step(p: Point2, grad: Point2, params: &DescentParams, rng: &mut RngStream) -> Point2 {
    let moved = p - params.tau * grad;
    if params.is_noiseless() {
        return moved;
    }
    let (nx, ny) = rng.gaussian_pair();
    Point2::new(moved.x - params.eps * nx, moved.y - params.eps * ny)
}

/// `p - τ∇f(p) - n` with `n ~ N(0, ε² I)`.
pub fn step<F: ScalarField + ?Sized>(
    field: &F,
    p: Point2,
    params: &DescentParams,
    rng: &mut RngStream,
) -> Result<Point2, DomainError> {
    let sample = field.sample(p)?;
    Ok(apply_step(p, sample.grad, params, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    MaxSteps,
    GradTol,
    Escaped,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxSteps => "max_steps",
            StopReason::GradTol => "grad_tol",
            StopReason::Escaped => "escaped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub start: Point2,
    pub end: Point2,
    pub steps_taken: usize,
    pub final_grad_norm: f64,
    pub final_value: f64,
    pub stop_reason: StopReason,
}

/// Iterates [`step`] from `start` until `max_steps`, convergence (noiseless
/// runs only) or escape past `escape_bound`.
pub fn run_trajectory<F: ScalarField + ?Sized>(
    field: &F,
    start: Point2,
    params: &DescentParams,
    rng: &mut RngStream,
) -> Result<Trajectory, DomainError> {
    let mut p = start;
    let mut sample = field.sample(p)?;
    let mut steps_taken = 0;
    let mut stop_reason = StopReason::MaxSteps;
    while steps_taken < params.max_steps {
        if params.is_noiseless() && sample.grad.norm() <= params.grad_tol {
            stop_reason = StopReason::GradTol;
            break;
        }
        let next = apply_step(p, sample.grad, params, rng);
        steps_taken += 1;
        let escaped = next.x.abs() > params.escape_bound || next.y.abs() > params.escape_bound;
        if !next.is_finite() || escaped {
            if next.is_finite() {
                p = next;
            }
            stop_reason = StopReason::Escaped;
            break;
        }
        p = next;
        sample = field.sample(p)?;
    }
    let (final_value, final_grad_norm) = if stop_reason == StopReason::Escaped {
        // Far outside the region the field may not even be defined.
        match field.sample(p) {
            Ok(s) => (s.value, s.grad.norm()),
            Err(_) => (f64::NAN, f64::NAN),
        }
    } else {
        (sample.value, sample.grad.norm())
    };
    Ok(Trajectory {
        start,
        end: p,
        steps_taken,
        final_grad_norm,
        final_value,
        stop_reason,
    })
}
