//! Linear advection `z_t + λ z_x = 0` on `x ∈ (0, 1)` with the injection
//! `u(t)` as inflow boundary and the outflow `y(t) = z(1, t)`.
//!
//! The lattice is `x_j = j·Δx`, `τ_i = i·Δτ`. The first-order upwind
//! update is
//!
//! ```text
//! z_j^{i+1} = z_j^i − c (z_j^i − z_{j−1}^i),   c = λΔτ/Δx,
//! ```
//!
//! which is stable and monotone for `c ≤ 1` and an exact shift for `c = 1`.

use crate::error::{invalid, Error, Result};
use crate::scalar::{as_multiple, Real};

const ALIGN_TOL: f64 = 1e-9;

/// Space–time lattice with transport speed `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<S> {
    speed: S,
    dx: S,
    dt: S,
    nx: usize,
    nt: usize,
    horizon: S,
}

impl<S: Real> Grid<S> {
    /// Builds a lattice; the Courant number is not checked here (see
    /// [`validate_cfl`]). `1/dx`, `horizon/dt` and the transport delay
    /// `1/speed` in units of `dt` must all be integers.
    pub fn new(speed: S, dx: S, dt: S, horizon: S) -> Result<Self> {
        for (name, v) in [
            ("speed", speed),
            ("dx", dx),
            ("dt", dt),
            ("horizon", horizon),
        ] {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(invalid(format!(
                    "grid {name} must be finite and > 0, got {v}"
                )));
            }
        }
        let nx = as_multiple(S::one(), dx, ALIGN_TOL)
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("1/dx must be an integer, got dx = {dx}")))?;
        let nt = as_multiple(horizon, dt, ALIGN_TOL)
            .filter(|&n| n > 0)
            .ok_or_else(|| invalid(format!("horizon {horizon} is not a multiple of dt = {dt}")))?;
        as_multiple(S::one() / speed, dt, ALIGN_TOL).ok_or_else(|| {
            invalid(format!(
                "transport delay 1/{speed} is not a multiple of dt = {dt}"
            ))
        })?;
        Ok(Self {
            speed,
            dx,
            dt,
            nx,
            nt,
            horizon,
        })
    }

    /// Lattice with `dt = dx / speed` (Courant number exactly 1).
    pub fn unit_courant(speed: S, dx: S, horizon: S) -> Result<Self> {
        Self::new(speed, dx, dx / speed, horizon)
    }

    /// Lattice with `dt = courant · dx / speed`.
    pub fn with_courant(speed: S, dx: S, courant: S, horizon: S) -> Result<Self> {
        Self::new(speed, dx, courant * dx / speed, horizon)
    }

    pub fn speed(&self) -> S {
        self.speed
    }
    pub fn dx(&self) -> S {
        self.dx
    }
    pub fn dt(&self) -> S {
        self.dt
    }
    /// Number of spatial cells.
    pub fn nx(&self) -> usize {
        self.nx
    }
    /// Number of time steps.
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn courant(&self) -> S {
        self.speed * self.dt / self.dx
    }

    /// Transport delay `1/speed`.
    pub fn delay(&self) -> S {
        S::one() / self.speed
    }

    pub fn delay_steps(&self) -> usize {
        as_multiple(self.delay(), self.dt, ALIGN_TOL).expect("checked at construction")
    }

    /// Index of the last control node, `T − 1/λ` in steps.
    pub fn control_steps(&self) -> usize {
        self.nt.saturating_sub(self.delay_steps())
    }

    pub fn control_horizon(&self) -> S {
        self.time(self.control_steps())
    }

    pub fn time(&self, step: usize) -> S {
        if step == self.nt {
            self.horizon
        } else {
            S::of_usize(step) * self.dt
        }
    }

    pub fn times(&self) -> Vec<S> {
        (0..=self.nt).map(|i| self.time(i)).collect()
    }

    pub fn control_times(&self) -> Vec<S> {
        (0..=self.control_steps()).map(|i| self.time(i)).collect()
    }

    /// Step index of a lattice time, if `t` is one.
    pub fn step_of(&self, t: S) -> Option<usize> {
        as_multiple(t, self.dt, ALIGN_TOL).filter(|&i| i <= self.nt)
    }

    /// Trapezoid weights over the output window `[1/λ, T]`, indexed by
    /// absolute step.
    pub fn output_weights(&self) -> Vec<S> {
        let first = self.delay_steps();
        let mut w = vec![S::zero(); self.nt + 1];
        if first >= self.nt {
            return w;
        }
        for wk in w.iter_mut().take(self.nt + 1).skip(first) {
            *wk = self.dt;
        }
        w[first] = self.dt / S::lit(2.0);
        w[self.nt] = self.dt / S::lit(2.0);
        w
    }
}

/// Checks `λΔτ/Δx ≤ 1` and returns the Courant number.
pub fn validate_cfl<S: Real>(grid: &Grid<S>) -> Result<S> {
    let c = grid.courant();
    if c > S::one() + S::lit(1e-12) {
        Err(Error::Cfl {
            courant: c.to_f64_lossy(),
        })
    } else {
        Ok(c)
    }
}

/// Anything that can be evaluated at a point in time (or space).
pub trait Signal<S> {
    fn value_at(&self, t: S) -> S;
}

impl<S, F: Fn(S) -> S> Signal<S> for F {
    fn value_at(&self, t: S) -> S {
        self(t)
    }
}

/// Injection sampled on lattice times, piecewise constant from the left:
/// the value at `times[k]` holds on `[times[k], times[k+1])` and the last
/// value holds beyond the final node.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal<S> {
    times: Vec<S>,
    values: Vec<S>,
}

impl<S: Real> ControlSignal<S> {
    pub fn new(times: Vec<S>, values: Vec<S>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid(format!(
                "control needs equally many (>= 1) times and values, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("control times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control values must be finite"));
        }
        Ok(Self { times, values })
    }

    /// Control on the lattice nodes of the control horizon `[0, T − 1/λ]`.
    pub fn on_control_horizon(grid: &Grid<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.control_steps() + 1 {
            return Err(invalid(format!(
                "control horizon has {} nodes, got {} values",
                grid.control_steps() + 1,
                values.len()
            )));
        }
        Self::new(grid.control_times(), values)
    }

    /// Samples `f` on the control-horizon nodes.
    pub fn sample_control_horizon(grid: &Grid<S>, f: impl Fn(S) -> S) -> Result<Self> {
        let times = grid.control_times();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[S] {
        &self.times
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup-norm distance between two controls on the same nodes.
    pub fn sup_distance(&self, other: &Self) -> Result<S> {
        if self.times != other.times {
            return Err(invalid("controls live on different nodes"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max))
    }
}

impl<S: Real> Signal<S> for ControlSignal<S> {
    fn value_at(&self, t: S) -> S {
        let tol = S::lit(ALIGN_TOL) * (S::one() + t.abs());
        let k = self.times.partition_point(|&x| x <= t + tol);
        self.values[k.saturating_sub(1)]
    }
}

/// Initial profile given on the spatial lattice, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialProfile<S> {
    pub dx: S,
    pub values: Vec<S>,
}

impl<S: Real> SpatialProfile<S> {
    pub fn zeros(grid: &Grid<S>) -> Self {
        Self {
            dx: grid.dx(),
            values: vec![S::zero(); grid.nx() + 1],
        }
    }
}

impl<S: Real> Signal<S> for SpatialProfile<S> {
    fn value_at(&self, x: S) -> S {
        let last = self.values.len() - 1;
        let pos = (x / self.dx).max(S::zero());
        let j = pos.floor().to_usize().unwrap_or(last).min(last);
        if j == last {
            return self.values[last];
        }
        let w = pos - S::of_usize(j);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }
}

/// Discrete solution of the transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<S> {
    /// `z[i][j] ≈ z(x_j, τ_i)`.
    pub z: Vec<Vec<S>>,
    pub inflow: ControlSignal<S>,
    /// `z(1, τ_i)` for every time step.
    pub outflow: Vec<S>,
}

/// Runs the upwind scheme from `start` (the full row at step `start_step`,
/// boundary entry included) for `steps` steps. `boundary(i)` supplies the
/// inflow at absolute step `i`; the returned rows include the start row.
pub fn upwind_advance<S: Real>(
    grid: &Grid<S>,
    start: &[S],
    start_step: usize,
    steps: usize,
    boundary: impl Fn(usize) -> S,
) -> Result<Vec<Vec<S>>> {
    let c = validate_cfl(grid)?;
    if start.len() != grid.nx() + 1 {
        return Err(invalid(format!(
            "state has {} entries, lattice has {}",
            start.len(),
            grid.nx() + 1
        )));
    }
    if start_step + steps > grid.nt() {
        return Err(invalid("advance runs past the horizon"));
    }
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(start.to_vec());
    for i in start_step..start_step + steps {
        let prev = rows.last().expect("non-empty");
        let mut next = Vec::with_capacity(prev.len());
        next.push(boundary(i + 1));
        for j in 1..prev.len() {
            next.push(prev[j] - c * (prev[j] - prev[j - 1]));
        }
        rows.push(next);
    }
    Ok(rows)
}

/// Solves the transport problem on the full horizon with initial profile
/// `z0` (one value per spatial node) and inflow `u`.
pub fn upwind_solve<S: Real>(
    grid: &Grid<S>,
    z0: &[S],
    u: &ControlSignal<S>,
) -> Result<FieldState<S>> {
    validate_cfl(grid)?;
    if z0.len() != grid.nx() + 1 {
        return Err(invalid(format!(
            "initial profile has {} entries, lattice has {}",
            z0.len(),
            grid.nx() + 1
        )));
    }
    let mut start = z0.to_vec();
    start[0] = u.value_at(S::zero());
    let z = upwind_advance(grid, &start, 0, grid.nt(), |i| u.value_at(grid.time(i)))?;
    let outflow = z.iter().map(|row| row[grid.nx()]).collect();
    Ok(FieldState {
        z,
        inflow: u.clone(),
        outflow,
    })
}

/// Outflow of the exact characteristics solution:
/// `y(t) = u(t − 1/λ)` once the first injection arrives, `z0(1 − λt)` before.
pub fn exact_shift_output<S: Real>(
    speed: S,
    z0: &impl Signal<S>,
    u: &impl Signal<S>,
    t: S,
    horizon: S,
) -> Result<S> {
    let tol = S::lit(ALIGN_TOL) * (S::one() + horizon.abs());
    if t < -tol || t > horizon + tol {
        return Err(invalid(format!("time {t} outside [0, {horizon}]")));
    }
    let delay = S::one() / speed;
    if t >= delay - tol {
        Ok(u.value_at((t - delay).max(S::zero())))
    } else {
        Ok(z0.value_at(S::one() - speed * t))
    }
}
