//! Fixed-step integration of the prolonged system, the dissipation check
//! along trajectories, a finite-difference oracle for the variational
//! equation, and ensemble contraction experiments.

pub mod signal;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, sub};
use crate::model::ControlAffineSystem;
use crate::prolong::variational_rhs;
use crate::storage::{eval_storage, QuadraticStorage};
use signal::SignalExpr;

pub use signal::ParseError;

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;
/// State norm above which integration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// A vector-valued input signal.
pub trait Signal: Send + Sync {
    fn channels(&self) -> usize;
    fn sample(&self, t: f64) -> Vec<f64>;
}

impl Signal for Vec<SignalExpr> {
    fn channels(&self) -> usize {
        self.len()
    }

    fn sample(&self, t: f64) -> Vec<f64> {
        self.iter().map(|e| e.eval(t)).collect()
    }
}

impl Signal for [SignalExpr] {
    fn channels(&self) -> usize {
        self.len()
    }

    fn sample(&self, t: f64) -> Vec<f64> {
        self.iter().map(|e| e.eval(t)).collect()
    }
}

/// Time-independent signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant(pub Vec<f64>);

impl Constant {
    pub fn zeros(m: usize) -> Self {
        Constant(vec![0.0; m])
    }
}

impl Signal for Constant {
    fn channels(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _t: f64) -> Vec<f64> {
        self.0.clone()
    }
}

/// Signal given by a closure.
pub struct FnSignal<F> {
    channels: usize,
    f: F,
}

impl<F> FnSignal<F>
where
    F: Fn(f64) -> Vec<f64> + Send + Sync,
{
    pub fn new(channels: usize, f: F) -> Self {
        Self { channels, f }
    }
}

impl<F> Signal for FnSignal<F>
where
    F: Fn(f64) -> Vec<f64> + Send + Sync,
{
    fn channels(&self) -> usize {
        self.channels
    }

    fn sample(&self, t: f64) -> Vec<f64> {
        (self.f)(t)
    }
}

/// `base(t) + offset`
pub struct Shifted<'a> {
    pub base: &'a dyn Signal,
    pub offset: Vec<f64>,
}

impl Signal for Shifted<'_> {
    fn channels(&self) -> usize {
        self.base.channels()
    }

    fn sample(&self, t: f64) -> Vec<f64> {
        let mut v = self.base.sample(t);
        axpy(&mut v, 1.0, &self.offset);
        v
    }
}

/// Uniform time grid `0, dt, ..., steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub dt: f64,
    pub t_final: f64,
}

impl Horizon {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t_final.is_finite() && t_final >= dt * (1.0 - 1e-9)) {
            return Err(Error::InvalidArgument(alloc::format!(
                "need dt > 0 and T >= dt, got dt = {dt}, T = {t_final}"
            )));
        }
        Ok(Self { dt, t_final })
    }

    pub fn steps(&self) -> usize {
        libm::round(self.t_final / self.dt) as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Grid index closest to time `t`.
    pub fn index_of(&self, t: f64) -> usize {
        libm::round(t / self.dt) as usize
    }
}

/// Solution of the prolonged system sampled on the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub dx: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub dy: Vec<Vec<f64>>,
    pub ds: Vec<f64>,
    /// Time of the first grid point outside the system domain, if any.
    /// That point is not part of the trajectory.
    pub truncated_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Cumulative trapezoid integral of `dy' du`, one entry per grid time.
    pub fn supply_integral(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            if k > 0 {
                let a = dot(&self.dy[k - 1], &self.du[k - 1]);
                let b = dot(&self.dy[k], &self.du[k]);
                acc += 0.5 * (self.times[k] - self.times[k - 1]) * (a + b);
            }
            out.push(acc);
        }
        out
    }
}

/// Base-state solution without variation.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub truncated_at: Option<f64>,
}

fn check_signal(what: &'static str, expected: usize, s: &dyn Signal) -> Result<()> {
    crate::model::check_dim(what, expected, s.channels())
}

fn guard(x: &[f64], dx: &[f64], t: f64) -> Result<()> {
    if !all_finite(x) || !all_finite(dx) || norm(x) > DIVERGENCE_NORM {
        return Err(Error::Diverged { t });
    }
    Ok(())
}

fn in_domain(sys: &ControlAffineSystem, x: &[f64]) -> bool {
    sys.domain().map_or(true, |d| d.contains(x))
}

/// Increments of one classical RK4 step of the stacked `(x, dx)` state.
/// With `du` absent only the base state is advanced.
fn rk4_increment(
    sys: &ControlAffineSystem,
    t: f64,
    dt: f64,
    x: &[f64],
    dx: &[f64],
    u: &dyn Signal,
    du: Option<&dyn Signal>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let joint = du.is_some();
    let rates = |tt: f64, xs: &[f64], dxs: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let us = u.sample(tt);
        let xd = sys.rhs(xs, &us)?;
        let dxd = match du {
            Some(du) => variational_rhs(sys, xs, &us, dxs, &du.sample(tt))?,
            None => Vec::new(),
        };
        Ok((xd, dxd))
    };
    let shifted = |base: &[f64], k: &[f64], h: f64| {
        let mut v = base.to_vec();
        axpy(&mut v, h, k);
        v
    };
    let h2 = 0.5 * dt;
    let (k1x, k1d) = rates(t, x, dx)?;
    let (k2x, k2d) = rates(
        t + h2,
        &shifted(x, &k1x, h2),
        &if joint { shifted(dx, &k1d, h2) } else { Vec::new() },
    )?;
    let (k3x, k3d) = rates(
        t + h2,
        &shifted(x, &k2x, h2),
        &if joint { shifted(dx, &k2d, h2) } else { Vec::new() },
    )?;
    let (k4x, k4d) = rates(
        t + dt,
        &shifted(x, &k3x, dt),
        &if joint { shifted(dx, &k3d, dt) } else { Vec::new() },
    )?;
    let combine = |k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..k1.len())
            .map(|i| dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    Ok((combine(&k1x, &k2x, &k3x, &k4x), combine(&k1d, &k2d, &k3d, &k4d)))
}

/// State vector updated with compensated (Kahan) summation, so rounding of
/// the many small increments does not accumulate with the step count.
#[derive(Debug, Clone)]
struct Accumulator {
    value: Vec<f64>,
    carry: Vec<f64>,
}

impl Accumulator {
    fn new(v: &[f64]) -> Self {
        Self {
            value: v.to_vec(),
            carry: vec![0.0; v.len()],
        }
    }

    fn add(&mut self, inc: &[f64]) {
        for i in 0..inc.len() {
            let y = inc[i] - self.carry[i];
            let t = self.value[i] + y;
            self.carry[i] = (t - self.value[i]) - y;
            self.value[i] = t;
        }
    }
}

/// Advances `(x, dx)` by one step; `dx` is left untouched when `du` is
/// absent.
fn rk4_step(
    sys: &ControlAffineSystem,
    t: f64,
    dt: f64,
    x: &mut Accumulator,
    dx: &mut Accumulator,
    u: &dyn Signal,
    du: Option<&dyn Signal>,
) -> Result<()> {
    let (ix, idx) = rk4_increment(sys, t, dt, &x.value, &dx.value, u, du)?;
    x.add(&ix);
    if du.is_some() {
        dx.add(&idx);
    }
    Ok(())
}

/// RK4 on the prolonged system, sampling `(x, u, y, dx, du, dy, dS)` on the
/// grid. Leaving the declared domain truncates the trajectory.
pub fn integrate_prolonged(
    sys: &ControlAffineSystem,
    x0: &[f64],
    dx0: &[f64],
    u: &dyn Signal,
    du: &dyn Signal,
    st: &QuadraticStorage,
    horizon: Horizon,
) -> Result<Trajectory> {
    let (n, m) = (sys.n(), sys.m());
    crate::model::check_dim("initial state", n, x0.len())?;
    crate::model::check_dim("initial variation", n, dx0.len())?;
    crate::model::check_dim("storage dimension", n, st.n())?;
    check_signal("input channels", m, u)?;
    check_signal("input variation channels", m, du)?;
    if !in_domain(sys, x0) {
        return Err(Error::InvalidArgument(alloc::format!("initial state {x0:?} is outside the domain")));
    }
    let steps = horizon.steps();
    let mut traj = Trajectory {
        dt: horizon.dt,
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        dx: Vec::with_capacity(steps + 1),
        du: Vec::with_capacity(steps + 1),
        dy: Vec::with_capacity(steps + 1),
        ds: Vec::with_capacity(steps + 1),
        truncated_at: None,
    };
    let record = |traj: &mut Trajectory, t: f64, x: Vec<f64>, dx: Vec<f64>| -> Result<()> {
        traj.u.push(u.sample(t));
        traj.du.push(du.sample(t));
        traj.y.push(sys.output(&x)?);
        traj.dy.push(sys.output_jacobian(&x)?.mul_vec(&dx));
        traj.ds.push(eval_storage(st, &x, &dx)?);
        traj.times.push(t);
        traj.x.push(x);
        traj.dx.push(dx);
        Ok(())
    };
    guard(x0, dx0, 0.0)?;
    record(&mut traj, 0.0, x0.to_vec(), dx0.to_vec())?;
    let mut x = Accumulator::new(x0);
    let mut dx = Accumulator::new(dx0);
    for k in 0..steps {
        let t_next = horizon.time(k + 1);
        rk4_step(sys, horizon.time(k), horizon.dt, &mut x, &mut dx, u, Some(du))?;
        guard(&x.value, &dx.value, t_next)?;
        if !in_domain(sys, &x.value) {
            traj.truncated_at = Some(t_next);
            break;
        }
        record(&mut traj, t_next, x.value.clone(), dx.value.clone())?;
    }
    Ok(traj)
}

/// RK4 on the base system only.
pub fn integrate(sys: &ControlAffineSystem, x0: &[f64], u: &dyn Signal, horizon: Horizon) -> Result<BaseTrajectory> {
    integrate_tracked(sys, x0, u, horizon).map(|(traj, _)| traj)
}

/// Base integration that also returns the summation carry at every grid
/// time; `x - carry` is the state to roughly twice working precision.
fn integrate_tracked(
    sys: &ControlAffineSystem,
    x0: &[f64],
    u: &dyn Signal,
    horizon: Horizon,
) -> Result<(BaseTrajectory, Vec<Vec<f64>>)> {
    crate::model::check_dim("initial state", sys.n(), x0.len())?;
    check_signal("input channels", sys.m(), u)?;
    if !in_domain(sys, x0) {
        return Err(Error::InvalidArgument(alloc::format!("initial state {x0:?} is outside the domain")));
    }
    guard(x0, &[], 0.0)?;
    let steps = horizon.steps();
    let mut out = BaseTrajectory {
        dt: horizon.dt,
        times: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        truncated_at: None,
    };
    out.times.push(0.0);
    out.x.push(x0.to_vec());
    let mut carries = Vec::with_capacity(steps + 1);
    carries.push(vec![0.0; x0.len()]);
    let mut x = Accumulator::new(x0);
    let mut none = Accumulator::new(&[]);
    for k in 0..steps {
        let t_next = horizon.time(k + 1);
        rk4_step(sys, horizon.time(k), horizon.dt, &mut x, &mut none, u, None)?;
        guard(&x.value, &[], t_next)?;
        if !in_domain(sys, &x.value) {
            out.truncated_at = Some(t_next);
            break;
        }
        out.times.push(t_next);
        out.x.push(x.value.clone());
        carries.push(x.carry.clone());
    }
    Ok((out, carries))
}

/// Excess of the storage increase over the supplied energy,
/// `dS(t_k) - dS(0) - int_0^t_k dy' du`, at every grid time.
pub fn dissipation_excess(traj: &Trajectory) -> Vec<f64> {
    let supply = traj.supply_integral();
    traj.ds.iter().zip(&supply).map(|(s, w)| s - traj.ds[0] - w).collect()
}

/// Largest violation of the dissipation inequality along the trajectory.
/// Differential passivity holds along it when this is at most the
/// integration tolerance.
pub fn dissipation_residual(traj: &Trajectory) -> f64 {
    dissipation_excess(traj).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationBalance {
    pub max_excess: f64,
    pub min_excess: f64,
}

impl DissipationBalance {
    /// Largest deviation from an exact energy balance.
    pub fn max_abs(&self) -> f64 {
        self.max_excess.abs().max(self.min_excess.abs())
    }
}

pub fn dissipation_balance(traj: &Trajectory) -> DissipationBalance {
    let ex = dissipation_excess(traj);
    DissipationBalance {
        max_excess: ex.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_excess: ex.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Compares the integrated variation with the difference quotient of two
/// base solutions started at `x0 +- eps/2 dir` under inputs
/// `u +- eps/2 du_dir`. Returns the largest relative error over the grid.
pub fn variational_oracle(
    sys: &ControlAffineSystem,
    x0: &[f64],
    dir: &[f64],
    u: &dyn Signal,
    du_dir: &[f64],
    eps: f64,
    horizon: Horizon,
) -> Result<f64> {
    let series = variational_oracle_series(sys, x0, dir, u, du_dir, eps, horizon)?;
    Ok(series.errors.iter().fold(0.0, |w, e| w.max(*e)))
}

/// Relative oracle error at each grid time.
#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
}

impl OracleSeries {
    /// Largest error over the grid points that fall on multiples of `dt`,
    /// for comparing runs of different step sizes at common times.
    pub fn max_on_grid(&self, dt: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.errors)
            .filter(|(t, _)| {
                let r = *t / dt;
                (r - libm::round(r)).abs() < 1e-6
            })
            .fold(0.0, |w, (_, e)| w.max(*e))
    }
}

/// Same comparison as [`variational_oracle`], keeping the whole error series.
pub fn variational_oracle_series(
    sys: &ControlAffineSystem,
    x0: &[f64],
    dir: &[f64],
    u: &dyn Signal,
    du_dir: &[f64],
    eps: f64,
    horizon: Horizon,
) -> Result<OracleSeries> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("eps must be positive, got {eps}")));
    }
    crate::model::check_dim("direction", sys.n(), dir.len())?;
    crate::model::check_dim("input direction", sys.m(), du_dir.len())?;
    let half = 0.5 * eps;
    let plus_x: Vec<f64> = x0.iter().zip(dir).map(|(a, d)| a + half * d).collect();
    let minus_x: Vec<f64> = x0.iter().zip(dir).map(|(a, d)| a - half * d).collect();
    let u_plus = Shifted {
        base: u,
        offset: du_dir.iter().map(|d| half * d).collect(),
    };
    let u_minus = Shifted {
        base: u,
        offset: du_dir.iter().map(|d| -half * d).collect(),
    };
    // The variation is driven by the perturbations actually realized in
    // floating point, so rounding of `x0 +- eps/2 dir` and of the shifted
    // input samples does not show up as oracle error.
    let realized_dir: Vec<f64> = plus_x.iter().zip(&minus_x).map(|(p, q)| (p - q) / eps).collect();
    let realized_du = FnSignal::new(sys.m(), |t| {
        let p = u_plus.sample(t);
        let q = u_minus.sample(t);
        p.iter().zip(&q).map(|(p, q)| (p - q) / eps).collect()
    });
    let (a, ca) = integrate_tracked(sys, &plus_x, &u_plus, horizon)?;
    let (b, cb) = integrate_tracked(sys, &minus_x, &u_minus, horizon)?;
    let variation = integrate_variation(sys, x0, &realized_dir, u, &realized_du, horizon)?;
    let len = a.x.len().min(b.x.len()).min(variation.len());
    let mut out = OracleSeries {
        times: a.times[..len].to_vec(),
        errors: Vec::with_capacity(len),
    };
    for k in 0..len {
        // Differencing the carries as well keeps the rounding of the two
        // nearby solutions out of the quotient.
        let fd: Vec<f64> = (0..sys.n())
            .map(|i| ((a.x[k][i] - b.x[k][i]) - (ca[k][i] - cb[k][i])) / eps)
            .collect();
        out.errors.push(norm(&sub(&fd, &variation[k])) / (norm(&variation[k]) + 1e-12));
    }
    Ok(out)
}

fn integrate_variation(
    sys: &ControlAffineSystem,
    x0: &[f64],
    dx0: &[f64],
    u: &dyn Signal,
    du: &dyn Signal,
    horizon: Horizon,
) -> Result<Vec<Vec<f64>>> {
    let mut x = Accumulator::new(x0);
    let mut dx = Accumulator::new(dx0);
    let mut out = vec![dx0.to_vec()];
    for k in 0..horizon.steps() {
        rk4_step(sys, horizon.time(k), horizon.dt, &mut x, &mut dx, u, Some(du))?;
        guard(&x.value, &dx.value, horizon.time(k + 1))?;
        if !in_domain(sys, &x.value) {
            break;
        }
        out.push(dx.value.clone());
    }
    Ok(out)
}

/// Pairwise distances of an ensemble of base solutions driven by one input.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub members: Vec<Result<BaseTrajectory>>,
    /// Index pairs of surviving members, in lexicographic order.
    pub pairs: Vec<(usize, usize)>,
    /// One distance series per entry of `pairs`.
    pub distances: Vec<Vec<f64>>,
    /// Largest pairwise distance at each time.
    pub spread: Vec<f64>,
    /// `None` when fewer than two members survive.
    pub final_spread: Option<f64>,
}

impl Ensemble {
    /// Spread at the grid time closest to `t`.
    pub fn spread_at(&self, t: f64) -> Option<f64> {
        let dt = self.times.get(1)? - self.times[0];
        self.spread.get(libm::round(t / dt) as usize).copied()
    }

    /// First grid time from which the spread stays at or below `level`.
    pub fn settling_time(&self, level: f64) -> Option<f64> {
        let last_above = self.spread.iter().rposition(|s| *s > level);
        match last_above {
            None => self.times.first().copied(),
            Some(k) => self.times.get(k + 1).copied(),
        }
    }
}

/// Integrates every member and measures pairwise distances (Euclidean, or
/// `sqrt(d' M d)` with `M` evaluated at the pair midpoint when a storage is
/// given).
pub fn ensemble_contraction(
    sys: &ControlAffineSystem,
    x0_list: &[Vec<f64>],
    u: &dyn Signal,
    horizon: Horizon,
    metric: Option<&QuadraticStorage>,
) -> Result<Ensemble> {
    if x0_list.len() < 2 {
        return Err(Error::InvalidArgument("an ensemble needs at least two initial states".into()));
    }
    let members = x0_list.iter().map(|x0| integrate(sys, x0, u, horizon)).collect();
    assemble_ensemble(members, metric)
}

/// Distance bookkeeping for already integrated members.
pub fn assemble_ensemble(members: Vec<Result<BaseTrajectory>>, metric: Option<&QuadraticStorage>) -> Result<Ensemble> {
    for m in &members {
        if let Err(e) = m {
            if !matches!(e, Error::Diverged { .. }) {
                return Err(e.clone());
            }
        }
    }
    let alive: Vec<usize> = (0..members.len()).filter(|&i| members[i].is_ok()).collect();
    let len = alive
        .iter()
        .filter_map(|&i| members[i].as_ref().ok().map(|m| m.x.len()))
        .min()
        .unwrap_or(0);
    let times = alive
        .first()
        .and_then(|&i| members[i].as_ref().ok())
        .map(|m| m.times[..len].to_vec())
        .unwrap_or_default();
    let mut pairs = Vec::new();
    let mut distances = Vec::new();
    for (a, &i) in alive.iter().enumerate() {
        for &j in &alive[a + 1..] {
            let (Ok(p), Ok(q)) = (&members[i], &members[j]) else {
                continue;
            };
            let mut series = Vec::with_capacity(len);
            for k in 0..len {
                let d = sub(&p.x[k], &q.x[k]);
                let dist = match metric {
                    None => norm(&d),
                    Some(st) => {
                        let mid: Vec<f64> = p.x[k].iter().zip(&q.x[k]).map(|(a, b)| 0.5 * (a + b)).collect();
                        libm::sqrt(st.metric(&mid)?.quad_form(&d).max(0.0))
                    }
                };
                series.push(dist);
            }
            pairs.push((i, j));
            distances.push(series);
        }
    }
    let spread: Vec<f64> = (0..if distances.is_empty() { 0 } else { len })
        .map(|k| distances.iter().map(|s| s[k]).fold(0.0, f64::max))
        .collect();
    let final_spread = spread.last().copied();
    Ok(Ensemble {
        times,
        members,
        pairs,
        distances,
        spread,
        final_spread,
    })
}

#[cfg(test)]
mod tests;
