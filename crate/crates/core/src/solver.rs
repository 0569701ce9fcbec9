//! Implicit Euler time integration of `∂ₜu + Lφ(u) = 0`.
//!
//! Each step solves, for the unknown `w = φ(u_{n+1})`,
//!
//! ```text
//!     β(w) + dt · L w = u_n ,      u_{n+1} = β(w),
//! ```
//!
//! by a damped Newton iteration. The Jacobian `diag(β′(w)) + dt L` is a
//! symmetric positive definite M-matrix (positive diagonal, nonpositive
//! off-diagonal action, diagonally dominant), which is what makes the step
//! monotone: ordered data stay ordered, nonnegativity is preserved, and the
//! linear systems are solved by Jacobi-preconditioned conjugate gradients.
//!
//! Working in `w` rather than `u` avoids the singularity of `φ′` at zero:
//! `β′` is bounded (indeed vanishes) at `w = 0`.

use crate::error::Error;
use crate::grid::Field;
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::DiscreteOperator;
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Optional relative cap `dt ≤ max(dt_initial, dt_rel_max · t)`; keeps the
    /// per-step relative error bounded on runs spanning decades of time,
    /// where a fixed dt_max would be either wasteful or inaccurate.
    pub dt_rel_max: Option<f64>,
    pub t_end: f64,
    /// L∞ residual target of the Newton iteration.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub snapshot_times: Vec<f64>,
    /// L∞ threshold below which the solution is declared extinct.
    pub extinction_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_initial: 1e-3,
            dt_min: 1e-12,
            dt_max: 1e6,
            dt_rel_max: None,
            t_end: 1.0,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            snapshot_times: Vec::new(),
            extinction_floor: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_initial && self.dt_initial <= self.dt_max)
        {
            return Err(Error::InvalidSolverConfig(format!(
                "need 0 < dt_min ≤ dt_initial ≤ dt_max, got {} / {} / {}",
                self.dt_min, self.dt_initial, self.dt_max
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidSolverConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if let Some(f) = self.dt_rel_max {
            if !(f > 0.0) {
                return Err(Error::InvalidSolverConfig(format!(
                    "dt_rel_max must be positive, got {f}"
                )));
            }
        }
        let mut prev = 0.0;
        for &t in &self.snapshot_times {
            if t < prev || t > self.t_end * (1.0 + 1e-12) {
                return Err(Error::InvalidSolverConfig(format!(
                    "snapshot_times must be sorted within [0, t_end], offender {t}"
                )));
            }
            prev = t;
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidSolverConfig(
                "newton_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_log_snapshots(mut self, t_first: f64, count: usize) -> Self {
        let mut times = vec![0.0];
        if count > 0 {
            let ratio = (self.t_end / t_first).powf(1.0 / (count.max(2) - 1) as f64);
            let mut t = t_first;
            for _ in 0..count {
                times.push(t.min(self.t_end));
                t *= ratio;
            }
        }
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * b.abs().max(1.0));
        self.snapshot_times = times;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Extinction,
    NewtonFailure,
    DtFloor,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MassPoint {
    pub time: f64,
    pub mass: f64,
    pub leaked: f64,
}

/// Time-stamped solution history plus the bookkeeping needed by the
/// verification checks.
#[derive(Debug)]
pub struct Trajectory {
    /// `(t, u(t))`, first entry always `(0, u₀)`; snapshot fields are
    /// nonnegative.
    pub snapshots: Vec<(f64, Field)>,
    /// Cumulative leaked mass `∫₀ᵗ Σ_i κ_i φ(u_i) hᴺ ds` at the snapshot
    /// times.
    pub leaked_at: Vec<f64>,
    /// Mass balance at every accepted step.
    pub mass_series: Vec<MassPoint>,
    pub events: Vec<Event>,
    /// False when the run stopped early (dt floor).
    pub complete: bool,
}

impl Trajectory {
    pub fn leaked_mass(&self) -> f64 {
        self.leaked_at.last().copied().unwrap_or(0.0)
    }

    pub fn initial_mass(&self) -> f64 {
        self.mass_series.first().map(|p| p.mass).unwrap_or(0.0)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, f)| f)
    }

    pub fn extinction_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Extinction)
            .map(|e| e.time)
    }
}

/// One implicit Euler step. Returns the new solution and the converged
/// `w = φ(u_{n+1})` (the quantity entering the leak bookkeeping).
pub fn step(
    op: &DiscreteOperator,
    nonlinearity: &NonlinearitySpec,
    u_n: &Field,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, Vec<f64>)> {
    if u_n.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if u_n.min() < 0.0 {
        return Err(Error::InvalidField(
            "implicit step requires nonnegative data".into(),
        ));
    }
    let mut ws = NewtonWorkspace::new(u_n.len());
    let w = newton_solve(op, nonlinearity, u_n.values(), dt, tol, max_iter, &mut ws)?;
    let u_next = beta_of(nonlinearity, &w)?;
    Ok((Field::new(*u_n.grid(), u_next)?, w))
}

struct NewtonWorkspace {
    residual: Vec<f64>,
    lw: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
    diag: Vec<f64>,
    cg_r: Vec<f64>,
    cg_z: Vec<f64>,
    cg_p: Vec<f64>,
    cg_ap: Vec<f64>,
}

impl NewtonWorkspace {
    fn new(n: usize) -> Self {
        NewtonWorkspace {
            residual: vec![0.0; n],
            lw: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
            diag: vec![0.0; n],
            cg_r: vec![0.0; n],
            cg_z: vec![0.0; n],
            cg_p: vec![0.0; n],
            cg_ap: vec![0.0; n],
        }
    }
}

fn beta_of(nl: &NonlinearitySpec, w: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(w.len());
    let mut min = 0.0f64;
    for &wi in w {
        let u = nl.beta_signed(wi);
        min = min.min(u);
        out.push(u.max(0.0));
    }
    if min < -1e-13 {
        return Err(Error::NegativityViolation { min });
    }
    Ok(out)
}

/// Residual `F(w) = β(w) + dt·Lw − u_n`; returns its L∞ norm.
fn residual_norm(
    op: &DiscreteOperator,
    nl: &NonlinearitySpec,
    u_n: &[f64],
    w: &[f64],
    dt: f64,
    lw: &mut [f64],
    out: &mut [f64],
) -> f64 {
    op.apply_values(w, lw);
    let mut norm = 0.0f64;
    for i in 0..w.len() {
        let r = nl.beta_signed(w[i]) + dt * lw[i] - u_n[i];
        out[i] = r;
        norm = norm.max(r.abs());
    }
    norm
}

fn newton_solve(
    op: &DiscreteOperator,
    nl: &NonlinearitySpec,
    u_n: &[f64],
    dt: f64,
    tol: f64,
    max_iter: usize,
    ws: &mut NewtonWorkspace,
) -> Result<Vec<f64>> {
    let n = u_n.len();
    let mut w: Vec<f64> = u_n.iter().map(|&u| nl.phi_signed(u.max(0.0))).collect();

    let mut norm = residual_norm(op, nl, u_n, &w, dt, &mut ws.lw, &mut ws.residual);
    let norm0 = norm.max(tol);
    if norm <= tol {
        return Ok(w);
    }
    for _ in 0..max_iter {
        // Jacobian diag(β'(w)) + dt·L and its Jacobi preconditioner
        for i in 0..n {
            ws.diag[i] = nl.beta_prime_signed(w[i]) + dt * op.diagonal(i);
        }
        // forcing: loose solves far from the root, tight near it
        let rel = (norm / norm0).clamp(1e-14, 1.0);
        let cg_tol = (0.05 * rel).clamp(1e-12, 1e-4);
        let beta_primes: Vec<f64> = (0..n).map(|i| nl.beta_prime_signed(w[i])).collect();
        let apply_jac = |v: &[f64], out: &mut [f64]| {
            op.apply_values(v, out);
            for i in 0..v.len() {
                out[i] = beta_primes[i] * v[i] + dt * out[i];
            }
        };
        for i in 0..n {
            ws.cg_r[i] = -ws.residual[i];
        }
        pcg(
            &apply_jac,
            &ws.diag,
            &ws.cg_r.clone(),
            &mut ws.delta,
            cg_tol,
            4 * n + 200,
            &mut ws.cg_r,
            &mut ws.cg_z,
            &mut ws.cg_p,
            &mut ws.cg_ap,
        );

        // Armijo backtracking on the residual norm
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..20 {
            for i in 0..n {
                ws.trial[i] = w[i] + lambda * ws.delta[i];
            }
            let trial_norm =
                residual_norm(op, nl, u_n, &ws.trial, dt, &mut ws.lw, &mut ws.cg_z);
            if trial_norm <= (1.0 - 1e-4 * lambda) * norm {
                w.copy_from_slice(&ws.trial);
                ws.residual.copy_from_slice(&ws.cg_z);
                norm = trial_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonFailure {
                residual: norm,
                iterations: max_iter,
                dt,
            });
        }
        if norm <= tol {
            // tiny negative undershoots are part of the odd extension; clamp
            for v in w.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            return Ok(w);
        }
    }
    Err(Error::NewtonFailure {
        residual: norm,
        iterations: max_iter,
        dt,
    })
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. Sequential
/// reductions keep results bit-identical across thread counts.
#[allow(clippy::too_many_arguments)]
fn pcg(
    apply: &impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    r: &mut Vec<f64>,
    z: &mut Vec<f64>,
    p: &mut Vec<f64>,
    ap: &mut Vec<f64>,
) -> usize {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    r.clear();
    r.extend_from_slice(b);
    let b_norm2: f64 = b.iter().map(|v| v * v).sum();
    if b_norm2 == 0.0 {
        return 0;
    }
    let target = rel_tol * rel_tol * b_norm2;
    z.clear();
    z.extend(r.iter().zip(diag).map(|(ri, di)| ri / di.max(1e-300)));
    p.clear();
    p.extend_from_slice(z);
    let mut rz: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    ap.resize(n, 0.0);
    for iter in 0..max_iter {
        apply(p, ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return iter;
        }
        let alpha = rz / pap;
        let mut r_norm2 = 0.0;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            r_norm2 += r[i] * r[i];
        }
        if r_norm2 <= target {
            return iter + 1;
        }
        let mut rz_new = 0.0;
        for i in 0..n {
            z[i] = r[i] / diag[i].max(1e-300);
            rz_new += r[i] * z[i];
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    max_iter
}

/// Advance `u₀` to `t_end` with adaptive time stepping: halve `dt` on Newton
/// failure, grow by 1.2 on success up to the caps. Snapshots are produced by
/// dense-output linear interpolation between accepted steps.
pub fn run(
    op: &DiscreteOperator,
    nonlinearity: &NonlinearitySpec,
    u0: &Field,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if u0.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    if u0.min() < 0.0 {
        return Err(Error::InvalidField(
            "initial datum must be nonnegative".into(),
        ));
    }
    let vol = op.grid().cell_volume();
    let nl = nonlinearity;
    let mut ws = NewtonWorkspace::new(u0.len());

    let mut snapshots: Vec<(f64, Field)> = Vec::new();
    let mut leaked_at: Vec<f64> = Vec::new();
    let mut events: Vec<Event> = Vec::new();
    let mut mass_series = vec![MassPoint {
        time: 0.0,
        mass: u0.integrate(),
        leaked: 0.0,
    }];

    let mut pending: std::collections::VecDeque<f64> = config
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0)
        .collect();
    if config
        .snapshot_times
        .first()
        .map(|&t| t == 0.0)
        .unwrap_or(true)
    {
        // t = 0 snapshot is always present
    }
    snapshots.push((0.0, u0.clone()));
    leaked_at.push(0.0);

    let mut u = u0.values().to_vec();
    let mut t = 0.0f64;
    let mut dt = config.dt_initial;
    let mut leaked = 0.0f64;
    let mut extinct = u0.linf() < config.extinction_floor;
    if extinct {
        events.push(Event {
            time: 0.0,
            kind: EventKind::Extinction,
        });
    }
    let mut complete = true;

    while t < config.t_end * (1.0 - 1e-14) {
        let mut dt_cap = config.dt_max.min(config.t_end - t);
        if let Some(frac) = config.dt_rel_max {
            dt_cap = dt_cap.min((frac * t).max(config.dt_initial));
        }
        dt = dt.min(dt_cap).max(config.dt_min);

        match newton_solve(
            op,
            nl,
            &u,
            dt,
            config.newton_tol,
            config.newton_max_iter,
            &mut ws,
        ) {
            Ok(w) => {
                let mut u_next = Vec::with_capacity(u.len());
                let mut min = 0.0f64;
                for &wi in &w {
                    let v = nl.beta_signed(wi);
                    min = min.min(v);
                    u_next.push(v.max(0.0));
                }
                if min < -1e-13 {
                    return Err(Error::NegativityViolation { min });
                }
                let t_next = t + dt;
                let leak_rate: f64 = w
                    .iter()
                    .zip(op.leak())
                    .map(|(wi, ki)| wi * ki)
                    .sum::<f64>()
                    * vol;
                let leaked_next = leaked + dt * leak_rate;

                // dense-output snapshots in (t, t_next]
                while let Some(&ts) = pending.front() {
                    if ts > t_next * (1.0 + 1e-14) {
                        break;
                    }
                    pending.pop_front();
                    let theta = ((ts - t) / dt).clamp(0.0, 1.0);
                    let interp: Vec<f64> = u
                        .iter()
                        .zip(&u_next)
                        .map(|(a, b)| a + theta * (b - a))
                        .collect();
                    snapshots.push((ts, Field::new(*op.grid(), interp)?));
                    leaked_at.push(leaked + theta * dt * leak_rate);
                }

                u = u_next;
                t = t_next;
                leaked = leaked_next;
                mass_series.push(MassPoint {
                    time: t,
                    mass: u.iter().sum::<f64>() * vol,
                    leaked,
                });
                if !extinct {
                    let linf = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if linf < config.extinction_floor {
                        extinct = true;
                        events.push(Event {
                            time: t,
                            kind: EventKind::Extinction,
                        });
                    }
                }
                dt *= 1.2;
            }
            Err(Error::NewtonFailure { .. }) => {
                events.push(Event {
                    time: t,
                    kind: EventKind::NewtonFailure,
                });
                dt *= 0.5;
                if dt < config.dt_min {
                    events.push(Event {
                        time: t,
                        kind: EventKind::DtFloor,
                    });
                    complete = false;
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }

    // any snapshots that were requested exactly at t_end (or just beyond the
    // last accepted step on an incomplete run)
    for ts in pending {
        if complete && ts <= t * (1.0 + 1e-12) {
            snapshots.push((ts, Field::new(*op.grid(), u.clone())?));
            leaked_at.push(leaked);
        }
    }

    Ok(Trajectory {
        snapshots,
        leaked_at,
        mass_series,
        events,
        complete,
    })
}

/// Assemble the operator for `(grid, kernel)` and run.
pub fn run_problem(
    grid: crate::grid::Grid,
    kernel: &crate::kernel::KernelSpec,
    nonlinearity: &NonlinearitySpec,
    u0: &Field,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let op = DiscreteOperator::assemble(grid, kernel)?;
    run(&op, nonlinearity, u0, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, Grid};
    use crate::kernel::KernelSpec;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn setup(
        n: usize,
        l: f64,
        mode: BoundaryMode,
        sigma: f64,
        m: f64,
    ) -> (Grid, DiscreteOperator, NonlinearitySpec) {
        let g = Grid::new(1, l, n, mode).unwrap();
        let k = KernelSpec::fractional_power(1, sigma).unwrap();
        let op = DiscreteOperator::assemble(g, &k).unwrap();
        let nl = NonlinearitySpec::pure_power(m).unwrap();
        (g, op, nl)
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (g, op, nl) = setup(64, 5.0, BoundaryMode::ExteriorZero, 1.0, 0.5);
        let (u1, _) = step(&op, &nl, &Field::zeros(g), 0.1, 1e-12, 50).unwrap();
        assert_eq!(u1.linf(), 0.0);
    }

    #[test]
    fn constants_are_steady_in_periodic_mode() {
        let (g, op, nl) = setup(64, 5.0, BoundaryMode::Periodic, 0.8, 0.5);
        let c = Field::constant(g, 2.5);
        let (u1, _) = step(&op, &nl, &c, 0.25, 1e-12, 50).unwrap();
        for v in u1.values() {
            assert_relative_eq!(*v, 2.5, max_relative = 1e-11);
        }
    }

    #[test]
    fn step_satisfies_discrete_mass_flux_identity() {
        let (g, op, nl) = setup(128, 10.0, BoundaryMode::ExteriorZero, 1.0, 0.75);
        let u0 = Field::from_fn(g, |x| if x[0].abs() < 2.0 { 1.0 } else { 0.0 });
        let dt = 0.05;
        let (u1, w) = step(&op, &nl, &u0, dt, 1e-12, 50).unwrap();
        let leak: f64 = w
            .iter()
            .zip(op.leak())
            .map(|(wi, ki)| wi * ki)
            .sum::<f64>()
            * g.cell_volume();
        let balance = u1.integrate() + dt * leak - u0.integrate();
        assert!(
            balance.abs() <= 1e-12 * g.cell_count() as f64,
            "imbalance {balance}"
        );
    }

    #[test]
    fn linf_contraction_in_periodic_mode() {
        let (g, op, nl) = setup(64, 3.0, BoundaryMode::Periodic, 1.2, 0.6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u0 = Field::new(
            g,
            (0..g.cell_count()).map(|_| rng.random_range(0.0..4.0)).collect(),
        )
        .unwrap();
        let bound = u0.linf();
        let (u1, _) = step(&op, &nl, &u0, 0.5, 1e-11, 50).unwrap();
        assert!(u1.linf() <= bound * (1.0 + 1e-11));
        assert!(u1.min() >= 0.0);
    }

    #[test]
    fn ordered_data_stay_ordered() {
        let (g, op, nl) = setup(96, 6.0, BoundaryMode::ExteriorZero, 0.7, 0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let lo: Vec<f64> = (0..g.cell_count())
                .map(|_| rng.random_range(0.0..1.0))
                .collect();
            let hi: Vec<f64> = lo
                .iter()
                .map(|v| v + rng.random_range(0.0..0.5))
                .collect();
            let (u1, _) = step(&op, &nl, &Field::new(g, lo).unwrap(), 0.2, 1e-12, 50).unwrap();
            let (v1, _) = step(&op, &nl, &Field::new(g, hi).unwrap(), 0.2, 1e-12, 50).unwrap();
            for (a, b) in u1.values().iter().zip(v1.values()) {
                assert!(a <= &(b + 1e-11), "order violated: {a} > {b}");
            }
        }
    }

    #[test]
    fn run_zero_initial_data_reports_extinction_at_zero() {
        let (g, op, nl) = setup(32, 2.0, BoundaryMode::ExteriorZero, 1.0, 0.5);
        let cfg = SolverConfig {
            t_end: 0.5,
            snapshot_times: vec![0.0, 0.25, 0.5],
            ..SolverConfig::default()
        };
        let traj = run(&op, &nl, &Field::zeros(g), &cfg).unwrap();
        assert_eq!(traj.extinction_time(), Some(0.0));
        assert!(traj.complete);
        for (_, f) in &traj.snapshots {
            assert_eq!(f.linf(), 0.0);
        }
    }

    #[test]
    fn run_mass_balance_and_snapshots() {
        let (g, op, nl) = setup(128, 20.0, BoundaryMode::ExteriorZero, 1.0, 0.75);
        let u0 = Field::from_fn(g, |x| (1.0 - (x[0] / 2.0).powi(2)).max(0.0));
        let cfg = SolverConfig {
            t_end: 2.0,
            dt_initial: 1e-3,
            dt_max: 0.25,
            snapshot_times: vec![0.0, 0.5, 1.0, 2.0],
            newton_tol: 1e-11,
            ..SolverConfig::default()
        };
        let traj = run(&op, &nl, &u0, &cfg).unwrap();
        assert_eq!(traj.snapshots.len(), 4);
        assert!(traj.complete);
        let m0 = traj.initial_mass();
        for p in &traj.mass_series {
            assert!(
                (p.mass + p.leaked - m0).abs() <= 1e-9 * m0,
                "mass balance broken at t={}: {}",
                p.time,
                (p.mass + p.leaked - m0).abs()
            );
        }
        // snapshot times strictly increasing, fields nonnegative
        for w in traj.snapshots.windows(2) {
            assert!(w[0].0 < w[1].0);
        }
        for (_, f) in &traj.snapshots {
            assert!(f.min() >= 0.0);
        }
        // mass leaks out, never in
        assert!(traj.leaked_mass() > 0.0);
    }

    #[test]
    fn positivity_spreads_instantaneously() {
        let (g, op, nl) = setup(256, 20.0, BoundaryMode::ExteriorZero, 1.0, 0.75);
        let u0 = Field::from_fn(g, |x| if x[0].abs() < 1.0 { 1.0 } else { 0.0 });
        let cfg = SolverConfig {
            t_end: 0.1,
            dt_initial: 1e-3,
            snapshot_times: vec![0.1],
            ..SolverConfig::default()
        };
        let traj = run(&op, &nl, &u0, &cfg).unwrap();
        let u = traj.snapshot_at(0.1).unwrap();
        assert!(u.min() > 1e-12, "min {}", u.min());
    }
}
