//! Per-fibre lattice dynamics.
//!
//! Along the characteristic fibre labeled theta, the solution is carried by
//! the lattice values phi_k(t) = h(t, k + 1 - psi(t, theta)) with
//! psi(t, theta) = frac(t - theta). Between jump times the phi_k obey
//!   d phi_k / dt = alpha phi_k + e^{-alpha} phi_{k-1}^2 - phi_k^2,
//! and at each jump time n + theta the indices relabel,
//!   phi_k(n + theta) = phi_{k+1}((n + theta)^-),
//! so the weighted sum sum_k e^{alpha k} phi_k drops by the factor e^{-alpha}
//! there and grows like e^{alpha t} in between: together the mass law
//! sum_k e^{alpha k} phi_k(t) = e^{alpha (psi - 1)} m0 holds for all t.
//!
//! Time is tracked segment-locally (applied jump count plus offset into the
//! current inter-jump segment), so jump times are hit exactly and no
//! frac(t - theta) is ever computed during evolution: the clock cannot
//! drift across a jump boundary. The convention at theta = 0 treats t = 0
//! as an already-applied jump (psi(0, 0) = 0, first relabeling at t = 1).
//!
//! The index window [k_min, k_max] truncates the bi-infinite system. The
//! left ghost value is fixed to 0 per the operation contract; for
//! plateau-like data this starves the lowest few indices (their feed term
//! is missing) and the deficit cascades upward, shrinking geometrically, so
//! windows are sized with the boundary threshold low enough that the
//! cascade stays below every diagnostic tolerance by the time it reaches
//! weight O(1). Jumps either shift contents down inside a fixed window
//! (dropping a below-threshold value) or relabel the window itself when the
//! left boundary carries weight; the top is extended with zeros on demand.

use serde::Serialize;

use crate::error::FibreError;
use crate::model::ModelParams;

/// Weighted boundary threshold: e^{alpha k} phi_k at the window edges must
/// stay below this times max(m0, 1) for the truncation to be harmless.
pub const BOUNDARY_THRESHOLD: f64 = 1e-14;

/// Hard cap on the window span in indices.
const WINDOW_CAP: i64 = 4096;
/// Hard floor for window relabeling.
const RELABEL_FLOOR: i64 = -(1 << 20);
/// Indices appended per top extension.
const EXTEND_CHUNK: usize = 8;

/// Which unknowns the integrator advances between jumps.
///
/// Phi integrates the lattice equation as written. Rho integrates the
/// transformed unknowns rho_k = e^{-alpha (psi - 1)} phi_k, whose equation
///   d rho_k / dt = e^{alpha (psi - 1)} (e^{-alpha} rho_{k-1}^2 - rho_k^2)
/// has no linear growth term, so sum_k e^{alpha k} rho_k = m0 is conserved
/// exactly (the quadratic terms telescope stage by stage, and jumps scale
/// rho by e^{alpha} while shifting indices). Phi values reported by the
/// accessors are identical in either mode up to integrator error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorMode {
    Phi,
    Rho,
}

/// Where in the evolution a sample callback fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    /// Once, before any stepping.
    Start,
    /// After every internal RK4 step.
    Step,
    /// Exactly at segment midpoints n + theta + 1/2.
    Mid,
    /// At a jump time, left limit (relabeling not yet applied).
    PreJump,
    /// At the same jump time, right limit.
    PostJump,
    /// Once, at the horizon.
    End,
}

#[derive(Debug, Clone)]
pub struct FibreState {
    params: ModelParams,
    theta: f64,
    /// Jumps applied so far; the theta = 0 initial state counts one.
    jumps: u64,
    /// Offset into the current segment [previous jump, next jump).
    seg_local: f64,
    k_min: i64,
    /// phi (Phi mode) or rho (Rho mode), indexed k_min..=k_max.
    values: Vec<f64>,
    mode: IntegratorMode,
    m0: f64,
    c0: f64,
    clamp_total: f64,
    clamp_events: u64,
    extensions: u64,
}

/// Per-fibre run summary for reports.
#[derive(Debug, Clone, Serialize)]
pub struct FibreSummary {
    pub theta: f64,
    pub t: f64,
    pub m0: f64,
    pub weighted_mass: f64,
    pub mass_residual: f64,
    pub sup_ok: bool,
    pub clamp_total: f64,
    pub clamp_events: u64,
    pub extensions: u64,
    pub k_min: i64,
    pub k_max: i64,
}

#[derive(Default)]
struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
        ] {
            v.resize(n, 0.0);
        }
    }
}

/// d phi_k / dt with zero left ghost.
fn rhs_phi(alpha: f64, decay: f64, src: &[f64], out: &mut [f64]) {
    let mut prev = 0.0;
    for (o, &v) in out.iter_mut().zip(src) {
        *o = alpha * v + decay * prev * prev - v * v;
        prev = v;
    }
}

/// d rho_k / dt; factor = e^{alpha (psi - 1)} at the stage time.
fn rhs_rho(factor: f64, decay: f64, src: &[f64], out: &mut [f64]) {
    let mut prev = 0.0;
    for (o, &v) in out.iter_mut().zip(src) {
        *o = factor * (decay * prev * prev - v * v);
        prev = v;
    }
}

/// Build a fibre state at t = 0 by sampling initial data on the fibre's
/// lattice positions k + 1 - psi(0, theta) (these are k + theta for
/// theta > 0 and k + 1 for theta = 0). The window must already contain the
/// data: both weighted boundary values have to sit below the threshold, or
/// the call is rejected with an estimate of the required extent.
pub fn init_fibre<F: Fn(f64) -> f64>(
    h0: F,
    theta: f64,
    k_min: i64,
    k_max: i64,
    params: ModelParams,
) -> Result<FibreState, FibreError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(FibreError::InvalidTheta(theta));
    }
    if k_max < k_min + 3 {
        return Err(FibreError::WindowCap {
            side: "right",
            cap: k_min + 3,
        });
    }
    let jumps = if theta == 0.0 { 1 } else { 0 };
    let psi0 = if theta == 0.0 { 0.0 } else { 1.0 - theta };
    let alpha = params.alpha();

    let mut values = Vec::with_capacity((k_max - k_min + 1) as usize);
    let mut m0 = 0.0;
    let mut c0 = params.plateau();
    for k in k_min..=k_max {
        let pos = k as f64 + 1.0 - psi0;
        let v = h0(pos);
        if !v.is_finite() || v < 0.0 {
            return Err(FibreError::InvalidInitialData { x: pos, value: v });
        }
        m0 += (alpha * pos).exp() * v;
        c0 = c0.max(v);
        values.push(v);
    }

    let thr = BOUNDARY_THRESHOLD * m0.max(1.0);
    let weighted = |k: i64| (alpha * k as f64).exp() * h0(k as f64 + 1.0 - psi0);
    for (side, edge, dir) in [("left", k_min, -1i64), ("right", k_max, 1)] {
        if (alpha * edge as f64).exp() * values[(edge - k_min) as usize] > thr {
            // estimate how far the window must reach
            let mut k = edge;
            let mut run = 0;
            while run < 3 && (k - edge).abs() < 400 {
                k += dir;
                if weighted(k) <= thr {
                    run += 1;
                } else {
                    run = 0;
                }
            }
            return Err(FibreError::WindowCap { side, cap: k });
        }
    }

    Ok(FibreState {
        params,
        theta,
        jumps,
        seg_local: 0.0,
        k_min,
        values,
        mode: IntegratorMode::Phi,
        m0,
        c0,
        clamp_total: 0.0,
        clamp_events: 0,
        extensions: 0,
    })
}

/// Like init_fibre but scans the sampler for an adequate window first.
pub fn init_fibre_auto<F: Fn(f64) -> f64>(
    h0: F,
    theta: f64,
    params: ModelParams,
) -> Result<FibreState, FibreError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(FibreError::InvalidTheta(theta));
    }
    let psi0 = if theta == 0.0 { 0.0 } else { 1.0 - theta };
    let alpha = params.alpha();
    let sample = |k: i64| h0(k as f64 + 1.0 - psi0);
    // rough mass scale for the threshold
    let mut m_est = 0.0;
    for k in -64..=64 {
        let v = sample(k);
        if v.is_finite() && v >= 0.0 {
            m_est += (alpha * k as f64).exp() * v;
        }
    }
    let thr = 0.1 * BOUNDARY_THRESHOLD * m_est.max(1.0);
    let scan = |start: i64, dir: i64| -> i64 {
        let mut k = start;
        let mut run = 0;
        while run < 3 && (k - start).abs() < 400 {
            let w = (alpha * k as f64).exp() * sample(k).max(0.0);
            if w <= thr {
                run += 1;
            } else {
                run = 0;
            }
            k += dir;
        }
        k
    };
    let k_min = scan(0, -1) - 2;
    let k_max = scan(1, 1) + 4;
    init_fibre(h0, theta, k_min, k_max, params)
}

impl FibreState {
    /// Build directly from lattice values at t = 0 (no window validation;
    /// the caller owns window adequacy, evolution still auto-extends).
    pub fn from_values(
        params: ModelParams,
        theta: f64,
        k_min: i64,
        phi: Vec<f64>,
    ) -> Result<Self, FibreError> {
        if !(0.0..1.0).contains(&theta) {
            return Err(FibreError::InvalidTheta(theta));
        }
        if phi.len() < 4 {
            return Err(FibreError::WindowCap {
                side: "right",
                cap: k_min + 3,
            });
        }
        let alpha = params.alpha();
        let psi0 = if theta == 0.0 { 0.0 } else { 1.0 - theta };
        let mut sum = 0.0;
        let mut c0 = params.plateau();
        for (i, &v) in phi.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(FibreError::InvalidInitialData {
                    x: (k_min + i as i64) as f64 + 1.0 - psi0,
                    value: v,
                });
            }
            sum += (alpha * (k_min + i as i64) as f64).exp() * v;
            c0 = c0.max(v);
        }
        // mass law at t = 0: sum e^{alpha k} phi = e^{alpha (psi0 - 1)} m0
        let m0 = (alpha * (1.0 - psi0)).exp() * sum;
        Ok(Self {
            params,
            theta,
            jumps: if theta == 0.0 { 1 } else { 0 },
            seg_local: 0.0,
            k_min,
            values: phi,
            mode: IntegratorMode::Phi,
            m0,
            c0,
            clamp_total: 0.0,
            clamp_events: 0,
            extensions: 0,
        })
    }

    /// Switch integrator unknowns in place (values are converted at the
    /// current phase, so this is allowed at any time).
    pub fn with_mode(mut self, mode: IntegratorMode) -> Self {
        if mode != self.mode {
            let f = (self.params.alpha() * self.psi_minus_one()).exp();
            let conv = match mode {
                IntegratorMode::Rho => 1.0 / f, // rho = e^{-alpha (psi-1)} phi
                IntegratorMode::Phi => f,
            };
            for v in &mut self.values {
                *v *= conv;
            }
            self.mode = mode;
        }
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mode(&self) -> IntegratorMode {
        self.mode
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.values.len() as i64 - 1
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Accumulated weighted magnitude clamped away from below zero.
    pub fn clamp_total(&self) -> f64 {
        self.clamp_total
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub fn extensions(&self) -> u64 {
        self.extensions
    }

    fn seg_len(&self) -> f64 {
        if self.jumps == 0 {
            self.theta
        } else {
            1.0
        }
    }

    /// psi - 1 = segment offset minus segment length, for every segment
    /// including the initial partial one.
    fn psi_minus_one(&self) -> f64 {
        self.seg_local - self.seg_len()
    }

    /// Phase psi(t, theta), right-continuous at jumps.
    pub fn psi(&self) -> f64 {
        self.psi_minus_one() + 1.0
    }

    pub fn t(&self) -> f64 {
        if self.jumps == 0 {
            self.seg_local
        } else {
            (self.jumps - 1) as f64 + self.theta + self.seg_local
        }
    }

    pub fn next_jump_time(&self) -> f64 {
        if self.jumps == 0 {
            self.theta
        } else {
            self.jumps as f64 + self.theta
        }
    }

    /// Conversion factor from stored values to phi (1 in Phi mode).
    fn phi_factor(&self) -> f64 {
        match self.mode {
            IntegratorMode::Phi => 1.0,
            IntegratorMode::Rho => (self.params.alpha() * self.psi_minus_one()).exp(),
        }
    }

    /// phi_k for k in the window, converted if needed.
    pub fn phi(&self) -> Vec<f64> {
        let f = self.phi_factor();
        self.values.iter().map(|&v| f * v).collect()
    }

    /// phi_k at one index; 0 outside the window.
    pub fn phi_at(&self, k: i64) -> f64 {
        if k < self.k_min || k > self.k_max() {
            0.0
        } else {
            self.phi_factor() * self.values[(k - self.k_min) as usize]
        }
    }

    /// sum_k e^{alpha k} phi_k over the window.
    pub fn weighted_mass(&self) -> f64 {
        let alpha = self.params.alpha();
        let f = self.phi_factor();
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (alpha * (self.k_min + i as i64) as f64).exp() * f * v)
            .sum()
    }

    /// Mass-law prediction e^{alpha (psi - 1)} m0.
    pub fn expected_weighted_mass(&self) -> f64 {
        (self.params.alpha() * self.psi_minus_one()).exp() * self.m0
    }

    /// |measured - predicted| / max(m0, tiny).
    pub fn mass_residual(&self) -> f64 {
        (self.weighted_mass() - self.expected_weighted_mass()).abs() / self.m0.max(1e-300)
    }

    /// Tightness diagnostic sum_{|k| >= n} e^{alpha k} phi_k.
    pub fn tail_mass(&self, n: i64) -> f64 {
        let alpha = self.params.alpha();
        let f = self.phi_factor();
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| (self.k_min + *i as i64).abs() >= n)
            .map(|(i, &v)| (alpha * (self.k_min + i as i64) as f64).exp() * f * v)
            .sum()
    }

    /// max phi <= max{C0, plateau} within rounding slack.
    pub fn sup_bound_check(&self, c_0: f64) -> bool {
        let bound = c_0.max(self.params.plateau()) * (1.0 + 1e-10);
        let f = self.phi_factor();
        self.values.iter().all(|&v| f * v <= bound)
    }

    /// d phi_k / dt for the current state (the phi equation regardless of
    /// integrator mode), indexed like the window.
    pub fn ode_rhs(&self) -> Vec<f64> {
        let phi = self.phi();
        let mut out = vec![0.0; phi.len()];
        rhs_phi(self.params.alpha(), self.params.decay(), &phi, &mut out);
        out
    }

    pub fn summary(&self) -> FibreSummary {
        FibreSummary {
            theta: self.theta,
            t: self.t(),
            m0: self.m0,
            weighted_mass: self.weighted_mass(),
            mass_residual: self.mass_residual(),
            sup_ok: self.sup_bound_check(self.c0),
            clamp_total: self.clamp_total,
            clamp_events: self.clamp_events,
            extensions: self.extensions,
            k_min: self.k_min,
            k_max: self.k_max(),
        }
    }

    fn rk4_step(&mut self, dt: f64, s: &mut Scratch) -> Result<(), FibreError> {
        let n = self.values.len();
        s.resize(n);
        let alpha = self.params.alpha();
        let decay = self.params.decay();
        match self.mode {
            IntegratorMode::Phi => {
                rhs_phi(alpha, decay, &self.values, &mut s.k1);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + 0.5 * dt * s.k1[i];
                }
                rhs_phi(alpha, decay, &s.tmp, &mut s.k2);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + 0.5 * dt * s.k2[i];
                }
                rhs_phi(alpha, decay, &s.tmp, &mut s.k3);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + dt * s.k3[i];
                }
                rhs_phi(alpha, decay, &s.tmp, &mut s.k4);
            }
            IntegratorMode::Rho => {
                let p0 = self.psi_minus_one();
                let f0 = (alpha * p0).exp();
                let fh = (alpha * (p0 + 0.5 * dt)).exp();
                let f1 = (alpha * (p0 + dt)).exp();
                rhs_rho(f0, decay, &self.values, &mut s.k1);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + 0.5 * dt * s.k1[i];
                }
                rhs_rho(fh, decay, &s.tmp, &mut s.k2);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + 0.5 * dt * s.k2[i];
                }
                rhs_rho(fh, decay, &s.tmp, &mut s.k3);
                for i in 0..n {
                    s.tmp[i] = self.values[i] + dt * s.k3[i];
                }
                rhs_rho(f1, decay, &s.tmp, &mut s.k4);
            }
        }
        for i in 0..n {
            self.values[i] += dt / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
        self.seg_local += dt;
        let bound = match self.mode {
            IntegratorMode::Phi => 2.0 * self.c0,
            IntegratorMode::Rho => 2.0 * self.c0 * alpha.exp(),
        };
        let wf = self.phi_factor();
        for i in 0..n {
            let v = self.values[i];
            if v < 0.0 {
                self.clamp_total += -v * wf * (alpha * (self.k_min + i as i64) as f64).exp();
                self.clamp_events += 1;
                self.values[i] = 0.0;
            } else if !(v <= bound) {
                return Err(FibreError::Unstable {
                    k: self.k_min + i as i64,
                    value: v,
                    bound,
                    t: self.t(),
                });
            }
        }
        Ok(())
    }

    /// One explicit step strictly inside the current segment.
    pub fn step(&mut self, dt: f64) -> Result<(), FibreError> {
        let room = self.seg_len() - self.seg_local;
        if !(dt > 0.0) || dt > room + 1e-12 {
            return Err(FibreError::InvalidDt { dt, max: room });
        }
        let mut s = Scratch::default();
        self.rk4_step(dt, &mut s)
    }

    /// Apply the relabeling at a jump time (the state must sit exactly at
    /// the end of its segment). Contents shift down one index inside the
    /// window when the bottom value is below threshold; otherwise the
    /// window itself is relabeled one index down, losing nothing.
    pub fn apply_jump(&mut self) -> Result<(), FibreError> {
        if (self.seg_len() - self.seg_local).abs() > 1e-9 {
            return Err(FibreError::NotAtJump {
                t: self.t(),
                next: self.next_jump_time(),
            });
        }
        let alpha = self.params.alpha();
        // at the jump instant psi = 1, so stored rho equals phi
        let threshold = BOUNDARY_THRESHOLD * self.m0.max(1.0);
        let weighted = (alpha * self.k_min as f64).exp() * self.values[0];
        if weighted <= threshold {
            let n = self.values.len();
            self.values.copy_within(1.., 0);
            self.values[n - 1] = 0.0;
        } else {
            if self.k_min <= RELABEL_FLOOR {
                return Err(FibreError::JumpMassLoss {
                    k_min: self.k_min,
                    weighted,
                    threshold,
                });
            }
            self.k_min -= 1;
        }
        if self.mode == IntegratorMode::Rho {
            let ea = alpha.exp();
            for v in &mut self.values {
                *v *= ea;
            }
        }
        self.jumps += 1;
        self.seg_local = 0.0;
        Ok(())
    }

    /// Extend the window upward while the top two weighted values are warm.
    fn maybe_extend_top(&mut self) -> Result<(), FibreError> {
        let alpha = self.params.alpha();
        let thr = 0.01 * BOUNDARY_THRESHOLD * self.m0.max(1.0);
        loop {
            let n = self.values.len();
            let top = (alpha * self.k_max() as f64).exp() * self.values[n - 1];
            let top2 = (alpha * (self.k_max() - 1) as f64).exp() * self.values[n - 2];
            if top <= thr && top2 <= thr {
                return Ok(());
            }
            if self.k_max() - self.k_min >= WINDOW_CAP {
                return Err(FibreError::WindowCap {
                    side: "right",
                    cap: self.k_max(),
                });
            }
            self.values.extend(std::iter::repeat_n(0.0, EXTEND_CHUNK));
            self.extensions += 1;
        }
    }

    /// Advance to the horizon, landing exactly on every jump time and on
    /// segment midpoints, firing the sample callback as labeled. A horizon
    /// on a jump time ends in the post-jump (right-continuous) state.
    pub fn evolve_with<F: FnMut(SampleKind, &FibreState)>(
        &mut self,
        t_end: f64,
        dt_max: f64,
        mut on_sample: F,
    ) -> Result<(), FibreError> {
        if !(dt_max > 0.0) || !dt_max.is_finite() {
            return Err(FibreError::InvalidDt {
                dt: dt_max,
                max: f64::INFINITY,
            });
        }
        if !t_end.is_finite() || t_end < self.t() - 1e-12 {
            return Err(FibreError::InvalidDt {
                dt: t_end - self.t(),
                max: f64::INFINITY,
            });
        }
        let mut scratch = Scratch::default();
        on_sample(SampleKind::Start, self);
        loop {
            let t_now = self.t();
            if t_end - t_now <= 1e-12 {
                break;
            }
            self.maybe_extend_top()?;
            let next_jump = self.next_jump_time();
            let jump_now = next_jump <= t_end + 1e-12;
            let seg_target = if jump_now {
                self.seg_len()
            } else {
                self.seg_local + (t_end - t_now)
            };
            let mid = self.seg_len() - 0.5;
            let mut targets: [(f64, bool); 2] = [(seg_target, false); 2];
            let mut nt = 0;
            if self.jumps >= 1 && self.seg_local < mid - 1e-12 && seg_target > mid + 1e-12 {
                targets[nt] = (mid, true);
                nt += 1;
            }
            targets[nt] = (seg_target, false);
            nt += 1;
            for &(local_target, is_mid) in &targets[..nt] {
                let span = local_target - self.seg_local;
                if span > 1e-15 {
                    let steps = (span / dt_max).ceil().max(1.0) as usize;
                    let dt = span / steps as f64;
                    let start = self.seg_local;
                    for i in 1..=steps {
                        self.rk4_step(dt, &mut scratch)?;
                        // pin the local clock against fp accumulation
                        self.seg_local = start + i as f64 * dt;
                        on_sample(SampleKind::Step, self);
                    }
                }
                self.seg_local = local_target;
                if is_mid {
                    on_sample(SampleKind::Mid, self);
                }
            }
            if jump_now {
                on_sample(SampleKind::PreJump, self);
                self.apply_jump()?;
                on_sample(SampleKind::PostJump, self);
                self.maybe_extend_top()?;
            }
        }
        on_sample(SampleKind::End, self);
        Ok(())
    }

    /// evolve_with without sampling.
    pub fn evolve(&mut self, t_end: f64, dt_max: f64) -> Result<(), FibreError> {
        self.evolve_with(t_end, dt_max, |_, _| {})
    }
}
