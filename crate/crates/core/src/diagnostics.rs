//! Lyapunov functional, dissipation, distances to shifted profiles, and
//! reconstruction of the full solution from its fibres.
//!
//! Everything here compares a fibre state against the trace of the
//! stationary profile shifted by lambda = ln m0 / alpha, the unique
//! translate whose fibre mass matches. Writing w_k = phi_k - phibar_k:
//!
//!   L    = sum_k e^{alpha k} (w_k)_+                 (Lyapunov)
//!   D    = sum_k e^{alpha k} (phi_k + phibar_k) w_k
//!                * [sign_+(w_k) - sign_+(w_{k+1})]   (dissipation)
//!   dist = sum_k e^{alpha k} |w_k|
//!
//! Between jumps dL/dt = alpha L - D with D >= 0 termwise; across a jump
//! L(pre) = e^{alpha} L(post). The three sums are taken over one shared
//! index range per sample (window widened by one below and upward until
//! the trace dies), which makes the algebraic identity
//! dist = 2 L - mass + trace_mass hold to rounding, and truncates only
//! weight below the window bottom (~ the boundary threshold).
//!
//! Fibres with m0 = 0 have no mass-matched translate; by convention their
//! distance is taken to the zero profile (L = dist = own weighted mass),
//! consistent with their solutions tending to 0.

use rayon::prelude::*;
use serde::Serialize;

use crate::fibre::FibreState;
use crate::model::{self, ModelParams};
use crate::profile::StationaryProfile;

/// Mass-matched shift lambda = ln m0 / alpha; None flags a vacuous fibre.
pub fn lambda_of(m0: f64, params: &ModelParams) -> Option<f64> {
    if m0 > 0.0 {
        Some(m0.ln() / params.alpha())
    } else {
        None
    }
}

/// Shift field mu(t, x) = lambda(m0(Theta(t, x))).
pub fn mu_of<F: Fn(f64) -> f64>(t: f64, x: f64, m0: F, params: &ModelParams) -> Option<f64> {
    lambda_of(m0(model::fibre_label(t, x)), params)
}

/// One diagnostic snapshot of a fibre against its matched trace.
#[derive(Debug, Clone, Serialize)]
pub struct FibreDiagnostics {
    pub theta: f64,
    pub t: f64,
    pub psi: f64,
    /// Mass-matched shift; None for a vacuous fibre (trace taken as 0).
    pub lambda: Option<f64>,
    pub lyapunov: f64,
    pub dissipation: f64,
    pub dist: f64,
    pub mass: f64,
    pub trace_mass: f64,
    pub tail: f64,
}

fn sign_pos(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Diagnostics against the trace at an explicit shift (None = zero trace).
pub fn sample_with_shift(
    state: &FibreState,
    profile: &StationaryProfile,
    lambda: Option<f64>,
    tail_n: i64,
) -> FibreDiagnostics {
    let alpha = state.params().alpha();
    let psi = state.psi();
    let trace = |k: i64| -> f64 {
        match lambda {
            Some(l) => profile.trace_with_phase(k, l, psi),
            None => 0.0,
        }
    };
    // shared range: one ghost below the window, above it until the trace
    // dies (profile evaluation is exactly 0 beyond its table)
    let k_lo = state.k_min() - 1;
    let mut k_hi = state.k_max();
    while trace(k_hi + 1) > 0.0 {
        k_hi += 1;
    }

    let mut lyap = 0.0;
    let mut diss = 0.0;
    let mut dist = 0.0;
    let mut mass = 0.0;
    let mut trace_mass = 0.0;
    let mut w_next = {
        let k = k_lo;
        state.phi_at(k) - trace(k)
    };
    for k in k_lo..=k_hi {
        let w = w_next;
        w_next = state.phi_at(k + 1) - trace(k + 1);
        let phi = state.phi_at(k);
        let tr = trace(k);
        let weight = (alpha * k as f64).exp();
        mass += weight * phi;
        trace_mass += weight * tr;
        dist += weight * w.abs();
        if w > 0.0 {
            lyap += weight * w;
        }
        diss += weight * (phi + tr) * w * (sign_pos(w) - sign_pos(w_next));
    }
    FibreDiagnostics {
        theta: state.theta(),
        t: state.t(),
        psi,
        lambda,
        lyapunov: lyap,
        dissipation: diss,
        dist,
        mass,
        trace_mass,
        tail: state.tail_mass(tail_n),
    }
}

/// Diagnostics against the mass-matched trace.
pub fn sample(state: &FibreState, profile: &StationaryProfile, tail_n: i64) -> FibreDiagnostics {
    let lambda = lambda_of(state.m0(), state.params());
    sample_with_shift(state, profile, lambda, tail_n)
}

pub fn lyapunov(state: &FibreState, profile: &StationaryProfile) -> f64 {
    sample(state, profile, i64::MAX).lyapunov
}

pub fn dissipation(state: &FibreState, profile: &StationaryProfile) -> f64 {
    sample(state, profile, i64::MAX).dissipation
}

/// Finite-difference residuals of dL/dt = alpha L - D over a sample
/// stream. Triples spanning a jump (phase not increasing) are skipped, so
/// the full Step stream of an evolution can be fed directly. Residuals are
/// normalized by max(L, 1e-12) at the centre sample. L is only Lipschitz
/// where some w_k changes sign, so the 90th percentile is the robust
/// statistic; the max is reported for context.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OdeResiduals {
    pub max: f64,
    pub p90: f64,
    pub count: usize,
}

pub fn lyapunov_ode_residuals(samples: &[FibreDiagnostics], alpha: f64) -> OdeResiduals {
    let mut res: Vec<f64> = Vec::new();
    for w in samples.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        if !(a.psi < b.psi && b.psi < c.psi) {
            continue;
        }
        let dt = c.t - a.t;
        if dt <= 0.0 {
            continue;
        }
        let fd = (c.lyapunov - a.lyapunov) / dt;
        let rhs = alpha * b.lyapunov - b.dissipation;
        res.push((fd - rhs).abs() / b.lyapunov.max(1e-12));
    }
    if res.is_empty() {
        return OdeResiduals {
            max: 0.0,
            p90: 0.0,
            count: 0,
        };
    }
    res.sort_by(|a, b| a.total_cmp(b));
    let p90 = res[((res.len() as f64 * 0.9).ceil() as usize).saturating_sub(1)];
    OdeResiduals {
        max: *res.last().unwrap(),
        p90,
        count: res.len(),
    }
}

/// One scattered point of the reconstructed solution h(t, .).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReconstructedPoint {
    pub x: f64,
    pub h: f64,
    pub theta: f64,
    pub k: i64,
}

/// Invert the fibre decomposition: each fibre contributes its lattice
/// values at physical positions x = k + 1 - psi. Points come back sorted
/// by x; for Q equispaced fibres they interleave into a step-1/Q grid.
pub fn reconstruct_h(fibres: &[FibreState]) -> Vec<ReconstructedPoint> {
    let mut pts: Vec<ReconstructedPoint> = Vec::new();
    for f in fibres {
        let psi = f.psi();
        for k in f.k_min()..=f.k_max() {
            pts.push(ReconstructedPoint {
                x: k as f64 + 1.0 - psi,
                h: f.phi_at(k),
                theta: f.theta(),
                k,
            });
        }
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    pts
}

/// Midpoint quadrature over theta of e^{alpha (1 - psi)} * dist, the
/// weighted L1 distance between h and the mu-shifted profile family.
pub fn ensemble_profile_distance(fibres: &[FibreState], profile: &StationaryProfile) -> f64 {
    let alpha = profile.params().alpha();
    // collect in fibre order, sum sequentially: the reduction tree of a
    // parallel sum is scheduler-dependent and would break bit-identical
    // re-runs of the reports built on this number
    let terms: Vec<f64> = fibres
        .par_iter()
        .map(|f| {
            let s = sample(f, profile, i64::MAX);
            (alpha * (1.0 - s.psi)).exp() * s.dist
        })
        .collect();
    terms.iter().sum::<f64>() / fibres.len() as f64
}

/// Same quadrature against one fixed shift for every fibre.
pub fn distance_to_single_shift(
    fibres: &[FibreState],
    profile: &StationaryProfile,
    lambda: f64,
) -> f64 {
    let alpha = profile.params().alpha();
    let terms: Vec<f64> = fibres
        .par_iter()
        .map(|f| {
            let s = sample_with_shift(f, profile, Some(lambda), i64::MAX);
            (alpha * (1.0 - s.psi)).exp() * s.dist
        })
        .collect();
    terms.iter().sum::<f64>() / fibres.len() as f64
}

/// Minimize the single-shift distance over a lambda grid.
pub fn min_distance_over_shifts(
    fibres: &[FibreState],
    profile: &StationaryProfile,
    lambdas: &[f64],
) -> (f64, f64) {
    let evaluated: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&l| (l, distance_to_single_shift(fibres, profile, l)))
        .collect();
    evaluated
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("shift grid must be nonempty")
}

/// Best matching shift for a single fibre over a lambda grid.
pub fn best_shift_for_fibre(
    state: &FibreState,
    profile: &StationaryProfile,
    lambdas: &[f64],
) -> (f64, f64) {
    let alpha = state.params().alpha();
    lambdas
        .iter()
        .map(|&l| {
            let s = sample_with_shift(state, profile, Some(l), i64::MAX);
            (l, (alpha * (1.0 - s.psi)).exp() * s.dist)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("shift grid must be nonempty")
}

/// Weighted L1 distance between two snapshots of the same fibre set taken
/// an integer time apart (same phases, so lattice positions coincide);
/// this is the recurrence metric ||h(t + 1) - h(t)||.
pub fn recurrence_distance(now: &[FibreState], later: &[FibreState]) -> f64 {
    assert_eq!(now.len(), later.len(), "snapshots must pair up");
    let terms: Vec<f64> = now
        .par_iter()
        .zip(later)
        .map(|(a, b)| {
            assert!(
                (a.theta() - b.theta()).abs() < 1e-12 && (a.psi() - b.psi()).abs() < 1e-9,
                "snapshots must share theta and phase"
            );
            let alpha = a.params().alpha();
            let k_lo = a.k_min().min(b.k_min());
            let k_hi = a.k_max().max(b.k_max());
            let mut d = 0.0;
            for k in k_lo..=k_hi {
                d += (alpha * k as f64).exp() * (b.phi_at(k) - a.phi_at(k)).abs();
            }
            (alpha * (1.0 - a.psi())).exp() * d
        })
        .collect();
    terms.iter().sum::<f64>() / now.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibre::{init_fibre_auto, SampleKind};
    use crate::profile::ProfileBuilder;
    use std::sync::OnceLock;

    fn gamma0() -> ModelParams {
        ModelParams::default()
    }

    fn shared_profile() -> &'static StationaryProfile {
        static P: OnceLock<StationaryProfile> = OnceLock::new();
        P.get_or_init(|| ProfileBuilder::new(gamma0()).build().unwrap())
    }

    /// Fibre set at the midpoint nodes theta_j = (j + 1/2) / q.
    fn fibre_set<F: Fn(f64) -> f64 + Sync>(h0: F, q: usize) -> Vec<FibreState> {
        (0..q)
            .map(|j| {
                let theta = (j as f64 + 0.5) / q as f64;
                init_fibre_auto(&h0, theta, gamma0()).unwrap()
            })
            .collect()
    }

    #[test]
    fn lambda_of_examples() {
        let p = gamma0();
        assert_eq!(lambda_of(1.0, &p), Some(0.0));
        let l = lambda_of(p.alpha().exp(), &p).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let l = lambda_of((0.5 * p.alpha()).exp(), &p).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
        assert_eq!(lambda_of(0.0, &p), None);
        assert_eq!(lambda_of(-1.0, &p), None);
    }

    #[test]
    fn stationary_state_has_zero_diagnostics() {
        let prof = shared_profile();
        let s = init_fibre_auto(|x| prof.eval(x), 0.3, gamma0()).unwrap();
        let d = sample(&s, prof, 12);
        // m0 = 1 up to lattice jitter, so lambda ~ 1e-7 and the trace is
        // a hair off the sampled values
        assert!(d.lyapunov < 1e-6, "L {}", d.lyapunov);
        assert!(d.dist < 1e-6, "dist {}", d.dist);
        assert!(d.dissipation.abs() < 1e-6, "D {}", d.dissipation);
        assert!((d.mass - d.trace_mass).abs() < 1e-6);
    }

    #[test]
    fn delta_bump_evaluates_in_closed_form() {
        let prof = shared_profile();
        let base = init_fibre_auto(|x| prof.eval(x), 0.25, gamma0()).unwrap();
        let c = 0.05;
        let k0 = 0;
        let mut vals = base.phi();
        vals[(k0 - base.k_min()) as usize] += c;
        let bumped =
            FibreState::from_values(gamma0(), 0.25, base.k_min(), vals).unwrap();
        // shift 0 keeps the trace bitwise equal to the unperturbed values
        let d = sample_with_shift(&bumped, prof, Some(0.0), 12);
        assert!((d.lyapunov - c).abs() < 1e-14, "L {}", d.lyapunov);
        assert!((d.dist - c).abs() < 1e-14);
        let phi0 = bumped.phi_at(k0);
        let tr0 = prof.trace_with_phase(k0, 0.0, bumped.psi());
        assert!((d.dissipation - (phi0 + tr0) * c).abs() < 1e-12);
        // identity dist = 2L - mass + trace_mass, exact over the shared range
        assert!((d.dist - (2.0 * d.lyapunov - d.mass + d.trace_mass)).abs() < 1e-13);
    }

    #[test]
    fn uniformly_positive_deviation_dissipates_at_the_top() {
        let prof = shared_profile();
        let base = init_fibre_auto(|x| prof.eval(x), 0.5, gamma0()).unwrap();
        let c = 0.01;
        let vals: Vec<f64> = base.phi().iter().map(|v| v + c).collect();
        let state = FibreState::from_values(gamma0(), 0.5, base.k_min(), vals).unwrap();
        let d = sample_with_shift(&state, prof, Some(0.0), 12);
        // w = c on the whole window: the sign bracket fires only at k_max
        // (and at the window bottom with weight ~ the boundary threshold)
        let k_top = state.k_max();
        let expected = (gamma0().alpha() * k_top as f64).exp()
            * (state.phi_at(k_top) + prof.trace_with_phase(k_top, 0.0, state.psi()))
            * c;
        assert!(
            (d.dissipation - expected).abs() < 1e-9,
            "D {} expected {}",
            d.dissipation,
            expected
        );
    }

    #[test]
    fn jump_relation_and_monotone_lyapunov_sequence() {
        let prof = shared_profile();
        let h0 = |x: f64| prof.eval(x) * (1.0 + 0.2 * (2.0 * std::f64::consts::PI * x).sin());
        let mut s = init_fibre_auto(h0, 0.37, gamma0()).unwrap();
        let ea = gamma0().alpha().exp();
        let mut pre: Option<FibreDiagnostics> = None;
        let mut post_ls: Vec<f64> = Vec::new();
        let mut worst_jump = 0.0f64;
        let mut min_d = f64::INFINITY;
        s.evolve_with(8.0, 1.0 / 256.0, |kind, st| match kind {
            SampleKind::PreJump => pre = Some(sample(st, prof, 12)),
            SampleKind::PostJump => {
                let d = sample(st, prof, 12);
                let p = pre.take().unwrap();
                worst_jump = worst_jump
                    .max((p.lyapunov - ea * d.lyapunov).abs() / p.lyapunov.max(1e-12));
                post_ls.push(d.lyapunov);
                min_d = min_d.min(d.dissipation);
            }
            _ => {}
        })
        .unwrap();
        assert!(worst_jump < 1e-9, "jump relation residual {worst_jump}");
        assert!(post_ls.len() >= 7);
        for pair in post_ls.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-12),
                "L(n + theta) increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(min_d >= -1e-15, "dissipation went negative: {min_d}");
    }

    #[test]
    fn lyapunov_ode_residuals_within_gate() {
        let prof = shared_profile();
        let h0 = |x: f64| prof.eval(x) * (1.0 + 0.2 * (2.0 * std::f64::consts::PI * x).sin());
        let mut s = init_fibre_auto(h0, 0.6, gamma0()).unwrap();
        let mut stream: Vec<FibreDiagnostics> = Vec::new();
        let mut discounted: Vec<(f64, f64)> = Vec::new();
        s.evolve_with(6.0, 1.0 / 256.0, |kind, st| {
            if matches!(kind, SampleKind::Step) {
                let d = sample(st, prof, 12);
                discounted.push((d.t, (-gamma0().alpha() * d.t).exp() * d.lyapunov));
                stream.push(d);
            }
        })
        .unwrap();
        let r = lyapunov_ode_residuals(&stream, gamma0().alpha());
        assert!(r.count > 1000);
        assert!(r.p90 < 1e-3, "p90 residual {} (max {})", r.p90, r.max);
        // e^{-alpha t} L is nonincreasing along jump-free stretches
        for pair in discounted.windows(2) {
            if pair[1].0 > pair[0].0 {
                assert!(
                    pair[1].1 <= pair[0].1 + 1e-9,
                    "discounted L increased at t {}",
                    pair[1].0
                );
            }
        }
    }

    #[test]
    fn dist_identity_holds_along_a_run() {
        let prof = shared_profile();
        let h0 = |x: f64| prof.eval(x) * (1.0 + 0.15 * (3.1 * x).cos().powi(2));
        let mut s = init_fibre_auto(h0, 0.8, gamma0()).unwrap();
        let mut worst = 0.0f64;
        s.evolve_with(4.0, 1.0 / 128.0, |kind, st| {
            if matches!(kind, SampleKind::Step | SampleKind::PostJump) {
                let d = sample(st, prof, 12);
                let identity = 2.0 * d.lyapunov - d.mass + d.trace_mass;
                worst = worst.max((d.dist - identity).abs() / d.dist.max(1e-12));
            }
        })
        .unwrap();
        assert!(worst < 1e-9, "identity residual {worst}");
    }

    #[test]
    fn reconstruction_recovers_the_profile() {
        let prof = shared_profile();
        let mut fibres = fibre_set(|x| prof.eval(x), 8);
        for f in &mut fibres {
            f.evolve(2.0, 1.0 / 128.0).unwrap();
        }
        let pts = reconstruct_h(&fibres);
        assert!(pts.windows(2).all(|w| w[0].x <= w[1].x));
        let alpha = gamma0().alpha();
        let mut weighted = 0.0;
        let mut sup_above_layer = 0.0f64;
        for p in &pts {
            let err = (p.h - prof.eval(p.x)).abs();
            weighted += (alpha * p.x).exp() * err / 8.0;
            // the window bottom carries the zero-ghost feed layer; it is
            // invisible in weighted norm and excluded from the sup
            if p.x > -15.0 {
                sup_above_layer = sup_above_layer.max(err);
            }
        }
        assert!(weighted < 1e-6, "weighted reconstruction error {weighted}");
        assert!(sup_above_layer < 1e-6, "sup error {sup_above_layer}");
    }

    #[test]
    fn single_fibre_reconstruction_positions_are_unit_spaced() {
        let prof = shared_profile();
        let mut f = init_fibre_auto(|x| prof.eval(x), 0.4, gamma0()).unwrap();
        f.evolve(1.3, 1.0 / 64.0).unwrap();
        let pts = reconstruct_h(std::slice::from_ref(&f));
        for w in pts.windows(2) {
            assert!((w[1].x - w[0].x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_profile_distance_vanishes_on_stationary_sets() {
        let prof = shared_profile();
        let mut fibres = fibre_set(|x| prof.eval(x), 16);
        assert!(ensemble_profile_distance(&fibres, prof) < 1e-6);
        for f in &mut fibres {
            f.evolve(3.0, 1.0 / 128.0).unwrap();
        }
        let d = ensemble_profile_distance(&fibres, prof);
        assert!(d < 1e-6, "stationary set drifted to distance {d}");
        // crude single-fibre bound: integrand <= 2 m0 e^{alpha}
        let bound = 2.0 * gamma0().alpha().exp() * 1.0001;
        assert!(d <= bound);
    }

    #[test]
    fn recurrence_metric_is_small_for_stationary_sets() {
        let prof = shared_profile();
        let mut fibres = fibre_set(|x| prof.eval(x), 8);
        for f in &mut fibres {
            f.evolve(3.0, 1.0 / 128.0).unwrap();
        }
        let now = fibres.clone();
        for f in &mut fibres {
            f.evolve(4.0, 1.0 / 128.0).unwrap();
        }
        assert!(recurrence_distance(&now, &fibres) < 1e-6);
    }

    #[test]
    fn shifted_set_is_found_by_the_shift_search() {
        let prof = shared_profile();
        let lam = 0.7;
        let mut fibres = fibre_set(|x| prof.eval(x - lam), 8);
        for f in &mut fibres {
            f.evolve(2.0, 1.0 / 128.0).unwrap();
        }
        let grid: Vec<f64> = (0..61).map(|i| -1.0 + 0.05 * i as f64).collect();
        let (best, dist) = min_distance_over_shifts(&fibres, prof, &grid);
        assert!((best - lam).abs() < 0.026, "best shift {best}");
        assert!(dist < 1e-4, "distance at best shift {dist}");
        let (bf, bd) = best_shift_for_fibre(&fibres[3], prof, &grid);
        assert!((bf - lam).abs() < 0.026);
        assert!(bd < 1e-4);
    }

    #[test]
    fn mu_field_examples() {
        let p = gamma0();
        // constant mass: mu identically 0
        assert_eq!(mu_of(2.7, -1.3, |_| 1.0, &p), Some(0.0));
        // modulated family: mu = lambda_bar + ln(1 + eps sin 2 pi theta)/alpha
        let (lam_bar, eps) = (0.5, 0.2);
        let m0 =
            |th: f64| (p.alpha() * lam_bar).exp() * (1.0 + eps * (2.0 * std::f64::consts::PI * th).sin());
        let (t, x) = (3.2, 0.45);
        let th = model::fibre_label(t, x);
        let want = lam_bar + (1.0 + eps * (2.0 * std::f64::consts::PI * th).sin()).ln() / p.alpha();
        let got = mu_of(t, x, m0, &p).unwrap();
        assert!((got - want).abs() < 1e-12);
        // 1-periodic in t
        let again = mu_of(t + 1.0, x, m0, &p).unwrap();
        assert!((got - again).abs() < 1e-12);
    }
}
