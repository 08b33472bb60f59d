//! Full-scale acceptance gate. Each numbered criterion prints exactly one
//! PASS/FAIL line with the governing measurements; the test fails if any
//! criterion does. Scale matches the canned configs: gamma 0, horizon 30,
//! 64 fibres, dt 2^-8, grid dx 2^-8, profile table dx 2^-10.

use coag_core::experiments::{self, ExperimentConfig, ExperimentReport, Scenario};
use coag_core::model::{self, ModelParams};

struct Criterion {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn v(report: &ExperimentReport, name: &str) -> (bool, f64) {
    let v = report
        .verdicts
        .iter()
        .find(|v| v.name == name)
        .unwrap_or_else(|| panic!("missing verdict {name} in {}", report.scenario));
    (v.pass, v.value)
}

fn full_cfg() -> ExperimentConfig {
    ExperimentConfig::default()
}

#[test]
fn acceptance() {
    let base = tempfile::tempdir().unwrap();
    let run = |s: Scenario, cfg: &ExperimentConfig| -> ExperimentReport {
        experiments::run(s, cfg, &base.path().join(s.name())).unwrap()
    };

    let stationary = run(Scenario::StationaryValidate, &full_cfg());
    let converge = run(Scenario::ConvergeConstantM0, &full_cfg());
    let oscillate = run(Scenario::Oscillate, &full_cfg());
    let uniqueness = run(Scenario::Uniqueness, &full_cfg());
    let oracle = run(Scenario::OracleCompare, &full_cfg());

    let mut criteria: Vec<Criterion> = Vec::new();

    // 1. The constructed profile satisfies its defining identities: the
    //    window integral relation at every resolved point and unit
    //    weighted lattice sums across phases.
    {
        let (p1, integral) = v(&stationary, "integral-identity-residual");
        let (p2, lattice) = v(&stationary, "lattice-sum-deviation");
        let (p3, rises) = v(&stationary, "monotonicity-violations");
        criteria.push(Criterion {
            name: "stationary-profile-identities",
            pass: p1 && p2 && p3,
            detail: format!(
                "integral residual {integral:.2e} < 1e-5, lattice deviation {lattice:.2e} < 1e-6, rises {rises}"
            ),
        });
    }

    // 2. The decay exponent solves its equation and matches an
    //    independent bisection oracle.
    {
        let (p1, eq) = v(&stationary, "sigma-equation-residual");
        let (p2, bis) = v(&stationary, "sigma-vs-bisection");
        criteria.push(Criterion {
            name: "decay-exponent",
            pass: p1 && p2,
            detail: format!("equation residual {eq:.2e} < 1e-12, vs bisection {bis:.2e} < 1e-10"),
        });
    }

    // 3. Fibre evolution respects the conservation structure: the mass
    //    law to 1e-6 over the full horizon, the sup bound everywhere,
    //    negativity clamping at rounding level.
    {
        let mut pass = true;
        let mut worst_mass: f64 = 0.0;
        let mut worst_clamp: f64 = 0.0;
        for rep in [&converge, &oscillate, &uniqueness] {
            let (p1, m) = v(rep, "mass-law-residual");
            let (p2, c) = v(rep, "negativity-clamp");
            let (p3, _) = v(rep, "sup-bound");
            pass &= p1 && p2 && p3;
            worst_mass = worst_mass.max(m);
            worst_clamp = worst_clamp.max(c);
        }
        criteria.push(Criterion {
            name: "fibre-conservation-laws",
            pass,
            detail: format!(
                "mass residual {worst_mass:.2e} < 1e-6, clamp {worst_clamp:.2e} < 1e-10, sup bound held"
            ),
        });
    }

    // 4. The Lyapunov functional dissipates: post-jump sequence
    //    nonincreasing, exact jump relation, and the ODE it satisfies
    //    between jumps verified by finite differences.
    {
        let mut pass = true;
        let mut worst_rise: f64 = 0.0;
        let mut worst_jump: f64 = 0.0;
        let mut worst_p90: f64 = 0.0;
        for rep in [&converge, &oscillate] {
            let (p1, r) = v(rep, "lyapunov-post-jump-monotone");
            let (p2, j) = v(rep, "lyapunov-jump-relation");
            let (p3, o) = v(rep, "lyapunov-ode-p90");
            pass &= p1 && p2 && p3;
            worst_rise = worst_rise.max(r);
            worst_jump = worst_jump.max(j);
            worst_p90 = worst_p90.max(o);
        }
        criteria.push(Criterion {
            name: "lyapunov-dissipation",
            pass,
            detail: format!(
                "monotone rise {worst_rise:.2e} < 1e-9, jump relation {worst_jump:.2e} < 1e-9, ode p90 {worst_p90:.2e} < 1e-3"
            ),
        });
    }

    // 5. The long-time dichotomy: constant per-fibre mass converges to a
    //    single shifted profile; modulated mass settles on a periodic
    //    orbit that no uniform shift approximates, with each fibre locked
    //    to the shift its own mass dictates.
    {
        let (p1, ratio_c) = v(&converge, "distance-decay-ratio");
        let (p2, ratio_o) = v(&oscillate, "distance-decay-ratio");
        let (p3, rec) = v(&oscillate, "recurrence-decay-ratio");
        let (p4, floor) = v(&oscillate, "no-single-shift-limit");
        let (p5, shift) = v(&oscillate, "per-fibre-shift-recovery");
        let (p6, m0) = v(&oscillate, "m0-matches-prediction");
        criteria.push(Criterion {
            name: "long-time-dichotomy",
            pass: p1 && p2 && p3 && p4 && p5 && p6,
            detail: format!(
                "constant-m0 ratio {ratio_c:.2e} < 1e-2, modulated ratio {ratio_o:.2e} < 1e-2, recurrence {rec:.2e} < 1e-3, min shift distance {floor:.2e} above floor, shift recovery {shift:.2e} < 2e-2, m0 {m0:.2e} < 1e-6"
            ),
        });
    }

    // 6. Uniqueness up to translation: amplitude rescaling is exactly a
    //    shift, normalization removes it, and the normalized profile is
    //    stable under a mass-neutral kick.
    {
        let (p1, raw) = v(&uniqueness, "amplitude-shift-identity");
        let (p2, norm) = v(&uniqueness, "normalized-profiles-coincide");
        let (p3, shift) = v(&uniqueness, "residual-shift-magnitude");
        let (p4, relax) = v(&uniqueness, "distance-decay-ratio");
        criteria.push(Criterion {
            name: "uniqueness-up-to-translation",
            pass: p1 && p2 && p3 && p4,
            detail: format!(
                "scaling vs translation {raw:.2e} < 1e-4, normalized gap {norm:.2e} < 1e-4, residual shift {shift:.2e}, relax ratio {relax:.2e} < 1e-2"
            ),
        });
    }

    // 7. The fibre integrator agrees with the direct space-time grid at
    //    first order, with conserved grid mass and matching integrals.
    {
        let (p1, zero) = v(&oracle, "t0-agreement");
        let (p2, sup) = v(&oracle, "grid-fibre-sup");
        let (p3, slope) = v(&oracle, "refinement-slope-near-one");
        let (p4, drift) = v(&oracle, "grid-mass-drift");
        let (p5, mass) = v(&oracle, "mass-agreement");
        criteria.push(Criterion {
            name: "grid-oracle-agreement",
            pass: p1 && p2 && p3 && p4 && p5,
            detail: format!(
                "t0 sup {zero:.1e}, sup gap {sup:.2e} < 5e-3, slope defect {slope:.2e} < 0.2, grid drift {drift:.2e} < 1e-3, mass gap {mass:.2e} < 1e-3"
            ),
        });
    }

    // 8. The rescaled picture maps back to the original variables: the
    //    transform chain round-trips, the mass identity carries the
    //    (1 - gamma) factor exactly, and rescaled snapshots collapse onto
    //    one curve at fixed similarity coordinate.
    {
        let params = ModelParams::new(0.0).unwrap();
        let mut worst_rt: f64 = 0.0;
        for (t, x, h) in [
            (0.0, 0.0, 1.0),
            (1.7, -3.2, 0.45),
            (6.0, 2.5, 1.3e-4),
            (12.25, -7.0, 1.21),
        ] {
            let (tau, eta, g) = model::h_to_g(t, x, h, &params);
            let (t2, x2, h2) = model::g_to_h(tau, eta, g, &params).unwrap();
            worst_rt = worst_rt
                .max((t2 - t).abs())
                .max((x2 - x).abs())
                .max((h2 - h).abs() / h.max(1e-300));
            let (xi, f) = model::g_to_f(eta, g, &params);
            let (eta2, g2) = model::f_to_g(xi, f, &params).unwrap();
            worst_rt = worst_rt
                .max((eta2 - eta).abs())
                .max((g2 - g).abs() / g.abs().max(1e-300));
        }
        let round_trips = worst_rt < 1e-9;
        let (p1, mass) = v(&oracle, "original-variable-mass");
        let (p2, collapse) = v(&oracle, "self-similar-collapse");
        criteria.push(Criterion {
            name: "original-variable-mapping",
            pass: round_trips && p1 && p2,
            detail: format!(
                "round trips {worst_rt:.2e} < 1e-9, mass identity {mass:.2e} < 1e-9, collapse defect {collapse:.2e} < 4e-2"
            ),
        });
    }

    println!();
    for c in &criteria {
        println!(
            "[{}] {:<32} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!();
    let failed: Vec<&str> = criteria
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
