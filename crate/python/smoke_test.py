"""Smoke test for the coag_py extension module.

Build and place the module first:

    cargo build --release -p coag-py --features extension-module
    cp target/release/libcoag_py.so python/coag_py.so

Then run `python3 python/smoke_test.py` from the repository root.
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import coag_py


def check(label, ok, detail=""):
    status = "ok" if ok else "FAIL"
    print(f"  [{status}] {label}{'  ' + detail if detail else ''}")
    if not ok:
        sys.exit(1)


def main():
    print("params / sigma")
    p = coag_py.Params(0.0)
    check("alpha = ln 2", abs(p.alpha - math.log(2.0)) < 1e-15)
    check("plateau = 2 ln 2", abs(p.plateau - 2.0 * math.log(2.0)) < 1e-15)
    s = coag_py.sigma(0.0)
    check("sigma near 2.690", abs(s - 2.690) < 1e-3, f"sigma={s:.6f}")
    # the root solves (1 + s)/2 = 2 - 2^-s at gamma = 0
    check("sigma equation", abs((1.0 + s) / 2.0 - 2.0 + 2.0 ** (-s)) < 1e-12)

    print("profile")
    prof = coag_py.Profile(gamma=0.0, dx=1.0 / 512.0)
    check("plateau matches params", abs(prof.plateau - p.plateau) < 1e-15)
    check("left plateau attained", abs(prof.eval(-30.0) - prof.plateau) < 1e-12)
    check("decays to zero", prof.eval(prof.x_end + 1.0) == 0.0)
    worst = max(abs(prof.lattice_sum((j + 0.5) / 16.0) - 1.0) for j in range(16))
    check("unit lattice mass", worst < 1e-6, f"worst={worst:.2e}")
    check("integral identity", prof.integral_identity_residual() < 1e-4)
    c, rate = prof.tail_fit()
    check("tail rate positive", c > 0.0 and rate > 0.0, f"L={rate:.4f}")

    print("fibre")
    fib = coag_py.Fibre.from_profile(prof, theta=0.25)
    check("m0 = 1 for the normalized profile", abs(fib.m0 - 1.0) < 1e-6)
    fib.evolve(5.0, 1.0 / 256.0)
    check("clock advanced", abs(fib.t - 5.0) < 1e-12)
    check("mass conserved", fib.mass_residual() < 1e-8,
          f"residual={fib.mass_residual():.2e}")
    d = fib.diagnostics(prof)
    check("lyapunov decayed", 0.0 <= d["lyapunov"] < 1e-2,
          f"L={d['lyapunov']:.2e}")
    check("dissipation nonnegative", d["dissipation"] >= 0.0)

    bump = coag_py.Fibre.from_callable(
        lambda x: math.exp(-((x - 0.5) ** 2) / 0.125), 0.5, 0.0)
    m0 = bump.m0
    bump.evolve(3.0, 1.0 / 256.0)
    check("callable init keeps its mass", abs(bump.m0 - m0) < 1e-15)
    check("callable fibre mass law", bump.mass_residual() < 1e-8)

    print("scenario runner")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = json.dumps({"profile_dx": 1.0 / 512.0})
        report = json.loads(coag_py.run_scenario("stationary-validate", cfg, tmp))
        check("stationary-validate passed", report["passed"] is True,
              f"{len(report['verdicts'])} verdicts")
        check("artifacts written",
              os.path.exists(os.path.join(tmp, "profile.csv")))

    print("OK")


if __name__ == "__main__":
    main()
