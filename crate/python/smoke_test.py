"""Smoke test for the fairtrade_py extension.

Build and install it first:

    cd crates/py && maturin build --release -o dist && pip install dist/*.whl

then run `python python/smoke_test.py` from the repository root.
"""

from pathlib import Path
import sys

import fairtrade_py as ft

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def check(cond, msg):
    if not cond:
        print(f"FAIL {msg}")
        sys.exit(1)
    print(f"ok   {msg}")


def main():
    s = ft.Scenario.load(str(SCENARIOS / "threehub.scenario"))
    print(s)
    check(s.validate()["errors"] == [], "threehub validates")

    j_nt = ft.baselines(s)
    r = ft.solve_dispatch(s, 0.18)
    reduction = (sum(j_nt) - r.social_cost) / sum(j_nt)
    print(f"W = {r.social_cost:.4f} CHF, W_nt = {sum(j_nt):.4f} CHF, reduction {100 * reduction:.3f}%")
    check(0.01 <= reduction <= 0.05, "social cost reduction in [1%, 5%]")

    at_01 = ft.solve_dispatch(s, 0.1)
    worst = max(
        abs(a - b)
        for i, j in s.links
        for a, b in zip(r.trade(i, j), at_01.trade(i, j))
    )
    check(worst <= 1e-3, f"trades independent of the uniform price (max deviation {worst:.1e} kW)")

    d = [ft.cost_reduction(n, j) for n, j in zip(j_nt, at_01.hub_costs)]
    print("d at c = 0.1:", ", ".join(f"{v:+.4f}" for v in d))
    check(min(d) < 0, "some hub loses at c = 0.1")

    prices, report = ft.mediate(s, 0.18)
    spread = max(report["d"]) - min(report["d"])
    print(f"mediation: {len(report['trace'])} iterations, phi = {report['phi']:.3e}")
    check(spread <= 2e-3, "mediated reductions nearly equal")

    _, cert = ft.certificate(s)
    check(cert["passed"], f"beneficial-price certificate (kappa = {cert['kappa']:.3f} CHF)")

    toy = ft.Scenario.synth("two_hub_toy")
    central = ft.solve_dispatch(toy, 0.18)
    admm = ft.solve_dispatch(toy, 0.18, mode="admm")
    rel = abs(admm.social_cost - central.social_cost) / abs(central.social_cost)
    check(rel <= 1e-4, f"ADMM matches central on the toy ({admm.iterations} iterations)")

    qp = ft.solve_qp([[2.0, 0.0], [0.0, 2.0]], [-2.0, -5.0], g=[[1.0, 1.0]], h=[1.0])
    check(qp["status"] == "optimal" and qp["kkt"] <= 1e-8, "QP kernel")
    print("smoke test passed")


if __name__ == "__main__":
    main()
