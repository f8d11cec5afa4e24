"""Smoke test for the pysdbc extension module."""

import math
import random

import pysdbc


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def main():
    p = pysdbc.ControlProblem("square", level=3, element="mini", regularization="h12", alpha=1.0)
    print(f"level 3: {p.n_velocity} velocity dofs, {p.n_gamma} trace dofs, h = {p.h:.4f}")

    rng = random.Random(7)
    v = [rng.uniform(-1, 1) for _ in range(p.n_gamma)]
    g = [rng.uniform(-1, 1) for _ in range(p.n_velocity)]
    y, _ = p.apply_e(v)
    assert math.isfinite(dot(v, p.apply_e_star(g)))
    assert dot(v, p.apply_d(v)) > 0
    assert len(y) == p.n_velocity

    y_d = p.interpolate(lambda x, y: (x, y - x))
    sol = p.solve(y_d)
    c = p.flux_vector
    flux = abs(dot(sol["control"], c))
    print(f"F = {sol['F']:.6f}, J = {sol['J']:.6f}, CG iterations = {sol['iterations']}, flux = {flux:.1e}")
    assert flux < 1e-10 * math.sqrt(dot(c, c)) * math.sqrt(dot(sol["control"], sol["control"]))
    big = p.solve(y_d, method="big")
    diff = math.sqrt(sum((a - b) ** 2 for a, b in zip(sol["control"], big["control"])))
    assert diff < 1e-8 * math.sqrt(dot(big["control"], big["control"]))

    xi = pysdbc.singular_exponent(math.pi / 2)["xi"]
    print(f"xi(pi/2) = {xi:.4f}")
    assert abs(xi - 2.7396) < 1e-3

    report = pysdbc.run_experiment(2, "h12", levels=(1, 2), reference=4)
    print("rates:", [lv["rate_l2"] for lv in report["levels"]])
    print("ok")


if __name__ == "__main__":
    main()
