"""Smoke test for the pyroommates extension.

Build and install it first, e.g.

    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/pyroommates-*.whl
"""

import math
from fractions import Fraction

import pyroommates as rm


def main():
    p = rm.PreferenceProfile.sample(10, seed=1)
    assert p.n == 10 and sorted(p.list(0)) == list(range(1, 10))

    m = rm.irving_solve(p)
    stable = rm.enumerate_stable(p)
    assert (m is None) == (len(stable) == 0)
    if m is not None:
        assert rm.is_stable(p, m) and m in stable
        assert rm.blocking_pairs(p, m) == []

    # Four agents with cyclic first choices and a common last choice: none stable.
    gs4 = rm.PreferenceProfile.from_lists([[1, 2, 3], [2, 0, 3], [0, 1, 3], [0, 1, 2]])
    assert rm.irving_solve(gs4) is None and rm.enumerate_stable(gs4) == []
    assert rm.PreferenceProfile.parse(gs4.to_text()).to_text() == gs4.to_text()

    pi = rm.Matching.consecutive(8)
    assert str(pi) == "1-2 3-4 5-6 7-8"
    assert rm.Matching.parse(str(pi)) == pi
    assert rm.symmetric_difference(pi, pi.with_cycles([2])) == [[0, 1, 2, 3]]

    assert rm.double_factorial(9) == 945
    exact, log = rm.single_cycle_count(8, 2)
    assert exact == 12 and abs(log - math.log(12)) < 1e-12

    num, den = rm.exact_stability_probability(4)
    p4 = Fraction(num, den)
    assert 0 < p4 < 1

    q, w = rm.PreferenceProfile.sample_given_stable(pi, seed=3)
    assert rm.is_stable(q, pi) and math.isfinite(w)
    assert all(rm.is_stable(q, s) for s in rm.stable_cycle_neighbors(q, pi, 4))

    e = rm.estimate_expected_x(10, 20000, seed=2)
    exact10 = 945 * Fraction(*rm.exact_stability_probability(10))
    assert abs(e["mean"] - float(exact10)) < 4 * e["stderr"], (e, float(exact10))

    r = rm.estimate_two_point(40, [2], 2000, seed=4)
    assert r["mu"] == 1 and r["normalized"]["ess"] > 0

    t = rm.tstar_closed_form()
    assert abs(t["s"] - 0.9852) < 1e-4 and t["t_star"] > 1 / 17
    w = rm.lambert_w_branch_minus1(-1 / (2 * math.e))
    assert abs(w * math.exp(w) + 1 / (2 * math.e)) < 1e-12

    try:
        rm.Matching([1, 0, 2])
    except ValueError:
        pass
    else:
        raise AssertionError("odd matching accepted")

    print("pyroommates smoke test passed")


if __name__ == "__main__":
    main()
