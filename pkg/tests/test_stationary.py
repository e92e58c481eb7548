import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gibbs_tumor.stationary as stationary
from gibbs_tumor.model import ModelParams, SmoothingSpec, eval_F, eval_G
from gibbs_tumor.quasi import QuasiOpts, integrate_quasi
from gibbs_tumor.solver import radius_rate
from gibbs_tumor.stationary import (
    BracketError,
    Stability,
    bisect,
    compute_theta_star,
    find_r_sharp,
    find_stationary_radii,
    golden_section_max,
    scan_bifurcation,
    stationary_solution,
)
from oracles import dense_argmax, dense_roots

P = ModelParams()
S = SmoothingSpec(0.5)

# Frozen from the dense-grid oracle (step 1e-5) in tests/oracles.py.
DENSE_THETA = {0.25: 0.7308905769149475, 0.5: 0.6046004653689477, 1.0: 0.4481745756749757}
DENSE_ARGMAX_05 = 1.95842
DENSE_ROOTS_05_03 = (0.8444190190406996, 8.256621716106922)
DENSE_ROOTS_05_01 = (0.7022463434937383, 28.43605222462663)


def at(g):
    return ModelParams(gamma=g), SmoothingSpec(g)


class TestSearchPrimitives:
    def test_golden_section(self):
        x = golden_section_max(lambda r: -(r - 0.3) ** 2, 0.0, 1.0)
        assert x == pytest.approx(0.3, abs=1e-9)

    def test_bisect(self):
        assert bisect(lambda r: r * r - 2.0, 0.0, 2.0) == pytest.approx(2**0.5, abs=1e-10)

    def test_bisect_needs_sign_change(self):
        with pytest.raises(BracketError):
            bisect(lambda r: r + 1.0, 0.0, 1.0)

    def test_boundary_maximum_is_rejected(self, monkeypatch):
        monkeypatch.setattr(stationary, "eval_F", lambda r, p, s: r)
        with pytest.raises(BracketError):
            find_r_sharp(P, S)


class TestRSharp:
    def test_bracket(self):
        assert 1.0 < find_r_sharp(P, S) < 3.0

    def test_matches_dense_grid(self):
        assert find_r_sharp(P, S) == pytest.approx(DENSE_ARGMAX_05, abs=1e-4)

    def test_dense_grid_oracle_is_reproducible(self):
        r, th = dense_argmax(0.5)
        assert r == pytest.approx(DENSE_ARGMAX_05, abs=2e-5)
        assert th == pytest.approx(DENSE_THETA[0.5], rel=1e-12)

    def test_local_maximum(self):
        r = find_r_sharp(P, S)
        h = 1e-3
        F = lambda x: eval_F(x, P, S)  # noqa: E731
        assert F(r + h) - 2 * F(r) + F(r - h) < 0
        assert eval_F(1.0, P, S) < F(r) and eval_F(3.0, P, S) < F(r)

    @pytest.mark.parametrize("g", [0.25, 0.5, 1.0])
    def test_theta_star(self, g):
        th = compute_theta_star(*at(g))
        assert 0.0 < th < 1.0
        assert th == pytest.approx(DENSE_THETA[g], abs=1e-9)

    def test_theta_star_decreases(self):
        assert compute_theta_star(*at(1.0)) < compute_theta_star(*at(0.5))
        assert compute_theta_star(*at(10.0)) < compute_theta_star(*at(0.5))

    @pytest.mark.parametrize("kind", ["quintic", "linear"])
    def test_other_smoothing_kinds(self, kind):
        s = SmoothingSpec(0.5, kind)
        r = find_r_sharp(P, s)
        assert 1.0 < r < 3.0


class TestRoots:
    def test_three_cases(self):
        th = compute_theta_star(P, S)
        assert find_stationary_radii(1.5 * th, P, S).n_roots == 0
        one = find_stationary_radii(th, P, S)
        assert one.n_roots == 1
        assert one.roots[0].stability is Stability.DEGENERATE
        assert one.roots[0].radius == one.r_sharp
        assert find_stationary_radii(0.5 * th, P, S).n_roots == 2

    @pytest.mark.parametrize("sigma, dense", [(0.3, DENSE_ROOTS_05_03), (0.1, DENSE_ROOTS_05_01)])
    def test_against_dense_grid(self, sigma, dense):
        land = find_stationary_radii(sigma, P, S)
        assert 0.5 < land.R_s1 < land.r_sharp < land.R_s2
        assert land.R_s1 == pytest.approx(dense[0], abs=1e-4)
        assert land.R_s2 == pytest.approx(dense[1], abs=1e-4)
        for root in land.roots:
            assert abs(eval_F(root.radius, P, S) - sigma) < 1e-9
        assert land.roots[0].stability is Stability.UNSTABLE
        assert land.roots[1].stability is Stability.STABLE

    def test_slope_values(self):
        land = find_stationary_radii(0.3, P, S)
        assert land.roots[0].slope == pytest.approx(1.487, rel=1e-3)
        assert land.roots[1].slope == pytest.approx(-0.02899, rel=1e-3)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 2.0), st.floats(0.05, 0.95))
    def test_oracle_equivalence(self, g, frac):
        p, s = at(g)
        th = compute_theta_star(p, s)
        sigma = frac * th
        land = find_stationary_radii(sigma, p, s)
        dense = dense_roots(g, sigma)
        assert len(dense) == 2
        assert land.R_s1 == pytest.approx(dense[0], abs=1e-4)
        assert land.R_s2 == pytest.approx(dense[1], abs=1e-4)
        assert g < land.R_s1 < land.r_sharp < land.R_s2

    def test_rejects_nonpositive_threshold(self):
        with pytest.raises(ValueError):
            find_stationary_radii(0.0, P, S)

    def test_requires_scaled(self):
        with pytest.raises(ValueError):
            find_stationary_radii(0.3, ModelParams(lam=2.0), S)

    def test_gamma_ordering(self):
        a = find_stationary_radii(0.3, *at(0.4))
        b = find_stationary_radii(0.3, *at(0.6))
        assert a.R_s1 < b.R_s1
        assert a.R_s2 > b.R_s2

    def test_stability_matches_phase_line(self):
        land = find_stationary_radii(0.3, P, S)
        opts = QuasiOpts()
        up = integrate_quasi(land.R_s2 * 1.02, 400.0, P, S, opts)
        down = integrate_quasi(land.R_s2 * 0.98, 400.0, P, S, opts)
        assert abs(up.final_R - land.R_s2) < 1e-4 * land.R_s2
        assert abs(down.final_R - land.R_s2) < 1e-4 * land.R_s2
        away_lo = integrate_quasi(land.R_s1 * 0.999, 5.0, P, S, opts)
        away_hi = integrate_quasi(land.R_s1 * 1.001, 5.0, P, S, opts)
        assert away_lo.final_R < land.R_s1 * 0.999
        assert away_hi.final_R > land.R_s1 * 1.001


class TestStationarySolution:
    def test_boundary_and_center(self):
        R2 = find_stationary_radii(0.3, P, S).R_s2
        prof = stationary_solution(R2, P, S)
        assert prof.u[-1] == eval_G(R2, P, S)
        assert abs(prof.center_slope()) < 1e-3

    def test_discrete_growth_vanishes(self):
        R2 = find_stationary_radii(0.3, P, S).R_s2
        assert abs(radius_rate(stationary_solution(R2, P, S, 401), P)) < 1e-8
        assert abs(radius_rate(stationary_solution(R2, P, S, 201), P)) < 1e-6 * R2

    def test_resolution_independence(self):
        land = find_stationary_radii(0.3, P, S)
        for R in land.R_s1, land.R_s2:
            coarse = stationary_solution(R, P, S, 16)
            fine = stationary_solution(R, P, S, 1024)
            assert np.max(np.abs(fine.interpolate(coarse.y) - coarse.u)) < 1e-3
        # the flat small-radius profile is also resolved by the coarse grid
        coarse = stationary_solution(land.R_s1, P, S, 16)
        fine = stationary_solution(land.R_s1, P, S, 1024)
        assert np.max(np.abs(coarse.interpolate(fine.y) - fine.u)) < 1e-3

    def test_minimum_grid(self):
        with pytest.raises(ValueError):
            stationary_solution(2.0, P, S, 15)


class TestScan:
    def test_gamma_scan_monotone(self):
        scan = scan_bifurcation("gamma", 0.25, 1.0, 16, P, S)
        assert len(scan.samples) == 16
        assert np.all(np.diff(scan.column("theta_star")) < 0)
        assert np.all(np.diff(scan.column("R_s1")) > 0)
        assert np.all(np.diff(scan.column("R_s2")) < 0)

    def test_sigma_scan_root_count(self):
        th = compute_theta_star(P, S)
        scan = scan_bifurcation("sigma_tilde", th / 2, 2 * th, 3, P, S)
        assert [s.landscape.n_roots for s in scan.samples] == [2, 0, 0]
        fine = scan_bifurcation("sigma_tilde", th / 2, 2 * th, 31, P, S)
        counts = [s.landscape.n_roots for s in fine.samples]
        assert counts == sorted(counts, reverse=True)
        exact = scan_bifurcation("sigma_tilde", th / 2, th * 1.5, 3, P, S)
        assert [s.landscape.n_roots for s in exact.samples] == [2, 1, 0]

    def test_single_sample(self):
        scan = scan_bifurcation("gamma", 0.5, 0.5, 1, P, S)
        direct = find_stationary_radii(0.3, P, S)
        assert scan.samples[0].landscape.roots == direct.roots
        lines = scan.to_csv().splitlines()
        assert lines[0] == "param_value,r_sharp,theta_star,n_roots,R_s1,R_s2"
        assert len(lines) == 2
        assert float(lines[1].split(",")[4]) == direct.R_s1

    def test_csv_round_trips_doubles(self):
        scan = scan_bifurcation("gamma", 0.25, 1.0, 4, P, S)
        rows = [line.split(",") for line in scan.to_csv().splitlines()[1:]]
        assert [float(r[2]) for r in rows] == scan.column("theta_star").tolist()

    def test_empty_root_fields(self):
        th = compute_theta_star(P, S)
        scan = scan_bifurcation("sigma_tilde", 2 * th, 3 * th, 2, P, S)
        assert scan.to_csv().splitlines()[1].endswith(",0,,")

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            scan_bifurcation("gamma", -0.1, 1.0, 4, P, S)
        with pytest.raises(ValueError):
            scan_bifurcation("gamma", 1.0, 0.5, 4, P, S)

    def test_parallel_matches_serial(self):
        a = scan_bifurcation("gamma", 0.25, 1.0, 8, P, S)
        b = scan_bifurcation("gamma", 0.25, 1.0, 8, P, S, workers=4)
        assert a.to_csv() == b.to_csv()
