import numpy as np
import pytest

from mhessian.errors import ChiNotPositive, ConeEscape, IllPosedRHS, NewtonDiverged
from mhessian.grids import GridDomain, GridFunction, MetricField, fm_field
from mhessian.hermitian import HermitianMatrix
from mhessian.solver import (
    RightHandSide,
    SolverConfig,
    continuity_path,
    max_principle_check,
    solve_dirichlet,
    solve_torus,
    subsolution_seed,
)


def sqn(coords):
    return (coords ** 2).sum(axis=-1)


def interior_error(report, exact_flat):
    mask = report.solution.domain.interior_mask
    return float(np.abs(report.solution.flat[mask] - exact_flat[mask]).max())


def quadratic_setup(n, points, m):
    domain = GridDomain.ball(n, radius=1.0, points_per_axis=points)
    g = MetricField.flat(domain)
    f = GridFunction.from_callable(domain, sqn)
    rhs = RightHandSide.manufactured_quadratic(m)
    return domain, g, f, rhs


class TestManufacturedQuadratic:
    def test_c1_exact_recovery(self):
        domain, g, f, rhs = quadratic_setup(1, 33, 1)
        report = solve_dirichlet(f, rhs, g, 1)
        assert report.final_residual <= 1e-9
        assert report.min_cone_margin > 0
        assert interior_error(report, f.flat) <= 1e-10

    def test_c2_exact_recovery_both_orders(self):
        for m in (1, 2):
            domain, g, f, rhs = quadratic_setup(2, 9, m)
            report = solve_dirichlet(f, rhs, g, m)
            assert interior_error(report, f.flat) <= 1e-10

    def test_boundary_values_exact(self):
        domain, g, f, rhs = quadratic_setup(1, 17, 1)
        report = solve_dirichlet(f, rhs, g, 1)
        np.testing.assert_array_equal(
            report.solution.flat[domain.boundary_mask],
            f.flat[domain.boundary_mask],
        )


class TestManufacturedNonQuadratic:
    @staticmethod
    def setup(points):
        # u* = |z|^2 + 0.05 exp(x_1) on the C^1 unit ball, m = 1;
        # G is manufactured from the analytic Hessian of u*
        domain = GridDomain.ball(1, radius=1.0, points_per_axis=points)
        g = MetricField.flat(domain)

        def ustar(c):
            return sqn(c) + 0.05 * np.exp(c[:, 0])

        def amplitude(c):
            return 1.0 + 0.05 * np.exp(c[:, 0]) / 4.0

        f = GridFunction.from_callable(domain, ustar)
        rhs = RightHandSide.scaled_exponential(amplitude, ustar)
        return domain, g, f, rhs, ustar

    def test_second_order_convergence(self):
        errors = {}
        for points in (17, 33, 65):
            domain, g, f, rhs, ustar = self.setup(points)
            report = solve_dirichlet(f, rhs, g, 1)
            errors[points] = interior_error(report, f.flat)
        assert errors[17] / errors[33] >= 3.5
        assert errors[33] / errors[65] >= 3.5

    def test_residual_uses_field_evaluation(self):
        domain, g, f, rhs, ustar = self.setup(17)
        report = solve_dirichlet(f, rhs, g, 1)
        field = fm_field(report.solution, g, 1)
        u = report.solution.flat[domain.interior_mask]
        G, _ = rhs(domain.coords[domain.interior_mask], u,
                   np.flatnonzero(domain.interior_mask))
        res = np.abs(field.flat[domain.interior_mask] - G).max()
        assert res <= 1e-9


class TestPenalizedBallSolve:
    def test_solution_below_reference_plus_log_slack(self):
        # rhs e^{beta (u - f)} + 1/(2 beta) with beta = 10: the solution obeys
        # u <= f + log(c)/beta with c = max(sup F_m^+[Hess f], e)
        domain = GridDomain.ball(1, radius=1.0, points_per_axis=33)
        g = MetricField.flat(domain)
        beta = 10.0
        f = GridFunction.from_callable(domain, lambda c: sqn(c) - 3.0)
        rhs = RightHandSide.penalized_distance(beta, f)
        report = solve_dirichlet(f, rhs, g, 1)
        plus = np.maximum(fm_field(f, g, 1).flat[domain.interior_mask], 0.0)
        c_const = max(float(plus.max()), np.e)
        mask = ~domain.exterior_mask
        bound = f.flat[mask] + np.log(c_const) / beta
        assert (report.solution.flat[mask] <= bound + 1e-8).all()
        assert report.min_cone_margin > 0


class TestMaxPrinciple:
    def test_quadratic_gap_negative(self):
        domain, g, f, rhs = quadratic_setup(1, 33, 1)
        report = solve_dirichlet(f, rhs, g, 1)
        gap = max_principle_check(report, f)
        assert gap < 0.0

    def test_constant_boundary_dominates_interior(self):
        # constant boundary data with an attainable right-hand side: the
        # m-subharmonic solution stays below the boundary value
        domain = GridDomain.ball(1, radius=1.0, points_per_axis=17)
        g = MetricField.flat(domain)
        f = GridFunction.constant(domain, 2.0)
        rhs = RightHandSide.scaled_exponential(
            lambda c: np.ones(c.shape[0]), lambda c: np.zeros(c.shape[0])
        )
        report = solve_dirichlet(f, rhs, g, 1)
        assert report.solution.flat[domain.interior_mask].max() <= 2.0 + 1e-8
        assert max_principle_check(report, f) <= 1e-8


class TestSeedsAndUniqueness:
    def test_two_seeds_agree(self):
        domain, g, f, rhs = quadratic_setup(1, 33, 1)
        cfg = SolverConfig()
        a = continuity_path(f, rhs, g, 1, cfg)
        # direct Newton from a perturbed subsolution
        seed, _ = subsolution_seed(f, g, 1)
        c = domain.coords
        bump = 0.02 * np.cos(np.pi * c[:, 0] / 2) * np.cos(np.pi * c[:, 1] / 2)
        perturbed = GridFunction(domain, seed.flat + bump - 0.05)
        b = solve_dirichlet(f, rhs, g, 1, SolverConfig(initial=perturbed))
        mask = domain.interior_mask
        agree = np.abs(a.solution.flat[mask] - b.solution.flat[mask]).max()
        assert agree <= 1e-8

    def test_monotone_in_boundary_data(self):
        # raising the boundary/reference data raises the solution
        domain = GridDomain.ball(1, radius=1.0, points_per_axis=17)
        g = MetricField.flat(domain)
        beta = 10.0
        lo = GridFunction.from_callable(domain, lambda c: sqn(c) - 3.0)
        hi = GridFunction.from_callable(domain, lambda c: sqn(c) - 2.5)
        rep_lo = solve_dirichlet(lo, RightHandSide.penalized_distance(beta, lo),
                                 g, 1)
        rep_hi = solve_dirichlet(hi, RightHandSide.penalized_distance(beta, hi),
                                 g, 1)
        mask = ~domain.exterior_mask
        assert (rep_lo.solution.flat[mask]
                <= rep_hi.solution.flat[mask] + 1e-8).all()

    def test_subsolution_stays_below(self):
        domain, g, f, rhs = quadratic_setup(1, 17, 1)
        seed, C = subsolution_seed(f, g, 1)
        # the seed solves with a larger operator value, so it is a discrete
        # subsolution wherever F_m[seed] >= G(z, seed)
        report = solve_dirichlet(f, rhs, g, 1)
        field = fm_field(seed, g, 1)
        mask = domain.interior_mask
        idx = np.flatnonzero(mask)
        G, _ = rhs(domain.coords[idx], seed.flat[idx], idx)
        is_sub = (field.flat[idx] >= G - 1e-12).all()
        assert is_sub
        assert (seed.flat[idx] <= report.solution.flat[idx] + 1e-8).all()


class TestContinuityPath:
    def test_t0_seed_is_exact(self):
        domain, g, f, rhs = quadratic_setup(1, 17, 1)
        from mhessian.solver import _FmOperator

        seed, _ = subsolution_seed(f, g, 1)
        op = _FmOperator(domain, g, 1)
        u = seed.flat.copy()
        u[domain.boundary_mask] = f.flat[domain.boundary_mask]
        base, _ = op.fm_and_margin(u)
        res, _ = op.residual(u, rhs, homotopy=(0.0, base))
        assert np.abs(res).max() == 0.0

    def test_path_matches_direct(self):
        domain, g, f, rhs, ustar = TestManufacturedNonQuadratic.setup(17)
        a = continuity_path(f, rhs, g, 1, t_steps=8)
        b = solve_dirichlet(f, rhs, g, 1)
        mask = domain.interior_mask
        assert np.abs(a.solution.flat[mask] - b.solution.flat[mask]).max() <= 1e-8

    def test_single_step_is_direct_newton(self):
        domain, g, f, rhs = quadratic_setup(1, 17, 1)
        a = continuity_path(f, rhs, g, 1, t_steps=1)
        b = solve_dirichlet(f, rhs, g, 1)
        mask = domain.interior_mask
        assert np.abs(a.solution.flat[mask] - b.solution.flat[mask]).max() <= 1e-9


class TestTorus:
    def test_constant_closed_form(self):
        # constant data: the solution is the constant root of
        # F_m[chi] = exp(beta (t - K)) Fj + F_m[chi] / (2 beta)
        domain = GridDomain.torus(1, points_per_axis=9)
        g = MetricField.flat(domain)
        chi = HermitianMatrix.diagonal([0.5])
        beta, K, Fj = 10.0, -2.0, 1.25
        fm_chi = 0.5
        rhs = RightHandSide.penalized_corridor(
            beta, GridFunction.constant(domain, K),
            GridFunction.constant(domain, Fj), fm_chi,
        )
        report = solve_torus(chi, rhs, g, 1)
        expected = K + np.log((1.0 - 1.0 / (2 * beta)) * fm_chi / Fj) / beta
        np.testing.assert_allclose(report.solution.flat, expected, atol=1e-9)
        assert report.final_residual <= 1e-9

    def test_large_beta_pins_to_reference(self):
        # chi = Id, reference 0: solutions approach 0 from below as beta grows
        domain = GridDomain.torus(1, points_per_axis=9)
        g = MetricField.flat(domain)
        chi = HermitianMatrix.identity(1)
        sups = []
        for beta in (10.0, 40.0, 160.0):
            zero = GridFunction.constant(domain, 0.0)
            corridor = GridFunction.constant(domain, 1.75)  # F_m[chi] + 3/4
            rhs = RightHandSide.penalized_corridor(beta, zero, corridor, 1.0)
            report = solve_torus(chi, rhs, g, 1)
            sups.append(float(report.solution.flat.max()))
        assert all(s < 0.0 for s in sups)
        assert sups[0] < sups[1] < sups[2]
        assert abs(sups[2]) < 0.01

    def test_nonconstant_reference(self):
        domain = GridDomain.torus(1, points_per_axis=17)
        g = MetricField.flat(domain)
        chi = HermitianMatrix.identity(1)
        fvals = -2.0 + 0.05 * np.cos(2 * np.pi * domain.coords[:, 0])
        f = GridFunction(domain, fvals)
        rhs = RightHandSide.penalized_distance(10.0, f)
        report = solve_torus(chi, rhs, g, 1)
        assert report.final_residual <= 1e-9
        assert report.min_cone_margin > 0
        # penalty keeps the solution below the reference plus the log slack
        assert (report.solution.flat <= f.flat + np.log(10.0) / 10.0).all()

    def test_chi_not_positive(self):
        domain = GridDomain.torus(1, points_per_axis=9)
        g = MetricField.flat(domain)
        chi = HermitianMatrix.diagonal([-0.1])
        rhs = RightHandSide.penalized_distance(
            10.0, GridFunction.constant(domain, 0.0)
        )
        with pytest.raises(ChiNotPositive):
            solve_torus(chi, rhs, g, 1)


class TestFailureModes:
    def test_ill_posed_rhs(self):
        domain, g, f, _ = quadratic_setup(1, 9, 1)

        def bad(coords, t, idx):
            return -np.ones(t.shape), np.ones(t.shape)

        with pytest.raises(IllPosedRHS):
            solve_dirichlet(f, RightHandSide(evaluator=bad), g, 1)

    def test_decreasing_rhs_rejected(self):
        domain, g, f, _ = quadratic_setup(1, 9, 1)

        def decreasing(coords, t, idx):
            return np.exp(-t), -np.exp(-t)

        with pytest.raises(IllPosedRHS):
            solve_dirichlet(f, RightHandSide(evaluator=decreasing), g, 1)

    def test_newton_diverges_on_budget(self):
        domain, g, f, rhs = quadratic_setup(1, 17, 1)
        with pytest.raises(NewtonDiverged):
            solve_dirichlet(f, rhs, g, 1,
                            SolverConfig(max_iterations=1, tolerance=1e-14))

    def test_cone_escape_on_bad_initial(self):
        domain, g, f, rhs = quadratic_setup(1, 9, 1)
        bad = GridFunction.from_callable(domain, lambda c: -sqn(c))
        with pytest.raises(ConeEscape):
            solve_dirichlet(f, rhs, g, 1, SolverConfig(initial=bad))
