from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import smoke_case
from onsagerflow.errors import NoConvergence, ShiftViolation
from onsagerflow.optim import (
    FunctionProblem,
    OptimizerConfig,
    aepg,
    apply_projection,
    kkt_residual,
    newton_kkt,
    projected_gradient,
    solve,
)
from onsagerflow.step import StepProblem, build_step


def half_norm_problem(theta0=(1.0, 0.0)):
    """min |theta|^2 / 2  s.t.  theta_0 + theta_1 = 1."""
    return FunctionProblem(
        lambda t: 0.5 * t @ t, lambda t: t.copy(), np.array([[1.0, 1.0]]), np.array([1.0]),
        np.array(theta0), hessian=lambda t: sp.identity(2),
    )


def fp_smoke(tau=0.1):
    model, s = smoke_case("fokker_planck")
    return build_step(model, s, tau)


def lipschitz_step(problem):
    H = problem.hessian(problem.theta0).toarray()
    return 1.0 / np.linalg.eigvalsh(H).max()


class RecordingStep(StepProblem):
    """Step problem that logs every point where the gradient is evaluated."""

    def __init__(self, *args):
        super().__init__(*args)
        self.visited = []

    def gradient(self, theta):
        self.visited.append(theta.copy())
        return super().gradient(theta)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"method": "bfgs"}, {"eta": 0.0}, {"kkt_tolerance": -1.0}, {"damping": 1.0}, {"max_iterations": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            OptimizerConfig(**kwargs)

    def test_caps(self):
        assert OptimizerConfig().iteration_cap == 50
        assert OptimizerConfig(method="aepg").iteration_cap == 50_000
        assert OptimizerConfig(method="projected_gd", max_iterations=7).iteration_cap == 7


class TestProjection:
    def test_closed_form(self):
        p = half_norm_problem()
        np.testing.assert_allclose(apply_projection(p, np.array([1.0, 0.0])), [0.5, -0.5], atol=1e-15)

    def test_range_of_transpose_is_annihilated(self):
        p = fp_smoke()
        rng = np.random.default_rng(0)
        w = rng.standard_normal(p.n_constraints)
        v = p.B.T @ w
        assert np.linalg.norm(apply_projection(p, v)) <= 1e-12 * np.linalg.norm(v)

    @pytest.mark.parametrize("name", ["fokker_planck", "maxwell_stefan", "porous_media"])
    def test_idempotent_and_self_adjoint(self, name):
        model, s = smoke_case(name)
        p = build_step(model, s, 0.1)
        rng = np.random.default_rng(1)
        v, w = rng.standard_normal((2, p.n))
        gv = apply_projection(p, v)
        np.testing.assert_allclose(apply_projection(p, gv), gv, atol=1e-10)
        assert gv @ w == pytest.approx(v @ apply_projection(p, w), abs=1e-10)
        assert np.linalg.norm(p.B @ gv) <= 1e-12 * max(1.0, np.linalg.norm(v))


class TestProjectedGradient:
    def test_stationary_start(self):
        p = half_norm_problem((0.5, 0.5))
        point = projected_gradient(p)
        assert point.iterations == 0
        np.testing.assert_array_equal(point.theta, [0.5, 0.5])

    def test_closed_form_minimizer(self):
        point = projected_gradient(half_norm_problem(), OptimizerConfig(method="projected_gd", eta=0.5))
        np.testing.assert_allclose(point.theta, [0.5, 0.5], atol=1e-10)
        np.testing.assert_allclose(point.multipliers, [-0.5], atol=1e-10)

    def test_feasibility_along_trajectory(self):
        model, s = smoke_case("fokker_planck")
        p = RecordingStep(model, s, 1e-3)
        cfg = OptimizerConfig(method="projected_gd", eta=lipschitz_step(p), max_iterations=1000)
        with pytest.raises(NoConvergence):
            projected_gradient(p, cfg)
        assert len(p.visited) >= 1000
        assert max(np.linalg.norm(p.B @ t - p.b) for t in p.visited) <= 1e-10

    def test_cap_reports_last_point(self):
        p = fp_smoke()
        with pytest.raises(NoConvergence) as info:
            projected_gradient(p, OptimizerConfig(method="projected_gd", eta=1e-3, max_iterations=3))
        assert info.value.point.iterations == 3
        assert info.value.point.theta.shape == p.theta0.shape


class TestAEPG:
    def test_closed_form_minimizer(self):
        point = aepg(half_norm_problem(), OptimizerConfig(method="aepg", eta=0.5))
        np.testing.assert_allclose(point.theta, [0.5, 0.5], atol=1e-8)

    def test_stationary_start(self):
        point = aepg(half_norm_problem((0.5, 0.5)))
        assert point.iterations == 0
        assert point.r_trace == [point.r_trace[0]]

    @settings(max_examples=15, deadline=None)
    @given(st.floats(1e-3, 1e3))
    def test_r_nonincreasing_any_eta(self, eta):
        p = fp_smoke()
        try:
            trace = aepg(p, OptimizerConfig(method="aepg", eta=eta, max_iterations=200)).r_trace
        except NoConvergence as exc:
            trace = exc.point.r_trace
        assert all(b <= a for a, b in zip(trace, trace[1:]))

    def test_shift_violation(self):
        p = FunctionProblem(lambda t: -5.0 + t @ t, lambda t: 2 * t, np.zeros((0, 2)), np.zeros(0),
                            np.array([1.0, 0.0]))
        with pytest.raises(ShiftViolation):
            aepg(p, OptimizerConfig(method="aepg", aepg_shift=1.0))


class TestNewton:
    def test_quadratic_in_one_step(self):
        rng = np.random.default_rng(3)
        Q = rng.standard_normal((5, 5))
        H = Q @ Q.T + np.eye(5)
        c = rng.standard_normal(5)
        B = rng.standard_normal((2, 5))
        theta0 = rng.standard_normal(5)
        b = B @ theta0
        p = FunctionProblem(lambda t: 0.5 * t @ H @ t - c @ t, lambda t: H @ t - c, B, b, theta0,
                            hessian=lambda t: sp.csr_matrix(H))
        point = newton_kkt(p)
        assert point.iterations == 1
        K = np.block([[H, B.T], [B, np.zeros((2, 2))]])
        oracle = np.linalg.solve(K, np.concatenate([c, b]))
        np.testing.assert_allclose(point.theta, oracle[:5], atol=1e-10)

    @pytest.mark.parametrize("name", ["fokker_planck", "pnp", "maxwell_stefan", "porous_media"])
    def test_residual_trace_monotone(self, name):
        model, s = smoke_case(name)
        point = newton_kkt(build_step(model, s, 0.1))
        tr = point.residual_trace
        assert all(b < a for a, b in zip(tr, tr[1:]))
        assert point.theta[: s.components.size].min() > 0

    def test_deterministic(self):
        model, s = smoke_case("pnp")
        a = newton_kkt(build_step(model, s, 0.05))
        b = newton_kkt(build_step(model, s, 0.05))
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.multipliers, b.multipliers)
        assert a.kkt_residual == b.kkt_residual


class TestCrossSolver:
    def test_three_solvers_agree(self):
        p = fp_smoke()
        eta = lipschitz_step(p)
        pts = [solve(p, OptimizerConfig(method=m, eta=eta)) for m in ("projected_gd", "aepg", "newton_kkt")]
        for a in pts:
            for b in pts:
                assert np.max(np.abs(a.theta - b.theta)) <= 1e-6
        for pt in pts:
            assert pt.kkt_residual == pytest.approx(kkt_residual(p, pt.theta, pt.multipliers), rel=1e-13, abs=1e-300)
