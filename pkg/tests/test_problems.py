import math

import numpy as np
import pytest

from torusns.operators import div, l2_norm_exact, sample_values
from torusns.problems import (
    analytic_decay_problem,
    shear_decay_amplitude,
    shear_field,
    taylor_green_field,
    two_shell_problem,
)

ELL = 2.0 * math.pi


def test_shear_field_samples():
    u = shear_field(ELL, 4, 1.3)
    vals = sample_values(u, 8)
    x = np.arange(8) * ELL / 8
    assert np.max(np.abs(vals[0][0, :, 0] - 1.3 * np.sin(x))) <= 1e-13
    assert np.max(np.abs(vals[1])) == 0.0 and np.max(np.abs(vals[2])) == 0.0


def test_shear_decay_amplitude():
    lam = 0.1 * (2 * math.pi / ELL) ** 2
    assert shear_decay_amplitude(2.0, 0.1, ELL, 3.0) == pytest.approx(
        3.0 * math.exp(-2.0 * lam)
    )


class TestTaylorGreen:
    def test_divergence_free(self):
        u = taylor_green_field(ELL, 4, 0.7)
        assert np.max(np.abs(div(u).coeffs)) <= 1e-15

    def test_pointwise_closed_form(self):
        amp = 0.7
        u = taylor_green_field(ELL, 4, amp)
        n = 16
        vals = sample_values(u, n)
        x = np.arange(n) * ELL / n
        xx, yy, zz = np.meshgrid(x, x, x, indexing="ij")
        expect1 = amp * np.sin(xx) * np.cos(yy) * np.cos(zz)
        expect2 = -amp * np.cos(xx) * np.sin(yy) * np.cos(zz)
        assert np.max(np.abs(vals[0] - expect1)) <= 1e-13
        assert np.max(np.abs(vals[1] - expect2)) <= 1e-13
        assert np.max(np.abs(vals[2])) == 0.0

    def test_needs_shell_three(self):
        with pytest.raises(ValueError, match="cutoff >= 3"):
            taylor_green_field(ELL, 2, 1.0)


class TestManufacturedProblems:
    def test_two_shell_solution_is_exact(self):
        # residual of the prescribed pair in the momentum equation is zero
        from torusns.operators import grad, laplacian, self_convection

        prob = two_shell_problem()
        for t in (0.0, 0.13, 0.4):
            u = prob.velocity(t)
            dudt = prob.velocity_derivative(1)(t)
            full_cut = u.cutoff
            res = (
                dudt
                - laplacian(u) * prob.mu
                + self_convection(u, out_cutoff=full_cut)
                + grad(prob.pressure(t))
                - prob.forcing(t)
            )
            assert l2_norm_exact(res) <= 1e-12 * l2_norm_exact(prob.forcing(t))

    def test_decay_problem_velocity_solves_heat_flow(self):
        from torusns.operators import laplacian

        prob = analytic_decay_problem(truth_cutoff=6, forcing_cutoff=6, amplitude=0.1)
        for t in (0.0, 0.2):
            u = prob.velocity(t)
            dudt = prob.velocity_derivative(1)(t)
            res = dudt - laplacian(u) * prob.mu
            assert l2_norm_exact(res) <= 1e-12 * l2_norm_exact(u)

    def test_forcing_derivatives_consistent(self):
        # analytic derivative of f matches a central difference
        prob = two_shell_problem()
        h = 1e-5
        t = 0.2
        fd = (prob.forcing(t + h) - prob.forcing(t - h)) * (1.0 / (2 * h))
        exact = prob.forcing_derivative(1)(t)
        scale = l2_norm_exact(exact)
        assert l2_norm_exact(fd - exact) <= 1e-6 * scale
