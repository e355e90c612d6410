import numpy as np
import pytest

from polint.density import kdv_density, gkdv_density, hamiltonian_d, parse_density
from polint.grid import Grid1D, GridFunction, make_standard_ops
from polint.integrators import (
    FullyImplicitStepper,
    LinearSystem,
    MidpointStepper,
    NaiveLIStepper,
    NewtonConfig,
    NewtonDivergenceError,
    PavfStepper,
    SingularSystemError,
    SkewOp,
    bootstrap,
    solve_linear,
    step_fully_implicit,
    step_midpoint,
    step_naive_li,
    step_pavf,
)
from polint.polarisation import eval_polarised, polarise, polarise_gkdv
from polint.analysis import soliton_values

from conftest import random_gridfunction


def soliton(grid):
    return GridFunction(grid, soliton_values(grid, -5.0, 1.0, 0.0))


class TestSolveLinear:
    def test_identity(self):
        rng = np.random.default_rng(0)
        b = rng.normal(size=16)
        assert np.array_equal(solve_linear(LinearSystem(np.eye(16), b)), b)

    def test_against_gaussian_elimination_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(64, 64)) + 8.0 * np.eye(64)
        b = rng.normal(size=64)
        x = solve_linear(LinearSystem(a.copy(), b.copy()))

        # independent dense Gaussian elimination with partial pivoting
        m = np.hstack([a.copy(), b.copy()[:, None]])
        n = 64
        for col in range(n):
            pivot = col + int(np.argmax(np.abs(m[col:, col])))
            m[[col, pivot]] = m[[pivot, col]]
            m[col] /= m[col, col]
            for row in range(col + 1, n):
                m[row] -= m[row, col] * m[col]
        y = np.zeros(n)
        for row in range(n - 1, -1, -1):
            y[row] = m[row, -1] - m[row, row + 1 : n] @ y[row + 1 : n]
        assert np.max(np.abs(x - y)) <= 1e-10 * max(1.0, np.max(np.abs(y)))

    def test_periodic_tridiagonal_against_fourier_oracle(self):
        # circulant systems diagonalise in the discrete Fourier basis
        n = 32
        first_col = np.zeros(n)
        first_col[0], first_col[1], first_col[-1] = 4.0, 1.0, 1.0
        a = np.zeros((n, n))
        for j in range(n):
            a[:, j] = np.roll(first_col, j)
        rng = np.random.default_rng(2)
        b = rng.normal(size=n)
        x = solve_linear(LinearSystem(a, b))
        eigs = np.fft.fft(first_col)
        y = np.real(np.fft.ifft(np.fft.fft(b) / eigs))
        assert np.max(np.abs(x - y)) <= 1e-10

    def test_singular_matrix(self):
        with pytest.raises(SingularSystemError):
            solve_linear(LinearSystem(np.zeros((4, 4)), np.ones(4)))


class TestSkewOp:
    def test_rejects_non_skew(self, grid, ops):
        with pytest.raises(ValueError):
            SkewOp(ops["dplus"])
        SkewOp(ops["d1"])
        SkewOp(ops["d3"])


class TestFullyImplicit:
    def test_matches_written_out_scheme(self, grid, real_fwd, ops, d_op):
        # (U1 - U0)/dt + d3 (U1 + U0)/2 + d1((U1^2 + U1 U0 + U0^2)/3) = 0
        dt = 0.1
        u0 = soliton(grid)
        u1 = step_fully_implicit(kdv_density(), d_op, u0, dt, real=real_fwd)
        res = (
            (u1.values - u0.values) / dt
            + ops["d3"].apply_values((u1.values + u0.values) / 2.0)
            + ops["d1"].apply_values(
                (u1.values**2 + u1.values * u0.values + u0.values**2) / 3.0
            )
        )
        assert np.max(np.abs(res)) < 1e-12

    def test_zero_fixed_point(self, grid, real, d_op):
        zero = GridFunction(grid, np.zeros(grid.n_points))
        out = step_fully_implicit(kdv_density(), d_op, zero, 0.1, real=real)
        assert np.array_equal(out.values, zero.values)

    def test_linear_problem_converges_in_one_iteration(self, grid, real, d_op):
        # quadratic Hamiltonian: the residual is affine, so a single Newton
        # update reaches the tolerance
        rng = np.random.default_rng(3)
        stepper = FullyImplicitStepper(
            parse_density("0.5*u^2"), d_op, grid, 0.1, real
        )
        u = random_gridfunction(rng, grid)
        _, iters = stepper.step_values(u.values)
        assert iters == 1

    def test_conservation_short_run(self, grid, real_fwd, d_op):
        stepper = FullyImplicitStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        u = soliton(grid).values
        h0 = hamiltonian_d(kdv_density(), GridFunction(grid, u), real_fwd)
        for _ in range(50):
            u, _ = stepper.step_values(u)
            h = hamiltonian_d(kdv_density(), GridFunction(grid, u), real_fwd)
            assert abs(h - h0) <= 1e-12 * abs(h0)

    def test_solve_count_tracks_newton_iterations(self, grid, real_fwd, d_op):
        stepper = FullyImplicitStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        u = soliton(grid).values
        total = 0
        for _ in range(5):
            u, iters = stepper.step_values(u)
            total += iters
        assert stepper.solve_count == total

    def test_fd_jacobian_cross_check(self, grid, real_fwd, d_op):
        u0 = soliton(grid)
        analytic = step_fully_implicit(kdv_density(), d_op, u0, 0.1, real=real_fwd)
        fd = step_fully_implicit(
            kdv_density(),
            d_op,
            u0,
            0.1,
            newton_cfg=NewtonConfig(fd_jacobian=True),
            real=real_fwd,
        )
        assert np.max(np.abs(analytic.values - fd.values)) < 1e-11

    def test_divergence_error(self, grid, real_fwd, d_op):
        cfg = NewtonConfig(max_iters=1)
        with pytest.raises(NewtonDivergenceError) as err:
            step_fully_implicit(
                kdv_density(), d_op, soliton(grid), 0.1, newton_cfg=cfg, real=real_fwd
            )
        assert err.value.residual_norm > 0.0


class TestMidpoint:
    def test_matches_written_out_scheme(self, grid, real_fwd, ops, d_op):
        dt = 0.1
        u0 = soliton(grid)
        u1 = step_midpoint(kdv_density(), d_op, u0, dt, real=real_fwd)
        avg = (u1.values + u0.values) / 2.0
        res = (
            (u1.values - u0.values) / dt
            + ops["d3"].apply_values(avg)
            + ops["d1"].apply_values(avg**2)
        )
        assert np.max(np.abs(res)) < 1e-12

    def test_zero_fixed_point(self, grid, real, d_op):
        zero = GridFunction(grid, np.zeros(grid.n_points))
        out = step_midpoint(kdv_density(), d_op, zero, 0.1, real=real)
        assert np.array_equal(out.values, zero.values)

    def test_equals_avf_for_quadratic_hamiltonian(self, grid, real_fwd, d_op):
        rng = np.random.default_rng(4)
        density = parse_density("0.5*u_x^2")
        u = random_gridfunction(rng, grid)
        a = step_fully_implicit(density, d_op, u, 0.05, real=real_fwd)
        b = step_midpoint(density, d_op, u, 0.05, real=real_fwd)
        assert np.max(np.abs(a.values - b.values)) <= 1e-12


class TestNaiveLI:
    def test_matches_written_out_scheme(self, grid, real_fwd, ops, d_op):
        dt = 0.1
        u0 = soliton(grid)
        u1 = step_naive_li(kdv_density(), d_op, u0, dt, real=real_fwd)
        res = (
            (u1.values - u0.values) / dt
            + ops["d3"].apply_values((u1.values + u0.values) / 2.0)
            + ops["d1"].apply_values(u0.values * u1.values)
        )
        assert np.max(np.abs(res)) < 1e-12

    def test_zero_fixed_point(self, grid, real, d_op):
        zero = GridFunction(grid, np.zeros(grid.n_points))
        out = step_naive_li(kdv_density(), d_op, zero, 0.1, real=real)
        assert np.array_equal(out.values, zero.values)

    def test_does_not_conserve(self, grid, real_fwd, d_op):
        stepper = NaiveLIStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        u = soliton(grid).values
        h0 = hamiltonian_d(kdv_density(), GridFunction(grid, u), real_fwd)
        worst = 0.0
        for _ in range(100):
            u = stepper.step_values(u)
            h = hamiltonian_d(kdv_density(), GridFunction(grid, u), real_fwd)
            worst = max(worst, abs(h - h0))
        assert worst > 1e-6

    def test_one_solve_per_step(self, grid, real_fwd, d_op):
        stepper = NaiveLIStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        u = soliton(grid).values
        for _ in range(7):
            u = stepper.step_values(u)
        assert stepper.solve_count == 7


class TestPavf:
    def test_matches_written_out_two_step_scheme(self, grid, real_fwd, ops, d_op):
        # theta = 1 reproduces the averaged-dispersion multistep form with
        # nonlinearity U1 (U2 + U1 + U0)/3
        dt = 0.1
        pd = polarise_gkdv(3, 1.0)
        history, _ = bootstrap(kdv_density(), d_op, soliton(grid), dt, 2, real=real_fwd)
        u2 = step_pavf(pd, d_op, history, dt, real=real_fwd)
        u0, u1 = history[0].values, history[1].values
        res = (
            (u2.values - u0) / (2.0 * dt)
            + ops["d3"].apply_values((u2.values + u0) / 2.0)
            + ops["d1"].apply_values(u1 * (u2.values + u1 + u0) / 3.0)
        )
        assert np.max(np.abs(res)) < 1e-12

    def test_gkdv_even_p_nonlinearity(self, grid, real_fwd, ops, d_op):
        # p = 4, k = 2: nonlinearity (1/2)[(U1)^2 (U2 + U0)]_x
        dt = 0.05
        pd = polarise_gkdv(4, 1.0)
        u0 = soliton(grid)
        history, _ = bootstrap(gkdv_density(4), d_op, u0, dt, 2, real=real_fwd)
        u2 = step_pavf(pd, d_op, history, dt, real=real_fwd)
        w0, w1 = history[0].values, history[1].values
        res = (
            (u2.values - w0) / (2.0 * dt)
            + ops["d3"].apply_values((u2.values + w0) / 2.0)
            + 0.5 * ops["d1"].apply_values(w1**2 * (u2.values + w0))
        )
        assert np.max(np.abs(res)) < 1e-12

    def test_constant_history_fixed_point(self, grid, real, d_op):
        pd = polarise_gkdv(3, 0.5)
        const = GridFunction(grid, 0.7 * np.ones(grid.n_points))
        out = step_pavf(pd, d_op, [const, const], 0.1, real=real)
        assert np.max(np.abs(out.values - const.values)) < 1e-12

    def test_one_solve_per_step(self, grid, real_fwd, d_op):
        pd = polarise_gkdv(3, 0.5)
        history, _ = bootstrap(kdv_density(), d_op, soliton(grid), 0.1, 2, real=real_fwd)
        stepper = PavfStepper(pd, d_op, grid, 0.1, real_fwd)
        hist = [h.values for h in history]
        for _ in range(11):
            new = stepper.step_values(hist)
            hist = hist[1:] + [new]
        assert stepper.solve_count == 11

    def test_polarised_conservation_short_run(self, grid, real_fwd, d_op):
        pd = polarise_gkdv(3, 0.5)
        history, _ = bootstrap(kdv_density(), d_op, soliton(grid), 0.1, 2, real=real_fwd)
        stepper = PavfStepper(pd, d_op, grid, 0.1, real_fwd)
        hist = [h.values for h in history]
        h0 = eval_polarised(pd, [GridFunction(grid, v) for v in hist], real_fwd)
        for _ in range(100):
            new = stepper.step_values(hist)
            hist = hist[1:] + [new]
            h = eval_polarised(pd, [GridFunction(grid, v) for v in hist], real_fwd)
            assert abs(h - h0) <= 1e-12 * abs(h0)

    def test_constant_matrix_detection(self, grid, real_fwd, d_op):
        quadratic = polarise(parse_density("0.5*u_x^2"), 2, 0.5)
        assert PavfStepper(quadratic, d_op, grid, 0.1, real_fwd).constant_matrix
        cubic = polarise_gkdv(3, 0.5)
        assert not PavfStepper(cubic, d_op, grid, 0.1, real_fwd).constant_matrix


class TestIntegrate:
    def test_multistep_run_with_conservation_log(self, grid, real_fwd, d_op):
        from polint.integrators import integrate

        pd = polarise_gkdv(3, 0.5)
        history, boot = bootstrap(kdv_density(), d_op, soliton(grid), 0.1, 2, real=real_fwd)
        stepper = PavfStepper(pd, d_op, grid, 0.1, real_fwd)
        run = integrate(
            stepper, history, 40, density=kdv_density(), pd=pd, real=real_fwd
        )
        assert len(run.history) == 2
        assert run.solve_count == 40
        assert run.t == pytest.approx(0.1 + 40 * 0.1)
        pol = [p for _, _, p in run.conservation_log if p is not None]
        assert len(pol) == 41
        assert max(abs(p - pol[0]) for p in pol) <= 1e-12 * abs(pol[0])

    def test_one_step_run_logs_newton_iterations(self, grid, real_fwd, d_op):
        from polint.integrators import integrate

        stepper = FullyImplicitStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        run = integrate(
            stepper, [soliton(grid)], 10, density=kdv_density(), real=real_fwd
        )
        assert len(run.newton_iters_log) == 10
        assert run.solve_count == sum(run.newton_iters_log)
        hs = [h for _, h, _ in run.conservation_log]
        assert max(abs(h - hs[0]) for h in hs) <= 1e-12 * abs(hs[0])

    def test_stop_when(self, grid, real_fwd, d_op):
        from polint.integrators import integrate

        stepper = NaiveLIStepper(kdv_density(), d_op, grid, 0.1, real_fwd)
        run = integrate(
            stepper,
            [soliton(grid)],
            100,
            stop_when=lambda values: True,
        )
        assert run.solve_count == 1


class TestBootstrap:
    def test_k2_equals_one_fi_step(self, grid, real_fwd, d_op):
        u0 = soliton(grid)
        history, solves = bootstrap(kdv_density(), d_op, u0, 0.1, 2, real=real_fwd)
        direct = step_fully_implicit(kdv_density(), d_op, u0, 0.1, real=real_fwd)
        assert len(history) == 2
        assert solves > 0
        assert np.array_equal(history[1].values, direct.values)

    def test_k3_takes_two_steps(self, grid, real_fwd, d_op):
        u0 = soliton(grid)
        history, _ = bootstrap(gkdv_density(6), d_op, u0, 0.05, 3, real=real_fwd)
        assert len(history) == 3

    def test_records_polarised_reference(self, grid, real_fwd, d_op):
        # the bootstrap history defines the conserved polarised value
        pd = polarise_gkdv(3, 0.5)
        history, _ = bootstrap(kdv_density(), d_op, soliton(grid), 0.1, 2, real=real_fwd)
        h_ref = eval_polarised(pd, history, real_fwd)
        assert np.isfinite(h_ref)
        stepper = PavfStepper(pd, d_op, grid, 0.1, real_fwd)
        hist = [h.values for h in history]
        new = stepper.step_values(hist)
        h_next = eval_polarised(
            pd, [GridFunction(grid, v) for v in (hist[1:] + [new])], real_fwd
        )
        assert abs(h_next - h_ref) <= 1e-12 * abs(h_ref)

    def test_requires_multistep(self, grid, real, d_op):
        with pytest.raises(ValueError):
            bootstrap(kdv_density(), d_op, soliton(grid), 0.1, 1, real=real)
