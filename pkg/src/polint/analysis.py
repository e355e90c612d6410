"""Stability analysis, soliton diagnostics, convergence and cost studies."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityPoly, gkdv_density, hamiltonian_d
from .grid import Grid1D, GridFunction, default_realisation, make_standard_ops
from .integrators import (
    FullyImplicitStepper,
    MidpointStepper,
    NaiveLIStepper,
    PavfStepper,
    SkewOp,
    bootstrap,
)
from .polarisation import polarise, polarise_gkdv

STABILITY_SLACK = 1e-12


# ---------------------------------------------------------------------------
# von Neumann analysis of the two-step theta-scheme


def stability_roots(theta: float, tau: float) -> tuple[complex, complex]:
    """Roots of (1 - i*theta*tau) z^2 - 2i*(1-theta)*tau z - (1 + i*theta*tau).

    Uses the cancellation-free form: the root nearer -b is computed from
    q = -(b + sign * disc)/2 and the other via Vieta, so both stay accurate
    for large |tau|.
    """
    a = 1.0 - 1j * theta * tau
    b = -2j * (1.0 - theta) * tau
    c = -(1.0 + 1j * theta * tau)
    disc = cmath.sqrt(b * b - 4.0 * a * c)
    if (b.conjugate() * disc).real >= 0.0:
        q = -0.5 * (b + disc)
    else:
        q = -0.5 * (b - disc)
    if q == 0.0:  # b = 0 and disc = 0: double root at the origin of -b/2a
        z = -b / (2.0 * a)
        return z, z
    return q / a, c / q


def stability_threshold(tau: float) -> float:
    """Smallest stable theta for one mode: 1/2 - 1/(2 tau^2)."""
    if tau == 0.0:
        raise ValueError("threshold is undefined at tau = 0")
    return 0.5 - 0.5 / (tau * tau)


@dataclass
class StabilityReport:
    theta: float
    tau_samples: np.ndarray
    root_moduli: np.ndarray  # shape (len(tau_samples), 2)
    stable: bool


def scan_stability(theta: float, taus) -> StabilityReport:
    taus = np.asarray(taus, dtype=float)
    moduli = np.empty((taus.shape[0], 2))
    for i, tau in enumerate(taus):
        z1, z2 = stability_roots(theta, float(tau))
        moduli[i] = (abs(z1), abs(z2))
    stable = bool(np.max(moduli) <= 1.0 + STABILITY_SLACK)
    return StabilityReport(theta, taus, moduli, stable)


# ---------------------------------------------------------------------------
# traveling-wave reference for the cubic case


def soliton_profile(c: float):
    """Traveling-wave profile for u_t + u_xxx + (u^2)_x = 0.

    Amplitude 3c/2 with width parameter sqrt(c)/2; the width has been
    verified against the PDE residual (see sech2_pde_residual).
    """
    if c <= 0:
        raise ValueError("wave speed must be positive")
    amp = 1.5 * c
    width = 0.5 * math.sqrt(c)

    def phi(xi):
        return amp / np.cosh(width * np.asarray(xi)) ** 2

    return phi


def sech2_pde_residual(amplitude: float, width: float, c: float, xs) -> float:
    """Max residual of u_t + u_xxx + (u^2)_x on u = A sech^2(B(x - ct)).

    Uses closed-form derivatives, so this checks the ansatz itself and not
    any discretisation.
    """
    xs = np.asarray(xs, dtype=float)
    s = 1.0 / np.cosh(width * xs)
    th = np.tanh(width * xs)
    u = amplitude * s**2
    ux = -2.0 * amplitude * width * s**2 * th
    uxxx = 2.0 * amplitude * width**3 * (12.0 * s**4 - 4.0 * s**2) * th
    ut = -c * ux
    return float(np.max(np.abs(ut + uxxx + 2.0 * u * ux)))


def soliton_values(grid: Grid1D, x0: float, c: float, t: float) -> np.ndarray:
    """Sample the soliton at time t with the argument wrapped periodically."""
    phi = soliton_profile(c)
    length = grid.length
    xi = grid.points(x0) - c * t
    xi = (xi + 0.5 * length) % length - 0.5 * length
    return phi(xi)


def spectral_dx_matrix(grid: Grid1D) -> np.ndarray:
    """Dense derivative of the trigonometric interpolant (Nyquist zeroed)."""
    n = grid.n_points
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=grid.dx)
    cols = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        v = np.fft.rfft(eye[:, j])
        w = 1j * k * v
        if n % 2 == 0:
            w[-1] = 0.0
        cols[:, j] = np.fft.irfft(w, n)
    return cols


def discrete_traveling_wave(
    grid: Grid1D,
    x0: float,
    c: float,
    real: dict,
    D: "SkewOp",
    tol: float = 1e-12,
    max_iters: int = 50,
) -> GridFunction:
    """Relative equilibrium of the semidiscrete cubic flow at speed c.

    Solves D(-d2 psi - psi^2) + c * dx_spectral psi = 0 by Newton from the
    sampled continuum profile; the least-squares step handles the
    translation null direction. Starting runs from this profile removes
    the grid-misfit radiation that otherwise floors time-error studies.
    """
    dm = D.op.to_dense()
    d2m = real[2].to_dense()
    s = spectral_dx_matrix(grid)
    psi = soliton_values(grid, x0, c, 0.0)
    for _ in range(max_iters):
        residual = dm @ (-d2m @ psi - psi**2) + c * (s @ psi)
        if np.max(np.abs(residual)) < tol:
            return GridFunction(grid, psi)
        jac = dm @ (-d2m - 2.0 * np.diag(psi)) + c * s
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        psi = psi + step
    raise RuntimeError(
        f"traveling-wave Newton stalled at residual {np.max(np.abs(residual)):.3e}"
    )


@dataclass(frozen=True)
class SolitonErrors:
    t: float
    shape_err: float
    distance_err: float


def shape_distance_errors(
    U: GridFunction, t: float, c: float, x0: float
) -> SolitonErrors:
    """Best-fit residual energy over translates and travelled-distance error.

    The shift is located by a coarse scan over 4N translates followed by
    iterated three-point parabolic refinement; the distance error is taken
    against the representative of the shift closest to c*t (periodic wrap).
    """
    if c <= 0:
        raise ValueError("wave speed must be positive")
    grid = U.grid
    xs = grid.points(x0)
    length = grid.length
    dx = grid.dx
    phi = soliton_profile(c)
    values = U.values

    def err(tau: float) -> float:
        xi = (xs - tau + 0.5 * length) % length - 0.5 * length
        diff = values - phi(xi)
        return float(np.dot(diff, diff) * dx)

    n_scan = 4 * grid.n_points
    target = c * t
    taus = target + np.linspace(-0.5 * length, 0.5 * length, n_scan, endpoint=False)
    xi = (xs[None, :] - taus[:, None] + 0.5 * length) % length - 0.5 * length
    errs = np.sum((values[None, :] - phi(xi)) ** 2, axis=1) * dx
    best = int(np.argmin(errs))
    tau = float(taus[best])
    e0 = float(errs[best])

    h = length / n_scan
    for _ in range(10):
        em, ep = err(tau - h), err(tau + h)
        denom = em - 2.0 * e0 + ep
        if denom > 0.0:
            shift = 0.5 * h * (em - ep) / denom
            shift = max(-h, min(h, shift))
            cand = tau + shift
            ec = err(cand)
            if ec < e0:
                tau, e0 = cand, ec
        if em < e0:
            tau, e0 = tau - h, em
        if ep < e0:
            tau, e0 = tau + h, ep
        h /= 4.0
    return SolitonErrors(t=t, shape_err=e0, distance_err=abs(tau - target))


# ---------------------------------------------------------------------------
# Airy theta-scheme experiment


def airy_density() -> DensityPoly:
    return 0.5 * DensityPoly.variable(1) * DensityPoly.variable(1)


def airy_discrete_taus(grid: Grid1D, dt: float) -> np.ndarray:
    """Per-mode tau of the fully discrete theta-scheme.

    tau_m = dt * Im(symbol of d1) * (-Re(symbol of d2)): the grid analogue
    of lambda_k * dt * k^2 built from the implemented stencils.
    """
    ops = make_standard_ops(grid)
    modes = np.arange(grid.n_points)
    lam = np.imag(ops["d1"].mode_symbol(modes))
    mu = -np.real(ops["d2"].mode_symbol(modes))
    return dt * lam * mu


def airy_tau_max(grid: Grid1D, dt: float) -> float:
    return float(np.max(np.abs(airy_discrete_taus(grid, dt))))


@dataclass
class AiryRun:
    theta: float
    dt: float
    grid: Grid1D
    sup_norms: list[float]
    blowup: bool
    blowup_step: int | None
    initial: GridFunction
    final: GridFunction
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    solve_count: int = 0


def airy_experiment(
    theta: float,
    n_steps: int,
    grid: Grid1D,
    dt: float,
    blowup_factor: float = 1e3,
    snapshot_every: int | None = None,
) -> AiryRun:
    """Two-step theta-scheme on u_t + u_xxx = 0 with u(x, 0) = sin x.

    Runs until n_steps or until the sup norm exceeds blowup_factor times
    its initial value; blow-up is a reported outcome, not an error.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    real = default_realisation(grid, "forward")
    D = SkewOp(make_standard_ops(grid)["d1"])
    density = airy_density()
    pd = polarise(density, 2, theta)
    u0 = GridFunction(grid, np.sin(grid.points(0.0)))
    history, boot_solves = bootstrap(density, D, u0, dt, 2, real=real)
    stepper = PavfStepper(pd, D, grid, dt, real)
    if snapshot_every is None:
        snapshot_every = max(1, n_steps // 200)

    sup0 = u0.sup_norm()
    hist_vals = [h.values for h in history]
    sup_norms = [float(np.max(np.abs(v))) for v in hist_vals]
    snapshots = [(0, hist_vals[0].copy())]
    blowup = False
    blowup_step = None
    step = len(hist_vals) - 1
    while step < n_steps:
        new = stepper.step_values(hist_vals)
        hist_vals = hist_vals[1:] + [new]
        step += 1
        sup = float(np.max(np.abs(new)))
        sup_norms.append(sup)
        if step % snapshot_every == 0:
            snapshots.append((step, new.copy()))
        if sup > blowup_factor * sup0:
            blowup = True
            blowup_step = step
            break
    final = GridFunction(grid, hist_vals[-1])
    if snapshots[-1][0] != step:
        snapshots.append((step, hist_vals[-1].copy()))
    return AiryRun(
        theta=theta,
        dt=dt,
        grid=grid,
        sup_norms=sup_norms,
        blowup=blowup,
        blowup_step=blowup_step,
        initial=u0,
        final=final,
        snapshots=snapshots,
        solve_count=stepper.solve_count + boot_solves,
    )


def airy_blowup_theta_bisection(
    grid: Grid1D, dt: float, n_steps: int = 2000, tol: float = 1e-3
) -> float:
    """Empirical smallest stable theta located by bisection on blow-up."""
    lo, hi = 0.4, 0.6
    if airy_experiment(lo, n_steps, grid, dt).blowup is False:
        return lo
    if airy_experiment(hi, n_steps, grid, dt).blowup:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if airy_experiment(mid, n_steps, grid, dt).blowup:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# convergence / cost studies on the traveling-wave problem


SCHEME_NAMES = ("fi_cons", "li_cons", "fi_midpoint", "li_naive")


@dataclass
class SweepRow:
    scheme: str
    dt: float
    global_error: float | None
    solve_count: int
    endpoint_energy_error: float | None
    status: str = "ok"
    note: str = ""


@dataclass
class GkdvSetup:
    """Shared ingredients of the soliton experiments."""

    grid: Grid1D
    x0: float
    c: float
    p: int
    density: DensityPoly
    real: dict
    D: SkewOp
    u0: GridFunction

    @staticmethod
    def make(
        n: int = 32,
        length: float = 10.0,
        x0: float = -5.0,
        c: float = 1.0,
        p: int = 3,
        x_realisation: str = "forward",
        amplitude_scale: float = 1.0,
        initial: str = "sampled",
    ) -> "GkdvSetup":
        """``initial``: "sampled" takes the continuum profile on the grid;
        "discrete_tw" (cubic case only) refines it to the semidiscrete
        relative equilibrium, which keeps time-order measurements free of
        grid-misfit radiation."""
        grid = Grid1D(n, length / n)
        real = default_realisation(grid, x_realisation)
        D = SkewOp(make_standard_ops(grid)["d1"])
        density = gkdv_density(p)
        if initial == "sampled":
            u0 = GridFunction(
                grid, amplitude_scale * soliton_values(grid, x0, c, 0.0)
            )
        elif initial == "discrete_tw":
            if p != 3 or amplitude_scale != 1.0:
                raise ValueError("discrete_tw initial data is for the plain cubic case")
            u0 = discrete_traveling_wave(grid, x0, c, real, D)
        else:
            raise ValueError(f"unknown initial {initial!r}")
        return GkdvSetup(grid, x0, c, p, density, real, D, u0)


def newton_config_for(dt: float) -> "NewtonConfig":
    """Machine-precision Newton tolerance with a round-off-aware floor.

    The residual carries a (U - u_n)/dt term whose round-off floor scales
    like eps/dt, so for very small steps the factor must sit above it.
    """
    from .integrators import NewtonConfig

    eps = float(np.finfo(float).eps)
    return NewtonConfig(tol_factor=max(1e-13, 32.0 * eps / dt))


def run_scheme_to(
    setup: GkdvSetup,
    scheme: str,
    dt: float,
    t_end: float,
    theta: float = 0.5,
    k: int | None = None,
    collect_hd: bool = False,
    newton_cfg=None,
):
    """Integrate one scheme to t_end; returns (final values, solves, H_d log)."""
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end {t_end} is not a multiple of dt {dt}")
    grid, real, D, density = setup.grid, setup.real, setup.D, setup.density
    u0 = setup.u0
    cfg = newton_cfg if newton_cfg is not None else newton_config_for(dt)
    hd_log = []

    def log_hd(values):
        if collect_hd:
            hd_log.append(
                hamiltonian_d(density, GridFunction(grid, values), real)
            )

    if scheme == "li_cons":
        kk = k if k is not None else math.ceil(setup.p / 2)
        pd = polarise_gkdv(setup.p, theta)
        history, boot = bootstrap(density, D, u0, dt, kk, newton_cfg=cfg, real=real)
        stepper = PavfStepper(pd, D, grid, dt, real)
        hist_vals = [h.values for h in history]
        for v in hist_vals:
            log_hd(v)
        for _ in range(n_steps - (kk - 1)):
            new = stepper.step_values(hist_vals)
            hist_vals = hist_vals[1:] + [new]
            log_hd(new)
        return hist_vals[-1], stepper.solve_count + boot, hd_log

    if scheme == "fi_cons":
        stepper = FullyImplicitStepper(density, D, grid, dt, real, cfg)
    elif scheme == "fi_midpoint":
        stepper = MidpointStepper(density, D, grid, dt, real, cfg)
    elif scheme == "li_naive":
        stepper = NaiveLIStepper(density, D, grid, dt, real)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    values = u0.values
    log_hd(values)
    for _ in range(n_steps):
        if scheme == "li_naive":
            values = stepper.step_values(values)
        else:
            values, _ = stepper.step_values(values)
        log_hd(values)
    return values, stepper.solve_count, hd_log


def cost_accuracy_sweep(
    setup: GkdvSetup,
    schemes,
    dt_list,
    t_end: float,
    theta: float = 0.5,
    reference_divisor: int = 64,
    reference_values: np.ndarray | None = None,
) -> tuple[list[SweepRow], np.ndarray]:
    """Global error and linear-solve counts per (scheme, dt) at t_end.

    The reference is a fully implicit run at min(dt)/reference_divisor
    (time-converged on the same grid), unless one is supplied.
    """
    dx = setup.grid.dx
    if reference_values is None:
        dt_ref = min(dt_list) / reference_divisor
        reference_values, _, _ = run_scheme_to(setup, "fi_cons", dt_ref, t_end)
    real = setup.real
    h0 = hamiltonian_d(setup.density, setup.u0, real)
    rows = []
    for scheme in schemes:
        for dt in dt_list:
            try:
                values, solves, _ = run_scheme_to(
                    setup, scheme, dt, t_end, theta=theta
                )
            except Exception as exc:  # record failures as marked rows
                rows.append(
                    SweepRow(scheme, dt, None, 0, None, status="failed", note=str(exc))
                )
                continue
            err = float(
                np.sqrt(np.sum((values - reference_values) ** 2) * dx)
            )
            hd = hamiltonian_d(
                setup.density, GridFunction(setup.grid, values), real
            )
            rows.append(SweepRow(scheme, dt, err, solves, abs(hd - h0)))
    return rows, reference_values


def fit_loglog_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape[0] < 2:
        raise ValueError("need at least two points for a slope")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def interp_cost_at_error(rows: list[SweepRow], error: float) -> float:
    """Log-log interpolation of cumulative solves at a target global error."""
    pts = sorted(
        (r.global_error, r.solve_count)
        for r in rows
        if r.status == "ok" and r.global_error and r.global_error > 0
    )
    if len(pts) < 2:
        raise ValueError("need at least two successful rows")
    errs = np.log([p[0] for p in pts])
    costs = np.log([p[1] for p in pts])
    x = math.log(error)
    if x <= errs[0]:
        i = 0
    elif x >= errs[-1]:
        i = len(errs) - 2
    else:
        i = int(np.searchsorted(errs, x) - 1)
    t = (x - errs[i]) / (errs[i + 1] - errs[i])
    return float(math.exp(costs[i] + t * (costs[i + 1] - costs[i])))


# ---------------------------------------------------------------------------
# energy drift


@dataclass
class DriftEntry:
    dt: float
    endpoint_error: float
    endpoint_sample: float
    trailing_drift: float


@dataclass
class DriftReport:
    entries: list[DriftEntry]
    slope: float | None


def energy_drift_study(
    runs,
    trailing_fraction: float = 0.02,
    transient_fraction: float = 0.1,
    fit_slope: bool = True,
) -> DriftReport:
    """Endpoint energy error versus dt plus a secular-drift measure.

    ``runs`` is an iterable of (dt, times, H values). H - H(0) oscillates
    at the cell-crossing period with amplitude O(dt^2), so the endpoint
    error is taken as max |H - H(0)| over the trailing window (a point
    sample aliases the oscillation). The trailing drift is the net change
    across that window of the linear trend fitted to the post-transient
    run, which isolates secular growth from the bounded oscillation.
    """
    entries = []
    for dt, times, hs in runs:
        times = np.asarray(times, dtype=float)
        hs = np.asarray(hs, dtype=float)
        dh = hs - hs[0]
        n = dh.shape[0]
        m = max(3, int(math.ceil(trailing_fraction * n)))
        window = times[-1] - times[-m]
        endpoint_error = float(np.max(np.abs(dh[-m:])))
        skip = int(math.ceil(transient_fraction * n))
        trend = np.polyfit(times[skip:], dh[skip:], 1)[0]
        drift = abs(float(trend) * window)
        entries.append(DriftEntry(dt, endpoint_error, abs(float(dh[-1])), drift))
    if len(entries) < 3 and fit_slope:
        raise ValueError("need at least three dt values to fit a slope")
    slope = None
    if fit_slope:
        slope = fit_loglog_slope(
            [e.dt for e in entries], [max(e.endpoint_error, 1e-300) for e in entries]
        )
    return DriftReport(entries, slope)
