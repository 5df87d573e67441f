"""Complex Berry (Zak) phases from a gauge-smoothed bundle, a Wilson-loop
cross-check, quantization tests and parameter sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .errors import BrokenRegime, DegenerateRatio, NotSmoothed, NumericalError, VanishingOverlap
from .gauge import BandTrack, LoopGrid, SmoothedBundle, smooth_bundle, solve_along_loop
from .eigsolver import eigenvalues, energy_scale
from .models import PtClassification, SshModel, SshParams, pt_classify
from .tolerances import DEFAULT, Tolerances

TWO_PI = 2 * math.pi

# Band 1 (lower real energy) carries the minus sign of the closed form, band 2
# the plus sign; fixed by matching the numerics at theta = 0.
ANALYTIC_BAND_SIGNS = (-1, +1)


def reduce_angle(x: float) -> float:
    """Representative of ``x`` modulo 2 pi in ``(-pi, pi]``; nan stays nan."""
    if not math.isfinite(x):
        return math.nan
    return x - TWO_PI * math.ceil((x - math.pi) / TWO_PI)


def circular_distance(a: float, b: float) -> float:
    return abs(reduce_angle(a - b))


def phase_gap(g1: complex, g2: complex) -> float:
    """``|g1 - g2|`` with the real parts compared modulo 2 pi."""
    return math.hypot(circular_distance(g1.real, g2.real), g1.imag - g2.imag)


def quantization_check(gamma: complex, tol: float = DEFAULT.quant):
    """``(is_quantized, residual, value)`` for ``Re gamma`` against {0, pi} mod 2 pi."""
    d0 = circular_distance(gamma.real, 0.0)
    dpi = circular_distance(gamma.real, math.pi)
    value, residual = (0.0, d0) if d0 <= dpi else (math.pi, dpi)
    return residual <= tol, residual, value


@dataclass
class ZakResult:
    band_index: int
    gamma: complex
    method: str
    M: int
    quant_residual: float
    pt_status: PtClassification | None = None
    oracle_gap: float = math.nan

    @property
    def reduced(self) -> complex:
        return complex(reduce_angle(self.gamma.real), self.gamma.imag)

    @property
    def quantized_value(self) -> float:
        return quantization_check(self.gamma)[2]


def _result(n, gamma, method, M):
    return ZakResult(n, complex(gamma), method, M, quantization_check(gamma)[1])


def _as_track(source, n) -> BandTrack:
    return source.track(n) if isinstance(source, SmoothedBundle) else source


def zak_derivative(bundle: SmoothedBundle, n: int, scheme: str = "central",
                   tol: Tolerances = DEFAULT) -> ZakResult:
    """``gamma_n = i sum_j <chi_j| delta phi_j>`` on a single-valued bundle.

    ``scheme="central"`` uses ``(phi_{j+1} - phi_{j-1})/2`` and is second
    order; ``"forward"`` uses ``phi_{j+1} - phi_j`` and converges as 1/M.
    """
    t = _as_track(bundle, n)
    if not t.smoothed or t.closure_error() > tol.closure:
        raise NotSmoothed(f"band {t.band_index}: bundle is not single valued; smooth it first")
    chi, phi = t.left[:-1], t.right[:-1]          # alpha_M duplicates alpha_1
    ahead = np.roll(phi, -1, axis=0)
    if scheme == "central":
        step = 0.5 * (ahead - np.roll(phi, 1, axis=0))
    elif scheme == "forward":
        step = ahead - phi
    else:
        raise ValueError(f"unknown difference scheme {scheme!r}")
    gamma = 1j * np.einsum("ji,ji->", chi, step)
    return _result(t.band_index, gamma, "derivative", t.M)


def zak_wilson(bundle, n: int, symmetric: bool = True,
               tol: Tolerances = DEFAULT) -> ZakResult:
    """Gauge-invariant discrete Wilson loop around the ``M - 1`` distinct points.

    The real part is ``-arg prod_j <chi_j|phi_{j+1}>``. The imaginary part is
    ``sum_j ln|<chi_j|phi_{j+1}>|`` when ``symmetric`` is false, and the
    average of that forward sum with the backward one,
    ``-sum_j ln|<chi_{j+1}|phi_j>|``, when true; the average cancels the
    first-order discretization error. Any per-point rescaling
    ``chi_j -> chi_j / c_j``, ``phi_j -> c_j phi_j`` telescopes away.
    """
    t = _as_track(bundle, n)
    chi, phi = t.left[:-1], t.right[:-1]
    fwd = np.einsum("ji,ji->j", chi, np.roll(phi, -1, axis=0))
    if np.min(np.abs(fwd)) < tol.overlap:
        raise VanishingOverlap(f"band {t.band_index}: a Wilson-loop link vanishes")
    real = reduce_angle(-np.angle(np.prod(fwd / np.abs(fwd))))
    imag = np.sum(np.log(np.abs(fwd)))
    if symmetric:
        bwd = np.einsum("ji,ji->j", np.roll(chi, -1, axis=0), phi)
        if np.min(np.abs(bwd)) < tol.overlap:
            raise VanishingOverlap(f"band {t.band_index}: a Wilson-loop link vanishes")
        imag = 0.5 * (imag - np.sum(np.log(np.abs(bwd))))
    return _result(t.band_index, complex(real, imag), "wilson", t.M)


@dataclass
class ZakAnalysis:
    """Both phase estimates for every band of one model on one grid."""

    grid: LoopGrid
    pt: PtClassification
    raw: SmoothedBundle
    smoothed: SmoothedBundle
    derivative: list[ZakResult]
    wilson: list[ZakResult]


def analyze(model, M: int = 1001, tol: Tolerances = DEFAULT,
            scheme: str = "central", grid: LoopGrid | None = None) -> ZakAnalysis:
    grid = LoopGrid.brillouin_zone(M) if grid is None else grid
    pt = pt_classify(model, grid, tol.pt, tol)
    raw = solve_along_loop(model, grid, tol)
    smooth = smooth_bundle(raw, tol)
    deriv, wil = [], []
    for n in range(1, len(raw.tracks) + 1):
        d = zak_derivative(smooth, n, scheme, tol)
        w = zak_wilson(raw, n, tol=tol)
        d.oracle_gap = w.oracle_gap = phase_gap(d.gamma, w.gamma)
        d.pt_status = w.pt_status = pt
        deriv.append(d)
        wil.append(w)
    return ZakAnalysis(grid, pt, raw, smooth, deriv, wil)


def analytic_bands(p: SshParams):
    """Closed-form phases in numerical band order, or None where undefined."""
    try:
        plus, minus = analytic.analytic_from_ssh(p)
    except (BrokenRegime, DegenerateRatio):
        return None
    return tuple(plus if s > 0 else minus for s in ANALYTIC_BAND_SIGNS)


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepOptions:
    M: int = 1001
    method: str = "both"            # derivative | wilson | both
    emit_analytic: bool = True
    workers: int = 1
    scheme: str = "central"
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.method not in ("derivative", "wilson", "both"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SweepRow:
    theta: float
    derivative: tuple | None = None
    wilson: tuple | None = None
    analytic: tuple | None = None
    pt_broken: bool | None = None
    gapless: bool | None = None
    quant_res: tuple | None = None
    oracle_gap: tuple | None = None
    method: str = "both"
    error: str | None = None

    @property
    def gamma(self):
        """Phases in the reported method (``both`` reports the derivative)."""
        return self.wilson if self.method == "wilson" else self.derivative

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def expected_failure(self) -> bool:
        """Failed where no single-band phase exists (PT broken or gap closed)."""
        return not self.ok and bool(self.pt_broken or self.gapless)


def min_band_gap(model, grid: LoopGrid, tol: Tolerances = DEFAULT) -> float:
    """Smallest eigenvalue separation over the grid, relative to the largest
    ``||H(k)||`` on the loop."""
    spectra = [eigenvalues(model(k), tol) for k in grid.points]
    scale = max(energy_scale(model(k)) for k in grid.points)
    gap = math.inf
    for E in spectra:
        d = np.abs(E[:, None] - E[None, :])
        gap = min(gap, float(d[np.triu_indices(len(E), 1)].min()))
    return gap / scale


def nearly_gapless(model, grid: LoopGrid, tol: Tolerances = DEFAULT) -> bool:
    """True when two bands come within ``sqrt(tol.degen)`` of each other.

    Near an exceptional point the splitting grows like the square root of
    the perturbation, so a rounded exceptional point shows up as a gap of
    order ``sqrt(eps)`` rather than ``eps``.
    """
    return min_band_gap(model, grid, tol) <= math.sqrt(tol.degen)


def fill_row(row: SweepRow, res: ZakAnalysis, p: SshParams, options: SweepOptions) -> SweepRow:
    """Copy one analysis into a sweep row."""
    row.pt_broken = res.pt.broken
    row.derivative = tuple(r.gamma for r in res.derivative)
    row.wilson = tuple(r.gamma for r in res.wilson)
    row.quant_res = tuple(r.quant_residual for r in res.wilson)
    row.oracle_gap = tuple(r.oracle_gap for r in res.derivative)
    if options.emit_analytic and not row.pt_broken:
        row.analytic = analytic_bands(p)
    return row


def sweep_row(params: SshParams, theta: float, options: SweepOptions) -> SweepRow:
    """One theta of a sweep. Numerical failures are recorded, never raised."""
    p = params.with_theta(theta)
    model = SshModel(p)
    grid = LoopGrid.brillouin_zone(options.M)
    row = SweepRow(theta=theta, method=options.method)
    row.pt_broken = pt_classify(model, grid, options.tol.pt, options.tol).broken
    row.gapless = nearly_gapless(model, grid, options.tol)
    try:
        res = analyze(model, options.M, options.tol, options.scheme, grid=grid)
    except NumericalError as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    return fill_row(row, res, p, options)


def _row_job(job):
    return sweep_row(*job)


def default_workers() -> int:
    env = os.environ.get("ZAKLINE_WORKERS")
    if env:
        return max(1, int(env))
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def sweep(params: SshParams, thetas, options: SweepOptions | None = None) -> list[SweepRow]:
    """Zak phases of the SSH chain over a list of control angles, in order."""
    options = SweepOptions() if options is None else options
    jobs = [(params, float(th), options) for th in thetas]
    if options.workers <= 1 or len(jobs) <= 1:
        return [_row_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=options.workers) as pool:
        return list(pool.map(_row_job, jobs, chunksize=max(1, len(jobs) // (4 * options.workers))))


def convergence_study(model, n: int, M_list, method: str = "derivative",
                      tol: Tolerances = DEFAULT, scheme: str = "central"):
    """``[(M, gamma, |gamma(M) - gamma(M_prev)|), ...]``; the first difference is nan.

    A grid on which the pipeline fails (e.g. a PT-broken model) contributes a
    nan phase instead of aborting the study.
    """
    M_list = list(M_list)
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be increasing")
    if method not in ("derivative", "wilson"):
        raise ValueError(f"unknown method {method!r}")
    out, prev = [], None
    for M in M_list:
        try:
            res = analyze(model, M, tol, scheme)
            g = (res.derivative if method == "derivative" else res.wilson)[n - 1].gamma
        except NumericalError:
            g = complex(math.nan, math.nan)
        out.append((M, g, math.nan if prev is None else phase_gap(g, prev)))
        prev = g
    return out
