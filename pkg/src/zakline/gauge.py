"""Gauge smoothing of a biorthogonal eigenbasis along a closed loop.

The pipeline is

1. ``solve_along_loop``: diagonalize at every loop point and follow each
   band by overlap continuity;
2. ``trace_phases``: fix the relative phase of consecutive points so that
   the overlaps ``<chi_j|phi_{j-1}>`` and ``<chi_{j-1}|phi_j>`` are real
   and positive, renormalizing each pair;
3. ``phase_winding``: measure the phase mismatch the traced basis still has
   between the two ends of the loop;
4. ``apply_smoothing``: spread that mismatch over the loop with a linear
   phase ramp so the basis becomes single valued.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import eigsolver
from .eigsolver import BiorthPair, EigenSet
from .errors import (
    BandCrossing,
    ClosureFailure,
    NoUsableComponent,
    VanishingOverlap,
)
from .tolerances import DEFAULT, Tolerances

# Argument given to component p of the left vector at the basepoint. With a
# quantized winding the traced phase changes by 0 or +-pi around the loop, so
# starting at -pi/2 keeps both ends a quarter turn away from the branch cut.
BASEPOINT_ARG = -math.pi / 2


@dataclass(frozen=True)
class LoopGrid:
    """Closed loop ``alpha_1 < ... < alpha_M = alpha_1 + period``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 3:
            raise ValueError(f"grid too coarse: a loop needs at least 3 points, got {pts.size}")
        if not np.all(np.isfinite(pts)) or not np.all(np.diff(pts) > 0):
            raise ValueError("loop coordinates must be finite and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, start: float, period: float, M: int) -> "LoopGrid":
        if M < 3:
            raise ValueError(f"grid too coarse: a loop needs at least 3 points, got {M}")
        return cls(np.linspace(start, start + period, M))

    @classmethod
    def brillouin_zone(cls, M: int) -> "LoopGrid":
        """``k`` from ``-pi`` to ``pi`` inclusive."""
        return cls.uniform(-math.pi, 2 * math.pi, M)

    @property
    def M(self) -> int:
        return len(self.points)

    @property
    def period(self) -> float:
        return float(self.points[-1] - self.points[0])

    def fractions(self) -> np.ndarray:
        """``(j - 1) / (M - 1)`` for ``j = 1..M``."""
        return np.arange(self.M) / (self.M - 1)


class Winding(NamedTuple):
    dphi: float     # total phase change of component p of chi over the loop
    X: int          # signed count of branch-cut crossings
    p: int          # 0-based component index


@dataclass
class BandTrack:
    """One band followed around the loop.

    ``left`` has shape ``(M, d)`` (row ``j`` is ``<chi(alpha_j)|``) and
    ``right`` has shape ``(M, d)`` (row ``j`` holds the components of
    ``|phi(alpha_j)>``).
    """

    band_index: int
    energies: np.ndarray
    left: np.ndarray
    right: np.ndarray
    traced: bool = False
    smoothed: bool = False
    winding: Winding | None = None

    @property
    def M(self) -> int:
        return len(self.energies)

    def pair(self, j: int) -> BiorthPair:
        return BiorthPair(self.band_index, complex(self.energies[j]), self.left[j], self.right[j])

    @property
    def pairs(self) -> list[BiorthPair]:
        return [self.pair(j) for j in range(self.M)]

    def norms(self) -> np.ndarray:
        """``<chi_j|phi_j>`` along the loop."""
        return np.einsum("ji,ji->j", self.left, self.right)

    def forward_overlaps(self) -> np.ndarray:
        """``<chi_j|phi_{j+1}>`` for ``j = 1..M-1``."""
        return np.einsum("ji,ji->j", self.left[:-1], self.right[1:])

    def backward_overlaps(self) -> np.ndarray:
        """``<chi_{j+1}|phi_j>`` for ``j = 1..M-1``."""
        return np.einsum("ji,ji->j", self.left[1:], self.right[:-1])

    def closure_error(self) -> float:
        return float(max(np.max(np.abs(self.left[-1] - self.left[0])),
                         np.max(np.abs(self.right[-1] - self.right[0]))))

    def copy(self) -> "BandTrack":
        return replace(self, energies=self.energies.copy(),
                       left=self.left.copy(), right=self.right.copy())


@dataclass
class SmoothedBundle:
    grid: LoopGrid
    tracks: list[BandTrack] = field(default_factory=list)

    def track(self, n: int) -> BandTrack:
        """Band ``n``, counted from 1."""
        return self.tracks[n - 1]

    @property
    def smoothed(self) -> bool:
        return all(t.smoothed for t in self.tracks)

    def eigenset(self, j: int) -> EigenSet:
        return EigenSet([t.pair(j) for t in self.tracks])

    def biorthogonality_error(self) -> float:
        """``max_j max_mn |<chi_m|phi_n> - delta_mn|``."""
        L = np.stack([t.left for t in self.tracks], axis=1)    # (M, n, d)
        R = np.stack([t.right for t in self.tracks], axis=2)   # (M, d, n)
        O = L @ R
        return float(np.max(np.abs(O - np.eye(len(self.tracks)))))

    def regauged(self, left_phases, right_phases=None) -> "SmoothedBundle":
        """Copy with ``chi_j -> chi_j e^{-i a_j}``, ``phi_j -> phi_j e^{+i b_j}``.

        Phases have shape ``(M, n_bands)``; ``right_phases`` defaults to
        ``left_phases`` (the transformation keeping ``<chi_j|phi_j>``).
        """
        left_phases = np.asarray(left_phases, dtype=float)
        right_phases = left_phases if right_phases is None else np.asarray(right_phases, float)
        tracks = []
        for n, t in enumerate(self.tracks):
            u = t.copy()
            u.left *= np.exp(-1j * left_phases[:, n])[:, None]
            u.right *= np.exp(1j * right_phases[:, n])[:, None]
            tracks.append(u)
        return SmoothedBundle(self.grid, tracks)


# ---------------------------------------------------------------- stage 0

# A continuation must beat every rival overlap by this factor. Rows of P sum
# to about 1, so two bands need roughly 0.56 against 0.44.
MATCH_MARGIN = 1.25


def _match_bands(prev: EigenSet, cur: EigenSet) -> list[int]:
    """Permutation ``perm`` with ``cur[perm[m]]`` continuing ``prev[m]``."""
    A = prev.lefts @ cur.rights          # <chi_prev_m|phi_cur_n>
    B = cur.lefts @ prev.rights          # <chi_cur_n|phi_prev_m>
    P = np.abs(A * B.T)                  # rephasing- and rescaling-invariant
    rows, cols = linear_sum_assignment(-P)
    perm = [0] * len(rows)
    for m, n in zip(rows, cols):
        best = P[m, n]
        rivals = np.concatenate([np.delete(P[m], n), np.delete(P[:, n], m)])
        if rivals.size and best <= MATCH_MARGIN * rivals.max():
            raise BandCrossing(
                f"cannot follow band {m + 1}: overlap {best:.3g} vs rival {rivals.max():.3g}"
            )
        perm[m] = int(n)
    return perm


def _loop_scale(model, points) -> float:
    return max(eigsolver.energy_scale(model(k)) for k in points[:: max(1, len(points) // 16)])


def solve_along_loop(model, grid: LoopGrid, tol: Tolerances = DEFAULT) -> SmoothedBundle:
    """Biorthonormal eigenpairs at every grid point, band-tracked by continuity.

    The basepoint is ordered by eigenvalue (real part, then imaginary part);
    every later point is ordered by overlap with its predecessor. Degenerate
    points are resolved against the neighbouring point.
    """
    points = grid.points
    scale = _loop_scale(model, points)

    def solve(j, reference=None):
        return eigsolver.eigensystem(model(points[j]), tol, reference=reference, scale=scale)

    def degenerate(es):
        E = es.energies
        return any(abs(E[a] - E[b]) <= tol.degen * scale
                   for a in range(len(E)) for b in range(a + 1, len(E)))

    sets = [None] * grid.M
    first = solve(0)
    if degenerate(first):
        second = solve(1)
        first = solve(0, reference=second)
        first = EigenSet([first[i] for i in _match_bands(second, first)])
    sets[0] = first
    for j in range(1, grid.M):
        cur = solve(j, reference=sets[j - 1])
        perm = _match_bands(sets[j - 1], cur)
        sets[j] = EigenSet([cur[i] for i in perm])

    tracks = []
    for n in range(len(first)):
        tracks.append(BandTrack(
            band_index=n + 1,
            energies=np.array([s[n].energy for s in sets]),
            left=np.array([s[n].left for s in sets]),
            right=np.array([s[n].right for s in sets]),
        ))
    return SmoothedBundle(grid, tracks)


# ---------------------------------------------------------------- stage 1

def usable_component(left: np.ndarray, tol_component: float = DEFAULT.component) -> int:
    """Lowest component index whose modulus stays above
    ``tol_component * max|chi|`` at every loop point."""
    mod = np.abs(left)
    ok = np.all(mod > tol_component * mod.max(), axis=0)
    if not ok.any():
        raise NoUsableComponent(
            "every component of the left vector vanishes somewhere on the loop"
        )
    return int(np.argmax(ok))


def trace_phases(track: BandTrack, tol: Tolerances = DEFAULT,
                 basepoint_arg: float | None = BASEPOINT_ARG) -> BandTrack:
    """Relate the phase of every point to its predecessor.

    Step ``j`` multiplies ``chi_j`` by ``exp(-i arg<chi_j|phi_{j-1}>)`` and
    ``phi_j`` by ``exp(-i arg<chi_{j-1}|phi_j>)``, then renormalizes the pair
    by the principal root of ``<chi_j|phi_j>``. Since every step only
    rescales the raw pair, the whole sweep reduces to a scalar recurrence on
    the overlaps of the input vectors, computed here in one pass.

    ``basepoint_arg`` fixes the argument of the usable component of
    ``chi_1`` first; ``None`` keeps the basepoint phase as given.
    """
    t = track.copy()
    s0 = cmath.sqrt(complex(t.left[0] @ t.right[0]))
    t.left[0] /= s0
    t.right[0] /= s0
    if basepoint_arg is not None:
        try:
            p = usable_component(t.left, tol.component)
        except NoUsableComponent:
            p = int(np.argmax(np.abs(t.left[0])))
        u = cmath.exp(1j * (basepoint_arg - cmath.phase(t.left[0, p])))
        t.left[0] *= u
        t.right[0] /= u
    # raw pairs are normalized per point; rescale each to <chi|phi> = 1
    norms = np.sqrt(t.norms().astype(complex))
    norms[0] = 1.0
    t.left /= norms[:, None]
    t.right /= norms[:, None]
    o = t.backward_overlaps()        # <chi_j|phi_{j-1}>, raw chi_j
    s = t.forward_overlaps()         # <chi_{j-1}|phi_j>, raw phi_j
    bad = np.flatnonzero((np.abs(o) < tol.overlap) | (np.abs(s) < tol.overlap))
    if bad.size:
        j = int(bad[0]) + 1
        raise VanishingOverlap(
            f"band {t.band_index}: consecutive states at points {j} and {j + 1} are "
            "(nearly) orthogonal; refine the grid or check for a band crossing"
        )
    # chi_j = chi_j^raw / g_j and phi_j = phi_j^raw * g_j
    g = np.ones(t.M, dtype=complex)
    for j in range(1, t.M):
        ea = cmath.exp(-1j * cmath.phase(o[j - 1] * g[j - 1]))
        eb = cmath.exp(-1j * cmath.phase(s[j - 1] / g[j - 1]))
        root = cmath.sqrt(ea * eb)
        g[j] = eb / root
    t.left /= g[:, None]
    t.right *= g[:, None]
    t.traced = True
    return t


# ---------------------------------------------------------------- stage 2

def unwrap_winding(args) -> tuple[float, int]:
    """Total change and branch-cut crossing count of a sequence of phases.

    ``dphi = args[-1] - args[0] + 2 pi X``, where ``X`` drops by one each time
    the stored argument jumps from the ``-pi`` side to the ``+pi`` side and
    rises by one for the opposite jump.
    """
    args = np.asarray(args, dtype=float)
    unwrapped = np.unwrap(args)
    dphi = float(unwrapped[-1] - unwrapped[0])
    X = int(round((dphi - (args[-1] - args[0])) / (2 * math.pi)))
    return dphi, X


def phase_winding(track: BandTrack, tol_component: float = DEFAULT.component) -> Winding:
    p = usable_component(track.left, tol_component)
    dphi, X = unwrap_winding(np.angle(track.left[:, p]))
    return Winding(dphi, X, p)


def smoothing_function(dphi: float, x):
    """Linear ramp ``f(x) = dphi * x``: ``f(0) = 0``, ``f(1) = dphi``."""
    return dphi * np.asarray(x, dtype=float) if np.ndim(x) else dphi * float(x)


def apply_smoothing(track: BandTrack, tol: Tolerances = DEFAULT) -> BandTrack:
    """Multiply ``chi_j`` by ``exp(-i f(x_j))`` and ``phi_j`` by ``exp(+i f(x_j))``."""
    if track.winding is None:
        raise ValueError("phase winding must be computed before smoothing")
    t = track.copy()
    x = np.arange(t.M) / (t.M - 1)
    ramp = np.exp(1j * smoothing_function(t.winding.dphi, x))
    t.left *= np.conj(ramp)[:, None]
    t.right *= ramp[:, None]
    err = t.closure_error()
    if err > tol.closure:
        raise ClosureFailure(
            f"band {t.band_index}: endpoint mismatch {err:.3g} after smoothing "
            f"(X={t.winding.X}); the loop basis is not single valued"
        )
    t.smoothed = True
    return t


def smooth_track(track: BandTrack, tol: Tolerances = DEFAULT,
                 basepoint_arg: float | None = BASEPOINT_ARG) -> BandTrack:
    t = trace_phases(track, tol, basepoint_arg)
    t.winding = phase_winding(t, tol.component)
    return apply_smoothing(t, tol)


def smooth_bundle(bundle: SmoothedBundle, tol: Tolerances = DEFAULT,
                  basepoint_arg: float | None = BASEPOINT_ARG) -> SmoothedBundle:
    return SmoothedBundle(bundle.grid,
                          [smooth_track(t, tol, basepoint_arg) for t in bundle.tracks])


def smooth_gauge(model, grid: LoopGrid, tol: Tolerances = DEFAULT) -> SmoothedBundle:
    """Solve, trace, measure the winding and smooth every band."""
    return smooth_bundle(solve_along_loop(model, grid, tol), tol)
