"""Bloch Hamiltonians: the PT-symmetric SSH chain and finite Fourier models.

A model is any object with an integer ``dim`` that is callable as
``model(k) -> (dim, dim) complex array``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import eigsolver
from .errors import ParseError, ValidationError
from .tolerances import DEFAULT, Tolerances

SIGMA0 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA1, SIGMA2, SIGMA3)


@dataclass(frozen=True)
class SshParams:
    """Mean hopping ``t``, dimerization ``delta``, control angle ``theta`` and
    gain/loss ``gamma`` of the SSH chain (lattice spacing 1)."""

    t: float = 1.0
    delta: float = 0.5
    gamma: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        for name in ("t", "delta", "gamma", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.t <= 0:
            raise ValidationError(f"t must be positive, got {self.t}")
        if not 0 <= self.delta < 1:
            raise ValidationError(f"delta must lie in [0, 1), got {self.delta}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be non-negative, got {self.gamma}")

    def with_theta(self, theta: float) -> "SshParams":
        return SshParams(self.t, self.delta, self.gamma, theta)


def hopping_amplitudes(p: SshParams) -> tuple[float, float]:
    """``(t_plus, t_minus) = t (1 +- delta cos theta)``."""
    c = p.delta * math.cos(p.theta)
    return p.t * (1 + c), p.t * (1 - c)


def ssh_bloch(k: float, p: SshParams) -> np.ndarray:
    t_plus, t_minus = hopping_amplitudes(p)
    g = 0.5j * p.gamma
    return np.array([
        [-g, t_minus + t_plus * np.exp(1j * k)],
        [t_minus + t_plus * np.exp(-1j * k), g],
    ])


@dataclass(frozen=True)
class SshModel:
    params: SshParams
    dim: int = field(default=2, init=False)

    def __call__(self, k):
        return ssh_bloch(k, self.params)


@dataclass(frozen=True)
class FourierModel:
    """``H(k)_ij = sum_m c_ijm exp(i m k)`` with finitely many harmonics.

    ``terms`` holds ``(i, j, m, coefficient)`` tuples with 0-based indices;
    repeated ``(i, j, m)`` entries add up.
    """

    dim: int
    terms: tuple = ()

    def __post_init__(self):
        if self.dim < 2:
            raise ValidationError(f"model dimension must be >= 2, got {self.dim}")
        if not self.terms:
            raise ValidationError("Fourier model has no entries")
        harmonics = {}
        for i, j, m, c in self.terms:
            if not (0 <= i < self.dim and 0 <= j < self.dim):
                raise ValidationError(f"entry ({i}, {j}) outside a {self.dim}x{self.dim} matrix")
            block = harmonics.setdefault(int(m), np.zeros((self.dim, self.dim), complex))
            block[i, j] += complex(c)
        object.__setattr__(self, "_harmonics", tuple(sorted(harmonics.items())))

    def __call__(self, k):
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for m, block in self._harmonics:
            H += block * np.exp(1j * m * k)
        return H


@dataclass(frozen=True)
class PauliCoeffs:
    n0: complex
    n: tuple[complex, complex, complex]

    def matrix(self) -> np.ndarray:
        return self.n0 * SIGMA0 + sum(c * s for c, s in zip(self.n, PAULI))


def pauli_decompose(H) -> PauliCoeffs:
    H = np.asarray(H, dtype=complex)
    if H.shape != (2, 2):
        raise ValueError(f"Pauli decomposition needs a 2x2 matrix, got {H.shape}")
    n0 = complex(np.trace(H)) / 2
    n = tuple(complex(np.trace(s @ H)) / 2 for s in PAULI)
    return PauliCoeffs(n0, n)


def energies(c: PauliCoeffs) -> tuple[complex, complex]:
    """``n0 +- sqrt(n.n)`` with the bilinear (unconjugated) dot product."""
    root = np.sqrt(complex(sum(x * x for x in c.n)))
    return c.n0 + root, c.n0 - root


@dataclass
class PtClassification:
    status: str                 # "unbroken" or "broken"
    max_imag_gap: float
    critical_points: list[float]

    @property
    def broken(self) -> bool:
        return self.status == "broken"


def pt_classify(model, grid, tol_pt: float = DEFAULT.pt,
                tol: Tolerances = DEFAULT) -> PtClassification:
    """Broken iff some eigenvalue on the grid has ``|Im E| > tol_pt``.

    ``critical_points`` lists the loop coordinates where a broken stretch of
    the grid begins.
    """
    points = np.asarray(getattr(grid, "points", grid), dtype=float)
    imag = np.array([np.max(np.abs(eigsolver.eigenvalues(model(k), tol).imag))
                     for k in points])
    flags = imag > tol_pt
    starts = [float(points[j]) for j in range(len(points))
              if flags[j] and (j == 0 or not flags[j - 1])]
    return PtClassification("broken" if flags.any() else "unbroken",
                            float(imag.max()), starts)


def chiral_residual(model, grid):
    """Best constant chiral operator ``a . sigma`` (``a0 = 0``) for a 2x2 model.

    Minimizes ``sum_k |a . n(k)|^2`` over real unit vectors ``a``; the
    minimizer is the lowest eigenvector of the accumulated Gram matrix.
    Returns ``(a, rms_residual)``.
    """
    if model.dim != 2:
        raise ValueError("chiral residual is defined for 2x2 models only")
    points = np.asarray(getattr(grid, "points", grid), dtype=float)
    gram = np.zeros((3, 3))
    for k in points:
        n = np.array(pauli_decompose(model(k)).n)
        gram += np.outer(n.real, n.real) + np.outer(n.imag, n.imag)
    w, v = np.linalg.eigh(gram)
    a = v[:, 0]
    a = a if a[np.argmax(np.abs(a))] > 0 else -a
    return a, math.sqrt(max(w[0], 0.0) / len(points))


# ---------------------------------------------------------------- config text

_SSH_KEYS = {"t", "delta", "gamma", "theta"}


def parse_real(text: str, allow_pi: bool = False) -> float:
    """Decimal literal; with ``allow_pi`` a trailing ``pi`` multiplies by pi."""
    s = text.strip().lower()
    if allow_pi and s.endswith("pi"):
        head = s[:-2].rstrip("*").strip()
        if head in ("", "+"):
            return math.pi
        if head == "-":
            return -math.pi
        return float(head) * math.pi
    return float(s)


def load_model(config_text: str):
    """Build a model from ``key=value`` lines (``#`` starts a comment).

    ``model=ssh`` takes ``t``, ``delta``, ``gamma``, ``theta`` (``theta`` may
    carry a ``pi`` suffix, e.g. ``0.3pi``). ``model=fourier`` takes ``dim``
    and repeated ``entry=i,j,m,re,im`` lines with 0-based ``i``, ``j``.
    """
    kind = None
    scalars = {}
    entries = []
    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        # several key=value tokens may share a line
        for token in re.split(r"\s+(?=[A-Za-z_]+\s*=)", line):
            if "=" not in token:
                raise ParseError(f"expected key=value, got {token!r}", line=lineno)
            key, value = (s.strip() for s in token.split("=", 1))
            key = key.lower()
            if key == "model":
                kind = value.lower()
            elif key == "entry":
                parts = [s.strip() for s in value.split(",")]
                if len(parts) != 5:
                    raise ParseError("entry needs i,j,m,re,im", line=lineno, field="entry")
                try:
                    i, j, m = (int(x) for x in parts[:3])
                    c = complex(float(parts[3]), float(parts[4]))
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno, field="entry") from None
                entries.append((i, j, m, c))
            elif key in _SSH_KEYS or key == "dim":
                try:
                    if key == "dim":
                        scalars[key] = int(value)
                    else:
                        scalars[key] = parse_real(value, allow_pi=(key == "theta"))
                except ValueError:
                    raise ParseError(f"cannot parse {value!r}", line=lineno, field=key) from None
            else:
                raise ParseError(f"unknown key {key!r}", line=lineno, field=key)
    if kind is None:
        raise ParseError("missing model=ssh|fourier")
    if kind == "ssh":
        if entries or "dim" in scalars:
            raise ValidationError("ssh models take no dim/entry lines")
        return SshModel(SshParams(**scalars))
    if kind == "fourier":
        extra = set(scalars) - {"dim"}
        if extra:
            raise ValidationError(f"fourier models do not take {sorted(extra)}")
        if "dim" not in scalars:
            raise ValidationError("fourier model needs dim")
        return FourierModel(scalars["dim"], tuple(entries))
    raise ParseError(f"unknown model type {kind!r}", field="model")
