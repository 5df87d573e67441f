"""Left/right eigenpairs of small dense non-Hermitian matrices.

Left eigenvectors are stored as rows and paired with right eigenvectors
(columns) through the bilinear product ``<chi|phi> = sum_i chi_i phi_i``,
without complex conjugation. For a Hermitian matrix the left row is the
conjugate transpose of the right column.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    DefectiveMatrix,
    NoConvergence,
    PairingAmbiguous,
    SelfOrthogonal,
    SubspaceCollapse,
)
from .tolerances import DEFAULT, Tolerances


@dataclass
class BiorthPair:
    """One band at one point: eigenvalue, left row and right column."""

    band_index: int
    energy: complex
    left: np.ndarray
    right: np.ndarray

    @property
    def overlap(self) -> complex:
        return complex(self.left @ self.right)


@dataclass
class EigenSet:
    pairs: list[BiorthPair]

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energy for p in self.pairs], dtype=complex)

    @property
    def lefts(self) -> np.ndarray:
        """Left vectors as rows, shape (n, d)."""
        return np.array([p.left for p in self.pairs])

    @property
    def rights(self) -> np.ndarray:
        """Right vectors as columns, shape (d, n)."""
        return np.array([p.right for p in self.pairs]).T

    def overlap_matrix(self) -> np.ndarray:
        """``O[m, n] = <chi_m|phi_n>``; the identity for a biorthonormal set."""
        return self.lefts @ self.rights


def as_matrix(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if H.shape[0] < 2:
        raise ValueError("matrix dimension must be at least 2")
    if not np.all(np.isfinite(H)):
        raise ValueError("matrix has non-finite entries")
    return H


def energy_scale(H) -> float:
    """Frobenius norm, floored so that the zero matrix still has a scale."""
    s = float(np.linalg.norm(H))
    return s if s > 0 else 1.0


def sort_order(values, tol: float) -> list[int]:
    """Indices sorting by real part, ties (within ``tol``) broken by imaginary part."""
    values = np.asarray(values, dtype=complex)
    order = sorted(range(len(values)), key=lambda i: values[i].real)
    out, group = [], [order[0]] if order else []
    for i in order[1:]:
        if values[i].real - values[group[0]].real <= tol:
            group.append(i)
        else:
            out.extend(sorted(group, key=lambda g: values[g].imag))
            group = [i]
    out.extend(sorted(group, key=lambda g: values[g].imag))
    return out


def _clusters(values, tol: float) -> list[list[int]]:
    """Group indices whose eigenvalues are connected by distances <= tol."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _eig2(H, tol_degen, scale):
    a, b, c, d = H[0, 0], H[0, 1], H[1, 0], H[1, 1]
    mean = 0.5 * (a + d)
    root = cmath.sqrt((0.5 * (a - d)) ** 2 + b * c)
    if 2 * abs(root) <= tol_degen * scale:
        if max(abs(a - mean), abs(d - mean), abs(b), abs(c)) <= tol_degen * scale:
            eye = np.eye(2, dtype=complex)
            return [(mean, eye[:, 0]), (mean, eye[:, 1])]
        raise DefectiveMatrix(
            f"2x2 matrix has a single eigenvector at E={mean:.6g} (exceptional point)"
        )
    out = []
    for lam in (mean - root, mean + root):
        # two algebraically equivalent null vectors of H - lam; keep the better conditioned
        v1 = np.array([b, lam - a])
        v2 = np.array([lam - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        out.append((complex(lam), v / np.linalg.norm(v)))
    return out


def _eig_general(H, tol_degen, scale):
    try:
        w, V = np.linalg.eig(H)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    V = V / np.linalg.norm(V, axis=0)
    for group in _clusters(w, tol_degen * scale):
        if len(group) > 1:
            smin = np.linalg.svd(V[:, group], compute_uv=False)[-1]
            if smin < np.sqrt(tol_degen):
                raise DefectiveMatrix(
                    f"eigenvalue {w[group[0]]:.6g} has deficient geometric multiplicity"
                )
    return [(complex(w[i]), V[:, i]) for i in range(len(w))]


def eig_right(H, tol: Tolerances = DEFAULT, scale: float | None = None):
    """Right eigenpairs ``H phi = E phi`` as a list of ``(E, phi)``.

    2x2 matrices use the closed-form quadratic solution, larger ones LAPACK.
    Vectors have unit 2-norm; the list is sorted by real part, then by
    imaginary part. Raises ``DefectiveMatrix`` at an exceptional point.
    """
    H = as_matrix(H)
    scale = energy_scale(H) if scale is None else scale
    if H.shape[0] == 2:
        pairs = _eig2(H, tol.degen, scale)
    else:
        pairs = _eig_general(H, tol.degen, scale)
    order = sort_order([p[0] for p in pairs], tol.degen * scale)
    return [pairs[i] for i in order]


def eig_left(H, tol: Tolerances = DEFAULT, scale: float | None = None):
    """Left eigenpairs ``chi H = E chi``: right eigenvectors of ``H.T`` read as rows."""
    H = as_matrix(H)
    return eig_right(H.T, tol, energy_scale(H) if scale is None else scale)


def eigenvalues(H, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Eigenvalues only, in the same order ``eig_right`` uses. Never raises at EPs."""
    H = as_matrix(H)
    if H.shape[0] == 2:
        mean = 0.5 * (H[0, 0] + H[1, 1])
        root = cmath.sqrt((0.5 * (H[0, 0] - H[1, 1])) ** 2 + H[0, 1] * H[1, 0])
        w = np.array([mean - root, mean + root])
    else:
        w = np.linalg.eigvals(H)
    return w[sort_order(w, tol.degen * energy_scale(H))]


def _normalize_pair(chi, phi, tol_selforth):
    chi = chi / np.linalg.norm(chi)
    phi = phi / np.linalg.norm(phi)
    ov = chi @ phi
    if abs(ov) < tol_selforth:
        raise SelfOrthogonal(
            f"|<chi|phi>| = {abs(ov):.3g} for unit vectors: left and right "
            "eigenvectors are (nearly) orthogonal, i.e. an exceptional point"
        )
    s = cmath.sqrt(ov)
    return chi / s, phi / s


def pair_and_biorthonormalize(lefts, rights, tol: Tolerances = DEFAULT,
                              scale: float = 1.0) -> EigenSet:
    """Match left and right eigenpairs by eigenvalue and normalize each pair.

    Both vectors are first scaled to unit norm and then divided by the
    principal square root of ``<chi|phi>``, so afterwards ``<chi|phi> = 1``
    and ``||chi|| == ||phi||``.
    """
    if len(lefts) != len(rights):
        raise PairingAmbiguous(f"{len(lefts)} left vs {len(rights)} right eigenpairs")
    lam_l = np.array([e for e, _ in lefts], dtype=complex)
    lam_r = np.array([e for e, _ in rights], dtype=complex)
    cost = np.abs(lam_r[:, None] - lam_l[None, :])
    window = tol.pair * scale
    if len(rights) == 1:
        assign = [0]
    elif np.all(np.abs(lam_r - lam_l) <= window) and _well_separated(lam_r, window):
        assign = list(range(len(rights)))
    else:
        _, assign = linear_sum_assignment(cost)
    pairs = []
    for i, j in enumerate(assign):
        if cost[i, j] > window:
            raise PairingAmbiguous(
                f"no left eigenvalue within {window:.3g} of E={lam_r[i]:.6g}"
            )
        if np.count_nonzero(cost[i] <= window) > 1:
            raise PairingAmbiguous(
                f"several left eigenvalues within {window:.3g} of E={lam_r[i]:.6g}"
            )
        chi, phi = _normalize_pair(lefts[j][1], rights[i][1], tol.selforth)
        pairs.append(BiorthPair(i + 1, complex(lam_r[i]), chi, phi))
    return EigenSet(pairs)


def _well_separated(values, window):
    n = len(values)
    return all(abs(values[i] - values[j]) > window
               for i in range(n) for j in range(i + 1, n))


def _balance(chi, phi):
    c = np.sqrt(np.linalg.norm(phi) / np.linalg.norm(chi))
    return chi * c, phi / c


def biorthogonal_gram_schmidt(subspace, reference=None, tol: float = 1e-10):
    """Biorthonormalize the pairs spanning one degenerate eigenspace.

    Without ``reference`` this is the sequential two-sided Gram-Schmidt
    process, which leaves an already biorthonormal set untouched. With
    ``reference`` (pairs at a neighbouring loop point, same count), the left
    vectors are recombined so that ``<chi_m|phi_ref_n> = delta_mn`` and the
    right vectors are then fixed by ``<chi_m|phi_n> = delta_mn``.
    """
    subspace = list(subspace)
    k = len(subspace)
    L = np.array([p.left for p in subspace])
    R = np.array([p.right for p in subspace]).T
    for name, block in (("left", L.T), ("right", R)):
        sv = np.linalg.svd(block / np.linalg.norm(block, axis=0), compute_uv=False)
        if sv[-1] < tol * max(sv[0], 1.0):
            raise SubspaceCollapse(f"{name} vectors of the {k}-dim subspace are rank deficient")
    energy = subspace[0].energy
    if reference is not None:
        reference = list(reference)
        if len(reference) != k:
            raise ValueError("reference must contain one pair per subspace vector")
        R_ref = np.array([p.right for p in reference]).T
        A = L @ R_ref
        if np.linalg.svd(A, compute_uv=False)[-1] < tol:
            raise SubspaceCollapse("reference pairs do not overlap the degenerate subspace")
        L = np.linalg.solve(A, L)
        R = R @ np.linalg.inv(L @ R)
        out = []
        for i, p in enumerate(reference):
            chi, phi = _balance(L[i], R[:, i])
            out.append(BiorthPair(p.band_index, energy, chi, phi))
        return out
    lefts, rights = [], []
    for i in range(k):
        chi, phi = L[i].copy(), R[:, i].copy()
        for cm, pm in zip(lefts, rights):
            chi = chi - (chi @ pm) * cm
            phi = phi - (cm @ phi) * pm
        ov = chi @ phi
        if abs(ov) < tol * np.linalg.norm(chi) * np.linalg.norm(phi):
            raise SubspaceCollapse("biorthogonal Gram-Schmidt hit a self-orthogonal vector")
        s = cmath.sqrt(ov)
        lefts.append(chi / s)
        rights.append(phi / s)
    return [BiorthPair(p.band_index, p.energy, c, f)
            for p, c, f in zip(subspace, lefts, rights)]


def _select_reference(reference: EigenSet, L, R, k):
    # weight of each reference pair inside the oblique projector onto the cluster
    P = R @ np.linalg.solve(L @ R, L)
    w = [abs(p.left @ P @ p.right) for p in reference.pairs]
    chosen = sorted(np.argsort(w)[::-1][:k])
    return [reference.pairs[i] for i in chosen]


def eigensystem(H, tol: Tolerances = DEFAULT, reference: EigenSet | None = None,
                scale: float | None = None) -> EigenSet:
    """Full biorthonormal eigensystem of ``H``.

    Degenerate clusters (eigenvalues within ``tol.degen * scale``) go through
    ``biorthogonal_gram_schmidt``, aligned with ``reference`` when given.
    Pairs are returned in ``eig_right`` order and numbered from 1.
    """
    H = as_matrix(H)
    scale = energy_scale(H) if scale is None else scale
    rights = eig_right(H, tol, scale)
    lefts = eig_left(H, tol, scale)
    lam_r = [e for e, _ in rights]
    lam_l = np.array([e for e, _ in lefts])
    groups = _clusters(lam_r, tol.degen * scale)
    if all(len(g) == 1 for g in groups):
        es = pair_and_biorthonormalize(lefts, rights, tol, scale)
        return es
    slots: list[BiorthPair | None] = [None] * len(rights)
    used_left = set()
    for g in groups:
        center = np.mean([lam_r[i] for i in g])
        lidx = [j for j in np.argsort(np.abs(lam_l - center))[:len(g)]]
        used_left.update(lidx)
        if len(g) == 1:
            (i,) = g
            chi, phi = _normalize_pair(lefts[lidx[0]][1], rights[i][1], tol.selforth)
            slots[i] = BiorthPair(i + 1, complex(lam_r[i]), chi, phi)
            continue
        sub = []
        for i, j in zip(g, lidx):
            chi = lefts[j][1] / np.linalg.norm(lefts[j][1])
            sub.append(BiorthPair(i + 1, complex(center), chi, rights[i][1]))
        ref = None
        if reference is not None:
            L = np.array([p.left for p in sub])
            R = np.array([p.right for p in sub]).T
            ref = _select_reference(reference, L, R, len(g))
        resolved = biorthogonal_gram_schmidt(sub, ref, tol.ortho)
        for i, p in zip(g, resolved):
            slots[i] = BiorthPair(i + 1, p.energy, p.left, p.right)
    if len(used_left) != len(lefts):
        raise PairingAmbiguous("left and right eigenvalue clusters do not match")
    return EigenSet(slots)
