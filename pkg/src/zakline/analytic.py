"""Closed-form complex Zak phase of the PT-symmetric SSH chain.

    gamma_(+/-) = pi H(q - 1) +/- i (eta/2) sqrt(nu/q) (K(nu) + (q-1)/(q+1) Pi(mu, nu))

with ``q = t_+/t_-``, ``eta = Gamma/(2 t_-)``, ``nu = 4q/((q+1)^2 - eta^2)``,
``mu = 4q/(q+1)^2`` and H the Heaviside step. Valid only while the spectrum
is real and gapped, ``eta < |q - 1|``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

from scipy.integrate import quad

from .errors import BrokenRegime, DegenerateRatio, DomainError
from .models import SshParams, hopping_amplitudes


def elliptic_K(nu: float) -> float:
    """Complete elliptic integral of the first kind, parameter convention
    ``K(nu) = int_0^{pi/2} dk / sqrt(1 - nu sin^2 k)``, by the AGM."""
    if not 0 <= nu < 1:
        raise DomainError(f"K(nu) needs 0 <= nu < 1, got {nu}")
    a, b = 1.0, math.sqrt(1.0 - nu)
    for _ in range(64):     # quadratic convergence; ~6 steps suffice for nu < 1 - 1e-15
        if abs(a - b) <= 4 * sys.float_info.epsilon * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2 * a)


def elliptic_Pi(mu: float, nu: float) -> float:
    """Complete elliptic integral of the third kind,
    ``int_0^{pi/2} dk / ((1 - mu sin^2 k) sqrt(1 - nu sin^2 k))``, for ``mu < 1``."""
    if not 0 <= nu < 1:
        raise DomainError(f"Pi(mu, nu) needs 0 <= nu < 1, got nu={nu}")
    if not mu < 1:
        raise DomainError(f"Pi(mu, nu) needs mu < 1, got mu={mu}")
    if mu == 0:
        return elliptic_K(nu)

    def integrand(k):
        s2 = math.sin(k) ** 2
        return 1.0 / ((1.0 - mu * s2) * math.sqrt(1.0 - nu * s2))

    value, _ = quad(integrand, 0.0, math.pi / 2, epsabs=1e-13, epsrel=1e-13, limit=200)
    return value


@dataclass(frozen=True)
class AnalyticInputs:
    q: float
    eta: float
    nu: float
    mu: float


def analytic_inputs(q: float, eta: float) -> AnalyticInputs:
    if q <= 0 or eta < 0:
        raise DomainError(f"need q > 0 and eta >= 0, got q={q}, eta={eta}")
    return AnalyticInputs(q, eta, 4 * q / ((q + 1) ** 2 - eta ** 2), 4 * q / (q + 1) ** 2)


def analytic_zak(q: float, eta: float) -> tuple[complex, complex]:
    """``(gamma_plus, gamma_minus)``, the upper and lower sign of the formula."""
    if abs(q - 1) <= 1e-12:
        raise DegenerateRatio("q = 1: the gap closes and the Zak phase is undefined")
    if eta >= abs(q - 1):
        raise BrokenRegime(f"eta = {eta:.6g} >= |q - 1| = {abs(q - 1):.6g}: PT symmetry broken")
    a = analytic_inputs(q, eta)
    real = math.pi if q > 1 else 0.0
    imag = 0.5 * eta * math.sqrt(a.nu / q) * (
        elliptic_K(a.nu) + (q - 1) / (q + 1) * elliptic_Pi(a.mu, a.nu))
    return complex(real, imag), complex(real, -imag)


def ssh_ratio(p: SshParams) -> tuple[float, float]:
    """``(q, eta)`` for SSH parameters."""
    t_plus, t_minus = hopping_amplitudes(p)
    return t_plus / t_minus, p.gamma / (2 * t_minus)


def analytic_from_ssh(p: SshParams) -> tuple[complex, complex]:
    return analytic_zak(*ssh_ratio(p))
