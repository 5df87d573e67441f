"""Numerical tolerances, collected in one place so callers can override them."""

from dataclasses import dataclass, fields, replace

from .errors import ValidationError


@dataclass(frozen=True)
class Tolerances:
    resid: float = 1e-12      # eigen-residual, relative to ||H||
    ortho: float = 1e-10      # cross overlaps <chi_m|phi_n>, m != n
    pair: float = 1e-8        # left/right eigenvalue matching, relative
    selforth: float = 1e-10   # |<chi|phi>| of unit vectors below this -> exceptional point
    degen: float = 1e-9       # eigenvalue degeneracy, relative to the energy scale
    pt: float = 1e-9          # |Im E| above this -> PT broken
    overlap: float = 1e-8     # consecutive-point overlaps
    closure: float = 1e-8     # endpoint mismatch after smoothing
    component: float = 1e-6   # usable component modulus, relative to the max modulus
    quant: float = 1e-6       # distance of Re(gamma) from {0, pi}

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValidationError(f"tolerance {f.name} must be positive, got {value!r}")

    def updated(self, **overrides):
        """Copy with the given (non-None) fields replaced."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


DEFAULT = Tolerances()
