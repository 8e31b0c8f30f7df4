"""Multi-level Raman coupling with Doppler averaging, and the detuning
that suppresses four-wave mixing.

A Raman transition driven through several excited levels has the total
coupling R proportional to sum_m c_m / Delta_m far from resonance; with
atomic motion each Lorentzian denominator becomes a Voigt-type response
expressed through the Faddeeva function,

    R ~ sum_m c_m * w((Delta_m + i*gamma/2) / Gamma_D).

When the coupling products c_m carry opposite signs the sum has a zero
(static case) or a deep minimum (Doppler case): the magic detuning.

The angular-momentum coefficients feeding the c_m are evaluated exactly:
Clebsch-Gordan and 6-j symbols are computed as a sign times the square
root of a rational number, so symmetry and orthogonality identities hold
without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import wofz

from .errors import DataError, NumericsError

__all__ = [
    "faddeeva",
    "CGInput",
    "clebsch_gordan",
    "clebsch_gordan_signed_square",
    "wigner_6j",
    "wigner_6j_signed_square",
    "RamanLevelScheme",
    "raman_coupling_static",
    "raman_coupling_doppler",
    "MagicDetuningResult",
    "find_magic_detuning",
    "parse_level_scheme",
    "format_level_scheme",
]


def faddeeva(z):
    """Scaled complex complementary error function w(z) = exp(-z^2) erfc(-iz).

    Accurate to ~1e-13 relative on the physically relevant upper half
    plane; w(0) = 1 exactly. Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=complex)
    out = wofz(z)
    if out.ndim == 0:
        return complex(1.0) if z == 0 else complex(out)
    out[z == 0] = 1.0
    return out


# ---------------------------------------------------------------------------
# exact angular-momentum coefficients


def _two_j(value, name: str) -> int:
    two = Fraction(value).limit_denominator(2) * 2
    if two.denominator != 1:
        raise ValueError(f"{name} must be integer or half-integer, got {value}")
    return int(two)


def _fact(n: int) -> int:
    if n < 0:
        raise ValueError("negative factorial argument")
    return math.factorial(n)


@dataclass(frozen=True)
class CGInput:
    """Angular momenta for <j1 m1; j2 m2 | J M>; half-integers allowed."""

    j1: float
    m1: float
    j2: float
    m2: float
    j: float
    m: float

    def doubled(self) -> tuple[int, int, int, int, int, int]:
        two = (
            _two_j(self.j1, "j1"),
            _two_j(self.m1, "m1"),
            _two_j(self.j2, "j2"),
            _two_j(self.m2, "m2"),
            _two_j(self.j, "j"),
            _two_j(self.m, "m"),
        )
        for tj, tm, name in ((two[0], two[1], "1"), (two[2], two[3], "2"), (two[4], two[5], "")):
            if tj < 0:
                raise ValueError(f"j{name} must be >= 0")
            if abs(tm) > tj or (tj - tm) % 2:
                raise ValueError(f"m{name} must satisfy |m| <= j with j - m integral")
        return two


def clebsch_gordan_signed_square(cg: CGInput) -> tuple[int, Fraction]:
    """Exact coefficient as (sign, C^2) with C^2 a rational number.

    Selection-rule violations give (0, 0) rather than an error.
    """
    tj1, tm1, tj2, tm2, tj, tm = cg.doubled()
    if tm1 + tm2 != tm:
        return 0, Fraction(0)
    if not (abs(tj1 - tj2) <= tj <= tj1 + tj2) or (tj1 + tj2 + tj) % 2:
        return 0, Fraction(0)

    def f(two_n: int) -> int:
        if two_n % 2:
            raise ValueError("non-integral factorial argument")
        return _fact(two_n // 2)

    prefactor = (
        Fraction(tj + 1)
        * Fraction(f(tj1 + tj2 - tj) * f(tj1 - tj2 + tj) * f(-tj1 + tj2 + tj), f(tj1 + tj2 + tj + 2))
        * f(tj + tm)
        * f(tj - tm)
        * f(tj1 - tm1)
        * f(tj1 + tm1)
        * f(tj2 - tm2)
        * f(tj2 + tm2)
    )
    k_min = max(0, -(tj - tj2 + tm1) // 2, -(tj - tj1 - tm2) // 2)
    k_max = min((tj1 + tj2 - tj) // 2, (tj1 - tm1) // 2, (tj2 + tm2) // 2)
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        den = (
            _fact(k)
            * f(tj1 + tj2 - tj - 2 * k)
            * f(tj1 - tm1 - 2 * k)
            * f(tj2 + tm2 - 2 * k)
            * f(tj - tj2 + tm1 + 2 * k)
            * f(tj - tj1 - tm2 + 2 * k)
        )
        total += Fraction(-1 if k % 2 else 1, den)
    if total == 0:
        return 0, Fraction(0)
    sign = 1 if total > 0 else -1
    return sign, prefactor * total * total


def clebsch_gordan(cg: CGInput) -> float:
    """Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> as a float."""
    sign, square = clebsch_gordan_signed_square(cg)
    return sign * math.sqrt(square)


def _triangle_square(ta: int, tb: int, tc: int) -> Fraction | None:
    """Delta(a b c)^2, or None if the triad violates the triangle rule."""
    if (ta + tb + tc) % 2:
        return None
    s1, s2, s3 = ta + tb - tc, ta - tb + tc, -ta + tb + tc
    if s1 < 0 or s2 < 0 or s3 < 0:
        return None
    return Fraction(
        _fact(s1 // 2) * _fact(s2 // 2) * _fact(s3 // 2),
        _fact((ta + tb + tc) // 2 + 1),
    )


def wigner_6j_signed_square(j1, j2, j3, j4, j5, j6) -> tuple[int, Fraction]:
    """Exact {j1 j2 j3; j4 j5 j6} as (sign, value^2)."""
    t = [_two_j(j, f"j{i+1}") for i, j in enumerate((j1, j2, j3, j4, j5, j6))]
    triads = (
        _triangle_square(t[0], t[1], t[2]),
        _triangle_square(t[0], t[4], t[5]),
        _triangle_square(t[3], t[1], t[5]),
        _triangle_square(t[3], t[4], t[2]),
    )
    if any(x is None for x in triads):
        return 0, Fraction(0)
    sums = (
        (t[0] + t[1] + t[2]) // 2,
        (t[0] + t[4] + t[5]) // 2,
        (t[3] + t[1] + t[5]) // 2,
        (t[3] + t[4] + t[2]) // 2,
    )
    caps = (
        (t[0] + t[1] + t[3] + t[4]) // 2,
        (t[1] + t[2] + t[4] + t[5]) // 2,
        (t[2] + t[0] + t[5] + t[3]) // 2,
    )
    total = Fraction(0)
    for z in range(max(sums), min(caps) + 1):
        den = _fact(z - sums[0]) * _fact(z - sums[1]) * _fact(z - sums[2]) * _fact(z - sums[3])
        den *= _fact(caps[0] - z) * _fact(caps[1] - z) * _fact(caps[2] - z)
        term = Fraction(_fact(z + 1), den)
        total += -term if z % 2 else term
    if total == 0:
        return 0, Fraction(0)
    sign = 1 if total > 0 else -1
    square = triads[0] * triads[1] * triads[2] * triads[3] * total * total
    return sign, square


def wigner_6j(j1, j2, j3, j4, j5, j6) -> float:
    sign, square = wigner_6j_signed_square(j1, j2, j3, j4, j5, j6)
    return sign * math.sqrt(square)


# ---------------------------------------------------------------------------
# Raman coupling and the magic detuning


@dataclass(frozen=True)
class RamanLevelScheme:
    """Excited levels entering the Raman sum.

    offsets_mhz -- per-level detuning offsets delta_m: the laser detuned
        by Delta sees level m at Delta + delta_m
    couplings -- signed products g_m * Omega_m (arbitrary common scale)
    gamma_mhz -- natural linewidth
    doppler_mhz -- Doppler width (1/e half width in frequency)
    """

    offsets_mhz: tuple[float, ...]
    couplings: tuple[float, ...]
    gamma_mhz: float
    doppler_mhz: float

    def __post_init__(self):
        object.__setattr__(self, "offsets_mhz", tuple(float(x) for x in self.offsets_mhz))
        object.__setattr__(self, "couplings", tuple(float(x) for x in self.couplings))
        if len(self.offsets_mhz) != len(self.couplings) or not self.offsets_mhz:
            raise ValueError("need equal, non-zero numbers of offsets and couplings")
        if self.gamma_mhz <= 0 or self.doppler_mhz <= 0:
            raise ValueError("gamma_mhz and doppler_mhz must be positive")

    def resonances_mhz(self) -> tuple[float, ...]:
        """Laser detunings at which each level is resonant."""
        return tuple(-d for d in self.offsets_mhz)


def raman_coupling_static(scheme: RamanLevelScheme, delta_mhz):
    """Far-detuned coupling sum_m c_m / (Delta + delta_m)."""
    delta = np.asarray(delta_mhz, dtype=float)
    denoms = delta[..., None] + np.asarray(scheme.offsets_mhz)
    if np.any(denoms == 0):
        raise ValueError("on-resonance pole: Delta + delta_m = 0 for some level")
    out = (np.asarray(scheme.couplings) / denoms).sum(axis=-1).astype(complex)
    return complex(out) if out.ndim == 0 else out


def raman_coupling_doppler(scheme: RamanLevelScheme, delta_mhz):
    """Motional-averaged coupling sum_m c_m w((Delta_m + i gamma/2)/Gamma_D)."""
    delta = np.asarray(delta_mhz, dtype=float)
    z = (delta[..., None] + np.asarray(scheme.offsets_mhz) + 0.5j * scheme.gamma_mhz) / scheme.doppler_mhz
    out = (np.asarray(scheme.couplings) * wofz(z)).sum(axis=-1)
    return complex(out) if out.ndim == 0 else out


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class MagicDetuningResult:
    """Location and quality of the coupling minimum."""

    detuning_mhz: float
    coupling_abs: float
    resonance_distances_mhz: tuple[float, ...]
    doppler_mhz: float
    profile: str

    @property
    def outside_doppler_width(self) -> bool:
        """True when the minimum sits beyond the Doppler width of every resonance."""
        return all(d > self.doppler_mhz for d in self.resonance_distances_mhz)

    def to_dict(self) -> dict:
        return {
            "detuning_mhz": self.detuning_mhz,
            "coupling_abs": self.coupling_abs,
            "resonance_distances_mhz": list(self.resonance_distances_mhz),
            "doppler_mhz": self.doppler_mhz,
            "profile": self.profile,
            "outside_doppler_width": self.outside_doppler_width,
        }


def find_magic_detuning(
    scheme: RamanLevelScheme,
    search_range: tuple[float, float],
    profile: str = "doppler",
    grid_mhz: float = 1.0,
    tol_mhz: float = 1e-6,
) -> MagicDetuningResult:
    """Locate the |coupling| minimum inside a detuning range.

    Coarse scan (default 1 MHz grid) followed by golden-section
    refinement of |R|^2 to well below a kilohertz.  Raises NumericsError
    when the minimum is not interior to the range.
    """
    lo, hi = float(search_range[0]), float(search_range[1])
    if not hi > lo:
        raise ValueError("search range must satisfy lo < hi")
    coupling = {"doppler": raman_coupling_doppler, "static": raman_coupling_static}.get(profile)
    if coupling is None:
        raise ValueError(f"profile must be 'doppler' or 'static', got {profile!r}")

    def objective(x):
        try:
            return abs(coupling(scheme, x)) ** 2
        except ValueError:
            return math.inf

    n = max(int(round((hi - lo) / grid_mhz)), 8)
    grid = np.linspace(lo, hi, n + 1)
    values = np.array([objective(x) for x in grid])
    i = int(np.argmin(values))
    if i == 0 or i == len(grid) - 1 or not math.isfinite(values[i]):
        raise NumericsError("no interior coupling minimum in the search range")
    best = _golden_section(objective, grid[i - 1], grid[i + 1], tol_mhz)
    distances = tuple(abs(best - r) for r in scheme.resonances_mhz())
    return MagicDetuningResult(
        detuning_mhz=best,
        coupling_abs=float(abs(coupling(scheme, best))),
        resonance_distances_mhz=distances,
        doppler_mhz=scheme.doppler_mhz,
        profile=profile,
    )


# ---------------------------------------------------------------------------
# declarative level-scheme files


def parse_level_scheme(text: str) -> RamanLevelScheme:
    """Read a scheme from the small line-based text format.

    Keys `gamma_mhz` and `doppler_mhz`, then one `level <offset_mhz>
    <coupling>` line per excited level; `#` starts a comment.
    """
    gamma = doppler = None
    offsets, couplings = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("level"):
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"line {lineno}: expected 'level <offset_mhz> <coupling>'")
            offsets.append(float(parts[1]))
            couplings.append(float(parts[2]))
        elif "=" in line:
            key, _, val = line.partition("=")
            key = key.strip()
            if key == "gamma_mhz":
                gamma = float(val)
            elif key == "doppler_mhz":
                doppler = float(val)
            else:
                raise DataError(f"line {lineno}: unknown key {key!r}")
        else:
            raise DataError(f"line {lineno}: cannot parse {raw!r}")
    if gamma is None or doppler is None:
        raise DataError("scheme file must set gamma_mhz and doppler_mhz")
    if not offsets:
        raise DataError("scheme file defines no levels")
    return RamanLevelScheme(tuple(offsets), tuple(couplings), gamma, doppler)


def format_level_scheme(scheme: RamanLevelScheme) -> str:
    lines = [
        f"gamma_mhz = {scheme.gamma_mhz!r}",
        f"doppler_mhz = {scheme.doppler_mhz!r}",
    ]
    lines += [f"level {o!r} {c!r}" for o, c in zip(scheme.offsets_mhz, scheme.couplings)]
    return "\n".join(lines) + "\n"
