"""Closed-form counting statistics of a heralded photon-pair source with noise.

The source emits pairs with thermal (geometric) number statistics: the
write-channel photon heralds a stored excitation that is later retrieved
on the read channel.  Both detection channels see independent additive
noise.  Everything is expressed through probability generating functions
(PGFs): the pair distribution has

    G(s, t) = 1 / (1 + mu * (1 - s*t)),

detection losses enter by substituting s -> 1 + eta*(s - 1) on the signal
modes only, and detected noise multiplies in as independent generators
with means lambda_a (write) and lambda_b (read).  The noise means are
post-detection values.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import binom

from .noise import NoiseLaw

__all__ = [
    "ModelParams",
    "WriteNoiseLine",
    "EfficiencyChain",
    "joint_pgf_eval",
    "joint_pmf",
    "mean_counts",
    "g2_cross",
    "conditional_read_mean",
    "g2_excitation_conditional",
    "g2_conditional_auto",
    "retrieval_efficiency_model",
    "g2_unconditional",
    "cauchy_schwarz_parameter",
    "excitation_probability",
    "p0_from_counts",
    "escape_efficiency",
]


@dataclass(frozen=True)
class ModelParams:
    """Six-parameter model: pair mean, detected noise means, efficiencies.

    mu       -- mean number of excitation pairs per sequence
    lambda_a -- detected mean write-noise counts per sequence
    lambda_b -- detected mean read-noise counts per sequence
    eta_x    -- write detection efficiency (all losses, generation to click)
    eta_y    -- read detection efficiency (includes intrinsic retrieval)
    g2_aa    -- autocorrelation of the write noise (1 Poissonian, 2 thermal)
    g2_bb    -- autocorrelation of the read noise
    """

    mu: float
    lambda_a: float
    lambda_b: float
    eta_x: float
    eta_y: float
    g2_aa: float = 1.0
    g2_bb: float = 1.0

    def __post_init__(self):
        for name in ("mu", "lambda_a", "lambda_b", "g2_aa", "g2_bb"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for name in ("eta_x", "eta_y"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def write_noise(self) -> NoiseLaw:
        return NoiseLaw(self.lambda_a, self.g2_aa)

    def read_noise(self) -> NoiseLaw:
        return NoiseLaw(self.lambda_b, self.g2_bb)

    def replace(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)

    # -- flat key-value config (text), shared with the CLI and the fitters

    _FIELDS = ("mu", "lambda_a", "lambda_b", "eta_x", "eta_y", "g2_aa", "g2_bb")

    def to_config_text(self) -> str:
        lines = [f"{name} = {getattr(self, name)!r}" for name in self._FIELDS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "ModelParams":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in cls._FIELDS:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            values[key] = float(val.strip())
        missing = [f for f in ("mu", "lambda_a", "lambda_b", "eta_x", "eta_y") if f not in values]
        if missing:
            raise ValueError(f"missing parameters in config: {', '.join(missing)}")
        return cls(**values)


@dataclass(frozen=True)
class WriteNoiseLine:
    """Write noise as an affine function of the mean write counts.

    The offset is the background noise level at zero write power, the
    slope captures how leakage scales with the excitation power.
    """

    offset: float
    slope: float

    def __post_init__(self):
        if self.offset < 0 or self.slope < 0:
            raise ValueError("offset and slope must be >= 0")

    def __call__(self, n_w_mean):
        return self.offset + self.slope * np.asarray(n_w_mean, dtype=float)


@dataclass(frozen=True)
class EfficiencyChain:
    """Losses between the stored excitation and a read detection event.

    eta_y factorises as eta_d * eta_esc(t_cell, r_mirror) * eta_r_star:
    detection path efficiency, escape through the output coupler of the
    cell cavity, and the intrinsic retrieval efficiency.
    """

    t_cell: float
    r_mirror: float
    eta_d: float
    eta_r_star: float

    def __post_init__(self):
        for name in ("t_cell", "r_mirror", "eta_d", "eta_r_star"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def eta_esc(self) -> float:
        return escape_efficiency(self.t_cell, self.r_mirror)

    @property
    def eta_y(self) -> float:
        return self.eta_d * self.eta_esc * self.eta_r_star


def joint_pgf_eval(params: ModelParams, s: float, t: float) -> float:
    """Joint PGF E[s^W t^R] of the detected write and read counts.

    Valid for s, t in [0, 1] (convergence of the thermal pair PGF is
    only guaranteed there).  G(1, 1) = 1.
    """
    if not 0.0 <= s <= 1.0 or not 0.0 <= t <= 1.0:
        raise ValueError(f"PGF arguments must lie in [0, 1], got s={s}, t={t}")
    s_sub = 1.0 + params.eta_x * (s - 1.0)
    t_sub = 1.0 + params.eta_y * (t - 1.0)
    pairs = 1.0 / (1.0 + params.mu * (1.0 - s_sub * t_sub))
    return float(pairs * params.write_noise().pgf(s) * params.read_noise().pgf(t))


def _pair_pmf(mu: float, n_cut: int) -> np.ndarray:
    """Thermal pair-number distribution P(n) = mu^n / (1 + mu)^(n+1)."""
    n = np.arange(n_cut + 1)
    if mu == 0:
        out = np.zeros(n_cut + 1)
        out[0] = 1.0
        return out
    q = mu / (1.0 + mu)
    return (1.0 - q) * q**n


def _pair_cutoff(mu: float, n_max: int, tail: float = 1e-18) -> int:
    if mu == 0:
        return n_max
    q = mu / (1.0 + mu)
    n_tail = int(math.ceil(math.log(tail) / math.log(q))) + 1
    return min(max(n_max, n_tail), 100_000)


def joint_pmf(params: ModelParams, n_max: int) -> np.ndarray:
    """Brute-force table P(W=w, R=r) for w, r <= n_max.

    Built by summing the thermal pair distribution against binomial
    thinning on both channels, then convolving in the noise counts.
    Serves as the independent oracle for every closed form in this
    module; the truncated table sums to 1 minus a controllable tail.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    n_cut = _pair_cutoff(params.mu, n_max)
    n = np.arange(n_cut + 1)
    k = np.arange(n_max + 1)
    p_n = _pair_pmf(params.mu, n_cut)
    bx = binom.pmf(k[:, None], n[None, :], params.eta_x)
    by = binom.pmf(k[:, None], n[None, :], params.eta_y)
    signal = (bx * p_n[None, :]) @ by.T
    # additive independent noise = lower-triangular Toeplitz convolution
    ta = toeplitz(params.write_noise().pmf(n_max), np.zeros(n_max + 1))
    tb = toeplitz(params.read_noise().pmf(n_max), np.zeros(n_max + 1))
    return ta @ signal @ tb.T


def mean_counts(params: ModelParams) -> tuple[float, float]:
    """Mean detected counts per sequence, (<n_W>, <n_R>)."""
    n_w = params.eta_x * params.mu + params.lambda_a
    n_r = params.eta_y * params.mu + params.lambda_b
    return n_w, n_r


def g2_cross(params: ModelParams) -> float:
    """Write-read cross-correlation <W R> / (<W><R>).

    Always >= 1; independent of the detection efficiencies when both
    noise means vanish (the etas cancel), and approaches 2 + 1/mu in
    the noiseless limit.
    """
    n_w, n_r = mean_counts(params)
    if n_w <= 0 or n_r <= 0:
        raise ValueError("cross-correlation undefined: a channel has zero mean counts")
    mu, la, lb = params.mu, params.lambda_a, params.lambda_b
    ex, ey = params.eta_x, params.eta_y
    if la == 0.0 and lb == 0.0:
        # the efficiencies cancel exactly in the noiseless limit
        return 2.0 + 1.0 / mu
    num = ex * ey * (mu**2 + mu)
    den = ex * ey * mu**2 + mu * (ey * la + ex * lb) + la * lb
    return 1.0 + num / den


def _herald_generator_derivatives(params: ModelParams) -> tuple[float, float, float]:
    """Derivatives at t=1 of N(t) = d/ds E[s^W t^Y] at s=0.

    Y is the raw pair number surviving in the memory (read detection not
    yet applied), W the detected write count.  N(t) generates the joint
    event {W=1} jointly with Y, so ratios of these derivatives give the
    factorial moments of Y conditioned on a single herald.  Only P(A=0)
    and P(A=1) of the write noise enter.
    """
    a0, a1 = params.write_noise().p0_p1()
    mu, ex = params.mu, params.eta_x
    u0 = 1.0 - ex
    d = 1.0 + mu * ex
    n0 = (ex * mu * a0 + a1 * d) / d**2
    n1 = (ex * mu * a0 * (d + 2.0 * mu * u0) + a1 * mu * u0 * d) / d**3
    n2 = (ex * mu * a0 * (4.0 * mu * u0 * d + 6.0 * mu**2 * u0**2) + 2.0 * a1 * mu**2 * u0**2 * d) / d**4
    return n0, n1, n2


def conditional_read_mean(params: ModelParams) -> float:
    """Mean number of stored excitations given exactly one write click."""
    n0, n1, _ = _herald_generator_derivatives(params)
    if n0 <= 0:
        raise ValueError("conditioning degenerate: P(W=1) = 0")
    return n1 / n0


def g2_excitation_conditional(mu: float, eta_x: float, lambda_a: float) -> float:
    """Autocorrelation of the stored excitation given one write click.

    Explicit closed form for Poissonian write noise; the factor
    (eta_x - 1) in the numerator makes a perfect herald (eta_x = 1)
    yield exact antibunching.
    """
    num = -(
        2.0
        * (eta_x - 1.0)
        * (lambda_a + eta_x * mu + lambda_a * eta_x * mu)
        * (
            lambda_a
            + 2.0 * eta_x
            - lambda_a * eta_x
            + 3.0 * eta_x * mu
            - eta_x**2 * mu
            + lambda_a * eta_x * mu
            - lambda_a * eta_x**2 * mu
        )
    )
    den = (
        lambda_a
        + eta_x
        - lambda_a * eta_x
        + 2.0 * eta_x * mu
        - eta_x**2 * mu
        + lambda_a * eta_x * mu
        - lambda_a * eta_x**2 * mu
    ) ** 2
    if den == 0:
        raise ValueError("conditioning degenerate: P(W=1) = 0")
    return num / den


def g2_conditional_auto(params: ModelParams) -> float:
    """Conditional read autocorrelation g2 of the detected field, W=1.

    Combines the conditional excitation statistics with the independent
    read noise (mean lambda_b, autocorrelation g2_bb).
    """
    n0, n1, n2 = _herald_generator_derivatives(params)
    if n0 <= 0:
        raise ValueError("conditioning degenerate: P(W=1) = 0")
    mu_tilde = n1 / n0
    if params.g2_aa == 1.0:
        # Poissonian write noise: use the explicit rational closed form
        g2_yy = g2_excitation_conditional(params.mu, params.eta_x, params.lambda_a)
    else:
        g2_yy = (n2 * n0) / n1**2 if n1 > 0 else 0.0
    ey, lb = params.eta_y, params.lambda_b
    mean_r = ey * mu_tilde + lb
    if mean_r <= 0:
        raise ValueError("conditional read mean is zero; g2 undefined")
    num = ey**2 * mu_tilde**2 * g2_yy + lb**2 * params.g2_bb + 2.0 * ey * mu_tilde * lb
    return num / mean_r**2


def retrieval_efficiency_model(params: ModelParams) -> float:
    """Retrieval efficiency eta_R = eta_y * E[Y | W=1]."""
    n0, n1, _ = _herald_generator_derivatives(params)
    if n0 <= 0:
        raise ValueError("conditioning degenerate: P(W=1) = 0")
    return params.eta_y * n1 / n0


def g2_unconditional(mean_signal: float, mean_noise: float, g2_noise: float = 1.0) -> float:
    """Autocorrelation of one channel: thermal signal plus independent noise."""
    total = mean_signal + mean_noise
    if total <= 0:
        raise ValueError("total mean is zero; g2 undefined")
    num = 2.0 * mean_signal**2 + 2.0 * mean_signal * mean_noise + g2_noise * mean_noise**2
    return num / total**2


def cauchy_schwarz_parameter(g2_wr: float, g2_ww: float, g2_rr: float) -> float:
    """g2_wr^2 / (g2_ww * g2_rr); values above 1 are non-classical."""
    if g2_ww <= 0 or g2_rr <= 0:
        raise ValueError("autocorrelations must be positive")
    return g2_wr**2 / (g2_ww * g2_rr)


def excitation_probability(n_exc_mean: float) -> float:
    """Probability of creating at least one pair, <n>/(1 + <n>)."""
    if n_exc_mean < 0:
        raise ValueError("mean excitation number must be >= 0")
    return n_exc_mean / (1.0 + n_exc_mean)


def p0_from_counts(n_w_mean: float, eta_x: float, lambda_a: float = 0.0) -> float:
    """Excitation probability approximated from detected write counts.

    Valid for low excitation numbers and negligible write noise; warns
    (does not fail) when the noise contributes more than 10% of the
    detected mean.
    """
    if eta_x <= 0:
        raise ValueError("eta_x must be positive")
    if n_w_mean > 0 and lambda_a / n_w_mean > 0.10:
        warnings.warn(
            "write noise exceeds 10% of the detected mean; "
            "p0 approximation is unreliable",
            stacklevel=2,
        )
    return n_w_mean / eta_x


def escape_efficiency(t_cell: float, r_mirror: float) -> float:
    """Probability that a cavity photon escapes through the output coupler.

    t_cell is the single-pass cell transmission, r_mirror the output
    coupler reflectivity: T(1 - R) / (1 - R T^2).
    """
    if not 0.0 <= t_cell <= 1.0 or not 0.0 <= r_mirror <= 1.0:
        raise ValueError("t_cell and r_mirror must lie in [0, 1]")
    den = 1.0 - r_mirror * t_cell**2
    if den == 0:
        raise ValueError("singular cavity: R * T^2 = 1")
    return t_cell * (1.0 - r_mirror) / den
