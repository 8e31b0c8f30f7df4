"""Weighted nonlinear least-squares fits for every model curve.

All fits use a trust-region least-squares core (scipy) with
finite-difference Jacobians (relative step 1e-6), convergence at a
relative gradient below 1e-10 or 200 iterations, and inverse-variance
weighting.  Initial values come from deterministic heuristics
(peak-picking for spectra, log-linear regression for decays, low-noise
closed forms for the efficiency fit) so fits do not depend on luck.

Parameter covariances are unscaled (J^T J)^-1 of the weighted problem,
i.e. they assume the supplied uncertainties are absolute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import FitError, NoCrossingError, UnidentifiableFitError
from .model import (
    ModelParams,
    WriteNoiseLine,
    EfficiencyChain,
    conditional_read_mean,
    g2_cross,
    mean_counts,
)

__all__ = [
    "SpectrumScan",
    "SpectralFitResult",
    "DecayFitResult",
    "NoiseLineFit",
    "EfficiencyFitResult",
    "lorentzian_unit",
    "write_spectrum_model",
    "read_spectrum_model",
    "fit_write_spectrum",
    "fit_read_spectrum",
    "write_efficiency",
    "fit_noise_line",
    "fit_memory_decay",
    "threshold_crossing",
    "fit_detection_efficiencies",
    "intrinsic_retrieval",
]

DEFAULT_LARMOR_MHZ = 2.4


# ---------------------------------------------------------------------------
# shared least-squares core


def _run_least_squares(residual, p0, bounds) -> tuple[np.ndarray, np.ndarray, float, int, np.ndarray]:
    res = least_squares(
        residual,
        p0,
        bounds=bounds,
        method="trf",
        diff_step=1e-6,
        gtol=1e-10,
        xtol=1e-12,
        ftol=1e-12,
        max_nfev=200 * (len(p0) + 1),
    )
    if res.status <= 0:
        raise FitError(f"least squares did not converge: {res.message}")
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.pinv(jtj, rcond=1e-12)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal equations") from exc
    chi2 = float(2.0 * res.cost)
    ndof = max(res.fun.size - len(p0), 1)
    return res.x, cov, chi2, ndof, res.jac


def _sigma_or_poisson(y, sigma):
    if sigma is not None:
        s = np.asarray(sigma, dtype=float)
        if np.any(s <= 0):
            raise ValueError("uncertainties must be positive")
        return s
    # Poissonian fallback with a floor of one count
    return np.sqrt(np.maximum(np.asarray(y, dtype=float), 1.0))


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumScan:
    """Filter-cavity detuning sweep; counts per pulse at each detuning.

    counts_no_write and its uncertainty are present only for read-channel
    scans (taken without a preceding write pulse).
    """

    detunings_mhz: np.ndarray
    counts_with_write: np.ndarray
    counts_no_write: np.ndarray | None = None
    err_with_write: np.ndarray | None = None
    err_no_write: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.detunings_mhz, dtype=float)
        object.__setattr__(self, "detunings_mhz", x)
        object.__setattr__(self, "counts_with_write", np.asarray(self.counts_with_write, dtype=float))
        if len(x) != len(self.counts_with_write):
            raise ValueError("detunings and counts differ in length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("detunings must be strictly increasing")
        for name in ("counts_no_write", "err_with_write", "err_no_write"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                object.__setattr__(self, name, v)
                if len(v) != len(x):
                    raise ValueError(f"{name} length differs from detunings")


_WRITE_PARAMS = ("a_narr", "a_broad", "a_lkg", "a_bg", "fwhm_1", "fwhm_2", "fwhm_broad")
_READ_PARAMS = ("a_narr", "a_narr_no_write", "a_broad", "a_lkg", "a_bg", "fwhm_1", "fwhm_2", "fwhm_broad")


@dataclass(frozen=True)
class SpectralFitResult:
    """Amplitudes and linewidths of the multi-peak spectral decomposition."""

    a_narr: float
    a_broad: float
    a_lkg: float
    a_bg: float
    fwhm_1: float
    fwhm_2: float
    fwhm_broad: float
    larmor_mhz: float
    covariance: np.ndarray
    param_names: tuple[str, ...]
    chi2: float
    ndof: int
    a_narr_no_write: float | None = None

    def err(self, name: str) -> float:
        i = self.param_names.index(name)
        return math.sqrt(max(self.covariance[i, i], 0.0))

    def to_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.param_names}
        d.update(
            larmor_mhz=self.larmor_mhz,
            errors={name: self.err(name) for name in self.param_names},
            chi2=self.chi2,
            ndof=self.ndof,
        )
        return d


def lorentzian_unit(x, center, fwhm):
    """Lorentzian with unity peak value."""
    return 1.0 / (1.0 + ((np.asarray(x, dtype=float) - center) / (fwhm / 2.0)) ** 2)


def write_spectrum_model(delta_mhz, params, larmor_mhz: float = DEFAULT_LARMOR_MHZ):
    """Narrow + broad + leakage + background; leakage sits at -larmor."""
    a_narr, a_broad, a_lkg, a_bg, w1, w2, wb = params
    x = np.asarray(delta_mhz, dtype=float)
    return (
        a_narr * lorentzian_unit(x, 0.0, w1) * lorentzian_unit(x, 0.0, w2)
        + a_broad * lorentzian_unit(x, 0.0, wb)
        + a_lkg * lorentzian_unit(x, -larmor_mhz, w1) * lorentzian_unit(x, -larmor_mhz, w2)
        + a_bg
    )


def read_spectrum_model(delta_mhz, params, larmor_mhz: float = DEFAULT_LARMOR_MHZ):
    """Read channel: per-dataset narrow amplitudes, leakage at +larmor.

    Returns (with_write, no_write) model curves.
    """
    b_w, b_nw, b_broad, b_lkg, b_bg, w1, w2, wb = params
    x = np.asarray(delta_mhz, dtype=float)
    narrow = lorentzian_unit(x, 0.0, w1) * lorentzian_unit(x, 0.0, w2)
    common = (
        b_broad * lorentzian_unit(x, 0.0, wb)
        + b_lkg * lorentzian_unit(x, larmor_mhz, w1) * lorentzian_unit(x, larmor_mhz, w2)
        + b_bg
    )
    return b_w * narrow + common, b_nw * narrow + common


def _spectral_seed(scan: SpectrumScan, larmor_mhz: float, leak_sign: float) -> list[float]:
    x, y = scan.detunings_mhz, scan.counts_with_write
    bg = float(y.min())
    span = max(float(y.max() - bg), 1e-9)
    near0 = float(y[np.argmin(np.abs(x))]) - bg
    lkg = float(y[np.argmin(np.abs(x - leak_sign * larmor_mhz))]) - bg
    return [
        max(0.7 * near0, 1e-3 * span),
        max(0.2 * near0, 1e-3 * span),
        max(0.5 * lkg, 1e-3 * span),
        max(bg, 1e-9),
        0.8,
        1.2,
        8.0,
    ]


def fit_write_spectrum(scan: SpectrumScan, larmor_mhz: float = DEFAULT_LARMOR_MHZ) -> SpectralFitResult:
    """Fit the write-channel scan; the leakage centre is fixed at -larmor."""
    if len(scan.detunings_mhz) < len(_WRITE_PARAMS):
        raise FitError("fewer points than free parameters")
    sigma = _sigma_or_poisson(scan.counts_with_write, scan.err_with_write)

    def residual(p):
        return (write_spectrum_model(scan.detunings_mhz, p, larmor_mhz) - scan.counts_with_write) / sigma

    p0 = _spectral_seed(scan, larmor_mhz, -1.0)
    lower = [0.0, 0.0, 0.0, 0.0, 1e-3, 1e-3, 1e-3]
    popt, cov, chi2, ndof, _ = _run_least_squares(residual, p0, (lower, np.inf))
    return SpectralFitResult(
        *[float(v) for v in popt],
        larmor_mhz=larmor_mhz,
        covariance=cov,
        param_names=_WRITE_PARAMS,
        chi2=chi2,
        ndof=ndof,
    )


def fit_read_spectrum(scan: SpectrumScan, larmor_mhz: float = DEFAULT_LARMOR_MHZ) -> SpectralFitResult:
    """Joint fit of the with-write and no-write read scans.

    Only the narrowband amplitudes differ between the two datasets; the
    broad, leakage and background parts are shared.
    """
    if scan.counts_no_write is None:
        raise FitError("read-spectrum fit needs the no-write scan")
    if len(scan.detunings_mhz) < len(_READ_PARAMS):
        raise FitError("fewer points than free parameters")
    sig_w = _sigma_or_poisson(scan.counts_with_write, scan.err_with_write)
    sig_nw = _sigma_or_poisson(scan.counts_no_write, scan.err_no_write)

    def residual(p):
        m_w, m_nw = read_spectrum_model(scan.detunings_mhz, p, larmor_mhz)
        return np.concatenate(
            [(m_w - scan.counts_with_write) / sig_w, (m_nw - scan.counts_no_write) / sig_nw]
        )

    s = _spectral_seed(scan, larmor_mhz, +1.0)
    nw_near0 = float(scan.counts_no_write[np.argmin(np.abs(scan.detunings_mhz))] - scan.counts_no_write.min())
    p0 = [s[0], max(0.7 * nw_near0, 1e-3 * s[0]), s[1], s[2], s[3], s[4], s[5], s[6]]
    lower = [0.0, 0.0, 0.0, 0.0, 0.0, 1e-3, 1e-3, 1e-3]
    popt, cov, chi2, ndof, _ = _run_least_squares(residual, p0, (lower, np.inf))
    b_w, b_nw, b_broad, b_lkg, b_bg, w1, w2, wb = [float(v) for v in popt]
    return SpectralFitResult(
        a_narr=b_w,
        a_broad=b_broad,
        a_lkg=b_lkg,
        a_bg=b_bg,
        fwhm_1=w1,
        fwhm_2=w2,
        fwhm_broad=wb,
        larmor_mhz=larmor_mhz,
        covariance=cov,
        param_names=_READ_PARAMS,
        chi2=chi2,
        ndof=ndof,
        a_narr_no_write=b_nw,
    )


def write_efficiency(fit: SpectralFitResult) -> tuple[float, float]:
    """Share of the narrowband peak in the total scattered signal.

    Returns (value, uncertainty); the uncertainty is propagated from the
    covariance of the narrow and broad amplitudes.
    """
    a, b = fit.a_narr, fit.a_broad
    total = a + b
    if total <= 0:
        raise ValueError("narrow and broad amplitudes are both zero")
    value = a / total
    i = fit.param_names.index("a_narr")
    j = fit.param_names.index("a_broad")
    grad_a = b / total**2
    grad_b = -a / total**2
    var = (
        grad_a**2 * fit.covariance[i, i]
        + grad_b**2 * fit.covariance[j, j]
        + 2.0 * grad_a * grad_b * fit.covariance[i, j]
    )
    return value, math.sqrt(max(var, 0.0))


# ---------------------------------------------------------------------------
# noise line


@dataclass(frozen=True)
class NoiseLineFit:
    """Weighted linear regression of write noise versus write counts."""

    offset: float
    slope: float
    covariance: np.ndarray
    chi2: float
    ndof: int

    @property
    def line(self) -> WriteNoiseLine:
        return WriteNoiseLine(max(self.offset, 0.0), max(self.slope, 0.0))

    def to_dict(self) -> dict:
        return {
            "offset": self.offset,
            "slope": self.slope,
            "offset_err": math.sqrt(max(self.covariance[0, 0], 0.0)),
            "slope_err": math.sqrt(max(self.covariance[1, 1], 0.0)),
            "chi2": self.chi2,
            "ndof": self.ndof,
        }


def fit_noise_line(n_w_mean, noise, err=None) -> NoiseLineFit:
    """Closed-form weighted least squares for the write-noise line."""
    x = np.asarray(n_w_mean, dtype=float)
    y = np.asarray(noise, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise FitError("need at least two (n_w, noise) points")
    if np.allclose(x, x[0]):
        raise FitError("degenerate abscissae: all n_w values equal")
    sigma = _sigma_or_poisson(y, err)
    design = np.column_stack([np.ones_like(x), x]) / sigma[:, None]
    target = y / sigma
    gram = design.T @ design
    try:
        cov = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular design matrix") from exc
    beta = cov @ design.T @ target
    resid = target - design @ beta
    chi2 = float(resid @ resid)
    return NoiseLineFit(float(beta[0]), float(beta[1]), cov, chi2, max(len(x) - 2, 1))


# ---------------------------------------------------------------------------
# exponential decays


@dataclass(frozen=True)
class DecayFitResult:
    """B * exp(-t / tau) + baseline, with the baseline held fixed."""

    amplitude: float
    tau_us: float
    baseline: float
    covariance: np.ndarray
    chi2: float
    ndof: int
    model: str

    def __call__(self, t_us):
        return self.amplitude * np.exp(-np.asarray(t_us, dtype=float) / self.tau_us) + self.baseline

    def err(self, name: str) -> float:
        i = {"amplitude": 0, "tau_us": 1}[name]
        return math.sqrt(max(self.covariance[i, i], 0.0))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "amplitude": self.amplitude,
            "tau_us": self.tau_us,
            "baseline": self.baseline,
            "amplitude_err": self.err("amplitude"),
            "tau_us_err": self.err("tau_us"),
            "chi2": self.chi2,
            "ndof": self.ndof,
        }


_DECAY_BASELINES = {"g2_offset1": 1.0, "plain_exp": 0.0}


def fit_memory_decay(delays_us, values, err=None, model: str = "plain_exp") -> DecayFitResult:
    """Weighted exponential-decay fit over write-read delays.

    model 'g2_offset1' fixes the baseline at 1 (cross-correlation decays
    to the uncorrelated level), 'plain_exp' at 0 (retrieval efficiency).
    """
    if model not in _DECAY_BASELINES:
        raise ValueError(f"unknown decay model {model!r}")
    baseline = _DECAY_BASELINES[model]
    t = np.asarray(delays_us, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 3:
        raise FitError("need at least three delay points")
    sigma = _sigma_or_poisson(np.abs(y), err)

    above = y - baseline
    positive = above > 0
    if positive.sum() < 2:
        raise UnidentifiableFitError("no decaying excess above the baseline; tau unidentifiable")
    # log-linear seed on the points above baseline
    coef = np.polyfit(t[positive], np.log(above[positive]), 1)
    if coef[0] >= 0:
        raise UnidentifiableFitError("data do not decay; tau unidentifiable")
    tau0 = -1.0 / coef[0]
    b0 = math.exp(coef[1])

    def residual(p):
        return (p[0] * np.exp(-t / p[1]) + baseline - y) / sigma

    popt, cov, chi2, ndof, _ = _run_least_squares(
        residual, [b0, tau0], ([0.0, 1e-9], [np.inf, np.inf])
    )
    if popt[0] <= 0:
        raise UnidentifiableFitError("fitted amplitude is zero; tau unidentifiable")
    return DecayFitResult(float(popt[0]), float(popt[1]), baseline, cov, chi2, ndof, model)


def threshold_crossing(
    fit: DecayFitResult,
    threshold: float,
    combine: tuple[float, float] | None = None,
) -> float:
    """Time at which the fitted curve drops to a threshold.

    Without `combine`, solves amplitude * exp(-t/tau) + baseline =
    threshold.  With combine = (g2_ww, g2_rr), the threshold applies to
    the Cauchy-Schwarz ratio built from the fitted cross-correlation and
    the two averaged autocorrelations, which reduces to the same closed
    form with an effective level sqrt(threshold * g2_ww * g2_rr).
    """
    level = threshold
    if combine is not None:
        g2_ww, g2_rr = combine
        if g2_ww <= 0 or g2_rr <= 0:
            raise ValueError("averaged autocorrelations must be positive")
        level = math.sqrt(threshold * g2_ww * g2_rr)
    excess = level - fit.baseline
    if excess <= 0:
        raise NoCrossingError(
            f"level {level} never reached: curve stays above its baseline {fit.baseline}"
        )
    if fit.amplitude <= excess:
        raise NoCrossingError(
            f"curve starts at {fit.baseline + fit.amplitude}, already below level {level}"
        )
    return fit.tau_us * math.log(fit.amplitude / excess)


# ---------------------------------------------------------------------------
# joint detection-efficiency fit


@dataclass(frozen=True)
class EfficiencyFitResult:
    """Detection efficiencies from the simultaneous curve fit."""

    eta_x: float
    eta_y: float
    eta_x_err: float
    eta_y_err: float
    covariance: np.ndarray
    chi2: float
    ndof: int

    def to_dict(self) -> dict:
        return {
            "eta_x": self.eta_x,
            "eta_y": self.eta_y,
            "eta_x_err": self.eta_x_err,
            "eta_y_err": self.eta_y_err,
            "chi2": self.chi2,
            "ndof": self.ndof,
        }


_CURVE_KINDS = ("g2_cross", "retrieval_efficiency", "mean_read")


def _model_curves(x, eta_x, eta_y, noise_line, lambda_b, g2_bb, g2_aa):
    """Predicted (g2, eta_r, mean_r) on the n_w grid, given efficiencies."""
    lam_a = noise_line(x)
    mu = (x - lam_a) / eta_x
    g2 = np.empty_like(x)
    eta_r = np.empty_like(x)
    mean_r = np.empty_like(x)
    for i, (mu_i, la_i) in enumerate(zip(mu, lam_a)):
        if mu_i <= 0:
            # below the noise floor the model has no signal: push the
            # optimiser away with a vacuum prediction
            g2[i] = 1.0
            eta_r[i] = 0.0
            mean_r[i] = lambda_b
            continue
        p = ModelParams(mu_i, float(la_i), lambda_b, eta_x, eta_y, g2_aa, g2_bb)
        g2[i] = g2_cross(p)
        eta_r[i] = eta_y * conditional_read_mean(p)
        mean_r[i] = mean_counts(p)[1]
    return g2, eta_r, mean_r


def fit_detection_efficiencies(
    curves: dict,
    noise_line: WriteNoiseLine,
    lambda_b: float,
    g2_bb: float,
    g2_aa: float = 1.0,
) -> EfficiencyFitResult:
    """Joint weighted fit of (eta_x, eta_y) to measured curves vs <n_W>.

    `curves` maps any subset of {'g2_cross', 'retrieval_efficiency',
    'mean_read'} to (n_w, value, err) triples.  The noise calibration
    (write-noise line, lambda_b, g2_bb) is held fixed; at every grid
    point mu is inferred from <n_W> = eta_x * mu + lambda_a(<n_W>).
    """
    used = [k for k in _CURVE_KINDS if k in curves]
    if not used:
        raise ValueError(f"curves must contain at least one of {_CURVE_KINDS}")
    data = {}
    for kind in used:
        x, y, err = curves[kind]
        data[kind] = (
            np.asarray(x, dtype=float),
            np.asarray(y, dtype=float),
            _sigma_or_poisson(np.abs(np.asarray(y, dtype=float)), err),
        )

    def residual(p):
        eta_x, eta_y = p
        out = []
        for kind in used:
            x, y, sigma = data[kind]
            g2, eta_r, mean_r = _model_curves(x, eta_x, eta_y, noise_line, lambda_b, g2_bb, g2_aa)
            pred = {"g2_cross": g2, "retrieval_efficiency": eta_r, "mean_read": mean_r}[kind]
            out.append((pred - y) / sigma)
        return np.concatenate(out)

    p0 = _efficiency_seed(data, noise_line, lambda_b)
    popt, cov, chi2, ndof, jac = _run_least_squares(
        residual, p0, ([1e-6, 1e-6], [1.0, 1.0])
    )
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < 1e-8:
        raise UnidentifiableFitError(
            "efficiencies are not jointly identifiable from the supplied curves "
            "(only their ratio is constrained)"
        )
    return EfficiencyFitResult(
        float(popt[0]),
        float(popt[1]),
        math.sqrt(max(cov[0, 0], 0.0)),
        math.sqrt(max(cov[1, 1], 0.0)),
        cov,
        chi2,
        ndof,
    )


def _efficiency_seed(data: dict, noise_line: WriteNoiseLine, lambda_b: float) -> list[float]:
    eta_x0 = 0.05
    if "g2_cross" in data:
        x, y, _ = data["g2_cross"]
        i = int(np.argmax(y))
        if y[i] > 2.0:
            # noiseless limit g2 = 2 + 1/mu and <n_W> ~ eta_x mu + lambda_a
            signal = max(x[i] - float(noise_line(x[i])), 1e-12)
            eta_x0 = signal * (y[i] - 2.0)
    eta_x0 = min(max(eta_x0, 1e-4), 0.9)
    eta_y0 = 0.05
    if "mean_read" in data:
        x, y, _ = data["mean_read"]
        slope = np.polyfit(x, y, 1)[0]
        eta_y0 = slope * eta_x0 / max(1.0 - noise_line.slope, 1e-6)
    elif "retrieval_efficiency" in data:
        eta_y0 = float(np.max(data["retrieval_efficiency"][1]))
    eta_y0 = min(max(eta_y0, 1e-4), 0.9)
    return [eta_x0, eta_y0]


def intrinsic_retrieval(
    eta_y: float,
    chain: EfficiencyChain,
    eta_y_err: float = 0.0,
    eta_d_err: float = 0.0,
    eta_esc_err: float = 0.0,
) -> tuple[float, float]:
    """Correct eta_y for detection-path and escape losses.

    Returns the intrinsic retrieval efficiency and its first-order
    propagated uncertainty.
    """
    eta_d, eta_esc = chain.eta_d, chain.eta_esc
    if eta_d <= 0 or eta_esc <= 0:
        raise ValueError("eta_d and eta_esc must be positive")
    value = eta_y / (eta_d * eta_esc)
    rel = (eta_d_err / eta_d) ** 2 + (eta_esc_err / eta_esc) ** 2
    if eta_y > 0:
        rel += (eta_y_err / eta_y) ** 2
    return value, value * math.sqrt(rel)
