"""Experiment-level statistics computed from click records.

All estimators are number-resolved: they use the full per-sequence
counts, never a binarised click/no-click reduction.  Uncertainties are
Poissonian: every raw tally (coincidences, singles, double events) is
treated as a Poisson variate and propagated to first order, neglecting
correlations between tallies.  Count sums are integer arithmetic, so
results do not depend on reduction order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError
from .simulate import ClickDataset

__all__ = [
    "CorrelationResult",
    "TagHistogram",
    "estimate_g2_cross",
    "estimate_g2_conditional",
    "estimate_retrieval_efficiency",
    "estimate_g2_unconditional",
    "cauchy_schwarz_from_data",
    "histogram_time_tags",
]


@dataclass(frozen=True)
class CorrelationResult:
    """An estimated statistic with its Poissonian standard error."""

    value: float
    std_err: float
    n_sequences_used: int
    conditioning: str

    def __post_init__(self):
        if self.std_err < 0:
            raise ValueError("std_err must be >= 0")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "std_err": self.std_err,
            "n": self.n_sequences_used,
            "conditioning": self.conditioning,
        }


def _write_present(data: ClickDataset) -> ClickDataset:
    try:
        return data.select(write_pulse=True)
    except ValueError:
        raise EstimationError("dataset contains no write-pulse sequences") from None


def _reads(data: ClickDataset, window_us: float | None) -> np.ndarray:
    """Read counts, truncated to the window when time tags are present."""
    if window_us is not None and data.has_time_tags:
        return data.windowed_read_counts(window_us)
    return data.read_clicks


def estimate_g2_cross(data: ClickDataset, window_us: float | None = None) -> CorrelationResult:
    """Cross-correlation <n_W n_R> / (<n_W><n_R>) over write sequences."""
    sub = _write_present(data)
    w = sub.write_clicks
    r = _reads(sub, window_us)
    n = len(sub)
    sum_w = int(w.sum())
    sum_r = int(r.sum())
    if sum_w == 0 or sum_r == 0:
        raise EstimationError("zero mean counts on a channel; g2 undefined")
    coinc = int((w * r).sum())
    value = coinc * n / (sum_w * sum_r)
    if coinc == 0:
        # error bar from one hypothetical coincidence
        err = n / (sum_w * sum_r)
    else:
        err = value * math.sqrt(1.0 / coinc + 1.0 / sum_w + 1.0 / sum_r)
    return CorrelationResult(value, err, n, "unconditional")


def _g2_auto(counts: np.ndarray, n: int, conditioning: str) -> CorrelationResult:
    """<n(n-1)> / <n>^2 with Poissonian errors and the zero-double rule."""
    singles = int(counts.sum())
    if singles == 0:
        raise EstimationError("no counts; autocorrelation undefined")
    doubles = int((counts * (counts - 1)).sum())
    value = doubles * n / singles**2
    if doubles == 0:
        # assign the value implied by one double detection event
        err = 2.0 * n / singles**2
    else:
        pairs = doubles / 2.0
        err = value * math.sqrt(1.0 / pairs + 4.0 / singles)
    return CorrelationResult(value, err, n, conditioning)


def estimate_g2_conditional(data: ClickDataset, window_us: float | None = None) -> CorrelationResult:
    """Read autocorrelation conditioned on exactly one write click.

    Multi-click heralds (W >= 2) are excluded; sequences without a write
    pulse never enter.
    """
    sub = _write_present(data)
    heralded = sub.write_clicks == 1
    if not heralded.any():
        raise EstimationError("no sequences with exactly one write click")
    sel = sub.take(np.flatnonzero(heralded))
    reads = _reads(sel, window_us)
    return _g2_auto(reads, len(sel), "W=1")


def estimate_retrieval_efficiency(
    data: ClickDataset, window_us: float | None = None
) -> CorrelationResult:
    """Heralded read mean minus the no-write noise baseline.

    The subtraction makes the result noise-free by construction; both
    terms are windowed identically when time tags are available.
    """
    sub = _write_present(data)
    try:
        baseline = data.select(write_pulse=False)
    except ValueError:
        raise EstimationError("no interleaved no-write sequences for the noise baseline") from None
    heralded = sub.write_clicks == 1
    if not heralded.any():
        raise EstimationError("no sequences with exactly one write click")
    sel = sub.take(np.flatnonzero(heralded))
    r1 = _reads(sel, window_us)
    r0 = _reads(baseline, window_us)
    m1 = r1.sum() / len(sel)
    m0 = r0.sum() / len(baseline)
    err = math.sqrt(m1 / len(sel) + m0 / len(baseline))
    return CorrelationResult(m1 - m0, err, len(sel), "W=1 minus no-write baseline")


def estimate_g2_unconditional(
    data: ClickDataset, channel: str, window_us: float | None = None
) -> CorrelationResult:
    """Unconditioned autocorrelation of the write or read channel."""
    sub = _write_present(data)
    if channel == "write":
        counts = sub.write_clicks
    elif channel == "read":
        counts = _reads(sub, window_us)
    else:
        raise ValueError(f"channel must be 'write' or 'read', got {channel!r}")
    return _g2_auto(counts, len(sub), f"unconditional {channel}")


def cauchy_schwarz_from_data(data: ClickDataset, window_us: float | None = None) -> CorrelationResult:
    """g2_WR^2 / (g2_WW g2_RR) with first-order error propagation.

    Correlations between the three estimates are neglected (documented
    limitation of the Poissonian treatment).
    """
    g_wr = estimate_g2_cross(data, window_us)
    g_ww = estimate_g2_unconditional(data, "write")
    g_rr = estimate_g2_unconditional(data, "read", window_us)
    if g_ww.value <= 0 or g_rr.value <= 0:
        raise EstimationError("autocorrelations must be positive for the ratio")
    value = g_wr.value**2 / (g_ww.value * g_rr.value)
    rel = math.sqrt(
        (2.0 * g_wr.std_err / g_wr.value) ** 2
        + (g_ww.std_err / g_ww.value) ** 2
        + (g_rr.std_err / g_rr.value) ** 2
    )
    return CorrelationResult(value, value * rel, g_wr.n_sequences_used, "from g2_WR, g2_WW, g2_RR")


@dataclass(frozen=True)
class TagHistogram:
    """Per-bin detection rate (counts per sequence) over the read pulse."""

    bin_edges: np.ndarray
    rate: np.ndarray
    std_err: np.ndarray
    n_sequences: int
    conditioning: str


def histogram_time_tags(
    data: ClickDataset, bin_us: float = 7.0, conditioning: str = "heralded"
) -> TagHistogram:
    """Histogram read time tags: conditioning in {'heralded', 'all', 'no_write'}."""
    if not data.has_time_tags:
        raise EstimationError("dataset carries no time tags")
    if conditioning == "heralded":
        sub = _write_present(data)
        sub = sub.take(np.flatnonzero(sub.write_clicks == 1))
    elif conditioning == "all":
        sub = _write_present(data)
    elif conditioning == "no_write":
        try:
            sub = data.select(write_pulse=False)
        except ValueError:
            raise EstimationError("no no-write sequences in dataset") from None
    else:
        raise ValueError(f"unknown conditioning {conditioning!r}")
    pulse_us = None
    cfg = data.meta.get("config")
    if cfg:
        pulse_us = cfg.get("read_pulse_us")
    if pulse_us is None:
        pulse_us = float(sub.tag_values.max()) if len(sub.tag_values) else bin_us
    n_bins = max(1, int(math.ceil(pulse_us / bin_us)))
    edges = np.arange(n_bins + 1) * bin_us
    counts, _ = np.histogram(sub.tag_values, bins=edges)
    n = len(sub)
    return TagHistogram(edges, counts / n, np.sqrt(counts) / n, n, conditioning)
