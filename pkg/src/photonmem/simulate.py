"""Monte Carlo generation of per-sequence, number-resolved click records.

Each experimental sequence draws a thermal pair number, thins it
binomially into detected write and read clicks (the read side is further
thinned by the exponential memory decay over the write-read delay), and
adds independent noise counts realised by the thermal/Poissonian mixture
law.  Optional time tags place read clicks inside the read pulse:
retrieved light and the symmetric part of the noise follow a truncated
exponential envelope, the asymmetric noise a linearly rising density.

Sequences are generated in fixed-size chunks, each with its own child
seed, so serial and parallel runs of the same configuration produce
byte-identical datasets.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import ModelParams
from .noise import NoiseLaw

__all__ = [
    "NoiseGrowth",
    "SimConfig",
    "SequenceRecord",
    "ClickDataset",
    "apply_memory_decay",
    "sample_time_tags",
    "simulate",
    "simulate_sweep",
]

# chunk size is part of the reproducibility contract: changing it changes
# the RNG stream layout (but never the statistics)
CHUNK_SIZE = 1 << 18

DATASET_SCHEMA = "photonmem.dataset/1"


@dataclass(frozen=True)
class NoiseGrowth:
    """Read-noise behaviour versus delay and within the read pulse.

    symmetric_fraction -- share of noise clicks following the retrieval
        envelope; the rest rises linearly over the pulse
    linear_rate -- growth of the mean read-noise counts per microsecond
        of write-read delay (counts/us)
    """

    symmetric_fraction: float = 0.5
    linear_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.symmetric_fraction <= 1.0:
            raise ValueError("symmetric_fraction must lie in [0, 1]")
        if self.linear_rate < 0:
            raise ValueError("linear_rate must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulated block of sequences.

    The model's lambda_b is the read-noise mean integrated over the full
    read pulse at zero delay; the growth term adds linear_rate * delay.
    """

    model: ModelParams
    n_sequences: int
    delay_us: float = 10.0
    memory_tau_us: float = math.inf
    read_window_us: float = 40.0
    read_pulse_us: float = 130.0
    envelope_decay_us: float = 25.0
    noise_growth: NoiseGrowth = field(default_factory=NoiseGrowth)
    write_pulse_present: bool = True
    rng_seed: int = 0
    time_tags: bool = True

    def __post_init__(self):
        if self.n_sequences <= 0:
            raise ValueError("n_sequences must be positive")
        if self.delay_us < 0:
            raise ValueError("delay_us must be >= 0")
        if self.memory_tau_us <= 0:
            raise ValueError("memory_tau_us must be positive")
        if not 0 < self.read_window_us <= self.read_pulse_us:
            raise ValueError("need 0 < read_window_us <= read_pulse_us")
        if self.envelope_decay_us <= 0:
            raise ValueError("envelope_decay_us must be positive")

    def decay_factor(self) -> float:
        return apply_memory_decay(1.0, self.delay_us, self.memory_tau_us)

    def read_noise_mean(self) -> float:
        """Mean read-noise counts over the full pulse at this delay."""
        return self.model.lambda_b + self.noise_growth.linear_rate * self.delay_us

    def envelope_fraction(self, window_us: float) -> float:
        """Share of the retrieval envelope inside [0, window_us]."""
        w = min(window_us, self.read_pulse_us)
        tau = self.envelope_decay_us
        if math.isinf(tau):
            return w / self.read_pulse_us
        return -math.expm1(-w / tau) / -math.expm1(-self.read_pulse_us / tau)

    def linear_fraction(self, window_us: float) -> float:
        """Share of the linearly rising noise density inside [0, window_us]."""
        w = min(window_us, self.read_pulse_us)
        a, t = self.delay_us, self.read_pulse_us
        return (a * w + 0.5 * w**2) / (a * t + 0.5 * t**2)

    def effective_params(self, window_us: float | None = None) -> ModelParams:
        """Model parameters describing the (optionally windowed) counts.

        Binomial thinning by the decay and by the in-window probability
        leaves the model family closed, so the windowed statistics are
        again exactly described by a ModelParams instance.
        """
        eta_y = self.model.eta_y * self.decay_factor()
        lam_b = self.read_noise_mean()
        if window_us is not None:
            f_env = self.envelope_fraction(window_us)
            f_sym = self.noise_growth.symmetric_fraction
            eta_y *= f_env
            lam_b *= f_sym * f_env + (1.0 - f_sym) * self.linear_fraction(window_us)
        mu = self.model.mu if self.write_pulse_present else 0.0
        return self.model.replace(mu=mu, eta_y=eta_y, lambda_b=lam_b)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["memory_tau_us"] = None if math.isinf(self.memory_tau_us) else self.memory_tau_us
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["model"] = ModelParams(**d["model"])
        d["noise_growth"] = NoiseGrowth(**d.get("noise_growth", {}))
        if d.get("memory_tau_us") is None:
            d["memory_tau_us"] = math.inf
        return cls(**d)


@dataclass(frozen=True)
class SequenceRecord:
    """One write-read sequence: clicks, optional read time tags, context."""

    write_clicks: int
    read_clicks: int
    read_time_tags: tuple[float, ...] | None
    delay_us: float
    write_pulse_present: bool

    def __post_init__(self):
        if self.write_clicks < 0 or self.read_clicks < 0:
            raise ValueError("click counts must be >= 0")
        if self.read_time_tags is not None:
            if len(self.read_time_tags) != self.read_clicks:
                raise ValueError("one time tag per read click required")
            if any(b < a for a, b in zip(self.read_time_tags, self.read_time_tags[1:])):
                raise ValueError("time tags must be sorted ascending")


class ClickDataset:
    """Collection of sequence records with interleaving metadata.

    Stored column-wise (numpy arrays) so that estimators stay fast for
    tens of millions of sequences; records are materialised on access.
    Time tags, when present, live in a flat array indexed by offsets.
    """

    def __init__(
        self,
        write_clicks: np.ndarray,
        read_clicks: np.ndarray,
        delay_us: np.ndarray,
        write_pulse: np.ndarray,
        tag_values: np.ndarray | None = None,
        tag_offsets: np.ndarray | None = None,
        meta: dict | None = None,
    ):
        self.write_clicks = np.asarray(write_clicks, dtype=np.int64)
        self.read_clicks = np.asarray(read_clicks, dtype=np.int64)
        self.delay_us = np.asarray(delay_us, dtype=np.float64)
        self.write_pulse = np.asarray(write_pulse, dtype=bool)
        self.tag_values = None if tag_values is None else np.asarray(tag_values, dtype=np.float64)
        self.tag_offsets = None if tag_offsets is None else np.asarray(tag_offsets, dtype=np.int64)
        self.meta = meta or {}
        n = len(self.write_clicks)
        if n == 0:
            raise ValueError("dataset must contain at least one record")
        if not (len(self.read_clicks) == len(self.delay_us) == len(self.write_pulse) == n):
            raise ValueError("column lengths differ")
        if (self.tag_values is None) != (self.tag_offsets is None):
            raise ValueError("tag values and offsets must be given together")
        if self.tag_offsets is not None and len(self.tag_offsets) != n + 1:
            raise ValueError("tag offsets must have length n + 1")

    # -- basic access -------------------------------------------------

    def __len__(self) -> int:
        return len(self.write_clicks)

    @property
    def has_time_tags(self) -> bool:
        return self.tag_values is not None

    def record(self, i: int) -> SequenceRecord:
        tags = None
        if self.has_time_tags:
            lo, hi = self.tag_offsets[i], self.tag_offsets[i + 1]
            tags = tuple(float(t) for t in self.tag_values[lo:hi])
        return SequenceRecord(
            write_clicks=int(self.write_clicks[i]),
            read_clicks=int(self.read_clicks[i]),
            read_time_tags=tags,
            delay_us=float(self.delay_us[i]),
            write_pulse_present=bool(self.write_pulse[i]),
        )

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    @property
    def records(self) -> list[SequenceRecord]:
        return list(self)

    def delays(self) -> list[float]:
        return sorted(set(self.delay_us.tolist()))

    # -- derived views ------------------------------------------------

    def take(self, indices: np.ndarray) -> "ClickDataset":
        indices = np.asarray(indices, dtype=np.int64)
        tag_values = tag_offsets = None
        if self.has_time_tags:
            counts = np.diff(self.tag_offsets)[indices]
            tag_offsets = np.zeros(len(indices) + 1, dtype=np.int64)
            np.cumsum(counts, out=tag_offsets[1:])
            starts = self.tag_offsets[:-1][indices]
            within = np.arange(tag_offsets[-1]) - np.repeat(tag_offsets[:-1], counts)
            tag_values = self.tag_values[np.repeat(starts, counts) + within]
        return ClickDataset(
            self.write_clicks[indices],
            self.read_clicks[indices],
            self.delay_us[indices],
            self.write_pulse[indices],
            tag_values,
            tag_offsets,
            meta=self.meta,
        )

    def select(self, write_pulse: bool | None = None, delay_us: float | None = None) -> "ClickDataset":
        mask = np.ones(len(self), dtype=bool)
        if write_pulse is not None:
            mask &= self.write_pulse == write_pulse
        if delay_us is not None:
            mask &= np.isclose(self.delay_us, delay_us)
        if not mask.any():
            raise ValueError("selection is empty")
        return self.take(np.flatnonzero(mask))

    def windowed_read_counts(self, window_us: float) -> np.ndarray:
        """Read clicks with time tags <= window_us, per sequence."""
        if not self.has_time_tags:
            raise ValueError("dataset carries no time tags")
        counts = np.diff(self.tag_offsets)
        inside = (self.tag_values <= window_us).astype(np.int64)
        out = np.zeros(len(self), dtype=np.int64)
        np.add.at(out, np.repeat(np.arange(len(self)), counts), inside)
        return out

    @staticmethod
    def from_records(records: list[SequenceRecord], meta: dict | None = None) -> "ClickDataset":
        if not records:
            raise ValueError("no records")
        tagged = records[0].read_time_tags is not None
        tag_values = tag_offsets = None
        if tagged:
            tag_offsets = np.zeros(len(records) + 1, dtype=np.int64)
            np.cumsum([r.read_clicks for r in records], out=tag_offsets[1:])
            tag_values = np.array(
                [t for r in records for t in (r.read_time_tags or ())], dtype=np.float64
            )
        return ClickDataset(
            np.array([r.write_clicks for r in records]),
            np.array([r.read_clicks for r in records]),
            np.array([r.delay_us for r in records]),
            np.array([r.write_pulse_present for r in records]),
            tag_values,
            tag_offsets,
            meta=meta,
        )

    @staticmethod
    def concat(datasets: list["ClickDataset"], meta: dict | None = None) -> "ClickDataset":
        if not datasets:
            raise ValueError("no datasets")
        tagged = all(d.has_time_tags for d in datasets)
        tag_values = tag_offsets = None
        if tagged:
            tag_values = np.concatenate([d.tag_values for d in datasets])
            parts, base = [np.array([0], dtype=np.int64)], 0
            for d in datasets:
                parts.append(d.tag_offsets[1:] + base)
                base += d.tag_offsets[-1]
            tag_offsets = np.concatenate(parts)
        if meta is None:
            groups = [g for d in datasets for g in d.meta.get("groups", [])]
            meta = dict(datasets[0].meta, groups=groups)
        return ClickDataset(
            np.concatenate([d.write_clicks for d in datasets]),
            np.concatenate([d.read_clicks for d in datasets]),
            np.concatenate([d.delay_us for d in datasets]),
            np.concatenate([d.write_pulse for d in datasets]),
            tag_values,
            tag_offsets,
            meta=meta,
        )


def apply_memory_decay(mu0: float, delay_us: float, tau_us: float) -> float:
    """Exponential decay of the retrievable excitation over the delay."""
    if tau_us <= 0:
        raise ValueError("tau_us must be positive")
    if math.isinf(tau_us):
        return mu0
    return mu0 * math.exp(-delay_us / tau_us)


def _envelope_tags(u: np.ndarray, config: SimConfig) -> np.ndarray:
    tau, t_max = config.envelope_decay_us, config.read_pulse_us
    if math.isinf(tau):
        return u * t_max
    c = -math.expm1(-t_max / tau)
    return -tau * np.log1p(-u * c)

def _linear_tags(u: np.ndarray, config: SimConfig) -> np.ndarray:
    a, t_max = config.delay_us, config.read_pulse_us
    return -a + np.sqrt(a**2 + u * (2.0 * a * t_max + t_max**2))


def sample_time_tags(
    n_clicks: int,
    config: SimConfig,
    source: str,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Arrival times within the read pulse for clicks of a given origin.

    source is one of 'retrieval', 'sym_noise' (truncated-exponential
    envelope) or 'asym_noise' (linearly rising density continuing the
    growth accumulated during the delay).
    """
    if n_clicks < 0:
        raise ValueError("n_clicks must be >= 0")
    rng = rng or np.random.default_rng()
    u = rng.random(n_clicks)
    if source in ("retrieval", "sym_noise"):
        return _envelope_tags(u, config)
    if source == "asym_noise":
        return _linear_tags(u, config)
    raise ValueError(f"unknown tag source {source!r}")


def _simulate_chunk(entropy, config: SimConfig, n: int):
    """Generate one chunk of sequences from its own child seed."""
    rng = np.random.Generator(np.random.PCG64(entropy))
    m = config.model
    if config.write_pulse_present and m.mu > 0:
        q = m.mu / (1.0 + m.mu)
        pairs = rng.geometric(1.0 - q, n) - 1
    else:
        pairs = np.zeros(n, dtype=np.int64)
    if config.write_pulse_present:
        w_sig = rng.binomial(pairs, m.eta_x)
        r_sig = rng.binomial(pairs, m.eta_y * config.decay_factor())
    else:
        w_sig = r_sig = np.zeros(n, dtype=np.int64)
    a = NoiseLaw(m.lambda_a, m.g2_aa).sample(rng, n)
    b = NoiseLaw(config.read_noise_mean(), m.g2_bb).sample(rng, n)
    w = w_sig + a
    r = r_sig + b
    if not config.time_tags:
        return w, r, None, None

    t_sig = _envelope_tags(rng.random(int(r_sig.sum())), config)
    n_noise = int(b.sum())
    symmetric = rng.random(n_noise) < config.noise_growth.symmetric_fraction
    u = rng.random(n_noise)
    t_noise = np.where(symmetric, _envelope_tags(u, config), _linear_tags(u, config))
    seq = np.concatenate([np.repeat(np.arange(n), r_sig), np.repeat(np.arange(n), b)])
    t_all = np.concatenate([t_sig, t_noise])
    order = np.lexsort((t_all, seq))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(r, out=offsets[1:])
    return w, r, t_all[order], offsets


def simulate(config: SimConfig, n_workers: int = 1) -> ClickDataset:
    """Generate a ClickDataset; bit-identical for a fixed config and seed.

    n_workers > 1 distributes chunks over processes; the output does not
    depend on the degree of parallelism.
    """
    n = config.n_sequences
    n_chunks = (n + CHUNK_SIZE - 1) // CHUNK_SIZE
    seeds = np.random.SeedSequence(config.rng_seed).spawn(n_chunks)
    sizes = [min(CHUNK_SIZE, n - i * CHUNK_SIZE) for i in range(n_chunks)]
    if n_workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(_simulate_chunk, seeds, [config] * n_chunks, sizes))
    else:
        chunks = [_simulate_chunk(s, config, m) for s, m in zip(seeds, sizes)]

    w = np.concatenate([c[0] for c in chunks])
    r = np.concatenate([c[1] for c in chunks])
    tag_values = tag_offsets = None
    if config.time_tags:
        tag_values = np.concatenate([c[2] for c in chunks])
        parts, base = [np.array([0], dtype=np.int64)], 0
        for c in chunks:
            parts.append(c[3][1:] + base)
            base += c[3][-1]
        tag_offsets = np.concatenate(parts)
    meta = {
        "schema": DATASET_SCHEMA,
        "seed": config.rng_seed,
        "config": config.to_dict(),
        "groups": [
            {"delay_us": config.delay_us, "write_pulse": config.write_pulse_present, "n": n}
        ],
    }
    return ClickDataset(
        w,
        r,
        np.full(n, config.delay_us),
        np.full(n, config.write_pulse_present, dtype=bool),
        tag_values,
        tag_offsets,
        meta=meta,
    )


def simulate_sweep(
    base: SimConfig,
    delays_us: list[float],
    include_no_write: bool = True,
    n_workers: int = 1,
    interleave_batch: int = 1000,
) -> ClickDataset:
    """Interleaved blocks over several delays, with optional no-write blocks.

    Mirrors an acquisition that alternates conditions to average out
    drifts: records from all blocks are woven together in batches.
    """
    if not delays_us:
        raise ValueError("need at least one delay")
    flags = [True, False] if include_no_write else [True]
    blocks = []
    root = np.random.SeedSequence(base.rng_seed)
    children = root.spawn(len(delays_us) * len(flags))
    i = 0
    for delay in delays_us:
        for flag in flags:
            cfg = replace(
                base,
                delay_us=float(delay),
                write_pulse_present=flag,
                rng_seed=base.rng_seed,
            )
            # child entropy drives the block; config seed kept for the manifest
            n_chunks = (cfg.n_sequences + CHUNK_SIZE - 1) // CHUNK_SIZE
            seeds = children[i].spawn(n_chunks)
            sizes = [min(CHUNK_SIZE, cfg.n_sequences - j * CHUNK_SIZE) for j in range(n_chunks)]
            if n_workers > 1 and n_chunks > 1:
                with ProcessPoolExecutor(max_workers=n_workers) as pool:
                    chunks = list(pool.map(_simulate_chunk, seeds, [cfg] * n_chunks, sizes))
            else:
                chunks = [_simulate_chunk(s, cfg, m) for s, m in zip(seeds, sizes)]
            w = np.concatenate([c[0] for c in chunks])
            r = np.concatenate([c[1] for c in chunks])
            tag_values = tag_offsets = None
            if cfg.time_tags:
                tag_values = np.concatenate([c[2] for c in chunks])
                parts, basev = [np.array([0], dtype=np.int64)], 0
                for c in chunks:
                    parts.append(c[3][1:] + basev)
                    basev += c[3][-1]
                tag_offsets = np.concatenate(parts)
            blocks.append(
                ClickDataset(
                    w,
                    r,
                    np.full(cfg.n_sequences, cfg.delay_us),
                    np.full(cfg.n_sequences, flag, dtype=bool),
                    tag_values,
                    tag_offsets,
                    meta={"groups": [{"delay_us": float(delay), "write_pulse": flag, "n": cfg.n_sequences}]},
                )
            )
            i += 1
    data = ClickDataset.concat(blocks)
    # round-robin interleave in batches, deterministically
    rounds = np.concatenate([np.arange(len(b)) // interleave_batch for b in blocks])
    block_ids = np.concatenate([np.full(len(b), j) for j, b in enumerate(blocks)])
    within = np.concatenate([np.arange(len(b)) for b in blocks])
    order = np.lexsort((within, block_ids, rounds))
    data = data.take(order)
    data.meta = {
        "schema": DATASET_SCHEMA,
        "seed": base.rng_seed,
        "config": base.to_dict(),
        "delays_us": [float(d) for d in delays_us],
        "include_no_write": include_no_write,
        "groups": [g for b in blocks for g in b.meta["groups"]],
    }
    return data
