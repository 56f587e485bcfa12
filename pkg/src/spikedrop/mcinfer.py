"""Monte-Carlo dropout inference: per-observation predictive distributions.

Draw k of a sample set uses the mask seed ``base_seed + k``, so draws are
reproducible and order-independent, and an analog and a spiking run given the
same base seed evaluate the same mask sequence. The cross-backend comparison
is then a paired comparison of the two evaluators. Each spiking draw is an
independent simulation run and starts from its own initial-voltage draw
(seed ``v0_seed + k``); ``v0_seed = 0`` keeps every run at the all-zero start.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .convert import convert
from .network import NetworkSpec, WeightStore, forward, sample_masks
from .neuron import NeuronParams
from .snn import SimConfig, simulate, summarize_trace

BACKENDS = ("analog", "spiking")


@dataclass
class SampleSet:
    """Predictive draws for one observation under one backend."""

    observation_id: int
    draws: np.ndarray
    backend: str
    base_seed: int


@dataclass
class DistributionSummary:
    mean: float
    std: float
    q025: float
    q500: float
    q975: float


def predictive_distribution(spec: NetworkSpec, weights: WeightStore,
                            params: NeuronParams, observation, n_draws: int,
                            base_seed: int, backend: str,
                            sim: SimConfig = None,
                            observation_id: int = 0) -> SampleSet:
    """Build a predictive distribution from repeated masked evaluations.

    analog: masked forward passes. spiking: one simulation per mask, each
    summarized by its post-burn-in mean. Deterministic given base_seed.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if spec.output_dim != 1:
        raise ValueError("predictive draws are scalars; output_dim must be 1")

    obs = np.asarray(observation, dtype=float)
    draws = np.empty(n_draws)
    if backend == "spiking":
        net = convert(spec, weights, params)
        if sim is None:
            sim = SimConfig()
        for k in range(n_draws):
            masks = sample_masks(spec, base_seed + k)
            sim_k = replace(sim, v0_seed=sim.v0_seed + k) if sim.v0_seed != 0 else sim
            trace = simulate(net, obs, masks, sim_k)
            draws[k] = summarize_trace(trace, sim.burn_in_steps)
    else:
        for k in range(n_draws):
            masks = sample_masks(spec, base_seed + k)
            out, _ = forward(spec, weights, obs, masks, params)
            draws[k] = out[0]

    if not np.isfinite(draws).all():
        raise FloatingPointError("non-finite prediction draw")
    return SampleSet(observation_id=observation_id, draws=draws,
                     backend=backend, base_seed=base_seed)


def summarize(samples: SampleSet) -> DistributionSummary:
    """Empirical mean, std (n-1 denominator), and 2.5/50/97.5% quantiles."""
    d = np.asarray(samples.draws, dtype=float)
    if d.size == 0:
        raise ValueError("empty sample set")
    q = np.quantile(d, [0.025, 0.5, 0.975])
    std = 0.0 if d.size == 1 else float(np.std(d, ddof=1))
    return DistributionSummary(mean=float(np.mean(d)), std=std,
                               q025=float(q[0]), q500=float(q[1]), q975=float(q[2]))


def write_samples(path, sample_sets, meta=None) -> None:
    """Samples file: '# key=value' comment lines, then a CSV with header
    observation_id, draw_id, backend, prediction (observation-major order)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, val in (meta or {}).items():
            f.write(f"# {key}={val}\n")
        writer = csv.writer(f)
        writer.writerow(["observation_id", "draw_id", "backend", "prediction"])
        for ss in sample_sets:
            for k, value in enumerate(ss.draws):
                writer.writerow([ss.observation_id, k, ss.backend, repr(float(value))])


def read_samples(path):
    """Parse a samples file.

    Returns ``(meta, groups)`` where groups maps observation_id to
    ``(backend, draws)`` with draws ordered by draw_id.
    """
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.reader(line for line in f if line.strip())
        header = None
        for row in reader:
            if row and row[0].startswith("#"):
                text = ",".join(row).lstrip("#").strip()
                if "=" in text:
                    key, val = text.split("=", 1)
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = row
                if header != ["observation_id", "draw_id", "backend", "prediction"]:
                    raise ValueError(f"unexpected samples header: {header}")
                continue
            rows.append(row)

    groups = {}
    for obs_id, draw_id, backend, pred in rows:
        groups.setdefault(int(obs_id), []).append((int(draw_id), backend, float(pred)))
    out = {}
    for obs_id, entries in groups.items():
        entries.sort(key=lambda e: e[0])
        backends = {b for _, b, _ in entries}
        if len(backends) != 1:
            raise ValueError(f"observation {obs_id}: mixed backends {backends}")
        out[obs_id] = (backends.pop(), np.array([v for _, _, v in entries]))
    return meta, out
