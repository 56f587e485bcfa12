"""Clock-driven simulation of the spiking network under one fixed drop-mask.

Inputs are held as constant injected currents into the first weight layer.
Each spike deposits an impulse of height 1/dt into the emitting neuron's
synaptic lowpass filter, so the filtered signal is in Hz and directly
comparable to the analog activations; downstream layers read the filtered,
mask-scaled rates. Dropped neurons are frozen: never integrated, never
filtered, contributing a constant zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convert import SpikingNetwork
from .network import InvalidNetworkError
from .neuron import lif_step_arrays


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    v0_seed selects heterogeneous initial voltages uniform in [0, v_th),
    which desynchronizes neurons and reduces output ripple; 0 means an
    all-zero start.
    """

    dt: float = 0.001
    n_steps: int = 1000
    burn_in_steps: int = 200
    tau_syn: float = 0.005
    v0_seed: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not (0 <= self.burn_in_steps < self.n_steps):
            raise ValueError("burn_in_steps must lie in [0, n_steps)")
        if self.tau_syn < 0:
            raise ValueError("tau_syn must be >= 0")


@dataclass
class OutputTrace:
    """Per-tick output potential; shape (n_steps,) or (n_steps, output_dim)."""

    values: np.ndarray
    dt: float

    def __len__(self):
        return len(self.values)


class _LayerRuntime:
    """Mutable per-tick state for one layer instance."""

    def __init__(self, wkey, layer, mask, v0):
        self.wkey = wkey
        self.layer = layer
        self.spiking = layer.activation == "softlif"
        self.mask = mask                  # None when the layer is unmasked
        if mask is not None:
            self.active = mask > 0
            self.scale = mask / layer.keep_prob
        if self.spiking:
            self.v = v0
            self.refr = np.zeros(layer.out_dim)
            self.syn = np.zeros(layer.out_dim)


def simulate(net: SpikingNetwork, input, masks, sim: SimConfig) -> OutputTrace:
    """Run one simulation under one fixed mask set; deterministic throughout.

    ``masks=None`` runs the network without dropout (the deterministic
    spiking analog of a mask-free forward pass).
    """
    spec = net.spec
    weights = net.weights
    p = net.neuron_params
    x = np.asarray(input, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise InvalidNetworkError(
            f"input has shape {x.shape}, spec wants ({spec.input_dim},)"
        )

    v0_rng = np.random.default_rng(sim.v0_seed) if sim.v0_seed != 0 else None

    runtimes = {}
    for ikey, wkey, layer, is_output in spec.layer_instances():
        mask = None
        if masks is not None and ikey in masks:
            if is_output:
                raise InvalidNetworkError("output layer cannot be masked")
            mask = np.asarray(masks[ikey], dtype=float)
            if mask.shape != (layer.out_dim,):
                raise InvalidNetworkError(
                    f"mask for {ikey!r} has shape {mask.shape}, layer width {layer.out_dim}"
                )
        if layer.activation == "softlif" and v0_rng is not None:
            v0 = v0_rng.uniform(0.0, p.v_th, layer.out_dim)
        else:
            v0 = np.zeros(layer.out_dim)
        runtimes[ikey] = _LayerRuntime(wkey, layer, mask, v0)

    spans = spec.slice_spans()
    encoder_inputs = []
    for enc in spec.encoders:
        parts = [x[spans[name][0]: spans[name][0] + spans[name][1]] for name in enc.slices]
        encoder_inputs.append(parts[0] if len(parts) == 1 else np.concatenate(parts))

    instance_plan = [(ikey, runtimes[ikey]) for ikey, _, _, _ in spec.layer_instances()]
    enc_layer_counts = [len(enc.layers) for enc in spec.encoders]
    dt = sim.dt
    alpha = dt / sim.tau_syn if sim.tau_syn > 0 else None

    trace = np.empty((sim.n_steps, spec.output_dim))

    def run_layer(rt: _LayerRuntime, a):
        w = weights.weights[rt.wkey]
        b = weights.biases[rt.wkey]
        current = w @ a + b
        if rt.spiking:
            v_new, refr_new, spiked = lif_step_arrays(rt.v, rt.refr, current, dt, p)
            if rt.mask is not None:
                # frozen: dropped neurons keep their state and never spike
                rt.v = np.where(rt.active, v_new, rt.v)
                rt.refr = np.where(rt.active, refr_new, rt.refr)
                spiked = spiked & rt.active
            else:
                rt.v = v_new
                rt.refr = refr_new
            impulse = spiked / dt
            if alpha is None:
                rt.syn = impulse
            else:
                rt.syn = rt.syn + alpha * (impulse - rt.syn)
            out = rt.syn
        else:
            out = current
        if rt.mask is not None:
            out = out * rt.scale
        return out

    for t in range(sim.n_steps):
        plan = iter(instance_plan)
        encoder_outs = []
        for enc_idx, count in enumerate(enc_layer_counts):
            a = encoder_inputs[enc_idx]
            for _ in range(count):
                _, rt = next(plan)
                a = run_layer(rt, a)
            encoder_outs.append(a)
        a = encoder_outs[0] if len(encoder_outs) == 1 else np.concatenate(encoder_outs)
        for _, rt in plan:
            a = run_layer(rt, a)
        trace[t] = a

    if not np.isfinite(trace).all():
        raise FloatingPointError("non-finite output potential in trace")
    values = trace[:, 0] if spec.output_dim == 1 else trace
    return OutputTrace(values=values, dt=dt)


def summarize_trace(trace: OutputTrace, burn_in_steps: int):
    """Mean output potential over the ticks after the burn-in window."""
    n = len(trace.values)
    if burn_in_steps >= n:
        raise ValueError(f"burn_in_steps {burn_in_steps} >= trace length {n}")
    if burn_in_steps < 0:
        raise ValueError("burn_in_steps must be >= 0")
    tail = trace.values[burn_in_steps:]
    mean = tail.mean(axis=0)
    return float(mean) if np.ndim(mean) == 0 else mean


def write_trace(path, trace: OutputTrace, meta=None) -> None:
    """Dump a scalar-output trace as comma-separated text:
    tick, time_s, output_potential. ``meta`` entries become '# key=value'
    comment lines before the header row."""
    values = np.asarray(trace.values)
    if values.ndim != 1:
        raise ValueError("trace dump supports scalar-output traces only")
    with open(path, "w", encoding="utf-8") as f:
        for key, val in (meta or {}).items():
            f.write(f"# {key}={val}\n")
        f.write("tick,time_s,output_potential\n")
        for i, v in enumerate(values):
            f.write(f"{i},{i * trace.dt!r},{float(v)!r}\n")
