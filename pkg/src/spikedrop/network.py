"""Network architecture description, parameter storage, and forward evaluation.

A network is a set of input slices feeding encoder towers whose outputs are
concatenated into a head stack. Encoders carrying the same ``share_tag`` reuse
one parameter set (e.g. one tower applied to each drug of a pair). Dropout is
applied to layer outputs with inverted scaling (surviving activations divided
by the keep probability), so the deterministic pass, the masked analog pass,
and the spiking simulation all operate on the same activation scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .neuron import NeuronParams, softlif_rate

ACTIVATIONS = ("softlif", "linear")

MODEL_FORMAT = "spikedrop-model"
MODEL_FORMAT_VERSION = 1


class InvalidNetworkError(ValueError):
    """A NetworkSpec (or weights attached to one) violates an invariant."""


@dataclass(frozen=True)
class LayerSpec:
    """One affine layer: activation applied elementwise, dropout on outputs."""

    in_dim: int
    out_dim: int
    activation: str = "softlif"
    keep_prob: float = 1.0
    share_tag: Optional[str] = None


@dataclass
class EncoderSpec:
    """A tower applied to the concatenation of the named input slices.

    ``layers`` may be empty, in which case the tower passes its input through
    unchanged. Encoders with equal ``share_tag`` share one parameter set.
    """

    slices: list
    layers: list = field(default_factory=list)
    share_tag: Optional[str] = None


@dataclass
class NetworkSpec:
    """Whole-network architecture.

    input_slices: (name, offset, length) triples partitioning the input vector.
    encoders: towers reading those slices.
    head: layer stack applied to the concatenated encoder outputs; the last
          head layer is the network output and never carries dropout.
    """

    input_slices: list
    encoders: list
    head: list
    output_dim: int

    @property
    def input_dim(self) -> int:
        return sum(length for _, _, length in self.input_slices)

    def slice_spans(self) -> dict:
        return {name: (offset, length) for name, offset, length in self.input_slices}

    def encoder_input_dim(self, enc: EncoderSpec) -> int:
        spans = self.slice_spans()
        return sum(spans[name][1] for name in enc.slices)

    def encoder_output_dim(self, enc: EncoderSpec) -> int:
        if enc.layers:
            return enc.layers[-1].out_dim
        return self.encoder_input_dim(enc)

    def layer_instances(self):
        """Yield (instance_key, weight_key, layer, is_output) in traversal order.

        The instance key identifies the physical layer (dropout masks attach
        to it); the weight key identifies the parameter set (shared towers
        map distinct instances onto one weight key).
        """
        for i, enc in enumerate(self.encoders):
            for j, layer in enumerate(enc.layers):
                ikey = f"enc{i}:{j}"
                if layer.share_tag:
                    wkey = layer.share_tag
                elif enc.share_tag:
                    wkey = f"{enc.share_tag}:{j}"
                else:
                    wkey = ikey
                yield ikey, wkey, layer, False
        last = len(self.head) - 1
        for j, layer in enumerate(self.head):
            ikey = f"head:{j}"
            yield ikey, layer.share_tag or ikey, layer, j == last


class WeightStore:
    """Per-layer weight matrices and bias vectors, keyed by weight key.

    Shared layers appear once; towers that share a tag read (and update)
    the same underlying arrays.
    """

    def __init__(self, weights=None, biases=None):
        self.weights = weights if weights is not None else {}
        self.biases = biases if biases is not None else {}

    def keys(self):
        return self.weights.keys()

    def copy(self) -> "WeightStore":
        return WeightStore(
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.biases.items()},
        )

    def zeros_like(self) -> "WeightStore":
        return WeightStore(
            {k: np.zeros_like(v) for k, v in self.weights.items()},
            {k: np.zeros_like(v) for k, v in self.biases.items()},
        )

    def equal(self, other: "WeightStore") -> bool:
        if set(self.weights) != set(other.weights):
            return False
        return all(
            np.array_equal(self.weights[k], other.weights[k])
            and np.array_equal(self.biases[k], other.biases[k])
            for k in self.weights
        )


@dataclass
class DropMasks:
    """Per-layer-instance binary activity vectors (1 = active) for one draw."""

    masks: dict

    def __contains__(self, key):
        return key in self.masks

    def __getitem__(self, key):
        return self.masks[key]


def _check_layer(layer: LayerSpec, where: str):
    if layer.in_dim < 1 or layer.out_dim < 1:
        raise InvalidNetworkError(f"{where}: layer dims must be positive")
    if not (0.0 < layer.keep_prob <= 1.0):
        raise InvalidNetworkError(f"{where}: keep_prob must be in (0, 1]")
    if layer.activation not in ACTIVATIONS:
        raise InvalidNetworkError(
            f"{where}: unknown activation {layer.activation!r}"
        )


def validate(spec: NetworkSpec) -> None:
    """Check every NetworkSpec invariant; raise on the first violation found."""
    if not spec.input_slices:
        raise InvalidNetworkError("no input slices")
    names = [name for name, _, _ in spec.input_slices]
    if len(set(names)) != len(names):
        raise InvalidNetworkError("duplicate slice names")
    spans = sorted((offset, length, name) for name, offset, length in spec.input_slices)
    cursor = 0
    for offset, length, name in spans:
        if length < 1:
            raise InvalidNetworkError(f"slice {name!r}: length must be positive")
        if offset < cursor:
            raise InvalidNetworkError(f"slice {name!r}: overlapping slices")
        if offset > cursor:
            raise InvalidNetworkError(f"slice {name!r}: slices must cover the input with no gaps")
        cursor = offset + length

    if not spec.encoders:
        raise InvalidNetworkError("at least one encoder required")
    if not spec.head:
        raise InvalidNetworkError("head must contain at least one layer")
    if spec.output_dim < 1:
        raise InvalidNetworkError("output_dim must be positive")

    slice_names = set(names)
    for i, enc in enumerate(spec.encoders):
        if not enc.slices:
            raise InvalidNetworkError(f"encoder {i}: reads no slices")
        for name in enc.slices:
            if name not in slice_names:
                raise InvalidNetworkError(f"encoder {i}: unknown slice {name!r}")
        expected = spec.encoder_input_dim(enc)
        for j, layer in enumerate(enc.layers):
            _check_layer(layer, f"encoder {i} layer {j}")
            if layer.in_dim != expected:
                raise InvalidNetworkError(
                    f"encoder {i} layer {j}: in_dim {layer.in_dim} != expected {expected}"
                )
            expected = layer.out_dim

    # encoders sharing a tag must agree on the full shape sequence
    by_tag = {}
    for enc in spec.encoders:
        if enc.share_tag is None:
            continue
        shape = tuple((l.in_dim, l.out_dim) for l in enc.layers)
        if by_tag.setdefault(enc.share_tag, shape) != shape:
            raise InvalidNetworkError(
                f"shared shape conflict for share_tag {enc.share_tag!r}"
            )

    head_in = sum(spec.encoder_output_dim(enc) for enc in spec.encoders)
    expected = head_in
    for j, layer in enumerate(spec.head):
        _check_layer(layer, f"head layer {j}")
        if layer.in_dim != expected:
            raise InvalidNetworkError(
                f"head dimension mismatch: layer {j} in_dim {layer.in_dim} != {expected}"
            )
        expected = layer.out_dim
    if spec.head[-1].out_dim != spec.output_dim:
        raise InvalidNetworkError(
            f"output dimension mismatch: head ends at {spec.head[-1].out_dim}, "
            f"output_dim is {spec.output_dim}"
        )
    if spec.head[-1].keep_prob != 1.0:
        raise InvalidNetworkError("output layer must not have dropout")

    shapes = {}
    for ikey, wkey, layer, _ in spec.layer_instances():
        shape = (layer.in_dim, layer.out_dim)
        if shapes.setdefault(wkey, shape) != shape:
            raise InvalidNetworkError(f"shared shape conflict at weight key {wkey!r}")


def validate_weights(spec: NetworkSpec, weights: WeightStore) -> None:
    """Check that a WeightStore matches the spec's shapes and is finite."""
    needed = {wkey: layer for _, wkey, layer, _ in spec.layer_instances()}
    for wkey, layer in needed.items():
        if wkey not in weights.weights or wkey not in weights.biases:
            raise InvalidNetworkError(f"missing parameters for {wkey!r}")
        w, b = weights.weights[wkey], weights.biases[wkey]
        if w.shape != (layer.out_dim, layer.in_dim):
            raise InvalidNetworkError(f"{wkey!r}: weight shape {w.shape} mismatch")
        if b.shape != (layer.out_dim,):
            raise InvalidNetworkError(f"{wkey!r}: bias shape {b.shape} mismatch")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise InvalidNetworkError(f"{wkey!r}: non-finite parameters")


def init_weights(spec: NetworkSpec, seed: int, bias_value: float = 1.0) -> WeightStore:
    """Seed-deterministic initialization.

    Weights are zero-mean normal with variance 2/in_dim; biases start at the
    firing threshold so that SoftLIF units straddle threshold at init instead
    of sitting in the near-zero-gradient subthreshold tail.
    """
    validate(spec)
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for _, wkey, layer, _ in spec.layer_instances():
        if wkey in store.weights:
            continue
        scale = np.sqrt(2.0 / layer.in_dim)
        store.weights[wkey] = rng.normal(0.0, scale, size=(layer.out_dim, layer.in_dim))
        store.biases[wkey] = np.full(layer.out_dim, float(bias_value))
    return store


def sample_masks(spec: NetworkSpec, seed: int) -> DropMasks:
    """Draw one Bernoulli(keep_prob) drop-mask per hidden layer instance.

    Layers with keep_prob == 1 get all-ones masks without consuming
    randomness; the output layer gets no mask. Deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    masks = {}
    for ikey, _, layer, is_output in spec.layer_instances():
        if is_output:
            continue
        if layer.keep_prob < 1.0:
            masks[ikey] = (rng.random(layer.out_dim) < layer.keep_prob).astype(float)
        else:
            masks[ikey] = np.ones(layer.out_dim)
    return DropMasks(masks)


class LayerRecord(NamedTuple):
    """Cached per-layer values from one forward pass (inputs to backprop)."""

    instance_key: str
    weight_key: str
    layer: LayerSpec
    a_in: np.ndarray      # (n, in_dim) layer input
    current: np.ndarray   # (n, out_dim) pre-activation
    act: np.ndarray       # (n, out_dim) post-activation, post-mask
    mask: Optional[np.ndarray]


class ForwardCache(NamedTuple):
    encoder_records: list   # list of LayerRecord lists, one per encoder
    encoder_out_dims: list
    head_records: list
    output: np.ndarray      # (n, output_dim)


def _gather_slices(spec: NetworkSpec, enc: EncoderSpec, x: np.ndarray) -> np.ndarray:
    spans = spec.slice_spans()
    parts = [x[:, spans[name][0]: spans[name][0] + spans[name][1]] for name in enc.slices]
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


def _run_layer(ikey, wkey, layer, a, weights, masks, params, allow_mask=True):
    w = weights.weights[wkey]
    b = weights.biases[wkey]
    current = a @ w.T + b
    act = softlif_rate(current, params) if layer.activation == "softlif" else current
    mask = None
    if masks is not None and ikey in masks:
        if not allow_mask:
            raise InvalidNetworkError("output layer cannot be masked")
        mask = np.asarray(masks[ikey], dtype=float)
        if mask.shape != (layer.out_dim,):
            raise InvalidNetworkError(
                f"mask for {ikey!r} has length {mask.shape}, layer width {layer.out_dim}"
            )
        act = act * (mask / layer.keep_prob)
    return LayerRecord(ikey, wkey, layer, a, current, act, mask)


def forward(spec: NetworkSpec, weights: WeightStore, input,
            masks: Optional[DropMasks] = None,
            params: NeuronParams = NeuronParams()):
    """Evaluate the network on one input vector or a batch (rows).

    With ``masks`` supplied, each masked layer's output is multiplied by
    mask / keep_prob (one mask shared across the batch). Returns
    ``(output, cache)`` where the cache holds every per-layer intermediate
    needed by backprop.
    """
    x = np.asarray(input, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise InvalidNetworkError(
            f"input has {x.shape[-1] if x.ndim else 0} features, spec wants {spec.input_dim}"
        )

    instances = iter(spec.layer_instances())
    encoder_records = []
    encoder_outs = []
    for enc in spec.encoders:
        a = _gather_slices(spec, enc, x)
        records = []
        for _ in enc.layers:
            ikey, wkey, layer, _ = next(instances)
            rec = _run_layer(ikey, wkey, layer, a, weights, masks, params)
            records.append(rec)
            a = rec.act
        encoder_records.append(records)
        encoder_outs.append(a)

    h = encoder_outs[0] if len(encoder_outs) == 1 else np.concatenate(encoder_outs, axis=1)
    head_records = []
    for _ in spec.head:
        ikey, wkey, layer, is_output = next(instances)
        rec = _run_layer(ikey, wkey, layer, h, weights, masks, params,
                         allow_mask=not is_output)
        head_records.append(rec)
        h = rec.act

    cache = ForwardCache(
        encoder_records=encoder_records,
        encoder_out_dims=[spec.encoder_output_dim(e) for e in spec.encoders],
        head_records=head_records,
        output=h,
    )
    return (h[0] if single else h), cache


def single_tower(input_dim: int, layers, slice_name: str = "features") -> NetworkSpec:
    """A spec with one passthrough encoder and the given layers as the head."""
    return NetworkSpec(
        input_slices=[(slice_name, 0, input_dim)],
        encoders=[EncoderSpec(slices=[slice_name])],
        head=list(layers),
        output_dim=layers[-1].out_dim,
    )


def combo_spec(cell_dim: int, drug_dim: int, cell_hidden: int = 16,
               drug_hidden: int = 16, head_hidden: int = 32,
               keep_prob: float = 0.9) -> NetworkSpec:
    """Two-drug architecture: a cell tower plus one shared tower per drug.

    head_hidden=0 puts the affine readout directly on the concatenated tower
    outputs; that variant converts to a spiking network with the least error,
    since a linear readout averages synaptic ripple without rectifying it.
    """
    concat = cell_hidden + 2 * drug_hidden
    if head_hidden > 0:
        head = [LayerSpec(concat, head_hidden, "softlif", keep_prob),
                LayerSpec(head_hidden, 1, "linear")]
    else:
        head = [LayerSpec(concat, 1, "linear")]
    return NetworkSpec(
        input_slices=[
            ("cell", 0, cell_dim),
            ("drug_a", cell_dim, drug_dim),
            ("drug_b", cell_dim + drug_dim, drug_dim),
        ],
        encoders=[
            EncoderSpec(["cell"], [LayerSpec(cell_dim, cell_hidden, "softlif", keep_prob)]),
            EncoderSpec(["drug_a"], [LayerSpec(drug_dim, drug_hidden, "softlif", keep_prob)],
                        share_tag="drug"),
            EncoderSpec(["drug_b"], [LayerSpec(drug_dim, drug_hidden, "softlif", keep_prob)],
                        share_tag="drug"),
        ],
        head=head,
        output_dim=1,
    )


# --- model file (JSON) ------------------------------------------------------

def _layer_to_dict(layer: LayerSpec) -> dict:
    return {
        "in_dim": layer.in_dim,
        "out_dim": layer.out_dim,
        "activation": layer.activation,
        "keep_prob": layer.keep_prob,
        "share_tag": layer.share_tag,
    }


def _layer_from_dict(d: dict) -> LayerSpec:
    return LayerSpec(
        in_dim=int(d["in_dim"]),
        out_dim=int(d["out_dim"]),
        activation=d["activation"],
        keep_prob=float(d["keep_prob"]),
        share_tag=d.get("share_tag"),
    )


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_slices": [
            {"name": name, "offset": offset, "length": length}
            for name, offset, length in spec.input_slices
        ],
        "encoders": [
            {
                "slices": list(enc.slices),
                "share_tag": enc.share_tag,
                "layers": [_layer_to_dict(l) for l in enc.layers],
            }
            for enc in spec.encoders
        ],
        "head": [_layer_to_dict(l) for l in spec.head],
        "output_dim": spec.output_dim,
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    return NetworkSpec(
        input_slices=[(s["name"], int(s["offset"]), int(s["length"]))
                      for s in d["input_slices"]],
        encoders=[
            EncoderSpec(
                slices=list(e["slices"]),
                layers=[_layer_from_dict(l) for l in e["layers"]],
                share_tag=e.get("share_tag"),
            )
            for e in d["encoders"]
        ],
        head=[_layer_from_dict(l) for l in d["head"]],
        output_dim=int(d["output_dim"]),
    )


class LoadedModel(NamedTuple):
    kind: str
    spec: NetworkSpec
    weights: WeightStore
    neuron_params: NeuronParams


def save_model(path, spec: NetworkSpec, weights: WeightStore,
               neuron_params: NeuronParams, kind: str = "analog") -> None:
    """Write a model file. Floats are serialized with shortest round-trip
    precision, so load(save(x)) reproduces every value exactly."""
    if kind not in ("analog", "spiking"):
        raise ValueError(f"unknown model kind {kind!r}")
    validate(spec)
    validate_weights(spec, weights)
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "kind": kind,
        "neuron_params": {
            "tau_ref": neuron_params.tau_ref,
            "tau_rc": neuron_params.tau_rc,
            "v_th": neuron_params.v_th,
            "gamma": neuron_params.gamma,
        },
        "spec": spec_to_dict(spec),
        "weights": {
            key: {
                "weight": weights.weights[key].tolist(),
                "bias": weights.biases[key].tolist(),
            }
            for key in sorted(weights.weights)
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_model(path) -> LoadedModel:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidNetworkError(f"not a {MODEL_FORMAT} file: {path}")
    spec = spec_from_dict(doc["spec"])
    validate(spec)
    np_doc = doc["neuron_params"]
    params = NeuronParams(
        tau_ref=float(np_doc["tau_ref"]),
        tau_rc=float(np_doc["tau_rc"]),
        v_th=float(np_doc["v_th"]),
        gamma=float(np_doc["gamma"]),
    )
    weights = WeightStore(
        {k: np.array(v["weight"], dtype=float) for k, v in doc["weights"].items()},
        {k: np.array(v["bias"], dtype=float) for k, v in doc["weights"].items()},
    )
    validate_weights(spec, weights)
    return LoadedModel(doc["kind"], spec, weights, params)
