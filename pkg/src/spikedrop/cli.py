"""Command-line driver for the train / convert / infer / compare pipeline.

Figure-style outputs are emitted as data files (CSV/JSON), never rendered
images. Every command is deterministic given its flags and input files.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as data_mod
from . import mcinfer, network, snn, stats, training
from .convert import convert
from .neuron import NeuronParams

THREADS_ENV = "SPIKEDROP_THREADS"


def _neuron_params_from_dict(d) -> NeuronParams:
    d = d or {}
    return NeuronParams(
        tau_ref=float(d.get("tau_ref", 0.002)),
        tau_rc=float(d.get("tau_rc", 0.02)),
        v_th=float(d.get("v_th", 1.0)),
        gamma=float(d.get("gamma", 0.02)),
    )


def _load_network_config(path):
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    spec = network.spec_from_dict(doc["spec"])
    network.validate(spec)
    return spec, _neuron_params_from_dict(doc.get("neuron_params"))


def _sim_from_args(args) -> snn.SimConfig:
    return snn.SimConfig(dt=args.dt, n_steps=args.steps,
                         burn_in_steps=args.burnin, tau_syn=args.tausyn,
                         v0_seed=args.v0_seed)


def _add_sim_flags(parser):
    parser.add_argument("--dt", type=float, default=0.001, help="tick length in seconds")
    parser.add_argument("--steps", type=int, default=1000, help="number of ticks")
    parser.add_argument("--burnin", type=int, default=200,
                        help="ticks discarded before averaging the output potential")
    parser.add_argument("--tausyn", type=float, default=0.005,
                        help="synaptic lowpass time constant in seconds")
    parser.add_argument("--v0-seed", type=int, default=1,
                        help="seed for heterogeneous initial voltages (0 = all-zero start)")


def cmd_synth(args) -> int:
    ds = data_mod.synth_combo(n=args.n, cell_dim=args.cell_dim,
                              drug_dim=args.drug_dim,
                              noise_std=args.noise_std, seed=args.seed)
    data_mod.save_csv(args.out, ds, target_column="target")
    print(f"wrote {len(ds)} rows to {args.out}")
    return 0


def cmd_init_spec(args) -> int:
    spec = network.combo_spec(cell_dim=args.cell_dim, drug_dim=args.drug_dim,
                              cell_hidden=args.cell_hidden,
                              drug_hidden=args.drug_hidden,
                              head_hidden=args.head_hidden,
                              keep_prob=args.keep_prob)
    params = NeuronParams(tau_ref=args.tau_ref, tau_rc=args.tau_rc,
                          v_th=args.v_th, gamma=args.gamma)
    doc = {
        "spec": network.spec_to_dict(spec),
        "neuron_params": {"tau_ref": params.tau_ref, "tau_rc": params.tau_rc,
                          "v_th": params.v_th, "gamma": params.gamma},
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    print(f"wrote network config to {args.out}")
    return 0


def cmd_train(args) -> int:
    spec, params = _load_network_config(args.spec)
    dataset = data_mod.load_csv(args.data, target_column=args.target)
    if dataset.n_features != spec.input_dim:
        raise ValueError(
            f"data has {dataset.n_features} features, network wants {spec.input_dim}"
        )
    train_ds, test_ds = data_mod.train_test_split(dataset, args.test_fraction,
                                                  seed=args.seed)
    cfg = training.TrainConfig(epochs=args.epochs, batch_size=args.batch,
                               learning_rate=args.lr, seed=args.seed)
    weights, history = training.train(spec, train_ds, cfg, params,
                                      eval_dataset=test_ds)
    network.save_model(args.out, spec, weights, params, kind="analog")
    history_path = args.history or args.out + ".history.csv"
    training.write_history(history_path, history)
    print(f"final train mse {history[-1][1]:.6g}, test mse {history[-1][2]:.6g}")
    print(f"wrote model to {args.out}, history to {history_path}")
    return 0


def cmd_infer(args) -> int:
    model = network.load_model(args.model)
    dataset = data_mod.load_csv(args.data, target_column=args.target)
    if dataset.n_features != model.spec.input_dim:
        raise ValueError(
            f"data has {dataset.n_features} features, model wants {model.spec.input_dim}"
        )
    sim = _sim_from_args(args)
    n_obs = len(dataset)

    def one_observation(row):
        return mcinfer.predictive_distribution(
            model.spec, model.weights, model.neuron_params,
            dataset.features[row], n_draws=args.draws,
            base_seed=args.seed + row * args.draws,
            backend=args.backend, sim=sim, observation_id=row,
        )

    threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sample_sets = list(pool.map(one_observation, range(n_obs)))
    else:
        sample_sets = [one_observation(row) for row in range(n_obs)]

    meta = {
        "backend": args.backend,
        "seed": args.seed,
        "draws": args.draws,
        "observations": n_obs,
        "seed_rule": "observation row uses base_seed = seed + row * draws; "
                     "draw k uses mask seed base_seed + k",
    }
    if args.backend == "spiking":
        meta.update({"dt": sim.dt, "steps": sim.n_steps, "burnin": sim.burn_in_steps,
                     "tausyn": sim.tau_syn, "v0_seed": sim.v0_seed})
    mcinfer.write_samples(args.out, sample_sets, meta)
    print(f"wrote {n_obs * args.draws} draws to {args.out}")
    return 0


def cmd_trace(args) -> int:
    model = network.load_model(args.model)
    dataset = data_mod.load_csv(args.data, target_column=args.target)
    if not (0 <= args.row < len(dataset)):
        raise ValueError(f"row {args.row} out of range [0, {len(dataset)})")
    observation = dataset.features[args.row]
    sim = _sim_from_args(args)

    masks = None if args.mask_seed is None else network.sample_masks(model.spec, args.mask_seed)
    analog_out, _ = network.forward(model.spec, model.weights, observation,
                                    masks, model.neuron_params)
    net = convert(model.spec, model.weights, model.neuron_params)
    trace = snn.simulate(net, observation, masks, sim)
    meta = {
        "row": args.row,
        "mask_seed": "none" if args.mask_seed is None else args.mask_seed,
        "dnn_output": repr(float(analog_out[0])),
        "post_burn_in_mean": repr(float(snn.summarize_trace(trace, sim.burn_in_steps))),
        "dt": sim.dt,
        "burnin": sim.burn_in_steps,
    }
    snn.write_trace(args.out, trace, meta)
    print(f"wrote {len(trace)} ticks to {args.out}")
    return 0


def cmd_compare(args) -> int:
    meta_a, groups_a = mcinfer.read_samples(args.a)
    meta_b, groups_b = mcinfer.read_samples(args.b)
    if set(groups_a) != set(groups_b):
        only_a = sorted(set(groups_a) - set(groups_b))
        only_b = sorted(set(groups_b) - set(groups_a))
        raise ValueError(
            f"observation ids differ between files (only in a: {only_a}, only in b: {only_b})"
        )

    per_obs = []
    pvalues = []
    for obs_id in sorted(groups_a):
        backend_a, draws_a = groups_a[obs_id]
        backend_b, draws_b = groups_b[obs_id]
        result = stats.ks_two_sample(draws_a, draws_b)
        pvalues.append(result.p_value)
        lo = min(draws_a.min(), draws_b.min())
        hi = max(draws_a.max(), draws_b.max())
        if lo == hi:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, 21)
        per_obs.append({
            "observation_id": obs_id,
            "d": result.statistic_d,
            "p_value": result.p_value,
            "n": result.n,
            "m": result.m,
            "histogram": {
                "bin_edges": edges.tolist(),
                f"counts_{backend_a}": np.histogram(draws_a, bins=edges)[0].tolist(),
                f"counts_{backend_b}": np.histogram(draws_b, bins=edges)[0].tolist(),
            },
        })

    uniformity = stats.pvalue_uniformity(pvalues)
    report = {
        "inputs": {"a": meta_a, "b": meta_b},
        "per_observation": per_obs,
        "uniformity": {
            "fraction_below_0.05": uniformity.fraction_below_005,
            "ks_vs_uniform_d": uniformity.ks_vs_uniform_d,
            "ks_vs_uniform_p": uniformity.ks_vs_uniform_p,
            "histogram_counts": uniformity.histogram.tolist(),
        },
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=1)
        f.write("\n")
    n_small = sum(1 for p in pvalues if p < 0.05)
    print(f"{len(pvalues)} observations compared; {n_small} with p < 0.05; "
          f"uniformity p = {uniformity.ks_vs_uniform_p:.4g}")
    print(f"wrote report to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedrop",
        description="Train a SoftLIF dropout regressor, transfer it to a spiking "
                    "network, and compare Monte-Carlo predictive distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-drug dataset CSV")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--cell-dim", type=int, default=8)
    p.add_argument("--drug-dim", type=int, default=8)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init-spec", help="write a two-drug network config JSON")
    p.add_argument("--cell-dim", type=int, default=8)
    p.add_argument("--drug-dim", type=int, default=8)
    p.add_argument("--cell-hidden", type=int, default=16)
    p.add_argument("--drug-hidden", type=int, default=16)
    p.add_argument("--head-hidden", type=int, default=32,
                   help="hidden head width; 0 = affine readout directly on the towers")
    p.add_argument("--keep-prob", type=float, default=0.9)
    p.add_argument("--tau-ref", type=float, default=0.002)
    p.add_argument("--tau-rc", type=float, default=0.02)
    p.add_argument("--v-th", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_spec)

    p = sub.add_parser("train", help="train an analog model on a CSV dataset")
    p.add_argument("--spec", required=True, help="network config JSON")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--target", default="target")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--history", default=None,
                   help="loss history CSV (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="Monte-Carlo dropout inference over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="target")
    p.add_argument("--backend", choices=mcinfer.BACKENDS, default="analog")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("trace", help="dump one spiking simulation's output potential")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="target")
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--mask-seed", type=int, default=None,
                   help="dropout mask seed (omit for a mask-free run)")
    p.add_argument("--out", required=True)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("compare", help="KS-compare two samples files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit 1 with a diagnostic
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
