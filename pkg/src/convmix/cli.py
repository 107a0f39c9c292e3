"""Command-line entry point.

Subcommands: embed, eval, proxy, theory, homophily, gen-synth. Each run
writes a JSON report plus plot-ready CSVs and PNG figures into the output
directory (default from CONVMIX_OUT or ./runs). A --config JSON file may
pre-set options; explicit flags win over the file.

Exit codes: 0 success, 1 ordering-equivalence violation (theory), 2 bad
configuration or dataset, 3 training failure (a partial report and any
finished embeddings are still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import figures
from .convselect import Step1Config, train_step1
from .densemath import derive_seed, seeded_rng
from .errors import (
    ConvmixError,
    InvalidArgument,
    NonFiniteGradient,
    NonFiniteLoss,
    ShapeMismatch,
)
from .evalkit import (
    ProbeConfig,
    ari,
    calinski_harabasz_detail,
    kmeans,
    linear_probe,
    mlp_probe,
    nmi,
)
from .graphstore import edge_homophily, load_dataset, save_dataset
from .refine import Step2Config, train_step2
from .report import (
    TOOL_VERSION,
    load_embedding,
    save_embedding,
    write_csv,
    write_report,
)
from .theory import (
    SyntheticConfig,
    cs_closed_form,
    gen_synthetic,
    lcs_closed_form,
    oracle_grid,
    proxy_experiment,
    theorem1_check,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_TRAINING = 3

_TRAINING_ERRORS = (NonFiniteLoss, NonFiniteGradient)


def _default_out() -> str:
    return os.environ.get("CONVMIX_OUT", "runs")


def _fail(code: int, exc: BaseException) -> int:
    print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InvalidArgument(f"config file {p} does not exist")
    with open(p) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise InvalidArgument("config file must hold a JSON object")
    return cfg


def _merge(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """Precedence: defaults < config file < explicit flags (None = unset)."""
    out = dict(defaults)
    out.update({k: v for k, v in file_cfg.items() if k in defaults})
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def stratified_split(labels: np.ndarray, fractions=(0.48, 0.32, 0.20),
                     seed: int = 0) -> dict[str, np.ndarray]:
    """Per-class train/val/test split over labeled nodes."""
    rng = seeded_rng(seed)
    train, val, test = [], [], []
    for cls in np.unique(labels[labels >= 0]):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_tr = max(1, int(round(fractions[0] * len(idx))))
        n_va = max(1, int(round(fractions[1] * len(idx))))
        train.extend(idx[:n_tr])
        val.extend(idx[n_tr:n_tr + n_va])
        test.extend(idx[n_tr + n_va:])
    return {"train": np.sort(np.asarray(train, dtype=np.int64)),
            "val": np.sort(np.asarray(val, dtype=np.int64)),
            "test": np.sort(np.asarray(test, dtype=np.int64))}


# --- embed ----------------------------------------------------------------------


def run_embed(data_dir, out_dir, master_seed=0, config_file=None,
              csv_copy=False, make_figures=True, **flag_overrides) -> dict:
    """Step 1 + Step 2 on a dataset directory; persists embeddings and report.

    Returns the report dict; raises on load/config errors. Training errors
    after Step 1 still persist H and a partial report before re-raising.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph = load_dataset(data_dir)
    file_cfg = _load_config_file(config_file)

    s1_defaults = {"clusters": graph.num_classes, "lam": 1.0, "epochs": 300,
                   "lr_logits": 0.01, "lr_centroids": 0.05, "pair_sample": None,
                   "pair_exact_threshold": 3000}
    s2_defaults = {"knn": 10, "tau": 1.0, "hidden": None, "epochs": 200,
                   "lr": 1e-3, "neg_exact_threshold": 3000, "neg_sample": None}
    # config files use the documented key names; map them onto the dataclasses
    file_s1 = dict(file_cfg.get("step1", {}))
    if "lambda" in file_s1:
        file_s1["lam"] = file_s1.pop("lambda")
    file_s2 = dict(file_cfg.get("step2", {}))
    if "lr_refiner" in file_s2:
        file_s2["lr"] = file_s2.pop("lr_refiner")
    s1 = _merge(s1_defaults, file_s1,
                {k[3:]: v for k, v in flag_overrides.items() if k.startswith("s1_")})
    s2 = _merge(s2_defaults, file_s2,
                {k[3:]: v for k, v in flag_overrides.items() if k.startswith("s2_")})
    if not s1["clusters"]:
        raise InvalidArgument("cluster count unknown: dataset meta lacks num_classes "
                              "and --clusters was not given")

    # per-step seeds derive from the master seed unless the config file pins them
    seed1 = file_s1.pop("seed", None)
    seed2 = file_s2.pop("seed", None)
    s1.pop("seed", None)
    s2.pop("seed", None)
    step1_cfg = Step1Config(
        seed=seed1 if seed1 is not None else derive_seed(master_seed, "step1"), **s1)
    step2_cfg = Step2Config(
        seed=seed2 if seed2 is not None else derive_seed(master_seed, "step2"), **s2)
    report = {
        "tool_version": TOOL_VERSION,
        "dataset": {"name": graph.name, "num_nodes": graph.num_nodes,
                    "feature_dim": graph.feature_dim,
                    "num_classes": graph.num_classes},
        "config": {"master_seed": master_seed, "step1": {**s1, "seed": step1_cfg.seed},
                   "step2": {**s2, "seed": step2_cfg.seed}},
        "timings": {},
    }

    t0 = time.perf_counter()
    res1 = train_step1(graph, step1_cfg)
    report["timings"]["step1_seconds"] = time.perf_counter() - t0
    report["alphas"] = res1.weights.alphas.tolist()
    report["logits"] = res1.weights.logits.tolist()
    report["step1_trace"] = res1.trace
    save_embedding(out, "H", res1.embeddings, csv_copy=csv_copy)
    write_csv(out / "step1_trace.csv", ["epoch", "l1", "l2", "l3", "total"],
              [(e, a, b, c, d) for e, (a, b, c, d) in enumerate(
                  zip(res1.trace["l1"], res1.trace["l2"],
                      res1.trace["l3"], res1.trace["total"]))])

    try:
        t0 = time.perf_counter()
        res2 = train_step2(res1.embeddings, step2_cfg)
        report["timings"]["step2_seconds"] = time.perf_counter() - t0
    except Exception as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        write_report(out / "report.json", report)
        raise

    save_embedding(out, "Z", res2.embeddings, csv_copy=csv_copy)
    report["step2_trace"] = res2.trace
    write_csv(out / "step2_trace.csv", ["epoch", "loss"],
              list(enumerate(res2.trace["total"])))

    hard = res1.assignment.hard
    ch_h = calinski_harabasz_detail(res1.embeddings, hard)
    ch_z = calinski_harabasz_detail(res2.embeddings, hard)
    report["ch_before_refinement"] = ch_h.score
    report["ch_after_refinement"] = ch_z.score
    report["ch_degenerate"] = ch_h.degenerate or ch_z.degenerate
    write_report(out / "report.json", report)

    if make_figures:
        figures.loss_trace_figure(res1.trace, out / "step1_trace.png",
                                  title="clustering loss")
        figures.loss_trace_figure(res2.trace, out / "step2_trace.png",
                                  title="refinement loss")
        figures.alpha_bar_figure(res1.weights.alphas, out / "alphas.png")
        if not (ch_h.degenerate or ch_z.degenerate):
            figures.ch_comparison_figure(ch_h.score, ch_z.score, out / "ch_gain.png")
    return report


def cmd_embed(args) -> int:
    try:
        flag_overrides = {
            "s1_clusters": args.clusters, "s1_lam": args.lam,
            "s1_epochs": args.epochs1, "s1_lr_logits": args.lr_logits,
            "s1_lr_centroids": args.lr_centroids, "s1_pair_sample": args.pair_sample,
            "s2_knn": args.knn, "s2_tau": args.tau, "s2_hidden": args.hidden,
            "s2_epochs": args.epochs2, "s2_lr": args.lr_refiner,
            "s2_neg_sample": args.neg_sample,
        }
        graph_dir = args.data
        out_dir = args.out or _default_out()
        run_embed(graph_dir, out_dir, master_seed=args.master_seed,
                  config_file=args.config, csv_copy=args.csv,
                  make_figures=not args.no_figures, **flag_overrides)
        return EXIT_OK
    except _TRAINING_ERRORS as exc:
        return _fail(EXIT_TRAINING, exc)
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


# --- eval -----------------------------------------------------------------------


def run_eval(embedding_path, data_dir, seeds, probe="mlp", out_dir=None,
             probe_config: ProbeConfig | None = None, restarts=10) -> dict:
    """Probes plus K-Means agreement metrics on a stored embedding."""
    graph = load_dataset(data_dir)
    z = load_embedding(embedding_path)
    if z.shape[0] != graph.num_nodes:
        raise ShapeMismatch(
            f"embedding has {z.shape[0]} rows, dataset has {graph.num_nodes} nodes")
    if graph.labels is None:
        raise InvalidArgument("evaluation requires labels")
    labels = graph.labels
    labeled = np.flatnonzero(labels >= 0)
    num_classes = graph.num_classes or len(np.unique(labels[labeled]))

    probe_fn = mlp_probe if probe == "mlp" else linear_probe
    base_cfg = probe_config or ProbeConfig()
    per_seed = {}
    nmis, aris, chs = [], [], []
    for s in seeds:
        if graph.splits:
            split = graph.splits[s % len(graph.splits)]
        else:
            split = stratified_split(labels, seed=derive_seed(s, "eval-split"))
        cfg = ProbeConfig(hidden=base_cfg.hidden, lr=base_cfg.lr,
                          weight_decay=base_cfg.weight_decay, epochs=base_cfg.epochs,
                          patience=base_cfg.patience, seed=derive_seed(s, "probe"))
        rep = probe_fn(z, labels, split, cfg)
        per_seed[s] = rep.accuracy.get("test", float("nan"))
        cl = kmeans(z, num_classes, restarts=restarts, seed=derive_seed(s, "kmeans"))
        nmis.append(nmi(cl.assignment[labeled], labels[labeled]))
        aris.append(ari(cl.assignment[labeled], labels[labeled]))
        chs.append(calinski_harabasz_detail(z, cl.assignment).score)

    accs = np.array(list(per_seed.values()), dtype=float)
    report = {
        "tool_version": TOOL_VERSION,
        "probe": {"kind": probe, "acc_mean": float(accs.mean()),
                  "acc_std": float(accs.std()),
                  "per_seed": {str(k): v for k, v in per_seed.items()}},
        "clustering": {"nmi_mean": float(np.mean(nmis)), "nmi_std": float(np.std(nmis)),
                       "ari_mean": float(np.mean(aris)), "ari_std": float(np.std(aris))},
        "ch_index": float(np.mean([c for c in chs if np.isfinite(c)]))
        if any(np.isfinite(c) for c in chs) else "inf",
        "config_echo": {"seeds": list(seeds), "probe": vars(base_cfg),
                        "kmeans_restarts": restarts, "num_classes": num_classes},
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_report(out / "eval_report.json", report)
        write_csv(out / "eval_per_seed.csv", ["seed", "test_acc", "nmi", "ari"],
                  [(s, per_seed[s], nmis[i], aris[i]) for i, s in enumerate(seeds)])
        figures.accuracy_bar_figure(per_seed, out / "eval_accuracy.png")
    return report


def cmd_eval(args) -> int:
    try:
        run_eval(args.embedding, args.data, args.seeds, probe=args.probe,
                 out_dir=args.out or _default_out(), restarts=args.restarts)
        return EXIT_OK
    except _TRAINING_ERRORS as exc:
        return _fail(EXIT_TRAINING, exc)
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


# --- proxy ----------------------------------------------------------------------


def cmd_proxy(args) -> int:
    try:
        out = Path(args.out or _default_out())
        graph = load_dataset(args.data)
        result = proxy_experiment(graph, trials=args.trials,
                                  train_frac=args.train_frac, seed=args.seed,
                                  ch_mode=args.ch_mode)
        out.mkdir(parents=True, exist_ok=True)
        pairs_csv = out / "proxy_pairs.csv"
        write_csv(pairs_csv, ["separability_index", "probe_accuracy"], result.pairs)
        report = {
            "tool_version": TOOL_VERSION,
            "proxy": {"rho": result.rho, "trials": args.trials,
                      "train_frac": args.train_frac, "ch_mode": result.ch_mode,
                      "pairs_csv_path": str(pairs_csv),
                      "low_trial_warning": result.low_trials},
            "config_echo": {"seed": args.seed, "data": str(args.data)},
        }
        write_report(out / "proxy_report.json", report)
        figures.proxy_scatter_figure(result.pairs, result.rho, out / "proxy_scatter.png")
        if result.low_trials:
            print("warning: fewer than 10 trials; rho is unreliable", file=sys.stderr)
        print(json.dumps({"rho": result.rho}))
        return EXIT_OK
    except _TRAINING_ERRORS as exc:
        return _fail(EXIT_TRAINING, exc)
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


# --- theory ----------------------------------------------------------------------


def cmd_theory(args) -> int:
    try:
        out = Path(args.out or _default_out())
        check = theorem1_check(args.n, args.n0, args.step)
        cells = oracle_grid(n=args.n, samples=args.samples, seed=args.seed)
        max_err = max(c.abs_err for c in cells)
        report = {
            "tool_version": TOOL_VERSION,
            "theorem1": {"n": args.n, "n0": args.n0, "step": args.step,
                         "region": list(check.region), "cases": check.cases,
                         "pass": check.passed, "violations": check.violations},
            "oracle": {"n": args.n, "samples": args.samples,
                       "grid": [{"n0": c.n0, "w": c.w, "closed_form": c.closed_form,
                                 "monte_carlo": c.monte_carlo} for c in cells],
                       "max_abs_err": max_err},
        }
        out.mkdir(parents=True, exist_ok=True)
        write_report(out / "theory_report.json", report)
        cs_vals = [cs_closed_form(SyntheticConfig(n=args.n, n0=args.n0, w=w, num_nodes=2))
                   for w in check.grid]
        lcs_vals = [lcs_closed_form(SyntheticConfig(n=args.n, n0=args.n0, w=w, num_nodes=2))
                    for w in check.grid]
        write_csv(out / "theory_curves.csv", ["w", "cs", "lcs"],
                  list(zip(check.grid, cs_vals, lcs_vals)))
        figures.theory_curves_figure(check.grid, cs_vals, lcs_vals,
                                     out / "theory_curves.png")
        print(json.dumps({"pass": check.passed, "cases": check.cases,
                          "max_oracle_err": max_err}))
        return EXIT_OK if check.passed else EXIT_VIOLATION
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


# --- homophily / gen-synth ----------------------------------------------------------


def cmd_homophily(args) -> int:
    try:
        graph = load_dataset(args.data)
        h = edge_homophily(graph)
        print(json.dumps({"dataset": graph.name, "num_nodes": graph.num_nodes,
                          "num_edges": graph.num_edges, "edge_homophily": h}))
        return EXIT_OK
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


def cmd_gen_synth(args) -> int:
    try:
        cfg = SyntheticConfig(n=args.n, n0=args.n0, mu=args.mu, sigma=args.sigma,
                              num_nodes=args.num_nodes)
        graph = gen_synthetic(cfg, seed=args.seed)
        save_dataset(graph, args.out)
        print(json.dumps({"dataset": graph.name, "num_nodes": graph.num_nodes,
                          "num_edges": graph.num_edges,
                          "edge_homophily": edge_homophily(graph),
                          "out": str(args.out)}))
        return EXIT_OK
    except ConvmixError as exc:
        return _fail(EXIT_CONFIG, exc)


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convmix",
                                description="adaptive graph-convolution embeddings")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("embed", help="run Step 1 + Step 2 on a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.add_argument("--config")
    e.add_argument("--master-seed", type=int, default=0)
    e.add_argument("--clusters", type=int)
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--epochs1", type=int)
    e.add_argument("--lr-logits", type=float)
    e.add_argument("--lr-centroids", type=float)
    e.add_argument("--pair-sample", type=int)
    e.add_argument("--knn", type=int)
    e.add_argument("--tau", type=float)
    e.add_argument("--hidden", type=int)
    e.add_argument("--epochs2", type=int)
    e.add_argument("--lr-refiner", type=float)
    e.add_argument("--neg-sample", type=int)
    e.add_argument("--csv", action="store_true")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_embed)

    v = sub.add_parser("eval", help="probe + cluster a stored embedding")
    v.add_argument("--embedding", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--out")
    v.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    v.add_argument("--probe", choices=["mlp", "linear"], default="mlp")
    v.add_argument("--restarts", type=int, default=10)
    v.set_defaults(func=cmd_eval)

    x = sub.add_parser("proxy", help="separability-vs-accuracy correlation")
    x.add_argument("--data", required=True)
    x.add_argument("--out")
    x.add_argument("--trials", type=int, default=100)
    x.add_argument("--train-frac", type=float, default=0.1)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--ch-mode", choices=["kmeans", "labels"], default="kmeans")
    x.set_defaults(func=cmd_proxy)

    t = sub.add_parser("theory", help="ordering-equivalence and oracle checks")
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--n0", type=int, required=True)
    t.add_argument("--step", type=float, default=0.05)
    t.add_argument("--samples", type=int, default=200_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out")
    t.set_defaults(func=cmd_theory)

    h = sub.add_parser("homophily", help="edge homophily of a dataset")
    h.add_argument("--data", required=True)
    h.set_defaults(func=cmd_homophily)

    g = sub.add_parser("gen-synth", help="write a synthetic two-class dataset")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--n0", type=int, required=True)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--num-nodes", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
