"""Command-line entry point.

Subcommands:

    theory gamma   print the closed-form optimum for a task
    theory curves  closed-form + fitted error curves as CSV
    synth          train a scalar-head transformer and sweep test lengths
    lm             train a byte LM with the combined loss
    metric         misalignment estimate for a checkpoint on a corpus
    grid           the variant-grid correlation experiment

Configuration precedence is exact: built-in defaults < --config JSON file <
explicitly passed flags. Unknown config keys are rejected. The output
directory defaults to ./out, the LONGSHORT_OUT environment variable
overrides that default, and --out wins over both. Exit codes: 0 success,
1 runtime failure, 2 usage error. Every command is deterministic under
--seed; all randomness is split from it by purpose label (see seeding).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .artifacts import write_csv, write_json
from .experiment import GridConfig, VariantSpec, ingest_corpus, run_grid
from .misalign import MisalignConfig, misalign_estimate
from .model import PE_KINDS, lm_config, load_checkpoint, save_checkpoint, synthetic_config
from .seeding import stream
from .tasks import REPARAM_KINDS, SCHEMES, TASKS, Reparameterization, dump_jsonl, sample_batch
from .theory import (
    achieved_mean_eps,
    fit_linear,
    gamma_star,
    gen_error,
    measured_gen_error,
)
from .training import TrainConfig, eval_length_curve, train_lm, train_synthetic

__all__ = ["main", "build_parser"]


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("LONGSHORT_OUT") or "out"
    path = Path(out).resolve()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_int_list(text) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def _parse_float_list(text) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok != ""]


def _parse_str_list(text) -> list[str]:
    return [tok for tok in str(text).split(",") if tok != ""]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_theory_gamma(args) -> int:
    print(repr(gamma_star(args.task, args.l_train)))
    return 0


def cmd_theory_curves(args) -> int:
    out = _out_dir(args)
    l_tests = _parse_int_list(args.l_tests) if args.l_tests else list(
        range(args.l_train + 1, args.l_test_max + 1))
    fit = fit_linear(args.task, args.l_train)
    gstar = gamma_star(args.task, args.l_train)
    eps = achieved_mean_eps(fit.params) if args.task == "mean" else 0.0
    rows = []
    for lt in l_tests:
        closed = gen_error(args.task, args.l_train, lt, eps=eps)
        measured = measured_gen_error(args.task, lt, fit.params)
        rows.append((args.task, args.l_train, lt, gstar, fit.implied_gamma, closed, measured))
    path = out / "theory.csv"
    write_csv(path, ["task", "l_train", "l_test", "gamma_star", "gamma_fitted",
                     "gen_error_closed", "gen_error_measured"], rows)
    print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args)
    reparam = Reparameterization(kind=args.reparam)
    mcfg = synthetic_config(args.pe, seed=args.seed)
    tcfg = TrainConfig(model=mcfg, task=args.task, scheme=args.scheme, reparam=reparam,
                       steps=args.steps, batch_size=args.batch, lr=args.lr,
                       l_train=args.l_train, seed=args.seed)
    model, report = train_synthetic(tcfg)
    curve = eval_length_curve(model, args.task, reparam, list(range(1, args.l_test + 1)),
                              args.n_per_length, args.scheme, seed=args.seed)
    report.to_csv(out / "synth_train.csv")
    curve.to_csv(out / "synth_curve.csv")
    save_checkpoint(model, out / "synth_model.ckpt")
    report.checkpoint_path = str(out / "synth_model.ckpt")
    if args.dump_data:
        rng = stream(args.seed, "dump-data")
        samples = sample_batch(args.task, args.scheme, (1, args.l_train), args.dump_data_n,
                               rng, reparam)
        dump_jsonl(samples, args.task, args.scheme, out / "synth_data.jsonl")
    print(f"wrote {out / 'synth_curve.csv'}")
    return 0


def cmd_lm(args) -> int:
    out = _out_dir(args)
    corpus = ingest_corpus(args.corpus, args.split_fraction)
    mcfg = lm_config(args.pe, seed=args.seed, d_model=args.d_model,
                     n_layers=args.n_layers, n_heads=args.n_heads)
    tcfg = TrainConfig(model=mcfg, steps=args.steps, batch_size=args.batch, lr=args.lr,
                       alpha=args.alpha, l_train=args.l_train, seed=args.seed,
                       sce_variant=args.sce_variant)
    model, report = train_lm(tcfg, corpus.train_tokens)
    report.to_csv(out / "lm_train.csv")
    save_checkpoint(model, out / "lm_model.ckpt")
    report.checkpoint_path = str(out / "lm_model.ckpt")
    print(f"wrote {out / 'lm_train.csv'}")
    return 0


def cmd_metric(args) -> int:
    out = _out_dir(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = load_checkpoint(ckpt)
    corpus = ingest_corpus(args.corpus, args.split_fraction)
    variant = "sce" if args.variant == "appendix-e" else args.variant
    sce_variant = "appendix-e" if args.variant == "appendix-e" else args.sce_variant
    cfg = MisalignConfig(l_train=args.l_train, variant=variant, sce_variant=sce_variant,
                         n_samples=args.n_samples)
    report = misalign_estimate(model, corpus.val_tokens, cfg,
                               stream(args.seed, "metric"), seed=args.seed)
    path = out / "metric.json"
    write_json(path, report.to_dict())
    print(f"wrote {path}")
    return 0


def cmd_grid(args) -> int:
    out = _out_dir(args)
    corpus = ingest_corpus(args.corpus, args.split_fraction)
    pes = _parse_str_list(args.pes)
    alphas = _parse_float_list(args.alphas)
    for pe in pes:
        if pe not in PE_KINDS:
            raise ValueError(f"unknown positional encoding {pe!r}")
    variants = []
    idx = 0
    for pe in pes:
        for alpha in alphas:
            variants.append(VariantSpec(label=f"{pe}-a{alpha:g}", pe_kind=pe, alpha=alpha,
                                        l_train=args.l_train, seed=args.seed + idx))
            idx += 1
    grid = GridConfig(d_model=args.d_model, n_layers=args.n_layers, n_heads=args.n_heads,
                      steps=args.steps, batch_size=args.batch, lr=args.lr,
                      metric_samples=args.metric_samples, ppl_windows=args.ppl_windows)
    report = run_grid(variants, corpus, _parse_int_list(args.eval_lengths), grid,
                      progress=lambda msg: print(msg, file=sys.stderr))
    report.to_csv(out / "grid.csv")
    report.to_json(out / "grid.json")
    print(f"wrote {out / 'grid.csv'}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring: defaults live in per-command dicts so that the merge order
# defaults < config file < explicit flags is exact (argparse.SUPPRESS keeps
# unprovided flags out of the namespace entirely)
# ---------------------------------------------------------------------------


class _Cmd:
    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict = {}

    def opt(self, *names, default=None, required=False, **kwargs):
        dest = names[0].lstrip("-").replace("-", "_")
        if not required:
            self.defaults[dest] = default
        self.parser.add_argument(*names, default=argparse.SUPPRESS, required=required, **kwargs)

    def flag(self, *names, **kwargs):
        dest = names[0].lstrip("-").replace("-", "_")
        self.defaults[dest] = False
        self.parser.add_argument(*names, default=argparse.SUPPRESS, action="store_true", **kwargs)

    def finish(self, func):
        self.opt("--seed", default=0, type=int)
        self.opt("--out", help="output directory (default ./out or $LONGSHORT_OUT)")
        self.opt("--config", help="JSON config file; explicit flags win")
        self.parser.set_defaults(_func=func, _defaults=self.defaults)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longshort", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    theory = sub.add_parser("theory", help="linear-attention closed forms and curves")
    tsub = theory.add_subparsers(dest="subcommand", required=True)

    tg = _Cmd(tsub.add_parser("gamma", help="print the closed-form optimum"))
    tg.opt("--task", choices=TASKS, required=True)
    tg.opt("--l-train", type=int, required=True)
    tg.finish(cmd_theory_gamma)

    tc = _Cmd(tsub.add_parser("curves", help="closed-form vs fitted error curves"))
    tc.opt("--task", choices=TASKS, required=True)
    tc.opt("--l-train", default=10, type=int)
    tc.opt("--l-test-max", default=50, type=int)
    tc.opt("--l-tests", help="comma-separated test lengths")
    tc.finish(cmd_theory_curves)

    sy = _Cmd(sub.add_parser("synth", help="synthetic-task training and length sweep"))
    sy.opt("--task", choices=TASKS, required=True)
    sy.opt("--pe", default="nope", choices=PE_KINDS)
    sy.opt("--reparam", default="identity", choices=REPARAM_KINDS)
    sy.opt("--scheme", default="bernoulli-half", choices=SCHEMES)
    sy.opt("--l-train", default=10, type=int)
    sy.opt("--l-test", default=50, type=int)
    sy.opt("--steps", default=5000, type=int)
    sy.opt("--batch", default=128, type=int)
    sy.opt("--lr", default=1e-3, type=float)
    sy.opt("--n-per-length", default=512, type=int)
    sy.flag("--dump-data", help="also dump a JSONL sample batch")
    sy.opt("--dump-data-n", default=256, type=int)
    sy.finish(cmd_synth)

    lm = _Cmd(sub.add_parser("lm", help="combined-loss LM training"))
    lm.opt("--corpus", required=True)
    lm.opt("--split-fraction", default=0.9, type=float)
    lm.opt("--pe", default="nope", choices=PE_KINDS)
    lm.opt("--alpha", default=0.0, type=float)
    lm.opt("--l-train", default=128, type=int)
    lm.opt("--steps", default=2000, type=int)
    lm.opt("--batch", default=32, type=int)
    lm.opt("--lr", default=3e-4, type=float)
    lm.opt("--d-model", default=128, type=int)
    lm.opt("--n-layers", default=4, type=int)
    lm.opt("--n-heads", default=4, type=int)
    lm.opt("--sce-variant", default="paper", choices=("paper", "appendix-e"))
    lm.finish(cmd_lm)

    me = _Cmd(sub.add_parser("metric", help="misalignment estimate for a checkpoint"))
    me.opt("--checkpoint", required=True)
    me.opt("--corpus", required=True)
    me.opt("--split-fraction", default=0.9, type=float)
    me.opt("--variant", default="sce", choices=("sce", "l2", "appendix-e"))
    me.opt("--sce-variant", default="paper", choices=("paper", "appendix-e"))
    me.opt("--l-train", default=128, type=int)
    me.opt("--n-samples", default=1024, type=int)
    me.finish(cmd_metric)

    gr = _Cmd(sub.add_parser("grid", help="variant-grid correlation experiment"))
    gr.opt("--corpus", required=True)
    gr.opt("--split-fraction", default=0.9, type=float)
    gr.opt("--pes", default="nope,rope")
    gr.opt("--alphas", default="0,0.1")
    gr.opt("--l-train", default=128, type=int)
    gr.opt("--eval-lengths", default="512")
    gr.opt("--steps", default=2000, type=int)
    gr.opt("--batch", default=32, type=int)
    gr.opt("--lr", default=3e-4, type=float)
    gr.opt("--d-model", default=128, type=int)
    gr.opt("--n-layers", default=4, type=int)
    gr.opt("--n-heads", default=4, type=int)
    gr.opt("--metric-samples", default=1024, type=int)
    gr.opt("--ppl-windows", default=32, type=int)
    gr.finish(cmd_grid)

    return parser


def _resolve_args(ns: argparse.Namespace) -> argparse.Namespace:
    values = dict(ns._defaults)
    provided = {k: v for k, v in vars(ns).items()
                if k not in {"_func", "_defaults", "command", "subcommand"}}
    config_path = provided.get("config", values.get("config"))
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
        known = set(values) | set(provided)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        values.update(doc)
    values.update(provided)
    return argparse.Namespace(**values)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        args = _resolve_args(ns)
        return ns._func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
