"""Command-line entry point: ``vsec-lda {synth,train,eval,report}``.

Every flag can also come from a JSON ``--config`` file keyed by the flag's
long name with dashes turned into underscores; flags win over the file and
the file wins over built-in defaults. The resolved settings are written to
``resolved_config.json`` in the output directory.

Exit codes: 0 ok, 1 invalid input, 2 I/O error, 3 count-consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from collections import OrderedDict
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .corpus import CONDITIONED, PRIMARY, ROLES, CorpusFormatError, load_corpus, save_corpus
from .evaluation import err_curve, evaluate
from .sampler import (
    Hyperparams,
    InvariantViolation,
    estimate_params,
    load_checkpoint,
    save_checkpoint,
    train_baseline,
    write_trace,
)
from .selection import ScheduleConfig, ThresholdState, train_vsec
from .synth import SynthConfig, generate_corpus, load_truth, save_truth

log = logging.getLogger("vsec_lda")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(ValueError):
    pass


SYNTH_DEFAULTS = {
    "k": 20, "c_rel": 800, "t_rel": 80, "c_irr": 200, "t_irr": 20, "docs": 8000,
    "alpha": 0.2, "beta": 0.1, "gamma": 0.1, "len_primary": 50, "len_conditioned": 5,
    "length_dist": "fixed", "irr_fraction": 0.2, "test_fraction": 0.1, "seed": 0,
}

TRAIN_DEFAULTS = {
    "corpus": None, "model": "vsec", "k": 20, "alpha": 0.2, "beta": 0.1, "gamma": 0.1,
    "zeta": 0.5, "epsilon": 1e-6, "max_iters": 150, "burn_in": 20, "threshold": "fixed",
    "filter": "primary,conditioned", "cap": 0.30, "cap_scope": "cumulative",
    "knee": "min_error", "reestimate": True, "reestimate_iters": 50, "min_words": None,
    "check": False, "seed": 0,
}

EVAL_DEFAULTS = {"corpus": None, "model_dir": None, "truth": None, "seed": 0}

REPORT_DEFAULTS = {"runs": None}


def _load_config(path):
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return obj


def resolve(args, defaults: dict) -> dict:
    """flags > config file > defaults."""
    config = _load_config(args.config)
    unknown = sorted(set(config) - set(defaults) - {"out"})
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key, default)
    out["out"] = args.out if args.out is not None else config.get("out")
    if out["out"] is None:
        raise UsageError("--out is required")
    return out


def _write_json(path: Path, obj, indent=1):
    path.write_text(json.dumps(obj, indent=indent, sort_keys=False) + "\n", encoding="utf-8")


def _outdir(resolved, command: str) -> Path:
    """Create the output directory and record the settings under ``command``.

    Commands sharing a directory (train then eval) each keep their entry.
    """
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.json"
    record = {}
    if path.is_file():
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            record = {}
    record[command] = resolved
    _write_json(path, record)
    return out


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


# -- synth ----------------------------------------------------------------------


def cmd_synth(args) -> int:
    r = resolve(args, SYNTH_DEFAULTS)
    config = SynthConfig(
        K=r["k"], C_rel=r["c_rel"], T_rel=r["t_rel"], C_irr=r["c_irr"], T_irr=r["t_irr"],
        D=r["docs"], alpha=r["alpha"], beta=r["beta"], gamma=r["gamma"],
        len_primary=r["len_primary"], len_conditioned=r["len_conditioned"],
        length_dist=r["length_dist"], irr_fraction=r["irr_fraction"],
        seed=r["seed"], test_fraction=r["test_fraction"],
    )
    out = _outdir(r, "synth")
    corpus, truth = generate_corpus(config)
    save_corpus(corpus, out)
    save_truth(truth, out / "truth.json", config)
    n_test = len(corpus.indices("test"))
    log.info(
        "D=%d (train %d / test %d), primary vocabulary %d, conditioned vocabulary %d",
        len(corpus), len(corpus) - n_test, n_test,
        len(corpus.vocab_primary), len(corpus.vocab_conditioned),
    )
    return EXIT_OK


# -- train ----------------------------------------------------------------------


def _filter_modalities(value: str) -> tuple[str, ...]:
    if value.strip().lower() == "none":
        return ()
    roles = tuple(s.strip() for s in value.split(",") if s.strip())
    bad = [s for s in roles if s not in ROLES]
    if bad or not roles:
        raise UsageError(f"--filter expects 'none' or a list from {ROLES}, got {value!r}")
    return roles


def cmd_train(args) -> int:
    r = resolve(args, TRAIN_DEFAULTS)
    if r["corpus"] is None:
        raise UsageError("--corpus is required")
    if r["model"] not in ("baseline", "vsec"):
        raise UsageError("--model must be 'baseline' or 'vsec'")
    hyper = Hyperparams(
        K=r["k"], alpha=r["alpha"], beta=r["beta"], gamma=r["gamma"], zeta=r["zeta"],
        max_iters=r["max_iters"], epsilon=r["epsilon"], seed=r["seed"],
    )
    corpus = load_corpus(r["corpus"])
    ts = schedule = None
    if r["model"] == "vsec":
        ts = ThresholdState(
            mode=r["threshold"], cap_fraction=r["cap"], cap_scope=r["cap_scope"], knee=r["knee"]
        )
        schedule = ScheduleConfig(
            burn_in=r["burn_in"], max_iters=r["max_iters"],
            filter_modalities=_filter_modalities(r["filter"]),
            reestimate=r["reestimate"], reestimate_iters=r["reestimate_iters"],
            min_words=r["min_words"],
        )
    out = _outdir(r, "train")
    if r["model"] == "baseline":
        state, params, trajectory = train_baseline(corpus, hyper, check=r["check"])
        extra = {"model": "baseline"}
    else:
        state, params, report, trajectory, ts = train_vsec(
            corpus, hyper, ts, schedule, check=r["check"]
        )
        report.save(out / "selection.json")
        extra = {"model": "vsec", "threshold_state": asdict(ts)}
    save_checkpoint(state, hyper, out / "model.json", extra=extra)
    write_trace(trajectory, out / "trace.csv")
    log.info(
        "done after %d sweeps; active words primary %d, conditioned %d",
        state.iteration, int(params.active_primary.sum()), int(params.active_conditioned.sum()),
    )
    return EXIT_OK


# -- eval -----------------------------------------------------------------------


def cmd_eval(args) -> int:
    r = resolve(args, EVAL_DEFAULTS)
    if r["corpus"] is None or r["model_dir"] is None:
        raise UsageError("--corpus and --model-dir are required")
    state, hyper, _ = load_checkpoint(Path(r["model_dir"]) / "model.json")
    corpus = load_corpus(r["corpus"])
    for role, mask in ((PRIMARY, state.active_primary), (CONDITIONED, state.active_conditioned)):
        if len(corpus.vocab(role)) != len(mask):
            raise UsageError(
                f"{role} vocabulary size differs: corpus {len(corpus.vocab(role))}, "
                f"checkpoint {len(mask)}"
            )
    truth_path = Path(r["truth"]) if r["truth"] else Path(r["corpus"]) / "truth.json"
    truth = load_truth(truth_path) if truth_path.exists() else None
    out = _outdir(r, "eval")
    params = estimate_params(state, hyper)
    metrics, rank_rows, D_test = evaluate(params, hyper, corpus, seed=r["seed"], truth=truth)
    (out / "eval.json").write_text(
        json.dumps(metrics, indent=1, default=_json_default) + "\n", encoding="utf-8"
    )
    with open(out / "ranks.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "rank", "D_test"])
        w.writerows(rank_rows)
    ranks = [row[1] for row in rank_rows]
    with open(out / "err_curve.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["e", "err_rate"])
        for e, rate in err_curve(ranks, D_test) if ranks else []:
            w.writerow([f"{e:.2f}", repr(rate)])
    log.info(
        "perplexity %.4f, recall@10%% %s, held-out scores %.4f / %.4f",
        metrics["perplexity"], metrics["recall_at_10pct"],
        metrics["score_primary"], metrics["score_conditioned"],
    )
    return EXIT_OK


# -- report ---------------------------------------------------------------------

_SEED_SUFFIX = re.compile(r"[-_.]?(seed|s)\d+$")


def run_group(name: str) -> str:
    """Run name with a trailing seed tag (``-seed3``, ``_s12``) removed."""
    stripped = _SEED_SUFFIX.sub("", name)
    return stripped or name


def _flatten(obj, prefix=""):
    out = OrderedDict()
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_report(args) -> int:
    r = resolve(args, REPORT_DEFAULTS)
    runs = r["runs"] or []
    rows, curves = [], {}
    for run in runs:
        path = Path(run)
        ev = path / "eval.json"
        if not ev.is_file():
            log.warning("skipping %s: no eval.json", run)
            continue
        metrics = _flatten(json.loads(ev.read_text(encoding="utf-8")))
        rows.append((path.name or str(path), metrics))
        trace = path / "trace.csv"
        if trace.is_file():
            with open(trace, newline="", encoding="utf-8") as fh:
                curves[path.name] = list(csv.DictReader(fh))
    if not rows:
        raise UsageError("no run directory with eval.json")
    names = [n for n, _ in rows]
    if len(set(names)) != len(names):
        raise UsageError("run directory names must be unique")
    out = _outdir(r, "report")

    columns = []
    for _, m in rows:
        columns += [k for k in m if k not in columns]
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run"] + columns)
        for name, m in rows:
            w.writerow([name] + [_fmt(m.get(c)) for c in columns])

    groups = OrderedDict()
    for name, m in rows:
        groups.setdefault(run_group(name), []).append(m)
    numeric = [
        c for c in columns
        if all(isinstance(m.get(c), (int, float)) and not isinstance(m.get(c), bool)
               for _, m in rows if m.get(c) is not None)
        and any(m.get(c) is not None for _, m in rows)
    ]
    summary = []
    for group, ms in groups.items():
        row = {"group": group, "n_runs": len(ms)}
        for c in numeric:
            vals = np.asarray([m[c] for m in ms if m.get(c) is not None], dtype=float)
            if vals.size == 0:
                row[c] = (None, None)
                continue
            std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            row[c] = (float(vals.mean()), std)
        summary.append(row)
    with open(out / "report_summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "n_runs"] + [f"{c}{s}" for c in numeric for s in (".mean", ".std")])
        for row in summary:
            cells = [row["group"], row["n_runs"]]
            for c in numeric:
                cells += [_fmt(x) for x in row[c]]
            w.writerow(cells)

    if curves:
        n = max(len(v) for v in curves.values())
        with open(out / "curves.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["iter"]
            for name in curves:
                header += [f"{name}.score_primary", f"{name}.score_conditioned"]
            w.writerow(header)
            for i in range(n):
                cells = [i + 1]
                for trace in curves.values():
                    if i < len(trace):
                        cells += [trace[i]["score_primary"], trace[i]["score_conditioned"]]
                    else:
                        cells += ["", ""]
                w.writerow(cells)

    shown = [c for c in (
        "perplexity", "score_primary", "score_conditioned", "recall_at_10pct",
        "selection.primary.irrelevant_removed", "selection.conditioned.irrelevant_removed",
        "selection.primary.relevant_removed", "selection.conditioned.relevant_removed",
    ) if c in numeric]
    table = [["group", "n"] + shown]
    for row in summary:
        cells = [row["group"], str(row["n_runs"])]
        for c in shown:
            mean, std = row[c]
            if mean is None:
                cells.append("-")
            elif row["n_runs"] > 1:
                cells.append(f"{mean:.4g} ± {std:.2g}")
            else:
                cells.append(f"{mean:.4g}")
        table.append(cells)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    text = "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in table)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _shared(p):
    p.add_argument("--seed", type=int, default=None, help="RNG seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--config", default=None, help="JSON file of flag values")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsec-lda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    _shared(p)
    p.add_argument("--k", type=int)
    p.add_argument("--c-rel", type=int, help="relevant primary words")
    p.add_argument("--t-rel", type=int, help="relevant conditioned words")
    p.add_argument("--c-irr", type=int, help="irrelevant primary words")
    p.add_argument("--t-irr", type=int, help="irrelevant conditioned words")
    p.add_argument("--docs", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--len-primary", type=int)
    p.add_argument("--len-conditioned", type=int)
    p.add_argument("--length-dist", choices=("fixed", "poisson"))
    p.add_argument("--irr-fraction", type=float)
    p.add_argument("--test-fraction", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a baseline or VSEC model")
    _shared(p)
    p.add_argument("--corpus", help="corpus directory")
    p.add_argument("--model", choices=("baseline", "vsec"))
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--zeta", type=float, help="plateau / convergence threshold")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--threshold", choices=("fixed", "dynamic"))
    p.add_argument("--filter", help="'primary,conditioned', one of them, or 'none'")
    p.add_argument("--cap", type=float, help="max fraction of the vocabulary removed")
    p.add_argument("--cap-scope", choices=("cumulative", "round"))
    p.add_argument("--knee", choices=("min_error", "gap"))
    p.add_argument("--no-reestimate", dest="reestimate", action="store_const", const=False)
    p.add_argument("--reestimate-iters", type=int)
    p.add_argument("--min-words", type=int)
    p.add_argument("--check", action="store_const", const=True,
                   help="audit count matrices after every sweep and filter")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out metrics for a trained model")
    _shared(p)
    p.add_argument("--corpus", help="corpus directory")
    p.add_argument("--model-dir", help="directory holding model.json")
    p.add_argument("--truth", help="ground truth (default: <corpus>/truth.json if present)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare evaluated runs")
    _shared(p)
    p.add_argument("runs", nargs="*", default=None, help="run directories")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report" and not args.runs:
        args.runs = None
    root = logging.getLogger()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        log.error("count audit failed: %s", exc)
        return EXIT_INVARIANT
    except (CorpusFormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
