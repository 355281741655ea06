"""Command-line entry point: ``fedkern <command> [options]``.

Commands
  train         federated training, metrics CSV + model summary JSON
  oracle        the centralized reference run, same CSV layout
  kernel-check  random-feature kernel approximation error vs m
  comm-bench    tree / star / ring global-sum schedules
  audit         semi-honest adversary suite (exit 4 on any failed verdict)

Options may also come from ``--config FILE`` (``key=value`` lines, keys
named like the long flags); flags win over the file. ``FEDKERN_SEED`` is
used when no seed is given either way.

Exit codes: 0 ok, 2 bad configuration, 3 protocol abort, 4 audit failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import audit as audit_mod
from .comm import Network, build_tree, ring_sum, star_sum, tree_sum
from .dataio import make_circles, make_vertical, make_xor, parse_sparse_file, samples_from_arrays
from .engine import TrainConfig, train_centralized, train_federated
from .errors import ConfigError, FedkernError, ProtocolError
from .loss import LossSpec
from .rff import KernelSpec, approximation_errors

SCHEMA_VERSION = 1
METRIC_COLUMNS = ("schema_version", "iter", "time_ms", "train_loss", "test_error", "messages", "bytes")
EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_AUDIT = 0, 2, 3, 4

DEFAULTS = {
    "dataset": "circles",
    "n": 2000,
    "dim": 8,
    "train_ratio": 0.75,
    "partition": "contiguous",
    "workers": 4,
    "kernel": "rbf",
    "sigma": 0.5,
    "loss": "logistic",
    "gamma": 0.1,
    "lam": 2e-3,
    "iters": 1000,
    "seed": 0,
    "eval_every": 100,
    "time_budget": None,
    "output": None,
    "summary": None,
    "ms": "64,128,256,512,1024,2048,4096,8192,16384",
    "grid": 20,
    "kernel_seeds": 5,
    "latency_message": 0.5,
    "latency_round": 2.0,
    "inject": None,
    "audit_n": 2000,
    "equations": 50,
    "bench_workers": "2,4,8,16",
}
_INT = {"n", "dim", "workers", "iters", "seed", "eval_every", "grid", "kernel_seeds", "audit_n", "equations"}
_FLOAT = {"train_ratio", "sigma", "gamma", "lam", "time_budget", "latency_message", "latency_round"}
_ALIASES = {"lambda": "lam", "iterations": "iters", "q": "workers", "eval-every": "eval_every"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser():
    p = _Parser(prog="fedkern", description="Vertically federated kernel learning with random features.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True, train=True):
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output", "-o", help="output path (default: stdout)")
        sp.add_argument("--workers", "-q", type=int)
        if data:
            sp.add_argument("--dataset", help="circles, xor, or a path to a sparse label/index:value file")
            sp.add_argument("--n", type=int, help="synthetic sample count")
            sp.add_argument("--dim", type=int, help="synthetic feature count")
            sp.add_argument("--train-ratio", dest="train_ratio", type=float)
            sp.add_argument("--partition", choices=["contiguous", "round-robin"])
        if train:
            sp.add_argument("--kernel", choices=["rbf", "gaussian-rbf", "laplace"])
            sp.add_argument("--sigma", type=float)
            sp.add_argument("--loss", choices=["logistic", "smooth-hinge", "square"])
            sp.add_argument("--gamma", type=float)
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--iters", type=int)
            sp.add_argument("--eval-every", dest="eval_every", type=int)
            sp.add_argument("--time-budget", dest="time_budget", type=float, help="seconds of training time")
            sp.add_argument("--summary", help="model summary JSON path (default: next to --output)")

    common(sub.add_parser("train", help="federated training"))
    common(sub.add_parser("oracle", help="centralized reference training"))
    kc = sub.add_parser("kernel-check", help="kernel approximation error")
    common(kc, data=False, train=False)
    kc.add_argument("--kernel", choices=["rbf", "gaussian-rbf", "laplace"])
    kc.add_argument("--sigma", type=float)
    kc.add_argument("--dim", type=int)
    kc.add_argument("--ms", help="comma-separated feature counts")
    kc.add_argument("--grid", type=int, help="number of point pairs")
    kc.add_argument("--kernel-seeds", dest="kernel_seeds", type=int)
    cb = sub.add_parser("comm-bench", help="communication structure benchmark")
    cb.add_argument("--config")
    cb.add_argument("--output", "-o")
    cb.add_argument("--workers", "-q", dest="bench_workers", help="worker count or comma-separated list")
    cb.add_argument("--latency-message", dest="latency_message", type=float, help="ms per message")
    cb.add_argument("--latency-round", dest="latency_round", type=float, help="ms per synchronous round")
    au = sub.add_parser("audit", help="privacy audit")
    common(au, data=False, train=False)
    au.add_argument("--inject", choices=sorted(k for k in audit_mod.INJECTIONS if k))
    au.add_argument("--n", dest="audit_n", type=int, help="observations for the mask statistics")
    au.add_argument("--equations", type=int, help="equations per attack")
    return p


def read_config(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = _ALIASES.get(k, k).replace("-", "_")
            if k not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = v
    return out


def _coerce(k, v):
    if v is None or v == "":
        return None
    try:
        if k in _INT:
            return int(v)
        if k in _FLOAT:
            return float(v)
    except ValueError:
        raise ConfigError(f"{k}: cannot parse {v!r}") from None
    return v


def resolve(args, environ=None):
    """Merge flags > config file > FEDKERN_SEED > built-in defaults."""
    environ = os.environ if environ is None else environ
    cfg = dict(DEFAULTS)
    from_file = read_config(args.config) if args.config else {}
    if environ.get("FEDKERN_SEED"):
        cfg["seed"] = environ["FEDKERN_SEED"]
    cfg.update(from_file)
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    cfg = {k: _coerce(k, v) if isinstance(v, str) else v for k, v in cfg.items()}
    cfg["command"] = args.command
    return cfg


def load_data(c):
    """The configured dataset split across ``workers``."""
    if c["workers"] is None or c["workers"] < 1:
        raise ConfigError("--workers must be >= 1")
    name = c["dataset"]
    if name in ("circles", "xor"):
        gen = make_circles if name == "circles" else make_xor
        X, y = gen(c["n"], d=c["dim"], seed=c["seed"])
        samples = samples_from_arrays(X, y)
    else:
        if not os.path.exists(name):
            raise ConfigError(f"dataset {name!r} is neither a built-in generator nor a readable file")
        samples = parse_sparse_file(name)
    return make_vertical(samples, c["workers"], c["train_ratio"], c["seed"], c["partition"])


def train_config(c):
    cfg = TrainConfig(
        gamma=c["gamma"],
        lam=c["lam"],
        iterations=c["iters"],
        loss=LossSpec(c["loss"]),
        kernel=KernelSpec(c["kernel"], c["sigma"]),
        q=c["workers"],
        seed=c["seed"],
    )
    return cfg.validate()


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def write_csv(path, columns, rows):
    fh, close = _open_out(path)
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({"schema_version": SCHEMA_VERSION, **r})
    finally:
        if close:
            fh.close()


def write_json(path, obj):
    obj = {"schema_version": SCHEMA_VERSION, **obj}
    text = json.dumps(obj, indent=2, sort_keys=False, default=_json_default, ensure_ascii=False)
    if path is None or path == "-":
        print(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _summary_path(c):
    if c["summary"]:
        return c["summary"]
    if c["output"] and c["output"] != "-":
        return os.path.splitext(c["output"])[0] + ".json"
    return None


def run_train(c):
    data = load_data(c)
    cfg = train_config(c)
    shards, metrics, fed = train_federated(data, cfg, eval_every=c["eval_every"], time_budget=c["time_budget"])
    write_csv(c["output"], METRIC_COLUMNS, metrics.rows)
    final = fed.evaluate_test_error() if data.test and cfg.loss.classification else None
    summary = {
        "command": "train",
        "iterations": fed.t,
        "workers": [{"worker": s.owner, "n_coefficients": len(s), "l1_norm": float(np.abs(s.values).sum())} for s in shards],
        "l1_norm": float(sum(np.abs(s.values).sum() for s in shards)),
        "final_test_error": final,
        "messages": fed.net.ledger.messages,
        "bytes": fed.net.ledger.bytes,
        "train_seconds": metrics.train_seconds,
    }
    path = _summary_path(c)
    if path:
        write_json(path, summary)
    return EXIT_OK


def run_oracle(c):
    data = load_data(c)
    cfg = train_config(c)
    model = train_centralized(data, cfg, eval_every=c["eval_every"], time_budget=c["time_budget"])
    write_csv(c["output"], METRIC_COLUMNS, model.rows)
    path = _summary_path(c)
    if path:
        final = model.error(*data.matrix("test")) if data.test and cfg.loss.classification else None
        write_json(path, {"command": "oracle", "iterations": len(model.alphas), "l1_norm": model.l1_norm, "final_test_error": final})
    return EXIT_OK


def run_kernel_check(c):
    spec = KernelSpec(c["kernel"], c["sigma"])
    try:
        ms = [int(m) for m in str(c["ms"]).split(",") if m.strip()]
    except ValueError:
        raise ConfigError(f"--ms: expected comma-separated integers, got {c['ms']!r}") from None
    if not ms or min(ms) < 1:
        raise ConfigError("--ms needs positive feature counts")
    rows = approximation_errors(spec, ms, d=c["dim"], n_points=c["grid"], seeds=range(c["seed"], c["seed"] + c["kernel_seeds"]))
    write_csv(
        c["output"],
        ("schema_version", "m", "mean_abs_error", "max_abs_error"),
        [{"m": m, "mean_abs_error": a, "max_abs_error": b} for m, a, b in rows],
    )
    return EXIT_OK


def comm_bench_rows(qs, latency_message=0.5, latency_round=2.0):
    """One global sum of ones per structure; latency = messages*c_msg + rounds*c_round."""
    rows = []
    for q in qs:
        if q < 2:
            raise ConfigError("comm-bench needs at least two workers")
        ones = {w: 1.0 for w in range(q)}
        for name, run in (
            ("tree", lambda net: tree_sum(build_tree(range(q)), ones, net, sink=0)),
            ("star", lambda net: star_sum(range(q), ones, net)),
            ("ring", lambda net: ring_sum(range(q), ones, net)),
        ):
            net = Network(range(q))
            total = run(net)
            assert total == q
            rounds = len(net.ledger.rounds())
            msgs = net.ledger.messages
            rows.append(
                {"structure": name, "q": q, "rounds": rounds, "messages": msgs,
                 "simulated_latency_ms": msgs * latency_message + rounds * latency_round}
            )
    return rows


def run_comm_bench(c):
    raw = c["bench_workers"]
    try:
        qs = [int(x) for x in str(raw).split(",")]
    except ValueError:
        raise ConfigError(f"--workers: expected integers, got {raw!r}") from None
    rows = comm_bench_rows(qs, c["latency_message"], c["latency_round"])
    write_csv(c["output"], ("schema_version", "structure", "q", "rounds", "messages", "simulated_latency_ms"), rows)
    return EXIT_OK


def run_audit(c):
    q = c["workers"]
    if q is None or q < 2:
        raise ConfigError("the audit needs --workers >= 2")
    report = audit_mod.run_audit(q, c["seed"], c["inject"], n=c["audit_n"], n_equations=c["equations"])
    write_json(c["output"], report)
    if not report["passed"]:
        why = []
        if report["attack"]["verdict"] == "succeeds":
            why.append("inference attack succeeded")
        if not report["tree_pairs_ok"]:
            why.append("mask-removal trees leak")
        if not report["linear_leak_free"]:
            why.append("linear mask cancellation possible")
        if not all(w["ks_family_pass"] and w["autocorr_pass"] for w in report["workers"]):
            why.append("masks not uniform/independent")
        print("audit failed: " + "; ".join(why or ["see report"]), file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


COMMANDS = {
    "train": run_train,
    "oracle": run_oracle,
    "kernel-check": run_kernel_check,
    "comm-bench": run_comm_bench,
    "audit": run_audit,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        c = resolve(args)
        return COMMANDS[args.command](c)
    except ProtocolError as exc:
        where = f" at iteration {exc.iteration}" if exc.iteration is not None else ""
        print(f"protocol aborted{where}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedkernError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
