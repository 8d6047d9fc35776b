"""``ddrp`` command-line front end.

Every subcommand is a pure function of its flags and input files and writes
a JSON results document to stdout (or ``--out``). ``--threads`` only changes
wall time: it is deliberately left out of the recorded config.

Errors print one line, ``ddrp: error: <Kind>: <message>``, on stderr and exit
nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, fmm, learn, moments, preprocess, rp, synth
from . import io as dio
from .errors import ConfigurationError, DdrpError

THREADS_ENV = "DDRP_THREADS"


class UsageError(DdrpError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- flag types

def _split(values, cast):
    out = []
    for token in values:
        for part in str(token).split(","):
            if part.strip():
                try:
                    out.append(cast(part))
                except ValueError:
                    raise UsageError(f"invalid value {part!r}") from None
    return out


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _threads(args):
    if args.threads is not None:
        return args.threads
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if value < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1")
    return value


# ---------------------------------------------------------------- output

def _emit(args, doc, csv_text=None, table_text=None):
    text = dio.dumps_results(doc)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if getattr(args, "csv", None) and csv_text is not None:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    if getattr(args, "table", None) and table_text is not None:
        Path(args.table).write_text(table_text, encoding="utf-8")


def _load_matrix(path, n_features=None):
    suffix = Path(path).suffix.lower()
    if suffix in (".svm", ".libsvm", ".txt"):
        return dio.read_libsvm(path, n_features).features
    return dio.read_dense_csv(path)


@contextmanager
def _collect_warnings():
    """Capture library warnings so they can be reported once, not fatally."""
    messages = []

    class _Handler(logging.Handler):
        def emit(self, record):
            messages.append(record.getMessage())

    logger = logging.getLogger("ddrp")
    handler = _Handler(logging.WARNING)
    logger.addHandler(handler)
    propagate, logger.propagate = logger.propagate, False
    try:
        yield messages
    finally:
        logger.removeHandler(handler)
        logger.propagate = propagate


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- synth

def cmd_synth(args):
    kw = dict(laplace_scale=args.laplace_scale, scale_mode=args.scale_mode)
    files = []
    if args.kind in synth.PAIRS:
        if not args.w_out:
            raise UsageError(f"pair {args.kind!r} needs --w-out for the second matrix")
        x, w = synth.generate_pair(args.kind, args.d, args.n, args.seed, **kw)
        dio.write_dense_csv(args.x_out, x)
        dio.write_dense_csv(args.w_out, w)
        files = [("x", args.x_out, x.shape), ("w", args.w_out, w.shape)]
    else:
        x = synth.generate(synth.SyntheticSpec(args.kind, args.d, args.n, args.seed, **kw))
        dio.write_dense_csv(args.x_out, x)
        files = [("x", args.x_out, x.shape)]
    config = {"kind": args.kind, "d": args.d, "n": args.n, "seed": args.seed,
              "laplace_scale": args.laplace_scale, "scale_mode": args.scale_mode}
    results = [{"type": "synth_file", "role": role, "rows": shape[0], "cols": shape[1],
                "sha256": _sha256(path)} for role, path, shape in files]
    _emit(args, dio.ResultsDocument("synth", config, results))
    return 0


# ---------------------------------------------------------------- fmm-bench

def _bench_inputs(args):
    if args.pair:
        if args.x or args.w:
            raise UsageError("give either --pair or --x/--w, not both")
        x, w = synth.generate_pair(args.pair, args.d, args.n, args.seed,
                                   laplace_scale=args.laplace_scale, scale_mode=args.scale_mode)
    elif args.x and args.w:
        x, w = _load_matrix(args.x), _load_matrix(args.w)
    else:
        raise UsageError("fmm-bench needs --pair or both --x and --w")
    if args.orientation == "feature":
        x, w = x.T, w.T
    if x.shape[1] != w.shape[1]:
        raise ConfigurationError(
            f"X has {x.shape[1]} features but W has {w.shape[1]} "
            f"({args.orientation} orientation)")
    return x, w


def cmd_fmm_bench(args):
    x, w = _bench_inputs(args)
    ks = _split(args.ks, int)
    methods = [fmm.FmmMethod(m, args.projection) for m in _split(args.methods, str)]
    stats = fmm.run_benchmark(x, w, methods, ks, trials=args.trials, seed=args.seed,
                              threads=_threads(args), moment_rows=args.moment_sample)
    config = {"pair": args.pair, "x": args.x, "w": args.w, "d": x.shape[1],
              "n_x": x.shape[0], "n_w": w.shape[0], "ks": ks,
              "methods": [m.name for m in methods], "projection": args.projection,
              "trials": args.trials, "seed": args.seed, "orientation": args.orientation,
              "moment_sample": args.moment_sample}
    if args.pair:
        config.update(laplace_scale=args.laplace_scale, scale_mode=args.scale_mode)
    doc = dio.ResultsDocument("fmm-bench", config, stats)
    _emit(args, doc, csv_text=dio.results_csv(doc))
    return 0


# ---------------------------------------------------------------- phi-report

def cmd_phi_report(args):
    x, w = _load_matrix(args.x), _load_matrix(args.w)
    if x.shape[1] != w.shape[1]:
        raise ConfigurationError(f"X has {x.shape[1]} features but W has {w.shape[1]}")
    mx, mw = moments.estimate_full(x), moments.estimate_full(w)
    with _collect_warnings() as caught:
        report = preprocess.phi_report(mx, mw, floor=args.floor)
        optimal = preprocess.build_optimal(mx, mw, args.floor)
    notes = sorted(set(caught))
    for note in notes:
        print(f"ddrp: warning: {note}", file=sys.stderr)
    results = [report]
    if args.mc_samples:
        sx, sw = preprocess.rows_sampler(x), preprocess.rows_sampler(w)
        preps = {"identity": preprocess.Preprocessor(mx.dim),
                 "quick": preprocess.build_quick(mx.diag, mw.diag),
                 "optimal": optimal}
        for name, p in preps.items():
            value = preprocess.phi_monte_carlo(p, sx, sw, args.mc_samples, args.seed)
            results.append({"type": "phi_monte_carlo", "preprocessor": name,
                            "samples": args.mc_samples, "phi": value})
    config = {"x": args.x, "w": args.w, "d": mx.dim, "floor": args.floor,
              "mc_samples": args.mc_samples, "seed": args.seed,
              "warnings": notes}
    _emit(args, dio.ResultsDocument("phi-report", config, results))
    return 0


# ---------------------------------------------------------------- regress / classify

def _learning_data(args, loss):
    if args.synthetic:
        if args.train or args.test:
            raise UsageError("give either --synthetic or --train/--test, not both")
        make = (synth.factor_regression if loss is learn.Loss.SQUARED
                else synth.separable_classification)
        x, y = make(args.n, args.d, seed=args.seed)
        return learn.LabeledDataset(x, y).split(args.train_fraction)
    if not args.train:
        raise UsageError("need --train (optionally --test) or --synthetic")
    train = dio.read_dataset(args.train, args.label_column, args.header, args.n_features)
    if args.test:
        n_features = args.n_features or train.d
        test = dio.read_dataset(args.test, args.label_column, args.header, n_features)
        return train, test
    return train.split(args.train_fraction)


def _cmd_learn(args, loss, command):
    train, test = _learning_data(args, loss)
    if train.d != test.d:
        raise ConfigurationError(f"train has {train.d} features but test has {test.d}")
    ks = _split(args.ks, int)
    lambdas = _split(args.lambdas, float)
    result = learn.sweep(train, test, lambdas, ks, trials=args.trials, loss=loss,
                         ridge=args.ridge, seed=args.seed, kind=args.projection,
                         epochs=args.epochs, step=args.step, threads=_threads(args))
    config = {"train": args.train, "test": args.test, "synthetic": args.synthetic,
              "n_train": train.n, "n_test": test.n, "d": train.d, "ks": ks,
              "lambdas": lambdas, "trials": args.trials, "ridge": args.ridge,
              "seed": args.seed, "projection": args.projection, "loss": loss.value,
              "train_fraction": None if args.test else args.train_fraction}
    if loss is learn.Loss.LOGISTIC:
        config.update(epochs=args.epochs, step=args.step)
    doc = dio.ResultsDocument(command, config, list(result.cells))
    _emit(args, doc, csv_text=dio.results_csv(doc),
          table_text=dio.sweep_table_csv(result.cells))
    return 0


def cmd_regress(args):
    return _cmd_learn(args, learn.Loss.SQUARED, "regress")


def cmd_classify(args):
    return _cmd_learn(args, learn.Loss.LOGISTIC, "classify")


# ---------------------------------------------------------------- variance-check

def variance_pairs(d, count, seed):
    """Seeded test pairs: ``w`` shares a random fraction of ``x`` so that
    inner products range from near zero to strongly correlated."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, d))
    mix = rng.uniform(-1.0, 1.0, size=(count, 1))
    w = mix * x + rng.standard_normal((count, d))
    return x, w


def cmd_variance_check(args):
    xs, ws = variance_pairs(args.d, args.pairs, args.seed)
    base = rp.ProjectionSpec(args.seed, args.d, args.k, args.projection)
    est = rp.inner_product_estimates(xs, ws, base, args.trials)
    exact_fn = (rp.sign_variance_exact if base.kind is rp.ProjectionKind.SIGN
                else rp.gaussian_variance_exact)
    constant = rp.VARIANCE_CONSTANT[base.kind]
    results = []
    failed = 0
    for i in range(args.pairs):
        x, w = xs[i], ws[i]
        mean = float(np.mean(est[:, i]))
        var = float(np.var(est[:, i], ddof=1))
        exact = exact_fn(x, w, args.k)
        bound = rp.variance_bound(x, w, args.k, constant)
        ip = float(x @ w)
        sem = (var / args.trials) ** 0.5
        rel = abs(var - exact) / exact
        ok = rel <= args.rel_tol and exact <= bound * (1 + 1e-12) and abs(mean - ip) <= 4 * sem
        failed += not ok
        results.append({"type": "variance_check", "pair": i, "inner_product": ip,
                        "mc_mean": mean, "mc_var": var, "exact_var": exact, "bound": bound,
                        "rel_error": rel, "pass": bool(ok)})
    config = {"d": args.d, "k": args.k, "pairs": args.pairs, "trials": args.trials,
              "seed": args.seed, "projection": args.projection, "rel_tol": args.rel_tol}
    _emit(args, dio.ResultsDocument("variance-check", config, results))
    if failed:
        print(f"ddrp: error: CheckFailed: {failed} of {args.pairs} pairs failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- parser

def _common(p, trials=100):
    p.add_argument("--seed", type=_seed, default=0, help="base seed (default 0)")
    p.add_argument("--trials", type=_positive_int, default=trials)
    p.add_argument("--out", help="results JSON path (default stdout)")


def _projection(p):
    p.add_argument("--projection", choices=[k.value for k in rp.VARIANCE_CONSTANT],
                   default="sign")


def _threads_flag(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (fallback ${THREADS_ENV}, default 1)")


def _synthetic_flags(p):
    p.add_argument("--laplace-scale", type=float, default=1.0)
    p.add_argument("--scale-mode", choices=("std", "variance"), default="std")


def build_parser():
    parser = _Parser(prog="ddrp", description="Data-dependent random projection experiments.")
    parser.add_argument("--version", action="version", version=f"ddrp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic matrix (or pair) as CSV")
    p.add_argument("kind", choices=[k.value for k in synth.SyntheticKind] + list(synth.PAIRS))
    p.add_argument("--d", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--x-out", required=True, help="CSV path for the (first) matrix")
    p.add_argument("--w-out", help="CSV path for W when KIND is a pair")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", help="results JSON path (default stdout)")
    _synthetic_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fmm-bench", help="sketched matrix product error per method and k")
    p.add_argument("--pair", choices=list(synth.PAIRS))
    p.add_argument("--d", type=_positive_int, default=100)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--x")
    p.add_argument("--w")
    p.add_argument("--ks", nargs="+", default=["5", "10", "20", "40", "80"])
    p.add_argument("--methods", nargs="+", default=["oblivious", "quick", "optimal"])
    p.add_argument("--orientation", choices=("data", "feature"), default="data")
    p.add_argument("--moment-sample", type=_positive_int, default=None,
                   help="estimate moments from this many sampled rows")
    p.add_argument("--csv", help="flat plotting CSV path")
    _common(p)
    _projection(p)
    _threads_flag(p)
    _synthetic_flags(p)
    p.set_defaults(func=cmd_fmm_bench)

    p = sub.add_parser("phi-report", help="phi for identity, quick and optimal preprocessing")
    p.add_argument("--x", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--mc-samples", type=_positive_int, default=None,
                   help="also estimate phi by Monte Carlo over data rows")
    p.add_argument("--floor", type=float, default=1e-10)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_phi_report)

    for name, func, ks, lambdas in (
            ("regress", cmd_regress, ["10", "20"], ["-0.5", "-0.25", "0"]),
            ("classify", cmd_classify, ["20", "40"], ["-0.5", "-0.25", "0"])):
        p = sub.add_parser(name, help=f"lambda-scaled projected {name}ion sweep"
                           if name == "regress" else "lambda-scaled projected logistic sweep")
        p.add_argument("--train")
        p.add_argument("--test")
        p.add_argument("--synthetic", action="store_true",
                       help="use the built-in heteroscedastic task")
        p.add_argument("--n", type=_positive_int, default=1000)
        p.add_argument("--d", type=_positive_int, default=100)
        p.add_argument("--label-column", type=int, default=-1)
        p.add_argument("--header", action="store_true")
        p.add_argument("--n-features", type=_positive_int, default=None)
        p.add_argument("--train-fraction", type=float, default=0.8)
        p.add_argument("--ks", nargs="+", default=ks)
        p.add_argument("--lambdas", nargs="+", default=lambdas)
        p.add_argument("--ridge", type=float, default=1e-6 if name == "regress" else 0.0)
        p.add_argument("--epochs", type=_positive_int, default=500)
        p.add_argument("--step", type=float, default=None)
        p.add_argument("--csv", help="flat plotting CSV path")
        p.add_argument("--table", help="k-by-lambda table CSV path")
        _common(p)
        _projection(p)
        _threads_flag(p)
        p.set_defaults(func=func)

    p = sub.add_parser("variance-check", help="Monte-Carlo check of projected inner products")
    p.add_argument("--d", type=_positive_int, default=50)
    p.add_argument("--k", type=_positive_int, default=4)
    p.add_argument("--pairs", type=_positive_int, default=20)
    p.add_argument("--rel-tol", type=float, default=0.05)
    _common(p, trials=200_000)
    _projection(p)
    p.set_defaults(func=cmd_variance_check)
    return parser


def _validate(args):
    if getattr(args, "trials", 2) < 2:
        raise UsageError("--trials must be at least 2")
    frac = getattr(args, "train_fraction", 0.5)
    if not 0.0 < frac < 1.0:
        raise UsageError("--train-fraction must lie in (0, 1)")
    if getattr(args, "k", 1) > getattr(args, "d", 10**9):
        raise UsageError("--k must not exceed --d")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        print(f"ddrp: error: Usage: {exc}", file=sys.stderr)
        return 2
    except (DdrpError, ValueError, ArithmeticError, OSError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"ddrp: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
