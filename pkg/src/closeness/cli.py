"""``closeness`` command line.

Exit codes: 0 for ACCEPT or success, 1 for REJECT, 2 for any error
(including usage errors, which argparse reports with status 2).
"""

import argparse
import json
import sys
from pathlib import Path

from closeness import experiments as ex
from closeness import markov as mk
from closeness.distributions import load_distribution
from closeness.exceptions import InvalidParameterError, NonConvergenceError, ParseError
from closeness.rng import substream
from closeness.statistics import MOMENT_CSV_HEADER, moment_check
from closeness.testers import (
    ACCEPT,
    REGIMES,
    ClosenessTester,
    TestConfig,
    calibrate_constants,
    default_threads,
    plan_sample_sizes,
)

EXIT_OK, EXIT_REJECT, EXIT_ERROR = 0, 1, 2


def _eps(text, allow_zero=False):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    lo_ok = v >= 0 if allow_zero else v > 0
    if not (lo_ok and v <= 1):
        raise argparse.ArgumentTypeError(f"eps must lie in {'[0' if allow_zero else '(0'}, 1], got {v}")
    return v


def _positive(cast):
    def conv(text):
        try:
            v = cast(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {cast.__name__}: {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _list(cast):
    def conv(text):
        try:
            vals = [cast(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list: {text!r}") from None
        if not vals or any(v <= 0 for v in vals):
            raise argparse.ArgumentTypeError(f"need a comma-separated list of positive values: {text!r}")
        return vals
    return conv


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="worker threads (default: available CPUs)")
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")


def _tester_flags(p):
    p.add_argument("--kappa", type=_positive(float), default=1.0)
    p.add_argument("--c-gamma", type=float, default=1.0)
    p.add_argument("--c-one", type=float, default=1.0)
    p.add_argument("--fidelity", action="store_true",
                   help="refuse parameters outside the guaranteed range")


def build_parser():
    parser = argparse.ArgumentParser(prog="closeness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run one closeness test")
    t.add_argument("--p", required=True, help="distribution file or specifier")
    t.add_argument("--q", required=True)
    t.add_argument("--eps", type=_eps, required=True)
    t.add_argument("--m1", type=_positive(float), required=True)
    t.add_argument("--m2", type=_positive(float), default=None, help="default: planner")
    t.add_argument("--plan-c", type=_positive(float), default=1.0, help="planner constant")
    t.add_argument("--regime", choices=REGIMES, default="auto")
    _tester_flags(t)
    _common(t)

    g = sub.add_parser("grid", help="paired-comparison success grid")
    g.add_argument("--n", type=_positive(int), required=True)
    g.add_argument("--eps", type=lambda s: _eps(s, allow_zero=True), required=True)
    g.add_argument("--trials", type=_positive(int), default=120)
    g.add_argument("--m1-grid", type=_list(int), default=None)
    g.add_argument("--m2-grid", type=_list(int), default=None)
    _common(g)

    m = sub.add_parser("moments", help="Monte-Carlo check of a closed-form moment")
    m.add_argument("--check", choices=("v", "w", "z", "r"), required=True)
    m.add_argument("--p", required=True)
    m.add_argument("--q", required=True)
    m.add_argument("--m1", type=_positive(float), required=True)
    m.add_argument("--m2", type=_positive(float), required=True)
    m.add_argument("--trials", type=_positive(int), default=100_000)
    _common(m)

    s = sub.add_parser("sweep", help="lower-bound sample-size sweep")
    s.add_argument("--n", type=_positive(int), required=True)
    s.add_argument("--eps", type=_eps, required=True, help="instance perturbation")
    s.add_argument("--m1", type=_positive(int), required=True)
    s.add_argument("--fractions", type=_list(float), default=[0.1, 0.25, 0.5, 1.0])
    s.add_argument("--trials", type=_positive(int), default=200)
    s.add_argument("--plan-c", type=_positive(float), default=1.0)
    s.add_argument("--regime", choices=("basic", "nonextreme", "extreme"), default="nonextreme")
    s.add_argument("--calibration-trials", type=_positive(int), default=300)
    _common(s)

    w = sub.add_parser("words", help="word-similarity curves on a bigram corpus")
    w.add_argument("--corpus", type=Path, default=ex.FIXTURE_CORPUS)
    w.add_argument("--word-a", required=True)
    w.add_argument("--word-b", required=True)
    w.add_argument("--m1", type=_positive(int), default=1000)
    w.add_argument("--m2-grid", type=_list(int), default=[50, 100, 200, 400, 700, 1000])
    w.add_argument("--trials", type=_positive(int), default=200)
    _common(w)

    mk_p = sub.add_parser("markov", help="Markov chain mixing")
    mk_sub = mk_p.add_subparsers(dest="markov_command", required=True)
    for name in ("test-at", "estimate"):
        c = mk_sub.add_parser(name)
        c.add_argument("--chain", required=True, help="chain file or cycle:/cliques:/complete: specifier")
        c.add_argument("--eps", type=_eps, required=True)
        if name == "test-at":
            c.add_argument("--t0", type=_positive(int), required=True)
        else:
            c.add_argument("--t-cap", type=_positive(int), default=2**20)
        c.add_argument("--reps", type=_positive(int), default=None)
        c.add_argument("--ref-scale", type=_positive(float), default=4.0)
        c.add_argument("--state-scale", type=_positive(float), default=1.0)
        c.add_argument("--kappa", type=_positive(float), default=1.0)
        c.add_argument("--c-gamma", type=float, default=1.0)
        c.add_argument("--c-one", type=float, default=1.0)
        _common(c)

    cal = sub.add_parser("calibrate", help="calibrate c_gamma and c_one under the null")
    cal.add_argument("--n", type=_positive(int), required=True)
    cal.add_argument("--eps", type=_eps, required=True)
    cal.add_argument("--m1", type=_positive(float), required=True)
    cal.add_argument("--m2", type=_positive(float), default=None, help="default: planner")
    cal.add_argument("--plan-c", type=_positive(float), default=1.0)
    cal.add_argument("--null", default=None, help="null distribution (default uniform)")
    cal.add_argument("--kappa", type=_positive(float), default=1.0)
    cal.add_argument("--alpha", type=float, default=1 / 6)
    cal.add_argument("--trials", type=_positive(int), default=600)
    cal.add_argument("--regime", choices=("nonextreme", "extreme"), default="nonextreme")
    _common(cal)
    return parser


def parse_args(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


def _meta(args):
    skip = {"out", "threads"}
    meta = {"command": args.command}
    for k, v in sorted(vars(args).items()):
        if k not in skip and k != "command":
            meta[k] = v
    return meta


def _emit(args, text):
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8")


def _header(meta):
    return "".join(f"# {k}={v}\n" for k, v in meta.items())


def _cmd_test(args):
    p, q = load_distribution(args.p), load_distribution(args.q)
    if len(p) != len(q):
        raise InvalidParameterError("p and q have different lengths")
    n = len(p)
    m2 = args.m2 or plan_sample_sizes(n, args.eps, args.m1, args.plan_c, enforce_floor=False)
    cfg = TestConfig(n=n, eps=args.eps, m1=args.m1, m2=m2, kappa=args.kappa,
                     c_gamma=args.c_gamma, c_one=args.c_one, regime=args.regime,
                     seed=args.seed, fidelity=args.fidelity)
    decision = ClosenessTester.from_config(cfg).sample_and_test(p, q, substream(args.seed, "test"))
    meta = _meta(args)
    meta["m2_used"] = m2
    if cfg.warnings:
        meta["warnings"] = "; ".join(cfg.warnings)
    _emit(args, _header(meta) + json.dumps(decision.to_record()) + "\n")
    return EXIT_OK if decision.verdict == ACCEPT else EXIT_REJECT


def _cmd_grid(args):
    res = ex.grid_experiment(args.n, args.eps, args.m1_grid, args.m2_grid, args.trials,
                             rng=args.seed, threads=args.threads)
    _emit(args, res.to_csv(_meta(args)))
    return EXIT_OK


def _cmd_moments(args):
    p, q = load_distribution(args.p), load_distribution(args.q)
    if len(p) != len(q):
        raise InvalidParameterError("p and q have different lengths")
    rep = moment_check(args.check, p, q, args.m1, args.m2, args.trials, substream(args.seed, "moments"))
    _emit(args, _header(_meta(args)) + MOMENT_CSV_HEADER + "\n" + rep.csv_row() + "\n")
    return EXIT_OK


def _cmd_sweep(args):
    cfg = ex.SweepConfig(c=args.plan_c, regime=args.regime, calibration_trials=args.calibration_trials)
    rows = ex.lower_bound_sweep(args.n, args.eps, args.m1, args.fractions, args.trials, cfg,
                                rng=args.seed, threads=args.threads)
    _emit(args, ex.format_csv(ex.SWEEP_COLUMNS, rows, _meta(args)))
    return EXIT_OK


def _cmd_words(args):
    table = ex.load_bigram_counts(args.corpus)
    curve = ex.word_similarity_curve(table, args.word_a, args.word_b, args.m1, args.m2_grid,
                                     args.trials, rng=args.seed, threads=args.threads)
    rows = ex.words_csv_rows(args.word_a, args.word_b, args.m1, curve, args.trials)
    _emit(args, ex.format_csv(ex.WORDS_COLUMNS, rows, _meta(args)))
    return EXIT_OK


def _cmd_markov(args):
    chain = mk.load_chain(args.chain)
    cfg = mk.MixingConfig(args.reps, args.ref_scale, args.state_scale, args.kappa,
                          args.c_gamma, args.c_one)
    meta = _meta(args)
    if args.markov_command == "test-at":
        d = mk.test_mixing_at(chain, args.t0, args.eps, cfg, substream(args.seed, "markov"))
        body = (f"verdict={d.verdict}\nt0={d.t0}\nqueries={d.queries}\n"
                f"worst_state={d.worst_state + 1}\nworst_state_accepts={int(d.state_accepts.min())}\n")
        _emit(args, _header(meta) + body)
        return EXIT_OK if d.accepted else EXIT_REJECT
    est = mk.estimate_mixing_time(chain, args.eps, cfg, substream(args.seed, "markov"),
                                  t_cap=args.t_cap)
    _emit(args, _header(meta) + f"t_estimate={est.t_estimate}\nqueries={est.queries}\n")
    return EXIT_OK


def _cmd_calibrate(args):
    null = load_distribution(args.null) if args.null else None
    m2 = args.m2 or plan_sample_sizes(args.n, args.eps, args.m1, args.plan_c, enforce_floor=False)
    cal = calibrate_constants(args.n, args.eps, args.m1, m2, kappa=args.kappa, trials=args.trials,
                              alpha=args.alpha, rng=substream(args.seed, "calibrate"), null=null,
                              regime=args.regime, threads=args.threads)
    meta = _meta(args)
    meta["m2_used"] = m2
    body = (f"c_gamma={cal.c_gamma!r}\nc_one={cal.c_one!r}\n"
            f"kappa_suggestion={cal.kappa_suggestion!r}\n")
    _emit(args, _header(meta) + body)
    return EXIT_OK


_DISPATCH = {
    "test": _cmd_test, "grid": _cmd_grid, "moments": _cmd_moments, "sweep": _cmd_sweep,
    "words": _cmd_words, "markov": _cmd_markov, "calibrate": _cmd_calibrate,
}


def run(args):
    try:
        return _DISPATCH[args.command](args)
    except (InvalidParameterError, ParseError, NonConvergenceError, OSError) as exc:
        print(f"closeness: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code else EXIT_OK
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
