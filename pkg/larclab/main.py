#!/usr/bin/env python3
"""
larclab - command-line laboratory for union-of-subspaces Boolean functions.

Every subcommand writes one JSON document to stdout (or --out) and logs to
stderr. Exit codes: 0 success, 2 a property violation or counterexample
candidate was found, 1 usage, input or cap errors.
"""

import argparse
import logging
import sys
from collections import Counter
from fractions import Fraction
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from larclab import __version__
from larclab.core import commlab, designs, fourier, pdt
from larclab.core.database import ResultStore
from larclab.core.errors import LarcLabError, PropertyViolationError
from larclab.core.f2core import Subspace, configure_enumerate_cap
from larclab.core.settings import SettingsManager
from larclab.core.task_manager import TaskManager, configure_task_manager
from larclab.utils.rng import require_seed
from larclab.utils.serialization import (
    JsonLinesWriter,
    dump_json,
    dumps,
    load_json,
    parse_fraction,
    read_json_lines,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# argparse keys that describe how a run is executed rather than what it computes
_RUNTIME_KEYS = {'func', 'config_dir', 'threads', 'max_n', 'log_level', 'no_record', 'out', 'jsonl', 'tags'}

Outcome = Tuple[Dict[str, Any], Optional[str], int]


class UsageError(LarcLabError):
    """Bad command-line input."""


class LabArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with 1, keeping 2 for violations."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class LabContext:
    """Settings, worker pool and run ledger shared by the subcommands."""

    def __init__(self, args: argparse.Namespace):
        self.settings = SettingsManager(args.config_dir)
        if args.max_n is not None:
            self.settings.set('caps.max_n', args.max_n)
            for key in ('dense_search_n', 'mono_rect_n'):
                self.settings.set(f'caps.{key}', min(self.settings.cap(key), args.max_n))
        threads = args.threads if args.threads is not None else int(self.settings.get('threads', 1))
        self.task_manager: TaskManager = configure_task_manager(threads)
        configure_enumerate_cap(self.cap('enumerate_dim'))
        self.record = bool(self.settings.get('auto_save_results', True)) and not args.no_record
        self._store: Optional[ResultStore] = None

    @property
    def store(self) -> ResultStore:
        if self._store is None:
            self._store = ResultStore(self.settings.get_database_path())
        return self._store

    def cap(self, name: str) -> int:
        return self.settings.cap(name)

    def fraction_setting(self, key: str) -> Fraction:
        return parse_fraction(str(self.settings.get(key)))

    def check_n(self, n: int):
        max_n = self.cap('max_n')
        if n > max_n:
            raise UsageError(f"n={n} exceeds caps.max_n={max_n} (raise it with --max-n or LARCLAB_MAX_N)")


def _fraction(text: str) -> Fraction:
    try:
        return parse_fraction(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _load_family(path: str) -> designs.SubspaceFamily:
    return designs.load_family(path)


def _load_distribution(path: str) -> Union[pdt.CubeDistribution, np.ndarray]:
    """Exact support list, or a float table under 'probabilities' (reported with an error bound)."""
    data = load_json(path)
    if "probabilities" not in data:
        return pdt.CubeDistribution.from_json(data)
    n = int(data["n"])
    table = np.asarray(data["probabilities"], dtype=float)
    if table.shape != (1 << n,):
        raise UsageError(f"{path}: expected {1 << n} probabilities for n={n}, got {table.size}")
    if np.any(table < 0) or not np.isfinite(table).all():
        raise UsageError(f"{path}: probabilities must be finite and non-negative")
    total = float(table.sum())
    if abs(total - 1.0) > 1e-9:
        raise UsageError(f"{path}: probabilities sum to {total}, not 1")
    return table / total


def _conjecture_params(ctx: LabContext, args: argparse.Namespace, s: int, h: int) -> commlab.ConjectureParams:
    alpha = args.alpha if args.alpha is not None else ctx.fraction_setting('conjecture.alpha')
    beta = args.beta if args.beta is not None else ctx.fraction_setting('conjecture.beta')
    k = args.k if args.k is not None else int(ctx.settings.get('conjecture.k'))
    return commlab.ConjectureParams(alpha, beta, k, s, h)


def _design_h(ctx: LabContext, fam: designs.SubspaceFamily, s: int, h: Optional[int]) -> Tuple[int, str]:
    """The h to pair with s: supplied on the command line or certified exhaustively."""
    if h is not None:
        return h, "supplied"
    cert = designs.certify_dual_design_exhaustive(fam, s, ctx.cap('subspace_count'), ctx.task_manager)
    return cert.h, "exhaustive"


# --- subcommands -----------------------------------------------------------------------

def cmd_gen_design(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    seed = require_seed(args.seed, "gen-design")
    preset = None
    if args.preset == 'query':
        preset = designs.query_preset(args.n)
    elif args.preset == 'communication':
        preset = designs.communication_preset(args.n, args.k or 1)
    dim = preset.dim if preset else args.dim
    m = preset.m if preset else args.m
    if dim is None or m is None:
        raise UsageError("gen-design needs --dim and --m, or --preset")
    ctx.check_n(args.n)
    fam = designs.random_design(args.n, dim, m, seed, pairwise_trivial=args.pairwise_trivial)
    if preset:
        fam = designs.SubspaceFamily(fam.n, fam.members, {**fam.meta, "preset": preset.to_json()})
    logger.info(f"Generated family: n={fam.n}, dim={dim}, m={fam.m}")
    return fam.to_json(), None, EXIT_OK


def cmd_verify_design(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    fam = _load_family(args.design)
    if args.mode == 'pairwise':
        result = designs.pairwise_trivial(fam)
        code = EXIT_OK if result.trivial else EXIT_VIOLATION
        return result.to_json(), "trivial" if result.trivial else "violation", code
    if args.s is None:
        raise UsageError("verify-design needs --s")
    if args.mode == 'exhaustive':
        cert = designs.certify_dual_design_exhaustive(fam, args.s, ctx.cap('subspace_count'), ctx.task_manager)
        data = cert.to_json()
        if args.h is not None and cert.h > args.h:
            data["verdict"] = "violation"
            data["requested_h"] = args.h
            return data, "violation", EXIT_VIOLATION
        return data, "certified", EXIT_OK
    if args.h is None:
        raise UsageError("Monte Carlo verification needs --h")
    seed = require_seed(args.seed, "verify-design --mode montecarlo")
    result = designs.certify_dual_design_montecarlo(fam, args.s, args.h, args.trials, seed, ctx.task_manager)
    if isinstance(result, designs.DesignViolation):
        return result.to_json(), "violation", EXIT_VIOLATION
    return result.to_json(), "certified", EXIT_OK


def cmd_fourier(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    family = None
    if args.from_design:
        family = _load_family(args.from_design)
        ctx.check_n(family.n)
        f = fourier.union_function(family)
    elif args.subspace:
        V = Subspace.from_json(load_json(args.subspace))
        ctx.check_n(V.ambient_dim)
        f = fourier.subspace_indicator(V)
    elif args.function:
        f = fourier.PseudoBooleanFunction.from_json(load_json(args.function))
        ctx.check_n(f.n)
    else:
        raise UsageError("fourier needs a function file, --from-design or --subspace")

    cap = ctx.cap('max_n')
    report = fourier.spectral_report(
        f, args.eps, args.delta, seed=args.seed, family=family,
        constant=ctx.settings.get('grolmusz.constant'),
        initial_t=int(ctx.settings.get('grolmusz.initial_t')),
        growth=int(ctx.settings.get('grolmusz.growth')),
        cap=cap,
    )
    data = report.to_json()
    verdict = None
    code = EXIT_OK
    if report.representation_norm_bound is not None:
        fourier.check_union_identity(family)
        data["union_identity"] = True
    if args.xor_rank:
        data["xor_lift_rank"] = fourier.xor_lift_rank(f, ctx.cap('xor_lift_n'))
    if args.spectrum:
        data["spectrum"] = fourier.wht(f, cap).to_json()
    if report.sparsify is not None and not report.sparsify.verified:
        verdict, code = "unverified", EXIT_VIOLATION
    return data, verdict, code


def cmd_pdt_lb(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    fam = _load_family(args.design)
    ctx.check_n(fam.n)
    f = fourier.union_function(fam)
    mu = pdt.hard_distribution_mu(fam)
    scan = pdt.corruption_scan(f, mu, args.eps, args.cmax, ctx.cap('subspace_count'), ctx.task_manager)
    data: Dict[str, Any] = {"scan": scan.to_json(), "lower_bound": scan.lower_bound}
    if args.s is not None:
        cert = designs.certify_dual_design_exhaustive(fam, args.s, ctx.cap('subspace_count'), ctx.task_manager)
        data["certificate"] = cert.to_json()
        data["threshold"] = pdt.query_threshold(fam, cert).to_json()
    if args.depth is not None:
        err, _ = pdt.min_distributional_error(f, mu, args.depth, ctx.cap('optimal_depth_n'))
        data["min_distributional_error"] = {"depth": args.depth, "error": err}
        if args.enumerate:
            trees = pdt.enumerate_trees(fam.n, args.depth, ctx.cap('tree_enum_n'))
            enumerated = min(pdt.distributional_error(t, f, mu) for t in trees)
            data["min_distributional_error"]["enumerated"] = enumerated
            if enumerated != err:
                raise PropertyViolationError(f"tree enumeration found error {enumerated}, dynamic programme {err}")
    elif args.enumerate:
        raise UsageError("--enumerate needs --depth")
    return data, scan.verdict, EXIT_OK


def _jsonl_writer(path: Optional[str]):
    return open(path, 'a') if path else None


def cmd_conjecture(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    if args.affine_sanity:
        seed = require_seed(args.seed, "conjecture --affine-sanity")
        n, s = args.n, args.s if args.s is not None else 2
        ctx.check_n(n)
        dim = args.dim if args.dim is not None else 2 * n // 5
        m = args.m if args.m is not None else 8
        alpha = args.alpha if args.alpha is not None else ctx.fraction_setting('conjecture.alpha')
        beta = args.beta if args.beta is not None else ctx.fraction_setting('conjecture.beta')
        k = args.k if args.k is not None else int(ctx.settings.get('conjecture.k'))
        results = ctx.task_manager.map(
            lambda i: commlab.affine_sanity_trial(n, dim, m, s, i, seed, alpha, beta, k),
            range(args.trials), chunk_size=4)
        ok = all(r.ok for r in results)
        violations = [r.trial for r in results if not r.design_holds]
        data = {"n": n, "dim": dim, "m": m, "s": s, "trials": args.trials, "seed": seed,
                "consistent": ok, "design_violations": violations,
                "instances": [r.to_json() for r in results]}
        if not ok:
            return data, commlab.COUNTEREXAMPLE_CANDIDATE, EXIT_VIOLATION
        if violations:
            return data, "design-violation", EXIT_VIOLATION
        return data, "consistent", EXIT_OK

    if not args.design:
        raise UsageError("conjecture needs --design (or --affine-sanity)")
    fam = _load_family(args.design)
    ctx.check_n(fam.n)
    s = args.s if args.s is not None else fam.n // 5
    if args.variant == 2 and not args.search:
        h, h_source = args.h or 0, "unused"
    else:
        h, h_source = _design_h(ctx, fam, s, args.h)
    params = _conjecture_params(ctx, args, s, h)
    data: Dict[str, Any] = {"params": params.to_json(), "h_source": h_source,
                            "threshold": commlab.communication_threshold(fam, params).to_json()}

    if args.search:
        seed = require_seed(args.seed, "conjecture --search")
        stream = _jsonl_writer(args.jsonl)
        try:
            result = commlab.counterexample_search(
                fam, params, args.budget, seed,
                temperature_start=float(ctx.settings.get('search.temperature_start')),
                temperature_end=float(ctx.settings.get('search.temperature_end')),
                tilt_steps=args.tilt_steps, cap=ctx.cap('dense_search_n'),
                writer=JsonLinesWriter(stream) if stream else None,
            )
        finally:
            if stream:
                stream.close()
        data["search"] = result.to_json()
        reports = [result.report] + ([result.tilted_report] if result.tilted_report else [])
    elif args.dist:
        X = _load_distribution(args.dist)
        if args.variant == 2:
            report = commlab.conjecture2_check(X, fam, params.alpha, params.beta)
        else:
            report = commlab.conjecture_check(X, fam, params)
        data["report"] = report.to_json()
        reports = [report]
    else:
        raise UsageError("conjecture needs --dist, --search or --affine-sanity")

    if any(r.verdict == commlab.COUNTEREXAMPLE_CANDIDATE for r in reports):
        return data, commlab.COUNTEREXAMPLE_CANDIDATE, EXIT_VIOLATION
    return data, reports[0].verdict, EXIT_OK


def cmd_rect(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    if args.chain_trials:
        seed = require_seed(args.seed, "rect --chain-trials")
        ctx.check_n(args.n)
        alpha = args.alpha if args.alpha is not None else Fraction(1, 2)
        summary = commlab.chain_trials(args.n, args.chain_trials, seed, alpha, ctx.task_manager)
        data = {"n": args.n, "seed": seed, "alpha": alpha, **summary.to_json()}
        return data, "violation" if summary.violations else "holds", \
            EXIT_VIOLATION if summary.violations else EXIT_OK

    if not args.design:
        raise UsageError("rect needs --design (or --chain-trials)")
    fam = _load_family(args.design)
    ctx.check_n(fam.n)
    if args.search:
        seed = require_seed(args.seed, "rect --search")
        f = fourier.union_function(fam)
        nu = commlab.nu_distribution(fam)
        result = commlab.mono_rectangle_search(f, args.budget, seed, args.color, nu, ctx.cap('mono_rect_n'))
        return result.to_json(), None, EXIT_OK
    if args.nu_table:
        nu = commlab.nu_distribution(fam)
        return {"n": fam.n, "denominator": nu.denominator,
                "numerators": nu.table(ctx.cap('pair_table_n')).tolist()}, None, EXIT_OK
    if not args.rect:
        raise UsageError("rect needs --rect, --search, --nu-table or --chain-trials")
    R = commlab.Rectangle.from_json(load_json(args.rect))
    alpha = args.alpha if args.alpha is not None else ctx.fraction_setting('conjecture.alpha')
    report = commlab.rectangle_analysis(R, fam, alpha)
    data: Dict[str, Any] = {"projection": report.to_json()}
    chain = [commlab.chain_inequality_check(R, V, alpha) for V in fam.members]
    data["chain"] = [c.to_json() for c in chain]
    if args.eps is not None:
        data["corruption"] = commlab.corruption_rectangle_check(
            R, commlab.nu_distribution(fam), args.eps, args.c).to_json()
    if not all(c.holds for c in chain):
        return data, "violation", EXIT_VIOLATION
    return data, None, EXIT_OK


def _summarize_jsonl(path: str) -> Dict[str, Any]:
    records = list(read_json_lines(path))
    verdicts = Counter(r["verdict"] for r in records if "verdict" in r)
    scores = [r["score"] for r in records if "score" in r]
    return {
        "source": path,
        "records": len(records),
        "verdicts": dict(sorted(verdicts.items())),
        "best_score": max(scores) if scores else None,
        "seeds": sorted({r["seed"] for r in records if r.get("seed") is not None}),
    }


def cmd_report(ctx: LabContext, args: argparse.Namespace) -> Outcome:
    if args.from_jsonl:
        return _summarize_jsonl(args.from_jsonl), None, EXIT_OK
    store = ctx.store
    if args.delete is not None:
        if not store.delete_run(args.delete):
            raise UsageError(f"no recorded run with id {args.delete}")
        return {"deleted": args.delete}, None, EXIT_OK
    if args.run_id is not None:
        record = store.get_run_by_id(args.run_id)
        if record is None:
            raise UsageError(f"no recorded run with id {args.run_id}")
        return record, record['verdict'], EXIT_OK
    runs = store.search_runs(command=args.command_filter, verdict=args.verdict, tag=args.tag_filter,
                             limit=args.limit)
    return {"statistics": store.get_statistics(), "runs": runs}, None, EXIT_OK


# --- parser ----------------------------------------------------------------------------

def _add_conjecture_knobs(p: argparse.ArgumentParser):
    p.add_argument('--alpha', type=_fraction, help="far threshold (default from settings, 1/2)")
    p.add_argument('--beta', type=_fraction, help="entropy-loss rate (default from settings, 1/10)")
    p.add_argument('--k', type=int, help="far-count multiplier (default from settings, 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = LabArgumentParser(prog='larclab', description=__doc__.strip().splitlines()[0])
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--config-dir', help="settings directory (default $LARCLAB_HOME or ~/.larclab)")
    parser.add_argument('--threads', type=int, help="worker threads")
    parser.add_argument('--max-n', type=int, help="override caps.max_n")
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    parser.add_argument('--no-record', action='store_true', help="do not write the run ledger")
    parser.add_argument('--out', help="write the JSON result here instead of stdout")
    parser.add_argument('--tag', dest='tags', action='append', help="label the recorded run (repeatable)")
    sub = parser.add_subparsers(dest='command', required=True, parser_class=LabArgumentParser)

    p = sub.add_parser('gen-design', help="draw a random subspace family")
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--dim', type=int)
    p.add_argument('--m', type=int)
    p.add_argument('--preset', choices=['query', 'communication'])
    p.add_argument('--k', type=int, help="k for the communication preset")
    p.add_argument('--pairwise-trivial', action='store_true')
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_gen_design)

    p = sub.add_parser('verify-design', help="certify (s, h) for a stored family")
    p.add_argument('--design', required=True)
    p.add_argument('--mode', choices=['exhaustive', 'montecarlo', 'pairwise'], default='exhaustive')
    p.add_argument('--s', type=int)
    p.add_argument('--h', type=int)
    p.add_argument('--trials', type=int, default=1000)
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_verify_design)

    p = sub.add_parser('fourier', help="exact spectrum, norms and sparsification")
    p.add_argument('function', nargs='?', help="truth-table JSON file")
    p.add_argument('--from-design')
    p.add_argument('--subspace')
    p.add_argument('--eps', type=_fraction, default=Fraction(0))
    p.add_argument('--delta', type=_fraction, default=Fraction(1, 10))
    p.add_argument('--seed', type=int, help="run the sampling sparsifier with this seed")
    p.add_argument('--xor-rank', action='store_true')
    p.add_argument('--spectrum', action='store_true', help="include the full spectrum")
    p.set_defaults(func=cmd_fourier)

    p = sub.add_parser('pdt-lb', help="corruption scan under the hard distribution")
    p.add_argument('--design', required=True)
    p.add_argument('--eps', type=_fraction, required=True)
    p.add_argument('--cmax', type=int, required=True)
    p.add_argument('--s', type=int, help="also certify s and report the corruption threshold")
    p.add_argument('--depth', type=int, help="also report the optimal distributional error at this depth")
    p.add_argument('--enumerate', action='store_true', help="cross-check --depth against every tree (small n)")
    p.set_defaults(func=cmd_pdt_lb)

    p = sub.add_parser('conjecture', help="entropy-loss predicates and counterexample search")
    p.add_argument('--design')
    p.add_argument('--dist', help="distribution JSON file")
    p.add_argument('--variant', type=int, choices=[1, 2], default=1)
    p.add_argument('--search', action='store_true')
    p.add_argument('--budget', type=int, default=10_000)
    p.add_argument('--tilt-steps', type=int, default=0)
    p.add_argument('--jsonl', help="stream search improvements to this JSON-lines file")
    p.add_argument('--affine-sanity', action='store_true')
    p.add_argument('--n', type=int, default=12)
    p.add_argument('--dim', type=int)
    p.add_argument('--m', type=int)
    p.add_argument('--s', type=int)
    p.add_argument('--h', type=int)
    p.add_argument('--trials', type=int, default=50)
    p.add_argument('--seed', type=int)
    _add_conjecture_knobs(p)
    p.set_defaults(func=cmd_conjecture)

    p = sub.add_parser('rect', help="rectangle projections, chain checks and monochromatic search")
    p.add_argument('--design')
    p.add_argument('--rect', help="rectangle JSON file")
    p.add_argument('--eps', type=_fraction)
    p.add_argument('--c', type=int)
    p.add_argument('--search', action='store_true')
    p.add_argument('--budget', type=int, default=100_000)
    p.add_argument('--color', type=int, choices=[0, 1])
    p.add_argument('--nu-table', action='store_true', help="print the full pair distribution (small n)")
    p.add_argument('--chain-trials', type=int)
    p.add_argument('--n', type=int, default=10)
    p.add_argument('--seed', type=int)
    _add_conjecture_knobs(p)
    p.set_defaults(func=cmd_rect)

    p = sub.add_parser('report', help="summarize the run ledger or a JSON-lines stream")
    p.add_argument('--from-jsonl')
    p.add_argument('--command', dest='command_filter')
    p.add_argument('--verdict')
    p.add_argument('--limit', type=int, default=20)
    p.add_argument('--tag', dest='tag_filter', help="only runs carrying this tag")
    p.add_argument('--run', dest='run_id', type=int, help="show one recorded run in full")
    p.add_argument('--delete', type=int, metavar='RUN_ID', help="remove a recorded run")
    p.set_defaults(func=cmd_report)
    return parser


def _recorded_parameters(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _RUNTIME_KEYS and v is not None}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        ctx = LabContext(args)
    except (LarcLabError, OSError) as e:
        logging.basicConfig(level=logging.ERROR, format=LOG_FORMAT, stream=sys.stderr)
        logger.error(f"Could not initialise: {e}")
        return EXIT_USAGE
    logging.basicConfig(
        level=getattr(logging, args.log_level or str(ctx.settings.get('log_level', 'INFO')).upper()),
        format=LOG_FORMAT,
        stream=sys.stderr,
    )

    try:
        data, verdict, code = args.func(ctx, args)
    except PropertyViolationError as e:
        logger.error(f"Property violation: {e}")
        return EXIT_VIOLATION
    except LarcLabError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"Bad input: {e}")
        return EXIT_USAGE

    dump_json(data, path=args.out, stream=None if args.out else sys.stdout)

    if ctx.record and args.command != 'report':
        parameters = _recorded_parameters(args)
        try:
            previous = ctx.store.get_run(args.command, parameters)
            if previous is not None and dumps(previous['result']) != dumps(data):
                logger.warning(f"Result differs from recorded run {previous['id']} with the same parameters")
            ctx.store.save_run(args.command, parameters, data, verdict,
                               getattr(args, 'seed', None), code, tags=args.tags)
        except Exception as e:
            logger.warning(f"Could not record run: {e}")
    return code


if __name__ == "__main__":
    sys.exit(main())
