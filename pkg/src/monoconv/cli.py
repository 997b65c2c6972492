"""Command-line front end.

Subcommands: convolve, transform-eval, simulate, lln, selftest.  Exit codes:
0 on success, 1 for usage/config/IO problems, 2 when a statistical gate
fails (the report is still written).
"""

from __future__ import annotations

import argparse
import configparser
import re
import sys
from pathlib import Path

from . import __version__
from .chain import RngPolicy, simulate, write_summary_csv, martingale_second_moment_check, \
    conditional_moment_check, MIN_CHECK_PATHS
from .lln import (
    DEFAULT_EPS_GRID,
    DEFAULT_MC_CHECKPOINTS,
    build_stability_report,
    emit_report,
)
from .measures import ConfigError, materialize, parse_measure_spec
from .monotone import AtomBudgetError, ConsistencyError, ConvolutionOptions, convolve_sequence
from .selftest import run_selftest
from .sequences import (
    ExplicitMeasures,
    ExplicitNormalizers,
    GeometricNormalizers,
    IidMeasures,
    PowerNormalizers,
    ScaledMeasures,
    SequenceSpec,
)
from .transforms import PoleError, RootFindError, cauchy_transform, f_derivative, f_transform


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_COMPLEX = re.compile(
    r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?"
    r"(?:([+-](?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i)?\s*$")


def parse_complex(text: str) -> complex:
    """Parse the `a+bi` / `a-bi` literal (either part may be omitted)."""
    m = _COMPLEX.match(text)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ConfigError(f"invalid complex literal {text!r}, expected a+bi")
    re_part = float(m.group(1)) if m.group(1) is not None else 0.0
    im_part = float(m.group(2)) if m.group(2) is not None else 0.0
    return complex(re_part, im_part)


def _fmt_complex(value: complex) -> str:
    re_part = value.real + 0.0  # normalize -0.0
    im_part = value.imag + 0.0
    sign = "+" if im_part >= 0 else "-"
    return f"{re_part:.17g} {sign} {abs(im_part):.17g}i"


def _emit(lines, out_path, quiet):
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        if not quiet:
            print(f"wrote {out_path}")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_convolve(args) -> int:
    specs = [parse_measure_spec(s) for s in args.measures]
    opts = ConvolutionOptions(merge_tol=args.merge_tol, prune_tol=args.prune_tol,
                              max_atoms=args.max_atoms,
                              identity_check_points=args.check_identity)
    out = convolve_sequence([materialize(s) for s in specs], opts)
    lines = [f"{t:.17g} {w:.17g}" for t, w in zip(out.positions, out.weights)]
    _emit(lines, args.out, args.quiet)
    return 0


def _cmd_transform_eval(args) -> int:
    spec = parse_measure_spec(args.measure)
    mu = materialize(spec)
    z = parse_complex(args.z)
    z_in = z.real if z.imag == 0.0 else z
    lines = [
        f"G(z) = {_fmt_complex(complex(cauchy_transform(mu, z_in)))}",
        f"F(z) = {_fmt_complex(complex(f_transform(mu, z_in)))}",
        f"F'(z) = {_fmt_complex(complex(f_derivative(mu, z_in)))}",
    ]
    _emit(lines, args.out, args.quiet)
    return 0


def _build_sequence(family, measure, measure_list, alpha, normalizer, horizon):
    if family == "iid":
        rule = IidMeasures(parse_measure_spec(measure))
    elif family == "scaled":
        rule = ScaledMeasures(parse_measure_spec(measure), alpha)
    elif family == "explicit":
        specs = tuple(parse_measure_spec(s.strip()) for s in measure_list)
        rule = ExplicitMeasures(specs)
    else:
        raise ConfigError(f"unknown measure family {family!r}")
    norm = _parse_normalizer(normalizer)
    return SequenceSpec(measures=rule, normalizers=norm, horizon=horizon)


def _parse_normalizer(text):
    if text is None or text == "none":
        return None
    text = text.strip()
    if text == "n":
        return PowerNormalizers(1.0)
    if text == "2^n":
        return GeometricNormalizers()
    m = re.fullmatch(r"n\^([0-9.eE+-]+)", text)
    if m:
        return PowerNormalizers(float(m.group(1)))
    m = re.fullmatch(r"explicit:(.+)", text)
    if m:
        values = tuple(float(v) for v in m.group(1).split(","))
        return ExplicitNormalizers(values)
    raise ConfigError(f"unknown normalizer rule {text!r}; use n, n^P, 2^n or explicit:v1,v2,...")


def _cmd_simulate(args) -> int:
    spec = _build_sequence(args.family, args.measure, [], args.alpha,
                           args.normalizer, args.steps)
    batch = simulate(spec, args.steps, args.paths, RngPolicy(args.seed))
    echo = [("command", "simulate"), ("family", args.family),
            ("measure", args.measure), ("normalizer", args.normalizer or "none"),
            ("steps", str(args.steps)), ("paths", str(args.paths)),
            ("seed", str(args.seed))]
    if args.family == "scaled":
        echo.insert(3, ("alpha", f"{args.alpha:.17g}"))
    exit_code = 0
    if args.paths >= MIN_CHECK_PATHS:
        cond = conditional_moment_check(batch, spec)
        if not args.quiet:
            bad = [r.step for r in cond.rows if not (r.first_ok and r.second_ok)]
            print(f"conditional moments: {'pass' if cond.ok else 'FAIL at n=' + str(bad)}")
        if not cond.ok:
            exit_code = 2
        if spec.normalizers is not None:
            second = martingale_second_moment_check(batch, spec)
            if not args.quiet:
                bad = [r.step for r in second.rows if not r.ok]
                print(f"second moments: {'pass' if second.ok else 'FAIL at n=' + str(bad)}")
            if not second.ok:
                exit_code = 2
            if args.out and args.figures:
                from .plots import render_second_moment_figure
                fig = render_second_moment_figure(second, args.out)
                if not args.quiet:
                    print(f"wrote {fig}")
    elif not args.quiet:
        print(f"skipping statistical checks (needs >= {MIN_CHECK_PATHS} paths)")
    if args.out:
        write_summary_csv(batch, spec, args.out, echo)
        if not args.quiet:
            print(f"wrote {args.out}")
    return exit_code


_LLN_KEYS = {
    "lln": {"family", "measure", "measures", "alpha", "normalizer", "horizon",
            "mc_checkpoints", "exact_checkpoints", "eps", "classical"},
    "chain": {"paths", "seed"},
    "monotone": {"merge_tol", "prune_tol", "max_atoms", "identity_check_points"},
    "cli": {"out", "figures", "quiet"},
}


def _read_config(path: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path) as fh:
            parser.read_file(fh, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    for section in parser.sections():
        if section not in _LLN_KEYS:
            raise ConfigError(f"unknown config section [{section}] in {path}")
        for key in parser[section]:
            if key not in _LLN_KEYS[section]:
                raise ConfigError(f"unknown config key {section}.{key} in {path}")
    return parser


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _cmd_lln(args) -> int:
    cfg = _read_config(args.config)
    lln_sec = cfg["lln"] if cfg.has_section("lln") else {}
    chain_sec = cfg["chain"] if cfg.has_section("chain") else {}
    mono_sec = cfg["monotone"] if cfg.has_section("monotone") else {}
    cli_sec = cfg["cli"] if cfg.has_section("cli") else {}

    family = lln_sec.get("family", "iid")
    measure = lln_sec.get("measure", "two_point(-1,1,0.5)")
    alpha = float(lln_sec.get("alpha", "0"))
    normalizer = lln_sec.get("normalizer", "n")
    mc_checkpoints = _ints(lln_sec.get("mc_checkpoints", "")) or DEFAULT_MC_CHECKPOINTS
    exact_checkpoints = _ints(lln_sec.get("exact_checkpoints", "4,8,12"))
    eps_list = _floats(lln_sec.get("eps", "")) if lln_sec.get("eps") else DEFAULT_EPS_GRID
    classical = lln_sec.get("classical", "true").strip().lower() in ("1", "true", "yes")
    measure_list = [s for s in lln_sec.get("measures", "").split(";") if s.strip()]

    horizon = int(lln_sec.get("horizon", "0")) or max(mc_checkpoints + exact_checkpoints)
    paths = args.paths or int(chain_sec.get("paths", "100000"))
    seed = args.seed if args.seed is not None else int(chain_sec.get("seed", "0"))
    out_path = args.out or cli_sec.get("out", "")
    if not out_path:
        raise ConfigError("no output path: set cli.out in the config or pass --out")
    figures = args.figures and cli_sec.get("figures", "true").strip().lower() in ("1", "true", "yes")
    quiet = args.quiet or cli_sec.get("quiet", "false").strip().lower() in ("1", "true", "yes")

    opts = ConvolutionOptions(
        merge_tol=float(mono_sec.get("merge_tol", "1e-9")),
        prune_tol=float(mono_sec.get("prune_tol", "1e-15")),
        max_atoms=int(mono_sec.get("max_atoms", "2000000")),
        identity_check_points=int(mono_sec.get("identity_check_points", "0")))

    spec = _build_sequence(family, measure, measure_list, alpha, normalizer, horizon)
    echo = [("command", "lln"), ("config", str(args.config))]
    report = build_stability_report(
        spec, mc_checkpoints=mc_checkpoints, exact_checkpoints=exact_checkpoints,
        eps_list=eps_list, n_paths=paths, rng=RngPolicy(seed),
        include_classical=classical, opts=opts, extra_echo=echo)

    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    emit_report(report, out_path)
    if figures:
        from .plots import render_stability_figure
        fig = render_stability_figure(report, out_path)
        if not quiet:
            print(f"wrote {fig}")
    if not quiet:
        print(f"wrote {out_path}")
        conv = report.condition.convergent
        src = "analytic" if report.condition.analytic is not None else "heuristic"
        print(f"condition series convergent: {conv} ({src}); "
              f"partial sum at n={report.condition.n_max}: "
              f"{report.condition.partial_sums[-1]:.6g}")
        for eps, verdict in report.verdicts:
            print(f"decay at eps={eps:g}: {verdict}")
        for gate in report.gates:
            print(f"gate {gate.name}: {'pass' if gate.passed else 'FAIL'} ({gate.detail})")
    return 0 if report.ok else 2


def _cmd_selftest(args) -> int:
    results = run_selftest()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.seconds:6.2f}s  {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> _Parser:
    parser = _Parser(prog="monoconv", description=__doc__)
    parser.add_argument("--version", action="version", version=f"monoconv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="master RNG seed")
        p.add_argument("--out", default="", help="output file path")
        p.add_argument("--paths", type=int, default=None, help="Monte Carlo path count")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("convolve", help="monotone-convolve measures, print atoms")
    common(p)
    p.add_argument("measures", nargs="+", metavar="MEASURE")
    p.add_argument("--check-identity", type=int, default=0, metavar="K",
                   help="verify the transform composition identity at K points")
    p.add_argument("--merge-tol", type=float, default=1e-9)
    p.add_argument("--prune-tol", type=float, default=1e-15)
    p.add_argument("--max-atoms", type=int, default=2_000_000)
    p.set_defaults(func=_cmd_convolve)

    p = sub.add_parser("transform-eval", help="evaluate G, F, F' at one point")
    common(p)
    p.add_argument("measure", metavar="MEASURE")
    p.add_argument("z", metavar="Z", help="complex literal a+bi")
    p.set_defaults(func=_cmd_transform_eval)

    p = sub.add_parser("simulate", help="simulate the chain and summarize")
    common(p)
    p.add_argument("--family", choices=("iid", "scaled"), default="iid")
    p.add_argument("--measure", default="two_point(-1,1,0.5)")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--normalizer", default="n")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_simulate, paths=100_000, seed=0)

    p = sub.add_parser("lln", help="run a stability experiment from a config file")
    common(p)
    p.add_argument("config", metavar="CONFIG")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    p.set_defaults(func=_cmd_lln)

    p = sub.add_parser("selftest", help="run the fast invariant suite")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ConfigError, PoleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, AtomBudgetError, ConsistencyError, RootFindError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
