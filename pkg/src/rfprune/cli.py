"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (``key = value`` lines, keys are
the long option names with dashes or underscores) and ``--seed``. Values are
resolved as defaults < config file < flags. Each artifact written with
``--out PATH`` gets a ``PATH.manifest`` holding the resolved parameters in the
same ``key = value`` format, so ``--config PATH.manifest`` replays the run.
Errors are reported on stderr as one line ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional

from . import __version__
from .dataset import DataError, csv_text, generate_model, model_spec, read_csv
from .forest import ConfigError, Forest, ForestConfig, empirical_l2_risk, train_forest
from .theory import (SubsampleClampWarning, approximation_term, beta, bound_report,
                     estimation_term, side_moment_constant, mc_side_second_moment,
                     min_subsample_size)
from .tuning import (MAXNODES, SAMPSIZE, SweepSpec, default_base_config, default_grid,
                     proportionality_csv_text, proportionality_study, rate_study, run_sweep,
                     sweep_csv_text)

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CLIError(Exception):
    def __init__(self, kind: str, message: str, status: int = EXIT_USAGE):
        super().__init__(message)
        self.kind = kind
        self.status = status


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise CLIError("bad-value", f"expected a comma-separated integer list, got {text!r}")


def _side_constant(text):
    if str(text) == "worst":
        return None
    return float(text)


def _optional_int(text):
    if text is None or str(text) in ("", "None", "none"):
        return None
    return int(text)


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: object = None
    help: str = ""
    choices: Optional[tuple] = None
    # options that do not change the artifacts stay out of the manifest
    in_manifest: bool = True

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


SEED = Option("seed", int, 0, "master seed (mandatory when the CI variable is set)")
THREADS = Option("threads", int, 1, "worker processes; results do not depend on it",
                 in_manifest=False)
OUT = Option("out", str, None, "output file; a .manifest is written next to it")

FOREST_OPTIONS = [
    Option("kind", str, "cart", "tree kind", ("cart", "median")),
    Option("trees", int, 500, "number of trees M"),
    Option("resample", str, None, "bootstrap | subsample | none (default bootstrap for "
           "cart, subsample for median)", ("bootstrap", "subsample", "none")),
    Option("sampsize", _optional_int, None, "subsample size a_n"),
    Option("mtry", _optional_int, None, "candidate coordinates per node (default ceil(d/3))"),
    Option("nodesize", _optional_int, None, "split while a node holds at least this many "
           "points (default 5)"),
    Option("maxnodes", _optional_int, None, "leaf budget, best-first growth"),
    Option("depth", _optional_int, None, "median tree depth k_n"),
]

COMMANDS: Dict[str, dict] = {
    "generate": dict(
        help="draw a synthetic dataset", randomized=True,
        options=[Option("model", int, None, "model id 1..8"),
                 Option("n", _optional_int, None, "sample size (default: the model's)"),
                 Option("noise-scale", float, 1.0, "noise multiplier"),
                 Option("noise-interpretation", str, "variance", "reading of N(0, 0.5)",
                        ("variance", "sd")),
                 SEED, OUT]),
    "train": dict(
        help="train a forest on a CSV dataset", randomized=True,
        options=[Option("data", str, None, "training CSV")] + FOREST_OPTIONS + [SEED, THREADS, OUT]),
    "predict": dict(
        help="predict with a saved forest", randomized=False,
        options=[Option("forest", str, None, "forest file"),
                 Option("data", str, None, "CSV of query points (y column optional)"),
                 SEED, OUT]),
    "risk": dict(
        help="empirical L2 risk of a saved forest on a CSV test set", randomized=False,
        options=[Option("forest", str, None, "forest file"),
                 Option("data", str, None, "test CSV"), SEED, OUT]),
    "sweep": dict(
        help="risk sweep over maxnodes or sampsize", randomized=True,
        options=[Option("model", int, None, "model id 1..8"),
                 Option("n", _optional_int, None, "sample size (default: the model's)"),
                 Option("param", str, MAXNODES, "swept parameter", (MAXNODES, SAMPSIZE)),
                 Option("grid", str, None, "comma-separated grid (default: fractions of the "
                        "training size)"),
                 Option("reps", int, 50, "repetitions"),
                 Option("trees", int, 500, "trees per forest"),
                 Option("mtry", _optional_int, None, "candidate coordinates per node"),
                 Option("nodesize", _optional_int, None, "nodesize of the swept forests"),
                 Option("noise-scale", float, 1.0, "noise multiplier"),
                 SEED, THREADS, OUT]),
    "optimal": dict(
        help="optimal maxnodes/sampsize as a function of n", randomized=True,
        options=[Option("model", int, None, "model id 1..8"),
                 Option("n-list", _int_list, [100, 200, 300, 400], "sample sizes"),
                 Option("param", str, MAXNODES, "swept parameter", (MAXNODES, SAMPSIZE)),
                 Option("reps", int, 50, "repetitions"),
                 Option("trees", int, 500, "trees per forest"),
                 Option("noise-scale", float, 1.0, "noise multiplier"),
                 SEED, THREADS, OUT]),
    "bound": dict(
        help="evaluate the median-forest risk bound", randomized=False,
        options=[Option("d", int, None, "dimension"),
                 Option("sigma2", float, None, "noise variance bound"),
                 Option("L", float, None, "Lipschitz constant"),
                 Option("n", int, None, "sample size"),
                 Option("kmax", int, 30, "largest depth listed"),
                 Option("approx-factor", str, "d", "dimension factor of the approximation "
                        "term", ("d", "d^1.5")),
                 SEED, OUT]),
    "verify-lemma": dict(
        help="Monte-Carlo check of median-tree cell side moments", randomized=True,
        options=[Option("d", int, None, "dimension"),
                 Option("k", int, None, "tree depth"),
                 Option("an", _optional_int, None, "subsample size (default 2^(k+6))"),
                 Option("trials", int, 10000, "Monte-Carlo trials"),
                 Option("path", str, "random", "measured cell: random path or the cube "
                        "centre's cell", ("random", "query")),
                 SEED, OUT]),
    "rate-study": dict(
        help="risk of d=1 median forests against n", randomized=True,
        options=[Option("n-list", _int_list, [256, 512, 1024, 2048, 4096], "sample sizes"),
                 Option("reps", int, 20, "repetitions"),
                 Option("sigma", float, 0.1, "noise standard deviation"),
                 Option("side-constant", _side_constant, 1.0, "constant of the side-moment "
                        "bound used for the depth; 'worst' selects exp(12/(4d-3))"),
                 SEED, THREADS, OUT]),
}

REQUIRED = {
    "generate": ["model"], "train": ["data"], "predict": ["forest", "data"],
    "risk": ["forest", "data"], "sweep": ["model"], "optimal": ["model"],
    "bound": ["d", "sigma2", "L", "n"], "verify-lemma": ["d", "k"], "rate-study": [],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfprune", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rfprune {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, spec in COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"])
        p.add_argument("--config", default=None, help="key = value parameter file")
        for opt in spec["options"]:
            kwargs = dict(dest=opt.dest, default=None, help=opt.help)
            if opt.choices:
                kwargs["choices"] = opt.choices
            p.add_argument(f"--{opt.name}", type=str, **kwargs)
    return parser


def read_config_file(path) -> Dict[str, str]:
    values = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CLIError("missing-file", f"cannot read config {path}: {exc.strerror}")
    for i, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CLIError("bad-config", f"{path}:{i}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


MANIFEST_ONLY_KEYS = {"command", "tool_version"}
RESULT_PREFIX = "result_"


def config_resolve(command: str, file_values: Dict[str, str], flag_values: Dict[str, str]):
    """Merge defaults, config-file values and flags into typed parameters."""
    options = {opt.dest: opt for opt in COMMANDS[command]["options"]}
    if file_values.get("command", command) != command:
        raise CLIError("bad-config", f"config is for '{file_values['command']}', not '{command}'")
    resolved = {}
    explicit = set()
    for dest, opt in options.items():
        raw = opt.default
        source = None
        if dest in file_values:
            raw, source = file_values[dest], "file"
        if flag_values.get(dest) is not None:
            raw, source = flag_values[dest], "flag"
        if source is not None:
            explicit.add(dest)
            if opt.choices and str(raw) not in opt.choices:
                raise CLIError("bad-value", f"--{opt.name} must be one of {', '.join(opt.choices)}")
            if str(raw) in ("None", "none") and opt.type is not str:
                raw = None
            try:
                raw = None if raw is None else opt.type(raw)
            except (TypeError, ValueError):
                raise CLIError("bad-value", f"--{opt.name}: cannot parse {raw!r}")
        resolved[dest] = raw
    unknown = {k for k in set(file_values) - set(options) - MANIFEST_ONLY_KEYS
               if not k.startswith(RESULT_PREFIX)}
    if unknown:
        raise CLIError("bad-config", f"unknown config keys: {', '.join(sorted(unknown))}")
    for dest in REQUIRED[command]:
        if resolved[dest] is None:
            raise CLIError("missing-option", f"--{options[dest].name} is required")
    if COMMANDS[command]["randomized"] and os.environ.get("CI") and "seed" not in explicit:
        raise CLIError("missing-seed", "--seed is mandatory when CI is set")
    return resolved


def forest_config_from(params: dict, d: int, n: int) -> ForestConfig:
    kind = params["kind"]
    resample = params["resample"] or ("bootstrap" if kind == "cart" else "subsample")
    if kind == "median":
        for name in ("mtry", "nodesize", "maxnodes"):
            if params.get(name) is not None:
                raise CLIError("bad-config", f"--{name} does not apply to --kind median")
        if params.get("depth") is None:
            raise CLIError("missing-option", "--depth is required for --kind median")
    elif params.get("depth") is not None:
        raise CLIError("bad-config", "--depth only applies to --kind median")
    if resample == "subsample" and params.get("sampsize") is None:
        raise CLIError("missing-option", "--sampsize is required with --resample subsample")
    if resample != "subsample" and params.get("sampsize") is not None:
        raise CLIError("bad-config", "--sampsize only applies to --resample subsample")
    try:
        cfg = ForestConfig(tree_kind=kind, M=params["trees"], resample=resample,
                           a_n=params.get("sampsize"), mtry=params.get("mtry"),
                           nodesize=params.get("nodesize"), maxnodes=params.get("maxnodes"),
                           k_n=params.get("depth"), master_seed=params["seed"])
        return cfg.resolve(n, d)
    except ConfigError as exc:
        raise CLIError("bad-config", str(exc))


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def write_manifest(command: str, params: dict, out: str, extra: Optional[dict] = None) -> None:
    options = {opt.dest: opt for opt in COMMANDS[command]["options"]}
    lines = [f"command = {command}", f"tool_version = {__version__}"]
    values = dict(params)
    # outputs worth recording but not inputs; replay skips result_* keys
    values.update({f"{RESULT_PREFIX}{k}": v for k, v in (extra or {}).items()})
    for key in sorted(values):
        if key in options and not options[key].in_manifest:
            continue
        lines.append(f"{key} = {_format(values[key])}")
    with open(out + ".manifest", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_data(path, require_response=True):
    if not os.path.exists(path):
        raise CLIError("missing-file", f"no such file: {path}", EXIT_FAILURE)
    return read_csv(path, require_response=require_response)


def _load_forest(path) -> Forest:
    if not os.path.exists(path):
        raise CLIError("missing-file", f"no such file: {path}", EXIT_FAILURE)
    return Forest.load(path)


def _model(params):
    return model_spec(params["model"], params.get("noise_scale", 1.0),
                      params.get("noise_interpretation", "variance"))


def cmd_generate(params):
    spec = _model(params)
    n = params["n"] if params["n"] is not None else spec.n_default
    params["n"] = n
    data = generate_model(spec, n, params["seed"])
    _emit(csv_text(data), params["out"])
    return params, {}


def cmd_train(params):
    data = _load_data(params["data"])
    cfg = forest_config_from(params, data.d, data.n)
    forest = train_forest(data, cfg, n_jobs=params["threads"])
    _emit(forest.to_text(), params["out"])
    params.update(kind=cfg.tree_kind, resample=cfg.resample, sampsize=cfg.a_n, mtry=cfg.mtry,
                  nodesize=cfg.nodesize)
    return params, {}


def cmd_predict(params):
    forest = _load_forest(params["forest"])
    data = _load_data(params["data"], require_response=False)
    if data.d != forest.d:
        raise CLIError("bad-data", f"data has d={data.d}, forest expects d={forest.d}",
                       EXIT_FAILURE)
    pred = forest.predict(data.features)
    _emit(_csv_text(["prediction"], [[repr(float(p))] for p in pred]), params["out"])
    return params, {}


def cmd_risk(params):
    forest = _load_forest(params["forest"])
    data = _load_data(params["data"])
    try:
        risk = empirical_l2_risk(forest, data)
    except ValueError as exc:
        raise CLIError("bad-data", str(exc), EXIT_FAILURE)
    _emit(_csv_text(["risk", "n_test", "M"], [[repr(risk), data.n, forest.config.M]]),
          params["out"])
    return params, {}


def _base_config(params, parameter):
    base = default_base_config(parameter, params["trees"])
    try:
        return replace(base, mtry=params.get("mtry"), nodesize=params.get("nodesize"))
    except ConfigError as exc:
        raise CLIError("bad-config", str(exc))


def cmd_sweep(params):
    spec_model = _model(params)
    n = params["n"] if params["n"] is not None else spec_model.n_default
    params["n"] = n
    grid = _int_list(params["grid"]) if params["grid"] else default_grid(params["param"], n)
    params["grid"] = grid
    try:
        spec = SweepSpec(spec_model, n, _base_config(params, params["param"]), params["param"],
                         tuple(grid), params["reps"], params["seed"])
        result = run_sweep(spec, n_jobs=params["threads"])
    except (ValueError, ConfigError) as exc:
        raise CLIError("bad-config", str(exc))
    _emit(sweep_csv_text(result), params["out"])
    return params, {"optimum": result.optimum}


def cmd_optimal(params):
    parameter = params["param"]
    try:
        rows = proportionality_study(_model(params), params["n_list"], parameter,
                                     _base_config(params | {"mtry": None, "nodesize": None},
                                                  parameter),
                                     params["reps"], params["seed"], n_jobs=params["threads"])
    except (ValueError, ConfigError) as exc:
        raise CLIError("bad-config", str(exc))
    _emit(proportionality_csv_text(rows, params["model"], parameter), params["out"])
    return params, {}


def cmd_bound(params):
    d, n, s2, L = params["d"], params["n"], params["sigma2"], params["L"]
    if d < 1 or n < 1 or s2 <= 0 or L <= 0:
        raise CLIError("bad-value", "need d >= 1, n >= 1, sigma2 > 0, L > 0")
    rep = bound_report(d, n, s2, L, params["approx_factor"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SubsampleClampWarning)
        a_clamped, expo = min_subsample_size(d, n, s2, L, params["approx_factor"])
    lines = [
        f"# beta={rep.beta!r}",
        f"# C={rep.C!r}",
        f"# C3={rep.C3!r}",
        f"# C4={rep.C4!r}",
        f"# k_star_real={rep.k_star_real!r}",
        f"# k_star_int={rep.k_star_int}",
        f"# a_n_min={rep.a_n_min!r}",
        f"# a_n_used={a_clamped!r}" + (" (clamped to n)" if caught else ""),
        f"# subsample_exponent={expo!r}",
        f"# rate_exponent={rep.rate_exponent!r}",
        f"# centred_rate_exponent={rep.centred_rate_exponent!r}",
    ]
    rows = []
    for k in range(params["kmax"] + 1):
        est = estimation_term(n, s2, k)
        app = approximation_term(d, L, k, params["approx_factor"])
        rows.append([k, repr(est + app), repr(est), repr(app)])
    text = "\n".join(lines) + "\n" + _csv_text(
        ["k", "bound", "estimation_term", "approximation_term"], rows)
    _emit(text, params["out"])
    if caught:
        sys.stderr.write(f"warning: {caught[0].message}\n")
    return params, {}


def cmd_verify_lemma(params):
    d, k = params["d"], params["k"]
    a_n = params["an"] if params["an"] is not None else 2 ** (k + 6)
    params["an"] = a_n
    try:
        est = mc_side_second_moment(a_n, k, d, params["trials"], params["seed"],
                                    path=params["path"])
    except ValueError as exc:
        raise CLIError("bad-config", str(exc))
    bound = side_moment_constant(d) * beta(d) ** k
    z = (est.estimate - est.exact_mean) / est.std_error if est.std_error > 0 else 0.0
    header = ["d", "k", "a_n", "trials", "path", "estimate", "std_error", "exact_mean",
              "z_score", "side_bound", "within_3se", "below_bound"]
    row = [d, k, a_n, params["trials"], params["path"], repr(est.estimate), repr(est.std_error),
           repr(est.exact_mean), repr(z), repr(bound), abs(z) <= 3,
           est.estimate <= bound + 3 * est.std_error]
    _emit(_csv_text(header, [row]), params["out"])
    return params, {}


def cmd_rate_study(params):
    res = rate_study(params["n_list"], params["reps"], params["sigma"], params["seed"],
                     side_constant=params["side_constant"], n_jobs=params["threads"])
    rows = [[n, k, repr(m), repr(s)] for n, k, m, s in
            zip(res.n_list, res.depths, res.mean_risk, res.std_risk)]
    text = f"# slope={res.slope!r}\n# target=-2/3\n" + _csv_text(
        ["n", "depth", "mean_risk", "std_risk"], rows)
    _emit(text, params["out"])
    return params, {"slope": res.slope}


HANDLERS = {
    "generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "risk": cmd_risk,
    "sweep": cmd_sweep, "optimal": cmd_optimal, "bound": cmd_bound,
    "verify-lemma": cmd_verify_lemma, "rate-study": cmd_rate_study,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise CLIError("usage", "a subcommand is required: " + " | ".join(COMMANDS))
        flags = vars(args)
        file_values = read_config_file(args.config) if args.config else {}
        params = config_resolve(args.command, file_values, flags)
        params, extra = HANDLERS[args.command](params)
        if params.get("out"):
            write_manifest(args.command, params, params["out"], extra)
        return 0
    except CLIError as exc:
        sys.stderr.write(f"error: {exc.kind}: {exc}\n")
        return exc.status
    except (DataError, ConfigError) as exc:
        sys.stderr.write(f"error: bad-data: {exc}\n")
        return EXIT_FAILURE
    except OSError as exc:
        sys.stderr.write(f"error: io: {exc}\n")
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
