"""
Command-line front end.

    sphere-cbo [KIND] [--config FILE] [--sigma 5 --dt 0.0025 ...] [--out-csv F] [--out-json F]

KIND is one of single-run, benchmark-sweep, robust-pca, phase-retrieval,
property-suite (or ``kind = ...`` in the config file). The config file is a
flat ``key = value`` list; ``[section]`` headers are allowed and ignored.
Flags override file values, file values override defaults. Exit codes: 0 ok,
1 solver error, 2 configuration error, 3 I/O error.
"""

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import List, Optional

from . import __version__
from .dynamics import SolverParams, run
from .errors import ConfigError, InvalidParameterError, SphereCBOError
from .experiments import (
    PcaRow,
    PhaseRow,
    SweepRow,
    benchmark_sweep,
    phase_retrieval_curve,
    property_suite,
    robust_pca_experiment,
    run_streams,
)
from .gradient import GkvParams
from .objectives import (
    TEST_FUNCTIONS,
    gaussian_frame,
    haystack,
    load_pointcloud_csv,
    make_test_function,
    pca_energy,
    phase_retrieval_risk,
    rotated_minimizer,
)
from .sphere import sample_uniform

KINDS = ("single-run", "benchmark-sweep", "robust-pca", "phase-retrieval", "property-suite")
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "SPHERE_CBO_SEED"


def parse_alpha(text):
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _noise(text):
    s = str(text).strip().lower()
    aliases = {"aniso": "anisotropic", "anisotropic": "anisotropic",
               "iso": "isotropic", "isotropic": "isotropic"}
    if s not in aliases:
        raise ValueError("expected aniso or iso")
    return aliases[s]


def _bool(text):
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _list(conv):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [conv(t) for t in text]
        return [conv(t) for t in str(text).split(",") if t.strip()]
    return parse


def _choice(*options):
    def parse(text):
        s = str(text).strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


# key -> converter; config-file keys use the same names ('-' or '_')
FIELDS = {
    "kind": _choice(*KINDS),
    "lam": float, "sigma": float, "dt": float, "alpha": parse_alpha,
    "n_agents": _list(int), "batch_size": _list(int), "batch_fraction": float,
    "mu": float, "n_min": int, "max_iter": int, "n_stall": int, "delta_stall": float,
    "noise": _noise, "discard_period": int,
    "batch_mode": _choice("random", "full", "partition"),
    "seed": int, "threads": int,
    "function": _choice(*TEST_FUNCTIONS, "pca", "phase_retrieval"),
    "dim": int, "angle": float, "runs": int,
    "init": _choice("uniform", "vmf"), "kappa": float,
    "gkv": _bool, "ell": int, "gradient": _choice("analytic", "fd"),
    "points": int, "fractions": _list(float), "p": float, "cloud_csv": str,
    "frame_sizes": _list(int),
    "out_csv": str, "out_json": str,
}
ALIASES = {"lambda": "lam"}


@dataclass
class RunConfig:
    kind: str = "single-run"
    lam: float = 1.0
    sigma: float = 5.0
    dt: float = 0.0025
    alpha: float = 5e4
    n_agents: List[int] = field(default_factory=lambda: [100])
    batch_size: Optional[List[int]] = None
    batch_fraction: Optional[float] = None
    mu: float = 0.1
    n_min: int = 10
    max_iter: int = 20000
    n_stall: int = 250
    delta_stall: float = 1e-4
    noise: str = "anisotropic"
    discard_period: int = 10
    batch_mode: str = "random"
    seed: int = 0
    threads: int = 1
    function: str = "ackley"
    dim: int = 20
    angle: float = 0.0
    runs: int = 1
    init: str = "uniform"
    kappa: float = 0.0
    gkv: bool = False
    ell: int = 10
    gradient: str = "analytic"
    points: int = 200
    fractions: List[float] = field(default_factory=lambda: [0.5])
    p: float = 1.0
    cloud_csv: Optional[str] = None
    frame_sizes: List[int] = field(default_factory=lambda: [100])
    out_csv: Optional[str] = None
    out_json: Optional[str] = None

    def solver_params(self):
        """One SolverParams per requested agent count."""
        out = []
        for k, n in enumerate(self.n_agents):
            if self.batch_size is not None:
                m = self.batch_size[k if len(self.batch_size) > 1 else 0]
            elif self.batch_fraction is not None:
                m = max(1, int(round(self.batch_fraction * n)))
            else:
                m = n
            out.append(SolverParams(
                lam=self.lam, sigma=self.sigma, dt=self.dt, alpha=self.alpha, n_agents=n,
                batch_size=m, mu=self.mu, n_min=min(self.n_min, n), max_iter=self.max_iter,
                n_stall=self.n_stall, delta_stall=self.delta_stall, noise=self.noise,
                discard_period=self.discard_period, batch_mode=self.batch_mode, seed=self.seed))
        return out

    def gkv_params(self):
        return GkvParams(ell=self.ell, gradient_source=self.gradient) if self.gkv else None

    def validate(self):
        if self.batch_size is not None and len(self.batch_size) not in (1, len(self.n_agents)):
            raise ConfigError("batch_size: needs one value or one per n_agents entry")
        if self.batch_fraction is not None and not 0 < self.batch_fraction <= 1:
            raise ConfigError("batch_fraction: must satisfy 0 < batch_fraction <= 1")
        for name, ok, what in [
            ("runs", self.runs >= 1, "runs >= 1"),
            ("threads", self.threads >= 1, "threads >= 1"),
            ("dim", self.dim >= 2, "dim >= 2"),
            ("angle", 0 <= self.angle <= math.pi, "0 <= angle <= pi"),
            ("kappa", self.kappa >= 0, "kappa >= 0"),
            ("p", 0 < self.p <= 2, "0 < p <= 2"),
            ("points", self.points >= 2, "points >= 2"),
            ("ell", self.ell >= 1, "ell >= 1"),
            ("n_agents", len(self.n_agents) >= 1, "at least one agent count"),
            ("frame_sizes", all(m >= 1 for m in self.frame_sizes), "frame sizes >= 1"),
            ("fractions", all(0 <= f < 1 for f in self.fractions), "0 <= fraction < 1"),
        ]:
            if not ok:
                raise ConfigError(f"{name}: constraint violated ({what})")
        if self.kind == "single-run" and len(self.n_agents) != 1:
            raise ConfigError("n_agents: single-run takes exactly one agent count")
        if self.cloud_csv is not None and not os.path.isfile(self.cloud_csv):
            raise ConfigError(f"cloud_csv: file not found: {self.cloud_csv}")
        for sp in self.solver_params():
            try:
                sp.validate()
            except InvalidParameterError as exc:
                raise ConfigError(str(exc)) from None
        return self

    def echo(self):
        d = asdict(self)
        if math.isinf(d["alpha"]):
            d["alpha"] = "inf"
        return d

    @classmethod
    def from_mapping(cls, mapping):
        cfg = cls()
        for raw_key, value in mapping.items():
            key = ALIASES.get(raw_key, raw_key.replace("-", "_"))
            if key not in FIELDS:
                raise ConfigError(f"{raw_key}: unknown key")
            if value is None:
                setattr(cfg, key, None)
                continue
            try:
                setattr(cfg, key, FIELDS[key](value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{raw_key}: cannot parse {value!r} ({exc})") from None
        return cfg


def read_config_file(path):
    """Flat key/value pairs from a config file (sections are flattened)."""
    if not os.path.isfile(path):
        raise ConfigError(f"config: file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    try:
        parser.read_string("[__top__]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key] = value.strip().strip('"').strip("'")
    return flat


def build_parser():
    ap = argparse.ArgumentParser(prog="sphere-cbo", description=__doc__.split("\n\n")[0],
                                 argument_default=argparse.SUPPRESS)
    ap.add_argument("kind", nargs="?", choices=KINDS + (None,), default=None)
    ap.add_argument("--config", dest="config_path")
    ap.add_argument("--version", action="version", version=__version__)
    flags = [
        ("--lambda", "lam"), ("--sigma", "sigma"), ("--dt", "dt"), ("--alpha", "alpha"),
        ("--n-agents", "n_agents"), ("--batch-size", "batch_size"),
        ("--batch-fraction", "batch_fraction"), ("--mu", "mu"), ("--n-min", "n_min"),
        ("--max-iter", "max_iter"), ("--n-stall", "n_stall"), ("--delta-stall", "delta_stall"),
        ("--noise", "noise"), ("--discard-period", "discard_period"),
        ("--batch-mode", "batch_mode"), ("--seed", "seed"), ("--threads", "threads"),
        ("--function", "function"), ("--dim", "dim"), ("--angle", "angle"), ("--runs", "runs"),
        ("--init", "init"), ("--kappa", "kappa"), ("--gkv", "gkv"), ("--ell", "ell"),
        ("--gradient", "gradient"), ("--points", "points"), ("--fractions", "fractions"),
        ("--p", "p"), ("--cloud-csv", "cloud_csv"), ("--frame-sizes", "frame_sizes"),
        ("--out-csv", "out_csv"), ("--out-json", "out_json"),
    ]
    for flag, dest in flags:
        ap.add_argument(flag, dest=dest, metavar=dest.upper())
    return ap


def parse_config(argv=None):
    """Merge defaults, config file, environment seed and flags into a RunConfig."""
    ns = vars(build_parser().parse_args(argv))
    if ns.get("kind") is None:
        ns.pop("kind", None)
    mapping = {}
    if "config_path" in ns:
        mapping.update(read_config_file(ns.pop("config_path")))
    if "seed" not in mapping and "seed" not in ns and os.environ.get(SEED_ENV):
        mapping["seed"] = os.environ[SEED_ENV]
    mapping.update(ns)
    return RunConfig.from_mapping(mapping).validate()


# -- execution ------------------------------------------------------------------

SINGLE_COLUMNS = ("function", "noise", "d", "N", "M", "seed", "success", "sup_error",
                  "iterations", "avg_agents", "objective_evals", "stop_reason", "n_final",
                  "best_value")
PROPERTY_COLUMNS = ("name", "passed", "detail")


def _single_objective(cfg, data_rng):
    d = cfg.dim
    if cfg.function == "pca":
        if cfg.cloud_csv:
            cloud = load_pointcloud_csv(cfg.cloud_csv)
        else:
            n_out = int(round(cfg.points * cfg.fractions[0]))
            cloud = haystack(d, cfg.points - n_out, n_out, data_rng)
        return pca_energy(cloud, cfg.p)
    if cfg.function == "phase_retrieval":
        truth = sample_uniform(d, data_rng)
        return phase_retrieval_risk(gaussian_frame(d, cfg.frame_sizes[0], truth, data_rng))
    return make_test_function(cfg.function, d, rotated_minimizer(d, cfg.angle), rng=data_rng)


def execute(cfg):
    """Run the configured experiment; returns (csv columns, csv rows, json payload)."""
    params = cfg.solver_params()
    if cfg.kind == "single-run":
        sp = params[0]
        rng, data_rng = run_streams(cfg.seed, 0)
        obj = _single_objective(cfg, data_rng)
        init = "uniform"
        if cfg.init == "vmf":
            init = ("vmf", rotated_minimizer(obj.dim, cfg.angle), cfg.kappa)
        rep = run(obj, sp, init=init, rng=rng, gkv=cfg.gkv_params())
        rec = rep.record()
        row = [cfg.function, sp.noise, obj.dim, sp.n_agents, sp.m, cfg.seed, rec["success"],
               rec["sup_error"], rec["iterations"], rec["avg_agents"], rec["objective_evals"],
               rec["stop_reason"], rec["n_final"], rec["best_value"]]
        return SINGLE_COLUMNS, [row], {"rows": [dict(zip(SINGLE_COLUMNS, row))], "records": [rec]}

    if cfg.kind == "benchmark-sweep":
        if cfg.function not in TEST_FUNCTIONS:
            raise ConfigError(f"function: benchmark-sweep needs one of {sorted(TEST_FUNCTIONS)}")
        init = "uniform"
        if cfg.init == "vmf":
            init = ("vmf", rotated_minimizer(cfg.dim, cfg.angle), cfg.kappa)
        rows = benchmark_sweep(cfg.function, cfg.dim, params, cfg.runs, cfg.seed, cfg.angle,
                               init, cfg.threads)
        payload = {"rows": [], "records": []}
        for r in rows:
            entry = dict(zip(SweepRow.CSV_COLUMNS, r.csv_row()))
            entry.update(wilson_low=r.wilson[0], wilson_high=r.wilson[1],
                         stop_reasons=r.stop_reasons)
            payload["rows"].append(entry)
            payload["records"].append({"N": r.N, "M": r.M, "runs": r.records})
        return SweepRow.CSV_COLUMNS, [r.csv_row() for r in rows], payload

    if cfg.kind == "robust-pca":
        rows = robust_pca_experiment(cfg.dim, cfg.points, cfg.fractions, cfg.p, params[0],
                                     cfg.runs, cfg.seed, cfg.gkv_params(), threads=cfg.threads)
        payload = {"rows": [dict(zip(PcaRow.CSV_COLUMNS, r.csv_row())) for r in rows],
                   "records": [{"outlier_fraction": r.outlier_fraction, "errors": r.errors}
                               for r in rows]}
        return PcaRow.CSV_COLUMNS, [r.csv_row() for r in rows], payload

    if cfg.kind == "phase-retrieval":
        rows = phase_retrieval_curve(cfg.dim, cfg.frame_sizes, params[0], cfg.runs, cfg.seed,
                                     cfg.threads)
        return PhaseRow.CSV_COLUMNS, [r.csv_row() for r in rows], {
            "rows": [dict(zip(PhaseRow.CSV_COLUMNS, r.csv_row())) for r in rows]}

    checks = property_suite(cfg.seed)
    rows = [[c["name"], c["passed"], c["detail"]] for c in checks]
    return PROPERTY_COLUMNS, rows, {"rows": checks}


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def format_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, "item"):
        return _json_safe(obj.item())
    return obj


def emit_results(columns, rows, payload, cfg, csv_path=None, json_path=None, stream=None):
    """Write the CSV table and/or JSON summary (CSV goes to ``stream`` without a path)."""
    text = format_csv(columns, rows)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            fh.write(text)
    elif stream is not None:
        stream.write(text)
    if json_path:
        doc = {"kind": cfg.kind, "version": __version__, "config": cfg.echo()}
        doc.update(payload)
        with open(json_path, "w") as fh:
            json.dump(_json_safe(doc), fh, indent=2)
            fh.write("\n")


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"sphere-cbo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        columns, rows, payload = execute(cfg)
    except ConfigError as exc:
        print(f"sphere-cbo: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SphereCBOError, ArithmeticError) as exc:
        print(f"sphere-cbo: solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        emit_results(columns, rows, payload, cfg, cfg.out_csv, cfg.out_json, sys.stdout)
    except OSError as exc:
        print(f"sphere-cbo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
