"""Command-line entry point.

    wellposed run --experiment fig4-floor --out results/
    wellposed run --config problem.yaml --out results/
    wellposed metrics a.csv b.csv --metrics hellinger,kl

Exit status: 0 success, 2 schema or usage error, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import copy
import math
import re
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bayes, gpfield, measures, metrics, sweep
from .errors import SchemaError, UnknownExperiment, WellposedError

# -- problem configs ----------------------------------------------------------

REQUIRED = object()

# dotted key -> (default, description)
CONFIG_KEYS = {
    "name": ("sweep", "stem of the output files"),
    "data_dim": (1, "data dimension; only 1 is supported"),
    "prior.family": (REQUIRED, "uniform | gaussian"),
    "prior.lower": (0.0, "uniform: left end of the support"),
    "prior.upper": (1.0, "uniform: right end of the support"),
    "prior.mean": (0.0, "gaussian: mean"),
    "prior.variance": (1.0, "gaussian: variance"),
    "prior.grid_n": (measures.DEFAULT_GRID_N, "number of quadrature nodes"),
    "prior.grid_lower": (None, "left grid end (default: support, or mean - 8 sd)"),
    "prior.grid_upper": (None, "right grid end (default: support, or mean + 8 sd)"),
    "prior.cell_centered": (False, "uniform: put nodes at cell centres, avoiding the ends"),
    "likelihood.kind": ("gaussian_noise", "gaussian_noise | floor_gaussian | custom_named"),
    "likelihood.forward": ("identity",
                           "identity | cube_root_data | reciprocal | sigmoid(w) | heaviside"),
    "likelihood.noise_variance": (1.0, "variance of the additive Gaussian noise"),
    "likelihood.name": (None, "custom_named: one of " + ", ".join(["cubic_data", "floor_data", "uninformative"])),
    "sweep.y_ref": (REQUIRED, "reference data value"),
    "sweep.y_min": (REQUIRED, "first swept data value"),
    "sweep.y_max": (REQUIRED, "last swept data value"),
    "sweep.step": (REQUIRED, "spacing of the swept data values"),
    "sweep.metrics": ("hellinger", "comma list of hellinger, tv, prokhorov, wasserstein, kl"),
    "sweep.p": (1.0, "Wasserstein order"),
    "sweep.tol": (metrics.DEFAULT_TOL, "Prokhorov bisection tolerance"),
    "check.y_probe": (None, "data value probed by the assumption checks (default: y_ref)"),
    "check.h_schedule": (None, "list of decreasing data increments for the continuity probe"),
    "check.p": (None, "moment order for the Wasserstein checks (default: sweep.p)"),
}

FORWARD_RE = re.compile(r"^sigmoid\(\s*([^)]+?)\s*\)$")


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key in {"prior", "likelihood", "sweep", "check"}:
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _real(key, v):
    if isinstance(v, bool):
        raise SchemaError(key, "expected a number")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise SchemaError(key, f"expected a number, got {v!r}") from None


def _int(key, v):
    if isinstance(v, bool) or _real(key, v) != int(_real(key, v)):
        raise SchemaError(key, f"expected an integer, got {v!r}")
    return int(_real(key, v))


def validate_config(raw) -> dict:
    """Flatten a nested mapping to dotted keys, reject unknown keys, fill
    defaults and coerce types."""
    if not isinstance(raw, dict):
        raise SchemaError("<root>", "config must be a mapping")
    flat = _flatten(raw)
    for key in flat:
        if key not in CONFIG_KEYS:
            raise SchemaError(key, "unknown key")
    cfg = {}
    for key, (default, _) in CONFIG_KEYS.items():
        v = flat.get(key, default)
        if v is REQUIRED:
            raise SchemaError(key, "required key missing")
        cfg[key] = v

    cfg["name"] = str(cfg["name"])
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", cfg["name"]):
        raise SchemaError("name", "use letters, digits, '.', '_' or '-'")
    if _int("data_dim", cfg["data_dim"]) != 1:
        raise SchemaError("data_dim", "only scalar data (data_dim = 1) is supported")
    if cfg["prior.family"] not in ("uniform", "gaussian"):
        raise SchemaError("prior.family", f"unknown family {cfg['prior.family']!r}")
    for k in ("prior.lower", "prior.upper", "prior.mean", "prior.variance",
              "likelihood.noise_variance", "sweep.y_ref", "sweep.y_min", "sweep.y_max",
              "sweep.step", "sweep.p", "sweep.tol"):
        cfg[k] = _real(k, cfg[k])
    for k in ("prior.grid_lower", "prior.grid_upper", "check.y_probe", "check.p"):
        if cfg[k] is not None:
            cfg[k] = _real(k, cfg[k])
    cfg["prior.grid_n"] = _int("prior.grid_n", cfg["prior.grid_n"])
    if not isinstance(cfg["prior.cell_centered"], bool):
        raise SchemaError("prior.cell_centered", "expected true or false")
    if cfg["prior.variance"] <= 0:
        raise SchemaError("prior.variance", "must be positive")
    if cfg["prior.upper"] <= cfg["prior.lower"]:
        raise SchemaError("prior.upper", "must exceed prior.lower")
    if cfg["likelihood.noise_variance"] <= 0:
        raise SchemaError("likelihood.noise_variance", "must be positive")
    if cfg["likelihood.kind"] not in ("gaussian_noise", "floor_gaussian", "custom_named"):
        raise SchemaError("likelihood.kind", f"unknown kind {cfg['likelihood.kind']!r}")
    fwd = str(cfg["likelihood.forward"]).strip()
    m = FORWARD_RE.match(fwd)
    if m:
        w = _real("likelihood.forward", m.group(1))
        if not w >= 1:
            raise SchemaError("likelihood.forward", "sigmoid weight must be >= 1")
        fwd = f"sigmoid({m.group(1)})"
    elif fwd not in ("identity", "cube_root_data", "reciprocal", "heaviside"):
        raise SchemaError("likelihood.forward", f"unknown forward map {fwd!r}")
    cfg["likelihood.forward"] = fwd
    if cfg["likelihood.kind"] == "floor_gaussian" and fwd != "identity":
        raise SchemaError("likelihood.forward", "floor_gaussian takes the identity forward map")
    if cfg["likelihood.kind"] == "custom_named" and cfg["likelihood.name"] not in CUSTOM_LIKELIHOODS:
        raise SchemaError("likelihood.name", f"unknown custom likelihood {cfg['likelihood.name']!r}")
    if not (cfg["sweep.step"] > 0 and cfg["sweep.y_max"] >= cfg["sweep.y_min"]):
        raise SchemaError("sweep.step", "need step > 0 and y_max >= y_min")
    try:
        cfg["sweep.metrics"] = metrics.parse_metrics(cfg["sweep.metrics"])
    except WellposedError as exc:
        raise SchemaError("sweep.metrics", str(exc)) from None
    if cfg["check.h_schedule"] is not None:
        hs = cfg["check.h_schedule"]
        if not isinstance(hs, (list, tuple)) or len(hs) < 2:
            raise SchemaError("check.h_schedule", "expected a list of at least two increments")
        cfg["check.h_schedule"] = tuple(_real("check.h_schedule", h) for h in hs)
    return cfg


def load_raw_config(path):
    text = Path(path).read_text()
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError("<file>", f"not valid YAML: {exc}") from None


def load_config(path) -> dict:
    return validate_config(load_raw_config(path))


def _forward(name):
    if name == "identity":
        return lambda t: np.asarray(t, dtype=float)
    if name == "reciprocal":
        def recip(t):
            with np.errstate(divide="ignore"):
                return 1.0 / np.asarray(t, dtype=float)
        return recip
    if name == "heaviside":
        return bayes.sigmoid_forward(math.inf)
    return bayes.sigmoid_forward(float(FORWARD_RE.match(name).group(1)))


def _uninformative(noise_variance):
    return bayes.Likelihood(lambda y, theta: np.ones_like(theta, dtype=float), 1, "uninformative")


CUSTOM_LIKELIHOODS = {
    "cubic_data": lambda nv: bayes.transformed_data_likelihood(np.cbrt, None, nv, "cube-root data"),
    "floor_data": bayes.floor_gaussian_likelihood,
    "uninformative": _uninformative,
}


def build_problem(cfg) -> bayes.BayesianProblem:
    n = cfg["prior.grid_n"]
    if cfg["prior.family"] == "gaussian":
        prior = bayes.gaussian_prior(cfg["prior.mean"], cfg["prior.variance"], n,
                                     cfg["prior.grid_lower"], cfg["prior.grid_upper"])
    else:
        lo, hi = cfg["prior.lower"], cfg["prior.upper"]
        if cfg["prior.cell_centered"]:
            grid = measures.Grid1D.cell_centered(lo, hi, n)
        else:
            glo = lo if cfg["prior.grid_lower"] is None else cfg["prior.grid_lower"]
            ghi = hi if cfg["prior.grid_upper"] is None else cfg["prior.grid_upper"]
            grid = measures.Grid1D(glo, ghi, n)
        x = grid.nodes
        prior = measures.normalize(grid, ((x >= lo) & (x <= hi)).astype(float))

    nv = cfg["likelihood.noise_variance"]
    kind, fwd = cfg["likelihood.kind"], cfg["likelihood.forward"]
    if kind == "floor_gaussian":
        lik = bayes.floor_gaussian_likelihood(nv)
    elif kind == "custom_named":
        lik = CUSTOM_LIKELIHOODS[cfg["likelihood.name"]](nv)
    elif fwd == "cube_root_data":
        lik = bayes.transformed_data_likelihood(np.cbrt, None, nv, "cube-root data")
    else:
        spec = bayes.GaussianNoiseSpec(_forward(fwd), np.array([[nv]]))
        lik = bayes.gaussian_likelihood(spec, f"gaussian noise, forward {fwd}")
    return bayes.BayesianProblem(prior, lik)


# -- built-in experiments -----------------------------------------------------

_UNIT_PRIOR = {"family": "uniform", "lower": 0.0, "upper": 1.0}


def _fig4(variant, kind):
    return {
        "name": f"fig4-floor-{variant}",
        "prior": dict(_UNIT_PRIOR),
        "likelihood": {"kind": kind, "forward": "identity", "noise_variance": 1.0},
        "sweep": {"y_ref": 1.0, "y_min": -5.0, "y_max": 5.0, "step": 0.001},
        "check": {"y_probe": 1.0},
    }


def _fig5(w):
    return {
        "name": f"fig5-sigmoid-w{w}",
        "prior": dict(_UNIT_PRIOR),
        "likelihood": {"kind": "gaussian_noise", "forward": f"sigmoid({w})", "noise_variance": 1.0},
        "sweep": {"y_ref": 0.0, "y_min": -13.0, "y_max": 13.0, "step": 0.01},
    }


PROBLEM_EXPERIMENTS = {
    "fig1-cubic": [{
        "name": "fig1-cubic",
        "prior": {"family": "gaussian", "mean": 0.0, "variance": 1.0,
                  "grid_lower": -8.0, "grid_upper": 8.0},
        "likelihood": {"kind": "gaussian_noise", "forward": "cube_root_data", "noise_variance": 1.0},
        "sweep": {"y_ref": 0.0, "y_min": -1.0, "y_max": 1.0, "step": 0.001},
    }],
    "ex32-wavelength": [{
        "name": "ex32-wavelength",
        "prior": dict(_UNIT_PRIOR, cell_centered=True),
        "likelihood": {"kind": "gaussian_noise", "forward": "reciprocal", "noise_variance": 1.0},
        "sweep": {"y_ref": 2.0, "y_min": 0.0, "y_max": 10.0, "step": 0.01},
    }],
    "fig4-floor": [_fig4("plain", "gaussian_noise"), _fig4("floor", "floor_gaussian")],
    "fig5-sigmoid": [_fig5(w) for w in ("1", "10", "100", "inf")],
}

EXPERIMENTS = {
    "fig1-cubic": "cube-root data transform: Hellinger vs y and vs cbrt(y)",
    "ex32-wavelength": "reciprocal forward map on a uniform prior over (0,1)",
    "fig4-floor": "likelihood continuous vs floor-discontinuous in the data",
    "fig5-sigmoid": "sigmoid forward maps with w = 1, 10, 100, inf",
    "fig6-gp": "Gaussian-process image reconstruction under white-noise perturbation",
    "delta-homeo": "noise-free theta^3 problem: point-mass posteriors in tv and Wasserstein",
    "model-select-demo": "posterior model weights for the identity vs square forward maps",
}

GP_SIGMAS = (0.0,) + tuple(10.0 ** k for k in range(-17, 3))


# -- runners -------------------------------------------------------------------


class Runner:
    def __init__(self, out, emit_svg=False, log=print):
        self.out = Path(out)
        self.emit_svg = emit_svg
        self.log = log
        self.written = []

    def write(self, name, text):
        path = self.out / name
        path.write_text(text)
        self.written.append(path)
        self.log(f"wrote {path}")
        return path

    def svg(self, curve, name, **kw):
        if not self.emit_svg:
            return
        from . import plotting

        path = plotting.plot_curve(curve, self.out / name, **kw)
        self.written.append(path)
        self.log(f"wrote {path}")

    def report(self, stem, curve, comments=()):
        rep = sweep.continuity_report(curve)
        self.write(f"{stem}.csv", curve.to_csv(report=rep, comments=comments))
        for ln in rep.lines():
            self.log(f"{stem}: {ln}")
        return rep


def apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if getattr(args, "grid_n", None) is not None:
        cfg["prior.grid_n"] = args.grid_n
    if getattr(args, "metrics", None):
        cfg["sweep.metrics"] = args.metrics
    if getattr(args, "p", None) is not None:
        cfg["sweep.p"] = args.p
    if getattr(args, "tol", None) is not None:
        cfg["sweep.tol"] = args.tol
    return cfg


def prepare(raw, args=None) -> dict:
    """Validate, apply command-line overrides, validate again."""
    cfg = validate_config(raw)
    if args is None:
        return cfg
    return validate_config(_unflatten(apply_overrides(cfg, args)))


def run_problem(cfg: dict, runner: Runner):
    """Sweep and assumption check for one validated problem config."""
    problem = build_problem(cfg)
    ys = sweep.data_grid(cfg["sweep.y_min"], cfg["sweep.y_max"], cfg["sweep.step"])
    curve = sweep.stability_sweep(problem, cfg["sweep.y_ref"], ys, cfg["sweep.metrics"],
                                  cfg["sweep.p"], cfg["sweep.tol"])
    stem = cfg["name"]
    rep = runner.report(stem, curve)
    runner.svg(curve, f"{stem}.svg", title=stem)
    if cfg["likelihood.forward"] == "cube_root_data" and cfg["likelihood.kind"] == "gaussian_noise":
        # same problem, swept on a uniform grid in the transformed data cbrt(y)
        ts = sweep.data_grid(np.cbrt(cfg["sweep.y_min"]), np.cbrt(cfg["sweep.y_max"]), cfg["sweep.step"])
        cube = sweep.stability_sweep(problem, cfg["sweep.y_ref"], ts ** 3, cfg["sweep.metrics"],
                                     cfg["sweep.p"], cfg["sweep.tol"])
        cube.param, cube.param_name = ts, "cbrt_y"
        cube.reference = f"cbrt_y_ref={np.cbrt(cfg['sweep.y_ref']):g}"
        runner.report(f"{stem}-cuberoot", cube)
        runner.svg(cube, f"{stem}-cuberoot.svg", title=f"{stem} against cbrt(y)")

    probe = cfg["check.y_probe"] if cfg["check.y_probe"] is not None else cfg["sweep.y_ref"]
    kw = {"p": cfg["check.p"] if cfg["check.p"] is not None else cfg["sweep.p"]}
    if cfg["check.h_schedule"] is not None:
        kw["h_schedule"] = cfg["check.h_schedule"]
    check = bayes.check_assumptions(problem, probe, **kw)
    runner.write(f"{stem}-assumptions.txt", "\n".join(check.lines()) + "\n")
    return curve, rep, check


def run_delta(args, runner: Runner):
    ys = sweep.data_grid(-1.0, 1.0, 0.01)
    mets = args.metrics or ("tv", "wasserstein")
    p = args.p if args.p is not None else 1.0
    tol = args.tol if args.tol is not None else metrics.DEFAULT_TOL
    curve = sweep.delta_sweep(np.cbrt, 0.0, ys, mets, p, tol)
    runner.report("delta-homeo", curve, comments=["posterior = point mass at cbrt(y)"])
    runner.svg(curve, "delta-homeo.svg", title="delta-homeo")
    return curve


def run_model_select(args, runner: Runner):
    n = args.grid_n or measures.DEFAULT_GRID_N
    prior = bayes.gaussian_prior(0.0, 1.0, n)
    models = [(lambda t: np.asarray(t, dtype=float), 0.5), (lambda t: np.asarray(t, dtype=float) ** 2, 0.5)]
    ys = sweep.data_grid(-3.0, 3.0, 0.01)
    curve = sweep.model_selection_sweep(models, prior, 1.0, 0.0, ys, ["identity", "square"])
    runner.report("model-select-demo", curve)
    runner.svg(curve, "model-select-demo.svg", title="model-select-demo")
    return curve


def run_gp(args, runner: Runner):
    n = args.image_n or 32
    stride = args.stride or 4
    reps = args.replicates or 20
    seed = args.seed if args.seed is not None else 0
    image = gpfield.synthetic_image(n)
    setup = sweep.FieldSetup(image, stride=stride, low_memory=n * n > 64 * 64)
    reg = setup.regression()
    curve = sweep.gp_stability_sweep(setup, GP_SIGMAS, reps, seed, regression=reg)
    notes = [f"image_n={n} stride={stride} noise_variance={setup.noise_variance:g} base_seed={seed}",
             f"noise level 5/max(observed) = {5.0 / reg.obs(image).max():.4g}"]
    text = curve.to_csv(with_status=False, comments=notes)
    runner.write("fig6-gp.csv", text)
    runner.svg(curve, "fig6-gp.svg", columns=["mean_sq_hellinger", "mean_rel_frobenius"],
               logx=True, logy=True, title="fig6-gp")

    observed = np.full(image.shape, np.nan)
    observed.ravel()[reg.obs.indices] = reg.obs(image)
    post_mean = reg.mean(reg.obs(image))
    panels = {"original": image, "observations": observed,
              "prior-mean": setup.prior_mean * np.ones_like(image), "posterior-mean": post_mean}
    for key, img in panels.items():
        stem = f"fig6-{key}"
        p = runner.out / f"{stem}.csv"
        gpfield.write_matrix_csv(img, p)
        runner.written.append(p)
        q = runner.out / f"{stem}.pgm"
        gpfield.write_pgm(np.nan_to_num(img, nan=255.0), q)
        runner.written.append(q)
        runner.log(f"wrote {p} and {q}")
    if runner.emit_svg:
        from . import plotting

        path = plotting.plot_images(list(panels.values()), list(panels), runner.out / "fig6-images.svg")
        runner.written.append(path)
        runner.log(f"wrote {path}")
    return curve


def run_named(name: str, args, runner: Runner):
    if name not in EXPERIMENTS:
        raise UnknownExperiment(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    if name in PROBLEM_EXPERIMENTS:
        return [run_problem(prepare(copy.deepcopy(c), args), runner) for c in PROBLEM_EXPERIMENTS[name]]
    return {"delta-homeo": run_delta, "model-select-demo": run_model_select,
            "fig6-gp": run_gp}[name](args, runner)


# -- argument parsing ------------------------------------------------------------


def _help_epilog() -> str:
    lines = ["experiments:"]
    lines += [f"  {k:<18} {v}" for k, v in EXPERIMENTS.items()]
    lines += ["", "config keys (YAML, nested or dotted; unknown keys are rejected):"]
    for k, (default, desc) in CONFIG_KEYS.items():
        d = "required" if default is REQUIRED else f"default {default}"
        lines.append(f"  {k:<26} {desc} ({d})")
    lines += ["", "exit status: 0 ok, 2 schema/usage, 3 numerical failure, 4 I/O"]
    return "\n".join(lines)


def _metric_list(text):
    try:
        return metrics.parse_metrics(text)
    except WellposedError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="wellposed",
        description="Quadrature posteriors, posterior distances and stability sweeps.",
        epilog=_help_epilog(), formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a named experiment or a config file",
                         epilog=_help_epilog(), formatter_class=fmt)
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--experiment", metavar="NAME", help="one of: " + ", ".join(EXPERIMENTS))
    src.add_argument("--config", metavar="PATH", help="YAML problem config")
    run.add_argument("--out", default=".", metavar="DIR", help="output directory (created if missing)")
    run.add_argument("--grid-n", type=int, help="quadrature nodes, overrides prior.grid_n")
    run.add_argument("--seed", type=int, help="base seed of the white-noise replicates (fig6-gp)")
    run.add_argument("--metrics", type=_metric_list, help="comma list of metrics")
    run.add_argument("--p", type=float, help="Wasserstein order")
    run.add_argument("--tol", type=float, help="Prokhorov tolerance")
    run.add_argument("--emit-svg", action="store_true", help="also render SVG figures")
    run.add_argument("--image-n", type=int, help="image side length (fig6-gp, default 32)")
    run.add_argument("--stride", type=int, help="observation stride (fig6-gp, default 4)")
    run.add_argument("--replicates", type=int, help="noise replicates per sigma (fig6-gp, default 20)")

    met = sub.add_parser("metrics", help="distances between two grid-measure CSV files")
    met.add_argument("file_a")
    met.add_argument("file_b")
    met.add_argument("--metrics", type=_metric_list, default=list(metrics.METRIC_NAMES))
    met.add_argument("--p", type=float, default=1.0)
    met.add_argument("--tol", type=float, default=metrics.DEFAULT_TOL)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "metrics":
            a = measures.read_grid_measure(args.file_a)
            b = measures.read_grid_measure(args.file_b)
            rep = metrics.distance_report(a, b, args.metrics, args.p, args.tol)
            print(rep.HEADER)
            print(rep.csv_row())
            return 0
        for flag in ("grid_n", "image_n", "stride", "replicates"):
            v = getattr(args, flag)
            if v is not None and v < 1:
                raise SchemaError("--" + flag.replace("_", "-"), "must be a positive integer")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        runner = Runner(out, args.emit_svg)
        if args.config:
            run_problem(prepare(load_raw_config(args.config), args), runner)
        else:
            run_named(args.experiment, args, runner)
        return 0
    except WellposedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def _unflatten(cfg: dict) -> dict:
    """Dotted keys back to the nested form, so overrides are re-validated."""
    out = {}
    for k, v in cfg.items():
        if k == "sweep.metrics":
            v = ",".join(v)
        head, _, tail = k.partition(".")
        if tail:
            out.setdefault(head, {})[tail] = v
        else:
            out[k] = v
    return out


if __name__ == "__main__":
    sys.exit(main())
