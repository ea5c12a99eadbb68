"""Command-line front end: ``lama-ct simulate | reconstruct | verify``.

Settings come from an optional INI file (keys under ``[run]``) and are
overridden by flags; the resolved settings are written to
``<out>/config_used.ini``. Exit codes: 0 success, 2 configuration error,
3 numerical failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
import time
import typing
from dataclasses import dataclass

import numpy as np

from . import checks, container, initnet, metrics, objective, regnet, solver, tomo
from .errors import ConfigError, LamaError, NumericalFailure
from .objective import Iterate, Problem
from .solver import SolverConfig

__all__ = ["RunConfig", "load_config", "build_parser", "main", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_VERIFY"]

log = logging.getLogger("lama_ct")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

PHANTOMS = ("shepp-logan", "disk")
PRESETS = ("tv", "random", "identity", "none")


@dataclass(frozen=True)
class RunConfig:
    # geometry and data
    image_size: int = 64
    n_views: int = 180
    n_detectors: int | None = None
    pixel_spacing: float | None = None
    detector_spacing: float | None = None
    rate: int = 4
    phantom: str = "shepp-logan"
    noise_std: float = 0.0
    seed: int = 0
    # model
    lam: float = 1.0
    reg_x: str = "tv"
    reg_x_weight: float = 1.0
    reg_z: str = "none"
    reg_z_weight: float = 1.0
    init: str = "linear-interp"
    init_weights: str | None = None
    filter: str = "ram-lak"
    baseline_only: bool = False
    # solver
    alpha: float | None = None
    beta: float | None = None
    alpha_hat: float | None = None
    beta_hat: float | None = None
    bar_alpha0: float | None = None
    bar_beta0: float | None = None
    rho: float = 0.5
    delta: float = 1e-4
    eta: float | None = None
    sigma: float = 1.0
    gamma: float = 0.5
    eps0: float = 1.0
    eps_tol: float = 1e-4
    max_iters: int = 300
    max_backtracks: int = 60
    grad_tol: float = 1e-12
    step_scale: float = 0.2
    step_rule: str = "joint"
    # io
    input: str | None = None
    out: str = "lama_out"

    def __post_init__(self):
        if self.phantom not in PHANTOMS:
            raise ConfigError(f"phantom must be one of {PHANTOMS}")
        if self.init not in initnet.KINDS:
            raise ConfigError(f"init must be one of {initnet.KINDS}")
        if self.init == "learned" and not self.init_weights:
            raise ConfigError("init = learned needs init_weights")
        if self.filter not in ("ram-lak", "hann"):
            raise ConfigError("filter must be ram-lak or hann")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")
        if not self.lam > 0:
            raise ConfigError("lam must be > 0")
        for key in ("reg_x", "reg_z"):
            if not getattr(self, key + "_weight") >= 0:
                raise ConfigError(f"{key}_weight must be >= 0")
            v = getattr(self, key)
            if v not in PRESETS and not os.path.isfile(v):
                raise ConfigError(f"{key} must be one of {PRESETS} or an existing weight file, got {v!r}")
        self.solver_config()  # validates the solver fields
        try:
            self.geometry()
            self.selector()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def geometry(self) -> tomo.Geometry:
        return tomo.Geometry(
            self.image_size, self.n_views, self.n_detectors, self.detector_spacing, self.pixel_spacing
        )

    def selector(self) -> tomo.ViewSelector:
        return tomo.ViewSelector(self.rate, self.n_views)

    def solver_config(self) -> SolverConfig:
        names = [f.name for f in dataclasses.fields(SolverConfig)]
        return SolverConfig(**{n: getattr(self, n) for n in names})


_HINTS = typing.get_type_hints(RunConfig)


def _parse_value(name, text):
    hint = _HINTS[name]
    optional = type(None) in typing.get_args(hint)
    base = next((t for t in typing.get_args(hint) if t is not type(None)), hint)
    text = str(text).strip()
    if optional and text.lower() in ("", "none", "auto"):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return base(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def _format_value(v):
    return "none" if v is None else str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the ``[run]`` section of ``path``, then ``overrides``."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if not parser.has_section("run"):
            raise ConfigError(f"{path}: missing [run] section")
        for key, text in parser.items("run"):
            key = key.replace("-", "_")
            if key not in _HINTS:
                raise ConfigError(f"{path}: unknown setting {key!r}")
            values[key] = _parse_value(key, text)
    values.update(overrides or {})
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def write_config(cfg: RunConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["run"] = {f.name: _format_value(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}
    with open(path, "w") as fh:
        parser.write(fh)


# -- pipeline ------------------------------------------------------------------


def _phantom(cfg):
    if cfg.phantom == "disk":
        return tomo.disk_phantom(cfg.image_size)
    return tomo.shepp_logan(cfg.image_size)


def simulate(cfg: RunConfig) -> dict[str, np.ndarray]:
    """Phantom, its full and sparse sinograms and, with noise, the perturbed variants.

    Noise is added to the image before projection, drawn from
    ``default_rng(seed)``.
    """
    geo, sel = cfg.geometry(), cfg.selector()
    x = _phantom(cfg)
    full = tomo.project(x, geo)
    out = {"phantom": x, "sinogram_full": full, "sinogram_sparse": tomo.select(full, sel)}
    if cfg.noise_std > 0:
        rng = np.random.default_rng(cfg.seed)
        noisy = x + cfg.noise_std * rng.standard_normal(x.shape)
        full_noisy = tomo.project(noisy, geo)
        out["phantom_noisy"] = noisy
        out["sinogram_full_noisy"] = full_noisy
        out["sinogram_sparse_noisy"] = tomo.select(full_noisy, sel)
    return out


def _net(choice, weight, cfg, shape):
    if choice == "none":
        return None
    if choice == "tv":
        return regnet.tv_net(weight)
    if choice == "identity":
        return regnet.identity_net()
    if choice == "random":
        return regnet.random_net(seed=cfg.seed, probe_shape=shape, gain=weight)
    return container.load_net(choice)


def build_problem(cfg: RunConfig, data: dict) -> Problem:
    geo = cfg.geometry()
    measured = data.get("sinogram_sparse_noisy", data["sinogram_sparse"])
    return Problem(
        geo,
        cfg.selector(),
        measured,
        cfg.lam,
        _net(cfg.reg_x, cfg.reg_x_weight, cfg, geo.image_shape),
        _net(cfg.reg_z, cfg.reg_z_weight, cfg, geo.sino_shape),
    )


def _view_shift(cfg):
    net = container.load_net(cfg.init_weights) if cfg.init == "learned" else None
    return initnet.ViewShiftOperator(cfg.init, cfg.rate, net)


def _load_input(cfg):
    data = container.load(cfg.input)
    for key in ("phantom", "sinogram_full", "sinogram_sparse"):
        if key not in data:
            raise ConfigError(f"{cfg.input}: missing entry {key!r}")
    return data


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    write_config(cfg, os.path.join(cfg.out, "config_used.ini"))
    return cfg.out


def cmd_simulate(cfg: RunConfig) -> list[str]:
    out = _outdir(cfg)
    data = simulate(cfg)
    path = os.path.join(out, "simulation.lama")
    container.save(path, data)
    preview = os.path.join(out, "phantom.pgm")
    container.export_pgm(data["phantom"], preview, 1.0, 0.0)
    return [path, preview]


def cmd_reconstruct(cfg: RunConfig) -> list[str]:
    out = _outdir(cfg)
    data = _load_input(cfg) if cfg.input else simulate(cfg)
    p = build_problem(cfg, data)
    geo, sel = p.geometry, p.selector
    truth, truth_sino = data["phantom"], data["sinogram_full"]
    span = float(truth.max() - truth.min()) or 1.0

    baseline = tomo.fbp_sparse(p.measured, sel, geo, cfg.filter)
    entries = {"fbp_sparse": baseline}
    rows = [("fbp_sparse", metrics.report(baseline, truth, tomo.project(baseline, geo), truth_sino))]
    written = []

    if not cfg.baseline_only:
        x0, z0 = initnet.init_reconstruct(_view_shift(cfg), p.measured, sel, geo, cfg.filter)
        rows.append(("init", metrics.report(x0, truth, z0, truth_sino)))
        t0 = time.perf_counter()
        result = solver.lama_solve(p, x0, z0, cfg.solver_config())
        log.info("solver stopped (%s) after %d iterations in %.1f s", result.reason, len(result.trace), time.perf_counter() - t0)
        rows.append(("lama", metrics.report(result.x, truth, result.z, truth_sino)))
        entries.update(x0=x0, z0=z0, x=result.x, z=result.z)
        trace_path = os.path.join(out, "trace.csv")
        container.export_csv_trace(result.trace, trace_path)
        written.append(trace_path)

    recon = os.path.join(out, "reconstruction.lama")
    container.save(recon, entries)
    written.append(recon)
    for name in ("fbp_sparse", "x0", "x"):
        if name in entries:
            pgm = os.path.join(out, f"{name}.pgm")
            container.export_pgm(entries[name], pgm, span, float(truth.min()))
            written.append(pgm)

    metrics_path = os.path.join(out, "metrics.csv")
    with open(metrics_path, "w") as fh:
        fh.write("method," + metrics.MetricReport.csv_header() + "\n")
        for method, rep in rows:
            fh.write(f"{method},{rep.csv_row()}\n")
    written.append(metrics_path)
    for method, rep in rows:
        log.info("%-10s psnr %.2f dB  ssim %.4f  sino rmse %.4g", method, rep.psnr, rep.ssim, rep.sino_rmse)
    return [recon] + [w for w in written if w != recon]


def _corrupt(backproject):
    def wrong(z, geo):
        return backproject(z, geo) * (1.0 + 1e-6)

    return wrong


def cmd_verify(cfg: RunConfig, corrupt_adjoint: bool = False) -> list[checks.CheckResult]:
    """Adjoint, gradient and Huber checks, then certificates of a fresh solve."""
    rng = np.random.default_rng(cfg.seed)
    geo = cfg.geometry()
    back = _corrupt(tomo.backproject) if corrupt_adjoint else None
    results = [checks.check_adjoint(geo, pairs=20, seed=cfg.seed, backproject=back)]

    small = regnet.random_net(channels=(4, 4), seed=cfg.seed, probe_shape=(8, 8))
    y = rng.standard_normal((8, 8))
    for eps in (1.0, 0.1, 0.01):
        results.append(checks.check_regularizer_gradient(small, y, eps, name=f"regularizer gradient eps={eps:g}"))
    results.append(checks.check_huber_reduction(rng.standard_normal((8, 8)), 0.5))

    g8 = tomo.Geometry(8, 12)
    sel8 = tomo.ViewSelector(3, 12)
    p8 = Problem(g8, sel8, rng.standard_normal((4, g8.n_detectors)), 1.0, small, regnet.tv_net(0.5))
    it8 = Iterate(rng.standard_normal(g8.image_shape), rng.standard_normal(g8.sino_shape), 0.1)
    results.extend(checks.check_objective_gradients(p8, it8))

    data = simulate(cfg)
    p = build_problem(cfg, data)
    x0, z0 = initnet.init_reconstruct(_view_shift(cfg), p.measured, p.selector, geo, cfg.filter)
    result = solver.lama_solve(p, x0, z0, cfg.solver_config())
    l_f = objective.data_lipschitz(p)
    cache = {}

    def lipschitz(eps):
        if eps not in cache:
            cache[eps] = solver.lipschitz_estimate(p, eps, l_f=l_f)
        return cache[eps]

    results.append(checks.check_trace(result.trace, result.config, lipschitz))
    return results


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lama-ct", description="Sparse-view CT reconstruction by safeguarded alternating minimization.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "write a phantom and its full and sparse sinograms"),
        ("reconstruct", "initialize, solve and write images, trace and metrics"),
        ("verify", "run the invariant battery and report pass/fail per check"),
    ):
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="INI file with settings under [run]")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        if name == "verify":
            sp.add_argument("--corrupt-adjoint", action="store_true", help="fault injection: perturb the back-projector")
        for f in dataclasses.fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            default = "none" if f.default is None else f.default
            if _HINTS[f.name] is bool:
                sp.add_argument(flag, dest=f.name, action="store_const", const=True, default=argparse.SUPPRESS, help=f"(default {default})")
            else:
                sp.add_argument(flag, dest=f.name, default=argparse.SUPPRESS, metavar=f.name.upper(), help=f"(default {default})")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = vars(ap.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    verbose = args.pop("verbose")
    corrupt = args.pop("corrupt_adjoint", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {k: v if isinstance(v, bool) else _parse_value(k, v) for k, v in args.items()}
        cfg = load_config(config_path, overrides)
        if command == "simulate":
            for path in cmd_simulate(cfg):
                print(path)
        elif command == "reconstruct":
            for path in cmd_reconstruct(cfg):
                print(path)
        else:
            results = cmd_verify(cfg, corrupt)
            for r in results:
                print(r.line())
            if not all(r.passed for r in results):
                return EXIT_VERIFY
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (container.ContainerError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LamaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
