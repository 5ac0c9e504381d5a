"""Command-line interface: analyze, simulate, nondim, eigs.

Configuration is a flat TOML file with sections [parameters], [dimensional],
[mesh], [run] and [output]; the shipped presets expand to exactly such files.
Every simulation directory receives a manifest sufficient to reproduce the
run (resolved parameters, run settings, mesh descriptor, seed, version).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 analysis-precondition failure.
"""

from __future__ import annotations

import os

# Honor the thread cap before any numerical library spins up its pools.
_threads = os.environ.get("TM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import dataclasses
import sys
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__, analysis, output, stability
from .fem import EigenSolveError, FemOperators, LinearSolveError, laplace_beltrami_eigs
from .kinetics import DimensionalParameters, Parameters, nondimensionalize
from .mesh import MeshError, SurfaceMesh, icosphere, load_off
from .simulator import (
    ConstantIC,
    RandomIC,
    RunConfig,
    SimulationAbort,
    SteadyStatePlusNoiseIC,
    conservation_check,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PRECONDITION = 4

PRESETS = (
    "fig2",
    "fig3-a2-half",
    "fig3-a2-double",
    "fig3-a3-half",
    "fig3-a3-double",
    "fig4-stable",
    "fig4-unstable",
)

PARAMETER_KEYS = ("a1", "a2", "a3", "a4", "a5", "a6", "a_neg6", "d", "gamma", "V0")


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunManifest:
    """Everything needed to reproduce a run byte-for-byte."""

    version: str
    preset: str | None
    parameters: dict
    run: dict
    mesh: dict
    seed: int
    outputs: dict
    status: str
    error: str | None = None

    def write(self, path):
        output.write_json(path, dataclasses.asdict(self))


# -- configuration ----------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(PRESETS)}"
        )
    ref = resources.files("memrd").joinpath(f"presets/{name}.toml")
    with ref.open("rb") as fh:
        return tomllib.load(fh)


def resolve_config(args) -> tuple[dict, str | None]:
    if getattr(args, "preset", None):
        return load_preset(args.preset), args.preset
    if getattr(args, "config", None):
        return load_config(args.config), None
    raise ConfigError("either --config or --preset is required")


def build_mesh(config: dict, args) -> tuple[SurfaceMesh, dict]:
    section = dict(config.get("mesh", {}))
    if getattr(args, "mesh_level", None) is not None:
        section = {"kind": "icosphere", "level": args.mesh_level}
    kind = section.get("kind", "icosphere")
    if kind == "icosphere":
        level = int(section.get("level", 4))
        mesh = icosphere(level)
        descriptor = {"kind": "icosphere", "level": level}
    elif kind == "off":
        path = section.get("path")
        if not path:
            raise ConfigError("[mesh] kind = 'off' requires a path")
        mesh = load_off(path)
        descriptor = {"kind": "off", "path": str(path)}
    else:
        raise ConfigError(f"unknown mesh kind {kind!r}")
    descriptor.update(
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        surface_area=mesh.surface_area(),
        enclosed_volume=mesh.enclosed_volume(),
    )
    return mesh, descriptor


def build_parameters(config: dict, mesh: SurfaceMesh | None) -> Parameters:
    section = config.get("parameters")
    if section is None:
        raise ConfigError("missing [parameters] section")
    missing = [key for key in PARAMETER_KEYS if key not in section]
    if missing:
        raise ConfigError(f"[parameters] missing keys: {', '.join(missing)}")
    unknown = set(section) - set(PARAMETER_KEYS) - {"c", "gamma_area"}
    if unknown:
        raise ConfigError(f"[parameters] unknown keys: {', '.join(sorted(unknown))}")
    values = {key: float(section[key]) for key in PARAMETER_KEYS}
    if "c" in section:
        values["c"] = float(section["c"])
    elif mesh is not None:
        values["c"] = 1.0 / mesh.enclosed_volume()
    if "gamma_area" in section:
        values["gamma_area"] = float(section["gamma_area"])
    elif mesh is not None:
        values["gamma_area"] = mesh.surface_area()
    try:
        return Parameters(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc


def build_run_config(config: dict, args) -> RunConfig:
    section = dict(config.get("run", {}))
    for flag, key in (("seed", "seed"), ("dt", "dt"), ("t_end", "t_end")):
        value = getattr(args, flag, None)
        if value is not None:
            section[key] = value
    ic_kind = section.pop("ic", "random")
    if ic_kind == "random":
        ic = RandomIC(float(section.pop("ic_lo", 0.0)), float(section.pop("ic_hi", 0.02)))
    elif ic_kind == "constant":
        try:
            ic = ConstantIC(float(section.pop("ic_u")), float(section.pop("ic_v")))
        except KeyError as exc:
            raise ConfigError(f"[run] ic = 'constant' requires {exc}") from exc
    elif ic_kind == "steady_state_plus_noise":
        ic = SteadyStatePlusNoiseIC(float(section.pop("ic_amplitude", 1e-3)))
    else:
        raise ConfigError(f"unknown initial condition {ic_kind!r}")
    known = {"dt", "t_end", "linear_tol", "stationarity_tol", "min_stop_time",
             "snapshot_interval", "seed"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"[run] unknown keys: {', '.join(sorted(unknown))}")
    kwargs = {key: (int(section[key]) if key == "seed" else float(section[key]))
              for key in known & set(section)}
    try:
        return RunConfig(ic=ic, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid run settings: {exc}") from exc


def build_dimensional(config: dict) -> DimensionalParameters:
    section = config.get("dimensional")
    if section is None:
        raise ConfigError("missing [dimensional] section")
    fields = [f.name for f in dataclasses.fields(DimensionalParameters)]
    missing = [name for name in fields if name not in section]
    if missing:
        raise ConfigError(f"[dimensional] missing keys: {', '.join(missing)}")
    try:
        return DimensionalParameters(**{name: float(section[name]) for name in fields})
    except ValueError as exc:
        raise ConfigError(f"invalid dimensional parameters: {exc}") from exc


def output_dir(config: dict, args) -> Path:
    out = getattr(args, "out", None) or config.get("output", {}).get("directory", "memrd-out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- subcommands ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    config, _preset = resolve_config(args)
    mesh, mesh_descriptor = build_mesh(config, args)
    p = build_parameters(config, mesh)
    ops = FemOperators.from_mesh(mesh)
    k = min(30, mesh.n_vertices - 2)
    eigenvalues, _ = laplace_beltrami_eigs(ops.mass, ops.stiffness, k)
    try:
        report = stability.turing_report(p, surface_eigenvalues=eigenvalues)
    except stability.SteadyStateError as exc:
        payload = {
            "error": "steady_state_failure",
            "message": str(exc),
            "diagnostics": exc.diagnostics,
            "parameters": p.to_dict(),
        }
        print(output.dump_json(payload), file=sys.stderr)
        return EXIT_PRECONDITION
    payload = report.to_dict()
    payload["parameters"] = p.to_dict()
    payload["mesh"] = mesh_descriptor
    payload["surface_eigenvalues"] = eigenvalues
    text = output.dump_json(payload)
    print(text)
    if args.out:
        directory = output_dir(config, args)
        (directory / "analyze.json").write_text(text + "\n", encoding="ascii")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config, preset = resolve_config(args)
    mesh, mesh_descriptor = build_mesh(config, args)
    p = build_parameters(config, mesh)
    cfg = build_run_config(config, args)
    directory = output_dir(config, args)
    write_vtk = bool(config.get("output", {}).get("vtk", True))

    ops = FemOperators.from_mesh(mesh)
    manifest = RunManifest(
        version=__version__, preset=preset, parameters=p.to_dict(),
        run={**dataclasses.asdict(cfg), "ic": repr(cfg.ic)},
        mesh=mesh_descriptor, seed=cfg.seed,
        outputs={"series": "series.csv", "summary": "summary.json",
                 "manifest": "manifest.json", "snapshots": "snapshot_*.vtk"},
        status="running",
    )
    manifest.write(directory / "manifest.json")

    def snapshot(state):
        if write_vtk:
            output.write_vtk(
                directory / f"snapshot_{state.step:08d}.vtk", mesh,
                {"u": state.u, "v": state.v},
                title=f"t={state.t:.6g}",
            )

    try:
        final, series = run(mesh, ops, p, cfg, snapshot_callback=snapshot)
    except (SimulationAbort, LinearSolveError) as exc:
        manifest.status = "failed"
        manifest.error = str(exc)
        manifest.write(directory / "manifest.json")
        if isinstance(exc, SimulationAbort):
            output.write_series_csv(directory / "series.csv", exc.series)
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    summary = analysis.classify(final, series, mesh, ops.mass)
    output.write_series_csv(directory / "series.csv", series)
    output.write_json(directory / "summary.json", {
        **summary.to_dict(),
        "steps": final.step,
        "t_final": final.t,
        "pool_final": final.V,
        "conservation_deviation": conservation_check(series, p),
        "u_range": [float(final.u.min()), float(final.u.max())],
        "v_range": [float(final.v.min()), float(final.v.max())],
    })
    manifest.status = "completed"
    manifest.write(directory / "manifest.json")
    print(f"{summary.classification}: n_maxima={summary.n_maxima} "
          f"heterogeneity={summary.heterogeneity:.3e} converged={summary.converged} "
          f"steps={final.step} -> {directory}")
    return EXIT_OK


def cmd_nondim(args) -> int:
    config, _preset = resolve_config(args)
    dp = build_dimensional(config)
    p = nondimensionalize(dp)
    conditions = stability.check_conditions(p)
    payload = {
        "parameters": p.to_dict(),
        "conditions": {
            key: {"left": rec.left, "right": rec.right, "satisfied": rec.satisfied,
                  "equality": rec.equality, "description": rec.description}
            for key, rec in conditions.items()
        },
    }
    text = output.dump_json(payload)
    print(text)
    if args.out:
        directory = output_dir(config, args)
        (directory / "nondim.json").write_text(text + "\n", encoding="ascii")
    return EXIT_OK


def _cluster_eigenvalues(values, rel_tol=0.05):
    clusters = []
    for value in values:
        if clusters and value - clusters[-1][-1] <= rel_tol * max(1.0, abs(value)):
            clusters[-1].append(value)
        else:
            clusters.append([value])
    return clusters


def cmd_eigs(args) -> int:
    config = {}
    preset = None
    if getattr(args, "config", None) or getattr(args, "preset", None):
        config, preset = resolve_config(args)
    mesh, _descriptor = build_mesh(config, args)
    ops = FemOperators.from_mesh(mesh)
    try:
        values, _vectors = laplace_beltrami_eigs(ops.mass, ops.stiffness, args.k)
    except EigenSolveError as exc:
        print(f"eigensolver failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    lines = ["index,eigenvalue,cluster,cluster_size"]
    index = 0
    for cluster_id, cluster in enumerate(_cluster_eigenvalues(values)):
        for value in cluster:
            lines.append(f"{index},{value:.12g},{cluster_id},{len(cluster)}")
            index += 1
    text = "\n".join(lines)
    print(text)
    if args.out:
        directory = output_dir(config, args)
        (directory / "eigs.csv").write_text(text + "\n", encoding="ascii")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memrd",
        description="Nonlocal surface reaction-diffusion: simulation and "
                    "instability analysis",
    )
    parser.add_argument("--version", action="version", version=f"memrd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, preset=True):
        sp.add_argument("--config", help="TOML configuration file")
        if preset:
            sp.add_argument("--preset", choices=PRESETS, help="named experiment preset")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--mesh-level", type=int, default=None,
                        help="icosphere subdivision level (overrides [mesh])")

    sp = sub.add_parser("analyze", help="steady state, condition table, instability band")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("simulate", help="time integration with snapshots and summary")
    common(sp)
    sp.add_argument("--seed", type=int, default=None, help="random seed override")
    sp.add_argument("--dt", type=float, default=None, help="time step override")
    sp.add_argument("--t-end", dest="t_end", type=float, default=None,
                    help="final time override")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("nondim", help="map dimensional rates to model constants")
    sp.add_argument("--config", required=True, help="TOML file with [dimensional]")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_nondim)

    sp = sub.add_parser("eigs", help="surface eigenvalue table")
    common(sp)
    sp.add_argument("--k", type=int, default=10, help="number of eigenvalues")
    sp.set_defaults(func=cmd_eigs)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LinearSolveError, EigenSolveError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except stability.SteadyStateError as exc:
        print(f"analysis precondition failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
