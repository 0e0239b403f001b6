"""Scenario files: schema, validation, dispatch to the experiment modules, manifests.

A scenario is a JSON object::

    {"experiment": "epr_chsh", "master_seed": 42, "output_path": "runs",
     "parameters": {...}}

Unknown keys anywhere are errors. Every parameter is turned into the owning
module's domain objects before any computation starts, so a bad scenario
fails with :class:`ConfigError` and writes nothing.
"""

from __future__ import annotations

import copy
import csv
import datetime as dt
import hashlib
import io
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from .balance import (
    RATE_FORMS,
    ModeSpectrum,
    analytic_occupancy,
    fit_chemical_potential,
    simulate_balance,
)
from .detection import POST_REDUCTION_PROFILE, MediumConfig, run_emulsion_experiment
from .epr import (
    POST_SPLIT_LAW,
    SPLIT_MODEL,
    VERDICT_SIGMAS,
    ChshSettings,
    EprModel,
    chsh,
    correlation_sweep,
)
from .errors import ConfigError, RealwaveError
from .evolution import EvolutionConfig, Potential, evolve
from .rng import SEED_MAX, derive_seed
from .spin import COARSE_STEP_DEG, CONE_LEVEL, ApparatusAxis, SpinDirection, estimate_direction, simulate_sg
from .wavepacket import (
    COALESCED_PROFILE,
    DEFAULT_OVERLAP_THRESHOLD,
    SPLIT_PROFILE,
    Grid1D,
    make_gaussian,
)

EXPERIMENTS = ("evolve", "emulsion", "stern_gerlach", "epr_chsh", "epr_sweep", "statistics")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_GRID = _obj({"n_points": _count, "spacing": _pos, "origin": _num}, ["n_points", "spacing"])
_PACKET = _obj(
    {"center": _num, "momentum": _num, "sigma": _pos, "mass": _pos, "species": {"type": "string"}},
    ["sigma"],
)
_POTENTIAL = {
    "oneOf": [
        _obj({"kind": {"const": "free"}}, ["kind"]),
        _obj({"kind": {"const": "harmonic"}, "omega": _pos, "center": _num}, ["kind", "omega"]),
        _obj({"kind": {"const": "barrier"}, "height": _num, "left": _num, "right": _num},
             ["kind", "height", "left", "right"]),
        _obj({"kind": {"const": "tabulated"}, "values": {"type": "array", "items": _num}}, ["kind", "values"]),
    ]
}
_ANGLES = _obj({"theta_deg": {"type": "number", "minimum": 0, "maximum": 180}, "phi_deg": _num}, ["theta_deg"])

PARAMETER_SCHEMAS = {
    "evolve": _obj(
        {"grid": _GRID, "packet": _PACKET, "potential": _POTENTIAL, "dt": _pos,
         "n_steps": {"type": "integer", "minimum": 0}, "trace_stride": _count},
        ["grid", "packet", "dt", "n_steps"],
    ),
    "emulsion": _obj(
        {"grid": _GRID, "packet": _PACKET, "evolve_time": _nonneg, "dt": _pos, "n_particles": _count,
         "medium": _obj({"delta_t": _pos, "reduction_width": _pos})},
        ["grid", "packet", "n_particles"],
    ),
    "stern_gerlach": _obj(
        {"spin": _ANGLES, "axes": {"type": "array", "items": _ANGLES, "minItems": 1}, "shots_per_axis": _count},
        ["spin", "shots_per_axis"],
    ),
    "epr_chsh": _obj(
        {"model": _obj({"kind": {"enum": ["P1", "P2", "mixture"]},
                        "p_split": {"type": "number", "minimum": 0, "maximum": 1}}, ["kind"]),
         "species": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
         "settings_deg": _obj({"a": _num, "a_prime": _num, "b": _num, "b_prime": _num},
                              ["a", "a_prime", "b", "b_prime"]),
         "n_per_setting": {"type": "integer", "minimum": 100}},
        ["n_per_setting"],
    ),
    "epr_sweep": _obj(
        {"mu": _nonneg, "distances": {"type": "array", "items": _nonneg, "minItems": 1},
         "zeta_deg": _num, "n": _count},
        ["mu", "distances", "n"],
    ),
    "statistics": _obj(
        {"kind": {"enum": ["bose", "fermi"]},
         "levels": {"type": "array", "items": _num, "minItems": 1},
         "degeneracy": _count, "beta": _pos, "total_quanta": {"type": "integer", "minimum": 0},
         "n_steps": _count, "burn_in": {"type": "integer", "minimum": 0}, "n_batches": {"type": "integer", "minimum": 2}},
        ["kind", "levels", "beta", "total_quanta", "n_steps"],
    ),
}

SCENARIO_SCHEMA = _obj(
    {"experiment": {"enum": list(EXPERIMENTS)},
     "master_seed": {"type": "integer", "minimum": 0, "maximum": SEED_MAX},
     "output_path": {"type": "string"},
     "parameters": {"type": "object"}},
    ["experiment", "master_seed", "parameters"],
)


@dataclass
class Scenario:
    experiment: str
    parameters: dict
    master_seed: int
    output_path: str = "runs"

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "master_seed": self.master_seed,
                "output_path": self.output_path, "parameters": self.parameters}

    def digest(self) -> str:
        """SHA-256 of the canonical JSON (sorted keys), excluding ``output_path``."""
        body = {k: v for k, v in self.to_dict().items() if k != "output_path"}
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _path(err: jsonschema.ValidationError, prefix: str = "") -> str:
    parts = [prefix] if prefix else []
    parts += [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts += extra[:1]
    elif err.validator == "required":
        parts.append(err.message.split("'")[1])
    return ".".join(parts) or "<root>"


def _schema_check(data, schema, prefix=""):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), str(e.absolute_path)))
    if errors:
        err = errors[0]
        if err.context:
            # oneOf: skip branches rejected by their discriminator, then report the deepest
            branch = [e for e in err.context if e.validator != "const"] or err.context
            err = max(branch, key=lambda e: len(e.absolute_path))
        raise ConfigError(err.message, _path(err, prefix))


def parse_scenario(data: dict, seed_override: int | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    data = copy.deepcopy(data)
    if seed_override is not None:
        data["master_seed"] = seed_override
    _schema_check(data, SCENARIO_SCHEMA)
    _schema_check(data["parameters"], PARAMETER_SCHEMAS[data["experiment"]], "parameters")
    return Scenario(data["experiment"], data["parameters"], data["master_seed"], data.get("output_path", "runs"))


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_scenario(data, seed_override)


class _Build:
    """Build domain objects, mapping precondition failures to field paths."""

    def __init__(self, params: dict):
        self.p = params

    def __call__(self, field: str, fn: Callable, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, RealwaveError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), f"parameters.{field}") from exc

    def grid(self) -> Grid1D:
        g = self.p["grid"]
        if "origin" in g:
            return self("grid", Grid1D, g["n_points"], g["spacing"], g["origin"])
        return self("grid", Grid1D.centered, g["n_points"], g["spacing"])

    def packet(self, grid):
        k = self.p["packet"]
        return self(
            "packet", make_gaussian, grid, k.get("center", 0.0), k.get("momentum", 0.0),
            k["sigma"], k.get("mass", 1.0), k.get("species", "electron"),
        )

    def potential(self) -> Potential:
        v = dict(self.p.get("potential", {"kind": "free"}))
        kind = v.pop("kind")
        if kind == "tabulated":
            return self("potential", Potential.tabulated, v["values"])
        return self("potential", Potential, kind, **v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# Each planner validates its parameters and returns (runner, design flags).
# A runner takes the thread count and returns {filename: text}.

def _plan_evolve(sc: Scenario, b: _Build):
    grid = b.grid()
    wp = b.packet(grid)
    pot = b.potential()
    b("potential", pot.values, grid, wp.mass)
    cfg = b("dt", EvolutionConfig, sc.parameters["dt"], sc.parameters["n_steps"],
            sc.parameters.get("trace_stride", 1))

    def run(threads):
        res = evolve(wp, pot, cfg)
        rows = [(r.time, r.mean_x, r.delta_x, r.delta_p, r.norm) for r in res.trace]
        return {
            "trace.csv": _csv(["time", "mean_x", "delta_x", "delta_p", "norm"], rows),
            "wavepacket.json": res.packet.to_json() + "\n",
            "leaks.json": _json([{"time": t, "tail_mass": m} for t, m in res.leak_warnings]),
        }

    return run, {"propagator": "strang split-step spectral, periodic", "potential": pot.to_dict()}


def _plan_emulsion(sc: Scenario, b: _Build):
    p = sc.parameters
    grid = b.grid()
    wp = b.packet(grid)
    medium = b("medium", MediumConfig, **p.get("medium", {}))
    b("medium.reduction_width", _require, medium.reduction_width >= 2 * grid.spacing,
      "reduction_width must be >= 2 * grid spacing")
    b("n_particles", _require, p["n_particles"] >= 100, "n_particles must be >= 100")
    t_ev = p.get("evolve_time", 0.0)
    step = p.get("dt", 0.01)
    n_steps = int(round(t_ev / step))
    b("evolve_time", _require, abs(n_steps * step - t_ev) <= 1e-9 * max(1.0, t_ev),
      "evolve_time must be a whole number of dt steps")
    seed = derive_seed(sc.master_seed, "emulsion", 0)

    def run(threads):
        proto = evolve(wp, Potential.free(), EvolutionConfig(step, n_steps, max(1, n_steps))).packet
        res = run_emulsion_experiment(proto, p["n_particles"], medium, seed, threads)
        rows = [(e.packet_id, e.position, e.time) for e in res.events]
        return {
            "events.csv": _csv(["packet_id", "position", "time"], rows),
            "summary.json": _json(res.summary()),
        }

    return run, {"reduction_width": medium.reduction_width, "delta_t": medium.delta_t,
                 "post_reduction_profile": POST_REDUCTION_PROFILE}


def _require(ok, message):
    if not ok:
        raise ValueError(message)


def _axis(d: dict, cls):
    return cls(np.radians(d["theta_deg"]), np.radians(d.get("phi_deg", 0.0)))


def _plan_stern_gerlach(sc: Scenario, b: _Build):
    p = sc.parameters
    spin = b("spin", _axis, p["spin"], SpinDirection)
    axes_cfg = p.get("axes", [{"theta_deg": 90, "phi_deg": 0}, {"theta_deg": 90, "phi_deg": 90}, {"theta_deg": 0}])
    axes = [b(f"axes.{i}", _axis, a, ApparatusAxis) for i, a in enumerate(axes_cfg)]
    vecs = np.array([a.vector for a in axes])
    b("axes", _require, len(axes) >= 3 and np.linalg.matrix_rank(vecs, tol=1e-9) == 3,
      "need at least three apparatus axes spanning 3-space")
    n = p["shots_per_axis"]

    def run(threads):
        counts = [simulate_sg(spin, a, n, derive_seed(sc.master_seed, "stern_gerlach", k), threads=threads)
                  for k, a in enumerate(axes)]
        est = estimate_direction(counts)
        rows = [(c.axis.theta, c.axis.phi, c.n_up, c.n_down) for c in counts]
        return {
            "counts.csv": _csv(["axis_theta", "axis_phi", "n_up", "n_down"], rows),
            "estimate.json": _json(est.to_dict()),
        }

    return run, {"mle_coarse_step_deg": COARSE_STEP_DEG, "cone_level": CONE_LEVEL}


def _plan_epr_chsh(sc: Scenario, b: _Build):
    p = sc.parameters
    if "species" in p:
        if "model" in p:
            raise ConfigError("give either model or species, not both", "parameters.species")
        model = EprModel.for_species(*p["species"])
    else:
        m = p.get("model", {"kind": "P1"})
        model = b("model", EprModel, m["kind"], m.get("p_split", 0.0))
    s = p.get("settings_deg")
    settings = ChshSettings.from_degrees(s["a"], s["a_prime"], s["b"], s["b_prime"]) if s else ChshSettings.standard()
    seed = derive_seed(sc.master_seed, "epr_chsh", 0)

    def run(threads):
        res = chsh(model, settings, p["n_per_setting"], seed, threads)
        return {"chsh.json": _json(res.to_dict())}

    return run, {"model": model.to_dict(), "post_split_law": POST_SPLIT_LAW,
                 "verdict_rule": f"s_hat - {VERDICT_SIGMAS:g} * stderr > 2"}


def _plan_epr_sweep(sc: Scenario, b: _Build):
    p = sc.parameters
    d = p["distances"]
    b("distances", _require, all(x <= y for x, y in zip(d, d[1:])), "distances must be sorted ascending")
    zeta = np.radians(p.get("zeta_deg", 0.0))
    seed = derive_seed(sc.master_seed, "epr_sweep", 0)

    def run(threads):
        rows = correlation_sweep(p["mu"], d, zeta, p["n"], seed, threads)
        return {"sweep.csv": _csv(
            ["distance", "p_split", "e_hat", "stderr", "e_copenhagen"],
            [(r.distance, r.p_split, r.e_hat, r.stderr, r.e_copenhagen) for r in rows],
        )}

    return run, {"mu": p["mu"], "split_model": SPLIT_MODEL, "post_split_law": POST_SPLIT_LAW}


def _plan_statistics(sc: Scenario, b: _Build):
    p = sc.parameters
    kind, g, beta = p["kind"], p.get("degeneracy", 1), p["beta"]
    levels = [float(e) for e in p["levels"]]
    n_modes = len(levels) * g
    total = p["total_quanta"]
    if kind == "fermi" and total > n_modes:
        raise ConfigError(f"{total} fermi quanta exceed {n_modes} modes", "parameters.total_quanta")
    burn_in = p.get("burn_in", p["n_steps"] // 10)
    b("burn_in", _require, p["n_steps"] > burn_in, "n_steps must exceed burn_in")
    spectrum = b("levels", ModeSpectrum.from_levels, levels, beta, g)
    per_cell = total / g
    gc_ok = 0 < total and (kind == "bose" or total < n_modes) and len(levels) > 1
    seed = derive_seed(sc.master_seed, "statistics", 0)

    def run(threads):
        res = simulate_balance(spectrum, kind, total, p["n_steps"], burn_in, seed,
                               n_batches=p.get("n_batches", 50))
        mean, se = res.per_level(g)
        mu = fit_chemical_potential(kind, beta, levels, per_cell) if gc_ok else None
        rows = []
        for i, e in enumerate(levels):
            analytic = analytic_occupancy(kind, beta, e, mu) if mu is not None else ""
            rows.append((i, e, float(mean[i]), float(se[i]), analytic))
        return {
            "occupations.csv": _csv(["mode_index", "energy", "mean_occupation", "stderr", "analytic_value"], rows),
            "fit.json": _json({"mu_fitted": mu, "mean_total_per_cell": per_cell, "degeneracy": g}),
        }

    return run, {"rate_form": RATE_FORMS[kind], "degeneracy": g, "mu_fit": "bisection on mean total, tol 1e-10"}


_PLANNERS = {
    "evolve": _plan_evolve,
    "emulsion": _plan_emulsion,
    "stern_gerlach": _plan_stern_gerlach,
    "epr_chsh": _plan_epr_chsh,
    "epr_sweep": _plan_epr_sweep,
    "statistics": _plan_statistics,
}


def design_flags(extra: dict) -> dict:
    flags = {
        "rng": "philox4x32-10; sub-seeds blake2b-64(master, label, index)",
        "coalesced_profile": COALESCED_PROFILE,
        "split_profile": SPLIT_PROFILE,
        "overlap_threshold": DEFAULT_OVERLAP_THRESHOLD,
        "post_reduction_profile": POST_REDUCTION_PROFILE,
        "split_model": SPLIT_MODEL,
        "post_split_law": POST_SPLIT_LAW,
        "rate_forms": RATE_FORMS,
    }
    flags.update(extra)
    return flags


class ModuleFailure(RealwaveError):
    """A module raised while running a validated scenario."""


def run_scenario(sc: Scenario, out: str | None = None, force: bool = False, threads: int = 1) -> Path:
    """Validate, compute, then write results and ``manifest.json``; return the run directory."""
    runner, extra = _PLANNERS[sc.experiment](sc, _Build(sc.parameters))
    started = dt.datetime.now(dt.timezone.utc)
    try:
        files = runner(threads)
    except (RealwaveError, ValueError, ArithmeticError) as exc:
        raise ModuleFailure(f"{sc.experiment}: {type(exc).__name__}: {exc}") from exc
    finished = dt.datetime.now(dt.timezone.utc)

    base = Path(out if out is not None else sc.output_path)
    digest = sc.digest()
    if force:
        target = base
    else:
        stamp = started.strftime("%Y%m%dT%H%M%S%fZ")
        target = base / f"{sc.experiment}-{stamp}-{digest[:8]}"
    manifest = {
        "tool": "realwave",
        "tool_version": __version__,
        "experiment": sc.experiment,
        "scenario_digest": digest,
        "master_seed": sc.master_seed,
        "started_at": started.isoformat(),
        "finished_at": finished.isoformat(),
        "threads": threads,
        "result_files": sorted(files),
        "design": design_flags(extra),
    }
    files = dict(files)
    files["manifest.json"] = _json(manifest)

    if target.exists() and not force:
        raise FileExistsError(f"{target} already exists")
    staging = target.with_name(target.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        for name, text in files.items():
            (staging / name).write_text(text, encoding="utf-8")
        target.mkdir(parents=True, exist_ok=True)
        for name in files:
            os.replace(staging / name, target / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    return target
