"""Scenario definitions, shipped experiments, and config validation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

ALL_CHECKS = ("orlicz", "form", "spectral", "comparison", "heat")
MEASURE_TYPES = ("constant", "inverse_square_boundary", "inverse_square_origin", "table")


@dataclass
class Scenario:
    name: str
    grid: dict
    measure: dict
    nfunction: dict
    checks: tuple = ALL_CHECKS
    k_max: int = 16
    force_ladder: bool = False
    seed: int | None = None
    supersolution: str | None = None   # None | "xi" | "sqrt_rho"

    def as_dict(self):
        return {
            "name": self.name, "grid": self.grid, "measure": self.measure,
            "nfunction": self.nfunction, "checks": list(self.checks),
            "k_max": self.k_max, "force_ladder": self.force_ladder,
            "seed": self.seed, "supersolution": self.supersolution,
        }


def shipped_scenarios():
    """The six experiments the lab ships; names are stable identifiers."""
    unit = [[0.0, 1.0]]
    square = [[0.0, 1.0], [0.0, 1.0]]
    return [
        Scenario(
            "interval-baseline",
            grid={"dimension": 1, "extents": unit, "n": 63, "mask": None},
            measure={"type": "constant", "c": 0.0},
            nfunction={"kind": "power", "p": 3.0},
            supersolution="xi",
        ),
        Scenario(
            "interval-hardy-subcritical",
            grid={"dimension": 1, "extents": unit, "n": 127, "mask": None},
            measure={"type": "inverse_square_boundary", "c": 0.0625},
            nfunction={"kind": "power", "p": 3.0},
            supersolution="sqrt_rho",
        ),
        Scenario(
            "interval-hardy-critical",
            grid={"dimension": 1, "extents": unit, "n": 127, "mask": None},
            measure={"type": "inverse_square_boundary", "c": 0.25},
            nfunction={"kind": "power", "p": 3.0},
            force_ladder=True,
            supersolution="sqrt_rho",
        ),
        Scenario(
            "square-baseline",
            grid={"dimension": 2, "extents": square, "n": 31, "mask": None},
            measure={"type": "constant", "c": 0.0},
            nfunction={"kind": "power", "p": 2.0},
            supersolution="xi",
        ),
        Scenario(
            "square-boundary-hardy",
            grid={"dimension": 2, "extents": square, "n": 31, "mask": None},
            measure={"type": "inverse_square_boundary", "c": 0.25},
            nfunction={"kind": "power", "p": 2.0},
            supersolution="sqrt_rho",
        ),
        Scenario(
            "lshape-baseline",
            grid={"dimension": 2, "extents": square, "n": 31, "mask": {"shape": "lshape"}},
            measure={"type": "constant", "c": 0.0},
            nfunction={"kind": "power", "p": 2.0},
            supersolution="xi",
        ),
    ]


def shipped_config(seed=20240601):
    return {"seed": seed, "scenarios": [s.as_dict() for s in shipped_scenarios()]}


def _require(cond, msg, path):
    if not cond:
        raise ConfigError(msg, path)


def _validate_grid(g, path):
    _require(isinstance(g, dict), "grid must be an object", path)
    d = g.get("dimension")
    _require(d in (1, 2), "dimension must be 1 or 2", f"{path}.dimension")
    ext = g.get("extents")
    _require(isinstance(ext, list) and len(ext) == d, "extents must list one [lo, hi] per dimension", f"{path}.extents")
    for i, pair in enumerate(ext):
        _require(
            isinstance(pair, list) and len(pair) == 2 and all(isinstance(v, (int, float)) for v in pair),
            "extent must be a [lo, hi] pair", f"{path}.extents[{i}]",
        )
        _require(pair[1] > pair[0], "extent must have hi > lo", f"{path}.extents[{i}]")
    n = g.get("n")
    _require(isinstance(n, int) and n >= 3, "n must be an integer >= 3", f"{path}.n")
    mask = g.get("mask")
    if mask is not None:
        _require(isinstance(mask, dict) and mask.get("shape") in ("box", "lshape"),
                 "mask shape must be 'box' or 'lshape'", f"{path}.mask")
        if mask.get("shape") == "box":
            for key in ("lo", "hi"):
                _require(isinstance(mask.get(key), list) and len(mask[key]) == d,
                         f"box mask needs '{key}' with {d} coordinates", f"{path}.mask.{key}")


def _validate_measure(mspec, path):
    _require(isinstance(mspec, dict), "measure must be an object", path)
    mtype = mspec.get("type")
    _require(mtype in MEASURE_TYPES, f"measure type must be one of {MEASURE_TYPES}", f"{path}.type")
    if mtype != "table":
        c = mspec.get("c", 0.0)
        _require(isinstance(c, (int, float)), "coefficient c must be a number", f"{path}.c")
        _require(c >= 0, "coefficient c must be nonnegative", f"{path}.c")
    else:
        _require(isinstance(mspec.get("values"), list), "table measure needs 'values'", f"{path}.values")


def _validate_nfunction(nspec, path):
    _require(isinstance(nspec, dict), "nfunction must be an object", path)
    kind = nspec.get("kind")
    _require(kind in ("power", "table"), "nfunction kind must be 'power' or 'table'", f"{path}.kind")
    if kind == "power":
        p = nspec.get("p")
        _require(isinstance(p, (int, float)) and p > 1, "power kind needs p > 1", f"{path}.p")
    else:
        pts = nspec.get("points")
        _require(isinstance(pts, list) and len(pts) >= 3, "table kind needs >= 3 points", f"{path}.points")


def scenario_from_dict(d, path="scenario"):
    _require(isinstance(d, dict), "scenario must be an object", path)
    name = d.get("name")
    _require(isinstance(name, str) and name, "scenario needs a name", f"{path}.name")
    _validate_grid(d.get("grid"), f"{path}.grid")
    _validate_measure(d.get("measure"), f"{path}.measure")
    _validate_nfunction(d.get("nfunction"), f"{path}.nfunction")
    checks = d.get("checks", list(ALL_CHECKS))
    _require(isinstance(checks, list) and checks, "checks must be a nonempty list", f"{path}.checks")
    for c in checks:
        _require(c in ALL_CHECKS, f"unknown check {c!r}", f"{path}.checks")
    k_max = d.get("k_max", 16)
    _require(isinstance(k_max, int) and k_max >= 2, "k_max must be an integer >= 2", f"{path}.k_max")
    seed = d.get("seed")
    if seed is not None:
        _require(isinstance(seed, int), "seed must be an integer", f"{path}.seed")
    force = bool(d.get("force_ladder", False))
    supersol = d.get("supersolution")
    if supersol is not None:
        _require(supersol in ("xi", "sqrt_rho"), "supersolution must be 'xi' or 'sqrt_rho'",
                 f"{path}.supersolution")
    grid = dict(d["grid"])
    grid["extents"] = [list(map(float, pair)) for pair in grid["extents"]]
    return Scenario(
        name=name, grid=grid, measure=dict(d["measure"]), nfunction=dict(d["nfunction"]),
        checks=tuple(checks), k_max=k_max, force_ladder=force, seed=seed,
        supersolution=supersol,
    )


def validate_config(cfg):
    """Parse and validate a run config; returns (seed, scenarios).

    All validation happens before any solve; errors carry the config path
    of the offending field.
    """
    _require(isinstance(cfg, dict), "config must be a JSON object", "config")
    seed = cfg.get("seed", 0)
    _require(isinstance(seed, int), "seed must be an integer", "config.seed")
    raw = cfg.get("scenarios")
    _require(isinstance(raw, list) and raw, "config needs a nonempty 'scenarios' list", "config.scenarios")
    scenarios = [scenario_from_dict(d, f"config.scenarios[{i}]") for i, d in enumerate(raw)]
    names = [s.name for s in scenarios]
    _require(len(set(names)) == len(names), "scenario names must be unique", "config.scenarios")
    return seed, scenarios
