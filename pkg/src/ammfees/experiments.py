"""Declarative experiment configs, market calibrations and run manifests.

A config names a market structure (venue count), a calibration rule that
splits one reference pool's depth across venues, the decay and baseline
intensity headers, the policy kinds to run, and output requests.  Configs
are JSON files with a versioned schema; validation happens before any
compute.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .market import FlowParams, OracleSpec
from .pools import PoolSpec, build_grid
from .simulate import ConfigurationError
from .solver import make_time_grid

SCHEMA_VERSION = 1
CALIBRATIONS = ("fair-split", "canonical", "monopoly")
POLICY_KINDS = ("optimal", "linear", "constant", "zero")

_OVERRIDE_FIELDS = {
    "sigma": float, "s0": float, "horizon": float, "grid_halfwidth": int,
    "rate_step": float, "center_rate": float, "total_depth_sq": float,
    "time_steps": int, "dt": float, "zeta": float, "k0": float, "k_cross": float,
    "linear_window": int, "scan_lambdas": list, "scan_structures": list,
    "scan_paths": int, "routing_child_steps": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    structure: int = 2
    calibration: str = "fair-split"
    k: float = 2.0
    lambdas: tuple = (100.0,)
    policies: tuple = ("optimal",)
    n_paths: int = 10_000
    seed: int = 20260810
    overrides: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        if not self.name:
            problems.append("name: must be non-empty")
        if self.calibration not in CALIBRATIONS:
            problems.append(f"calibration: {self.calibration!r} not in {CALIBRATIONS}")
        if self.structure < 1:
            problems.append(f"structure: must be >= 1, got {self.structure}")
        if self.calibration == "monopoly" and self.structure != 1:
            problems.append("structure: monopoly calibration requires structure = 1")
        if self.calibration == "canonical" and self.structure != 2:
            problems.append("structure: canonical calibration is defined for structure = 2")
        if self.k <= 0:
            problems.append(f"k: must be positive, got {self.k}")
        if not self.lambdas or any(l <= 0 for l in self.lambdas):
            problems.append(f"lambdas: must be non-empty positive values, got {self.lambdas}")
        bad = [p for p in self.policies if p not in POLICY_KINDS]
        if bad:
            problems.append(f"policies: unknown kinds {bad}; valid: {POLICY_KINDS}")
        if self.n_paths < 1:
            problems.append(f"n_paths: must be >= 1, got {self.n_paths}")
        if not 0 <= self.seed < 2 ** 64:
            problems.append("seed: must fit in 64 bits")
        for key, value in self.overrides.items():
            if key not in _OVERRIDE_FIELDS:
                problems.append(f"overrides.{key}: unknown field")
            elif value is not None and not isinstance(value, (_OVERRIDE_FIELDS[key], int)):
                problems.append(
                    f"overrides.{key}: expected {_OVERRIDE_FIELDS[key].__name__}, "
                    f"got {type(value).__name__}"
                )
        if problems:
            raise ConfigurationError("invalid experiment config:\n  " + "\n  ".join(problems))

    def override(self, key: str, default):
        value = self.overrides.get(key)
        return default if value is None else value

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "structure": self.structure,
            "calibration": self.calibration,
            "k": self.k,
            "lambdas": list(self.lambdas),
            "policies": list(self.policies),
            "n_paths": self.n_paths,
            "seed": self.seed,
            "overrides": dict(self.overrides),
            "outputs": dict(self.outputs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config root must be a JSON object")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"schema_version: expected {SCHEMA_VERSION}, got {version}"
            )
        known = {"schema_version", "name", "structure", "calibration", "k", "lambdas",
                 "policies", "n_paths", "seed", "overrides", "outputs"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        kwargs = {}
        for key in ("name", "calibration"):
            if key in d:
                kwargs[key] = d[key]
        for key in ("structure", "n_paths", "seed"):
            if key in d:
                if not isinstance(d[key], int):
                    raise ConfigurationError(f"{key}: expected integer, got {d[key]!r}")
                kwargs[key] = d[key]
        if "k" in d:
            kwargs["k"] = float(d["k"])
        if "lambdas" in d:
            kwargs["lambdas"] = tuple(float(x) for x in d["lambdas"])
        if "policies" in d:
            kwargs["policies"] = tuple(d["policies"])
        if "overrides" in d:
            if not isinstance(d["overrides"], dict):
                raise ConfigurationError("overrides: expected an object")
            kwargs["overrides"] = d["overrides"]
        if "outputs" in d:
            kwargs["outputs"] = d["outputs"]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(
                    f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
                ) from exc
        return cls.from_dict(data)


@dataclass
class MarketSetup:
    """Concrete market instance produced by a calibration."""

    specs: list
    grids: list
    flow: FlowParams
    oracle: OracleSpec
    horizon: float
    time_grid: np.ndarray
    dt: float
    label: str

    @property
    def n_venues(self) -> int:
        return len(self.specs)


def build_market(cfg: ExperimentConfig, lam: float, structure: int | None = None,
                 calibration: str | None = None) -> MarketSetup:
    """Instantiate the market for one intensity-header value.

    fair-split divides the reference depth (p squared) across M venues so
    every venue holds 1/M of the reference reserves on the same
    marginal-rate grid; canonical instead keeps the reference inventory
    grid, doubling the rate step and halving the decay and baselines.
    """
    structure = cfg.structure if structure is None else structure
    calibration = cfg.calibration if calibration is None else calibration
    if structure == 1:
        calibration = "monopoly"
    total_depth = float(cfg.override("total_depth_sq", 1e8))
    n = int(cfg.override("grid_halfwidth", 20))
    center = float(cfg.override("center_rate", 100.0))
    horizon = float(cfg.override("horizon", 1.0))
    time_steps = int(cfg.override("time_steps", 1000))
    dt = float(cfg.override("dt", 1e-3))
    zeta = float(cfg.override("zeta", 0.0))
    sigma = float(cfg.override("sigma", 0.0))
    s0 = float(cfg.override("s0", 100.0))

    if calibration == "monopoly":
        depth = total_depth
        step = float(cfg.override("rate_step", 0.1))
        k0 = float(cfg.override("k0", cfg.k))
        kx = 0.0
        lam_side = lam
        m = 1
    elif calibration == "fair-split":
        m = structure
        depth = total_depth / (m * m)
        step = float(cfg.override("rate_step", 0.1))
        k0 = float(cfg.override("k0", cfg.k))
        kx = float(cfg.override("k_cross", cfg.k))
        lam_side = lam
    else:  # canonical
        m = 2
        depth = total_depth / 4.0
        step = float(cfg.override("rate_step", 0.2))
        k0 = float(cfg.override("k0", cfg.k / 2.0))
        kx = float(cfg.override("k_cross", cfg.k / 2.0))
        lam_side = lam / 2.0

    spec = PoolSpec(depth_sq=depth, grid_halfwidth=n, rate_step=step, center_rate=center)
    grid = build_grid(spec)
    flow = FlowParams.symmetric(m, lam_side, lam_side, k0=k0, k_cross=kx, zeta=zeta)
    oracle = OracleSpec(s0=s0, sigma=sigma,
                        mode="arithmetic-brownian" if sigma > 0 else "constant")
    return MarketSetup(
        specs=[spec] * m, grids=[grid] * m, flow=flow, oracle=oracle,
        horizon=horizon, time_grid=make_time_grid(horizon, time_steps), dt=dt,
        label=f"{calibration}-m{m}-k{cfg.k:g}-lam{lam:g}",
    )


# ---------------------------------------------------------------------------
# Run manifests


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


def build_manifest(cfg: ExperimentConfig, extra: dict | None = None) -> dict:
    body = {
        "config": cfg.to_dict(),
        "solver": {
            "time_steps": int(cfg.override("time_steps", 1000)),
            "expm": "pade13-scaling-squaring",
            "generator_mode": "pde-row-state",
        },
        "volume_convention": "notional-X-at-pretrade-fee-free-rate",
        "event_scheme": "per-step bernoulli, at most one event per venue-side",
        "rng": "per-path streams, seed XOR path_index",
        "tool_version": __version__,
    }
    if extra:
        body.update(extra)
    digest = config_hash(body)
    return {**body, "manifest_hash": digest,
            "created_at": datetime.now(timezone.utc).isoformat()}


def manifest_comment_lines(manifest: dict) -> list:
    return [
        f"# manifest_hash={manifest['manifest_hash']}",
        f"# experiment={manifest['config']['name']}",
        f"# tool_version={manifest['tool_version']}",
    ]


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Named experiment catalog

_CATALOG_DEFS = {
    "table1_k2": dict(structure=2, calibration="fair-split", k=2.0,
                      lambdas=(100.0, 150.0), policies=("optimal", "linear", "constant"),
                      n_paths=100_000, outputs={"table": True, "monopoly_rows": True}),
    "table2_k1": dict(structure=2, calibration="fair-split", k=1.0,
                      lambdas=(100.0, 150.0), policies=("optimal", "linear", "constant"),
                      n_paths=100_000, outputs={"table": True, "monopoly_rows": True}),
    "table3_3players_k2": dict(structure=3, calibration="fair-split", k=2.0,
                               lambdas=(100.0, 150.0),
                               policies=("optimal", "linear", "constant"),
                               n_paths=100_000, outputs={"table": True, "monopoly_rows": False}),
    "table4_3players_k1": dict(structure=3, calibration="fair-split", k=1.0,
                               lambdas=(100.0, 150.0),
                               policies=("optimal", "linear", "constant"),
                               n_paths=100_000, outputs={"table": True, "monopoly_rows": False}),
    "fee_surfaces": dict(structure=2, calibration="fair-split", k=2.0,
                         lambdas=(50.0,), policies=("optimal",), n_paths=1,
                         outputs={"surfaces": True}),
    "canonical_duopoly_k2": dict(structure=2, calibration="canonical", k=2.0,
                                 lambdas=(100.0,), policies=("optimal", "constant"),
                                 n_paths=100_000, outputs={"table": True, "monopoly_rows": True}),
    # The declining-slippage mechanism needs an oracle that wanders (the
    # boundary region is where fee collection stops), so the scan runs the
    # Brownian oracle over a low-activity geometric intensity grid where
    # every structure sits on the decreasing, concave branch of the curve.
    "activity_scan": dict(structure=3, calibration="fair-split", k=2.0,
                          lambdas=(100.0,), policies=("optimal",), n_paths=2000,
                          overrides={"sigma": 2.0,
                                     "scan_lambdas": [2.0, 4.0, 8.0, 16.0, 32.0],
                                     "scan_structures": [1, 2, 3]},
                          outputs={"scan": True}),
    "determinism_probe": dict(structure=2, calibration="fair-split", k=2.0,
                              lambdas=(100.0,), policies=("optimal",), n_paths=500,
                              outputs={"table": True, "monopoly_rows": False}),
}

FIGURE_IDS = (
    "fees-vs-inventory",
    "fees-3d",
    "fees-vs-time",
    "fees-vs-oracle",
    "bid-ask-vs-volume",
    "slippage-vs-volume",
    "venue-revenue",
    "revenue-per-player",
)


def catalog_names() -> list:
    return sorted(_CATALOG_DEFS)


def catalog_config(name: str) -> ExperimentConfig:
    if name not in _CATALOG_DEFS:
        raise ConfigurationError(
            f"unknown experiment {name!r}; available: {', '.join(catalog_names())}"
        )
    return ExperimentConfig(name=name, **_CATALOG_DEFS[name])


def resolve_config(name_or_path: str) -> ExperimentConfig:
    """A catalog name, or a path to a config JSON file."""
    if name_or_path in _CATALOG_DEFS:
        return catalog_config(name_or_path)
    return ExperimentConfig.from_json(name_or_path)
