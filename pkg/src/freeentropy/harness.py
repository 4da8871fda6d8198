"""Experiments comparing a finite-n microstates lower bound with the
non-microstates upper estimate on the same smoothed law.

The microstates side is a random matrix model X^(n) whose law converges to
law(X0) boxplus semicircle(t0): its normalized entropy at finite n is a proxy
for the ultralimit and is always labelled as such.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, _kernels
from .chistar import FlowGrid, chi_star_upper
from .lawkit import DiagonalOracle, SpectralLaw, free_product, heat_flow_law, load_law, quantile_microstate, tomllib
from .ncpoly import Letter
from .rmt import DiagonalAtomMixture, GaussianEnsemble, entropy_mc, gaussian_entropy_exact

PROXY_LABEL = "finite-n proxy for the ultralimit"
SLACK = 1e-6


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    base: dict
    m: int = 1
    y_laws: List[dict] = field(default_factory=list)
    t0: float = 1.0
    n_grid: List[int] = field(default_factory=lambda: [4, 8, 16])
    degree: int = 4
    nodes: int = 64
    u_max: float = 0.999
    samples: int = 2000
    seed: int = 0
    models: List[str] = field(default_factory=lambda: ["quantile", "gaussian", "atom-mixture"])
    n_ref: int = 2048
    name: str = "custom"
    out: Optional[str] = None

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive: without smoothing the model has no density")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly increasing")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        unknown = set(self.models) - {"quantile", "gaussian", "atom-mixture"}
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}")
        self.base_law  # validates

    @property
    def base_law(self) -> SpectralLaw:
        return load_law(self.base)

    @property
    def y_law_objs(self) -> List[SpectralLaw]:
        return [load_law(d) for d in self.y_laws]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "base" not in d:
            raise ValueError("config needs a 'base' law")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        d = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)


BUILTINS = {
    "semicircular": dict(base={"type": "point_mass", "at": 0.0}, t0=1.0),
    "semicircle-shift": dict(base={"type": "semicircle", "variance": 1.0}, t0=1.0),
    "two-point": dict(base={"type": "atoms", "points": [-1.0, 1.0], "weights": [0.5, 0.5]}, t0=0.5),
}


def builtin_config(name: str, **overrides) -> ExperimentConfig:
    if name not in BUILTINS:
        raise ValueError(f"unknown builtin {name!r}; choose from {sorted(BUILTINS)}")
    d = dict(BUILTINS[name], name=name)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(d)


def base_oracle(config: ExperimentConfig):
    """Joint law of (X0, Y) for the non-microstates side.

    Without conditioning variables the x's are free copies of the base law.
    With conditioning, x's and y's are the commuting quantile diagonals at
    ``n_ref`` -- the same coupling the deterministic microstates carry.
    """
    law = config.base_law
    if not config.y_laws:
        return free_product({Letter("x", j): law for j in range(1, config.m + 1)})
    n = config.n_ref
    diags = {Letter("x", j): np.diag(quantile_microstate(law, n)) for j in range(1, config.m + 1)}
    for k, ylaw in enumerate(config.y_law_objs, start=1):
        diags[Letter("y", k)] = np.diag(quantile_microstate(ylaw, n))
    return DiagonalOracle(diags)


def _applicable_models(config: ExperimentConfig):
    law = config.base_law
    out = []
    for name in config.models:
        if name == "quantile":
            out.append(name)
        elif name == "gaussian" and not config.y_laws and law.semicircle_variance is not None:
            out.append(name)
        elif name == "atom-mixture" and not config.y_laws and config.m == 1 and law.kind == "atoms" and not law.is_zero:
            out.append(name)
    return out


def microstates_entropy_lower_bound(config: ExperimentConfig) -> dict:
    """Normalized entropies h^(n) of admissible matrix models on the n-grid.

    * ``quantile``: X = X0 + sqrt(t0) S, X0 the quantile microstates (Haar
      rotated independently for m > 1; the rotation can only raise entropy,
      so the Gaussian value is still a lower bound).
    * ``gaussian``: semicircular base of variance v realized by a GUE, so
      X is Gaussian with variance v + t0.
    * ``atom-mixture``: atomic base realized by iid diagonal atoms; entropy by
      Monte Carlo with the exact factorized density.

    The headline is the best model's largest-n value.
    """
    law = config.base_law
    t0 = config.t0
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    models = {}
    for name in _applicable_models(config):
        rows = []
        for n in config.n_grid:
            if name == "quantile":
                center = np.stack([quantile_microstate(law, n)] * config.m)
                val, se = gaussian_entropy_exact(GaussianEnsemble(center, t0)), 0.0
            elif name == "gaussian":
                v = law.semicircle_variance
                val, se = gaussian_entropy_exact(GaussianEnsemble.pure(n, config.m, v + t0)), 0.0
            else:
                est = entropy_mc(DiagonalAtomMixture(law, n, 1, t0), config.samples, config.seed + n)
                val, se = est.value, est.stderr
            rows.append({"n": n, "value": float(val), "stderr": float(se)})
        head = rows[-1]
        models[name] = {"per_n": rows, "value": head["value"], "stderr": head["stderr"]}
    best = max(models, key=lambda k: models[k]["value"])
    return {
        "value": models[best]["value"],
        "stderr": models[best]["stderr"],
        "model": best,
        "models": models,
        "label": PROXY_LABEL,
    }


def versions() -> dict:
    import scipy

    out = {
        "freeentropy": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": "numba" if _kernels.USE_NUMBA else "numpy",
    }
    if _kernels.HAVE_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def run_inequality_experiment(config: ExperimentConfig, write: bool = True) -> dict:
    try:
        lower = microstates_entropy_lower_bound(config)
    except Exception as exc:
        raise ExperimentError("microstates", exc) from exc
    try:
        smoothed = heat_flow_law(base_oracle(config), config.t0)
        grid = FlowGrid.gauss_legendre(config.nodes, config.u_max)
        y_idx = list(range(1, len(config.y_laws) + 1))
        upper = chi_star_upper(smoothed, config.m, config.degree, grid, y_idx)
    except Exception as exc:
        raise ExperimentError("chi-star", exc) from exc

    margin = upper.value - lower["value"]
    tolerance = upper.error_estimate + 3 * lower["stderr"] + SLACK
    report = {
        "name": config.name,
        "config": config.to_dict(),
        "seed": config.seed,
        "versions": versions(),
        "chi_lower": lower,
        "chi_star_upper": upper.to_dict(),
        "margin": margin,
        "tolerance": tolerance,
        "verdict": "pass" if margin >= -tolerance else "fail",
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    if write and config.out:
        write_report(report, config.out)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_report(report: dict, out) -> dict:
    """Write JSON plus integrand / per-n CSV tables next to it; returns the paths."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_json(report) + "\n")
    paths = {"json": str(out)}
    samples = report.get("chi_star_upper", {}).get("samples")
    if samples:
        p = out.with_name(out.stem + "_integrand.csv")
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "reference", "phi"])
            for s in samples:
                w.writerow([repr(s["t"]), repr(s["reference"]), repr(s["phi"])])
        paths["integrand_csv"] = str(p)
    models = report.get("chi_lower", {}).get("models")
    if models:
        p = out.with_name(out.stem + "_per_n.csv")
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "n", "value", "stderr"])
            for name, block in models.items():
                for row in block["per_n"]:
                    w.writerow([name, row["n"], repr(row["value"]), repr(row["stderr"])])
        paths["per_n_csv"] = str(p)
    return paths


def closed_form_chi(config: ExperimentConfig) -> Optional[float]:
    """chi of the smoothed law when it is semicircular (both sides equal it)."""
    v = config.base_law.semicircle_variance
    if v is None or config.y_laws:
        return None
    return 0.5 * config.m * math.log(2 * math.pi * math.e * (v + config.t0))
