"""On-disk run configuration (a single JSON document).

Required keys are ``q`` and ``body`` for every command, plus ``phi`` and
``density`` for flows.  Everything else has a default.  Example::

    {
      "label": "ellipse_iso",
      "q": 2,
      "phi": {"kind": "power", "p": 1.0},
      "density": {"kind": "fourier", "a0": 1.0},
      "body": {"kind": "ellipse", "a": 1.2, "b": 0.8},
      "n": 256,
      "flow": {"dt_max": 0.02, "residual_tol": 0.01},
      "output": {"dir": "runs/ellipse_iso", "snapshot_every": 10, "plots": true}
    }

The body may also be a path (string) to a ``theta,h`` profile CSV; relative
paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError
from .geometry import SupportProfile, disk, ellipse, fourier_body, read_profile_csv, validate_support
from .flow import FlowConfig

LABEL_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$")

FLOW_KEYS = {
    "target_edge", "dt_max", "cfl", "rescale_tq", "residual_tol", "sustain", "max_steps",
    "scheme", "eps", "recovery", "tq_tol", "gamma_slack", "bound", "monitors_fatal", "degenerate_ratio",
}


@dataclass
class TorsionChecks:
    """Gates applied by ``torqflow torsion``; None disables a gate."""

    cross_check_tol: float | None = 0.02  # boundary-integral vs volume T_q
    identity_tol: float | None = 0.02  # Gauss-Green identity gap
    hessian_tol: float | None = None  # boundary Hessian identities (exact only on the unit disk)


@dataclass
class OutputSpec:
    dir: str | None = None
    snapshot_every: int = 10
    plots: bool = True


@dataclass
class RunConfig:
    label: str
    q: float
    body: dict | str
    phi: dict | None = None
    density: dict | float | None = None
    n: int = 256
    scheme: str = "fd"
    target_edge: float = 0.05
    flow: dict = field(default_factory=dict)
    balance_translation: bool = False
    checks: TorsionChecks = field(default_factory=TorsionChecks)
    output: OutputSpec = field(default_factory=OutputSpec)
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def out_dir(self) -> Path:
        if self.output.dir is None:
            return self.base_dir / "runs" / self.label
        d = Path(self.output.dir)
        return d if d.is_absolute() else self.base_dir / d

    def profile(self) -> SupportProfile:
        return make_body(self.body, self.n, self.base_dir, self.scheme)

    def flow_config(self) -> FlowConfig:
        if self.phi is None or self.density is None:
            raise ConfigurationError("flow configs need both 'phi' and 'density'")
        kw = dict(self.flow)
        kw.setdefault("target_edge", self.target_edge)
        kw.setdefault("scheme", self.scheme)
        try:
            return FlowConfig(q=self.q, phi=self.phi, density=self.density, initial=self.profile(), **kw)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def make_body(spec, n: int = 256, base_dir=".", scheme: str = "fd") -> SupportProfile:
    """Built-in body or profile CSV, validated convex around the origin."""
    if isinstance(spec, str):
        path = Path(spec)
        if not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigurationError(f"profile CSV not found: {path}")
        p = read_profile_csv(path)
    elif isinstance(spec, dict):
        kind = spec.get("kind")
        try:
            if kind == "disk":
                p = disk(float(spec.get("R", 1.0)), n, tuple(spec.get("center", (0.0, 0.0))))
            elif kind == "ellipse":
                p = ellipse(float(spec["a"]), float(spec["b"]), n)
            elif kind == "fourier":
                p = fourier_body(float(spec["a0"]), spec.get("cos", ()), spec.get("sin", ()), n)
            elif kind == "csv":
                return make_body(str(spec["path"]), n, base_dir, scheme)
            else:
                raise ConfigurationError(f"unknown body kind {kind!r}")
        except KeyError as exc:
            raise ConfigurationError(f"body {kind!r} is missing {exc.args[0]!r}") from None
    else:
        raise ConfigurationError("body must be a record or a profile CSV path")
    rep = validate_support(p, scheme)
    if not rep.passed:
        raise ConfigurationError(
            f"body is not strictly convex around the origin (min h {rep.min_h:.3g}, min b {rep.min_b:.3g})"
        )
    return p


def _sub(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"'{name}' must be a record")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigurationError(f"unknown keys in '{name}': {sorted(extra)}")
    return cls(**data)


def parse_config(data: dict, base_dir=".", label: str = "run", require_flow: bool = False) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    extra = set(data) - known
    if extra:
        raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
    for key in ("q", "body") + (("phi", "density") if require_flow else ()):
        if key not in data:
            raise ConfigurationError(f"config is missing required key {key!r}")
    flow = data.get("flow", {}) or {}
    bad = set(flow) - FLOW_KEYS
    if bad:
        raise ConfigurationError(f"unknown keys in 'flow': {sorted(bad)}")
    cfg = RunConfig(
        label=str(data.get("label", label)),
        q=float(data["q"]),
        body=data["body"],
        phi=data.get("phi"),
        density=data.get("density"),
        n=int(data.get("n", 256)),
        scheme=str(data.get("scheme", "fd")),
        target_edge=float(data.get("target_edge", 0.05)),
        flow=dict(flow),
        balance_translation=bool(data.get("balance_translation", False)),
        checks=_sub(TorsionChecks, data.get("checks"), "checks"),
        output=_sub(OutputSpec, data.get("output"), "output"),
        base_dir=Path(base_dir),
    )
    if not LABEL_RE.match(cfg.label):
        raise ConfigurationError(f"label {cfg.label!r} is not filesystem-safe")
    if not cfg.q > 1:
        raise ConfigurationError(f"q must exceed 1, got {cfg.q}")
    if not cfg.target_edge > 0:
        raise ConfigurationError("target_edge must be positive")
    if cfg.output.snapshot_every < 0:
        raise ConfigurationError("snapshot_every must be >= 0")
    return cfg


def load_config(path, require_flow: bool = False) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path.name}: invalid JSON ({exc})") from None
    label = re.sub(r"[^A-Za-z0-9._-]", "_", path.stem) or "run"
    return parse_config(data, path.parent, label, require_flow)
