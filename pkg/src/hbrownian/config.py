"""Run configuration, canonical serialization and run manifests."""

import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from . import __version__

OUT_ENV = "HBROWNIAN_OUT"
SCHEMA_VERSION = 1


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = f"{x:.17g}"
    if all(c in "-0123456789" for c in text):
        text += ".0"
    return text


def dumps(obj, indent=2, _level=0):
    """JSON with sorted keys and every float written with 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if hasattr(obj, "tolist"):
        return dumps(obj.tolist(), indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass
class RunConfig:
    command: str = "moments"
    manifold: str = "sphere:2"
    h: str = "zero"
    drift: str = None
    diffusion_scale: float = 1.0
    x0: list = None
    p: float = 1.0
    dt: float = 1e-3
    T: float = 4.0
    grid: float = 0.1
    n_paths: int = 1024
    seed: int = 42
    workers: int = 1
    fit_window: float = 0.5
    frame_sup: bool = False
    dump_paths: bool = False
    explosion_radius: float = 1e6
    region_size: int = 64
    functional: str = "-h_p"
    resolution: int = 64
    loop: str = "equator"
    loop_points: int = 256

    def validate(self):
        errors = []
        if not self.dt > 0:
            errors.append("--dt must be positive")
        if not self.T > 0:
            errors.append("--T must be positive")
        if not self.grid > 0:
            errors.append("--grid must be positive")
        if not self.p >= 1:
            errors.append("--p must be >= 1")
        if self.n_paths < 2:
            errors.append("--n-paths must be >= 2")
        if self.workers < 1:
            errors.append("--workers must be >= 1")
        if not 0 < self.fit_window <= 1:
            errors.append("--fit-window must lie in (0, 1]")
        if self.seed < 0:
            errors.append("--seed must be nonnegative")
        if self.resolution < 2:
            errors.append("--resolution must be >= 2")
        if self.region_size < 1:
            errors.append("--region-size must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))
        return self

    def to_dict(self):
        return asdict(self)

    def canonical(self):
        """Compact canonical JSON: sorted keys, floats at 17 significant digits.

        ``workers`` is excluded because results do not depend on it.
        """
        d = self.to_dict()
        d.pop("workers")
        return dumps(d, indent=0).replace("\n", "")

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def to_json(self):
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in data.items()})

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _coerce(f, v):
    if v is None:
        return None
    if f.type in (float, "float"):
        return float(v)
    if f.type in (int, "int"):
        if isinstance(v, float) and not v.is_integer():
            raise ValueError(f"{f.name} must be an integer")
        return int(v)
    if f.type in (bool, "bool"):
        if isinstance(v, str):
            return v.lower() in ("1", "true", "yes", "on")
        return bool(v)
    if f.type in (list, "list"):
        return [float(a) for a in v]
    return v


def now_iso():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    config: dict
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    started: str = field(default_factory=now_iso)
    finished: str = None
    status: str = "running"
    censoring: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    error: str = None

    def to_json(self):
        return dumps(asdict(self))

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def output_dir(cli_value, config):
    """--out wins; then the environment override; then a hash-named default."""
    if cli_value:
        return cli_value
    env = os.environ.get(OUT_ENV)
    if env:
        return env
    return os.path.join("hbrownian-runs", f"{config.command}-{config.digest()[:12]}")
