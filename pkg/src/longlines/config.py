"""Experiment configuration read from ``key = value`` files.

A configuration file has an ``[experiment]`` section and optional
``[constants]`` and ``[set]`` sections::

    [experiment]
    id = cube-half
    regime = cube            ; a p value, inf/cube, gaussian, gaussian-product, mixture, simplex
    a = 0.5
    n = 64 128 256 512 1024 2048 4096
    trials = 200             ; finder trials per n
    sup_trials = 200         ; random line pairs of the sup search per n
    tangent_seeds = 50       ; near-tangent candidate lines per n (sets with a band)
    u_grid = 256
    seed = 11
    workers = 1
    bump = exp
    output = results/cube

    [constants]              ; any field of FinderConstants
    R_scale = 2.5

    [set]
    kind = auto              ; auto, body-l2-shell, hybrid-shell, lp-shell,
                             ; product-norm-shell, euclidean-ball, striped
    shell_scale = 1.0
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Union

from longlines.finder import FinderConstants, Regime

DEFAULT_LADDER = (64, 128, 256, 512, 1024, 2048, 4096)
SET_KINDS = ("auto", "body-l2-shell", "hybrid-shell", "lp-shell", "product-norm-shell",
             "euclidean-ball", "striped")


class ConfigError(ValueError):
    """A configuration file or value is invalid."""


@dataclass(frozen=True)
class SetOptions:
    """How the witness set of each dimension is built.

    :param kind: set family; ``auto`` picks the family of the regime
    :param shell_scale: profile scale of the hybrid shell
    :param shell_eps: excluded mass of the product-norm shell
    :param ball_factor: the Euclidean ball has radius ball_factor * sqrt(n)
    :param stripe_base: base set of a striped set (any non-striped kind)
    :param stripe_lambda: kept fraction of stripes; 0 means use ``a``
    :param stripe_delta: stripe width
    :param stripe_k: stripes per period; 0 means floor(delta^(-1/5))
    :param calib_samples: Monte Carlo samples of the mass calibration
    """

    kind: str = "auto"
    shell_scale: float = 1.0
    shell_eps: float = 0.01
    ball_factor: float = 5.0
    stripe_base: str = "auto"
    stripe_lambda: float = 0.0
    stripe_delta: float = 1e-4
    stripe_k: int = 0
    calib_samples: int = 10 ** 5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    regime: str
    a: float = 0.5
    n_values: tuple[int, ...] = DEFAULT_LADDER
    trials: int = 200
    sup_trials: int = 200
    tangent_seeds: int = 50
    u_grid: int = 256
    seed: int = 0
    workers: int = 1
    bump: str = "exp"
    output: str = "results"
    constants: FinderConstants = field(default_factory=FinderConstants)
    set_options: SetOptions = field(default_factory=SetOptions)

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ConfigError("a must lie in (0, 1)")
        ns = tuple(int(v) for v in self.n_values)
        if not ns:
            raise ConfigError("the n list is empty")
        if any(v < 2 for v in ns):
            raise ConfigError("every n must be at least 2")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("the n list must be strictly increasing")
        object.__setattr__(self, "n_values", ns)
        for name in ("trials", "sup_trials", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.tangent_seeds < 0:
            raise ConfigError("tangent_seeds must be non-negative")
        if self.set_options.kind not in SET_KINDS:
            raise ConfigError(f"unknown set kind {self.set_options.kind!r}")
        try:
            Regime.parse(self.regime)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.bump not in ("exp", "poly"):
            raise ConfigError("bump must be exp or poly")
        if self.constants.psi_shape != self.bump:
            object.__setattr__(self, "constants", _replace_constants(self.constants, psi_shape=self.bump))

    @property
    def regime_obj(self) -> Regime:
        return Regime.parse(self.regime)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_values"] = list(self.n_values)
        return d

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (the output directory excluded)."""
        d = self.to_dict()
        d.pop("output")
        d.pop("workers")
        text = json.dumps(d, sort_keys=True, default=_json_default)
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def from_string(cls, text: str, source: str = "<string>") -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        if not cp.has_section("experiment"):
            raise ConfigError("missing [experiment] section")
        ex = cp["experiment"]
        known = {"id", "regime", "a", "n", "trials", "sup_trials", "tangent_seeds", "u_grid", "seed",
                 "workers", "bump", "output"}
        unknown = set(ex.keys()) - known
        if unknown:
            raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
        if "regime" not in ex:
            raise ConfigError("[experiment] needs a regime")
        try:
            kwargs = {
                "experiment_id": ex.get("id", Path(source).stem),
                "regime": ex["regime"],
                "a": ex.getfloat("a", 0.5),
                "n_values": tuple(int(v) for v in ex.get("n", " ".join(map(str, DEFAULT_LADDER))).split()),
                "trials": ex.getint("trials", 200),
                "sup_trials": ex.getint("sup_trials", 200),
                "tangent_seeds": ex.getint("tangent_seeds", 50),
                "u_grid": ex.getint("u_grid", 256),
                "seed": ex.getint("seed", 0),
                "workers": ex.getint("workers", 1),
                "bump": ex.get("bump", "exp"),
                "output": ex.get("output", "results"),
                "constants": _section(cp, "constants", FinderConstants),
                "set_options": _section(cp, "set", SetOptions),
            }
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {p}: {exc}") from None
        return cls.from_string(text, source=str(p))


def _section(cp: configparser.ConfigParser, name: str, cls):
    if not cp.has_section(name):
        return cls()
    types = {f.name: f.type for f in fields(cls)}
    # case-insensitive lookup so that R_scale and r_scale both work
    lower = {k.lower(): k for k in types}
    out = {}
    for key, raw in cp[name].items():
        target = lower.get(key.lower())
        if target is None:
            raise ConfigError(f"unknown [{name}] key {key!r}")
        kind = types[target]
        if kind in (float, "float"):
            out[target] = float(raw)
        elif kind in (int, "int"):
            out[target] = int(raw)
        else:
            out[target] = raw.strip()
    return cls(**out)


def _replace_constants(c: FinderConstants, **changes) -> FinderConstants:
    d = asdict(c)
    d.update(changes)
    return FinderConstants(**d)


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


__all__ = ["ConfigError", "DEFAULT_LADDER", "ExperimentConfig", "SET_KINDS", "SetOptions"]
