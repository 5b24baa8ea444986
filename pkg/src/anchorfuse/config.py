"""Flat ``key = value`` run configuration with dotted sections.

Example::

    d_max = 90
    align = false
    cg.tol = 1e-8
    refine.kappa = 1.0
    refine.kernel_sizes = 3, 5, 7
    refine.w_f.shape = 5, 2
    refine.w_f = 1, 0, 0, 1, 0, 0, 0, 0, 0, 0
    paths.prior = prior.pfm

Matrix-valued entries are flat comma-separated lists in row-major order;
their shape is declared by the matching ``.shape`` key. ``#`` starts a
comment. Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .metrics import KITTI_D_MAX
from .poisson import CgSettings
from .refine import RefineParams


class ConfigError(ValueError):
    pass


_SCALAR_KEYS = {"d_max", "align", "cg.tol", "cg.max_iter", "refine.kappa", "refine.iterations",
                "refine.d_max", "refine.alpha_bias", "refine.kernel_sizes",
                "refine.temperatures"}
_MATRIX_KEYS = {"refine.w_f", "refine.g", "refine.w_alpha"}


@dataclass
class RunConfig:
    d_max: float = KITTI_D_MAX
    cg: CgSettings = field(default_factory=CgSettings)
    refine: RefineParams = field(default_factory=RefineParams)
    align: bool = False
    paths: dict[str, str] = field(default_factory=dict)


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def _numbers(text: str, key: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from exc


def _bool(text: str, key: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _matrix(pairs: dict[str, str], key: str) -> np.ndarray | None:
    if key not in pairs:
        if key + ".shape" in pairs:
            raise ConfigError(f"{key}.shape given without {key}")
        return None
    values = np.array(_numbers(pairs[key], key))
    if key + ".shape" not in pairs:
        return values
    shape = tuple(int(s) for s in _numbers(pairs[key + ".shape"], key + ".shape"))
    if int(np.prod(shape)) != values.size:
        raise ConfigError(f"{key}: {values.size} values do not fill shape {shape}")
    return values.reshape(shape)


def config_from_pairs(pairs: dict[str, str], base_dir: str = ".") -> RunConfig:
    allowed = _SCALAR_KEYS | _MATRIX_KEYS | {k + ".shape" for k in _MATRIX_KEYS}
    for key in pairs:
        if key not in allowed and not key.startswith("paths."):
            raise ConfigError(f"unknown config key {key!r}")

    def num(key, default):
        return _numbers(pairs[key], key)[0] if key in pairs else default

    d_max = num("d_max", KITTI_D_MAX)
    try:
        max_iter = num("cg.max_iter", None)
        cg = CgSettings(num("cg.tol", 1e-8), None if max_iter is None else int(max_iter))
        kw = {}
        if "refine.kernel_sizes" in pairs:
            kw["kernel_sizes"] = tuple(int(k) for k in _numbers(pairs["refine.kernel_sizes"],
                                                               "refine.kernel_sizes"))
        if "refine.temperatures" in pairs:
            kw["temperatures"] = tuple(_numbers(pairs["refine.temperatures"],
                                                "refine.temperatures"))
        if "refine.alpha_bias" in pairs:
            kw["alpha_bias"] = num("refine.alpha_bias", None)
        refine = RefineParams(
            kappa=num("refine.kappa", 1.0),
            iterations=num("refine.iterations", 6),
            d_max=num("refine.d_max", d_max),
            w_f=_matrix(pairs, "refine.w_f"),
            g=_matrix(pairs, "refine.g"),
            w_alpha=_matrix(pairs, "refine.w_alpha"),
            **kw,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if refine.g is not None and refine.g.ndim == 1:
        refine.g = refine.g.reshape(len(refine.kernel_sizes), -1)
    if refine.w_f is not None and refine.w_f.ndim != 2:
        raise ConfigError("refine.w_f needs a declared 2-D shape (refine.w_f.shape)")

    paths = {}
    missing = []
    for key, value in pairs.items():
        if key.startswith("paths."):
            name = key[len("paths."):]
            full = value if os.path.isabs(value) else os.path.join(base_dir, value)
            paths[name] = full
            if not name.startswith("out") and not os.path.exists(full):
                missing.append(f"{key} -> {full}")
    if missing:
        raise ConfigError("missing input files: " + "; ".join(missing))
    return RunConfig(d_max, cg, refine, _bool(pairs.get("align", "false"), "align"), paths)


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    return config_from_pairs(parse_pairs(text, str(path)), os.path.dirname(os.path.abspath(path)))
