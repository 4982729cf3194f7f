"""Run configuration for the command line tools.

Configs are flat text files of ``key = value`` lines with dotted key
paths (``solver.tol_newton = 1e-9``).  Values are parsed as JSON when
possible and kept as bare strings otherwise, so lists and nested k
specifications can be written inline.  Unknown keys are rejected.
"""

import json

import numpy as np

from .charts import catalog
from .spheregrid import SphereGrid

_DEFAULTS = {
    "chart.id": "flat",
    "chart.dim": 3,
    "point": None,
    "sphere.n": None,
    "sphere.l_max": 6,
    "sphere.resolution": None,
    "solver.variant": "STCMC",
    "solver.tol_newton": 1e-9,
    "solver.max_iters": 12,
    "solver.jacobian": "fd",
    "solver.r": 0.05,
    "solver.r_schedule": None,
    "solver.c_config": 1.0,
    "probe.radii": None,
    "probe.fail_on": "none",
    "forms.require": [],
    "foliate.require": "foliation",
    "moments.max_order": 6,
    "moments.atol": 1e-12,
    "expand.radii": [0.05, 0.07, 0.09, 0.11, 0.13],
    "expand.rtol_r1": 0.01,
    "expand.rtol_r2": 0.05,
    "factory.epsilons": [0.0, 0.05, 0.1],
    "factory.tol": 1e-10,
    "factory.leaf_r": 0.05,
    "output.dir": None,
}

_VARIANTS = ("STCMC", "CE+", "CE-")
_JACOBIANS = ("fd", "shortcut")
_FAIL_ON = ("none", "nonexistence", "no-match")
_VERDICTS = ("foliation", "concentration-only", "failed", "any")


class ConfigError(ValueError):
    """Malformed, unknown or inconsistent configuration input."""


def _parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_config_text(text):
    """Parse ``key = value`` lines into a flat dict.

    Full-line comments start with '#'; inline comments are not stripped
    so JSON values stay intact.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value, got %r"
                              % (lineno, raw))
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("line %d: empty key" % lineno)
        out[key] = _parse_value(val)
    return out


def parse_overrides(pairs):
    """Parse command line ``key=value`` override strings."""
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError("override %r is not key=value" % (item,))
        key, _, val = item.partition("=")
        out[key.strip()] = _parse_value(val)
    return out


class RunConfig:
    """Validated flat configuration with defaults for every key.

    Entries under chart.params are the free parameter map handed to the
    chart catalog; everything else must be a known key.
    """

    def __init__(self, entries=None):
        self.values = dict(_DEFAULTS)
        self.params = {}
        for key, val in (entries or {}).items():
            self.set(key, val)
        self._check()

    def set(self, key, value):
        if key == "chart.params":
            if not isinstance(value, dict):
                raise ConfigError("chart.params must be a JSON object")
            self.params.update(value)
            return
        if key.startswith("chart.params."):
            self.params[key[len("chart.params."):]] = value
            return
        if key not in _DEFAULTS:
            raise ConfigError("unknown config key %r" % (key,))
        self.values[key] = value

    def update(self, entries):
        for key, val in entries.items():
            self.set(key, val)
        self._check()

    def _check(self):
        v = self.values
        dim = v["chart.dim"]
        if not isinstance(dim, int) or dim < 2:
            raise ConfigError("chart.dim must be an integer >= 2")
        if v["sphere.n"] is not None and v["sphere.n"] != dim - 1:
            raise ConfigError("sphere.n must equal chart.dim - 1")
        if v["solver.variant"] not in _VARIANTS:
            raise ConfigError("solver.variant must be one of %s"
                              % (_VARIANTS,))
        if v["solver.jacobian"] not in _JACOBIANS:
            raise ConfigError("solver.jacobian must be one of %s"
                              % (_JACOBIANS,))
        if v["probe.fail_on"] not in _FAIL_ON:
            raise ConfigError("probe.fail_on must be one of %s" % (_FAIL_ON,))
        if v["foliate.require"] not in _VERDICTS:
            raise ConfigError("foliate.require must be one of %s"
                              % (_VERDICTS,))
        if not isinstance(v["forms.require"], list):
            raise ConfigError("forms.require must be a list of theorem ids")
        if v["point"] is not None:
            pt = np.asarray(v["point"], dtype=float)
            if pt.shape != (dim,):
                raise ConfigError("point must be a length-%d vector" % dim)
        for key in ("solver.tol_newton", "solver.r", "solver.c_config",
                    "moments.atol", "expand.rtol_r1", "expand.rtol_r2",
                    "factory.tol", "factory.leaf_r"):
            if not isinstance(v[key], (int, float)) or v[key] <= 0:
                raise ConfigError("%s must be a positive number" % key)
        for key in ("solver.max_iters", "moments.max_order",
                    "sphere.l_max"):
            if not isinstance(v[key], int) or v[key] < 1:
                raise ConfigError("%s must be a positive integer" % key)
        for key in ("solver.r_schedule", "probe.radii", "expand.radii",
                    "factory.epsilons"):
            if v[key] is None:
                continue
            seq = v[key]
            if (not isinstance(seq, list)
                    or not all(isinstance(x, (int, float)) for x in seq)):
                raise ConfigError("%s must be a list of numbers" % key)

    # ---- derived objects ----

    def chart(self):
        params = {k: v for k, v in self.params.items()}
        return catalog(self.values["chart.id"], params,
                       dim=self.values["chart.dim"])

    def point(self):
        if self.values["point"] is None:
            return np.zeros(self.values["chart.dim"])
        return np.asarray(self.values["point"], dtype=float)

    def grid(self):
        n = self.values["chart.dim"] - 1
        res = self.values["sphere.resolution"]
        if res is not None and n == 2:
            res = tuple(res)
        return SphereGrid(n, L_max=self.values["sphere.l_max"],
                          resolution=res)

    def effective(self):
        """Complete flat mapping including defaults, for the report echo."""
        out = {key: self.values[key] for key in sorted(self.values)}
        out["sphere.n"] = self.values["chart.dim"] - 1
        out["chart.params"] = {k: self.params[k]
                               for k in sorted(self.params)}
        return out


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional file plus override pairs."""
    entries = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            entries.update(parse_config_text(fh.read()))
    cfg = RunConfig(entries)
    ov = parse_overrides(overrides)
    if ov:
        cfg.update(ov)
    return cfg
