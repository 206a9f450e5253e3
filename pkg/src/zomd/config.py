"""JSON experiment configuration: schema, cross-field checks and builders.

A configuration is kept exactly as loaded; defaults are applied only when
objects are built, so re-serialising a loaded file reproduces it up to key
order. Every validation failure is raised as a :class:`ConfigError` that
names the offending key and its line in the source file.
"""

import json
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import ConfigurationError
from .analysis import optimal_mu
from .geometry import FeasibleSet, Geometry
from .oracle import NoiseModel, ObjectiveSpec
from .solver import Experiment, Problem, StepSchedule

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_num_or_vec = {"oneOf": [_num, _vec]}
_pos_list = {"type": "array", "items": _num, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["objective", "geometry", "schedule", "estimator", "run"],
    "additionalProperties": False,
    "properties": {
        "objective": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["quadratic", "abs_sum", "log_sum_exp"]},
                "a": _num_or_vec,
                "c": _num_or_vec,
                "Q": {"type": "array", "items": _vec},
                "diag": _vec,
                "scale": _num,
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["none", "additive_gaussian", "biased"]},
                "sd": {"type": "number", "minimum": 0},
                "B": {"type": "number", "minimum": 0},
                "V": {"type": ["number", "null"], "minimum": 0},
            },
        },
        "geometry": {
            "type": "object",
            "required": ["n", "set"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "mirror_map": {"enum": ["euclidean", "negative_entropy"]},
                "norm": {"enum": ["l1", "l2", "linf"]},
                "set": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["box", "ball", "simplex"]},
                        "lo": _num_or_vec,
                        "hi": _num_or_vec,
                        "center": _num_or_vec,
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "estimator": {
            "type": "object",
            "required": ["mu"],
            "additionalProperties": False,
            "properties": {
                "mu": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                                 {"const": "optimal"}]},
                "samples": {"type": "integer", "minimum": 10000},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["a", "p"],
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number", "exclusiveMinimum": 0},
                "p": {"type": "number"},
            },
        },
        "run": {
            "type": "object",
            "required": ["T"],
            "additionalProperties": False,
            "properties": {
                "T": {"type": "integer", "minimum": 1},
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "x1": {"oneOf": [_vec, {"type": "null"}]},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "confidence": {"type": "array",
                               "items": {"type": "number", "exclusiveMinimum": 0,
                                         "exclusiveMaximum": 1}},
                "delta_variant": {"enum": ["sqrt_n", "n"]},
                "c_variant": {"enum": ["squared", "printed"]},
                "moment_variant": {"enum": ["L1_squared", "L1_printed"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}


class ConfigError(ConfigurationError):
    """Invalid configuration; ``line`` is the 1-based source line, if known."""

    def __init__(self, message, path=(), line=None, source=None):
        self.path = tuple(path)
        self.line = line
        self.source = source
        where = ".".join(str(p) for p in self.path) or "<root>"
        loc = f"{source or '<config>'}:{line}" if line else (source or "<config>")
        super().__init__(f"{loc}: {where}: {message}")


def _line_of(text, path):
    if text is None:
        return None
    pos = 0
    for key in path:
        if isinstance(key, int):
            continue
        idx = text.find(f'"{key}"', pos)
        if idx < 0:
            break
        pos = idx
    return text.count("\n", 0, pos) + 1


class ExperimentConfig:
    """A validated experiment configuration.

    Parameters
    ----------
    data : dict
        Parsed JSON document.
    text : str, optional
        Source text, used to attach line numbers to errors.
    source : str, optional
        File name for error messages.
    """

    def __init__(self, data, text=None, source=None):
        self.data = data
        self._text = text
        self._source = source
        self._validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        return cls.loads(text, source=str(path))

    @classmethod
    def loads(cls, text, source=None):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno,
                              source=source) from None
        return cls(data, text=text, source=source)

    def dumps(self):
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    def _error(self, message, path):
        return ConfigError(message, path=path, line=_line_of(self._text, path),
                           source=self._source)

    # -- validation -------------------------------------------------------

    def _validate(self):
        validator = jsonschema.Draft202012Validator(SCHEMA)
        errors = sorted(validator.iter_errors(self.data), key=lambda e: list(e.path))
        if errors:
            err = errors[0]
            raise self._error(err.message, list(err.absolute_path))
        d = self.data
        n = d["geometry"]["n"]
        mm = d["geometry"].get("mirror_map", "euclidean")
        kind = d["geometry"]["set"]["kind"]
        if mm == "negative_entropy" and kind != "simplex":
            raise self._error("the negative_entropy mirror map requires a simplex set",
                              ["geometry", "mirror_map"])
        if mm == "euclidean" and kind == "simplex":
            raise self._error("the euclidean mirror map supports box and ball sets only",
                              ["geometry", "set", "kind"])
        p = d["schedule"]["p"]
        if not 0.5 < p <= 1.0:
            raise self._error(
                f"p = {p} violates the step-size assumption (steps decreasing with "
                "sum(alpha) divergent and sum(alpha^2) finite): need 0.5 < p <= 1",
                ["schedule", "p"])
        for key in ("a", "c", "diag"):
            v = d["objective"].get(key)
            if isinstance(v, list) and len(v) != n:
                raise self._error(f"expected {n} entries, got {len(v)}", ["objective", key])
        Q = d["objective"].get("Q")
        if Q is not None and (len(Q) != n or any(len(row) != n for row in Q)):
            raise self._error(f"Q must be {n} x {n}", ["objective", "Q"])
        x1 = d["run"].get("x1")
        if x1 is not None and len(x1) != n:
            raise self._error(f"expected {n} entries, got {len(x1)}", ["run", "x1"])
        noise = d.get("noise", {})
        if noise.get("kind") == "biased" and "B" not in noise:
            raise self._error("biased noise requires B", ["noise"])
        if d["estimator"]["mu"] == "optimal" and noise.get("kind") != "biased":
            raise self._error("mu = 'optimal' needs a biased noise model with B > 0",
                              ["estimator", "mu"])
        # building the objects catches the remaining semantic errors
        try:
            self.geometry()
        except (ValueError, TypeError) as exc:
            raise self._error(str(exc), ["geometry"]) from None
        try:
            obj = self.objective(mu=0.0)
        except (ValueError, TypeError) as exc:
            raise self._error(str(exc), ["objective"]) from None
        if obj.smoothness_class == "C11" and (obj.G is None or obj.L1 is None):
            raise self._error("C11 bounds require G and L1", ["objective"])
        try:
            self.noise()
        except (ValueError, TypeError) as exc:
            raise self._error(str(exc), ["noise"]) from None
        try:
            self.experiment()
        except (ValueError, TypeError) as exc:
            raise self._error(str(exc), ["run"]) from None

    # -- accessors with defaults -------------------------------------------

    def section(self, name):
        return self.data.get(name, {})

    @property
    def n(self):
        return self.data["geometry"]["n"]

    @property
    def T(self):
        return self.data["run"]["T"]

    @property
    def trials(self):
        return self.data["run"].get("trials", 1)

    @property
    def seed(self):
        return self.data["run"].get("seed", 0)

    @property
    def epsilons(self):
        return self.section("analysis").get("epsilon", [0.3])

    @property
    def confidences(self):
        return self.section("analysis").get("confidence", [0.9])

    @property
    def samples(self):
        return self.data["estimator"].get("samples", 10_000)

    @property
    def output_dir(self):
        return self.section("output").get("dir", "out")

    @property
    def formats(self):
        return self.section("output").get("formats", ["csv", "json"])

    def variants(self):
        a = self.section("analysis")
        return {"delta_variant": a.get("delta_variant", "sqrt_n"),
                "c_variant": a.get("c_variant", "squared"),
                "moment_variant": a.get("moment_variant", "L1_squared")}

    # -- builders ---------------------------------------------------------

    def geometry(self):
        g = self.data["geometry"]
        n = g["n"]
        s = g["set"]
        if s["kind"] == "box":
            fs = FeasibleSet.box(s.get("lo", -1.0), s.get("hi", 1.0), n=n)
        elif s["kind"] == "ball":
            fs = FeasibleSet.ball(np.broadcast_to(np.asarray(s.get("center", 0.0), float), (n,)),
                                  s.get("radius", 1.0))
        else:
            fs = FeasibleSet.simplex(n)
        return Geometry(g.get("mirror_map", "euclidean"), fs, g.get("norm", "l2"))

    def objective(self, mu=None):
        if mu is None:
            mu = self.mu()
        o = self.data["objective"]
        geom = self.geometry()
        n = geom.n

        def vec(key, default):
            return np.broadcast_to(np.asarray(o.get(key, default), dtype=float), (n,)).copy()

        if o["kind"] == "abs_sum":
            return ObjectiveSpec.abs_sum(vec("a", 0.0), geom, mu=mu)
        if o["kind"] == "log_sum_exp":
            return ObjectiveSpec.log_sum_exp(vec("a", 0.0), o.get("scale", 1.0), geom, mu=mu)
        if "Q" in o:
            Q = np.asarray(o["Q"], dtype=float)
        else:
            Q = np.diag(vec("diag", 1.0))
        return ObjectiveSpec.quadratic(Q, vec("c", 0.0), geom, mu=mu)

    def noise(self):
        s = self.section("noise")
        return NoiseModel(s.get("kind", "none"), sd=s.get("sd", 0.0), B=s.get("B", 0.0),
                          V=s.get("V"))

    def schedule(self):
        return StepSchedule(self.data["schedule"]["a"], self.data["schedule"]["p"])

    def mu(self):
        mu = self.data["estimator"]["mu"]
        if mu != "optimal":
            return float(mu)
        return self.optimal_mu()

    def optimal_mu(self):
        obj = self.objective(mu=0.0)
        nm = self.noise()
        geom = self.geometry()
        L = obj.L0 if obj.smoothness_class == "C00" else obj.L1
        return optimal_mu(obj.smoothness_class, L, geom.kappa1, nm.B, geom.diameter,
                          geom.n, delta_variant=self.variants()["delta_variant"])

    def problem(self, mu=None):
        mu = self.mu() if mu is None else mu
        return Problem(self.objective(mu=mu), self.noise(), self.geometry())

    def experiment(self, mu=None, T=None):
        mu = self.mu() if mu is None else mu
        x1 = self.data["run"].get("x1")
        return Experiment(self.problem(mu), mu, self.schedule(),
                          self.T if T is None else T,
                          x1=None if x1 is None else np.asarray(x1, dtype=float))
