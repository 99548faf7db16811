"""YAML run configuration: schema, validation and conversion to model objects.

Every problem found is reported together in one :class:`ConfigurationError`.
"""

import math

import jsonschema
import yaml

from .design import (
    LagSet, MarginSpec, McmcConfig, ModelSpec, PriorConfig, TermSpec, validate_terms,
)
from .errors import ConfigurationError
from .forecast import RollingProtocol

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

_MARGIN = {
    "type": "object",
    "required": ["type", "covariate"],
    "additionalProperties": False,
    "properties": {
        "type": {"enum": ["bspline", "cyclic_bspline", "thin_plate", "factor", "fourier"]},
        "covariate": {"type": "string"},
        "size": _POS_INT,
        "order": {"type": "integer", "minimum": 0},
        "penalty_order": {"type": "integer", "minimum": 0},
        "period": _NUM,
        "bounds": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "num_levels": _POS_INT,
        "precision": {"enum": ["iid", "penalty"]},
        "num_harmonics": _POS_INT,
        "half_period": _NUM,
        "poly_order": _POS_INT,
        "spline_order": _POS_INT,
    },
}

_TERM = {
    "type": "object",
    "required": ["name", "type"],
    "additionalProperties": False,
    "properties": {
        **_MARGIN["properties"],
        "name": {"type": "string", "minLength": 1},
        "type": {"enum": ["intercept", "bspline", "cyclic_bspline", "tensor", "thin_plate",
                          "factor", "fourier"]},
        "margins": {"type": "array", "items": _MARGIN},
        "gamma_rate": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

SCHEMA = {
    "type": "object",
    "required": ["terms"],
    "additionalProperties": False,
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "time_column": {"type": "string"},
                "response_column": {"type": "string"},
                "time_step": {"type": "number", "exclusiveMinimum": 0},
                "missing_tokens": {"type": "array", "items": {"type": "string"}},
            },
        },
        "response_transform": {"enum": ["identity", "log"]},
        "terms": {"type": "array", "items": _TERM, "minItems": 1},
        "lags": {"type": "array", "items": _POS_INT},
        "priors": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta_mean": _NUM,
                "phi_mean": _NUM,
                "phi_precision": {"type": "number", "exclusiveMinimum": 0},
                "v0": _NUM,
                "delta0": {"type": "number", "minimum": 0},
                "gamma_rate": {"type": "number", "exclusiveMinimum": 0},
                "gamma_shape": {"type": "number", "exclusiveMinimum": 0},
                "fixed_precision": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "mcmc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "iterations": _POS_INT,
                "burn_in": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "mh_step": {"type": "number", "minimum": 0},
                "residual_thin": _POS_INT,
                "strict_stationarity": {"type": "boolean"},
                "max_phi_rejections": _POS_INT,
            },
        },
        "forecast": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "refit_interval": {"type": ["number", "string"]},
                "forecast_window": _POS_INT,
                "residual_history": _POS_INT,
                "issue_time": {"type": "integer", "minimum": 0},
                "steps_per_day": _POS_INT,
            },
        },
    },
}

DATA_DEFAULTS = {
    "time_column": "time",
    "response_column": "response",
    "time_step": 1,
    "missing_tokens": ["NaN", "NA", ""],
}

_MARGIN_KEYS = ("size", "order", "penalty_order", "period", "bounds", "num_levels", "precision",
                "num_harmonics", "half_period", "poly_order", "spline_order")


def _margin(d, kind=None):
    kw = {k: d[k] for k in _MARGIN_KEYS if k in d}
    if "bounds" in kw:
        kw["bounds"] = tuple(float(v) for v in kw["bounds"])
    return MarginSpec(kind or d["type"], d["covariate"], **kw)


def _term(d, problems):
    kind = d["type"]
    where = f"term {d['name']!r}"
    if kind == "intercept":
        margins = ()
    elif kind == "tensor":
        if "margins" not in d:
            problems.append(f"{where}: tensor terms need a 'margins' list")
            return None
        margins = tuple(_margin(m) for m in d["margins"])
    else:
        if "covariate" not in d:
            problems.append(f"{where}: missing 'covariate'")
            return None
        margins = (_margin(d, kind),)
    rates = tuple(d["gamma_rate"]) if "gamma_rate" in d else None
    return TermSpec(d["name"], kind, margins, rates)


def _build(factory, kwargs, label, problems):
    try:
        return factory(**kwargs)
    except (ConfigurationError, ValueError) as exc:
        problems.append(f"{label}: {exc}")
        return None


def parse_config(raw):
    """Validate a config mapping; return ``(spec, data_options, protocol)``."""
    if not isinstance(raw, dict):
        raise ConfigurationError("configuration must be a mapping")
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{path}: {err.message}")
    if problems:
        raise ConfigurationError(f"{len(problems)} configuration problem(s)", problems)

    terms = [t for t in (_term(d, problems) for d in raw["terms"]) if t is not None]
    lag_set = _build(LagSet, {"lags": tuple(raw.get("lags", (1,)))}, "lags", problems)
    priors = _build(PriorConfig, raw.get("priors", {}), "priors", problems)
    mcmc = _build(McmcConfig, raw.get("mcmc", {}), "mcmc", problems)
    fc = dict(raw.get("forecast", {}))
    if isinstance(fc.get("refit_interval"), str):
        if fc["refit_interval"].lower() in ("inf", "never"):
            fc["refit_interval"] = math.inf
        else:
            problems.append("forecast/refit_interval: expected a number or 'inf'")
            fc.pop("refit_interval")
    protocol = _build(RollingProtocol, fc, "forecast", problems)
    data = {**DATA_DEFAULTS, **raw.get("data", {})}
    if lag_set is not None and protocol is not None and protocol.residual_history < lag_set.max_lag:
        problems.append("forecast/residual_history: shorter than the largest lag")
    spec = None
    if None not in (lag_set, priors, mcmc):
        try:
            spec = ModelSpec(tuple(terms), lag_set, priors, mcmc, raw.get("response_transform", "identity"))
        except ConfigurationError as exc:
            problems += exc.problems
    else:
        problems += validate_terms(terms)
        if raw.get("response_transform", "identity") not in ("identity", "log"):
            problems.append(f"unknown response transform {raw['response_transform']!r}")
    if problems:
        raise ConfigurationError(f"{len(problems)} configuration problem(s)", problems)
    return spec, data, protocol


def load_config(path):
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    return raw, parse_config(raw)
