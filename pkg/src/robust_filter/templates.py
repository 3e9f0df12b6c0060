"""Correlation templates and their compilation into design matrices.

A template names one behavioral attribute (the regression target) and a list
of contextual attributes (the features), each passed through a transform.
Compiling a template against a dataset yields ``(X, y, row_ids)``; rows whose
transforms are undefined (log of a nonpositive value, say) are left out and
reported separately.

JSON grammar
------------
A feature is an object::

    {"attr": "trip_time", "transform": "log"}
    {"attrs": ["plon", "plat", "dlon", "dlat"], "transform": "l2_distance"}
    {"attr": "pickup", "transform": "time_slot_onehot",
     "slot_width_hours": 2, "weekend_split": true}
    {"attrs": ["total", "tips", "tax"], "transform": "difference"}
    {"attrs": ["plon", "plat", "dlon", "dlat"], "transform": "l2_distance",
     "then": "log"}
    {"attr": "fare", "transform": "log1p-epsilon", "epsilon": 1e-6}

``transform`` defaults to ``"identity"``. ``l2_distance`` and ``difference``
accept ``"then": "log"`` (or ``"log1p-epsilon"``) to take the log of the
derived value; rows where it is nonpositive are excluded as with ``log``. A template is::

    {"name": "f5", "behavior": <feature>, "context": [<feature>, ...] | "rest",
     "intercept": true}

``"context": "rest"`` uses every other attribute with the identity transform.
A config file holds one template, a list of templates, or
``{"templates": [...]}``. Unknown keys are errors.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dataset import Dataset, column

LOG_EPSILON = 1e-6
SECONDS_PER_DAY = 86400.0

KINDS = ("identity", "log", "log1p-epsilon", "l2_distance", "time_slot_onehot", "difference")
_ARITY = {"identity": 1, "log": 1, "log1p-epsilon": 1, "time_slot_onehot": 1, "l2_distance": 4}
_PARAMS = {
    "log1p-epsilon": {"epsilon": LOG_EPSILON},
    "time_slot_onehot": {"slot_width_hours": 2.0, "weekend_split": True},
    # derived scalars may be followed by a log step
    "l2_distance": {"then": None, "epsilon": LOG_EPSILON},
    "difference": {"then": None, "epsilon": LOG_EPSILON},
}
_POST_STEPS = (None, "identity", "log", "log1p-epsilon")


class TemplateError(ValueError):
    """Raised for malformed templates or templates that cannot compile."""


@dataclass(frozen=True)
class Transform:
    """One feature: a transform applied to one or more source attributes."""

    kind: str
    attrs: tuple[str, ...]
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TemplateError(f"unknown transform {self.kind!r}; expected one of {KINDS}")
        attrs = tuple(self.attrs)
        object.__setattr__(self, "attrs", attrs)
        want = _ARITY.get(self.kind)
        if want is not None and len(attrs) != want:
            raise TemplateError(f"{self.kind} takes {want} attribute(s), got {len(attrs)}")
        if self.kind == "difference" and len(attrs) < 2:
            raise TemplateError("difference takes at least 2 attributes")
        allowed = _PARAMS.get(self.kind, {})
        extra = set(self.params) - set(allowed)
        if extra:
            raise TemplateError(f"unknown parameter(s) for {self.kind}: {sorted(extra)}")
        params = {**allowed, **self.params}
        if self.kind == "time_slot_onehot":
            width = float(params["slot_width_hours"])
            if not 0 < width <= 24:
                raise TemplateError("slot_width_hours must be in (0, 24]")
            params["slot_width_hours"] = width
            params["weekend_split"] = bool(params["weekend_split"])
        if "epsilon" in params and not float(params["epsilon"]) > 0:
            raise TemplateError("epsilon must be positive")
        if params.get("then") not in _POST_STEPS:
            raise TemplateError(f"'then' must be one of {_POST_STEPS[1:]}, got {params['then']!r}")
        object.__setattr__(self, "params", params)

    @property
    def width(self) -> int:
        """Number of design-matrix columns this feature expands to."""
        if self.kind != "time_slot_onehot":
            return 1
        slots = math.ceil(24.0 / self.params["slot_width_hours"])
        return slots * (2 if self.params["weekend_split"] else 1)

    def names(self) -> list[str]:
        a = self.attrs
        if self.kind == "identity":
            return [a[0]]
        if self.kind == "log":
            return [f"log{a[0]}"]
        if self.kind == "log1p-epsilon":
            return [f"logeps{a[0]}"]
        prefix = {"log": "log", "log1p-epsilon": "logeps"}.get(self.params.get("then"), "")
        if self.kind == "difference":
            return [prefix + "(" + "-".join(a) + ")" if prefix else "-".join(a)]
        if self.kind == "l2_distance":
            return [f"{prefix}L2({a[0]},{a[1]};{a[2]},{a[3]})"]
        width = self.params["slot_width_hours"]
        slots = math.ceil(24.0 / width)
        groups = ("wkday", "wkend") if self.params["weekend_split"] else ("all",)
        return [
            f"{a[0]}@{g}{s * width:g}h" for g in groups for s in range(slots)
        ]

    def apply(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate on every record.

        Returns an (n, width) array and a boolean mask of rows where the
        transform is defined and finite.
        """
        cols = [column(dataset, a) for a in self.attrs]
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "identity":
                out = cols[0].copy()
            elif self.kind == "log":
                out = _safe_log(cols[0])
            elif self.kind == "log1p-epsilon":
                out = _safe_log(cols[0] + float(self.params["epsilon"]))
            elif self.kind == "difference":
                out = cols[0] - np.sum(cols[1:], axis=0)
            elif self.kind == "l2_distance":
                out = np.hypot(cols[2] - cols[0], cols[3] - cols[1])
            else:
                return self._time_slots(cols[0])
            then = self.params.get("then")
            if then == "log":
                out = _safe_log(out)
            elif then == "log1p-epsilon":
                out = _safe_log(out + float(self.params["epsilon"]))
        out = out.reshape(-1, 1)
        return out, np.isfinite(out[:, 0])

    def _time_slots(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        width = self.params["slot_width_hours"]
        slots = math.ceil(24.0 / width)
        days = np.floor(ts / SECONDS_PER_DAY)
        hour = (ts - days * SECONDS_PER_DAY) / 3600.0
        slot = np.minimum(np.floor(hour / width), slots - 1).astype(np.int64)
        if self.params["weekend_split"]:
            # 1970-01-01 was a Thursday (Monday = 0 -> weekday 3)
            weekend = ((days.astype(np.int64) + 3) % 7) >= 5
            slot = slot + slots * weekend
        out = np.zeros((ts.shape[0], self.width))
        out[np.arange(ts.shape[0]), slot] = 1.0
        return out, np.isfinite(ts)


def _safe_log(v: np.ndarray) -> np.ndarray:
    """Natural log, NaN where the input is not strictly positive."""
    return np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), np.nan)


@dataclass(frozen=True)
class CorrelationTemplate:
    """Behavioral feature predicted from contextual features.

    ``context`` is a tuple of transforms, or the string ``"rest"`` meaning
    every attribute not used by the behavior, untransformed.
    """

    behavior: Transform
    context: tuple[Transform, ...] | str
    intercept: bool = True
    name: str = "filter"

    def __post_init__(self):
        if self.behavior.width != 1:
            raise TemplateError(f"behavior transform {self.behavior.kind} must yield one column")
        if isinstance(self.context, str):
            if self.context != "rest":
                raise TemplateError(f"context must be a list or 'rest', got {self.context!r}")
            return
        ctx = tuple(self.context)
        object.__setattr__(self, "context", ctx)
        if not ctx:
            raise TemplateError(f"template {self.name!r}: context is empty")
        self._check_overlap(ctx)

    def _check_overlap(self, ctx: Sequence[Transform]) -> None:
        used = {a for t in ctx for a in t.attrs}
        clash = used & set(self.behavior.attrs)
        if clash:
            raise TemplateError(
                f"template {self.name!r}: behavior attribute(s) {sorted(clash)} also in context"
            )

    def resolve(self, schema: Sequence[str]) -> tuple[Transform, ...]:
        """Concrete context features for a dataset schema."""
        if self.context != "rest":
            return self.context
        ctx = tuple(Transform("identity", (a,)) for a in schema if a not in self.behavior.attrs)
        if not ctx:
            raise TemplateError(f"template {self.name!r}: no attributes left for context")
        return ctx


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X {X.shape} and y {y.shape} disagree")
        row_ids = (
            np.arange(X.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        )
        if row_ids.shape != y.shape:
            raise ValueError("row_ids length must match y")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def column_names(template: CorrelationTemplate, schema: Sequence[str] | None = None) -> list[str]:
    """Design-matrix column labels: context features in order, intercept last."""
    if template.context == "rest":
        if schema is None:
            raise TemplateError("a schema is needed to expand context 'rest'")
        ctx = template.resolve(schema)
    else:
        ctx = template.context
    names = [f"ctx:{n}" for t in ctx for n in t.names()]
    if template.intercept:
        names.append("intercept")
    return names


def describe(template: CorrelationTemplate, schema: Sequence[str] | None = None) -> str:
    """Comma-separated column listing, e.g. ``"ctx:logL2, intercept"``."""
    return ", ".join(column_names(template, schema))


def compile_template(template: CorrelationTemplate, dataset: Dataset) -> tuple[DesignMatrix, np.ndarray]:
    """Build the design matrix of ``template`` over ``dataset``.

    Returns the design and the sorted ids of records excluded because some
    transform was undefined for them.
    """
    attrs = set(template.behavior.attrs)
    ctx = template.resolve(dataset.schema)
    for t in ctx:
        attrs.update(t.attrs)
    missing = sorted(a for a in attrs if a not in dataset.schema)
    if missing:
        raise TemplateError(f"template {template.name!r}: unknown attribute(s) {missing}")

    y, ok = template.behavior.apply(dataset)
    blocks = []
    for t in ctx:
        cols, valid = t.apply(dataset)
        blocks.append(cols)
        ok = ok & valid
    if template.intercept:
        blocks.append(np.ones((dataset.n, 1)))
    X = np.hstack(blocks)

    keep = np.flatnonzero(ok)
    excluded = np.flatnonzero(~ok)
    if keep.size == 0:
        raise TemplateError(f"template {template.name!r}: every record was excluded by its transforms")
    design = DesignMatrix(
        X=np.ascontiguousarray(X[keep]),
        y=y[keep, 0].copy(),
        row_ids=keep,
        columns=tuple(column_names(template, dataset.schema)),
    )
    return design, excluded


# JSON parsing

_FEATURE_KEYS = {"attr", "attrs", "transform"}
_TEMPLATE_KEYS = {"name", "behavior", "context", "intercept"}


def parse_feature(obj: Any) -> Transform:
    if isinstance(obj, str):
        return Transform("identity", (obj,))
    if not isinstance(obj, dict):
        raise TemplateError(f"feature must be an object or attribute name, got {obj!r}")
    kind = obj.get("transform", "identity")
    extra = set(obj) - _FEATURE_KEYS - set(_PARAMS.get(kind, {}))
    if extra:
        raise TemplateError(f"unknown key(s) in feature: {sorted(extra)}")
    if ("attr" in obj) == ("attrs" in obj):
        raise TemplateError(f"feature needs exactly one of 'attr' or 'attrs': {obj!r}")
    attrs = (obj["attr"],) if "attr" in obj else tuple(obj["attrs"])
    params = {k: v for k, v in obj.items() if k not in _FEATURE_KEYS}
    return Transform(kind, attrs, params)


def parse_template(obj: Any, default_name: str = "filter") -> CorrelationTemplate:
    if not isinstance(obj, dict):
        raise TemplateError(f"template must be an object, got {type(obj).__name__}")
    extra = set(obj) - _TEMPLATE_KEYS
    if extra:
        raise TemplateError(f"unknown key(s) in template: {sorted(extra)}")
    for key in ("behavior", "context"):
        if key not in obj:
            raise TemplateError(f"template missing required key {key!r}")
    ctx = obj["context"]
    if isinstance(ctx, str) and ctx == "rest":
        context: tuple[Transform, ...] | str = "rest"
    elif isinstance(ctx, list):
        context = tuple(parse_feature(f) for f in ctx)
    else:
        raise TemplateError(f"context must be a list or 'rest', got {ctx!r}")
    intercept = obj.get("intercept", True)
    if not isinstance(intercept, bool):
        raise TemplateError("intercept must be true or false")
    return CorrelationTemplate(
        behavior=parse_feature(obj["behavior"]),
        context=context,
        intercept=intercept,
        name=str(obj.get("name", default_name)),
    )


def parse_templates(obj: Any) -> list[CorrelationTemplate]:
    """Parse a config holding one template, a list, or ``{"templates": [...]}``."""
    if isinstance(obj, dict) and "templates" in obj:
        if set(obj) != {"templates"}:
            raise TemplateError(f"unknown key(s) in config: {sorted(set(obj) - {'templates'})}")
        obj = obj["templates"]
    items = obj if isinstance(obj, list) else [obj]
    if not items:
        raise TemplateError("no templates given")
    templates = [parse_template(t, default_name=f"filter{k + 1}") for k, t in enumerate(items)]
    names = [t.name for t in templates]
    if len(set(names)) != len(names):
        raise TemplateError(f"duplicate template names: {names}")
    return templates


def load_templates(path: str | Path) -> list[CorrelationTemplate]:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TemplateError(f"{path}: invalid JSON: {exc}") from exc
    return parse_templates(obj)


def template_to_dict(template: CorrelationTemplate) -> dict:
    def feat(t: Transform) -> dict:
        out: dict[str, Any] = {"attr": t.attrs[0]} if _ARITY.get(t.kind) == 1 else {"attrs": list(t.attrs)}
        out["transform"] = t.kind
        out.update(t.params)
        return out

    return {
        "name": template.name,
        "behavior": feat(template.behavior),
        "context": "rest" if template.context == "rest" else [feat(t) for t in template.context],
        "intercept": template.intercept,
    }
