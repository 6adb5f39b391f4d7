"""Structured pass/fail reports shared by the verification checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one named check: residuals, tolerance and verdict.

    ``residuals`` is a nested mapping of plain floats/bools/strings so the
    report serializes deterministically (keys sorted).
    """

    check: str
    residuals: dict
    tolerance: float
    passed: bool
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "residuals": _native(self.residuals),
            "tolerance": _native(self.tolerance),
            "pass": bool(self.passed),
            "inputs": _native(self.inputs),
        }

    def max_residual(self) -> float:
        return _max_abs(self.residuals)


def _native(obj):
    """Deep-convert numpy scalars/arrays so json.dumps accepts the report."""
    if isinstance(obj, dict):
        return {str(k): _native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_native(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            return obj.item()
        except (AttributeError, ValueError):
            return [_native(v) for v in obj]
    return obj


def _max_abs(obj) -> float:
    if isinstance(obj, dict):
        vals = [_max_abs(v) for v in obj.values()]
        return max(vals, default=0.0)
    if isinstance(obj, (list, tuple)):
        vals = [_max_abs(v) for v in obj]
        return max(vals, default=0.0)
    if isinstance(obj, bool) or isinstance(obj, str):
        return 0.0
    if isinstance(obj, (int, float)):
        return abs(float(obj))
    return 0.0


def reports_to_json(reports) -> str:
    """Serialize a list of reports with stable key ordering."""
    return json.dumps(
        [r.to_dict() for r in reports], indent=2, sort_keys=True
    ) + "\n"
