"""Check records pairing a bound with a Monte-Carlo estimate, and their serialization."""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_SLACK = 3.0


def _clean(x):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class CheckRecord:
    """One inequality ``empirical <= bound + slack * se``.

    Identity checks use ``se = 0`` with ``bound`` set to the tolerance and
    ``empirical`` to the largest observed deviation.
    """

    name: str
    bound: float
    empirical: float
    se: float = 0.0
    slack: float = DEFAULT_SLACK
    terms: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.empirical <= self.bound + self.slack * self.se)

    @property
    def margin(self) -> float:
        return self.bound + self.slack * self.se - self.empirical

    def to_dict(self) -> dict:
        return _clean({
            "name": self.name,
            "bound": self.bound,
            "empirical": self.empirical,
            "se": self.se,
            "slack": self.slack,
            "passed": self.passed,
            "terms": self.terms,
            "metadata": self.metadata,
        })

    def describe(self) -> str:
        rel = "<=" if self.passed else ">"
        extra = f" + {self.slack:g}*SE({self.se:.3g})" if self.se else ""
        return f"{self.name}: empirical {self.empirical:.6g} {rel} bound {self.bound:.6g}{extra}"


@dataclass
class BoundReport:
    title: str
    checks: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, check: CheckRecord) -> CheckRecord:
        self.checks.append(check)
        return check

    def extend(self, checks):
        self.checks.extend(checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"title": self.title, "passed": self.passed, "metadata": _clean(self.metadata),
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    def to_csv(self) -> str:
        out = io.StringIO()
        wr = csv.writer(out)
        wr.writerow(["report", "name", "bound", "empirical", "se", "slack", "passed"])
        for c in self.checks:
            wr.writerow([self.title, c.name, repr(float(c.bound)), repr(float(c.empirical)),
                         repr(float(c.se)), repr(float(c.slack)), int(c.passed)])
        return out.getvalue()


def mean_se(x) -> tuple:
    """Sample mean and its standard error (0 for a single observation)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = x.mean(axis=0)
    if n < 2:
        return m, np.zeros_like(m)
    return m, x.std(axis=0, ddof=1) / math.sqrt(n)
