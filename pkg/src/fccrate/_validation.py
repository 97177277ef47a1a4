"""Input validation helpers shared by the estimator classes."""
from __future__ import annotations

from .cell_sim import ChargingSample
from .io import sample_from_dict


def check_samples(X) -> list:
    """Coerce records (samples, dicts or a DataFrame) to ChargingSample objects."""
    if X is None:
        raise ValueError("expected charging samples, got None")
    if hasattr(X, "to_dict") and hasattr(X, "columns"):
        X = X.to_dict("records")
    out = []
    for rec in X:
        if isinstance(rec, ChargingSample):
            out.append(rec)
        elif isinstance(rec, dict):
            out.append(sample_from_dict(rec))
        else:
            raise TypeError(f"cannot interpret {type(rec).__name__} as a charging sample")
    return out


def check_traces(X) -> list:
    """A list of traces; a flat list of samples counts as one trace."""
    X = list(X)
    if X and isinstance(X[0], (ChargingSample, dict)):
        return [check_samples(X)]
    return [check_samples(trace) for trace in X]


def check_strategy(strategy: str) -> str:
    s = strategy.replace("-", "_")
    if s not in ("at_cc_end", "max_in_cc"):
        raise ValueError(f"strategy must be at_cc_end or max_in_cc, got {strategy!r}")
    return s
