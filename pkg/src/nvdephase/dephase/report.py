"""Total decoherence rate as the sum of channel rates."""

from __future__ import annotations

import math

from .pipeline import CLASSIFICATION, DephasingResult

__all__ = ["SEQUENCES", "aggregate_report"]

SEQUENCES = ("ramsey", "hahn")
_TERM = {"sp-ph": "pure", "sp-nu-ph": "disorder", "sp-nu": "disorder"}


def _rate(gamma_inverse: float) -> float:
    return 0.0 if math.isinf(gamma_inverse) else 1.0 / gamma_inverse


def aggregate_report(results, t1: float | None = None, sequence: str = "ramsey") -> dict:
    """Gamma = 1/(2 T1) + sum of included channel rates.

    ``results`` holds DephasingResult objects or plain dicts with ``channel``
    and ``gamma_inverse``. Reversible channels drop out for a Hahn echo.
    """
    if sequence not in SEQUENCES:
        raise ValueError(f"sequence must be one of {SEQUENCES}, got {sequence!r}")
    results = list(results)
    if not results:
        raise ValueError("aggregate_report needs at least one channel result")
    channels = []
    total = []
    for r in results:
        channel = r.channel if isinstance(r, DephasingResult) else r["channel"]
        gamma_inv = r.gamma_inverse if isinstance(r, DephasingResult) else float(r["gamma_inverse"])
        homogeneity, reversibility = CLASSIFICATION[channel]
        included = not (sequence == "hahn" and reversibility == "reversible")
        rate = _rate(gamma_inv)
        if included:
            total.append(rate)
        channels.append({"channel": channel, "term": _TERM[channel], "gamma_inverse": gamma_inv,
                         "rate": rate, "homogeneity": homogeneity, "reversibility": reversibility,
                         "included": included})
    relaxation = None
    if t1 is not None:
        if not t1 > 0:
            raise ValueError("t1 must be positive")
        relaxation = 1.0 / (2.0 * t1)
        total.append(relaxation)
    total_rate = math.fsum(total)
    return {
        "sequence": sequence,
        "channels": channels,
        "t1": t1,
        "relaxation_rate": relaxation,
        "total_rate": total_rate,
        "t2": math.inf if total_rate == 0 else 1.0 / total_rate,
    }
