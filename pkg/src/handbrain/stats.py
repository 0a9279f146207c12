"""Mann-Whitney U test and the switch-vs-stay comparison report.

The exact two-sided p-value is computed by the classic counting recurrence
over the tie-free null distribution (eligible for n*m <= 400 tie-free data);
everything else falls back to the normal approximation with midranks,
tie-corrected variance, and continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

EXACT_MAX_NM = 400
ALPHA = 0.05


@dataclass(frozen=True)
class UTestResult:
    u: float  # U statistic of the first sample
    u_other: float  # n*m - u, so orientation never matters downstream
    p: float  # two-sided
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int
    method: str  # "exact" | "normal"


def _midranks(pooled: Sequence[float]) -> list:
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


@lru_cache(maxsize=None)
def _count(n: int, m: int, u: int) -> int:
    """Number of rank assignments of n-vs-m tie-free data with U statistic u."""
    if u < 0:
        return 0
    if n == 0 or m == 0:
        return 1 if u == 0 else 0
    return _count(n - 1, m, u - m) + _count(n, m - 1, u)


def _exact_two_sided(n: int, m: int, u_lo: float) -> float:
    total = math.comb(n + m, n)
    u_lo_int = int(u_lo)  # tie-free U is integral
    low = sum(_count(n, m, u) for u in range(0, u_lo_int + 1))
    high = sum(_count(n, m, u) for u in range(n * m - u_lo_int, n * m + 1))
    return min(1.0, (low + high) / total)


def _normal_two_sided(u: float, n: int, m: int, pooled: Sequence[float]) -> float:
    N = n + m
    tie_term = 0.0
    seen: dict = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    for count in seen.values():
        tie_term += count**3 - count
    var = (n * m / 12.0) * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return 1.0
    mean = n * m / 2.0
    z = (abs(u - mean) - 0.5) / math.sqrt(var)  # continuity correction toward the mean
    z = max(z, 0.0)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> UTestResult:
    """Two-sided Mann-Whitney U test of two independent samples."""
    a, b = list(a), list(b)
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n, m = len(a), len(b)
    pooled = a + b
    ranks = _midranks(pooled)
    r_a = sum(ranks[:n])
    u_a = r_a - n * (n + 1) / 2.0
    u_b = n * m - u_a

    tie_free = len(set(pooled)) == len(pooled)
    if n * m <= EXACT_MAX_NM and tie_free:
        p = _exact_two_sided(n, m, min(u_a, u_b))
        method = "exact"
    else:
        p = _normal_two_sided(u_a, n, m, pooled)
        method = "normal"
    return UTestResult(
        u=u_a,
        u_other=u_b,
        p=p,
        mean_a=sum(a) / n,
        mean_b=sum(b) / m,
        n_a=n,
        n_b=m,
        method=method,
    )


# ---------------------------------------------------------------------------
# Switch-vs-stay report over per-turn records

# variable name -> how to read it off a FeatureRow
REPORT_VARIABLES = [
    ("gaze_dispersion", "feature"),
    ("gaze_entropy", "feature"),
    ("dwell_ratio", "feature"),
    ("fragility", "feature"),
    ("surprise_mean", "feature"),
    ("eval_delta", "outcome"),
]


def per_turn_records(rows) -> list:
    """Collapse 1-second samples to one record per turn: the decision-time sample."""
    final: dict = {}
    for row in rows:
        key = (row.session_id, row.turn)
        if key not in final or row.elapsed_s > final[key].elapsed_s:
            final[key] = row
    return [final[k] for k in sorted(final)]


def analysis_report(rows, alpha: float = ALPHA) -> dict:
    """Group means, U, and p per variable, split by the switch label."""
    turns = per_turn_records(rows)
    switched = [r for r in turns if r.label_switch]
    stayed = [r for r in turns if not r.label_switch]

    variables = {}
    for name, source in REPORT_VARIABLES:
        def value(row):
            v = row.turn_eval_delta if source == "outcome" else row.features.get(name)
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)

        a = [v for v in (value(r) for r in switched) if v is not None]
        b = [v for v in (value(r) for r in stayed) if v is not None]
        if len(a) < 2 or len(b) < 2:
            variables[name] = {"insufficient_data": True, "n_switch": len(a), "n_no_switch": len(b)}
            continue
        res = mann_whitney_u(a, b)
        variables[name] = {
            "insufficient_data": False,
            "mean_switch": res.mean_a,
            "mean_no_switch": res.mean_b,
            "n_switch": res.n_a,
            "n_no_switch": res.n_b,
            "u": res.u,
            "u_other": res.u_other,
            "p": res.p,
            "method": res.method,
            "significant": res.p < alpha,
        }
    return {
        "alpha": alpha,
        "turns": len(turns),
        "switch_turns": len(switched),
        "no_switch_turns": len(stayed),
        "variables": variables,
    }


def report_markdown(report: dict) -> str:
    lines = [
        f"# Switch vs. stay comparison ({report['turns']} turns: "
        f"{report['switch_turns']} switch / {report['no_switch_turns']} stay)",
        "",
        "| variable | mean (switch) | mean (stay) | U | n*m - U | p | method | significant |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for name, var in report["variables"].items():
        if var.get("insufficient_data"):
            lines.append(f"| {name} | - | - | - | - | - | - | insufficient data |")
            continue
        lines.append(
            "| {name} | {ms:.4g} | {mn:.4g} | {u:.1f} | {uo:.1f} | {p:.4g} | {method} | {sig} |".format(
                name=name,
                ms=var["mean_switch"],
                mn=var["mean_no_switch"],
                u=var["u"],
                uo=var["u_other"],
                p=var["p"],
                method=var["method"],
                sig="yes" if var["significant"] else "no",
            )
        )
    return "\n".join(lines) + "\n"
