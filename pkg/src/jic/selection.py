"""Choosing joint and individual cluster numbers from component normality.

A component whose scores look normally distributed carries no cluster
structure beyond noise. Scanning components in order gives the number of
structured dimensions ``E`` of the concatenated matrix and ``E_m`` of each
block; with ``M`` blocks the cluster numbers follow as

    K   = (E_1 + ... + E_M - E) / (M - 1) + 1
    K_m = E_m - K + 2
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_ndtr, ndtri

from .blocks import BlockSet, concat_blocks, pc_scores
from .exceptions import DegenerateInputError, InconsistentSelectionError, InputError

MIN_AD_SAMPLE = 8


@dataclass(frozen=True)
class NormalityReport:
    component_index: int  # 1-based
    a2_statistic: float
    a2_adjusted: float
    p_value: float
    decision: str  # "non_normal" or "normal"

    def as_dict(self) -> dict:
        return {
            "component": self.component_index,
            "a2": self.a2_statistic,
            "a2_adjusted": self.a2_adjusted,
            "p_value": self.p_value,
            "decision": self.decision,
        }


@dataclass(frozen=True)
class ScanRule:
    """How far to look past a normal component before stopping.

    ``lookahead == 0`` is the plain rule: stop at the first normal
    component. With ``lookahead = w`` scanning stops only after a normal
    component followed by ``w`` further normal ones.
    """

    lookahead: int = 4

    @classmethod
    def parse(cls, text) -> "ScanRule":
        if isinstance(text, ScanRule):
            return text
        t = str(text).strip().lower().replace("_", "-")
        if t == "first-normal":
            return cls(0)
        m = re.fullmatch(r"lookahead(?::|\(|=)?(\d+)\)?", t)
        if m:
            return cls(int(m.group(1)))
        if t == "lookahead":
            return cls(4)
        raise ValueError(f"unknown scan rule {text!r}; use first-normal or lookahead:N")

    def __str__(self):
        return "first-normal" if self.lookahead == 0 else f"lookahead:{self.lookahead}"


FIRST_NORMAL = ScanRule(0)


def ad_pvalue(a2_adjusted: float) -> float:
    """p-value for the adjusted A*^2, both normal parameters estimated.

    Piecewise-exponential fit of the case-3 null distribution (D'Agostino &
    Stephens 1986, Table 4.9).
    """
    a = a2_adjusted
    if a < 0.2:
        p = 1.0 - np.exp(-13.436 + 101.14 * a - 223.73 * a * a)
    elif a < 0.34:
        p = 1.0 - np.exp(-8.318 + 42.796 * a - 59.938 * a * a)
    elif a < 0.6:
        p = np.exp(0.9177 - 4.279 * a - 1.38 * a * a)
    elif a <= 13.0:
        p = np.exp(1.2937 - 5.709 * a + 0.0186 * a * a)
    else:
        p = 0.0
    return float(min(max(p, 0.0), 1.0))


def anderson_darling(sample) -> tuple:
    """Composite Anderson-Darling normality test.

    Returns ``(a2, a2_adjusted, p_value)`` where ``a2`` uses the sample mean
    and standard deviation (ddof=1) and ``a2_adjusted = a2 (1 + 0.75/n +
    2.25/n^2)``.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    n = x.size
    if n < MIN_AD_SAMPLE:
        raise InputError(f"Anderson-Darling needs at least {MIN_AD_SAMPLE} values, got {n}")
    if not np.all(np.isfinite(x)):
        raise InputError("sample contains non-finite values")
    sd = x.std(ddof=1)
    if not sd > 1e-300 or sd <= 1e-13 * np.abs(x).max():
        raise DegenerateInputError("sample is constant")
    w = np.sort((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    # log Phi(w_i) and log(1 - Phi(w_{n+1-i})) without cancellation
    s = np.sum((2 * i - 1) * (log_ndtr(w) + log_ndtr(-w[::-1])))
    a2 = float(-n - s / n)
    a2_adj = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    return a2, a2_adj, ad_pvalue(a2_adj)


def component_normality(scores, alpha: float = 0.05) -> list:
    """One NormalityReport per score row (component index is 1-based)."""
    reports = []
    for i, row in enumerate(np.atleast_2d(scores)):
        a2, a2a, p = anderson_darling(row)
        reports.append(NormalityReport(i + 1, a2, a2a, p, "non_normal" if p < alpha else "normal"))
    return reports


def scan_decisions(decisions, rule=FIRST_NORMAL) -> tuple:
    """Apply a scanning rule to ordered normal/non-normal decisions.

    Returns ``(E, exhausted)``; ``exhausted`` is True when the decisions ran
    out before the rule could stop on its own.
    """
    rule = ScanRule.parse(rule)
    E = 0
    run = 0
    for i, d in enumerate(decisions, start=1):
        if d == "non_normal":
            E = i
            run = 0
        else:
            run += 1
            if run > rule.lookahead:
                return E, False
    return E, True


def scan_components(scores, alpha: float = 0.05, rule=FIRST_NORMAL):
    """Number of leading structured components among the score rows.

    Returns ``(E, reports, exhausted)``.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    reports = component_normality(scores, alpha)
    E, exhausted = scan_decisions([r.decision for r in reports], rule)
    return E, reports, exhausted


def cluster_numbers(E: int, E_m, strict: bool = True) -> tuple:
    """Joint and individual cluster counts from subspace ranks.

    Returns ``(K, K_m, remainder)``. A nonzero remainder means
    ``sum(E_m) - E`` is not divisible by ``M - 1``; ``K`` is then floored.
    Raises InconsistentSelectionError when any count drops below 1.
    """
    E_m = [int(e) for e in E_m]
    M = len(E_m)
    if M < 2:
        raise ValueError("cluster numbers need at least two blocks")
    num = sum(E_m) - E
    q, rem = divmod(num, M - 1)
    K = q + 1
    K_m = [e - K + 2 for e in E_m]
    if strict and (K < 1 or any(k < 1 for k in K_m)):
        raise InconsistentSelectionError(
            f"E={E}, E_m={E_m} give K={K}, K_m={K_m}", E, E_m
        )
    return K, K_m, rem


def qq_data(sample) -> np.ndarray:
    """``(n, 2)`` array of theoretical normal quantiles vs standardized sample."""
    x = np.asarray(sample, dtype=np.float64).ravel()
    n = x.size
    theo = ndtri((np.arange(1, n + 1) - 0.5) / n)
    emp = np.sort((x - x.mean()) / x.std(ddof=1))
    return np.column_stack([theo, emp])


@dataclass(frozen=True)
class RankSelection:
    E: int
    E_m: tuple
    K: int
    K_m: tuple
    joint_reports: tuple
    block_reports: tuple  # one tuple of NormalityReport per block
    rule: str
    alpha: float
    max_components: int
    # E_m before the E cap, and scans that ran out of components
    E_m_raw: tuple = ()
    exhausted: dict = field(default_factory=dict)
    remainder: int = 0
    joint_scores: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    block_scores: tuple = field(default=(), repr=False, compare=False)

    @property
    def reports(self) -> list:
        out = list(self.joint_reports)
        for r in self.block_reports:
            out.extend(r)
        return out

    def as_dict(self) -> dict:
        return {
            "E": self.E,
            "E_m": list(self.E_m),
            "E_m_raw": list(self.E_m_raw),
            "K": self.K,
            "K_m": list(self.K_m),
            "remainder": self.remainder,
            "rule": self.rule,
            "alpha": self.alpha,
            "max_components": self.max_components,
            "exhausted": self.exhausted,
            "joint_components": [r.as_dict() for r in self.joint_reports],
            "block_components": [[r.as_dict() for r in rs] for rs in self.block_reports],
        }


def default_max_components(n: int) -> int:
    return min(n - 1, 30)


def select_cluster_numbers(bs: BlockSet, alpha: float = 0.05, rule="lookahead:4",
                           max_components: Optional[int] = None) -> RankSelection:
    """Estimate ``E`` and ``E_m`` by scanning and convert them to ``K``, ``K_m``.

    ``bs`` is used as given (center and scale beforehand). ``E`` comes from
    the scores of the concatenated matrix, each ``E_m`` from the scores of
    block ``m`` alone, capped at ``E``. With a single block the split is
    undefined: all structure is reported as joint (``K = E + 1``, ``K_1 = 1``).
    """
    rule = ScanRule.parse(rule)
    n = bs.n_samples
    if max_components is None:
        max_components = default_max_components(n)
    X = concat_blocks(bs)
    r = min(max_components, X.shape[0], n - 1)
    Z = pc_scores(X, r)
    E, joint_reports, ex = scan_components(Z, alpha, rule)
    exhausted = {"joint": ex, "blocks": []}

    E_raw, block_reports, block_scores = [], [], []
    for m, b in enumerate(bs):
        rm = min(max_components, b.shape[0], n - 1)
        Zm = pc_scores(b.data, rm)
        e, reps, ex = scan_components(Zm, alpha, rule)
        E_raw.append(e)
        block_reports.append(tuple(reps))
        block_scores.append(Zm)
        exhausted["blocks"].append(ex)
    E_m = [min(e, E) for e in E_raw]

    if len(bs) == 1:
        K, K_m, rem = E + 1, [1], 0
    else:
        K, K_m, rem = cluster_numbers(E, E_m)
        if rem:
            warnings.warn(
                f"sum(E_m) - E = {sum(E_m) - E} is not divisible by M - 1 = {len(bs) - 1}; "
                f"joint cluster number floored to {K}",
                RuntimeWarning, stacklevel=2,
            )
    return RankSelection(
        E=E, E_m=tuple(E_m), K=K, K_m=tuple(K_m), joint_reports=tuple(joint_reports),
        block_reports=tuple(block_reports), rule=str(rule), alpha=alpha,
        max_components=max_components, E_m_raw=tuple(E_raw), exhausted=exhausted,
        remainder=rem, joint_scores=Z, block_scores=tuple(block_scores),
    )
