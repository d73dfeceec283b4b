"""OLS with classical standard errors, plus the nested-model F test.

flare_regression() joins a flare census with firm outcomes and regresses the
log outcome on flare length, an islands-only dummy, and/or log total count.
Islands-only entities enter with length 0 and dummy 1. Observations with a
missing or nonpositive outcome are dropped and logged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.stats import f as f_distribution

from .errors import ParseError, RankDeficiencyError, ValidationError
from .flares import INFINITE, FlareCensus
from .panel import PanelDataset

OUTCOME_FIELDS = ("revenue", "ebit", "market_value")


@dataclass(frozen=True)
class FirmOutcome:
    """Financial outcomes (nullable) and the total count from the raw panel."""

    entity: str
    revenue: float | None
    ebit: float | None
    market_value: float | None
    total_patents: int

    def __post_init__(self):
        if self.total_patents < 1:
            raise ValidationError(
                f"entity {self.entity!r} has total count {self.total_patents} < 1"
            )

    def value(self, field: str) -> float | None:
        if field not in OUTCOME_FIELDS:
            raise ValidationError(f"unknown outcome {field!r}; choose one of {OUTCOME_FIELDS}")
        return getattr(self, field)


@dataclass(frozen=True)
class DroppedObservation:
    entity: str
    reason: str


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coef: tuple[float, ...]
    se: tuple[float, ...]
    r2: float
    adj_r2: float
    n: int
    dropped: tuple[DroppedObservation, ...] = ()

    def __post_init__(self):
        if not (len(self.names) == len(self.coef) == len(self.se)):
            raise ValidationError("names, coefficients, and errors must align")

    @property
    def n_params(self) -> int:
        return len(self.coef)


@dataclass(frozen=True)
class FTestResult:
    statistic: float
    p_value: float
    df_num: int
    df_den: int


def ols(
    y: np.ndarray, x: np.ndarray, names: tuple[str, ...] | None = None
) -> RegressionResult:
    """Least squares via QR, with classical (homoskedastic) standard errors.

    Raises RankDeficiencyError naming the collinear columns when the design is
    not full column rank, and ValidationError when N <= number of columns.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n, p = x.shape
    if names is None:
        names = tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ValidationError("one name per design column required")
    if y.shape[0] != n:
        raise ValidationError("y and X row counts differ")
    if n <= p:
        raise ValidationError(f"need more than {p} observations, got {n}")
    q, r, pivot = qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = (diag[0] if diag.size else 0.0) * max(n, p) * np.finfo(np.float64).eps
    rank = int((diag > tol).sum())
    if rank < p:
        raise RankDeficiencyError(tuple(names[j] for j in pivot[rank:]))
    beta_pivoted = solve_triangular(r, q.T @ y)
    beta = np.empty(p)
    beta[pivot] = beta_pivoted
    residuals = y - x @ beta
    rss = float(residuals @ residuals)
    sigma2 = rss / (n - p)
    r_inv = solve_triangular(r, np.eye(p))
    xtx_inv_pivoted = r_inv @ r_inv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(pivot, pivot)] = xtx_inv_pivoted
    se = np.sqrt(sigma2 * np.diag(xtx_inv))
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / (n - p)
    return RegressionResult(
        names=tuple(names),
        coef=tuple(float(b) for b in beta),
        se=tuple(float(s) for s in se),
        r2=r2,
        adj_r2=adj_r2,
        n=n,
    )


def load_outcomes_csv(path: str | Path) -> dict[str, dict[str, float | None]]:
    """Read `entity,revenue,ebit,market_value` rows; empty cells become None."""
    path = Path(path)
    out: dict[str, dict[str, float | None]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        required = ("entity",) + OUTCOME_FIELDS
        missing = [name for name in required if name not in header]
        if missing:
            raise ValidationError(f"missing columns {missing} in {path}")
        cols = {name: header.index(name) for name in required}
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            entity = row[cols["entity"]].strip()
            if not entity:
                raise ParseError("empty entity id", line=line)
            values: dict[str, float | None] = {}
            for field in OUTCOME_FIELDS:
                cell = row[cols[field]].strip() if cols[field] < len(row) else ""
                if cell == "":
                    values[field] = None
                else:
                    try:
                        values[field] = float(cell)
                    except ValueError:
                        raise ParseError(
                            f"{field} value {cell!r} is not numeric", line=line
                        ) from None
            out[entity] = values
    return out


def firm_outcomes(
    panel: PanelDataset, raw: dict[str, dict[str, float | None]]
) -> tuple[FirmOutcome, ...]:
    """Join outcome rows with total counts from the raw (pre-window) panel."""
    totals = panel.totals_by_entity()
    out = []
    for entity in panel.entities:
        if totals[entity] < 1:
            continue
        values = raw.get(entity, {})
        out.append(
            FirmOutcome(
                entity=entity,
                revenue=values.get("revenue"),
                ebit=values.get("ebit"),
                market_value=values.get("market_value"),
                total_patents=totals[entity],
            )
        )
    return tuple(out)


def flare_regression(
    census: FlareCensus,
    outcomes: tuple[FirmOutcome, ...],
    outcome: str = "revenue",
    include_flare: bool = True,
    include_count: bool = True,
) -> RegressionResult:
    """Regress the log outcome on flare terms and/or log total count.

    The flare terms are the flare length (infinite lengths enter as 0) and an
    islands-only indicator. Entities with no outcome record, a missing value,
    or a nonpositive value are dropped with a reason.
    """
    by_entity = {o.entity: o for o in outcomes}
    rows = sorted(set(census.reports) & set(by_entity))
    if not rows:
        raise ValidationError("census and outcomes share no entities")
    dropped: list[DroppedObservation] = []
    ys: list[float] = []
    design: list[list[float]] = []
    for entity in sorted(census.reports):
        record = by_entity.get(entity)
        if record is None:
            dropped.append(DroppedObservation(entity, "no outcome record"))
            continue
        value = record.value(outcome)
        if value is None:
            dropped.append(DroppedObservation(entity, f"missing {outcome}"))
            continue
        if value <= 0:
            dropped.append(DroppedObservation(entity, f"nonpositive {outcome}"))
            continue
        report = census.reports[entity]
        row = [1.0]
        if include_flare:
            is_island = report.length == INFINITE
            row.append(0.0 if is_island else float(report.length))
            row.append(1.0 if is_island else 0.0)
        if include_count:
            row.append(math.log(record.total_patents))
        ys.append(math.log(value))
        design.append(row)
    names: list[str] = ["const"]
    if include_flare:
        names += ["flare_length", "islands_only"]
    if include_count:
        names.append("log_patents")
    result = ols(np.array(ys), np.array(design), names=tuple(names))
    return RegressionResult(
        names=result.names,
        coef=result.coef,
        se=result.se,
        r2=result.r2,
        adj_r2=result.adj_r2,
        n=result.n,
        dropped=tuple(dropped),
    )


def f_statistic_from_r2(
    r2_unrestricted: float, r2_restricted: float, q: int, n_obs: int, n_params_unrestricted: int
) -> float:
    """F statistic of a q-restriction test from the two R-squared values."""
    if q < 1:
        raise ValidationError(f"q must be >= 1, got {q}")
    df_den = n_obs - n_params_unrestricted
    if df_den < 1:
        raise ValidationError("no residual degrees of freedom")
    if r2_restricted > r2_unrestricted + 1e-12:
        raise ValidationError("restricted model fits better; models are not nested")
    numerator = max(0.0, r2_unrestricted - r2_restricted) / q
    denominator = (1.0 - r2_unrestricted) / df_den
    return numerator / denominator


def f_test_restriction(
    unrestricted: RegressionResult, restricted: RegressionResult, q: int
) -> FTestResult:
    """Test the q restrictions taking the restricted model into the full one."""
    if unrestricted.n != restricted.n:
        raise ValidationError(
            f"models fit different samples: N={unrestricted.n} vs N={restricted.n}"
        )
    if restricted.n_params >= unrestricted.n_params:
        raise ValidationError("restricted model must have fewer parameters")
    statistic = f_statistic_from_r2(
        unrestricted.r2, restricted.r2, q, unrestricted.n, unrestricted.n_params
    )
    df_den = unrestricted.n - unrestricted.n_params
    p_value = float(f_distribution.sf(statistic, q, df_den))
    return FTestResult(statistic=statistic, p_value=p_value, df_num=q, df_den=df_den)
