"""Validated JSON documents written by the command-line tool."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class _Out(BaseModel):
    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")


class CompletionOut(_Out):
    mean_day: float = Field(ge=0)
    lo_day: int = Field(ge=0)
    hi_day: int = Field(ge=0)
    q_level: float = Field(gt=0, lt=1)


class ForecastSummaryOut(_Out):
    method: str
    target_n: int
    t_plan: int
    pos_t_plan: float = Field(ge=0, le=1)
    completion: CompletionOut
    horizon_days: int


class CountryCapOut(_Out):
    country_id: str
    cap: int
    prob_cap_by_t_plan: float = Field(ge=0, le=1)
    cap_time_quantile: Optional[int]
    flagged: bool
    reasons: list[str]


class CapImpactOut(_Out):
    method: str
    q: float
    t_plan: int
    pos_t_plan: float = Field(ge=0, le=1)
    completion_quantile: Optional[int]
    flagged: list[str]
    countries: list[CountryCapOut]


class OptimizeOut(_Out):
    country_ids: list[str]
    allocation: list[int]
    total_sites: int
    total_cost: float
    cost_components: dict[str, float]
    target_pos: float
    pos_achieved: float
    pos_checks: dict[str, float]
    method: str
    iterations: int


class ComparisonRow(_Out):
    quantity: str
    day: int
    analytic: float
    monte_carlo: float
    std_error: float
    z: float


class SimulateOut(_Out):
    replications: int
    seed: int
    horizon: int
    pos_t_plan: float
    pos_t_plan_se: float
    max_abs_z: float
    comparison: list[ComparisonRow]


class AppendixRowOut(_Out):
    K: int
    dif: float
    reference: float
    passed: bool


class AppendixOut(_Out):
    rows: list[AppendixRowOut]
    strictly_decreasing: bool
    tolerance: float
    all_passed: bool
