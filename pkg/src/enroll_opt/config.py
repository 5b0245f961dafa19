"""Study configuration file format and its translation into kernel types.

Rates given per month are divided by ``DAYS_PER_MONTH`` (30) on ingestion,
and a ``(mean, cv)`` pair becomes the gamma prior ``alpha = 1/cv^2``,
``beta = alpha/mean``.  Nothing downstream sees months or cv.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .design import AllocationBounds, CostModel, CountryKinetics
from .errors import EnrollOptError
from .model import CountryPlan, SitePlan, StudyPlan, activation_grid
from .pgdist import RatePrior

__all__ = [
    "DAYS_PER_MONTH",
    "ConfigError",
    "StudyConfig",
    "DesignInputs",
    "load_config",
    "parse_config",
    "format_validation_error",
]

DAYS_PER_MONTH = 30.0


class ConfigError(EnrollOptError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StudySection(_Strict):
    target_n: int = Field(ge=1)
    t_plan_days: int = Field(ge=1)


class CostSection(_Strict):
    site: float = Field(ge=0)
    patient: float = Field(ge=0)
    country: float = Field(default=0.0, ge=0)


class BoundsSection(_Strict):
    low: int = Field(ge=0)
    high: int = Field(ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.high < self.low:
            raise ValueError("high must be >= low")
        return self


class RateSection(_Strict):
    mean_per_month: Optional[float] = Field(default=None, gt=0)
    mean_per_day: Optional[float] = Field(default=None, gt=0)
    cv: float = Field(gt=0)

    @model_validator(mode="after")
    def _one_unit(self):
        if (self.mean_per_month is None) == (self.mean_per_day is None):
            raise ValueError("give exactly one of mean_per_month or mean_per_day")
        return self

    @property
    def per_day(self) -> float:
        if self.mean_per_day is not None:
            return self.mean_per_day
        return self.mean_per_month / DAYS_PER_MONTH

    def prior(self) -> RatePrior:
        return RatePrior.from_mean_cv(self.per_day, self.cv)


class ActivationSection(_Strict):
    window_days: Optional[tuple[int, int]] = None
    explicit_days: Optional[list[int]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if (self.window_days is None) == (self.explicit_days is None):
            raise ValueError("give exactly one of window_days or explicit_days")
        if self.window_days is not None:
            a, b = self.window_days
            if a < 0 or b < a:
                raise ValueError("window_days must satisfy 0 <= a <= b")
        if self.explicit_days is not None and any(d < 0 for d in self.explicit_days):
            raise ValueError("explicit_days must be >= 0")
        return self


class SiteSection(_Strict):
    activation_day: int = Field(ge=0)
    alpha: Optional[float] = Field(default=None, gt=0)
    beta: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _pair(self):
        if (self.alpha is None) != (self.beta is None):
            raise ValueError("alpha and beta go together")
        return self


class CountrySection(_Strict):
    id: str = Field(min_length=1)
    cap: Optional[int] = Field(default=None, ge=0)
    cost: Optional[CostSection] = None
    bounds: Optional[BoundsSection] = None
    rate: Optional[RateSection] = None
    activation: Optional[ActivationSection] = None
    n_sites: Optional[int] = Field(default=None, ge=0)
    sites: Optional[list[SiteSection]] = None

    @model_validator(mode="after")
    def _rate_source(self):
        site_priors = [s.alpha is not None for s in self.sites or []]
        if self.rate is not None and any(site_priors):
            raise ValueError("give either rate (mean, cv) or per-site alpha/beta, not both")
        if self.rate is None and (not site_priors or not all(site_priors)):
            raise ValueError("rate is required unless every site lists alpha and beta")
        if self.sites is not None and self.n_sites is not None and self.n_sites != len(self.sites):
            raise ValueError("n_sites disagrees with the number of listed sites")
        return self


class StudyConfig(_Strict):
    study: StudySection
    countries: list[CountrySection] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_ids(self):
        ids = [c.id for c in self.countries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"duplicate country ids: {dup}")
        return self

    # -- forecasting -----------------------------------------------------

    def _country_sites(self, i: int, c: CountrySection, override: Optional[int]) -> list[SitePlan]:
        where = f"countries[{i}]"
        if c.sites is not None and override is None:
            return [
                SitePlan(
                    f"{c.id}-{k + 1}",
                    s.activation_day,
                    RatePrior(s.alpha, s.beta) if s.alpha is not None else c.rate.prior(),
                )
                for k, s in enumerate(c.sites)
            ]
        if c.rate is None:
            raise ConfigError(f"{where}.rate: required to place sites by count")
        prior = c.rate.prior()
        if override is not None or c.activation is None or c.activation.explicit_days is None:
            count = override if override is not None else c.n_sites
            if count is None:
                raise ConfigError(f"{where}.n_sites: needed to place sites on the activation window")
            if c.activation is None or c.activation.window_days is None:
                raise ConfigError(f"{where}.activation.window_days: needed to place {count} sites")
            days = activation_grid(*c.activation.window_days, count)
        else:
            days = list(c.activation.explicit_days)
        return [SitePlan(f"{c.id}-{k + 1}", d, prior) for k, d in enumerate(days)]

    def to_plan(self, allocation: Optional[list[int]] = None) -> StudyPlan:
        """Concrete plan; ``allocation`` replaces every country's site count."""
        if allocation is not None and len(allocation) != len(self.countries):
            raise ConfigError("allocation length differs from the number of countries")
        countries = []
        for i, c in enumerate(self.countries):
            override = None if allocation is None else int(allocation[i])
            countries.append(CountryPlan(c.id, tuple(self._country_sites(i, c, override)), c.cap))
        return StudyPlan(tuple(countries), self.study.target_n, self.study.t_plan_days)

    # -- optimization ----------------------------------------------------

    def design_inputs(self) -> "DesignInputs":
        T = float(self.study.t_plan_days)
        kin, site, patient, country, low, high = [], [], [], [], [], []
        for i, c in enumerate(self.countries):
            where = f"countries[{i}]"
            if c.cost is None:
                raise ConfigError(f"{where}.cost: required for optimization")
            if c.bounds is None:
                raise ConfigError(f"{where}.bounds: required for optimization")
            if c.rate is None:
                raise ConfigError(f"{where}.rate: optimization needs a country-level rate (mean, cv)")
            if c.activation is None or c.activation.window_days is None:
                raise ConfigError(f"{where}.activation.window_days: required for optimization")
            kin.append(CountryKinetics.from_mean_cv(c.rate.per_day, c.rate.cv, c.activation.window_days, T))
            site.append(c.cost.site)
            patient.append(c.cost.patient)
            country.append(c.cost.country)
            low.append(c.bounds.low)
            high.append(c.bounds.high)
        return DesignInputs(
            kinetics=kin,
            costs=CostModel(np.array(site), np.array(patient), np.array(country)),
            bounds=AllocationBounds(np.array(low), np.array(high)),
            caps=[c.cap for c in self.countries],
            target_n=self.study.target_n,
        )


class DesignInputs(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kinetics: list[CountryKinetics]
    costs: CostModel
    bounds: AllocationBounds
    caps: list[Optional[int]]
    target_n: int

    @property
    def any_capped(self) -> bool:
        return any(c is not None for c in self.caps)


def format_validation_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ""
        for part in e["loc"]:
            path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else str(part))
        lines.append(f"{path or '<root>'}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data) -> StudyConfig:
    try:
        return StudyConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(format_validation_error(err)) from None


def load_config(path) -> StudyConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigError(f"{p}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{p}: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}") from None
    return parse_config(data)
