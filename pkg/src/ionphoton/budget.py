"""Efficiency chains for the photon detection path and their uncertainties."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources

import numpy as np
from scipy.stats import truncnorm

MODEL_EFFICIENCY_854 = 0.518
MODEL_EFFICIENCY_1550 = 1.26e-3


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class EfficiencyEntry:
    name: str
    value: float
    sigma: float | None = None
    significant_digits: int | None = None

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise BudgetError(f"{self.name}: value {self.value} is not a probability")
        if self.sigma is not None and self.sigma < 0:
            raise BudgetError(f"{self.name}: sigma must be >= 0")
        if self.sigma is None and self.significant_digits is None:
            raise BudgetError(f"{self.name}: give either sigma or the number of quoted decimals")

    @classmethod
    def from_text(cls, name: str, value: str, sigma: str = "") -> "EfficiencyEntry":
        """Parse quoted numbers, keeping the number of decimals of ``value``."""
        try:
            dec = Decimal(value.strip())
        except InvalidOperation:
            raise BudgetError(f"{name}: cannot parse value {value!r}") from None
        decimals = max(-dec.as_tuple().exponent, 0)
        sig = float(sigma) if sigma.strip() else None
        return cls(name, float(dec), sig, decimals)


def implicit_sigma(entry: EfficiencyEntry) -> float:
    """Explicit sigma if given, else half a unit in the last quoted decimal."""
    if entry.sigma is not None:
        return entry.sigma
    return 0.5 * 10.0 ** (-entry.significant_digits)


def chain_product(entries: list[EfficiencyEntry]) -> tuple[float, float]:
    """Product of the chain with first-order relative-quadrature error."""
    if not entries:
        raise BudgetError("efficiency chain is empty")
    values = np.array([e.value for e in entries])
    sigmas = np.array([implicit_sigma(e) for e in entries])
    bad = [e.name for e, v, s in zip(entries, values, sigmas) if v == 0 and s > 0]
    if bad:
        raise BudgetError(f"zero value with nonzero sigma, relative error undefined: {bad}")
    total = float(np.prod(values))
    if total == 0:
        return 0.0, 0.0
    rel = np.sqrt(np.sum((sigmas / values) ** 2))
    return total, float(total * rel)


def monte_carlo_chain(entries: list[EfficiencyEntry], samples: int = 200_000,
                      seed: int = 0) -> tuple[float, float]:
    """Mean and std of the product with each entry drawn from a normal truncated to [0, 1]."""
    rng = np.random.default_rng(seed)
    product = np.ones(samples)
    for e in entries:
        s = implicit_sigma(e)
        if s == 0:
            product *= e.value
            continue
        a, b = (0 - e.value) / s, (1 - e.value) / s
        product *= truncnorm.rvs(a, b, loc=e.value, scale=s, size=samples, random_state=rng)
    return float(product.mean()), float(product.std(ddof=1))


def compare_with_model(budget_value: tuple[float, float], observed: tuple[float, float]) -> float:
    """Distance in combined standard deviations."""
    (v1, s1), (v2, s2) = budget_value, observed
    combined = np.hypot(s1, s2)
    if combined <= 0:
        raise BudgetError("at least one sigma must be positive")
    return float(abs(v1 - v2) / combined)


def parse_budget(text: str) -> list[EfficiencyEntry]:
    entries = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
            continue
        if row[0].strip() == "name":
            continue
        if len(row) not in (2, 3):
            raise BudgetError(f"line {lineno}: expected 'name,value,sigma'")
        sigma = row[2] if len(row) == 3 else ""
        try:
            entries.append(EfficiencyEntry.from_text(row[0].strip(), row[1], sigma))
        except (BudgetError, ValueError) as exc:
            raise BudgetError(f"line {lineno}: {exc}") from None
    if not entries:
        raise BudgetError("budget file has no entries")
    return entries


def load_budget(path) -> list[EfficiencyEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_budget(fh.read())


def builtin_chain(name: str) -> list[EfficiencyEntry]:
    """The shipped ``"854"`` or ``"1550"`` chain."""
    try:
        text = resources.files("ionphoton.data").joinpath(f"{name}.budget").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise BudgetError(f"no built-in chain named {name!r}") from None
    return parse_budget(text)
