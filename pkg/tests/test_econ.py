from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridwind.dispatch import DispatchTrace
from hybridwind.econ import (
    HOURS_PER_YEAR,
    AnnualMetrics,
    FarmSpec,
    StorageCatalog,
    StorageSpec,
    annual_report,
    average_annual,
    cove,
    curtailment_series,
    default_catalog,
    fixed_costs,
    lcoe,
    value_factor,
)
from hybridwind.errors import ConfigError, UndefinedMetricError
from hybridwind.tuner import DEFAULT_SPACE

FARM = FarmSpec(capacity_mw=100.0, capex=1000.0, opex=50.0, fcr=0.1)
# CAPEX_S * FCR + OPEX_S = 150
STORE = StorageSpec("x", rating_mw=10.0, duration_h=4.0, rte=0.9, capex=1000.0, opex=50.0)

positive = arrays(np.float64, st.integers(1, 50), elements=st.floats(0.1, 1e3))


def test_lcoe_examples():
    r = np.array([100.0, 150.0, 50.0])
    assert lcoe(r, FARM) == pytest.approx(0.5, rel=1e-15)
    assert lcoe(2 * r, FARM) == pytest.approx(0.25, rel=1e-15)
    assert lcoe(r, FARM, STORE) == pytest.approx(1.0, rel=1e-15)


def test_cove_example():
    assert cove(np.array([10.0, 20.0]), np.array([2.0, 4.0]), FARM) == pytest.approx(1.5, rel=1e-15)


def test_zero_dispatch_is_undefined():
    with pytest.raises(UndefinedMetricError):
        lcoe(np.zeros(3), FARM)
    with pytest.raises(UndefinedMetricError):
        cove(np.zeros(3), np.ones(3), FARM)
    with pytest.raises(UndefinedMetricError):
        cove(np.ones(2), np.array([1.0, -1.0]), FARM)


@given(r=positive)
def test_cove_with_unit_price_is_lcoe(r):
    assert cove(r, np.ones_like(r), FARM, STORE) == pytest.approx(lcoe(r, FARM, STORE), rel=1e-12)


@given(r=positive, c=st.floats(0.01, 100.0))
def test_homogeneity(r, c):
    p = np.linspace(1.0, 5.0, r.size)
    assert cove(r, c * p, FARM) == pytest.approx(cove(r, p, FARM) / c, rel=1e-12)
    assert lcoe(c * r, FARM) == pytest.approx(lcoe(r, FARM) / c, rel=1e-12)


def test_cost_fraction_prorates():
    r = np.ones(10)
    assert lcoe(r, FARM, cost_fraction=0.5) == pytest.approx(lcoe(r, FARM) / 2)


def test_fixed_costs():
    assert fixed_costs(FARM) == pytest.approx(150.0)
    assert fixed_costs(FARM, STORE) == pytest.approx(300.0)


@pytest.mark.parametrize("d, expected", [([0.0, 10.0], 1.5), ([10.0, 0.0], 0.5)])
def test_value_factor_examples(d, expected):
    assert value_factor(np.array(d), np.array([1.0, 3.0])) == pytest.approx(expected, rel=1e-15)


@given(level=st.floats(0.1, 1e3), p=positive)
def test_value_factor_constant_dispatch(level, p):
    assert value_factor(np.full(p.size, level), p) == pytest.approx(1.0, abs=1e-12)


def test_value_factor_undefined():
    with pytest.raises(UndefinedMetricError):
        value_factor(np.ones(2), np.array([1.0, -1.0]))


def test_curtailment_example():
    c = curtailment_series(np.array([10.0]), np.array([4.0]), np.array([5.0, 5.0]))
    assert c[0] == 6.0
    # energy taken into storage is not curtailed
    c = curtailment_series(np.array([10.0]), np.array([4.0]), np.array([5.0, 8.0]))
    assert c[0] == 3.0


def _trace(r, s):
    r = np.asarray(r, float)
    return DispatchTrace(r, r, np.asarray(s, float), np.zeros_like(r))


def test_annual_report_no_storage_activity():
    g = np.linspace(1.0, 50.0, 24)
    (rep,) = annual_report(_trace(g, np.zeros(25)), g, STORE, np.ones(24), FARM)
    assert rep.curtailment == 0.0
    assert rep.aep == pytest.approx(g.sum())
    assert rep.partial and rep.hours == 24


def test_annual_report_half_full_storage():
    g = np.ones(10)
    s = np.full(11, STORE.capacity_mwh / 2)
    (rep,) = annual_report(_trace(g, s), g, STORE, np.ones(10), FARM)
    assert rep.utilization == pytest.approx(0.5)


def test_annual_report_years_and_proration():
    n = HOURS_PER_YEAR + 100
    g = np.full(n, 20.0)
    p = np.full(n, 2.0)
    reps = annual_report(_trace(g, np.zeros(n + 1)), g, None, p, FARM)
    assert [r.partial for r in reps] == [False, True]
    # both years deliver at the same rate, so prorated COVE agrees
    assert reps[0].cove == pytest.approx(reps[1].cove)
    assert reps[0].cove == pytest.approx(150.0 / (20 * 2 * HOURS_PER_YEAR))


def test_annual_report_nan_unless_strict():
    g = np.zeros(5)
    reps = annual_report(_trace(g, np.zeros(6)), g, STORE, np.ones(5), FARM)
    assert math.isnan(reps[0].cove) and math.isnan(reps[0].value_factor)
    with pytest.raises(UndefinedMetricError):
        annual_report(_trace(g, np.zeros(6)), g, STORE, np.ones(5), FARM, strict=True)


def _rep(year, cove_val, partial=False):
    return AnnualMetrics(year, 8760, partial, 1.0, 0.0, 0.0, 1.0, cove_val)


def test_average_annual_full_years_only():
    mean, std = average_annual([_rep(0, 1.0), _rep(1, 3.0), _rep(2, 100.0, partial=True)])
    assert (mean, std) == (2.0, 1.0)
    assert average_annual([_rep(0, 5.0, partial=True)]) == (5.0, 0.0)


def test_catalog_lookup_and_miss():
    cat = default_catalog()
    spec = cat.lookup("CAES", 100, 24)
    assert spec.capacity_mwh == 2400 and 0 < spec.rte <= 1
    with pytest.raises(ConfigError, match="CAES.*100.*5"):
        cat.lookup("CAES", 100, 5)


def test_catalog_covers_search_space():
    cat = default_catalog()
    for tech, (ratings, durations) in DEFAULT_SPACE.items():
        for r in ratings:
            for d in durations:
                assert cat.lookup(tech, r, d).capex > 0


def test_catalog_from_csv(tmp_path):
    path = tmp_path / "cat.csv"
    path.write_text(
        "# comment\ntechnology,rating_MW,duration_h,rte,capex_usd,opex_usd_per_yr\nA,10,2,0.9,100,5\n",
        encoding="utf-8",
    )
    cat = StorageCatalog.from_csv(path)
    assert len(cat) == 1 and cat.lookup("A", 10, 2).annual_cost(0.1) == pytest.approx(15.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        StorageSpec("bad", rating_mw=10.0, duration_h=1.0, rte=1.5)
    with pytest.raises(ValueError):
        FarmSpec(capacity_mw=0.0)
