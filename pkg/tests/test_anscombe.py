import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spadscan.anscombe import (
    ANSCOMBE_FLOOR,
    InverseTable,
    anscombe,
    anscombe_algebraic_inverse,
    build_inverse_table,
    ml_inverse,
    stabilized_expectation,
)
from spadscan.core import ValidationError


class TestForwardTransform:
    def test_at_zero(self):
        assert anscombe(np.array([0.0]))[0] == pytest.approx(2 * np.sqrt(3 / 8))
        assert anscombe(np.array([0.0]))[0] == pytest.approx(1.224745, abs=1e-6)

    def test_at_one(self):
        assert anscombe(np.array([1.0]))[0] == pytest.approx(2.345208, abs=1e-6)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            anscombe(np.array([-1.0]))

    @pytest.mark.parametrize("lam", [4.0, 10.0, 25.0, 100.0])
    def test_variance_stabilization(self, lam):
        # Monte-Carlo oracle: stabilized Poisson draws have variance near 1
        rng = np.random.default_rng(int(lam))
        samples = rng.poisson(lam, size=100_000)
        var = anscombe(samples).var()
        assert 0.85 <= var <= 1.15

    def test_variance_tight_at_moderate_rate(self):
        rng = np.random.default_rng(25)
        var = anscombe(rng.poisson(25.0, size=100_000)).var()
        assert 0.9 <= var <= 1.1


class TestStabilizedExpectation:
    def test_degenerate_poisson(self):
        assert stabilized_expectation(np.array([0.0]))[0] == pytest.approx(ANSCOMBE_FLOOR)

    def test_monte_carlo_agreement(self):
        # independent oracle: plain Monte-Carlo average of the transform
        lam = 7.0
        rng = np.random.default_rng(7)
        mc = anscombe(rng.poisson(lam, size=2_000_000)).mean()
        series = stabilized_expectation(np.array([lam]))[0]
        assert series == pytest.approx(mc, abs=2e-3)

    def test_asymptotic_regime(self):
        # At lam=400 the expectation sits 1/(4*sqrt(lam)) below the plug-in
        # value 2*sqrt(lam + 3/8): gap = 0.0125, not smaller.
        e = stabilized_expectation(np.array([400.0]))[0]
        gap = 2 * np.sqrt(400 + 3 / 8) - e
        assert gap == pytest.approx(1 / (4 * np.sqrt(400)), abs=3e-4)
        assert e == pytest.approx(40.00625, abs=1e-4)


@pytest.fixture(scope="module")
def table():
    return build_inverse_table(lambda_max=500.0, resolution=2048)


class TestInverseTable:

    def test_floor_maps_to_zero(self, table):
        assert ml_inverse(table, np.array([ANSCOMBE_FLOOR]))[0] == 0.0

    def test_roundtrip_on_grid(self, table):
        lam = table.rates[1::97]
        recovered = ml_inverse(table, stabilized_expectation(lam))
        assert np.all(np.abs(recovered - lam) <= 1e-4 * (1 + lam))

    def test_roundtrip_off_grid(self, table):
        # midpoints exercise the interpolation against fresh series values
        lam = np.array([0.5, 3.7, 10.0, 25.0, 111.1, 333.3])
        recovered = ml_inverse(table, stabilized_expectation(lam))
        assert np.all(np.abs(recovered - lam) <= 1e-4 * (1 + lam))

    def test_roundtrip_tight_with_fine_table(self):
        # a dense grid drives interpolation error below 1e-6 at lam=10
        fine = build_inverse_table(lambda_max=50.0, resolution=16384)
        rec = ml_inverse(fine, stabilized_expectation(np.array([10.0])))[0]
        assert abs(rec - 10.0) < 1e-6

    def test_bias_correction_is_upward(self, table):
        # E[f(Y)] <= f(E[Y]) by concavity, so the exact-unbiased inverse sits
        # above the algebraic inverse; at v=1 it recovers ~1.195.
        for v in [1.0, 2.0, 5.0]:
            b = anscombe(np.array([v]))
            assert ml_inverse(table, b)[0] >= anscombe_algebraic_inverse(b)[0]
        assert ml_inverse(table, anscombe(np.array([1.0])))[0] == pytest.approx(1.195, abs=2e-3)

    def test_large_count_asymptote(self, table):
        # the inverse tracks (b/2)^2 - 1/8 at large counts and therefore sits
        # ~0.25 above the plain algebraic inverse (b/2)^2 - 3/8
        for v in [30.0, 100.0, 400.0]:
            b = anscombe(np.array([v]))
            inv = ml_inverse(table, b)[0]
            assert inv == pytest.approx((b[0] / 2) ** 2 - 0.125, abs=0.01)
            assert inv - anscombe_algebraic_inverse(b)[0] == pytest.approx(0.25, abs=0.01)

    def test_beyond_table_uses_asymptote(self, table):
        b = anscombe(np.array([5000.0]))
        assert ml_inverse(table, b)[0] == pytest.approx((b[0] / 2) ** 2 - 0.125, rel=1e-9)

    def test_rejects_nonfinite(self, table):
        with pytest.raises(ValidationError):
            ml_inverse(table, np.array([np.nan]))

    @given(st.lists(st.floats(0.5, 60.0), min_size=2, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_monotone(self, values):
        table = _SHARED_TABLE
        b = np.sort(np.asarray(values))
        out = ml_inverse(table, b)
        assert np.all(np.diff(out) >= 0)

    def test_output_nonnegative(self, table):
        b = np.linspace(0.5, 50.0, 200)  # includes values below the floor
        assert np.all(ml_inverse(table, b) >= 0)

    def test_table_monotone_invariant(self, table):
        assert np.all(np.diff(table.rates) > 0)
        assert np.all(np.diff(table.stabilized) > 0)

    def test_construction_validation(self):
        with pytest.raises(ValidationError):
            build_inverse_table(lambda_max=-1.0)
        with pytest.raises(ValidationError):
            InverseTable(rates=np.array([0.0, 1.0]), stabilized=np.array([2.0, 2.0]))

    def test_csv_export(self, table, tmp_path):
        path = tmp_path / "table.csv"
        table.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (table.rates.size, 2)

    def test_deterministic_construction(self):
        t1 = build_inverse_table(50.0, resolution=256)
        t2 = build_inverse_table(50.0, resolution=256)
        assert np.array_equal(t1.rates, t2.rates)
        assert np.array_equal(t1.stabilized, t2.stabilized)


_SHARED_TABLE = build_inverse_table(lambda_max=500.0, resolution=1024)
