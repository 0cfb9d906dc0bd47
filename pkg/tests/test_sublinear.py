import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import InstanceFormatError, PreconditionError
from core.sublinear import FitCase, PiecewiseLinearFunction, fit_sublinear_through, is_asymptotically_sublinear


class TestPiecewiseLinear:
    def test_evaluation(self):
        s = PiecewiseLinearFunction(np.array([[1.0, 2.0], [3.0, 4.0]]), tail_slope=0.5)
        assert s(0.0) == 2.0
        assert s(2.0) == 3.0
        assert s(5.0) == 5.0
        assert s(np.array([1.0, 3.0])).tolist() == [2.0, 4.0]

    def test_sup_ratio_beyond(self):
        s = PiecewiseLinearFunction(np.array([[0.0, 0.0], [4.0, 2.0]]))
        assert s.sup_ratio_beyond(1.0) == pytest.approx(0.5)
        assert s.sup_ratio_beyond(8.0) == pytest.approx(0.25)

    def test_rejects_bad_breakpoints(self):
        with pytest.raises(PreconditionError):
            PiecewiseLinearFunction(np.array([[2.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(PreconditionError):
            PiecewiseLinearFunction(np.array([[0.0, -1.0]]))
        with pytest.raises(InstanceFormatError):
            PiecewiseLinearFunction.from_dict({"tail_slope": 0.0})

    def test_sublinearity_witness(self):
        flat = PiecewiseLinearFunction(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert is_asymptotically_sublinear(flat).verdict
        steep = flat.with_tail_slope(2.0)
        witness = is_asymptotically_sublinear(steep)
        assert not witness.verdict
        assert witness.witness_slope == 1.0


class TestFit:
    def test_chord_case_takes_every_sample(self):
        fit = fit_sublinear_through([1.0, 4.0, 9.0], [1.0, 0.5, 1.0 / 3.0])
        assert fit.case is FitCase.CHORD
        assert fit.selected == [0, 1, 2]
        assert fit.rejected == []

    def test_chord_case_skips_steeper_sample(self):
        ts = np.array([1.0, 2.0, 3.0, 4.0])
        fit = fit_sublinear_through(ts, np.array([1.0, 3.0, 3.5, 5.0]) / ts)
        assert fit.case is FitCase.CHORD
        assert fit.selected == [0, 1, 2]
        assert fit.rejected == [3]

    def test_nonincreasing_case(self):
        fit = fit_sublinear_through([1.0, 2.0, 3.0, 4.0], [3.0, 1.0, 1.0, 0.25])
        assert fit.case is FitCase.NONINCREASING
        assert fit.selected == [0, 1, 3]
        assert fit.function(4.0) == pytest.approx(1.0)

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            fit_sublinear_through([1.0], [1.0])
        with pytest.raises(PreconditionError):
            fit_sublinear_through([2.0, 1.0], [1.0, 1.0])
        with pytest.raises(PreconditionError):
            fit_sublinear_through([1.0, 2.0], [1.0, 0.0])

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(min_value=0.5, max_value=100.0), min_size=2, max_size=12, unique=True),
        st.data(),
    )
    def test_fit_passes_through_selected_samples(self, raw_ts, data):
        ts = np.sort(np.array(raw_ts))
        if (np.diff(ts) < 1e-6).any():
            return
        coeffs = np.array(data.draw(st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=len(ts), max_size=len(ts))))
        fit = fit_sublinear_through(ts, coeffs)
        s = fit.function
        assert s.tail_slope == 0.0
        assert is_asymptotically_sublinear(s).verdict
        for k in fit.selected:
            assert s(ts[k]) == pytest.approx(coeffs[k] * ts[k], rel=1e-9)
        assert sorted(fit.selected + fit.rejected) == list(range(len(ts)))
