import json
import math
import pickle

import numpy as np
import pytest

from gmlab.errors import DomainError, NonIntegrableInner
from gmlab.io import fmt, write_columns, write_csv, write_json
from gmlab.nonlinearity import KFunction, NonlinearityQuad, PowerExponents


class TestKFunction:
    @pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
    def test_inner_closed_form(self, s):
        k = KFunction.power(s)
        tau = 0.3
        ref = -math.log(tau) if s == 1 else (tau ** (1 - s) - 1) / (s - 1)
        assert k.inner(math.log(tau)) == pytest.approx(ref, rel=1e-14)

    def test_inner_numeric_matches_closed_form(self):
        k = KFunction(lambda t: t ** 2, label="t^2")
        assert k.inner(math.log(0.01)) == pytest.approx(99.0, rel=1e-12)

    def test_inner_overflow_is_inf(self):
        assert math.isinf(KFunction.power(3.0).inner(-800.0))

    def test_inner_rejects_nan(self):
        k = KFunction(lambda t: math.nan, label="nan")
        with pytest.raises(NonIntegrableInner):
            k.inner(math.log(0.5))

    def test_check(self):
        KFunction.power(2.0).check()
        with pytest.raises(DomainError):
            KFunction(lambda t: 1.0 + t, label="k(0)=1").check()
        with pytest.raises(DomainError):
            KFunction(lambda t: t * (2.0 - t), label="hump").check()

    def test_power_picklable(self):
        k = KFunction.power(1.5)
        assert pickle.loads(pickle.dumps(k)) == k

    def test_bad_exponent(self):
        with pytest.raises(DomainError):
            KFunction.power(-1.0)


class TestExponents:
    def test_sigma_form(self):
        e = PowerExponents.from_sigma(1.0, 0.5, 1.0)
        assert e.as_tuple() == (1.0, 0.5, 2.0, 1.5)
        assert e.detected_sigma() == 1.0

    def test_detected_sigma(self):
        assert PowerExponents(1, 1, 3, 3).detected_sigma() == pytest.approx(2.0)
        assert PowerExponents(1, 1, 3, 2).detected_sigma() is None

    def test_inconsistent_sigma(self):
        with pytest.raises(DomainError):
            PowerExponents(1, 1, 2, 3, sigma=1.0)

    def test_negative_sigma(self):
        with pytest.raises(DomainError):
            PowerExponents(2, 2, 1, 1, sigma=-1.0)


class TestQuad:
    def test_powers_check(self):
        NonlinearityQuad.powers(1, 2, 3, 4).check()

    def test_metadata_mismatch(self):
        q = NonlinearityQuad.powers(1, 2, 3, 4)
        bad = NonlinearityQuad(lambda t: t ** 1.1, q.g, q.h, q.k, q.K, q.power_meta)
        with pytest.raises(DomainError):
            bad.check()

    def test_decreasing_f(self):
        q = NonlinearityQuad.powers(1, 1, 1, 1)
        bad = NonlinearityQuad(lambda t: 1.0 / (1.0 + t), q.g, q.h, q.k, q.K)
        with pytest.raises(DomainError):
            bad.check()

    def test_antiderivative(self):
        q = NonlinearityQuad.powers(1, 1, 1, 2)
        assert q.K(3.0) == pytest.approx(9.0)


class TestIO:
    def test_fmt(self):
        assert fmt(0.1 + 0.2) == "0.3"
        assert fmt(3) == "3"
        assert fmt(True) == "True"

    def test_csv(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 0.5), (2, 1 / 3)])
        assert path.read_text() == "x,y\n1,0.5\n2,0.333333333333\n"

    def test_json_numpy_scalars(self, tmp_path):
        path = write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": [np.int64(2)]})
        assert json.loads(path.read_text()) == {"a": [2], "b": 1.5}
        assert path.read_text().index('"a"') < path.read_text().index('"b"')

    def test_columns(self, tmp_path):
        path = write_columns(tmp_path / "u.dat", [0.0, 0.5], [0.0, 1 / 7])
        assert path.read_text() == "0 0\n0.5 0.142857142857\n"

    def test_columns_empty_leaves_nothing(self, tmp_path):
        with pytest.raises(ValueError):
            write_columns(tmp_path / "u.dat", [], [])
        assert list(tmp_path.iterdir()) == []

    def test_no_temp_files_left(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["x"], [(1,)])
        assert [p.name for p in tmp_path.iterdir()] == ["a.csv"]
