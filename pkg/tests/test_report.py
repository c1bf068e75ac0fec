import io

import pytest

from clark_tool.certreal import CertReal
from clark_tool.report import ConsoleView, _fmt


@pytest.mark.parametrize(
    "value, expected",
    [(None, "-"), (0.25, "0.25"), (CertReal("1/8"), "0.125"), ("n/a", "n/a")],
)
def test_fmt(value, expected):
    assert _fmt(value) == expected


def test_fmt_keeps_values_beyond_float_range():
    assert _fmt(CertReal.power_of_two(-5000)).endswith("e-1506")
    assert _fmt(CertReal.power_of_two(5000)).endswith("e+1505")


@pytest.mark.slow
def test_show_stage_prints_tiny_couplings(two_stage_state):
    view = ConsoleView(out=io.StringIO(), err=io.StringIO())
    view.show_stage(two_stage_state.record(2))
    line = view.out.getvalue()
    assert "c=0 " not in line and "mu=0 " not in line
    assert "inf" not in line
