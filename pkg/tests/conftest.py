import pytest

from clark_tool.certreal import PrecisionContext
from clark_tool.config import RunConfig
from clark_tool.construct import extend, start
from clark_tool.herglotz import ClarkSystem, solve_level_set


@pytest.fixture
def ctx():
    return PrecisionContext(bits=256)


@pytest.fixture
def single_atom():
    """The default base stage: t1 = 1/2, mu1 = 1/4, c1 = 1/8."""
    return ClarkSystem.from_values([("1/2", "1/4", "1/8")])


@pytest.fixture
def three_atoms():
    return ClarkSystem.from_values(
        [("0.2", "0.1", "0.3"), ("0.5", "0.05", "0.25"), ("0.8", "0.02", "0.1")]
    )


@pytest.fixture
def three_zeros(three_atoms, ctx):
    return solve_level_set(three_atoms, ctx.real(0), ctx)


@pytest.fixture
def base_state():
    """A committed one-stage construction with the default base."""
    return start(RunConfig(stages=1))


@pytest.fixture(scope="session")
def two_stage_state():
    """A committed two-stage construction (built once per session)."""
    state = start(RunConfig(stages=2))
    extend(state, 2)
    return state


@pytest.fixture(scope="session")
def three_stage_state():
    """A committed three-stage construction (built once per session)."""
    state = start(RunConfig(stages=3))
    extend(state, 3)
    return state
