import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stable_ib.datasets import make_bsc, make_hierarchical_8x8  # noqa: E402

# frozen outputs of a 40-digit mpmath evaluation of the defining sums
BSC_CAPACITY_BITS = 0.53100440641071878
HIER8_I_XY_BITS = 2.3339093469652519
HIER8_I_PAIRS_BITS = 1.6977078109175852
HIER8_I_MACRO_BITS = 0.85855945745817935
BSC_IDENTITY_OBJECTIVE_BETA2 = -0.04298123377704883


@pytest.fixture(scope="session")
def bsc():
    return make_bsc(0.1)


@pytest.fixture(scope="session")
def hier8():
    return make_hierarchical_8x8()


# settings used for the 8x8 multipath checks
MULTIPATH_SPEC_KW = {"penalty": "identity", "epsilon": 0.2}
MULTIPATH_CFG_KW = {"beta_max": 8.0, "delta_beta": 0.05}


@pytest.fixture(scope="session")
def hier8_multipath(hier8):
    from stable_ib.continuation import ContinuationConfig
    from stable_ib.multipath import run_multipath
    from stable_ib.objectives import ObjectiveSpec, PenaltyFunction

    spec = ObjectiveSpec(penalty=PenaltyFunction.parse(MULTIPATH_SPEC_KW["penalty"]),
                         epsilon=MULTIPATH_SPEC_KW["epsilon"])
    return run_multipath(hier8, 8, spec, ContinuationConfig(**MULTIPATH_CFG_KW), n_paths=3, seeds=[0, 1, 2])


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
