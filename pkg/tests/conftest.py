import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_result():
    from rmrom.mesh_fem import run_simulation
    from rmrom.physics import SimulationConfig

    return run_simulation(SimulationConfig())


@pytest.fixture(scope="session")
def small_sweep(tmp_path_factory):
    """Eight quick runs on a coarse mesh: (spec, directory)."""
    from rmrom.pipeline import SweepSpec, run_sweep

    spec = SweepSpec(
        v0=[1e-2, 1.0], aniso_ratio=[1.0, 1e2], D_m=[1e-3, 1e-2], kappa_fL=[3.0], period_T=[0.5],
        nodes_per_side=8, dt=0.05, end_time=0.5, snapshot_stride=5,
    )
    out = tmp_path_factory.mktemp("sweep")
    run_sweep(spec, out)
    return spec, out


ACCEPTANCE = {}


@pytest.fixture
def record():
    """record(n, passed, detail) stores one acceptance line for the terminal summary."""

    def _record(n, passed, detail):
        ACCEPTANCE[n] = (bool(passed), detail)
        print(f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
