"""Session-scoped fixtures for the aircraft case study.

The expensive artifacts (attractor box estimation, gain synthesis, 60 s
closed-loop runs) are built once and shared across test modules.
"""

import numpy as np
import pytest

import chaosmask as cm

#: Filled by the acceptance suite; echoed after the run so the one-line
#: verdict per criterion always reaches the terminal.
ACCEPTANCE_VERDICTS: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
from chaosmask.cli import build_scenario, extended_pair, prepare_case, run_with_detection


@pytest.fixture(scope="session")
def cfg():
    return cm.load_scenario_file("b747")


@pytest.fixture(scope="session")
def plant(cfg):
    return cm.build_plant(cfg)


@pytest.fixture(scope="session")
def mask_unscaled(cfg):
    return cm.calibrate_mask(cm.build_mask(cfg, apply_beta=False), cfg, apply_beta=False)


@pytest.fixture(scope="session")
def case_scaled(cfg):
    """(plant, calibrated scaled mask, extended system)."""
    return prepare_case(cfg, scaled=True)


@pytest.fixture(scope="session")
def mask_scaled(case_scaled):
    return case_scaled[1]


@pytest.fixture(scope="session")
def ext_scaled(case_scaled):
    return case_scaled[2]


@pytest.fixture(scope="session")
def gain(ext_scaled):
    return cm.synthesize_gain(ext_scaled)


@pytest.fixture(scope="session")
def report_unscaled(plant, cfg):
    A, C = extended_pair(plant, cm.build_mask(cfg, apply_beta=False))
    return cm.distance_to_unobservability(A, C)


@pytest.fixture(scope="session")
def report_scaled(ext_scaled):
    return cm.distance_to_unobservability(ext_scaled.Abold, ext_scaled.Cbold)


@pytest.fixture(scope="session")
def trace_clean_masked(cfg, mask_scaled, gain):
    s = build_scenario(cfg, True, "none", mask=mask_scaled, observer=gain)
    return cm.run_scenario(s)


@pytest.fixture(scope="session")
def eavesdrop_runs(cfg, mask_scaled, gain):
    """{'masked': trace, 'unmasked': trace} under the passive eavesdropper."""
    um, _, _ = run_with_detection(cfg, False, "eavesdrop")
    m, _, _ = run_with_detection(cfg, True, "eavesdrop", mask=mask_scaled, observer=gain)
    return {"masked": m, "unmasked": um}


@pytest.fixture(scope="session")
def replay_runs(cfg, mask_scaled, gain):
    """Attacked/clean/threshold triples for the replay contrast."""
    um = run_with_detection(cfg, False, "replay")
    m = run_with_detection(cfg, True, "replay", mask=mask_scaled, observer=gain)
    return {"masked": m, "unmasked": um}


@pytest.fixture(scope="session")
def fdi_runs(cfg, mask_scaled, gain):
    """Attacked/clean/threshold triples for the FDI contrast (M = 0.5)."""
    um = run_with_detection(cfg, False, "fdi")
    m = run_with_detection(cfg, True, "fdi", mask=mask_scaled, observer=gain)
    return {"masked": m, "unmasked": um}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)


def _small_scenario_text():
    return """\
name: toy
plant:
  A:
    - [0.0, 1.0]
    - [-2.0, -3.0]
  B:
    - [0.0]
    - [1.0]
  C:
    - [1.0, 0.0]
    - [0.0, 1.0]
    - [1.0, 1.0]
controller:
  K:
    - [1.0, 1.0]
unmasked_gain:
  - [1.0, 0.0, 0.0]
  - [0.0, 1.0, 0.0]
mask:
  type: rossler_p4
  a: 0.5
  b: 0.5
  beta: 10.0
  Lambda:
    - [1.0, 0.0, 0.0]
    - [0.0, 2.0, 1.0]
    - [0.0, 0.0, 1.0]
  xi0: [0.1, 0.3, 0.0]
  box: {t_settle: 20.0, t_obs: 30.0, margin: 0.2, dt: 0.001}
  lipschitz: {grid_per_axis: 11}
observer:
  synthesize: true
detector:
  calibrate_safety: 4.0
attacks:
  replay: {tau: 1.0, t_start: 3.0}
  fdi: {M: 0.2, t_start: 2.0, direction: [1.0, 0.0, 0.0], shape: constant}
  eavesdrop: {}
integration: {dt: 0.001, t_end: 5.0, t_settle: 2.0}
initial:
  x0: [0.2, -0.1]
  xhat0: [0.0, 0.0]
  xihat0: [0.0, 0.0, 0.0]
reference:
  x_ref: [0.5, 0.0]
"""


@pytest.fixture(scope="session")
def small_scenario_path(tmp_path_factory):
    """A fast-running scenario file for CLI and loader tests."""
    path = tmp_path_factory.mktemp("scen") / "toy.yaml"
    path.write_text(_small_scenario_text())
    return path


@pytest.fixture(scope="session")
def small_scenario_text():
    return _small_scenario_text()
