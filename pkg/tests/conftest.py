import math

import numpy as np
import pytest

from phasevib.synth import BeamSceneConfig, cantilever_beam_video

_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line (printed in the terminal summary) and assert it."""
    def record(key: str, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {key} {title}: {detail}"
        _CRITERIA[key] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_CRITERIA, key=lambda k: int(k[2:])):
            terminalreporter.write_line(_CRITERIA[key])


@pytest.fixture(scope="session")
def beam():
    """Default four-mode beam, 64x256, 500 fps, 2000 frames, noise free."""
    cfg = BeamSceneConfig()
    video, truth = cantilever_beam_video(cfg)
    return cfg, video, truth


def beam_roi(cfg):
    """Upper-edge points at the tip, just inboard of it, and at 60% span."""
    tip = int(cfg.root_px + 0.97 * cfg.length_px)
    mid = int(cfg.root_px + 0.6 * cfg.length_px)
    edge = int(round(cfg.height / 2 - cfg.thickness_px / 2))
    return [(tip, edge), (tip - 6, edge), (mid, edge)]


def band_limited_texture(h, w, lam, n_waves=24, spread=math.radians(30), seed=0):
    """Sum of plane waves near wavelength ``lam`` and direction x.

    Returned as a callable of (x, y) so shifted copies are exact.
    """
    rng = np.random.default_rng(seed)
    k0 = 2 * math.pi / lam
    ks = k0 * rng.uniform(0.85, 1.15, n_waves)
    ang = rng.uniform(-spread, spread, n_waves)
    ph = rng.uniform(0, 2 * math.pi, n_waves)

    def render(dx=0.0, dy=0.0):
        y, x = np.mgrid[0:h, 0:w].astype(float)
        acc = np.zeros((h, w))
        for k, a, p in zip(ks, ang, ph):
            acc += np.cos(k * (math.cos(a) * (x - dx) + math.sin(a) * (y - dy)) + p)
        return 0.5 + 0.45 * acc / np.abs(acc).max()
    return render
