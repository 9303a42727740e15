import functools
import time

import numpy as np
import pytest

from drfuse.mask import BinaryMask

ACCEPTANCE_RESULTS = []
SUITE_BUDGET_S = 120.0
_SESSION_START = [0.0]


def pytest_sessionstart(session):
    _SESSION_START[0] = time.perf_counter()


def criterion(ac_id, title):
    """Record a pass/fail line for an acceptance test, including its runtime."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE_RESULTS.append((ac_id, title, False, f"{type(exc).__name__}: {exc}"[:200],
                                           time.perf_counter() - t0))
                raise
            ACCEPTANCE_RESULTS.append((ac_id, title, True, detail or "", time.perf_counter() - t0))
        return wrapper
    return deco


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ac_id, title, ok, detail, dt in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {ac_id} {title} ({dt:.2f}s) {detail}")
    wall = time.perf_counter() - _SESSION_START[0]
    status = "PASS" if wall < SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"[{status}] AC9 full suite wall-clock {wall:.1f}s < {SUITE_BUDGET_S:.0f}s")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng, w, h, p=0.5):
    return BinaryMask(rng.random((h, w)) < p)


ALL_SOURCES = (("m", 1536), ("c", 1536), ("s", 1024), ("s", 1536))


def make_manifest(rng, image_ids, sides=None, canonical=64, density=(0.01, 0.1), sources=ALL_SOURCES):
    """In-memory manifest holding independent random masks for every source and rotation."""
    from drfuse.manifest import LesionClass, PredictionKey, PredictionManifest
    from drfuse.mask import Dims, Rotation

    sides = sides or {1024: 64, 1536: 96}
    manifest = PredictionManifest(canonical_dims=Dims(canonical, canonical))
    for image_id in image_ids:
        for cls in LesionClass:
            for model, res in sources:
                side = sides[res]
                for r in Rotation:
                    p = rng.uniform(*density)
                    manifest.add(PredictionKey(image_id, cls, model, res, r), random_mask(rng, side, side, p))
    return manifest
