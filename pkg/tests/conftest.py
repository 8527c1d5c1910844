import math

import numpy as np
import pytest

from rgmp.geometry import NetworkConfig, make_instance, sparse_from_matrix
from rgmp.graph import build_graph
from rgmp.paper_instance import SNR_DB, load_paper_instance


def geometric_instance(seed: int, n_rrh: int = 20, **kw):
    """Instance at the default densities with the disc sized for ``n_rrh`` RRHs."""
    cfg = NetworkConfig.for_rrh_count(n_rrh, seed=seed, **kw)
    inst = make_instance(cfg)
    return inst, build_graph(inst.sparse)


def iid_instance(seed: int, n: int = 4, k: int = 4, snr_db: float = 30.0):
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2)
    x = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / math.sqrt(2)
    sparse = sparse_from_matrix(h, snr_db)
    y = math.sqrt(sparse.power) * h @ x + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    return h, sparse, build_graph(sparse), y


@pytest.fixture
def ref4x4():
    h, y = load_paper_instance()
    sparse = sparse_from_matrix(h, SNR_DB)
    return h, y, sparse, build_graph(sparse)


@pytest.fixture
def small():
    return geometric_instance(3, n_rrh=12)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
