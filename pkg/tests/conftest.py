from pathlib import Path

import pytest

from stepgraph import _backend, _fallback

FIXTURES = Path(__file__).parent / "fixtures"

try:
    from stepgraph import _speedups
except ImportError:
    _speedups = None

BACKENDS = [pytest.param(_fallback, id="python")]
if _speedups is not None:
    BACKENDS.insert(0, pytest.param(_speedups, id="compiled"))


@pytest.fixture(params=BACKENDS)
def kernels(request, monkeypatch):
    """Run a test once per kernel backend by patching the selected implementation."""
    mod = request.param
    monkeypatch.setattr(_backend, "tokenize_bytes", mod.tokenize_bytes)
    monkeypatch.setattr(_backend, "csr_matmul", mod.csr_matmul)
    return mod


@pytest.fixture
def code1_path():
    return FIXTURES / "code1.stp"


@pytest.fixture
def code1_bytes(code1_path):
    return code1_path.read_bytes()


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    from stepgraph.pipeline import generate_synthetic_corpus, load_graphs

    out = tmp_path_factory.mktemp("corpus")
    manifest = generate_synthetic_corpus(out, count_per_class=6, seed=0)
    return manifest, load_graphs(manifest)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
