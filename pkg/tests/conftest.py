import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from regfreq import casestudy as cs  # noqa: E402
from regfreq.scheduler import GeneratorClass  # noqa: E402


def ccgt(**kw) -> GeneratorClass:
    """A CCGT class with the GB table figures, overridable per test."""
    base = dict(name="ccgt", region=1, count=100, p_max=500.0, p_msg=250.0, c_nl=4500.0,
                c_m=46.0, c_st=10_000.0, h_const=5.0, r_max=50.0, r_slope=0.5,
                emissions=368.0)
    base.update(kw)
    return GeneratorClass(**base)


@pytest.fixture(scope="session")
def gb():
    return cs.gb_dataset()


@pytest.fixture(scope="session")
def pack_cache(tmp_path_factory):
    """One directory of trained packs shared by every test in the session."""
    return tmp_path_factory.mktemp("packs")


@pytest.fixture(scope="session")
def england_pack(gb, pack_cache):
    """The regional GB pack for the 1.8 GW England loss (trained once, about a minute)."""
    return cs.pack_for(gb, gb.loss("england"), "regional", pack_cache)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def accept(request):
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``accept(n, detail)`` before the assertions; the line flips to PASS
    only if the test body finishes.
    """
    state = {}

    def record(n, detail=""):
        state["n"], state["detail"] = n, detail

    yield record
    if "n" in state:
        failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
        ACCEPTANCE[state["n"]] = (not failed, state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
