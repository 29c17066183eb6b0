import pytest

from smartcert import crypto, merkle
from smartcert.ledger import GenesisConfig, Node
from smartcert.model import CallableModelClient, keyword_verdict

BACKENDS = ["python"] + (["compiled"] if merkle.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def merkle_backend(request):
    previous = merkle.set_backend(request.param)
    yield request.param
    merkle.set_backend(previous)


@pytest.fixture
def alice():
    return crypto.keygen(bytes([1]) * 32)


@pytest.fixture
def bob():
    return crypto.keygen(bytes([2]) * 32)


@pytest.fixture
def authority():
    return crypto.keygen(bytes([9]) * 32)


@pytest.fixture
def stub_model():
    return CallableModelClient(lambda body: (200, keyword_verdict(body, "suspicious")))


@pytest.fixture
def genesis(alice, bob, authority):
    return GenesisConfig(timestamp=1_000, authority=authority.account,
                         balances={alice.account: 1_000, bob.account: 500})


@pytest.fixture
def node(genesis, stub_model):
    return Node(genesis, model_client=stub_model)


# -- acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

def pytest_configure(config):
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    number, title = marker.args
    results = item.config._acceptance
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        results[number] = (title, report.outcome == "passed", report.duration)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, duration = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({duration:.2f}s)")
