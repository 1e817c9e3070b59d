import pytest

from metalert.aggregation import AggregationConfig, aggregate
from metalert.learning import compute_rates
from metalert.model import (Protocol, Sensor, SensorCapability, Signature, SocketPair,
                            validate_registry)
from metalert.simulator import TABLE2, generate, registry_for

ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def table2_registry():
    return registry_for(TABLE2)


@pytest.fixture(scope="session")
def table2_sim(table2_registry):
    return generate(TABLE2, table2_registry)


@pytest.fixture(scope="session")
def table2_rates(table2_sim, table2_registry):
    return compute_rates(table2_sim.events, table2_sim.summary, table2_registry)


@pytest.fixture
def table2_metas(table2_sim, table2_registry):
    return aggregate(table2_sim.events, table2_registry, AggregationConfig(0, 60))


@pytest.fixture
def trio_registry():
    sensors = ["snort", "kippo", "suricata"]
    return validate_registry(
        [Sensor(s, s) for s in sensors],
        [Protocol("ssh")],
        [Signature("sig-ssh-01", "ssh")],
        [SensorCapability(s, "sig-ssh-01") for s in sensors],
    )


@pytest.fixture
def socket():
    return SocketPair("10.0.0.7", 40007, "192.168.1.10", 22)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
