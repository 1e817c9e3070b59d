from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from metalert.aggregation import (AggregationConfig, Aggregator, CapabilityError,
                                  DuplicateAlertError, KeyMismatchError, aggregate, merge_session,
                                  reduction_ratio)
from metalert.model import (AlertSession, Label, MetaAlert, ModelError, Protocol, Sensor,
                            SensorCapability, Signature, SocketPair, Tag, validate_registry)

T0 = datetime(2016, 5, 12, 10, tzinfo=timezone.utc)


def session(sid, sensor, socket, at=T0, label=None, signature="sig-ssh-01"):
    return AlertSession(sid, at, sensor, signature, socket, label)


def open_meta(socket, alerted, silent):
    return MetaAlert("m1", "sig-ssh-01", socket, T0, alerted=list(alerted), silent=list(silent),
                     sessions=[f"{s}-1" for s in alerted])


def test_table2_gives_20_metas(table2_metas):
    assert len(table2_metas) == 20
    assert reduction_ratio(46, len(table2_metas)) == 56.5


def test_single_capable_sensor_closes_immediately(socket):
    reg = validate_registry([Sensor("kippo")], [Protocol("ssh")], [Signature("sig-ssh-01", "ssh")],
                            [SensorCapability("kippo", "sig-ssh-01")])
    [meta] = aggregate([session("a", "kippo", socket)], reg)
    assert meta.silent == [] and not meta.open
    assert meta.tag is Tag.REAL and meta.ptrue == 1


def test_three_sensors_same_attack(trio_registry, socket):
    sessions = [session(f"e{i}", s, socket) for i, s in enumerate(["snort", "kippo", "suricata"])]
    [meta] = aggregate(sessions, trio_registry, AggregationConfig(0, 60))
    assert meta.alerted == ["snort", "kippo", "suricata"]
    assert meta.silent == []
    assert not meta.open and meta.tag is Tag.REAL and meta.ptrue == 1
    assert meta.sessions == ["e0", "e1", "e2"]


def test_merge_completes_meta(socket):
    meta = open_meta(socket, ["snort"], ["kippo"])
    merge_session(meta, session("k", "kippo", socket))
    assert meta.alerted == ["snort", "kippo"]
    assert meta.silent == []
    assert meta.open is False and meta.ptrue == 1 and meta.tag is Tag.REAL


def test_merge_keeps_meta_open(socket):
    meta = open_meta(socket, ["snort"], ["kippo", "suricata"])
    merge_session(meta, session("k", "kippo", socket))
    assert meta.silent == ["suricata"]
    assert meta.open and meta.tag is Tag.PENDING


def test_merge_rejects_duplicate_sensor(socket):
    meta = open_meta(socket, ["snort"], ["kippo"])
    with pytest.raises(DuplicateAlertError):
        merge_session(meta, session("s2", "snort", socket))
    # nothing was moved
    assert meta.alerted == ["snort"] and meta.silent == ["kippo"]


def test_merge_rejects_other_socket(socket):
    meta = open_meta(socket, ["snort"], ["kippo"])
    other = SocketPair("10.0.0.8", 40008, "192.168.1.10", 22)
    with pytest.raises(KeyMismatchError):
        merge_session(meta, session("k", "kippo", other))


def test_capability_violation_names_session(socket):
    reg = validate_registry([Sensor("kippo"), Sensor("p0f")], [Protocol("ssh")],
                            [Signature("sig-ssh-01", "ssh")], [SensorCapability("kippo", "sig-ssh-01")])
    with pytest.raises(CapabilityError, match="bad-one"):
        aggregate([session("bad-one", "p0f", socket)], reg)


@pytest.mark.parametrize("n_alerts,n_meta,expected", [(46, 20, 56.5), (10, 10, 0.0), (20, 5, 75.0)])
def test_reduction_ratio(n_alerts, n_meta, expected):
    assert reduction_ratio(n_alerts, n_meta) == expected


@pytest.mark.parametrize("n_alerts,n_meta", [(0, 0), (5, 6), (5, -1)])
def test_reduction_ratio_errors(n_alerts, n_meta):
    with pytest.raises(ValueError):
        reduction_ratio(n_alerts, n_meta)


def test_window_merges_skewed_clocks(trio_registry, socket):
    sessions = [session("a", "snort", socket, T0), session("b", "kippo", socket, T0 + timedelta(seconds=3))]
    assert len(aggregate(sessions, trio_registry, AggregationConfig(0, 60))) == 2
    [meta] = aggregate(sessions, trio_registry, AggregationConfig(5, 60))
    assert meta.alerted == ["snort", "kippo"] and meta.silent == ["suricata"]
    assert not meta.open and meta.tag is Tag.PENDING


def test_unsorted_input_is_sorted(trio_registry, socket):
    later = session("b", "kippo", socket, T0 + timedelta(seconds=2))
    [meta] = aggregate([later, session("a", "snort", socket, T0)], trio_registry)
    assert meta.sessions == ["a", "b"]


def test_labels_carry_over(trio_registry, socket):
    [meta] = aggregate([session("a", "snort", socket, label=Label.BENEVOLENT)], trio_registry)
    assert meta.label is Label.BENEVOLENT


def test_stream_mode_closes_after_timeout(trio_registry, socket):
    agg = Aggregator(trio_registry, AggregationConfig(5, 60), mode="stream")
    assert agg.feed(session("a", "snort", socket, T0)) == []
    other = SocketPair("10.0.0.9", 1, "192.168.1.10", 22)
    assert agg.feed(session("b", "snort", other, T0 + timedelta(seconds=30))) == []
    closed = agg.feed(session("c", "kippo", other, T0 + timedelta(seconds=61)))
    assert [m.sessions for m in closed] == [["a"]]
    assert closed[0].tag is Tag.PENDING and not closed[0].open
    rest = agg.flush()
    assert [m.sessions for m in rest] == [["b"], ["c"]]


def test_config_rules():
    with pytest.raises(ModelError):
        AggregationConfig(-1, 60)
    with pytest.raises(ModelError):
        AggregationConfig(10, 5)


# -- properties -------------------------------------------------------------

SENSORS = ["snort", "kippo", "suricata"]
TRIO = validate_registry([Sensor(s) for s in SENSORS], [Protocol("ssh")], [Signature("sig-ssh-01", "ssh")],
                         [SensorCapability(s, "sig-ssh-01") for s in SENSORS])


@st.composite
def alert_streams(draw):
    """Sessions where each sensor alerts at most once per socket, so no duplicates arise."""
    out = []
    for port in range(draw(st.integers(1, 5))):
        sock = SocketPair("10.0.0.1", 1000 + port, "192.168.1.10", 22)
        for sensor in draw(st.lists(st.sampled_from(SENSORS), unique=True, max_size=3)):
            offset = draw(st.integers(0, 30))
            out.append(session(f"{sensor}-{port}", sensor, sock, T0 + timedelta(seconds=offset)))
    return out


@given(alert_streams(), st.integers(0, 30))
def test_partition(sessions, window):
    metas = aggregate(sessions, TRIO, AggregationConfig(window, 60))
    ids = [sid for m in metas for sid in m.sessions]
    assert sorted(ids) == sorted(s.session_id for s in sessions)
    assert len(ids) == len(set(ids))


@given(alert_streams(), st.integers(0, 30))
def test_determinism(sessions, window):
    cfg = AggregationConfig(window, 60)
    assert aggregate(sessions, TRIO, cfg) == aggregate(list(sessions), TRIO, cfg)


@given(alert_streams(), st.integers(0, 30))
def test_complete_iff_all_alerted(sessions, window):
    for meta in aggregate(sessions, TRIO, AggregationConfig(window, 60)):
        closed_real = not meta.open and meta.tag is Tag.REAL
        assert closed_real == (set(meta.alerted) == set(SENSORS))


@given(alert_streams(), st.integers(0, 30), st.integers(0, 30))
def test_window_monotonicity(sessions, w1, w2):
    narrow, wide = sorted((w1, w2))
    n_narrow = len(aggregate(sessions, TRIO, AggregationConfig(narrow, 60)))
    n_wide = len(aggregate(sessions, TRIO, AggregationConfig(wide, 60)))
    assert n_wide <= n_narrow
