"""End-to-end acceptance checks, one test per criterion.

Each test records PASS/FAIL with a short detail line; conftest prints the
collected lines at the end of the run. Convergence curves from criterion 3
are written to tests/artifacts/.
"""

import json
import random
import time
from datetime import datetime, timezone
from contextlib import contextmanager
from pathlib import Path

import pytest

from conftest import ACCEPTANCE_RESULTS
from metalert import neuralnet, store
from metalert.aggregation import AggregationConfig, aggregate, reduction_ratio
from metalert.cli import run
from metalert.learning import RateTable, build_training_patterns, compute_rates, train_signature
from metalert.model import (MetaAlert, MlpWeights, Protocol, RateEntry, Sensor, SensorCapability,
                            Signature, SocketPair, TrainConfig, TrainingPattern, validate_registry)
from metalert.simulator import TABLE2, bench, generate, registry_for, symmetric_error_config
from metalert.verification import significant_probabilities
from oracles import bayes_oracle

HERE = Path(__file__).resolve().parent
BASELINE = HERE / "baselines" / "bench_sym200.json"
ARTIFACTS = HERE / "artifacts"
SIG = "sig-ssh-01"
SOCK = SocketPair("10.0.0.1", 1, "192.168.1.10", 22)
T0 = datetime(2016, 5, 12, tzinfo=timezone.utc)


@contextmanager
def criterion(key, limit):
    """Time the block, record the outcome, and fail if it ran past ``limit`` seconds."""
    detail = {}
    start = time.perf_counter()
    try:
        yield detail
        elapsed = time.perf_counter() - start
        ok = elapsed < limit
        ACCEPTANCE_RESULTS[key] = (ok, f"{detail.get('msg', '')} [{elapsed:.2f}s < {limit}s]".strip())
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE_RESULTS[key] = (False, f"{type(exc).__name__}: {exc} [{elapsed:.2f}s]")
        raise
    assert elapsed < limit, f"{key} took {elapsed:.2f}s"


def table2_setup():
    registry = registry_for(TABLE2)
    sim = generate(TABLE2, registry)
    return registry, sim


def test_c1_rate_reproduction(tmp_path, capsys):
    with criterion("1 rate reproduction", 1.0) as d:
        rates = store.load_rates(store.StoreLayout(_train_cli(tmp_path / "run") / "store"))
        kippo = rates.get("kippo", "ssh", SIG)
        assert kippo.rtp == 0.9375 and kippo.rfn == 0.0 and kippo.rtn == 0.8 and kippo.pm == 0.75
        sur = rates.get("suricata", "ssh", SIG)
        assert sur.rtp == pytest.approx(0.769231, abs=1e-6)
        assert sur.rfn == pytest.approx(0.333333, abs=1e-6)
        assert sur.rtn == pytest.approx(0.4) and sur.pm == 0.75
        snort = rates.get("snort", "ssh", SIG)
        assert snort.rtp == pytest.approx(0.705882, abs=1e-6)
        assert snort.rfn == pytest.approx(0.2) and snort.rtn == 0.0
        d["msg"] = (f"kippo {kippo.rtp}/{kippo.rfn}/{kippo.rtn}; suricata {sur.rtp:.6f}/{sur.rfn:.6f}/{sur.rtn}; "
                    f"snort {snort.rtp:.6f}/{snort.rfn:.6f}/{snort.rtn}")
    capsys.readouterr()


def test_c2_aggregation_reproduction():
    with criterion("2 aggregation reproduction", 1.0) as d:
        registry, sim = table2_setup()
        metas = aggregate(sim.events, registry, AggregationConfig(0, 60))
        assert len(sim.events) == 46 and len(metas) == 20
        ratio = reduction_ratio(len(sim.events), len(metas))
        assert ratio == pytest.approx(56.5, abs=0.05)
        d["msg"] = f"46 alerts -> {len(metas)} meta-alerts, reduction {ratio}%"


def test_c3_convergence():
    with criterion("3 convergence", 30.0) as d:
        registry, sim = table2_setup()
        rates = compute_rates(sim.events, sim.summary, registry)
        metas = aggregate(sim.events, registry, AggregationConfig(0, 60))
        patterns = build_training_patterns(metas, rates, registry)[SIG]
        ARTIFACTS.mkdir(exist_ok=True)
        lines, per_seed = [], {}
        for seed in range(5):
            reached = []
            for momentum in (0.1, 0.5, 0.7, 0.9):
                cfg = TrainConfig(learning_rate=0.5, momentum=momentum, goal=0.02, max_iterations=20_000, seed=seed)
                _, history = train_signature(patterns, cfg, SIG)
                (ARTIFACTS / f"convergence_seed{seed}_m{momentum}.tsv").write_text(store.format_history(history))
                if history[-1] <= 0.02:
                    reached.append(momentum)
                lines.append(f"seed {seed} momentum {momentum}: {len(history)} epochs, PI {history[-1]:.6f}")
            per_seed[seed] = reached
        print("\n".join(lines))
        assert all(per_seed.values()), per_seed
        d["msg"] = "goal reached for momenta " + "; ".join(f"seed {s}: {m}" for s, m in per_seed.items())


def _registry(n):
    names = [f"s{i}" for i in range(n)]
    reg = validate_registry([Sensor(s) for s in names], [Protocol("ssh")], [Signature(SIG, "ssh")],
                            [SensorCapability(s, SIG) for s in names])
    return reg, names


REGISTRIES = {n: _registry(n) for n in (1, 2, 3)}


def random_instance(rng):
    n = rng.choice([1, 2, 3])
    reg, names = REGISTRIES[n]

    def val():
        r = rng.random()
        return 0.0 if r < 0.1 else 1.0 if r < 0.2 else rng.random()

    pm = val()
    proto, sig, entries = [], [], []
    for name in names:
        rtp, rfn, rtn = val(), val(), val()
        proto.append(dict(rtp=rtp, rfp=1 - rtp, rfn=rfn, rtn=rtn, pm=pm))
        entries.append(RateEntry(name, "ssh", None, rtp, 1 - rtp, rfn, rtn, pm))
        if rng.random() < 0.6:
            srtp, srfn = val(), val()
            sig.append(dict(rtp=srtp, rfp=1 - srtp, rfn=srfn, rtn=rtn, pm=pm))
            entries.append(RateEntry(name, "ssh", SIG, srtp, 1 - srtp, srfn, rtn, pm))
        else:
            sig.append(None)
    combo = [rng.randint(0, 1) for _ in names]
    if not any(combo):
        combo[rng.randrange(n)] = 1
    meta = MetaAlert("m", SIG, SOCK, T0,
                     alerted=[s for s, a in zip(names, combo) if a],
                     silent=[s for s, a in zip(names, combo) if not a],
                     sessions=["x"] * sum(combo), open=False)
    return meta, combo, sig, proto, RateTable(entries), reg


def test_c4_bayes_oracle_equivalence():
    with criterion("4 bayes oracle equivalence", 5.0) as d:
        rng = random.Random(2024)
        worst = 0.0
        for _ in range(1000):
            meta, combo, sig, proto, table, reg = random_instance(rng)
            got = significant_probabilities(meta, table, reg)
            want = (1.0, 0.0) if all(combo) else bayes_oracle(combo, sig, proto)
            worst = max(worst, abs(got[0] - want[0]), abs(got[1] - want[1]))
        assert worst <= 1e-12
        d["msg"] = f"1000 instances, max abs difference {worst:.2e}"


def test_c5_probability_invariants():
    with criterion("5 probability invariants", 5.0) as d:
        rng = random.Random(99)
        n_single = 0
        for _ in range(10_000):
            meta, combo, _, _, table, reg = random_instance(rng)
            ptrue, pfalse = significant_probabilities(meta, table, reg)
            assert 0.0 <= ptrue <= 1.0 and 0.0 <= pfalse <= 1.0
            assert ptrue + pfalse <= 1.0 + 1e-12
            if len(combo) == 1:
                n_single += 1
                assert abs(ptrue + pfalse - 1.0) <= 1e-12
        d["msg"] = f"10000 metas ({n_single} with N = 1)"


def test_c6_gradient_correctness():
    with criterion("6 gradient correctness", 5.0) as d:
        rng = random.Random(6)
        worst = 0.0
        for _ in range(100):
            hidden = tuple(tuple(rng.uniform(-2, 2) for _ in range(3)) for _ in range(3))
            output = tuple(rng.uniform(-2, 2) for _ in range(4))
            weights = MlpWeights(SIG, hidden, output)
            pattern = TrainingPattern((rng.random(), rng.random()), rng.randint(0, 1))
            worst = max(worst, neuralnet.gradient_check(weights, pattern))
        assert worst < 1e-6
        d["msg"] = f"100 states, max relative deviation {worst:.2e}"


def _train_cli(d: Path) -> Path:
    d.mkdir()
    assert run(["simulate", "--config", str(HERE.parent / "configs" / "table2.json"),
                "--out-events", str(d / "events.jsonl"), "--out-summary", str(d / "summary.json"),
                "--out-registry", str(d / "registry.json"), "--out-truth", str(d / "truth.jsonl")]) == 0
    assert run(["train", "--events", str(d / "events.jsonl"), "--summary", str(d / "summary.json"),
                "--registry", str(d / "registry.json"), "--store", str(d / "store"), "--window", "0"]) == 0
    return d


def test_c7_determinism_and_persistence(tmp_path, capsys):
    with criterion("7 determinism and persistence", 5.0) as d:
        a = _train_cli(tmp_path / "a")
        b = _train_cli(tmp_path / "b")
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

        layout = store.StoreLayout(a / "store")
        reg = store.load_registry(layout)
        rates = store.load_rates(layout)
        weights = store.load_weights(layout, SIG)
        metas = store.load_metas(layout, "training")
        history = store.load_history(layout, SIG)
        out = store.StoreLayout(tmp_path / "copy")
        store.save_registry(reg, out)
        store.save_rates(rates, out)
        store.save_weights(weights, out, store.load_weight_record(layout, SIG)["trained_at"], TrainConfig())
        store.save_metas(metas, out, "training")
        store.save_history(history, out, SIG)
        assert store.load_registry(out) == reg and store.load_rates(out) == rates
        assert store.load_weights(out, SIG) == weights and store.load_metas(out, "training") == metas
        assert store.load_history(out, SIG) == history
        for rel in ("registry.json", "weights/sig-ssh-01.json", "metas/training.jsonl", "history/sig-ssh-01.tsv"):
            assert (out.root / rel).read_bytes() == (layout.root / rel).read_bytes(), rel
        d["msg"] = f"{len(files)} files byte-identical across runs; store round-trips exact"
    capsys.readouterr()


def test_c8_end_to_end_regression():
    with criterion("8 end-to-end regression", 30.0) as d:
        configs = {f"sym200_seed{s}": symmetric_error_config(n_traces=200, error=0.2, n_sensors=3, seed=s)
                   for s in range(3)}
        rows = bench(configs)
        current = {r.name: {"fused_fp": r.fused_fp, "fused_fn": r.fused_fn, "fused_errors": r.fused_errors,
                            "best_sensor_errors": r.best_sensor_errors} for r in rows}
        if not BASELINE.exists():
            BASELINE.parent.mkdir(exist_ok=True)
            BASELINE.write_text(json.dumps(current, indent=2, sort_keys=True) + "\n")
        baseline = json.loads(BASELINE.read_text())
        for name, row in current.items():
            assert row["fused_errors"] <= baseline[name]["fused_errors"], (name, row, baseline[name])
        d["msg"] = "fused FP+FN " + ", ".join(
            f"{n}: {r['fused_errors']} (baseline {baseline[n]['fused_errors']}, best sensor {r['best_sensor_errors']})"
            for n, r in current.items())
