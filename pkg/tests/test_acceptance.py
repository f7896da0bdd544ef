"""Acceptance suite.

Each test prints one ``[PASS]``/``[FAIL]`` line for its criterion and then
asserts it.  Criteria 7-10 run real training on the default benchmark
with the profile in ``configs/bench.toml`` and must hold for at least two
of three seeds; together they take roughly a quarter of an hour on one
CPU core.
"""
import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import numeric_grad, rel_error
from perftestgen import checkpoint
from perftestgen.active import ALConfig, fjd
from perftestgen.cgan import CGANModel
from perftestgen.cli import main as cli_main
from perftestgen.codec import decode_indices, default_space, encode_indices
from perftestgen.config import epoch_size, load_config
from perftestgen.devops import devops_update
from perftestgen.drivers import SimulatorDriver
from perftestgen.experiments import run_active, run_compare, run_passive
from perftestgen.nn import ConditionalMLP, Dense, Embedding
from perftestgen.simulator import brute_force_positive_count, positive_count, remove_clusters

ROOT = Path(__file__).resolve().parents[1]
BENCH = ROOT / "configs" / "bench.toml"
SEEDS = (0, 1, 2)
EPOCH = 48_437


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return emit


def majority(results):
    return sum(bool(r) for r in results) >= 2


# -- 1: gradient oracle ---------------------------------------------------------

def _check_dense(rng):
    act = rng.choice(["relu", "tanh", "sigmoid", "identity"])
    layer = Dense(int(rng.integers(2, 6)), int(rng.integers(1, 5)), act, rng)
    x = rng.normal(size=(4, layer.n_in))
    w = rng.normal(size=(4, layer.n_out))

    def loss():
        return float(np.sum(w * layer.forward(x)))

    loss()
    gx = layer.backward(w)
    gw, gb = layer.grad_weights.copy(), layer.grad_bias.copy()
    return max(rel_error(gw, numeric_grad(loss, layer.weights)),
               rel_error(gb, numeric_grad(loss, layer.bias)),
               rel_error(gx, numeric_grad(loss, x)))


def _check_embedding(rng):
    emb = Embedding(3, 4, rng)
    labels = rng.integers(0, 3, 6)
    w = rng.normal(size=(6, 4))

    def loss():
        return float(np.sum(np.tanh(emb.forward(labels)) * w))

    out = emb.forward(labels)
    emb.backward(w * (1 - np.tanh(out) ** 2))
    return rel_error(emb.grad_table, numeric_grad(loss, emb.table))


def _check_mlp(rng):
    head = rng.choice(["sigmoid", "tanh"])
    n_out = 1 if head == "sigmoid" else 3
    net = ConditionalMLP(3, 2, n_out, head, rng, hidden=int(rng.integers(4, 9)), embed_dim=3)
    x = rng.uniform(-1, 1, (5, 3))
    y = rng.integers(0, 2, 5)
    w = rng.normal(size=(5, n_out))

    def loss():
        return float(np.sum(w * net.forward(x, y)))

    loss()
    gx = net.backward(w)
    grads = {k: v.copy() for k, v in net.gradients().items()}
    errs = [rel_error(grads[k], numeric_grad(loss, p)) for k, p in net.parameters().items()]
    return max(errs + [rel_error(gx, numeric_grad(loss, x))])


def test_criterion_01_gradient_oracle(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checks = [_check_dense, _check_embedding, _check_mlp]
    errors = [checks[i % 3](rng) for i in range(20)]
    elapsed = time.perf_counter() - start
    worst = max(errors)
    report(1, worst < 1e-4 and elapsed < 10,
           f"20 networks (dense/embedding/conditional MLP), worst relative error {worst:.2e}, {elapsed:.1f}s")


# -- 2: codec round trip --------------------------------------------------------

def test_criterion_02_codec_round_trip(report):
    start = time.perf_counter()
    space = default_space()
    idx = space.all_indices()
    back = decode_indices(space, encode_indices(space, idx))
    same = bool(np.array_equal(back, idx))
    elapsed = time.perf_counter() - start
    report(2, same and len(idx) == 3_100_000 and elapsed < 30,
           f"decode(encode(p)) == p for all {len(idx)} points: {same}, {elapsed:.1f}s")


# -- 3: simulator oracle --------------------------------------------------------

def test_criterion_03_simulator_oracle(report, bench):
    start = time.perf_counter()
    analytic = positive_count(bench)
    brute = brute_force_positive_count(bench)
    idx = bench.space.all_indices()
    consistent = bool(np.array_equal(bench.labels(idx), (bench.times(idx) > bench.threshold).astype(int)))
    elapsed = time.perf_counter() - start
    report(3, analytic == brute and consistent and elapsed < 60,
           f"analytic {analytic} vs enumerated {brute}, label/threshold consistent: {consistent}, "
           f"{elapsed:.1f}s")


# -- 4: FJD analytic cases ------------------------------------------------------

def test_criterion_04_fjd(report):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, (1000, 4))
    y = rng.integers(0, 2, 1000)
    same = fjd(x, y, x, y)
    z = np.zeros((50, 3))
    zy = np.zeros(50, dtype=int)
    shift = fjd(z, zy, z + np.array([0.6, 0.0, 0.8]) * 2.5, zy, num_labels=1)   # d = 2.5
    a = rng.normal(0, 1, (10_000, 1))
    b = rng.normal(0, 2, (10_000, 1))
    ay = np.zeros(10_000, dtype=int)
    gauss = fjd(a, ay, b, ay, num_labels=1)
    elapsed = time.perf_counter() - start
    ok = abs(same) <= 1e-6 and abs(shift - 6.25) <= 1e-9 and abs(gauss - 1.0) <= 0.15 and elapsed < 10
    report(4, ok, f"identical {same:.1e}, shift d=2.5 -> {shift:.12f}, N(0,1) vs N(0,4) -> {gauss:.3f}")


# -- 5: checkpoint round trip ---------------------------------------------------

def test_criterion_05_checkpoint(report, tmp_path, bench):
    def equal(a, b):
        pa, pb = checkpoint.model_to_arrays(a), checkpoint.model_to_arrays(b)
        return pa.keys() == pb.keys() and all(np.array_equal(pa[k], pb[k]) for k in pa)

    fresh = CGANModel(bench.space, seed=5)
    checkpoint.save(fresh, tmp_path / "fresh.ckpt")
    ok_fresh = equal(fresh, checkpoint.load(tmp_path / "fresh.ckpt"))

    trained = CGANModel(bench.space, seed=5, learning_rate=1e-3)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        idx = bench.space.sample_indices(rng, 32)
        trained.train_step(encode_indices(bench.space, idx), bench.labels(idx))
    checkpoint.save(trained, tmp_path / "trained.ckpt")
    ok_trained = equal(trained, checkpoint.load(tmp_path / "trained.ckpt"))
    report(5, ok_fresh and ok_trained,
           f"bit-exact after save/load: fresh {ok_fresh}, after 1000 steps {ok_trained}")


# -- 6: determinism -------------------------------------------------------------

def test_criterion_06_determinism(report, tmp_path):
    cfg = tmp_path / "det.toml"
    cfg.write_text(BENCH.read_text().replace("dataset_size = 3100000", "dataset_size = 100000")
                   .replace("max_iterations = 200", "max_iterations = 6"))
    codes = [cli_main(["train-active", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    report(6, codes == [0, 0] and a == b and len(a.splitlines()) == 8,
           f"two train-active runs, {len(a.splitlines()) - 2} metric rows each, byte-identical: {a == b}")


# -- shared training runs for 7-10 ---------------------------------------------

@pytest.fixture(scope="module")
def passive_runs(tmp_path_factory):
    runs = {}
    base = tmp_path_factory.mktemp("passive")
    for seed in SEEDS:
        cfg = load_config(BENCH)
        cfg = dataclasses.replace(cfg, seed=seed, max_steps=EPOCH)
        start = time.perf_counter()
        summary = run_passive(cfg, base / f"seed{seed}")
        runs[seed] = (summary, time.perf_counter() - start)
    return runs


@pytest.fixture(scope="module")
def active_runs(tmp_path_factory):
    runs = {}
    base = tmp_path_factory.mktemp("active")
    for seed in SEEDS:
        cfg = load_config(BENCH)
        al = dataclasses.replace(cfg.al, test_budget=500, accuracy_target=0.8, fjd_threshold=1e-12,
                                 max_iterations=math.ceil(EPOCH / cfg.al.steps_per_iteration))
        cfg = dataclasses.replace(cfg, seed=seed, dataset_size=1_000_000, al=al)
        runs[seed] = run_active(cfg, base / f"seed{seed}")
    return runs


def test_criterion_07_passive_learning(report, passive_runs):
    results, lines = [], []
    for seed, (s, elapsed) in passive_runs.items():
        m50, m80 = s.milestones["0.5"], s.milestones["0.8"]
        ok = m50 is not None and m50 <= 2000 and m80 is not None and m80 <= EPOCH
        results.append(ok)
        lines.append(f"seed {seed}: 0.50@{m50} 0.80@{m80} 0.96@{s.milestones['0.96']} ({elapsed:.0f}s)")
    report(7, majority(results), "; ".join(lines) + " [need 0.50 <= 2000 and 0.80 <= 48437]")


def test_criterion_08_active_vs_passive(report, passive_runs, active_runs):
    results, lines = [], []
    for seed in SEEDS:
        p, a = passive_runs[seed][0], active_runs[seed]
        p_labels, a_labels = p.milestone_labels["0.8"], a.milestone_labels["0.8"]
        ok = p_labels is not None and a_labels is not None and a_labels < p_labels
        results.append(ok)
        lines.append(f"seed {seed}: active {a_labels} labels @step {a.milestones['0.8']} vs "
                     f"passive {p_labels} @step {p.milestones['0.8']}")
    report(8, majority(results), "; ".join(lines))


def test_criterion_09_generation_vs_random(report, passive_runs, active_runs):
    cfg = load_config(BENCH)
    rate = positive_count(cfg.simulator) / cfg.space.size
    results, lines = [], []
    for seed in SEEDS:
        cfg.seed = seed
        rows = run_compare(cfg, [passive_runs[seed][0].checkpoint, active_runs[seed].checkpoint],
                           [1000, 5000, 10000])
        ok = all(r["pcgan_positive"] >= 2 * r["size"] * rate and r["acgan_positive"] >= 2 * r["size"] * rate
                 for r in rows)
        results.append(ok)
        lines.append(f"seed {seed}: " + ", ".join(
            f"{r['size']}: p{r['pcgan_positive']}/a{r['acgan_positive']} vs 2x{r['random_expected']:.0f}"
            for r in rows))
    report(9, majority(results), "; ".join(lines))


def test_criterion_10_devops(report, passive_runs, tmp_path):
    cfg = load_config(BENCH)
    changed = remove_clusters(cfg.simulator, [0, 1])
    results, lines = [], []
    for seed in SEEDS:
        summary = passive_runs[seed][0]
        scratch = summary.milestones["0.8"]
        al = dataclasses.replace(cfg.al, accuracy_target=0.8, fjd_threshold=1e-12,
                                 max_iterations=math.ceil(EPOCH / cfg.al.steps_per_iteration))
        _, rep, _ = devops_update(summary.checkpoint, SimulatorDriver(changed), al,
                                  ground_truth=changed, out_path=tmp_path / f"upd{seed}.ckpt")
        reached = rep.changed and rep.stop_reason == "accuracy"
        ok = reached and scratch is not None and rep.steps < 0.5 * scratch
        results.append(ok)
        lines.append(f"seed {seed}: change {rep.changed} ({rep.differing} flips), "
                     f"acc {rep.accuracy_before} -> {rep.accuracy_after} in {rep.steps} steps "
                     f"vs from-scratch {scratch}")
    report(10, majority(results), "; ".join(lines))


# -- 11: epoch arithmetic -------------------------------------------------------

def test_criterion_11_epoch_sizes(report):
    expected = {3_100_000: 48437, 1_000_000: 15372, 500_000: 7812, 100_000: 1562}
    got = {n: epoch_size(n, 64) for n in expected}
    bad = {n: (got[n], e) for n, e in expected.items() if got[n] != e}
    report(11, not bad, f"floor(n/64) = {got}; mismatches (got, table): {bad}")
