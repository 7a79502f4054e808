"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in a summary
section at the end of the pytest run.
"""

import csv
import math
import time

import numpy as np
import pytest

from crashdetect.cli import main
from crashdetect.dataio import N_FEATURES, Dataset
from crashdetect.evaluation import ConfusionMatrix, accuracy, auc, detection_rate, false_alarm_rate, roc_curve
from crashdetect.numerics import Activation
from crashdetect.recurrent import (
    GateParams,
    GruCellParams,
    LstmCellParams,
    LstmState,
    NetworkSpec,
    bptt_gradients,
    flatten,
    forward_sequence,
    gru_step,
    init_params,
    lstm_step,
    unflatten,
)
from crashdetect.sampling import SmoteConfig, knn_indices, smote_oversample, smote_points
from crashdetect.training import binary_crossentropy
from oracles import central_differences, mann_whitney_auc, scalar_gru_step, scalar_lstm_step


# -- 1. metric fidelity ---------------------------------------------------

def test_criterion_1_metric_fidelity(verdict):
    published = {
        "LSTM": (ConfusionMatrix(tp=62, fp=66, fn=22, tn=2048), (96.0, 73.8, 3.0)),
        "GRU": (ConfusionMatrix(tp=63, fp=70, fn=21, tn=2044), (95.9, 75.0, 3.2)),
    }
    worst = 0.0
    for cm, expected in published.values():
        got = (accuracy(cm), detection_rate(cm), false_alarm_rate(cm))
        worst = max(worst, max(abs(g - e) for g, e in zip(got, expected)))
    ok = worst <= 0.05
    verdict("1 metric fidelity", ok, f"max deviation {worst:.4f} pp (tolerance 0.05)")
    assert ok


# -- 2. cell equations ----------------------------------------------------

def _zero_gate(width, d_in):
    return GateParams(np.zeros((width, d_in)), np.zeros((width, width)), np.zeros(width))


def _rand_gate(rng, width, d_in):
    return GateParams(rng.normal(size=(width, d_in)), rng.normal(size=(width, width)), rng.normal(size=width))


def test_criterion_2_cell_equations(verdict):
    errs_hand = []
    lstm0 = LstmCellParams(*(_zero_gate(1, 3) for _ in range(4)), g2=Activation.TANH)
    out = lstm_step(lstm0, [0.3, -2.0, 7.0], LstmState.zeros(1))
    errs_hand += [abs(out.cell[0]), abs(out.output[0])]
    out = lstm_step(lstm0, [0.3, -2.0, 7.0], LstmState(np.array([1.0]), np.array([0.0])))
    errs_hand += [abs(out.cell[0] - 0.5), abs(out.output[0] - 0.5 * math.tanh(0.5))]
    gru0 = GruCellParams(*(_zero_gate(1, 3) for _ in range(3)), g=Activation.TANH)
    errs_hand.append(abs(gru_step(gru0, [1.0, 2.0, 3.0], [1.0])[0] - 0.5))

    rng = np.random.default_rng(2024)
    errs_rand = []
    for _ in range(200):
        width, d_in = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        g = Activation(rng.choice(["tanh", "sigmoid"]))
        lp = LstmCellParams(*(_rand_gate(rng, width, d_in) for _ in range(4)), g1=g, g2=g)
        x, h, y = rng.normal(size=d_in), rng.normal(size=width), rng.normal(size=width)
        out = lstm_step(lp, x, LstmState(h, y))
        h_ref, y_ref = scalar_lstm_step(lp, x, h, y)
        errs_rand.append(max(np.max(np.abs(out.cell - h_ref)), np.max(np.abs(out.output - y_ref))))
        gp = GruCellParams(*(_rand_gate(rng, width, d_in) for _ in range(3)), g=g)
        errs_rand.append(np.max(np.abs(gru_step(gp, x, h) - scalar_gru_step(gp, x, h))))
    hand, rand = max(errs_hand), max(errs_rand)
    ok = hand <= 1e-12 and rand <= 1e-14
    verdict("2 cell equations", ok, f"hand-derived max error {hand:.2e} (<=1e-12), "
                                    f"scalar-loop max error {rand:.2e} (<=1e-14) over 400 random steps")
    assert ok


# -- 3. gradient correctness ----------------------------------------------

def test_criterion_3_gradients(verdict):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst, n_nets, n_params = 0.0, 0, 0
    for i in range(24):
        kind = "lstm" if i % 2 == 0 else "gru"
        n_layers = 1 + i % 2 if i < 12 else 2
        widths = tuple(int(rng.integers(1, 6)) for _ in range(n_layers))
        d_in, steps = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        if i >= 20:
            widths, steps = (5, 5), 6  # largest allowed shape
        spec = NetworkSpec(kind, widths, d_in, Activation(rng.choice(["tanh", "sigmoid"])))
        flat = flatten(init_params(spec, rng))
        flat = flat + rng.normal(0, 0.5, flat.size)
        params = unflatten(spec, flat)
        seq = rng.normal(size=(steps, d_in))
        label = int(rng.integers(0, 2))
        analytic = bptt_gradients(spec, params, seq, label)
        numeric = central_differences(
            lambda f: binary_crossentropy(forward_sequence(spec, unflatten(spec, f), seq), label), flat
        )
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
        worst = max(worst, float(rel.max()))
        n_nets += 1
        n_params += flat.size
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 60 and n_nets >= 20
    verdict("3 gradient correctness", ok, f"{n_nets} networks, {n_params} parameters, max relative error "
                                          f"{worst:.2e} (<1e-5), {elapsed:.1f} s (<60 s)")
    assert ok


# -- 4. AUC oracle --------------------------------------------------------

def test_criterion_4_auc_oracle(verdict):
    rng = np.random.default_rng(11)
    worst, n_sets = 0.0, 0
    for i in range(300):
        n = int(rng.integers(2, 201))
        scores = rng.random(n)
        if i % 3 == 0:
            scores = np.round(scores * 8) / 8  # many ties
        labels = rng.integers(0, 2, n)
        labels[rng.integers(n)] = 1
        labels[(np.flatnonzero(labels == 1)[0] + 1) % n] = 0
        if labels.min() == labels.max():
            continue
        worst = max(worst, abs(auc(roc_curve(scores, labels)) - mann_whitney_auc(scores, labels)))
        n_sets += 1
    ok = worst <= 1e-12 and n_sets >= 100
    verdict("4 AUC oracle", ok, f"{n_sets} sets, max |trapezoid - Mann-Whitney| {worst:.2e} (<=1e-12)")
    assert ok


# -- 5. SMOTE geometry ----------------------------------------------------

def test_criterion_5_smote_geometry(verdict):
    rng = np.random.default_rng(5)
    failures, n_synth = [], 0
    for trial in range(40):
        k = int(rng.integers(1, 6))
        n_pos = int(rng.integers(k + 1, 30))
        n_neg = int(rng.integers(n_pos, 120))
        ratio = float(rng.choice([0.5, 0.8, 1.0])) if n_pos <= 0.5 * n_neg else 1.0
        features = rng.random((n_pos + n_neg, N_FEATURES))
        if trial % 4 == 0:
            features = np.round(features, 1)
        labels = np.r_[np.ones(n_pos), np.zeros(n_neg)]
        rng.shuffle(labels)
        ds = Dataset(features, labels)
        cfg = SmoteConfig(k_neighbors=k, target_ratio=ratio, seed=trial)
        out = smote_oversample(ds, cfg)
        if out.class_counts() != (round(ratio * n_neg), n_neg):
            failures.append(f"trial {trial}: counts {out.class_counts()}")
        if not (np.array_equal(out.features[:len(ds)], ds.features)
                and np.array_equal(out.labels[:len(ds)], ds.labels)):
            failures.append(f"trial {trial}: originals changed")
        # replay the same draws to recover seed/partner pairs
        minority = ds.features[ds.labels == 1]
        synth, seeds, partners = smote_points(minority, round(ratio * n_neg) - n_pos, k,
                                              np.random.default_rng(cfg.seed))
        if not np.array_equal(synth, out.features[len(ds):]):
            failures.append(f"trial {trial}: synthetic rows differ from replay")
        for s, i, j in zip(synth, seeds, partners):
            n_synth += 1
            if j not in knn_indices(minority, i, k):
                failures.append(f"trial {trial}: partner {j} not a neighbour of {i}")
            lo, hi = np.minimum(minority[i], minority[j]), np.maximum(minority[i], minority[j])
            if np.any(s < lo) or np.any(s > hi):
                failures.append(f"trial {trial}: point outside segment")
    ok = not failures
    verdict("5 SMOTE geometry", ok, f"40 datasets, {n_synth} synthetic points, "
                                    f"{len(failures)} violations{': ' + failures[0] if failures else ''}")
    assert ok


# -- 6 and 7. end to end on synthetic data --------------------------------

E2E_CONFIG = """
model.cell = lstm
model.widths = 16, 8
train.epochs = 300
train.batch_size = 256
"""


def _metrics(path):
    with open(path) as fh:
        return {row["metric"]: float(row["value"]) for row in csv.DictReader(fh)}


def _run_pipeline(workdir, extra_config=""):
    workdir.mkdir(parents=True, exist_ok=True)
    cfg = workdir / "run.cfg"
    cfg.write_text(E2E_CONFIG + extra_config)
    data, model = workdir / "data.csv", workdir / "model.json"
    start = time.perf_counter()
    assert main(["generate", "--config", str(cfg), str(data)]) == 0
    assert main(["train", "--config", str(cfg), str(data), str(model)]) == 0
    assert main(["evaluate", str(model), str(data), str(workdir / "model.test_index.txt"),
                 str(workdir / "report")]) == 0
    return _metrics(workdir / "report" / "metrics.csv"), time.perf_counter() - start


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    metrics, elapsed = _run_pipeline(root / "first")
    return root, metrics, elapsed


@pytest.mark.slow
def test_criterion_6_end_to_end(e2e, verdict):
    _, m, elapsed = e2e
    ok = m["auc"] >= 0.85 and m["false_alarm_rate"] <= 5.0
    verdict("6 end to end", ok,
            f"test AUC {m['auc']:.4f} (>=0.85), FAR {m['false_alarm_rate']:.2f}% (<=5%), "
            f"DR {m['detection_rate']:.1f}%, accuracy {m['accuracy']:.1f}%, threshold {m['threshold']}, "
            f"{elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_6_null_control(e2e, verdict):
    root, _, _ = e2e
    m, elapsed = _run_pipeline(root / "null", "generator.divergence_rate = 0\n")
    ok = abs(m["auc"] - 0.5) <= 0.05
    verdict("6 null control", ok, f"divergence 0: test AUC {m['auc']:.4f} (0.5 +/- 0.05), {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_7_determinism(e2e, verdict):
    root, _, _ = e2e
    _run_pipeline(root / "second")
    names = ["data.csv", "model.json", "model.test_index.txt", "model.training_log.csv",
             "report/metrics.csv", "report/roc.csv"]
    differing = [n for n in names if (root / "first" / n).read_bytes() != (root / "second" / n).read_bytes()]
    ok = not differing
    verdict("7 determinism", ok, f"{len(names)} files compared, differing: {differing or 'none'}")
    assert ok
