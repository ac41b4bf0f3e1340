"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The training criteria (adding problem, MNIST rows, language model,
determinism) take minutes each and are marked ``slow``; deselect them with
``-m "not slow"``.
"""

import csv
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import DATA_DIR
from gatedrnn.cells import CellState, init_params, madd_count, param_count, step_gru, step_mgu
from gatedrnn.cli import load_task_data, main, run_training
from gatedrnn.config import load_config
from gatedrnn.core import Rng
from gatedrnn.trainer import evaluate

CELLS = ("simple", "irnn", "lstm", "coupled_lstm", "gru", "mgu", "scrn")


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


_RUNS = {}


def train_preset(tmp_path_factory, preset, *overrides):
    """Run ``gatedrnn train`` once per distinct argument list; return the CSV rows."""
    key = (preset, overrides)
    if key not in _RUNS:
        out = tmp_path_factory.mktemp(preset)
        argv = ["train", preset, "--output-dir", str(out)]
        for o in overrides:
            argv += ["--set", o]
        assert main(argv) == 0
        with open(out / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        _RUNS[key] = rows
    return _RUNS[key]


def test_1_gradient_exactness(report, capsys):
    worst = {}
    configs = [(c, ["--cell", c, "--hidden", "4", "--input-dim", "3", "--T", "5"]) for c in CELLS]
    configs += [("2-layer lm h5", ["--cell", "mgu", "--task", "lm", "--layers", "2", "--hidden", "5"]),
                ("bidi regression h4", ["--cell", "mgu", "--bidirectional", "--hidden", "4"])]
    codes = []
    for label, args in configs:
        codes.append(main(["gradcheck", *args]))
        line = capsys.readouterr().out.splitlines()[0]
        worst[label] = float(line.split("=")[1])
    ok = all(c == 0 for c in codes) and max(worst.values()) < 1e-6
    report(1, ok, f"gradcheck max relative error {max(worst.values()):.2e} over {len(configs)} configs (< 1e-6)")
    assert ok, worst


def test_2_parameter_counts(report):
    exact = {("mgu", 28): 25_800, ("gru", 28): 38_700, ("mgu", 1): 20_400, ("gru", 1): 30_600}
    got = {k: param_count(k[0], 100, k[1]) for k in exact}
    rng = Rng(2)
    pairs = [(rng.integers(1, 500), rng.integers(1, 500)) for _ in range(20)]
    ratios = [(Fraction(param_count("mgu", h, d), param_count("gru", h, d)),
               Fraction(param_count("mgu", h, d), param_count("lstm", h, d))) for h, d in pairs]
    ok = got == exact and all(r == (Fraction(2, 3), Fraction(1, 2)) for r in ratios)
    report(2, ok, f"counts {sorted(got.values())}; MGU:GRU = 2/3 and MGU:LSTM = 1/2 for 20 random (h, d)")
    assert ok


def test_3_structural_equivalences(report):
    rng = Rng(3)
    h, d = 16, 8
    mgu = init_params("mgu", h, d, rng=rng)
    for arr in (mgu["W_f"], mgu["b_f"], mgu["W_h"], mgu["b_h"]):
        arr[...] = rng.uniform(-1.5, 1.5, arr.shape)
    tied = init_params("gru", h, d, rng=rng)
    for gate in ("z", "r"):
        tied[f"W_{gate}"][...], tied[f"b_{gate}"][...] = mgu["W_f"], mgu["b_f"]
    tied["W_h"][...], tied["b_h"][...] = mgu["W_h"], mgu["b_h"]
    gru = init_params("gru", h, d, rng=rng)
    for name in gru.names():
        gru[name][...] = rng.uniform(-1.5, 1.5, gru[name].shape)

    # each step starts from a fresh random state: the identities are per-step,
    # and a free-running chaotic trajectory would amplify 1-ulp differences
    tie_err = alt_err = 0.0
    for _ in range(1000):
        s0, x = CellState(rng.uniform(-1, 1, h)), rng.uniform(-1, 1, d)
        tie_err = max(tie_err, float(np.max(np.abs(step_mgu(mgu, s0, x)[0].h - step_gru(tied, s0, x)[0].h))))
        a, b = step_gru(gru, s0, x)[0].h, step_gru(gru, s0, x, original_form=True)[0].h
        alt_err = max(alt_err, float(np.max(np.abs(a - b))))
    ok = tie_err <= 1e-15 and alt_err <= 1e-15
    report(3, ok, f"tied GRU vs MGU {tie_err:.1e}, GRU alternate form {alt_err:.1e} over 1000 steps (<= 1e-15)")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("cell", ["mgu", "gru"])
def test_4_adding_problem(tmp_path_factory, report, cell):
    rows = train_preset(tmp_path_factory, "adding-desk", f"cell={cell}")
    mse = float(rows[-1]["eval_metric"])
    first = float(rows[0]["eval_metric"])
    ok = rows[-1]["epoch"] == "300" and mse < 0.05
    report(4, ok, f"{cell} adding test MSE {mse:.4f} after 300 epochs (< 0.05; epoch 10: {first:.4f}, "
                  f"mean predictor 1/6)")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("cell", ["mgu", "gru"])
def test_5_mnist_rows(tmp_path_factory, report, cell):
    rows = train_preset(tmp_path_factory, "mnist-rows-desk", f"cell={cell}", f"data_dir={DATA_DIR}")
    acc = float(rows[-1]["eval_metric"])
    ok = rows[-1]["epoch"] == "30" and acc > 0.70
    report(5, ok, f"{cell} MNIST-rows test accuracy {acc:.3f} after 30 epochs (> 0.70)")
    assert ok


def unigram_perplexity(train_ids, target_ids, vocab_size):
    """Add-one smoothed unigram model from the training split, scored on the targets."""
    counts = np.bincount(train_ids, minlength=vocab_size) + 1.0
    logp = np.log(counts / counts.sum())
    return math.exp(-float(np.mean(logp[target_ids])))


@pytest.mark.slow
@pytest.mark.parametrize("cell", ["mgu", "gru"])
def test_6_language_model(tmp_path_factory, report, cell):
    overrides = (f"cell={cell}", f"data_dir={DATA_DIR}")
    rows = train_preset(tmp_path_factory, "lm-desk", *overrides)
    cfg = load_config("lm-desk", overrides)
    data = load_task_data(cfg)
    targets = np.concatenate([t.ravel() for _, t in data.eval.windows])
    unigram = unigram_perplexity(data.train.streams.ravel(), targets, data.vocab)
    ppl = [float(r["eval_metric"]) for r in rows]
    ok = len(ppl) == 5 and ppl[-1] < cfg.vocab_cap and ppl[-1] < unigram and ppl[-1] < ppl[0]
    report(6, ok, f"{cell} validation perplexity {ppl[0]:.1f} -> {ppl[-1]:.1f} over 5 epochs "
                  f"(uniform {data.vocab}, unigram {unigram:.1f})")
    assert ok


def test_7_cost_proxy(report):
    rng = Rng(7)
    dims = [(rng.integers(1, 1000), rng.integers(1, 1000)) for _ in range(50)]
    ratios = {Fraction(madd_count("mgu", h, d, affine_only=True), madd_count("gru", h, d, affine_only=True))
              for h, d in dims}
    ok = ratios == {Fraction(2, 3)}
    report(7, ok, f"affine madd ratio MGU:GRU = {', '.join(map(str, sorted(ratios)))} over 50 random (h, d)")
    assert ok


@pytest.mark.slow
def test_7_wall_time_informational(tmp_path_factory, report):
    secs = {}
    for cell in ("mgu", "gru"):
        rows = train_preset(tmp_path_factory, "adding-desk", f"cell={cell}")
        secs[cell] = float(np.median([float(r["wall_seconds"]) for r in rows]))
    report(7, True, f"informational: median epoch wall time MGU {secs['mgu']:.2f}s, GRU {secs['gru']:.2f}s "
                    f"(ratio {secs['mgu'] / secs['gru']:.2f}; includes evaluation)")


@pytest.mark.slow
def test_8_determinism(tmp_path_factory, report):
    first = train_preset(tmp_path_factory, "adding-desk", "cell=mgu")
    second = train_preset(tmp_path_factory, "adding-desk", "cell=mgu", "seed=0")
    cols = ("epoch", "train_loss", "eval_metric")
    same = [tuple(r[c] for c in cols) for r in first] == [tuple(r[c] for c in cols) for r in second]
    report(8, same, f"two seeded runs of the adding config: {len(first)} CSV rows identical "
                    f"outside wall_seconds" if same else "CSV metric columns differ")
    assert same


@pytest.mark.parametrize("cell", ["mgu", "gru"])
def test_9_overfit(tmp_path, report, cell):
    cfg = load_config("overfit", [f"cell={cell}", f"output_dir={tmp_path}"])
    stack = run_training(cfg)
    data = load_task_data(cfg)
    mse = evaluate(stack, data.train, "mse")
    ok = mse < 1e-3
    report(9, ok, f"{cell} train MSE {mse:.2e} on 20 fixed adding examples after 200 epochs (< 1e-3)")
    assert ok
