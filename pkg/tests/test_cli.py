import csv
import subprocess
import sys

import numpy as np
import pytest

from gatedrnn.cells import param_count
from gatedrnn.checkpoint import load_checkpoint, save_checkpoint
from gatedrnn.cli import CSV_COLUMNS, build_model, load_task_data, main
from gatedrnn.config import load_config, preset_names

TINY = """\
task = adding
cell = mgu
hidden = 4
bidirectional = true
learning_rate = 0.01
momentum = 0.9
batch_size = 5
epochs = 3
n_train = 20
n_test = 10
len_min = 6
len_max = 8
seed = 3
"""


def write_cfg(tmp_path, text=TINY, name="tiny.cfg", **extra):
    text = text + "".join(f"{k} = {v}\n" for k, v in extra.items())
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestTrain:
    def test_writes_metrics_and_checkpoint(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", str(write_cfg(tmp_path)), "--output-dir", str(out)]) == 0
        text = capsys.readouterr().out
        assert f"param_count = {2 * param_count('mgu', 4, 2)}" in text
        assert "madd_count = " in text
        rows = read_rows(out / "metrics.csv")
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
        assert all(float(r[3]) >= 0 for r in rows[1:])
        meta, arrays = load_checkpoint(out / "checkpoint.gbn")
        assert "hidden = 4" in meta["config"]

    def test_adding_preset_param_count(self, tmp_path, capsys):
        cfg = load_config("adding", ["epochs=0", "n_train=2", "n_test=2", f"output_dir={tmp_path / 'o'}"])
        assert main(["train", "adding", "--set", "epochs=0", "--set", "n_train=2", "--set", "n_test=2",
                     "--output-dir", str(tmp_path / "o")]) == 0
        assert cfg.hidden == 100 and cfg.bidirectional
        assert f"param_count = {2 * param_count('mgu', 100, 2)}" in capsys.readouterr().out

    def test_zero_epochs(self, tmp_path):
        out = tmp_path / "run"
        cfg_path = write_cfg(tmp_path, epochs=0, output_dir=out)
        assert main(["train", str(cfg_path)]) == 0
        assert read_rows(out / "metrics.csv") == [list(CSV_COLUMNS)]
        cfg = load_config(cfg_path)
        fresh = build_model(cfg, load_task_data(cfg))
        _, arrays = load_checkpoint(out / "checkpoint.gbn")
        for (_, a), (_, b) in zip(arrays, fresh.named_parameters()):
            np.testing.assert_array_equal(a, b)

    def test_identical_runs_identical_csv(self, tmp_path):
        cfg_path = write_cfg(tmp_path)
        for name in ("a", "b"):
            assert main(["train", str(cfg_path), "--output-dir", str(tmp_path / name)]) == 0
        a, b = read_rows(tmp_path / "a" / "metrics.csv"), read_rows(tmp_path / "b" / "metrics.csv")
        assert [r[:3] for r in a] == [r[:3] for r in b]

    def test_eval_every(self, tmp_path):
        out = tmp_path / "run"
        assert main(["train", str(write_cfg(tmp_path, epochs=5, eval_every=2)), "--output-dir", str(out)]) == 0
        assert [r[0] for r in read_rows(out / "metrics.csv")[1:]] == ["2", "4", "5"]

    def test_bad_config_is_usage_error(self, tmp_path, capsys):
        assert main(["train", str(write_cfg(tmp_path, hidden="lots"))]) == 1
        assert "hidden" in capsys.readouterr().err

    def test_missing_data_is_data_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "task = mnist-rows\ntrain_data = nope\ntrain_labels = nope\n"
                                  "eval_data = nope\neval_labels = nope\n")
        assert main(["train", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
        assert "data error" in capsys.readouterr().err

    def test_non_finite_training_is_numerical_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, learning_rate=1e200, momentum=0.0)
        assert main(["train", str(cfg), "--output-dir", str(tmp_path / "o")]) == 3
        assert "numerical error" in capsys.readouterr().err


class TestEval:
    def test_reproduces_final_metric(self, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, output_dir=out)
        assert main(["train", str(cfg)]) == 0
        capsys.readouterr()
        final = read_rows(out / "metrics.csv")[-1][2]
        assert main(["eval", str(out / "checkpoint.gbn"), str(cfg)]) == 0
        assert capsys.readouterr().out.strip() == f"mse = {final}"
        assert main(["eval", str(out / "checkpoint.gbn"), str(cfg), "--workers", "2"]) == 0
        assert capsys.readouterr().out.strip() == f"mse = {final}"

    def test_resaved_checkpoint_same_metric(self, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, output_dir=out)
        main(["train", str(cfg)])
        meta, arrays = load_checkpoint(out / "checkpoint.gbn")
        save_checkpoint(tmp_path / "copy.gbn", arrays, meta["config"])
        capsys.readouterr()
        main(["eval", str(out / "checkpoint.gbn"), str(cfg)])
        first = capsys.readouterr().out
        main(["eval", str(tmp_path / "copy.gbn"), str(cfg)])
        assert capsys.readouterr().out == first

    def test_wrong_architecture(self, tmp_path, capsys):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, output_dir=out)
        main(["train", str(cfg)])
        capsys.readouterr()
        assert main(["eval", str(out / "checkpoint.gbn"), str(cfg), "--set", "hidden=5"]) == 2
        err = capsys.readouterr().err
        assert "expected (5, 7), found (4, 6)" in err

    def test_mnist_vendored(self, tmp_path, data_dir, capsys):
        cfg = write_cfg(tmp_path, "task = mnist-rows\nhidden = 3\nepochs = 1\nbatch_size = 50\n"
                                  f"data_dir = {data_dir}\n"
                                  "train_data = mnist-train-images-idx3-ubyte.gz\n"
                                  "train_labels = mnist-train-labels-idx1-ubyte.gz\n"
                                  "eval_data = mnist-test-images-idx3-ubyte.gz\n"
                                  "eval_labels = mnist-test-labels-idx1-ubyte.gz\n"
                                  "n_train = 100\nn_test = 50\n", output_dir=tmp_path / "m")
        assert main(["train", str(cfg)]) == 0
        acc = float(read_rows(tmp_path / "m" / "metrics.csv")[-1][2])
        assert 0.0 <= acc <= 1.0

    def test_lm_and_seqclass(self, tmp_path, capsys):
        (tmp_path / "train.txt").write_text("the cat sat on the mat\nthe dog sat\n" * 10)
        (tmp_path / "valid.txt").write_text("the cat sat\n" * 5)
        cfg = write_cfg(tmp_path, f"task = lm\nhidden = 4\nlayers = 2\nbatch_size = 2\nseq_len = 5\n"
                                  f"clip_norm = 5.0\nlearning_rate = 0.5\ndata_dir = {tmp_path}\n"
                                  "train_data = train.txt\neval_data = valid.txt\n", output_dir=tmp_path / "lm")
        assert main(["train", str(cfg)]) == 0
        ppl = float(read_rows(tmp_path / "lm" / "metrics.csv")[-1][2])
        assert 1.0 < ppl < 8.0  # 8 = vocabulary size (6 words + <eos> + <unk>)
        (tmp_path / "tr.tsv").write_text("".join(f"{i % 2}\t{i % 5} {i % 3} 4\n" for i in range(12)))
        (tmp_path / "te.tsv").write_text("0\t1 2\n1\t3 4 0\n")
        cfg = write_cfg(tmp_path, f"task = seqclass\nhidden = 3\nbatch_size = 4\ndata_dir = {tmp_path}\n"
                                  "train_data = tr.tsv\neval_data = te.tsv\n", name="sc.cfg", output_dir=tmp_path / "sc")
        assert main(["train", str(cfg)]) == 0
        assert main(["eval", str(tmp_path / "sc" / "checkpoint.gbn"), str(cfg)]) == 0
        assert capsys.readouterr().out.strip().endswith(read_rows(tmp_path / "sc" / "metrics.csv")[-1][2])


class TestGradcheckCommand:
    @pytest.mark.parametrize("cell", ["simple", "irnn", "lstm", "coupled_lstm", "gru", "mgu", "scrn"])
    def test_all_cells_pass(self, cell, capsys):
        assert main(["gradcheck", "--cell", cell, "--hidden", "4", "--input-dim", "3", "--T", "5"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_T_one(self):
        assert main(["gradcheck", "--T", "1"]) == 0

    def test_repeatable(self, capsys):
        main(["gradcheck", "--cell", "gru", "--seed", "7"])
        first = capsys.readouterr().out
        main(["gradcheck", "--cell", "gru", "--seed", "7"])
        assert capsys.readouterr().out == first

    def test_dims_bounded(self):
        assert main(["gradcheck", "--hidden", "50"]) == 1


class TestParamsCommand:
    def test_mgu(self, capsys):
        assert main(["params", "--cell", "mgu", "--hidden", "100", "--input-dim", "28"]) == 0
        out = capsys.readouterr().out
        assert "total params = 25800" in out
        assert "MGU:GRU params = 2/3" in out and "MGU:LSTM params = 1/2" in out

    def test_gru(self, capsys):
        assert main(["params", "--cell", "gru", "--hidden", "100", "--input-dim", "28"]) == 0
        assert "total params = 38700" in capsys.readouterr().out

    @pytest.mark.parametrize("h,d,layers,bi", [(1, 1, 1, False), (7, 3, 2, True), (64, 200, 2, False)])
    def test_ratio_line_any_dims(self, h, d, layers, bi, capsys):
        argv = ["params", "--cell", "lstm", "--hidden", str(h), "--input-dim", str(d), "--layers", str(layers)]
        main(argv + (["--bidirectional"] if bi else []))
        out = capsys.readouterr().out
        assert "MGU:GRU params = 2/3" in out
        per_layer = [int(line.split("params = ")[1].split()[0]) for line in out.splitlines() if line.startswith("layer")]
        assert len(per_layer) == layers * (2 if bi else 1)
        assert f"total params = {sum(per_layer)}" in out

    def test_bad_dims(self):
        assert main(["params", "--hidden", "0"]) == 1


class TestUsage:
    def test_unknown_command_exit_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_presets_parse(self):
        for name in preset_names():
            load_config(name)

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "gatedrnn.cli", "params", "--cell", "gru", "-H", "100", "-d", "1"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "total params = 30600" in proc.stdout
        proc = subprocess.run([sys.executable, "-m", "gatedrnn.cli", "train", str(tmp_path / "none.cfg")],
                              capture_output=True, text=True)
        assert proc.returncode == 1
