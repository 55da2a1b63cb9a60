import csv
import glob
import os

import numpy as np
import pytest
from PIL import Image

import cli
from config_manager import config_manager
from dctnet import commands, models, nn, training
from dctnet.dataset import cache_path, load_cache
from dctnet.errors import DctNetError

SMALL_BUDGET = ["--phase1-batches", "40", "--hard-sweeps", "1", "--phase3-batches", "24", "--quiet"]
NO_BUDGET = ["--phase1-batches", "0", "--hard-sweeps", "0", "--phase3-batches", "0", "--quiet"]


@pytest.fixture
def prepared(synthetic_mnist_dir):
    assert cli.main(["prepare", "--mnist-dir", synthetic_mnist_dir, "--tau", "0.02", "--quiet"]) == 0
    return config_manager.get_cache_dir()


def test_prepare_writes_four_caches(prepared):
    for domain in ("pixel", "dct"):
        for split, count in (("train", 60), ("test", 30)):
            ds = load_cache(cache_path(prepared, domain, split))
            assert len(ds) == count and ds.domain_tag == domain and ds.n == 32
    assert load_cache(cache_path(prepared, "dct", "train")).threshold == pytest.approx(0.02, abs=1e-7)
    assert load_cache(cache_path(prepared, "pixel", "test")).threshold == 0.0


def test_prepare_pixel_domain_only(synthetic_mnist_dir, tmp_path):
    out = str(tmp_path / "pixel_only")
    assert cli.main(["prepare", "--mnist-dir", synthetic_mnist_dir, "--out", out, "--domain", "pixel", "--quiet"]) == 0
    assert sorted(os.listdir(out)) == ["mnist32_pixel_test.dctc", "mnist32_pixel_train.dctc"]


def test_prepare_usage_errors(tmp_path):
    assert cli.main(["prepare", "--mnist-dir", str(tmp_path / "missing")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["prepare", "--mnist-dir", str(empty)]) == 2
    assert cli.main(["prepare", "--domain", "fourier"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_prepare_format_error(tmp_path, write_idx):
    folder = tmp_path / "broken"
    folder.mkdir()
    (folder / "train-images.idx3-ubyte").write_bytes(write_idx["images"](np.zeros((4, 28, 28)))[:-5])
    (folder / "train-labels.idx1-ubyte").write_bytes(write_idx["labels"](np.zeros(4)))
    assert cli.main(["prepare", "--mnist-dir", str(folder), "--quiet"]) == 3


def test_zero_budget_checkpoint_equals_initialization(prepared, tmp_path):
    out = str(tmp_path / "zero")
    assert cli.main(["train", "--model", "dct-mlp", "--seed", "5", "--out", out] + NO_BUDGET) == 0
    init, _ = training.seed_streams(5)
    expected = models.model_arrays(models.build_model("dct_mlp", init))
    saved = nn.load_weights(os.path.join(out, "dct_mlp.nnwt"))
    assert [a.tobytes() for a in saved] == [a.tobytes() for a in expected]
    for phase in ("phase1", "phase2", "phase3"):
        assert os.path.exists(os.path.join(out, f"dct_mlp_{phase}.nnwt"))


def test_train_accepts_long_budget_preset_and_alias(prepared, tmp_path):
    for preset in ("paper", "full"):
        out = str(tmp_path / preset)
        assert cli.main(["train", "--model", "dct-mlp", "--preset", preset, "--out", out] + NO_BUDGET) == 0
        assert os.path.exists(os.path.join(out, "dct_mlp.nnwt"))
    assert cli.main(["train", "--preset", "huge", "--out", str(tmp_path / "x")] + NO_BUDGET) == 2


def test_train_without_test_cache_warns(prepared, tmp_path, capsys):
    os.remove(cache_path(prepared, "dct", "test"))
    assert cli.main(["train", "--model", "dct-mlp", "--out", str(tmp_path / "run")] + NO_BUDGET) == 0
    assert "测试缓存不存在" in capsys.readouterr().out


def test_bad_config_value_is_a_usage_error(synthetic_mnist_dir, monkeypatch):
    monkeypatch.setenv("DEFAULT_TAU", "0.02")
    monkeypatch.setenv("DEFAULT_SEED", "1")
    monkeypatch.setitem(config_manager.config, "DEFAULT_TAU", "abc")
    assert cli.main(["prepare", "--mnist-dir", synthetic_mnist_dir, "--quiet"]) == 2
    monkeypatch.setitem(config_manager.config, "DEFAULT_SEED", "one")
    assert cli.main(["bench", "--n", "4", "--iters", "1"]) == 2


def test_library_errors_become_usage_results():
    @commands._guarded
    def diverges():
        raise DctNetError("loss 不是有限值: nan")

    assert diverges() == {"ok": False, "error": "usage", "message": "loss 不是有限值: nan"}


def test_train_and_eval(prepared, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["train", "--model", "dct-mlp", "--out", out] + SMALL_BUDGET) == 0
    assert "accuracy:" in capsys.readouterr().out
    with open(os.path.join(out, "loss_trace.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["phase", "batch_index", "running_loss"]
    assert [r[0] for r in rows[1:]] == ["phase1", "phase1", "phase3"]
    assert os.path.exists(os.path.join(out, "misclassified.csv"))
    assert glob.glob(os.path.join(config_manager.get_notes_dir(), "*.md"))

    assert cli.main(["eval", "--weights", os.path.join(out, "dct_mlp.nnwt")]) == 0
    assert "accuracy:" in capsys.readouterr().out
    # 未指定 --out 时写到 RESULTS_DIR 下的时间戳目录
    assert glob.glob(os.path.join(config_manager.get_results_dir(), "*_eval", "misclassified.csv"))


def test_training_is_reproducible(prepared, tmp_path):
    paths = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert cli.main(["train", "--model", "dct-mlp", "--seed", "3", "--out", out] + SMALL_BUDGET) == 0
        paths.append(os.path.join(out, "dct_mlp.nnwt"))
    with open(paths[0], "rb") as fa, open(paths[1], "rb") as fb:
        assert fa.read() == fb.read()


def test_train_domain_mismatch_and_missing_pixels(prepared, tmp_path):
    dct_train = cache_path(prepared, "dct", "train")
    assert cli.main(["train", "--model", "lenet", "--train-cache", dct_train] + NO_BUDGET) == 2
    os.remove(cache_path(prepared, "pixel", "train"))
    assert cli.main(["train", "--model", "dct-mlp", "--out", str(tmp_path / "x")] + NO_BUDGET) == 2
    assert cli.main(["train", "--model", "dct-mlp", "--no-augment", "--out", str(tmp_path / "y")] + NO_BUDGET) == 0


def test_eval_rejects_bad_checkpoints(prepared, tmp_path):
    out = str(tmp_path / "run")
    assert cli.main(["train", "--model", "dct-mlp", "--out", out] + NO_BUDGET) == 0
    path = os.path.join(out, "dct_mlp.nnwt")
    truncated = tmp_path / "truncated.nnwt"
    with open(path, "rb") as f:
        truncated.write_bytes(f.read()[:-3])
    assert cli.main(["eval", "--weights", str(truncated), "--out", str(tmp_path / "e")]) == 3
    assert cli.main(["eval", "--weights", str(tmp_path / "nope.nnwt"), "--out", str(tmp_path / "e")]) == 2
    assert cli.main(["eval", "--weights", path, "--model", "lenet", "--out", str(tmp_path / "e")]) == 3


def test_bench_command(tmp_path):
    out = str(tmp_path / "bench")
    assert cli.main(["bench", "--n", "4", "8", "--iters", "3", "--out", out]) == 0
    with open(os.path.join(out, "bench.csv"), newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [r["n"] for r in rows] == ["4", "8"]
    assert cli.main(["bench", "--iters", "0", "--out", out]) == 2


def test_figures(prepared, tmp_path):
    out = str(tmp_path / "figures")
    which = ["dctgrid", "zigzag", "recon", "counts", "basis"]
    assert cli.main(["figures", "--which"] + which + ["--out", out]) == 0
    assert len(glob.glob(os.path.join(out, "digit_*.pgm"))) == 12
    assert len(glob.glob(os.path.join(out, "dct_*.pgm"))) == 12

    with open(os.path.join(out, "counts.csv"), newline="", encoding="utf-8") as f:
        counts = list(csv.DictReader(f))
    assert float(counts[0]["tau"]) == 0.0 and int(counts[0]["nonzero_count"]) <= 1024
    values = [int(r["nonzero_count"]) for r in counts]
    assert values == sorted(values, reverse=True)

    with open(os.path.join(out, "zigzag.csv"), newline="", encoding="utf-8") as f:
        zz = list(csv.DictReader(f))
    assert len(zz) == 1024 and (zz[0]["p"], zz[0]["q"]) == ("0", "0")

    with open(os.path.join(out, "recon.csv"), newline="", encoding="utf-8") as f:
        recon = list(csv.DictReader(f))
    assert recon[0]["tau"] == "0.0" and float(recon[0]["relative_l2_error"]) < 1e-9
    assert recon[-1]["name"] == "drop_30pct" and int(recon[-1]["zeroed"]) == 307

    first_basis = np.asarray(Image.open(os.path.join(out, "basis_00_p0_q0.pgm")))
    assert first_basis.shape == (32, 32) and np.all(first_basis == first_basis[0, 0])
    assert len(glob.glob(os.path.join(out, "basis_*.pgm"))) == 16


def test_kernel_figures(prepared, tmp_path):
    run = str(tmp_path / "lenet")
    assert cli.main(["train", "--model", "lenet", "--out", run] + NO_BUDGET) == 0
    out = str(tmp_path / "kernels")
    assert cli.main(["figures", "--which", "kernels", "--weights", os.path.join(run, "lenet.nnwt"),
                     "--out", out]) == 0
    assert len(glob.glob(os.path.join(out, "kernel_*.pgm"))) == 6
    assert len(glob.glob(os.path.join(out, "response_*.pgm"))) == 7
    assert cli.main(["figures", "--which", "kernels", "--out", out]) == 2


def test_figures_without_cache(tmp_path):
    assert cli.main(["figures", "--which", "recon", "--out", str(tmp_path / "f")]) == 2


def test_config_command(capsys):
    assert cli.main(["config"]) == 0
    assert "配置状态" in capsys.readouterr().out


def test_make_run_folder():
    folder = cli.make_run_folder("train dct/mlp")
    assert os.path.isdir(folder)
    assert os.path.basename(folder).endswith("_train_dctmlp")

