import csv

import numpy as np
import pytest

from dctnet import bench
from dctnet.dct_core import build_dct_matrix, forward_dct
from dctnet.errors import InvalidArgumentError


def test_kernels_match_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.random((5, 7)), rng.random((7, 3))
    out = np.empty((5, 3))
    bench.matmul_into(a, b, out)
    np.testing.assert_allclose(out, a @ b, atol=1e-12)

    m, v = rng.random((6, 4)), rng.random(4)
    projected = np.empty(6)
    bench.dense_project(m, v, projected)
    np.testing.assert_allclose(projected, m @ v, atol=1e-12)

    t = build_dct_matrix(8)
    patch = rng.random((8, 8))
    result = np.empty((8, 8))
    bench.separable_transform(np.ascontiguousarray(t.entries), np.ascontiguousarray(t.T), patch,
                              np.empty((8, 8)), result)
    np.testing.assert_allclose(result, forward_dct(patch, t), atol=1e-12)


@pytest.mark.parametrize("n", [4, 8, 32])
def test_dense_and_separable_agree(n):
    assert bench.correctness_check(n) <= 1e-9


def test_small_report_and_csv(tmp_path):
    report = bench.run_bench(n=8, iters=5, warmup=1)
    assert report.dense_mults == 4096 and report.separable_mults == 1024
    assert report.dense_ns > 0 and report.separable_ns > 0
    assert report.max_abs_error <= 1e-9
    path = bench.write_bench_csv([report], str(tmp_path / "bench.csv"))
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["n"] == "8" and int(rows[0]["dense_mults"]) == 4096
    assert "加速比" in bench.format_table([report])
    with pytest.raises(InvalidArgumentError):
        bench.run_bench(n=8, iters=0)


@pytest.mark.slow
def test_separable_is_faster_at_32():
    report = bench.run_bench(n=32, iters=100)
    assert report.dense_mults / report.separable_mults == 16
    assert report.speedup >= 4.0
