"""桌面规模的完整训练，需要真实 MNIST，耗时几十分钟：pytest -m slow"""

import pytest

import cli

pytestmark = [pytest.mark.mnist, pytest.mark.slow]


@pytest.fixture
def prepared_mnist(mnist_dir):
    assert cli.main(["prepare", "--mnist-dir", mnist_dir, "--tau", "0.02", "--quiet"]) == 0


@pytest.mark.parametrize("kind, floor", [("dct-mlp", 97.0), ("lenet", 98.0)])
def test_desk_training_accuracy(prepared_mnist, tmp_path, kind, floor):
    from dctnet import commands

    result = commands.cmd_train(model_kind=kind, out_dir=str(tmp_path / kind), preset="desk", seed=1,
                                verbose=False)
    assert result["ok"]
    assert result["accuracy"] >= floor
