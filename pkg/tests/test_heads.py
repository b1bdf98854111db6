import math

import numpy as np
import pytest
import torch

from jmsc.data import FrameStore
from jmsc.heads import (
    BeamHead,
    LocalizationHead,
    RssiHead,
    TaskHeads,
    beam_loss,
    coarse_history,
    fuse_location,
    load_heads,
    localization_loss,
    save_heads,
    train_heads,
)
from jmsc.checkpoint import parameter_hash
from jmsc.jepa.pretrain import build_model
from jmsc.metrics import topn_accuracy
from jmsc.seeds import resolve_seeds

from conftest import tiny_config


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


class TestCoarse:
    def test_constant_velocity(self):
        hist = torch.tensor([[[-5.0, 0.0], [0.0, 0.0], [1.0, 0.0]]], dtype=torch.float64)
        want = torch.tensor([[[2.0, 0.0], [3.0, 0.0], [4.0, 0.0], [5.0, 0.0], [6.0, 0.0]]], dtype=torch.float64)
        assert torch.equal(coarse_history(hist, 5), want)

    def test_stationary(self):
        hist = torch.tensor([[[3.0, 4.0], [3.0, 4.0]]], dtype=torch.float64)
        assert torch.equal(coarse_history(hist, 5), torch.tensor([[3.0, 4.0]], dtype=torch.float64).expand(1, 5, 2))

    def test_bootstrap_rows_identical(self):
        head = LocalizationHead(8, 5)
        c = head.coarse(torch.randn(3, 5, 8), None)
        assert torch.equal(c, c[:, :1].expand_as(c))

    def test_needs_two_positions(self):
        with pytest.raises(ValueError):
            coarse_history(torch.zeros(1, 1, 2), 3)


class TestLocalization:
    def test_zero_residual_is_coarse(self):
        head = LocalizationHead(8, 5)
        head.zero_residual()
        s = torch.randn(2, 5, 8)
        hist = torch.randn(2, 8, 2, dtype=torch.float64) * 10
        assert torch.equal(head(s, hist), coarse_history(hist, 5))

    def test_loss(self):
        y = torch.randn(4, 5, 2, dtype=torch.float64)
        assert localization_loss(y, y).item() == 0.0
        assert localization_loss(torch.tensor([[1.0, 2.0]]), torch.zeros(1, 2)).item() == 3.0

    def test_fusion(self):
        s, y = torch.randn(2, 5, 8), torch.randn(2, 5, 2, dtype=torch.float64)
        f = fuse_location(s, y)
        assert f.shape == (2, 5, 10) and torch.equal(f[..., -2:], y)
        assert fuse_location(s, y, enabled=False).shape == (2, 5, 8)
        with pytest.raises(ValueError):
            fuse_location(s, y[:, :3])


class TestBeam:
    def test_logit_shape(self):
        assert BeamHead(130, 64, 32, loc_cols=True)(torch.randn(3, 5, 130)).shape == (3, 5, 64)

    def test_chance_level_untrained(self):
        k, n = 16, 2400
        head = BeamHead(10, k, 16, loc_cols=True)
        labels = torch.from_numpy(np.random.default_rng(0).permutation(np.arange(n) % k)).reshape(-1, 5)
        with torch.no_grad():
            logits = head(torch.randn(n // 5, 5, 10))
        acc = topn_accuracy(logits.numpy(), labels.numpy(), 1)
        assert abs(acc - 1 / k) < 3 * math.sqrt((1 / k) * (1 - 1 / k) / n)

    def test_saturated(self):
        labels = torch.tensor([[1, 3]])
        logits = torch.nn.functional.one_hot(labels, 4).double() * 1e6
        assert beam_loss(logits, labels).item() < 1e-6
        assert topn_accuracy(logits.numpy(), labels.numpy(), 1) == 1.0


class TestRssi:
    def test_persistence(self):
        head = RssiHead(10, 8, 6, 16, 5, loc_cols=True)
        head.zero_residual()
        rf_last = torch.rand(2, 6, dtype=torch.float64)
        power, rssi = head(torch.randn(2, 5, 10), torch.randn(2, 5, 8), rf_last)
        assert torch.equal(power, rf_last[:, None].expand(2, 5, 6))
        assert torch.allclose(rssi, rf_last.mean(-1, keepdim=True).expand(2, 5), atol=1e-15)

    def test_constant_spectrum(self):
        head = RssiHead(10, 8, 6, 16, 5, loc_cols=True)
        head.zero_residual()
        _, rssi = head(torch.randn(1, 5, 10), torch.randn(1, 5, 8), torch.full((1, 6), 0.37, dtype=torch.float64))
        assert torch.allclose(rssi, torch.full((1, 5), 0.37, dtype=torch.float64), atol=1e-15)


def test_train_save_load(tmp_path, tiny_data):
    cfg = tiny_config()
    seeds = resolve_seeds(cfg.seed)
    store = FrameStore.load(tiny_data, cfg)
    model = build_model(cfg, seeds["init"])
    h0 = parameter_hash(model)
    heads, curve, bb = train_heads(cfg, model, store, seeds)
    assert bb == h0 == parameter_hash(model)
    assert {c[0] for c in curve} == {"localization", "beam", "rssi"}
    assert len(curve) == 3 * cfg.heads.epochs
    paths = save_heads(tmp_path, cfg, heads, bb)
    assert [p.name for p in paths] == ["head_localization.jmsc", "head_beam.jmsc", "head_rssi.jmsc"]
    loaded, bb2 = load_heads(tmp_path, cfg)
    assert bb2 == bb
    assert parameter_hash(loaded) == parameter_hash(heads)


def test_task_heads_without_loc_aux():
    cfg = tiny_config(heads__loc_aux=False)
    heads = TaskHeads.from_config(cfg)
    assert heads.beam.proj.in_features == cfg.model.dim
