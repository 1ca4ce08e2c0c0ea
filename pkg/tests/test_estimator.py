import numpy as np
import pytest

from aquaforge.core import DataError
from aquaforge.estimator import (
    ArchConfig,
    CheckpointError,
    ModelParams,
    forward,
    forward_backward,
    init,
    load,
    param_count,
    save,
)
from aquaforge.estimator.checkpoint import from_bytes, to_bytes
from aquaforge.estimator.layers import upsample_matrix
from aquaforge.losses import FINETUNE_WEIGHTS, Example, LossWeights
from oracles import fd_gradient_check

TINY = ArchConfig(num_enc_blocks=2, num_dec_blocks=2, base_channels=3, patch_size=8)


def closed_form_count(cfg):
    ch = [min(cfg.base_channels * 2**i, cfg.max_channels) for i in range(cfg.num_enc_blocks)]

    def block(ci, co):
        n = 9 * ci * co + co + 9 * co * co + co
        return n + (ci * co if cfg.use_shortcut and ci != co else 0)

    total, c_in = 0, 3
    for c in ch:
        total += block(c_in, c)
        c_in = c
    prev = ch[-1]
    for c in reversed(ch):
        total += block(prev + (c if cfg.use_skip else 0), c)
        prev = c
    return total + 3 * ch[0] + 3


def make_batch(n, size, seed, with_targets=True):
    g = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        I, J, B = g.random((3, size, size, 3))
        t = g.uniform(0.05, 1, (size, size, 3))
        out.append(Example(I=I, J=J, t=t if with_targets else None, B=B if with_targets else None))
    return out


def test_default_param_count():
    assert param_count(ArchConfig()) == 247787 == closed_form_count(ArchConfig())


@pytest.mark.parametrize("cfg", [
    TINY,
    ArchConfig(num_enc_blocks=3, num_dec_blocks=3, base_channels=4, max_channels=8, patch_size=8),
    ArchConfig(use_skip=False, use_shortcut=False),
    ArchConfig(base_channels=1, patch_size=16),
])
def test_param_count_closed_form(cfg):
    assert param_count(cfg) == closed_form_count(cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        ArchConfig(num_enc_blocks=3, num_dec_blocks=4)
    with pytest.raises(ValueError):
        ArchConfig(patch_size=24)
    assert ArchConfig.full_scale().channels() == [64, 128, 256, 512]


def test_init_deterministic_and_biases_zero():
    a, b = init(TINY, 5), init(TINY, 5)
    assert a.equals(b)
    assert not a.equals(init(TINY, 6))
    from aquaforge.estimator import layout

    for s in layout(TINY).values():
        if s.name.endswith(".b"):
            assert not np.any(a.J[s.offset:s.offset + s.size])


def test_heads_do_not_share_parameters():
    p = init(TINY, 0)
    assert not np.array_equal(p.J, p.B) and not np.array_equal(p.B, p.T)


def test_smallest_config_runs():
    cfg = ArchConfig(base_channels=1, patch_size=16)
    pred = forward(init(cfg, 0), np.random.default_rng(0).random((16, 16, 3)))
    assert pred.J.shape == (16, 16, 3)


def test_forward_shapes_and_ranges():
    p = init(TINY, 1)
    x = np.random.default_rng(2).random((16, 24, 3))
    pred = forward(p, x)
    for f in (pred.J, pred.B, pred.t):
        assert f.shape == x.shape
    assert np.all((pred.J >= 0) & (pred.J <= 1))
    assert np.all((pred.t >= 0.05) & (pred.t <= 1))


def test_zero_network_gives_constant_outputs():
    p = init(TINY, 1).map(np.zeros_like)
    pred = forward(p, np.random.default_rng(0).random((8, 8, 3)))
    assert np.all(pred.J == 0.5) and np.all(pred.B == 0.5)
    assert np.allclose(pred.t, 0.05 + 0.95 * 0.5)


def test_forward_deterministic():
    p = init(TINY, 3)
    x = np.random.default_rng(0).random((8, 8, 3))
    a, b = forward(p, x), forward(p, x)
    assert np.array_equal(a.J, b.J) and np.array_equal(a.t, b.t)


def test_forward_rejects_indivisible_size():
    with pytest.raises(DataError, match="divisible by 4"):
        forward(init(TINY, 0), np.zeros((10, 8, 3)))


def test_upsample_matrix_rows_sum_to_one():
    for n in (1, 2, 5):
        m = upsample_matrix(n)
        assert m.shape == (2 * n, n)
        assert np.allclose(m.sum(axis=1), 1.0)
    assert np.allclose(upsample_matrix(2), [[1, 0], [0.75, 0.25], [0.25, 0.75], [0, 1]])


def test_zero_weights_zero_loss_and_grad():
    p = init(TINY, 0)
    loss, g = forward_backward(p, make_batch(2, 8, 0), LossWeights(0, 0, 0, 0))
    assert loss == 0.0
    assert not np.any(g.flat())


def test_duplicated_batch_has_same_loss_and_grad():
    p = init(TINY, 0)
    batch = make_batch(2, 8, 1)
    l1, g1 = forward_backward(p, batch, LossWeights())
    l2, g2 = forward_backward(p, batch + batch, LossWeights())
    assert l1 == pytest.approx(l2, rel=1e-13)
    assert np.allclose(g1.flat(), g2.flat(), rtol=1e-10, atol=1e-16)


def test_batch_permutation_invariance():
    p = init(TINY, 0)
    batch = make_batch(3, 8, 2)
    l1, g1 = forward_backward(p, batch, LossWeights())
    l2, g2 = forward_backward(p, batch[::-1], LossWeights())
    assert l1 == pytest.approx(l2, rel=1e-13)
    assert np.allclose(g1.flat(), g2.flat(), rtol=1e-10, atol=1e-16)


def test_non_finite_loss_names_the_term():
    from aquaforge.losses import NonFiniteLoss

    batch = make_batch(1, 8, 0)
    batch[0].B[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLoss, match="L_B"):
        forward_backward(init(TINY, 0), batch, LossWeights())


@pytest.mark.parametrize("weights,heads", [
    (LossWeights(1, 0, 0, 0), (0,)),
    (LossWeights(0, 1, 0, 0), (1,)),
    (LossWeights(0, 0, 1, 0), (2,)),
    (LossWeights(0, 0, 0, 1), (0, 1, 2)),
])
def test_gradient_matches_finite_differences(weights, heads):
    p = init(TINY, 4)
    central, one_sided = fd_gradient_check(p, make_batch(2, 8, 5), weights, 40, seed=6, heads=heads)
    assert len(central) == 40
    assert max(central) <= 1e-3
    assert all(e <= 1e-3 for e in one_sided)


def test_finetune_weights_isolate_terms():
    p = init(TINY, 7)
    batch = make_batch(2, 8, 8, with_targets=False)
    _, g = forward_backward(p, batch, FINETUNE_WEIGHTS)
    _, gj = forward_backward(p, batch, LossWeights(1, 0, 0, 0))
    _, gi = forward_backward(p, batch, LossWeights(0, 0, 0, 1))
    assert np.allclose(g.flat(), gj.flat() + gi.flat(), rtol=1e-12, atol=1e-18)
    # clean-image supervision reaches only the J head ...
    assert not np.any(gj.B) and not np.any(gj.T)
    # ... while B and T still learn through the recomposition term
    assert np.any(g.B) and np.any(g.T)


def test_supervision_without_targets_is_an_error():
    with pytest.raises(ValueError):
        forward_backward(init(TINY, 0), make_batch(1, 8, 0, with_targets=False), LossWeights())


def test_checkpoint_round_trip(tmp_path):
    p = init(TINY, 9)
    path = tmp_path / "m.aqck"
    save(p, path)
    raw = path.read_bytes()
    assert raw[:4] == b"AQCK"
    q = load(path)
    assert q.config == p.config and q.seed == 9
    assert np.array_equal(q.J, p.J.astype(np.float32))
    assert to_bytes(q) == raw
    assert to_bytes(from_bytes(to_bytes(q))) == raw


def test_checkpoint_corruption_detected(tmp_path):
    raw = bytearray(to_bytes(init(TINY, 0)))
    raw[40] ^= 0xFF
    with pytest.raises(CheckpointError, match="CRC"):
        from_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load(tmp_path / "missing.aqck")


def test_model_params_flat_round_trip():
    p = init(TINY, 1)
    assert ModelParams.from_flat(p, p.flat()).equals(p)
