import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lama_ct import initnet, metrics, regnet, tomo
from lama_ct.initnet import ViewShiftOperator
from lama_ct.regnet import ConvLayer, RegularizerNet
from lama_ct.tomo import Geometry, ViewSelector


def sparse(rate, views, n=16, disk=False):
    g = Geometry(n, views)
    sel = ViewSelector(rate, views)
    if disk:
        full = tomo.disk_sinogram(g, radius=0.6)
    else:
        full = tomo.project(tomo.shepp_logan(n), g)
    return g, sel, full, tomo.select(full, sel)


def test_operator_validation():
    with pytest.raises(ValueError):
        ViewShiftOperator("cubic", 2)
    with pytest.raises(ValueError):
        ViewShiftOperator("nearest", 0)
    with pytest.raises(ValueError):
        ViewShiftOperator("learned", 2)
    two_out = RegularizerNet((ConvLayer(np.zeros((2, 1, 3, 3))),))
    with pytest.raises(ValueError):
        ViewShiftOperator("learned", 2, two_out)


def test_assembly_validation():
    g, sel, _, s0 = sparse(3, 24)
    with pytest.raises(ValueError):
        initnet.assemble_full(ViewShiftOperator("nearest", 2), s0, sel)
    with pytest.raises(ValueError):
        initnet.assemble_full(ViewShiftOperator("nearest", 3), s0[:-1], sel)
    with pytest.raises(ValueError):
        initnet.assemble_full(ViewShiftOperator("nearest", 3), s0, ViewSelector(3, 24, offset=1))


def test_nearest_repeats_measured_views():
    g, sel, _, s0 = sparse(4, 32)
    full = initnet.assemble_full(ViewShiftOperator("nearest", 4), s0, sel)
    for i in range(4):
        np.testing.assert_array_equal(full[i::4], s0)


def test_rate_one_is_identity():
    g, sel, full, s0 = sparse(1, 20)
    for kind in ("nearest", "linear-interp"):
        np.testing.assert_array_equal(initnet.assemble_full(ViewShiftOperator(kind, 1), s0, sel), full)


def test_linear_interp_exact_on_disk():
    # a centred disk has the same projection at every angle
    g, sel, full, s0 = sparse(4, 48, disk=True)
    got = initnet.assemble_full(ViewShiftOperator("linear-interp", 4), s0, sel)
    np.testing.assert_array_equal(got, full)


def test_linear_interp_weights():
    g, sel, _, s0 = sparse(4, 32)
    op = ViewShiftOperator("linear-interp", 4)
    full = initnet.assemble_full(op, s0, sel)
    nxt = np.vstack((s0[1:], s0[:1, ::-1]))
    for i in range(4):
        np.testing.assert_allclose(full[i::4], (1 - i / 4) * s0 + (i / 4) * nxt, rtol=0, atol=1e-12)
    # each skipped view lies between its neighbours
    lo, hi = np.minimum(s0, nxt), np.maximum(s0, nxt)
    for i in range(1, 4):
        assert np.all(full[i::4] >= lo - 1e-12) and np.all(full[i::4] <= hi + 1e-12)


def test_linear_interp_beats_nearest_on_phantom():
    g, sel, full, s0 = sparse(4, 64, n=32)
    errs = {}
    for kind in ("nearest", "linear-interp"):
        est = initnet.assemble_full(ViewShiftOperator(kind, 4), s0, sel)
        errs[kind] = metrics.rmse_sinogram(est, full)
    assert errs["linear-interp"] < errs["nearest"]


@given(rate=st.sampled_from([1, 2, 3, 4, 6]), kind=st.sampled_from(["nearest", "linear-interp", "learned"]))
def test_measured_views_are_kept(rate, kind):
    views = 12 * rate
    g, sel, _, s0 = sparse(rate, views, n=8)
    net = RegularizerNet((ConvLayer(np.full((1, 1, 3, 3), 0.01)),))
    op = ViewShiftOperator(kind, rate, net if kind == "learned" else None)
    np.testing.assert_array_equal(tomo.select(initnet.assemble_full(op, s0, sel), sel), s0)


def test_zero_input_gives_zero():
    g, sel, _, s0 = sparse(4, 32)
    x0, z0 = initnet.init_reconstruct(ViewShiftOperator("linear-interp", 4), np.zeros_like(s0), sel, g)
    assert not np.any(x0) and not np.any(z0)


def test_learned_residual_steps():
    g, sel, _, s0 = sparse(2, 24)
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 0.5
    # a positive centre tap with a tiny knee scales positive sinogram values
    op = ViewShiftOperator("learned", 2, RegularizerNet((ConvLayer(k),), activation_knee=1e-12))
    pos = np.abs(s0) + 1.0
    step = initnet.interp_step(op, pos)
    np.testing.assert_allclose(step, pos + regnet.feature_forward(op.net, pos)[0])
    np.testing.assert_allclose(initnet.view_shift(op, pos, 2), initnet.interp_step(op, step))
    zero = ViewShiftOperator("learned", 2, regnet.zero_net())
    np.testing.assert_array_equal(initnet.view_shift(zero, s0, 3), s0)


def test_init_improves_on_zero_filled_fbp():
    g, sel, _, s0 = sparse(4, 64, n=32, disk=True)
    truth = tomo.disk_phantom(32, radius=0.6)
    x0, _ = initnet.init_reconstruct(ViewShiftOperator("linear-interp", 4), s0, sel, g)
    zero_filled = tomo.fbp(tomo.embed(s0, sel), g)
    assert metrics.psnr(x0, truth) >= metrics.psnr(zero_filled, truth)
