import numpy as np
import pytest

import oracles
from hift import tensor as T
from hift.correlation import (Correlation, flatten_locations, project_and_flatten,
                              unflatten_locations, xcorr)
from hift.errors import ShapeError
from hift.nn import Linear


def test_zero_template_gives_zero_map(rng):
    out = xcorr(np.zeros((2, 3, 3)), rng.standard_normal((2, 6, 6)))
    assert out.shape == (2, 4, 4) and not out.data.any()


def test_unit_template_is_identity(rng):
    s = rng.standard_normal((1, 5, 7))
    assert np.array_equal(xcorr(np.ones((1, 1, 1)), s).data, s)


@pytest.mark.parametrize("seed", range(10))
def test_xcorr_matches_sliding_loop(seed):
    r = np.random.default_rng(seed)
    c, h, w = 2, 3, 3 - seed % 2
    t = r.standard_normal((c, h, w))
    s = r.standard_normal((c, 6, 6 + seed % 3))
    got = xcorr(t, s).data
    assert np.abs(got - oracles.xcorr(t, s)).max() <= 1e-10


def test_xcorr_batched_matches_per_item(rng):
    t = rng.standard_normal((3, 2, 3, 3))
    s = rng.standard_normal((3, 2, 7, 7))
    out = xcorr(t, s).data
    for i in range(3):
        assert np.allclose(out[i], oracles.xcorr(t[i], s[i]), atol=1e-12)


def test_template_larger_than_search():
    with pytest.raises(ShapeError):
        xcorr(np.zeros((1, 4, 4)), np.zeros((1, 3, 5)))


@pytest.mark.parametrize("dx,dy", [(0, 0), (2, 1), (-1, 3), (3, -2)])
def test_peak_follows_translation(dx, dy):
    t = np.zeros((1, 3, 3))
    t[0, 1, 1] = 1.0
    t[0, 0, 2] = 0.5
    s = np.zeros((1, 12, 12))
    y0, x0 = 4, 4
    s[0, y0:y0 + 3, x0:x0 + 3] = t[0]
    base = np.unravel_index(np.argmax(xcorr(t, s).data[0]), (10, 10))
    shifted = np.roll(s, (dy, dx), axis=(1, 2))
    peak = np.unravel_index(np.argmax(xcorr(t, shifted).data[0]), (10, 10))
    assert (peak[0] - base[0], peak[1] - base[1]) == (dy, dx)


def test_flatten_row_convention_and_round_trip(rng):
    raw = rng.standard_normal((3, 4, 5))
    seq = flatten_locations(raw).data
    assert seq.shape == (20, 3)
    for r in range(20):
        assert np.array_equal(seq[r], raw[:, r // 5, r % 5])
    assert np.array_equal(unflatten_locations(seq, 4, 5).data, raw)


def test_identity_projection_is_a_permutation(rng):
    raw = rng.standard_normal((3, 2, 2))
    proj = Linear(3, 3, rng)
    proj.weight.data = np.eye(3)
    out = project_and_flatten(raw, proj).data
    assert sorted(out.ravel()) == sorted(raw.ravel())


def test_zero_projection(rng):
    proj = Linear(3, 4, rng)
    proj.weight.data[:] = 0
    assert not project_and_flatten(rng.standard_normal((3, 2, 2)), proj).data.any()


def test_projection_gather_oracle(rng):
    raw = rng.standard_normal((3, 4, 4))
    proj = Linear(3, 5, rng)
    proj.bias.data = rng.standard_normal(5)
    out = project_and_flatten(raw, proj).data
    for r in range(16):
        i, j = divmod(r, 4)
        want = sum(raw[c, i, j] * proj.weight.data[c] for c in range(3)) + proj.bias.data
        assert np.allclose(out[r], want, atol=1e-12)


def test_correlation_maps_share_shape():
    from hift.backbone import Backbone, BackboneConfig

    cfg = BackboneConfig(channels=(4, 5, 6), stem_channels=(3, 3), template_size=40, search_size=60)
    r = np.random.default_rng(0)
    net, corr = Backbone(cfg, r), Correlation(cfg.channels, 8, r)
    maps = corr(net(r.standard_normal((3, 40, 40))), net(r.standard_normal((3, 60, 60))))
    side = cfg.map_size
    assert maps.width == maps.height == side
    for m in (maps.m3, maps.m4, maps.m5):
        assert m.shape == (1, side * side, 8)
