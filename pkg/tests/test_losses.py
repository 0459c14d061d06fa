import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitcarve.carve import color_loss, mask_loss, normal_loss, total_loss


def unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_views(rng, n=3, h=5, w=4):
    masks = [rng.uniform(0, 1, (h, w)) for _ in range(n)]
    normals = [unit(rng.standard_normal((h, w, 3))) for _ in range(n)]
    return masks, normals


def test_mask_loss_examples():
    m = np.ones((4, 4))
    assert mask_loss([m], [m]).value == 0
    assert mask_loss([np.zeros((2, 2))], [np.ones((2, 2))]).value == 4


def test_mask_loss_reference_and_gradient(rng):
    pred, _ = random_views(rng)
    target, _ = random_views(rng)
    term = mask_loss(pred, target)
    ref = sum(((t - p) ** 2).sum() for p, t in zip(pred, target))
    assert term.value == pytest.approx(ref, rel=1e-12)
    h = 1e-4
    for k, (i, j) in enumerate([(0, 0), (2, 3), (4, 1)]):
        v = k % 3
        up = [p.copy() for p in pred]
        dn = [p.copy() for p in pred]
        up[v][i, j] += h
        dn[v][i, j] -= h
        fd = (mask_loss(up, target).value - mask_loss(dn, target).value) / (2 * h)
        assert fd == pytest.approx(term.grads[v][i, j], abs=1e-8)


def test_normal_loss_examples():
    n_hat = np.array([[[0.0, 0.0, -1.0]]])
    n = np.array([[[0.0, 0.0, 1.0]]])
    assert normal_loss([n_hat], [n], [np.ones((1, 1))]).value == pytest.approx(4)


def test_normal_loss_ignores_outside_mask(rng):
    _, (a, b) = random_views(rng, n=2)
    mask = np.zeros(a.shape[:2])
    mask[1:3, 1:3] = 1
    b = b.copy()
    b[1:3, 1:3] = a[1:3, 1:3]
    term = normal_loss([b], [a], [mask])
    assert term.value == 0
    assert not term.grads[0].any()


def test_normal_loss_matches_pixel_loop(rng):
    masks, target = random_views(rng)
    _, pred = random_views(rng)
    term = normal_loss(pred, target, masks)
    ref, grads = 0.0, []
    for m, t, p in zip(masks, target, pred):
        g = np.zeros_like(p)
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                r = t[i, j] - p[i, j]
                ref += m[i, j] * float(r @ r)
                g[i, j] = -2 * m[i, j] * r
        grads.append(g)
    assert term.value == pytest.approx(ref, rel=1e-12)
    for g, ref_g in zip(term.grads, grads):
        np.testing.assert_allclose(g, ref_g, atol=1e-15)


@pytest.mark.parametrize("parts,expected", [((0, 0), 0), ((4, 4), 8), ((1.5, 2.25), 3.75)])
def test_total_loss(parts, expected):
    assert total_loss(*parts) == expected


def test_total_loss_rejects_nan():
    with pytest.raises(ValueError, match="non-finite"):
        total_loss(np.nan, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_losses_nonnegative_and_view_order_free(seed, n):
    rng = np.random.default_rng(seed)
    masks, target = random_views(rng, n)
    _, pred = random_views(rng, n)
    perm = rng.permutation(n)
    a = normal_loss(pred, target, masks).value
    b = normal_loss([pred[i] for i in perm], [target[i] for i in perm], [masks[i] for i in perm]).value
    assert a >= 0 and a == pytest.approx(b, rel=1e-12)
    c = mask_loss(masks, [m[::-1] for m in masks]).value
    d = mask_loss([masks[i] for i in perm], [masks[i][::-1] for i in perm]).value
    assert c >= 0 and c == pytest.approx(d, rel=1e-12)
    assert mask_loss(masks, masks).value == 0


def test_color_loss_reports_both_forms(rng):
    masks, _ = random_views(rng, 2)
    pred = [rng.uniform(0, 1, (5, 4, 3)) for _ in range(2)]
    target = [rng.uniform(0, 1, (5, 4, 3)) for _ in range(2)]
    cl = color_loss(pred, target, masks)
    sq = sum((m[..., None] * (t - p) ** 2).sum() for m, t, p in zip(masks, target, pred))
    un = sum((m * np.linalg.norm(t - p, axis=-1)).sum() for m, t, p in zip(masks, target, pred))
    assert cl.squared == pytest.approx(sq)
    assert cl.unsquared == pytest.approx(un)


@pytest.mark.parametrize(
    "fn,args",
    [
        (mask_loss, ([np.zeros((2, 2))], [np.zeros((2, 3))])),
        (mask_loss, ([np.zeros((2, 2))], [])),
        (normal_loss, ([np.zeros((2, 2, 3))], [np.zeros((2, 2, 3))], [np.zeros((3, 2))])),
    ],
)
def test_dimension_mismatch(fn, args):
    with pytest.raises(ValueError):
        fn(*args)
