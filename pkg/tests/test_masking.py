"""Checkerboard mask construction, application, and recombination."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diff3m.masking import apply_masks, make_mask_pair, recombine


def test_checkerboard_phase():
    pair = make_mask_pair(4, 4, 0, 10)
    assert pair.m1[0, 0] == 0
    assert pair.m1[0, 1] == 1
    assert pair.m1[1, 0] == 1
    np.testing.assert_array_equal(pair.m1 + pair.m2, np.ones((4, 4)))


def test_t_zero_scaled_equals_binary():
    pair = make_mask_pair(5, 3, 0, 8)
    np.testing.assert_array_equal(pair.m1_scaled, pair.m1)
    np.testing.assert_array_equal(pair.m2_scaled, pair.m2)


def test_t_equals_T_scaled_all_ones():
    pair = make_mask_pair(6, 6, 12, 12)
    np.testing.assert_array_equal(pair.m1_scaled, np.ones((6, 6)))
    np.testing.assert_array_equal(pair.m2_scaled, np.ones((6, 6)))


def test_invalid_arguments_rejected():
    with pytest.raises(ValueError):
        make_mask_pair(4, 4, 0, 0)
    with pytest.raises(ValueError):
        make_mask_pair(0, 4, 0, 5)
    with pytest.raises(ValueError):
        make_mask_pair(4, 4, 6, 5)


def test_apply_full_scale_passes_through():
    x = np.random.default_rng(0).standard_normal((4, 4))
    pair = make_mask_pair(4, 4, 7, 7)
    x1, x2 = apply_masks(x, pair)
    np.testing.assert_array_equal(x1, x)
    np.testing.assert_array_equal(x2, x)


def test_apply_binary_scale_on_constant_image():
    pair = make_mask_pair(4, 4, 0, 9)
    x1, _ = apply_masks(np.ones((4, 4)), pair)
    np.testing.assert_array_equal(x1, pair.m1)


def test_apply_half_scale_attenuates_masked_sites():
    pair = make_mask_pair(2, 2, 5, 10)
    v = 0.8
    x1, _ = apply_masks(np.full((2, 2), v), pair)
    assert x1[0, 0] == pytest.approx(0.5 * v)  # m1[0,0] = 0, attenuated to s*v
    assert x1[0, 1] == pytest.approx(v)


def test_apply_shape_mismatch_rejected():
    pair = make_mask_pair(4, 4, 1, 10)
    with pytest.raises(ValueError, match="spatial"):
        apply_masks(np.ones((3, 3)), pair)
    with pytest.raises(ValueError):
        recombine(np.ones((4, 4)), np.ones((4, 5)), pair)


def test_recombine_identical_branches_is_identity():
    rng = np.random.default_rng(1)
    y = rng.standard_normal((6, 6))
    pair = make_mask_pair(6, 6, 3, 9)
    np.testing.assert_array_equal(recombine(y, y, pair), y)


def test_recombine_ones_zero_selects_m2():
    pair = make_mask_pair(4, 4, 2, 8)
    out = recombine(np.ones((4, 4)), np.zeros((4, 4)), pair)
    np.testing.assert_array_equal(out, pair.m2)


def test_recombine_every_pixel_from_exactly_one_branch():
    # oracle: re-derive the selection directly from the parity definition
    rng = np.random.default_rng(2)
    y1 = rng.standard_normal((5, 7))
    y2 = rng.standard_normal((5, 7))
    pair = make_mask_pair(5, 7, 4, 16)
    out = recombine(y1, y2, pair)
    for i in range(5):
        for j in range(7):
            expected = y1[i, j] if (i + j) % 2 == 0 else y2[i, j]
            assert out[i, j] == expected


def test_batched_images_broadcast_over_masks():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 4))
    pair = make_mask_pair(4, 4, 1, 4)
    x1, x2 = apply_masks(x, pair)
    np.testing.assert_array_equal(x1[1], x[1] * pair.m1_scaled)
    np.testing.assert_array_equal(x2[0], x[0] * pair.m2_scaled)


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(1, 8),
    w=st.integers(1, 8),
    t=st.integers(0, 12),
)
def test_mask_invariants_property(h, w, t):
    T = 12
    pair = make_mask_pair(h, w, t, T)
    s = t / T
    np.testing.assert_array_equal(pair.m1 + pair.m2, np.ones((h, w)))
    assert np.all(pair.m1_scaled >= s - 1e-15)
    assert np.all(pair.m1_scaled <= 1.0 + 1e-15)
    assert np.all(pair.m2_scaled >= s - 1e-15)
    # coverage: each pixel attenuated in exactly one branch when s < 1
    if s < 1:
        attenuated_1 = pair.m1_scaled < 1.0
        attenuated_2 = pair.m2_scaled < 1.0
        np.testing.assert_array_equal(attenuated_1 ^ attenuated_2, np.ones((h, w), bool))
    y = np.random.default_rng(0).standard_normal((h, w))
    np.testing.assert_array_equal(recombine(y, y, pair), y)


def test_attenuation_monotone_in_t():
    T = 10
    factors = [make_mask_pair(2, 2, t, T).m1_scaled[0, 0] for t in range(T + 1)]
    assert all(b > a for a, b in zip(factors, factors[1:]))
    assert factors[0] == 0.0 and factors[-1] == 1.0


def test_memoization_returns_same_object():
    a = make_mask_pair(8, 8, 3, 10)
    b = make_mask_pair(8, 8, 3, 10)
    assert a is b
