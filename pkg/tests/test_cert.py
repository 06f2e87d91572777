import itertools
import math

import numpy as np
import pytest

from syncert.cert import (
    JacobianBound,
    certify,
    certify_box,
    certify_hull_cone,
    certify_secant_diagonal,
    cyclic_permutation,
    cyclic_secant,
    diagonal_stability_transfer,
    reduced_matrix,
    secant_criterion,
    secant_threshold,
    verify_certificate,
)
from syncert.errors import InputError
from syncert.linalg import eigvals, is_negative_definite
from syncert.ringosc import RingOscillatorParams, box_bound


def ring(ab, eta=(1.0, 1.0, 1.0)):
    return box_bound(RingOscillatorParams(eta, ab, np.ones(len(ab)), np.zeros(len(ab))))


def test_reduced_matrix_examples():
    np.testing.assert_array_equal(reduced_matrix(np.zeros((3, 3)), [1, 2, 3]), np.diag([-1.0, -2, -3]))
    z = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(reduced_matrix(z, np.zeros(3)), z)


def test_reduced_matrix_ring_block():
    eta, lam = np.array([0.7, 1.1, 1.3]), np.array([0.2, 0.5, 0.0])
    b = ring([1.0, 1.0, 1.0], eta)
    m = b.augmented(lam)
    np.testing.assert_allclose(np.diag(m[:3, :3]), -eta - lam)


def test_hull_single_stable_vertex():
    c = certify_hull_cone(JacobianBound.hull_cone([-np.eye(2)]), np.zeros(2))
    assert c.ok
    assert c.epsilon == pytest.approx(2.0 * eigvals(c.P)[0], rel=1e-6)
    np.testing.assert_allclose(c.P, np.eye(2), atol=1e-6)


def test_hull_unstable_vertex_fails():
    assert not certify_hull_cone(JacobianBound.hull_cone([np.diag([1.0, -1.0])]), np.zeros(2)).ok


def test_hull_cone_generator():
    b = JacobianBound.hull_cone([-np.eye(2)], [np.array([[-1.0, 0.0], [0.0, 0.0]])])
    c = certify_hull_cone(b, np.zeros(2))
    assert c.ok and verify_certificate(c, b).ok


def test_secant_threshold_three():
    assert abs(secant_threshold(3) - 8.0) <= 1e-12


def test_secant_examples():
    ok, ratio, th = secant_criterion([1, 1, 1], [2, 2, 1.9], [0, 0, 0])
    assert ok and ratio == pytest.approx(7.6) and th == pytest.approx(8.0)
    ok, ratio, _ = secant_criterion([1, 1, 1], [3, 3, 7], [1, 1, 1])
    assert ok and ratio == pytest.approx(7.875)
    ok, ratio, _ = secant_criterion([1, 1, 1], [2, 2, 2], [0, 0, 0])
    assert ratio == 8.0 and not ok


def test_box_example_below_threshold_certified():
    """Ratio 7.6 with unit poles is stated to be certifiable."""
    assert certify_box(ring([2.0, 2.0, 1.9]), np.zeros(3)).ok


def test_box_example_above_threshold_fails():
    assert not certify_box(ring([2.0, 2.0, 2.1]), np.zeros(3)).ok


def test_box_without_terms_is_single_vertex():
    a0 = np.array([[-1.0, 3.0], [0.0, -2.0]])
    box = certify_box(JacobianBound.box(a0), np.zeros(2))
    hull = certify_hull_cone(JacobianBound.hull_cone([a0]), np.zeros(2))
    assert box.ok and hull.ok


@pytest.mark.parametrize("ratio", [0.5, 1.5, 2.2, 3.5, 6.0, 12.0])
def test_box_and_hull_agree_away_from_gap(ratio):
    g = ratio ** (1 / 3)
    b = ring([g, g, g])
    assert certify_box(b, np.zeros(3)).ok == certify(b, np.zeros(3), method="hull_cone").ok


def test_box_implies_hull():
    rng = np.random.default_rng(3)
    for _ in range(8):
        b = ring(rng.uniform(0.5, 2.0, 3), rng.uniform(0.5, 1.5, 3))
        lam = rng.uniform(0, 1, 3)
        if certify_box(b, lam).ok:
            assert certify(b, lam, method="hull_cone").ok


def test_box_certificate_reverifies():
    b = ring([1.2, 0.9, 1.1], [1.0, 0.8, 1.2])
    lam = np.array([0.6, 0.3, 0.0])
    c = certify_box(b, lam, require_commutation=[0, 1])
    assert c.ok and all(c.commutation_checked.values())
    v = verify_certificate(c, b, samples=200)
    assert v.ok and v.worst <= -c.epsilon + 1e-6


def test_box_margin_matches_vertex_aggregate():
    b = ring([1.0, 1.3, 0.8])
    lam = np.array([0.4, 0.2, 0.1])
    c = certify_box(b, lam)
    worst = max(is_negative_definite(c.P @ reduced_matrix(J, lam) + reduced_matrix(J, lam).T @ c.P)[1]
                for J in b.vertices())
    assert abs(-worst - c.epsilon) <= 1e-9


def test_commutation_forces_zero_rows():
    c = certify_box(ring([1.0, 1.0, 1.0]), np.array([1.0, 1.0, 0.0]), require_commutation=[0])
    assert c.ok
    assert c.P[0, 1] == 0.0 and c.P[0, 2] == 0.0


def test_cyclic_permutation_identity_for_cyclic_matrix():
    m = np.array([[-1.0, 0.0, -2.0], [1.0, -1.0, 0.0], [0.0, 3.0, -1.0]])
    G, mt, order = cyclic_permutation(m)
    np.testing.assert_array_equal(G, np.eye(3))
    assert order == [0, 1, 2]


def _is_cyclic(mt):
    d = len(mt)
    allowed = np.eye(d, dtype=bool)
    allowed[np.arange(1, d), np.arange(d - 1)] = True
    allowed[0, d - 1] = True
    return not np.any((mt != 0) & ~allowed)


def literal_ring_m(eta, ab, lam):
    """The 6x6 augmented ring-oscillator matrix with auxiliary state k reading stage k."""
    m = np.zeros((6, 6))
    m[:3, :3] = np.diag(-np.asarray(eta) - np.asarray(lam))
    m[0, 5], m[1, 3], m[2, 4] = -ab[0], ab[1], ab[2]
    m[3:, :3] = np.eye(3)
    m[3:, 3:] = -np.eye(3)
    return m


def test_ring_augmented_interleaving():
    m = literal_ring_m([1.0, 1.2, 0.8], [1.5, 0.9, 1.1], [0.3, 0.2, 0.0])
    G, mt, order = cyclic_permutation(m)
    assert _is_cyclic(mt)
    assert [i + 1 for i in order] == [1, 4, 2, 5, 3, 6]
    np.testing.assert_array_equal(G.T @ mt @ G, m)
    # exhaustive search over all 6! orderings confirms this one is cyclic
    valid = {p for p in itertools.permutations(range(6))
             if _is_cyclic(np.eye(6)[list(p)] @ m @ np.eye(6)[list(p)].T)}
    assert (0, 3, 1, 4, 2, 5) in valid


def test_box_augmented_matches_literal_up_to_aux_relabeling():
    eta, ab, lam = [1.0, 1.2, 0.8], [1.5, 0.9, 1.1], [0.3, 0.2, 0.0]
    m = ring(ab, eta).augmented(lam)
    # box term k (A_1, A_2, A_3) reads stage 3, 1, 2 respectively
    perm = [0, 1, 2, 4, 5, 3]
    np.testing.assert_array_equal(m[np.ix_(perm, perm)], literal_ring_m(eta, ab, lam))


def test_non_cyclic_matrix_rejected():
    m = -np.eye(3)
    m[1, 0] = m[2, 0] = 1.0
    assert cyclic_permutation(m) is None


def test_cyclic_secant_on_augmented_ring():
    m = ring([2.0, 2.0, 1.9]).augmented(np.zeros(3))
    ok, ratio, th = cyclic_secant(cyclic_permutation(m)[1])
    assert not ok
    assert ratio == pytest.approx(7.6)
    assert th == pytest.approx(1 / math.cos(math.pi / 6) ** 6)


def test_cyclic_secant_agrees_with_box():
    for ratio in (1.0, 2.0, 2.3, 2.45, 3.0, 5.0):
        g = ratio ** (1 / 3)
        b = ring([g, g, g])
        assert cyclic_secant(cyclic_permutation(b.augmented(np.zeros(3)))[1])[0] == certify_box(b, np.zeros(3)).ok


def test_diagonal_transfer():
    pt = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(diagonal_stability_transfer(np.eye(3), pt), pt)
    G = np.eye(3)[[2, 0, 1]]
    np.testing.assert_allclose(np.sort(np.diag(diagonal_stability_transfer(G, pt))), [1, 2, 3])


def test_secant_diagonal_route_reverifies():
    b = ring([1.0, 1.1, 1.2])
    lam = np.array([0.3, 0.2, 0.1])
    c = certify_secant_diagonal(b, lam)
    assert c.ok
    pc = c.extras["augmented_P"]
    m = b.augmented(lam)
    assert eigvals(pc @ m + m.T @ pc)[-1] <= -1e-6
    assert verify_certificate(c, b).ok


def test_rate_property():
    c = certify_hull_cone(JacobianBound.hull_cone([-np.eye(2)]), np.zeros(2))
    assert c.rate == pytest.approx(c.epsilon / (2 * eigvals(c.P)[-1]))


def test_unknown_method():
    with pytest.raises(InputError):
        certify(ring([1.0, 1.0, 1.0]), np.zeros(3), method="nope")
