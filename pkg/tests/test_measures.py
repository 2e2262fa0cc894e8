import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from nsbox.box import (DET_IDS, INDICES, PR_IDS, VERTEX_IDS, Mixture, Relabeling,
                       apply_relabeling, enumerate_relabelings, make_deterministic, make_pr,
                       maximally_mixed, mix)
from nsbox.measures import (CHSH_LABELS, chsh, correlators, cov_chsh, decompose_over_vertices,
                            is_local_chsh, is_local_lp, nl, nl_value_float)
from nsbox.sampling import random_box, random_product_box
from nsbox.secrecy import noisy_pr


def brute_correlator(b, x, y):
    return sum(b[x, y, a, bb] * (1 if a == bb else -1) for a in (0, 1) for bb in (0, 1))


class TestCorrelators:
    def test_pr(self):
        c = correlators(make_pr(0, 0, 0))
        assert c.e == ((1, 1), (1, -1))
        assert c.ma == (0, 0) and c.mb == (0, 0)

    def test_constant_deterministic(self):
        c = correlators(make_deterministic(0, 0, 0, 0))
        assert c.e == ((1, 1), (1, 1)) and c.ma == (1, 1) and c.mb == (1, 1)

    def test_noise(self):
        c = correlators(maximally_mixed())
        assert c.e == ((0, 0), (0, 0)) and c.ma == (0, 0) and c.mb == (0, 0)

    def test_against_brute_sum(self, rng):
        for _ in range(50):
            b = random_box(rng)
            c = correlators(b)
            for x, y in itertools.product((0, 1), repeat=2):
                assert c.e[x][y] == brute_correlator(b, x, y)
                assert -1 <= c.e[x][y] <= 1


class TestChsh:
    def test_pr_value(self):
        assert chsh(make_pr(0, 0, 0), 0, 0, 0) == 4

    def test_deterministic_saturation(self):
        for vid in DET_IDS:
            al, be, ga, ep = vid.labels
            A = [(-1) ** ((al * x) ^ be) for x in (0, 1)]
            B = [(-1) ** ((ga * y) ^ ep) for y in (0, 1)]
            for lab in CHSH_LABELS:
                a, b_, g = lab
                expected = ((-1) ** g * A[0] * B[0] + (-1) ** (b_ ^ g) * A[0] * B[1]
                            + (-1) ** (a ^ g) * A[1] * B[0] + (-1) ** (a ^ b_ ^ g ^ 1) * A[1] * B[1])
                value = chsh(vid.box(), *lab)
                assert value == expected
                assert value in (-2, 2)

    def test_noise(self):
        assert all(chsh(maximally_mixed(), *lab) == 0 for lab in CHSH_LABELS)

    @pytest.mark.parametrize("vid", PR_IDS, ids=str)
    def test_each_pr_maximizes_own_label(self, vid):
        assert chsh(vid.box(), *vid.labels) == 4


class TestCovChsh:
    def test_pr(self):
        assert cov_chsh(make_pr(0, 0, 0), 0) == 4

    def test_product_zero(self, rng):
        for _ in range(50):
            b = random_product_box(rng)
            assert all(cov_chsh(b, i) == 0 for i in range(4))

    def test_deterministic_zero(self):
        assert all(cov_chsh(make_deterministic(0, 0, 0, 0), i) == 0 for i in range(4))

    def test_bad_index(self):
        with pytest.raises(ValueError):
            cov_chsh(maximally_mixed(), 4)


class TestNl:
    @pytest.mark.parametrize("vid", PR_IDS, ids=str)
    def test_pr_boxes(self, vid):
        assert nl(vid.box()).nl == 4

    def test_product_boxes(self, rng):
        for _ in range(100):
            assert nl(random_product_box(rng)).nl == 0

    def test_worked_mixture(self):
        b = mix([(Fraction(3, 4), make_pr(0, 0, 0)), (Fraction(1, 4), make_pr(0, 0, 1))])
        r = nl(b)
        h = Fraction(1, 2)
        assert r.correlators.e == ((h, h), (h, -h))
        assert r.covchsh == (2, 0, 0, 0)
        assert r.gamma == (2, 2, 2)
        assert r.nl == 2

    @pytest.mark.parametrize("p", [Fraction(k, 10) for k in range(11)])
    def test_noisy_pr(self, p):
        assert nl(noisy_pr(0, 0, 0, p)).nl == 4 * p

    def test_report_invariants(self, rng):
        for _ in range(200):
            r = nl(random_box(rng))
            assert 0 <= r.nl <= 4
            assert r.nl == min(r.gamma)
            assert all(g >= 0 for g in r.gamma)

    def test_local_relabeling_invariance(self, rng):
        group = enumerate_relabelings()
        for _ in range(5):
            b = random_box(rng)
            value = nl(b).nl
            assert all(nl(apply_relabeling(g, b)).nl == value for g in group)

    def test_party_exchange(self, rng):
        swap = Relabeling(exchange=1)
        for _ in range(50):
            b = random_box(rng)
            r, s = nl(b), nl(apply_relabeling(swap, b))
            cb = r.covchsh
            assert s.covchsh == (cb[0], cb[2], cb[1], cb[3])
            assert s.gamma == (r.gamma[1], r.gamma[0], r.gamma[2])
            assert s.nl == r.nl

    def test_float_version_matches(self, rng):
        for _ in range(50):
            b = random_box(rng)
            assert nl_value_float(b.to_float()) == pytest.approx(float(nl(b).nl), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=24, max_size=24).filter(any))
    def test_range_on_vertex_mixtures(self, raw):
        total = sum(raw)
        m = Mixture(tuple((Fraction(w, total), v.box()) for w, v in zip(raw, VERTEX_IDS)))
        assert 0 <= nl(mix(m)).nl <= 4


class TestLocality:
    def test_noisy_pr_nonlocal(self):
        cert = is_local_chsh(noisy_pr(0, 0, 0, Fraction(3, 5)))
        assert not cert.is_local
        assert cert.label == (0, 0, 0) and cert.value == Fraction(12, 5)

    def test_noisy_pr_boundary(self):
        assert is_local_chsh(noisy_pr(0, 0, 0, Fraction(1, 2))).is_local
        assert is_local_lp(noisy_pr(0, 0, 0, Fraction(1, 2))).is_local

    def test_deterministic_local(self):
        for vid in DET_IDS:
            assert is_local_chsh(vid.box()).is_local
            cert = is_local_lp(vid.box())
            assert cert.is_local and mix(cert.mixture()) == vid.box()

    def test_noise_lp_witness(self):
        cert = is_local_lp(maximally_mixed())
        assert cert.is_local
        assert sum(cert.weights) == 1 and min(cert.weights) >= 0
        assert mix(cert.mixture()) == maximally_mixed()

    def test_pr_lp_infeasible(self):
        assert not is_local_lp(make_pr(0, 0, 0)).is_local

    def test_all_vertices_agree(self):
        for vid in VERTEX_IDS:
            assert is_local_chsh(vid.box()).is_local == is_local_lp(vid.box()).is_local == (
                vid.kind == "det")

    def test_random_agreement_and_witnesses(self, rng):
        for _ in range(300):
            b = random_box(rng)
            c1, c2 = is_local_chsh(b), is_local_lp(b)
            assert c1.is_local == c2.is_local
            if c2.is_local:
                assert min(c2.weights) >= 0 and mix(c2.mixture()) == b
            else:
                assert abs(c1.value) > 2

    def test_sampler_reaches_both_regions(self, rng):
        verdicts = {is_local_chsh(random_box(rng)).is_local for _ in range(300)}
        assert verdicts == {True, False}


class TestVertexDecomposition:
    def test_pr(self):
        m = decompose_over_vertices(make_pr(0, 0, 0))
        assert mix(m) == make_pr(0, 0, 0)

    def test_noise(self):
        m = decompose_over_vertices(maximally_mixed())
        assert len(m.components) == 24 and mix(m) == maximally_mixed()

    def test_noisy_pr_half(self):
        b = noisy_pr(0, 0, 0, Fraction(1, 2))
        assert mix(decompose_over_vertices(b)) == b

    def test_random(self, rng):
        for _ in range(50):
            b = random_box(rng)
            m = decompose_over_vertices(b)
            assert min(m.weights) >= 0 and mix(m) == b
