"""Metric implementations vs independent brute-force oracles."""

import math

import numpy as np
import pytest

from pvlseg.metrics import (
    EvaluationError,
    MetricReport,
    boundary,
    brier,
    dsc,
    foreground_band,
    harmonic_mean,
    nsd,
    spearman_uncertainty_error,
)


# -- brute-force oracles -------------------------------------------------


def oracle_dsc(pred, gt):
    ps = {(i, j) for i, j in zip(*np.nonzero(pred))}
    gs = {(i, j) for i, j in zip(*np.nonzero(gt))}
    if not ps and not gs:
        return 100.0
    return 100.0 * 2.0 * len(ps & gs) / (len(ps) + len(gs))


def oracle_boundary(mask):
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    pts = set()
    for i in range(h):
        for j in range(w):
            if not m[i, j]:
                continue
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ni, nj = i + di, j + dj
                if ni < 0 or nj < 0 or ni >= h or nj >= w or not m[ni, nj]:
                    pts.add((i, j))
                    break
    return pts


def oracle_nsd(pred, gt, tol):
    bp = oracle_boundary(pred)
    bg = oracle_boundary(gt)
    if not bp and not bg:
        return 100.0
    if not bp or not bg:
        return 0.0

    def min_dist(p, pts):
        return min(math.dist(p, q) for q in pts)

    frac_p = sum(min_dist(p, bg) <= tol for p in bp) / len(bp)
    frac_g = sum(min_dist(g, bp) <= tol for g in bg) / len(bg)
    return 100.0 * 0.5 * (frac_p + frac_g)


def oracle_brier_full(prob, gt):
    total = 0.0
    n = 0
    for p, y in zip(np.ravel(prob), np.ravel(gt)):
        total += (p - y) ** 2
        n += 1
    return 100.0 * total / n


def oracle_spearman(u, e):
    def avg_ranks(xs):
        order = sorted(range(len(xs)), key=lambda i: xs[i])
        ranks = [0.0] * len(xs)
        i = 0
        while i < len(xs):
            j = i
            while j + 1 < len(xs) and xs[order[j + 1]] == xs[order[i]]:
                j += 1
            r = (i + j) / 2 + 1
            for k in range(i, j + 1):
                ranks[order[k]] = r
            i = j + 1
        return ranks

    ru, re = avg_ranks(list(u)), avg_ranks(list(e))
    mu, me = sum(ru) / len(ru), sum(re) / len(re)
    num = sum((a - mu) * (b - me) for a, b in zip(ru, re))
    den = math.sqrt(sum((a - mu) ** 2 for a in ru) * sum((b - me) ** 2 for b in re))
    return 100.0 * num / den


def random_mask(rng, shape=(12, 12), p=0.3):
    return rng.uniform(size=shape) < p


# -- tests ----------------------------------------------------------------


class TestDsc:
    def test_identical_masks(self):
        m = np.zeros((8, 8), bool)
        m[2:5, 2:5] = True
        assert dsc(m, m) == 100.0

    def test_disjoint_nonempty(self):
        a = np.zeros((8, 8), bool)
        b = np.zeros((8, 8), bool)
        a[0, 0] = True
        b[7, 7] = True
        assert dsc(a, b) == 0.0

    def test_both_empty_defined_as_100(self):
        assert dsc(np.zeros((4, 4), bool), np.zeros((4, 4), bool)) == 100.0

    def test_half_overlap_rectangles(self):
        pred = np.zeros((8, 8), bool)
        gt = np.zeros((8, 8), bool)
        pred[:, 0:4] = True   # left half
        gt[:, 2:6] = True     # middle half
        assert dsc(pred, gt) == oracle_dsc(pred, gt) == 50.0

    def test_symmetry_and_oracle_on_random_masks(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a, b = random_mask(rng), random_mask(rng)
            assert abs(dsc(a, b) - oracle_dsc(a, b)) < 1e-9
            assert dsc(a, b) == dsc(b, a)


class TestNsd:
    def test_identical_masks(self):
        m = np.zeros((16, 16), bool)
        m[4:9, 5:11] = True
        assert nsd(m, m, 2) == 100.0

    def test_one_pixel_translation_within_tol(self):
        gt = np.zeros((16, 16), bool)
        gt[4:9, 4:9] = True
        pred = np.roll(gt, 1, axis=1)
        assert nsd(pred, gt, 2) == 100.0

    def test_five_pixel_translation_matches_all_pairs_oracle(self):
        gt = np.zeros((16, 16), bool)
        gt[3:8, 3:8] = True
        pred = np.roll(gt, 5, axis=1)
        ours = nsd(pred, gt, 2)
        ref = oracle_nsd(pred, gt, 2)
        assert abs(ours - ref) < 1e-6
        assert ours < 100.0

    def test_empty_conventions(self):
        empty = np.zeros((8, 8), bool)
        full = np.zeros((8, 8), bool)
        full[2:4, 2:4] = True
        assert nsd(empty, empty, 2) == 100.0
        assert nsd(empty, full, 2) == 0.0
        assert nsd(full, empty, 2) == 0.0

    def test_random_masks_match_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b = random_mask(rng, (10, 10)), random_mask(rng, (10, 10))
            assert abs(nsd(a, b, 2) - oracle_nsd(a, b, 2)) < 1e-6

    def test_translation_tolerance_property(self):
        gt = np.zeros((20, 20), bool)
        gt[6:12, 6:12] = True
        for dx, dy in ((1, 0), (0, 2), (1, 1), (2, 0)):
            pred = np.roll(np.roll(gt, dx, axis=1), dy, axis=0)
            if math.hypot(dx, dy) <= 2.0:
                assert nsd(pred, gt, 2) == 100.0

    def test_boundary_uses_four_neighborhood(self):
        m = np.zeros((5, 5), bool)
        m[1:4, 1:4] = True
        assert oracle_boundary(m) == {(i, j) for i, j in zip(*np.nonzero(boundary(m)))}

    def test_full_canvas_has_frame_boundary(self):
        m = np.ones((4, 4), bool)
        b = boundary(m)
        assert b[0].all() and b[-1].all() and b[:, 0].all() and b[:, -1].all()
        assert not b[1:3, 1:3].any()


class TestBrier:
    def test_perfect_confident_prediction(self):
        gt = np.zeros((8, 8), bool)
        gt[2:5, 2:5] = True
        prob = gt.astype(float)
        assert brier(prob, gt) == 0.0

    def test_uniform_half_probability(self):
        gt = np.zeros((8, 8), bool)
        gt[3:5, 3:5] = True
        prob = np.full((8, 8), 0.5)
        assert abs(brier(prob, gt, region="full") - 25.0) < 1e-12

    def test_random_instance_vs_scalar_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            gt = random_mask(rng, (4, 4), 0.4)
            prob = rng.uniform(size=(4, 4))
            assert abs(brier(prob, gt, region="full") - oracle_brier_full(prob, gt)) < 1e-9

    def test_band_region_restricts_pixels(self):
        gt = np.zeros((21, 21), bool)
        gt[10, 10] = True
        band = foreground_band(gt, 5.0)
        # Euclidean disk of radius 5 around the single pixel
        ii, jj = np.mgrid[0:21, 0:21]
        expected = (ii - 10) ** 2 + (jj - 10) ** 2 <= 25.0
        np.testing.assert_array_equal(band, expected)

    def test_empty_region_raises(self):
        gt = np.zeros((4, 4), bool)
        with pytest.raises(EvaluationError):
            brier(np.zeros((4, 4)), gt, region="foreground_band")


class TestSpearman:
    def test_monotone_transform_gives_100(self):
        err = np.linspace(0, 1, 16).reshape(4, 4)
        ent = np.sqrt(err)  # strictly monotone transform
        assert abs(spearman_uncertainty_error([ent], [err]) - 100.0) < 1e-9

    def test_reversed_ordering_gives_minus_100(self):
        err = np.linspace(0, 1, 16).reshape(4, 4)
        ent = 1.0 - err
        assert abs(spearman_uncertainty_error([ent], [err]) + 100.0) < 1e-9

    def test_ten_pixel_hand_case(self):
        u = [0.1, 0.4, 0.4, 0.2, 0.9, 0.9, 0.9, 0.05, 0.6, 0.3]
        e = [0, 1, 0, 0, 1, 1, 0, 0, 1, 0]
        ours = spearman_uncertainty_error([np.array(u)], [np.array(e)])
        assert abs(ours - oracle_spearman(u, e)) < 1e-9

    def test_random_cases_match_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            u = rng.uniform(size=30).round(1)  # rounding forces ties
            e = (rng.uniform(size=30) > 0.5).astype(float)
            if np.ptp(e) == 0:
                continue
            assert abs(spearman_uncertainty_error([u], [e]) - oracle_spearman(u, e)) < 1e-9

    def test_region_pooling(self):
        u1 = np.array([[0.1, 0.9], [0.5, 0.2]])
        e1 = np.array([[0, 1], [1, 0]])
        sel = np.array([[True, True], [False, True]])
        pooled = spearman_uncertainty_error([u1], [e1], regions=[sel])
        assert abs(pooled - oracle_spearman([0.1, 0.9, 0.2], [0, 1, 0])) < 1e-9

    def test_constant_input_raises(self):
        with pytest.raises(EvaluationError):
            spearman_uncertainty_error([np.ones(5)], [np.arange(5.0)])


class TestHarmonicMean:
    def test_equal_inputs_fixed_point(self):
        assert harmonic_mean(42.0, 42.0) == 42.0

    def test_reference_value_rounds_to_8376(self):
        assert round(harmonic_mean(89.11, 79.02), 2) == 83.76

    def test_analytic(self):
        assert abs(harmonic_mean(100.0, 50.0) - 200.0 / 3.0) < 1e-12

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            harmonic_mean(0.0, 50.0)
        with pytest.raises(ValueError):
            harmonic_mean(10.0, -1.0)

    def test_random_vs_formula(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b = rng.uniform(1, 100, size=2)
            assert abs(harmonic_mean(a, b) - 2 * a * b / (a + b)) < 1e-9


class TestMetricReport:
    def make_report(self):
        rep = MetricReport(config_hash="abc123", pairs=[("test", "test_ood")])
        for split, base in (("test", 90.0), ("test_ood", 70.0)):
            sm = rep.split(split)
            sm.add("0001", dsc=base, nsd=base - 2, brier=8.0)
            sm.add("0002", dsc=base + 2, nsd=base, brier=10.0)
            rep.pooled[split] = {"spearman": 80.0}
        return rep

    def test_hm_row_recomputes_harmonic_mean(self):
        rep = self.make_report()
        rows = {r["split"]: r for r in rep.summary_rows()}
        hm = rows["hm(test,test_ood)"]
        assert hm["dsc"] == pytest.approx(harmonic_mean(91.0, 71.0))
        assert hm["spearman"] == pytest.approx(80.0)
        assert "brier" not in hm

    def test_text_and_tsv_shapes(self):
        rep = self.make_report()
        text = rep.to_text()
        assert "config_hash: abc123" in text
        assert "sample 0001" in text
        tsv = rep.to_tsv().strip().split("\n")
        header = tsv[0].split("\t")
        assert header[0] == "split"
        assert len(tsv) == 4  # header + two splits + hm row
