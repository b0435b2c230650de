"""Seam module: warping, classification, graph costs, Dijkstra, merging."""

import itertools

import numpy as np
import pytest

from stitchstab import geometry, seam
from stitchstab.seam import TOP, RIGHT, BOTTOM, LEFT, SeamGraph, WarpedImage


def bilinear_oracle(src, x, y):
    """Direct bilinear interpolation with edge clamping."""
    h, w = src.shape
    cx = min(max(x, 0.0), w - 1.0)
    cy = min(max(y, 0.0), h - 1.0)
    x0 = min(int(cx), w - 2) if w > 1 else 0
    y0 = min(int(cy), h - 2) if h > 1 else 0
    fx, fy = cx - x0, cy - y0
    v = (
        src[y0, x0] * (1 - fx) * (1 - fy)
        + src[y0, x0 + 1] * fx * (1 - fy)
        + src[y0 + 1, x0] * (1 - fx) * fy
        + src[y0 + 1, x0 + 1] * fx * fy
    )
    return int(v + 0.5)


class TestWarp:
    def test_identity_is_copy_all_valid(self):
        rng = np.random.default_rng(0)
        src = rng.integers(0, 256, (40, 60)).astype(np.uint8)
        out = seam.warp(src, np.eye(3), (60, 40))
        assert np.array_equal(out.luma, src)
        assert out.valid.all()

    def test_full_width_translation_all_invalid(self):
        src = np.full((40, 60), 99, dtype=np.uint8)
        out = seam.warp(src, geometry.translation(60, 0), (60, 40))
        assert not out.valid.any()
        assert (out.luma == 0).all()  # sentinel luma

    def test_half_pixel_ramp_matches_bilinear_oracle(self):
        ramp = np.tile(np.arange(0, 240, 4, dtype=np.uint8), (20, 1))
        out = seam.warp(ramp, geometry.translation(0.5, 0), (60, 20))
        for x in (0, 10, 31, 58):
            assert out.luma[5, x] == bilinear_oracle(ramp, x + 0.5, 5.0)

    def test_quarter_scale_samples_block_centers(self):
        rng = np.random.default_rng(1)
        src = rng.integers(0, 256, (40, 80)).astype(np.uint8)
        out = seam.warp(src, np.eye(3), (80, 40), scale=4)
        assert out.luma.shape == (10, 20)
        for qy, qx in ((0, 0), (3, 7), (9, 19)):
            assert out.luma[qy, qx] == bilinear_oracle(src, 4 * qx + 1.5, 4 * qy + 1.5)

    def test_deficit_mask_is_validity_complement(self):
        src = np.full((40, 60), 7, dtype=np.uint8)
        # h maps output to source: +10 pushes the right columns off the frame
        w = seam.warp(src, geometry.translation(10, 0), (60, 40), scale=1)
        assert np.array_equal(seam.deficit_mask(w), ~w.valid)
        assert w.valid[:, :50].all()
        assert not w.valid[:, 50:].any()


def min_cover_oracle(mask):
    """Brute-force minimum-area cover over every I/L/C candidate.

    Mirrors the candidate families by exhaustive parameter search; usable on
    small masks only.
    """
    h, w = mask.shape
    rows, cols = np.nonzero(mask)

    def band(edge, d):
        out = np.zeros((h, w), dtype=bool)
        if d <= 0:
            return out
        if edge == TOP:
            out[:d, :] = True
        elif edge == BOTTOM:
            out[h - d :, :] = True
        elif edge == LEFT:
            out[:, :d] = True
        else:
            out[:, w - d :] = True
        return out

    best = None

    def consider(area, n_edges, key, kind):
        nonlocal best
        cand = ((area, n_edges, key), kind)
        if best is None or cand[0] < best[0]:
            best = cand

    dims = {TOP: h, BOTTOM: h, LEFT: w, RIGHT: w}
    for e in (TOP, RIGHT, BOTTOM, LEFT):
        for d in range(1, dims[e]):
            if (mask & ~band(e, d)).any():
                continue
            consider(int(band(e, d).sum()), 1, (e,), "I")
            break  # larger d only grows area

    for ea, eb in ((TOP, RIGHT), (RIGHT, BOTTOM), (BOTTOM, LEFT), (LEFT, TOP)):
        for a in range(1, dims[ea]):
            for b in range(1, dims[eb]):
                cover = band(ea, a) | band(eb, b)
                if not (mask & ~cover).any():
                    consider(int(cover.sum()), 2, tuple(sorted((ea, eb))), "L")
                    break

    for mid in (TOP, RIGHT, BOTTOM, LEFT):
        o1, o2 = (mid + 3) % 4, (mid + 1) % 4
        # contact requirement: a deficit pixel on the middle border line in
        # the open window between the outer bands
        for a in range(1, dims[o1]):
            for b in range(1, dims[mid]):
                for c in range(1, dims[o2] - a):
                    cover = band(o1, a) | band(mid, b) | band(o2, c)
                    if (mask & ~cover).any():
                        continue
                    window = ~(band(o1, a) | band(o2, c)) & band(mid, 1)
                    if not (mask & window).any():
                        continue
                    consider(int(cover.sum()), 3, tuple(sorted((o1, mid, o2))), "C")
                    break
    return best


class TestClassifyDeficit:
    def test_top_band_is_type_i_exact(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:4, 10:40] = True
        s = seam.classify_deficit(m)
        assert s.kind == "I" and s.edges == (TOP,) and s.depths == (4,)
        assert np.array_equal(s.expanded_mask(), seam._band_mask(TOP, 4, 50, 30))

    def test_full_width_band_still_type_i(self):
        # corner contact does not promote the band to a corner or 3-edge type
        m = np.zeros((30, 50), dtype=bool)
        m[:4, :] = True
        s = seam.classify_deficit(m)
        assert s.kind == "I" and s.edges == (TOP,)

    def test_corner_wedge_is_type_l(self):
        h, w = 68, 120
        m = np.zeros((h, w), dtype=bool)
        for r in range(40):
            m[r, w - int(60 * (1 - r / 40)) :] = True
        s = seam.classify_deficit(m)
        assert s.kind == "L" and tuple(sorted(s.edges)) == (TOP, RIGHT)

    def test_opposite_bands_are_type_o(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:, :4] = True
        m[:, 46:] = True
        assert seam.classify_deficit(m).kind == "O"

    def test_three_side_band_is_type_c(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:3, :] = True
        m[:, :3] = True
        m[:, 47:] = True
        s = seam.classify_deficit(m)
        assert s.kind == "C"
        assert tuple(sorted(s.edges)) == (TOP, RIGHT, LEFT)

    def test_disconnected_components_virtually_connected(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:2, 40:45] = True  # top blob
        m[10:14, 48:] = True  # right blob
        s = seam.classify_deficit(m)
        assert s.kind == "L" and tuple(sorted(s.edges)) == (TOP, RIGHT)
        assert (s.expanded_mask() & ~m).sum() + m.sum() == s.expanded_mask().sum()

    def test_expansion_superset_and_minimal_vs_oracle(self):
        rng = np.random.default_rng(7)
        agree = 0
        for _ in range(40):
            m = np.zeros((12, 14), dtype=bool)
            edge = rng.integers(0, 4)
            depth = int(rng.integers(1, 4))
            lo = int(rng.integers(0, 7))
            hi = int(rng.integers(lo + 2, 14))
            if edge == TOP:
                m[:depth, lo:hi] = True
            elif edge == BOTTOM:
                m[-depth:, lo:hi] = True
            elif edge == LEFT:
                m[lo % 10 : (lo % 10) + 3, :depth] = True
            else:
                m[lo % 10 : (lo % 10) + 3, -depth:] = True
            if rng.random() < 0.5:
                m[0, int(rng.integers(0, 14))] = True
            s = seam.classify_deficit(m)
            exp = s.expanded_mask()
            assert (exp & m).sum() == m.sum()  # superset
            oracle = min_cover_oracle(m)
            if oracle is not None and s.kind != "O":
                assert int(exp.sum()) == oracle[0][0]
                agree += 1
        assert agree >= 30

    def test_empty_mask_raises(self):
        with pytest.raises(seam.SeamError):
            seam.classify_deficit(np.zeros((10, 10), dtype=bool))


class TestBuildSearchRegion:
    def test_type_i_band_and_end_segments(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:4, 5:45] = True
        s = seam.classify_deficit(m)
        g = seam.build_search_region(s, 3.0)
        assert g.band[:12, :].all() and not g.band[12:, :].any()
        # start on the left border, end on the right, within band depth
        assert all(nid % 51 == 0 for nid in g.start_nodes)
        assert all(nid % 51 == 50 for nid in g.end_nodes)
        assert len(g.start_nodes) == 13 and len(g.end_nodes) == 13

    def test_type_l_ends_on_opposite_borders(self):
        # disconnected top and right blobs virtually connect into an L
        m = np.zeros((30, 50), dtype=bool)
        m[:2, 40:45] = True
        m[10:14, 48:] = True
        s = seam.classify_deficit(m)
        assert s.kind == "L" and tuple(sorted(s.edges)) == (TOP, RIGHT)
        g = seam.build_search_region(s, 3.0)
        a, b = s.depths
        # start segment on the left border within 3a of the top,
        # end segment on the bottom border within 3b of the right
        xs = g.start_nodes % 51
        ys = g.start_nodes // 51
        assert (xs == 0).all() and ys.max() == 3 * a
        xe = g.end_nodes % 51
        ye = g.end_nodes // 51
        assert (ye == 30).all() and xe.min() == 50 - 3 * b

    def test_factor_validation(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:4, :] = True
        s = seam.classify_deficit(m)
        for bad in (1.5, 4.5):
            with pytest.raises(ValueError):
                seam.build_search_region(s, bad)
        for ok in (2.0, 3.0, 4.0):
            seam.build_search_region(s, ok)

    def test_degenerate_band_raises(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:29, :] = True
        s = seam.classify_deficit(m)
        with pytest.raises(seam.SeamError):
            seam.build_search_region(s, 3.0)

    def test_type_o_raises(self):
        m = np.zeros((30, 50), dtype=bool)
        m[:, :4] = True
        m[:, 46:] = True
        with pytest.raises(seam.TypeOError):
            seam.build_search_region(seam.classify_deficit(m), 3.0)


def full_band_graph(h, w):
    g = SeamGraph(
        w=w,
        h=h,
        band=np.ones((h, w), dtype=bool),
        start_nodes=np.array([y * (w + 1) for y in range(h + 1)], dtype=np.int64),
        end_nodes=np.array([y * (w + 1) + w for y in range(h + 1)], dtype=np.int64),
    )
    return g


class TestEdgeCosts:
    def _images(self, main_luma, sub_luma, main_valid=None):
        h, w = main_luma.shape
        vm = np.ones((h, w), dtype=bool) if main_valid is None else main_valid
        main = WarpedImage(luma=np.where(vm, main_luma, 0).astype(np.uint8), valid=vm, scale=4)
        sub = WarpedImage(luma=sub_luma.astype(np.uint8), valid=np.ones((h, w), bool), scale=4)
        return main, sub

    def test_identical_images_cost_is_twice_the_gradient(self):
        # cost(A,B) = |Lm[A]-Ls[B]| + |Ls[A]-Lm[B]|: for identical sources it
        # collapses to 2|L[A]-L[B]|, zero wherever the content is flat
        rng = np.random.default_rng(2)
        luma = rng.integers(0, 256, (8, 10)).astype(np.uint8)
        main, sub = self._images(luma, luma)
        g = seam.edge_costs(main, sub, full_band_graph(8, 10))
        expect_h = 2 * np.abs(luma[:-1, :].astype(int) - luma[1:, :].astype(int))
        assert np.array_equal(g.hcost[1:8, :], expect_h)
        flat = np.full((8, 10), 123, dtype=np.uint8)
        main, sub = self._images(flat, flat)
        g = seam.edge_costs(main, sub, full_band_graph(8, 10))
        assert (g.hcost[1:8, :] == 0).all()
        assert (g.vcost[:, 1:10] == 0).all()

    def test_constant_offset_costs_double_difference(self):
        main, sub = self._images(np.full((8, 10), 100), np.full((8, 10), 120))
        g = seam.edge_costs(main, sub, full_band_graph(8, 10))
        assert (g.hcost[1:8, :] == 40).all()
        assert (g.vcost[:, 1:10] == 40).all()

    def test_deficit_vicinity_infinite(self):
        vm = np.ones((8, 10), dtype=bool)
        vm[0, 4] = False  # single deficit pixel
        main, sub = self._images(np.full((8, 10), 50), np.full((8, 10), 50), vm)
        g = seam.edge_costs(main, sub, full_band_graph(8, 10))
        # edges touching the 8-neighborhood of (0,4) are infinite
        assert g.vcost[0, 4] == np.inf and g.vcost[0, 5] == np.inf
        assert g.hcost[1, 4] == np.inf and g.hcost[1, 3] == np.inf and g.hcost[1, 5] == np.inf
        assert g.hcost[0, 4] == np.inf  # border edge inside the deficit
        assert g.hcost[0, 1] == 0.0  # border edge outside it

    def test_invalid_luma_gets_large_finite_cost(self):
        vm = np.ones((8, 10), dtype=bool)
        sub_valid = np.ones((8, 10), dtype=bool)
        sub_valid[5, 5] = False
        main = WarpedImage(luma=np.full((8, 10), 50, np.uint8), valid=vm, scale=4)
        sub = WarpedImage(luma=np.full((8, 10), 50, np.uint8), valid=sub_valid, scale=4)
        g = seam.edge_costs(main, sub, full_band_graph(8, 10))
        assert g.hcost[5, 5] == seam.LARGE_COST
        assert np.isfinite(g.hcost[5, 5])


def enumerate_min_path(graph):
    """Exhaustive minimum: DFS over all simple paths with cost pruning."""
    w, h = graph.w, graph.h
    stride = w + 1
    starts = set(int(v) for v in graph.start_nodes)
    ends = set(int(v) for v in graph.end_nodes)
    best = [np.inf]

    def neighbors(nid):
        y, x = divmod(nid, stride)
        if x < w and np.isfinite(graph.hcost[y, x]):
            yield nid + 1, graph.hcost[y, x]
        if x > 0 and np.isfinite(graph.hcost[y, x - 1]):
            yield nid - 1, graph.hcost[y, x - 1]
        if y < h and np.isfinite(graph.vcost[y, x]):
            yield nid + stride, graph.vcost[y, x]
        if y > 0 and np.isfinite(graph.vcost[y - 1, x]):
            yield nid - stride, graph.vcost[y - 1, x]

    def dfs(nid, cost, seen):
        if cost >= best[0]:
            return
        if nid in ends:
            best[0] = cost
            return
        for nb, c in neighbors(nid):
            if nb not in seen:
                seen.add(nb)
                dfs(nb, cost + c, seen)
                seen.remove(nb)

    for s in sorted(starts):
        dfs(s, 0.0, {s})
    return best[0]


def random_graph(rng, w, h):
    g = full_band_graph(h, w)
    g.hcost = rng.uniform(0, 1, (h + 1, w)).astype(np.float64)
    g.vcost = rng.uniform(0, 1, (h, w + 1)).astype(np.float64)
    g.hcost[rng.uniform(size=g.hcost.shape) < 0.1] = np.inf
    g.vcost[rng.uniform(size=g.vcost.shape) < 0.1] = np.inf
    g.deficit = np.zeros((h, w), dtype=bool)
    return g


def dp_fixpoint_cost(graph):
    """Column-sweep dynamic program iterated to a fixpoint.

    One left-to-right sweep (vertical relaxation inside each column, then a
    horizontal step) is the classic one-directional seam DP; iterating the
    sweep until nothing changes makes it exact on every graph while staying
    independent of the Dijkstra implementation.
    """
    w, h = graph.w, graph.h
    dist = np.full((h + 1, w + 1), np.inf)
    ys = [int(v) // (w + 1) for v in graph.start_nodes]
    dist[ys, 0] = 0.0
    changed = True
    sweeps = 0
    while changed:
        changed = False
        sweeps += 1
        for x in range(w + 1):
            if x > 0:
                nd = dist[:, x - 1] + graph.hcost[:, x - 1]
                better = nd < dist[:, x]
                if better.any():
                    dist[better, x] = nd[better]
                    changed = True
            for y in range(1, h + 1):  # downward relaxation
                nd = dist[y - 1, x] + graph.vcost[y - 1, x]
                if nd < dist[y, x]:
                    dist[y, x] = nd
                    changed = True
            for y in range(h - 1, -1, -1):  # upward relaxation
                nd = dist[y + 1, x] + graph.vcost[y, x]
                if nd < dist[y, x]:
                    dist[y, x] = nd
                    changed = True
            if x < w:
                nd = dist[:, x] + graph.hcost[:, x]
                better = nd < dist[:, x + 1]
                if better.any():
                    dist[better, x + 1] = nd[better]
                    changed = True
    ye = [int(v) // (w + 1) for v in graph.end_nodes]
    return float(dist[ye, w].min()), sweeps


class TestDijkstra:
    def test_uniform_two_by_two(self):
        g = full_band_graph(2, 2)
        g.hcost = np.ones((3, 2))
        g.vcost = np.ones((2, 3))
        g.deficit = np.zeros((2, 2), dtype=bool)
        s = seam.dijkstra_seam(g)
        assert s.cost == 2.0
        assert len(s.nodes) == 3

    def test_zero_cost_corridor_found(self):
        g = full_band_graph(4, 6)
        g.hcost = np.full((5, 6), 5.0)
        g.vcost = np.full((4, 7), 5.0)
        g.hcost[2, :] = 0.0  # corridor along node row 2
        g.deficit = np.zeros((4, 6), dtype=bool)
        s = seam.dijkstra_seam(g)
        assert s.cost == 0.0
        assert all(y == 2 for _, y in s.nodes)

    def test_routes_around_infinite_wall(self):
        g = full_band_graph(4, 6)
        g.hcost = np.ones((5, 6))
        g.vcost = np.ones((4, 7))
        g.hcost[0:4, 3] = np.inf  # wall with a gap at the bottom row
        g.deficit = np.zeros((4, 6), dtype=bool)
        s = seam.dijkstra_seam(g)
        assert np.isfinite(s.cost)
        assert any(y == 4 for _, y in s.nodes)

    def test_no_finite_path_raises(self):
        g = full_band_graph(3, 4)
        g.hcost = np.full((4, 4), np.inf)
        g.vcost = np.full((3, 5), np.inf)
        g.deficit = np.zeros((3, 4), dtype=bool)
        with pytest.raises(seam.SeamNotFoundError):
            seam.dijkstra_seam(g)

    def test_matches_enumeration_on_random_graphs(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            w, h = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            g = random_graph(rng, w, h)
            oracle = enumerate_min_path(g)
            if np.isinf(oracle):
                with pytest.raises(seam.SeamNotFoundError):
                    seam.dijkstra_seam(g)
            else:
                assert seam.dijkstra_seam(g).cost == pytest.approx(oracle, abs=1e-12)

    def test_matches_dp_fixpoint_on_band_graphs(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            w, h = int(rng.integers(3, 9)), int(rng.integers(2, 5))
            g = random_graph(rng, w, h)
            try:
                got = seam.dijkstra_seam(g).cost
            except seam.SeamNotFoundError:
                got = np.inf
            expect, _sweeps = dp_fixpoint_cost(g)
            if np.isinf(expect):
                assert np.isinf(got)
            else:
                assert got == pytest.approx(expect, abs=1e-12)


class TestMergeAndLabel:
    def _stitch_setup(self, seed=3):
        rng = np.random.default_rng(seed)
        h, w = 16, 24
        base = rng.integers(30, 220, (h, w)).astype(np.uint8)
        vm = np.ones((h, w), dtype=bool)
        vm[:3, :] = False  # deficit: top band
        main = WarpedImage(luma=np.where(vm, base, 0).astype(np.uint8), valid=vm, scale=4)
        sub = WarpedImage(luma=(base // 2 + 40).astype(np.uint8), valid=np.ones((h, w), bool), scale=4)
        deficit = seam.deficit_mask(main)
        shape = seam.classify_deficit(deficit)
        graph = seam.edge_costs(main, sub, seam.build_search_region(shape, 3.0))
        sm = seam.dijkstra_seam(graph)
        return main, sub, deficit, sm

    def test_seam_does_not_cross_deficit_border(self):
        _, _, deficit, sm = self._stitch_setup()
        dil = seam.dilate8(deficit)
        for (x0, y0), (x1, y1) in zip(sm.nodes, sm.nodes[1:]):
            # adjacent pixels of each traversed edge stay off the dilated deficit
            if y0 == y1:  # horizontal edge between pixel rows y0-1 and y0
                x = min(x0, x1)
                for py in (y0 - 1, y0):
                    if 0 <= py < deficit.shape[0]:
                        assert not dil[py, x] or np.isinf(0)  # never on the moat
            else:
                y = min(y0, y1)
                for px in (x0 - 1, x0):
                    if 0 <= px < deficit.shape[1]:
                        assert not dil[y, px]

    def test_label_covers_deficit_and_merge_is_hole_free(self):
        main, sub, deficit, sm = self._stitch_setup()
        poly = seam.seam_sub_polygon(sm, deficit)
        label_q = seam.rasterize_polygon(poly, sm.w, sm.h, scale=1)
        assert (label_q & deficit).sum() == deficit.sum()
        luma, _, invalid = seam.merge(main, sub, label_q)
        assert invalid == 0
        # deficit side took the sub image
        assert (luma[:3, :] == sub.luma[:3, :]).all()

    def test_label_scales_to_full_resolution(self):
        _, _, deficit, sm = self._stitch_setup()
        poly = seam.seam_sub_polygon(sm, deficit)
        label_q = seam.rasterize_polygon(poly, sm.w, sm.h, scale=1)
        label_full = seam.rasterize_polygon(poly, sm.w * 4, sm.h * 4, scale=4)
        # nearest upscale of the quarter label equals the full-resolution raster
        up = np.kron(label_q, np.ones((4, 4), dtype=bool))
        assert np.array_equal(label_full, up)

    def test_identical_content_merge_equals_main(self):
        rng = np.random.default_rng(5)
        luma = rng.integers(0, 256, (12, 16)).astype(np.uint8)
        v = np.ones((12, 16), dtype=bool)
        main = WarpedImage(luma=luma, valid=v, scale=1)
        sub = WarpedImage(luma=luma.copy(), valid=v.copy(), scale=1)
        label = rng.uniform(size=(12, 16)) < 0.5
        out, _, invalid = seam.merge(main, sub, label)
        assert np.array_equal(out, luma)
        assert invalid == 0

    def test_border_hugging_seam_keeps_main_where_valid(self):
        rng = np.random.default_rng(6)
        luma = rng.integers(0, 256, (12, 16)).astype(np.uint8)
        v = np.ones((12, 16), dtype=bool)
        main = WarpedImage(luma=luma, valid=v, scale=1)
        sub = WarpedImage(luma=(luma + 9).astype(np.uint8), valid=v.copy(), scale=1)
        label = np.zeros((12, 16), dtype=bool)  # nothing assigned to sub
        out, _, _ = seam.merge(main, sub, label)
        assert np.array_equal(out, luma)
