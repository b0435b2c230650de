"""Deficit classification, seam search and two-frame merging.

Output pixels whose source falls outside the main frame form the deficit
region.  The deficit is expanded to the cheapest of four canonical shapes
(one-edge band I, corner region L, three-edge band C, or the closed ring O
which is given up), a search band two to four times wider is laid around the
expansion, per-edge luma-difference costs are assigned on the pixel-border
graph, and Dijkstra connects the band's two border ends with the cheapest
seam.  Pixels on the deficit side of the seam come from the aligned
neighbor frame, the rest from the main frame, with a hard cut.

Seam search runs on quarter-scale images; the merge re-warps both frames at
full resolution.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

# Edge indices in tie-break order.
TOP, RIGHT, BOTTOM, LEFT = 0, 1, 2, 3
EDGE_NAMES = ("top", "right", "bottom", "left")

LARGE_COST = 4.0 * 255.0 + 1.0  # finite cost for invalid-luma edges away from the deficit
INF = np.inf


class SeamError(RuntimeError):
    pass


class TypeOError(SeamError):
    """Deficit wraps opposite edges; one open seam cannot seal it."""


class SeamNotFoundError(SeamError):
    """No finite-cost path between the band ends."""


class DegenerateBandError(SeamError):
    """Deficit (nearly) fills the frame; no search band fits."""


@dataclass
class WarpedImage:
    """A frame resampled into output coordinates plus its validity mask.

    Invalid pixels hold luma 0 but must never be read as real luma.
    scale is 1 for full resolution, 4 for the quarter-scale seam images.
    """

    luma: np.ndarray
    valid: np.ndarray
    scale: int = 1

    def __post_init__(self):
        if self.luma.shape != self.valid.shape:
            raise ValueError("luma and validity mask must have the same shape")


def warp(src: np.ndarray, h: np.ndarray, out_dims: tuple[int, int], scale: int = 1) -> WarpedImage:
    """Inverse-map src through h (output -> source) with bilinear sampling.

    out_dims is (width, height) at full resolution; with scale > 1 the raster
    shrinks by that factor and samples at shrunken-pixel centers.
    """
    ow, oh = out_dims
    hh = np.ascontiguousarray(h, dtype=np.float64)
    if scale != 1:
        s = float(scale)
        # quarter pixel (x, y) sits at full-res position (s*x + (s-1)/2, ...)
        lift = np.array([[s, 0.0, (s - 1) / 2.0], [0.0, s, (s - 1) / 2.0], [0.0, 0.0, 1.0]])
        hh = np.ascontiguousarray(hh @ lift)
        ow, oh = ow // scale, oh // scale
    luma, valid = _kernels.warp_bilinear_k(np.ascontiguousarray(src), hh, int(oh), int(ow))
    return WarpedImage(luma=luma, valid=valid, scale=scale)


def deficit_mask(main_quarter: WarpedImage) -> np.ndarray:
    """Deficit = complement of the main warp's validity."""
    return ~main_quarter.valid


def dilate8(mask: np.ndarray) -> np.ndarray:
    """One-pixel 8-neighborhood dilation."""
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    out[1:, 1:] |= mask[:-1, :-1]
    out[1:, :-1] |= mask[:-1, 1:]
    out[:-1, 1:] |= mask[1:, :-1]
    out[:-1, :-1] |= mask[1:, 1:]
    return out


# ---------------------------------------------------------------------------
# Deficit classification
# ---------------------------------------------------------------------------


def _pixel_depths(rows: np.ndarray, cols: np.ndarray, w: int, h: int) -> dict[int, np.ndarray]:
    """Band depth needed at each edge to cover each deficit pixel."""
    return {
        TOP: rows + 1,
        RIGHT: w - cols,
        BOTTOM: h - rows,
        LEFT: cols + 1,
    }


def _edge_len(edge: int, w: int, h: int) -> int:
    return w if edge in (TOP, BOTTOM) else h


def _edge_dim(edge: int, w: int, h: int) -> int:
    """Extent perpendicular to the edge (how deep a band can go)."""
    return h if edge in (TOP, BOTTOM) else w


def _min_l_cover(da, db, len_a, len_b, dim_a, dim_b):
    """Cheapest corner cover band(eA, a) | band(eB, b); returns (area, a, b)."""
    max_da = int(da.max())
    # b needed when the eA band stops at depth a: max db among pixels deeper than a
    need = np.zeros(dim_a + 2, dtype=np.int64)
    np.maximum.at(need, da, db)
    suffix = np.zeros(dim_a + 2, dtype=np.int64)
    for i in range(dim_a, -1, -1):
        suffix[i] = max(suffix[i + 1], need[i + 1])
    best = None
    hi = min(max_da, dim_a - 1)
    for a in range(1, max(2, hi + 1)):
        b = max(1, int(suffix[a]))
        if a > dim_a - 1 or b > dim_b - 1:
            continue
        area = a * len_a + b * len_b - a * b
        key = (area, a)
        if best is None or key < best[0]:
            best = (key, a, b)
    if best is None:
        return None
    (area, _), a, b = best
    return area, a, b


def _min_c_cover(d_o1, d_mid, d_o2, len_outer, len_mid, dim_outer, dim_mid, contacts):
    """Cheapest three-band cover for one middle edge.

    contacts is an (n, 2) array of (outer1 depth, outer2 depth) for deficit
    pixels lying on the middle border line; a valid C must keep at least one
    of them in the open window between the outer bands, otherwise the shape
    degenerates into a bridge between two opposite bands.
    """
    if contacts.shape[0] == 0:
        return None
    order = np.argsort(contacts[:, 0], kind="stable")
    c1 = contacts[order, 0]
    c2 = contacts[order, 1]
    # suffix max of c2 over contacts with c1 > a
    suf = np.zeros(c1.shape[0] + 1, dtype=np.int64)
    for i in range(c1.shape[0] - 1, -1, -1):
        suf[i] = max(suf[i + 1], c2[i])

    def contact_exists(a, cc):
        idx = np.searchsorted(c1, a, side="right")
        return suf[idx] > cc

    b_candidates = sorted(set([1] + [int(v) for v in np.unique(d_mid) if 1 <= v <= dim_mid - 1]))
    best = None
    for b in b_candidates:
        unc = d_mid > b
        if not unc.any():
            rows1 = np.zeros(0, dtype=np.int64)
            rows2 = np.zeros(0, dtype=np.int64)
        else:
            rows1 = d_o1[unc]
            rows2 = d_o2[unc]
        need = np.zeros(dim_outer + 2, dtype=np.int64)
        if rows1.size:
            np.maximum.at(need, rows1, rows2)
        suffix = np.zeros(dim_outer + 2, dtype=np.int64)
        for i in range(dim_outer, -1, -1):
            suffix[i] = max(suffix[i + 1], need[i + 1])
        hi = dim_outer - 2
        if rows1.size:
            hi = min(hi, int(rows1.max()))
        for a in range(1, max(2, hi + 1)):
            cc = max(1, int(suffix[a]))
            if a + cc > dim_outer - 1:
                continue
            if not contact_exists(a, cc):
                continue
            area = (a + cc) * len_outer + b * len_mid - (a + cc) * b
            key = (area, a, b)
            if best is None or key < best[0]:
                best = (key, a, b, cc)
    if best is None:
        return None
    (area, _, _), a, b, cc = best
    return area, a, b, cc


@dataclass
class DeficitShape:
    """Classified deficit: canonical type, its band depths and touched edges."""

    kind: str  # "I", "L", "C" or "O"
    edges: tuple[int, ...]
    depths: tuple[int, ...]  # band depth per entry of edges
    area: int
    dims: tuple[int, int]  # quarter-scale (w, h)

    def expanded_mask(self) -> np.ndarray:
        w, h = self.dims
        out = np.zeros((h, w), dtype=bool)
        if self.kind == "O":
            out[:] = True
            return out
        for edge, depth in zip(self.edges, self.depths):
            out |= _band_mask(edge, depth, w, h)
        return out


def _band_mask(edge: int, depth: int, w: int, h: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=bool)
    if depth <= 0:
        return out
    if edge == TOP:
        out[:depth, :] = True
    elif edge == BOTTOM:
        out[h - depth :, :] = True
    elif edge == LEFT:
        out[:, :depth] = True
    else:
        out[:, w - depth :] = True
    return out


def classify_deficit(mask: np.ndarray, out_dims: tuple[int, int] | None = None) -> DeficitShape:
    """Expand the deficit to the cheapest canonical shape.

    Every feasible candidate (four I bands, four L corners, four C triples)
    that contains the deficit is costed by expanded area; ties go to the
    type with fewer edges, then to the fixed edge order top, right, bottom,
    left.  Disconnected components are covered jointly, which virtually
    connects them.  When nothing but the closed ring can contain the deficit
    the shape reports type O, which the caller treats as a stitch failure.
    """
    h, w = mask.shape
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise SeamError("empty deficit mask")
    depths = _pixel_depths(rows, cols, w, h)
    candidates: list[tuple[tuple, DeficitShape]] = []

    for e in (TOP, RIGHT, BOTTOM, LEFT):
        d = int(depths[e].max())
        if d >= _edge_dim(e, w, h):
            continue
        area = d * _edge_len(e, w, h)
        shape = DeficitShape("I", (e,), (d,), area, (w, h))
        candidates.append(((area, 1, (e,)), shape))

    for ea, eb in ((TOP, RIGHT), (RIGHT, BOTTOM), (BOTTOM, LEFT), (LEFT, TOP)):
        res = _min_l_cover(
            depths[ea],
            depths[eb],
            _edge_len(ea, w, h),
            _edge_len(eb, w, h),
            _edge_dim(ea, w, h),
            _edge_dim(eb, w, h),
        )
        if res is None:
            continue
        area, a, b = res
        key_edges = tuple(sorted((ea, eb)))
        shape = DeficitShape("L", (ea, eb), (a, b), area, (w, h))
        candidates.append(((area, 2, key_edges), shape))

    for mid in (TOP, RIGHT, BOTTOM, LEFT):
        o1 = (mid + 3) % 4
        o2 = (mid + 1) % 4
        on_mid = depths[mid] == 1
        contacts = np.stack([depths[o1][on_mid], depths[o2][on_mid]], axis=1) if on_mid.any() else np.zeros((0, 2), dtype=np.int64)
        res = _min_c_cover(
            depths[o1],
            depths[mid],
            depths[o2],
            _edge_len(o1, w, h),
            _edge_len(mid, w, h),
            _edge_dim(o1, w, h),
            _edge_dim(mid, w, h),
            contacts,
        )
        if res is None:
            continue
        area, a, b, cc = res
        key_edges = tuple(sorted((o1, mid, o2)))
        shape = DeficitShape("C", (o1, mid, o2), (a, b, cc), area, (w, h))
        candidates.append(((area, 3, key_edges), shape))

    if not candidates:
        return DeficitShape("O", (TOP, RIGHT, BOTTOM, LEFT), (h, w, h, w), w * h, (w, h))
    candidates.sort(key=lambda t: t[0])
    return candidates[0][1]


# ---------------------------------------------------------------------------
# Search region and graph construction
# ---------------------------------------------------------------------------


@dataclass
class SeamGraph:
    """Pixel-border graph: nodes are the criss-cross points of pixels.

    hcost[y, x] is the edge between nodes (x, y)-(x+1, y); vcost[y, x] the
    edge between (x, y)-(x, y+1).  Costs are assigned only to edges touching
    the search band; everything else stays infinite.
    """

    w: int
    h: int
    band: np.ndarray
    start_nodes: np.ndarray
    end_nodes: np.ndarray
    hcost: np.ndarray = field(default=None)  # type: ignore[assignment]
    vcost: np.ndarray = field(default=None)  # type: ignore[assignment]
    deficit: np.ndarray = field(default=None)  # type: ignore[assignment]

    def node_id(self, x: int, y: int) -> int:
        return y * (self.w + 1) + x


def _border_nodes(border: int, max_dist: int, from_edge: int, w: int, h: int) -> list[tuple[int, int]]:
    """Nodes on one frame border within max_dist of from_edge."""
    if border == LEFT:
        nodes = [(0, y) for y in range(h + 1)]
    elif border == RIGHT:
        nodes = [(w, y) for y in range(h + 1)]
    elif border == TOP:
        nodes = [(x, 0) for x in range(w + 1)]
    else:
        nodes = [(x, h) for x in range(w + 1)]

    def dist(pt):
        x, y = pt
        if from_edge == TOP:
            return y
        if from_edge == BOTTOM:
            return h - y
        if from_edge == LEFT:
            return x
        return w - x

    return [pt for pt in nodes if dist(pt) <= max_dist]


def build_search_region(shape: DeficitShape, factor: float = 3.0) -> SeamGraph:
    """Search band scaled from the expanded deficit plus its border ends.

    factor must stay within [2, 4]; both ends of the band become start/end
    node sets.
    """
    if shape.kind == "O":
        raise TypeOError("type O deficit has no open seam")
    if not (2.0 <= factor <= 4.0):
        raise ValueError("search band factor must be within [2, 4]")
    w, h = shape.dims

    scaled = []
    for edge, depth in zip(shape.edges, shape.depths):
        cap = _edge_dim(edge, w, h) - 1
        if depth >= cap:
            raise DegenerateBandError("deficit band leaves no room for a seam")
        scaled.append(min(int(np.ceil(factor * depth)), cap))

    band = np.zeros((h, w), dtype=bool)
    for edge, s in zip(shape.edges, scaled):
        band |= _band_mask(edge, s, w, h)

    if shape.kind == "I":
        (e,) = shape.edges
        (s,) = scaled
        borders = ((e + 3) % 4, (e + 1) % 4)
        start = _border_nodes(borders[0], s, e, w, h)
        end = _border_nodes(borders[1], s, e, w, h)
    elif shape.kind == "L":
        ea, eb = shape.edges
        sa, sb = scaled
        start = _border_nodes((eb + 2) % 4, sa, ea, w, h)
        end = _border_nodes((ea + 2) % 4, sb, eb, w, h)
    else:  # C
        o1, mid, o2 = shape.edges
        s1, _sm, s2 = scaled
        opposite = (mid + 2) % 4
        start = _border_nodes(opposite, s1, o1, w, h)
        end = _border_nodes(opposite, s2, o2, w, h)

    def ids(pts):
        return np.array(sorted(y * (w + 1) + x for x, y in pts), dtype=np.int64)

    sids = ids(start)
    eids = ids(end)
    overlap = set(sids.tolist()) & set(eids.tolist())
    if overlap:
        raise DegenerateBandError("search band ends overlap")
    return SeamGraph(w=w, h=h, band=band, start_nodes=sids, end_nodes=eids)


def edge_costs(main: WarpedImage, sub: WarpedImage, graph: SeamGraph) -> SeamGraph:
    """Assign luma-difference costs to the in-band pixel-border edges.

    cost(A,B) = |L_A^main - L_B^sub| + |L_A^sub - L_B^main|; edges touching
    the 8-neighborhood of the deficit are infinite so the seam cannot cross
    it; frame-border edges cost zero except inside the deficit; edges seeing
    invalid luma away from the deficit get a large finite cost to keep the
    graph connected.
    """
    if main.luma.shape != sub.luma.shape:
        raise SeamError("main and sub dimensions differ")
    h, w = main.luma.shape
    if (graph.h, graph.w) != (h, w):
        raise SeamError("graph dimensions do not match the images")

    lm = main.luma.astype(np.int64)
    ls = sub.luma.astype(np.int64)
    vm = main.valid
    vs = sub.valid
    deficit = ~vm
    dil = dilate8(deficit)
    band = graph.band

    hcost = np.full((h + 1, w), INF)
    vcost = np.full((h, w + 1), INF)

    # horizontal interior edges: pixel A above (rows 0..h-2), B below (1..h-1)
    base = np.abs(lm[:-1, :] - ls[1:, :]) + np.abs(ls[:-1, :] - lm[1:, :])
    inval = ~(vm[:-1, :] & vs[:-1, :] & vm[1:, :] & vs[1:, :])
    cost = np.where(inval, LARGE_COST, base.astype(np.float64))
    cost = np.where(dil[:-1, :] | dil[1:, :], INF, cost)
    ingraph = band[:-1, :] | band[1:, :]
    hcost[1:h, :] = np.where(ingraph, cost, INF)
    hcost[0, :] = np.where(band[0, :], np.where(deficit[0, :], INF, 0.0), INF)
    hcost[h, :] = np.where(band[h - 1, :], np.where(deficit[h - 1, :], INF, 0.0), INF)

    # vertical interior edges: pixel A left (cols 0..w-2), B right (1..w-1)
    base = np.abs(lm[:, :-1] - ls[:, 1:]) + np.abs(ls[:, :-1] - lm[:, 1:])
    inval = ~(vm[:, :-1] & vs[:, :-1] & vm[:, 1:] & vs[:, 1:])
    cost = np.where(inval, LARGE_COST, base.astype(np.float64))
    cost = np.where(dil[:, :-1] | dil[:, 1:], INF, cost)
    ingraph = band[:, :-1] | band[:, 1:]
    vcost[:, 1:w] = np.where(ingraph, cost, INF)
    vcost[:, 0] = np.where(band[:, 0], np.where(deficit[:, 0], INF, 0.0), INF)
    vcost[:, w] = np.where(band[:, w - 1], np.where(deficit[:, w - 1], INF, 0.0), INF)

    graph.hcost = hcost
    graph.vcost = vcost
    graph.deficit = deficit
    return graph


# ---------------------------------------------------------------------------
# Dijkstra and the seam itself
# ---------------------------------------------------------------------------


@dataclass
class Seam:
    """Minimum-cost border path from one band end to the other."""

    nodes: list[tuple[int, int]]  # (x, y) node coordinates, quarter scale
    cost: float
    w: int
    h: int


def dijkstra_seam(graph: SeamGraph) -> Seam:
    """Multi-source, multi-sink Dijkstra over the band's border graph.

    All start nodes enter the heap at distance zero (a virtual root); ties
    break on the node index so results are reproducible.
    """
    if graph.hcost is None or graph.vcost is None:
        raise SeamError("edge costs not assigned")
    if len(graph.start_nodes) == 0 or len(graph.end_nodes) == 0:
        raise SeamNotFoundError("empty start or end set")
    w, h = graph.w, graph.h
    stride = w + 1
    n_nodes = (w + 1) * (h + 1)
    dist = np.full(n_nodes, INF)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    done = np.zeros(n_nodes, dtype=bool)
    is_end = np.zeros(n_nodes, dtype=bool)
    is_end[graph.end_nodes] = True

    heap: list[tuple[float, int]] = []
    for nid in graph.start_nodes:
        dist[nid] = 0.0
        heapq.heappush(heap, (0.0, int(nid)))

    hcost = graph.hcost
    vcost = graph.vcost
    target = -1
    while heap:
        d, nid = heapq.heappop(heap)
        if done[nid]:
            continue
        done[nid] = True
        if is_end[nid]:
            target = nid
            break
        y, x = divmod(nid, stride)
        # right, left, down, up
        if x < w:
            c = hcost[y, x]
            if c != INF:
                nd = d + c
                other = nid + 1
                if nd < dist[other]:
                    dist[other] = nd
                    parent[other] = nid
                    heapq.heappush(heap, (nd, other))
        if x > 0:
            c = hcost[y, x - 1]
            if c != INF:
                nd = d + c
                other = nid - 1
                if nd < dist[other]:
                    dist[other] = nd
                    parent[other] = nid
                    heapq.heappush(heap, (nd, other))
        if y < h:
            c = vcost[y, x]
            if c != INF:
                nd = d + c
                other = nid + stride
                if nd < dist[other]:
                    dist[other] = nd
                    parent[other] = nid
                    heapq.heappush(heap, (nd, other))
        if y > 0:
            c = vcost[y - 1, x]
            if c != INF:
                nd = d + c
                other = nid - stride
                if nd < dist[other]:
                    dist[other] = nd
                    parent[other] = nid
                    heapq.heappush(heap, (nd, other))

    if target < 0:
        raise SeamNotFoundError("no finite path between the band ends")
    path = []
    nid = target
    while nid >= 0:
        y, x = divmod(nid, stride)
        path.append((x, y))
        nid = parent[nid]
    path.reverse()
    return Seam(nodes=path, cost=float(dist[target]), w=w, h=h)


# ---------------------------------------------------------------------------
# Seam -> region labeling and the merge
# ---------------------------------------------------------------------------


def _border_param(x: int, y: int, w: int, h: int) -> float:
    if y == 0:
        return float(x)
    if x == w:
        return w + float(y)
    if y == h:
        return w + h + float(w - x)
    if x == 0:
        return 2 * w + h + float(h - y)
    raise SeamError(f"node ({x}, {y}) is not on the border")


def _close_along_border(seam: Seam, direction: int) -> list[tuple[int, int]]:
    """Polygon from the seam plus a border walk from its end back to its start."""
    w, h = seam.w, seam.h
    corners = [(0, 0), (w, 0), (w, h), (0, h)]
    corner_params = [0.0, float(w), float(w + h), float(2 * w + h)]
    total = float(2 * w + 2 * h)
    t_end = _border_param(*seam.nodes[-1], w, h)
    t_start = _border_param(*seam.nodes[0], w, h)
    poly = list(seam.nodes)
    t = t_end
    guard = 0
    while True:
        guard += 1
        if guard > 8:
            break
        if direction > 0:
            nxt_corner = None
            best = None
            for cp, cn in zip(corner_params, corners):
                delta = (cp - t) % total
                if delta == 0.0:
                    continue
                if best is None or delta < best:
                    best = delta
                    nxt_corner = (cp, cn)
            delta_start = (t_start - t) % total
            if delta_start != 0.0 and delta_start <= best:
                break
            poly.append(nxt_corner[1])
            t = nxt_corner[0]
        else:
            nxt_corner = None
            best = None
            for cp, cn in zip(corner_params, corners):
                delta = (t - cp) % total
                if delta == 0.0:
                    continue
                if best is None or delta < best:
                    best = delta
                    nxt_corner = (cp, cn)
            delta_start = (t - t_start) % total
            if delta_start != 0.0 and delta_start <= best:
                break
            poly.append(nxt_corner[1])
            t = nxt_corner[0]
    return poly


def _point_in_rectilinear(poly: list[tuple[float, float]], px: float, py: float) -> bool:
    crossings = 0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if x0 != x1:
            continue  # horizontal edges never cross a horizontal ray
        ylo, yhi = (y0, y1) if y0 < y1 else (y1, y0)
        if ylo <= py < yhi and x0 > px:
            crossings += 1
    return crossings % 2 == 1


def seam_sub_polygon(seam: Seam, deficit: np.ndarray) -> list[tuple[int, int]]:
    """Close the seam along the border on the deficit side."""
    rows, cols = np.nonzero(deficit)
    if rows.size == 0:
        raise SeamError("empty deficit; nothing to label")
    px, py = cols[0] + 0.5, rows[0] + 0.5
    for direction in (1, -1):
        poly = _close_along_border(seam, direction)
        if _point_in_rectilinear(poly, px, py):
            return poly
    raise SeamError("seam polygon does not enclose the deficit")


def rasterize_polygon(poly: list[tuple[int, int]], w: int, h: int, scale: int = 1) -> np.ndarray:
    """Fill mask of pixels whose centers lie inside a rectilinear polygon.

    Vertices are integer node coordinates; scale multiplies them (seam found
    at quarter scale labels the full-resolution raster with scale=4).
    """
    crossings = np.zeros((h, w + 1), dtype=np.int64)
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        if x0 != x1:
            continue
        x = min(x0 * scale, w)
        ylo = min(y0, y1) * scale
        yhi = max(y0, y1) * scale
        ylo = max(0, min(ylo, h))
        yhi = max(0, min(yhi, h))
        if yhi > ylo:
            crossings[ylo:yhi, x] += 1
    cum = np.cumsum(crossings, axis=1)
    total = cum[:, -1:]
    right_of = total - cum[:, :w]
    return (right_of % 2) == 1


def merge(
    main_full: WarpedImage,
    sub_full: WarpedImage,
    label_sub: np.ndarray,
    chroma: tuple | None = None,
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray] | None, int]:
    """Hard-cut merge: label picks the source, validity breaks disagreements.

    Returns (luma, chroma planes or None, number of pixels invalid in both
    sources).  chroma, when given, is ((main_u, main_v), (sub_u, sub_v)) of
    WarpedImage at half resolution.
    """
    vm = main_full.valid
    vs = sub_full.valid
    take_sub = (label_sub & vs) | (~vm & vs)
    luma = np.where(take_sub, sub_full.luma, np.where(vm, main_full.luma, 0)).astype(np.uint8)
    invalid = int((~(vm | vs)).sum())

    out_chroma = None
    if chroma is not None:
        (mu, mv), (su, sv) = chroma
        take_c = take_sub[0::2, 0::2]
        vm_c = vm[0::2, 0::2]
        u = np.where(take_c, su.luma, np.where(vm_c, mu.luma, 128)).astype(np.uint8)
        v = np.where(take_c, sv.luma, np.where(vm_c, mv.luma, 128)).astype(np.uint8)
        out_chroma = (u, v)
    return luma, out_chroma, invalid
