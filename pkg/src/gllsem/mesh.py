"""Structured quadrilateral meshes with isoparametric Q^k geometry.

Every mesh here is logically an ``nx x ny`` grid of cells carrying a
``(k*nx + 1) x (k*ny + 1)`` lattice of Gauss-Lobatto nodes. Element
geometry is stored once, as physical coordinates of the global nodes, so
two elements sharing an edge see bit-identical coordinates there.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gll import RefElement, gll_rule, ref_element

INTERIOR = 0
XI_MIN, XI_MAX, ETA_MIN, ETA_MAX = 1, 2, 3, 4

FAMILIES = (
    "cartesian",
    "random",
    "smooth",
    "annulus:straight",
    "annulus:curvilinear",
    "annulus:mixed",
)

_MAX_RESAMPLE = 32


class InvalidDomainError(ValueError):
    pass


class DegenerateElementError(ValueError):
    pass


@dataclass(frozen=True)
class Element:
    geom_nodes: np.ndarray  # (k+1, k+1, 2), index [i, j] with i along xi


@dataclass(frozen=True)
class MetricData:
    jac: np.ndarray  # (..., k+1, k+1, 2, 2): [[x_xi, x_eta], [y_xi, y_eta]]
    inv: np.ndarray
    det: np.ndarray
    wdet: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    k: int
    nx: int
    ny: int
    coords: np.ndarray  # (N, 2)
    elem_nodes: np.ndarray  # (E, k+1, k+1) global node ids
    boundary: np.ndarray  # (N,) side tag, 0 for interior nodes
    h: float  # length scale of the discrete norms
    area: float
    family: str = "cartesian"
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elem_nodes.shape[0]

    @property
    def geom(self) -> np.ndarray:
        return self.coords[self.elem_nodes]

    @property
    def x(self) -> np.ndarray:
        return self.coords[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.coords[:, 1]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary != INTERIOR)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary == INTERIOR)

    def global_of(self, e: int, i: int, j: int) -> int:
        return int(self.elem_nodes[e, i, j])

    def element(self, e: int) -> Element:
        return Element(self.geom[e])

    def summary_csv(self) -> str:
        md = metric_terms(self.geom, ref_element(self.k))
        return ("elements,nodes,min_detJ\n"
                f"{self.n_elements},{self.n_nodes},{float(md.det.min())!r}\n")


def _lattice(nx, ny, k):
    """Global numbering for the structured node lattice."""
    nix, niy = k * nx + 1, k * ny + 1
    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ex, ey = ex.ravel(), ey.ravel()  # element e = ey * nx + ex
    li = np.arange(k + 1)
    gi = ex[:, None, None] * k + li[None, :, None]
    gj = ey[:, None, None] * k + li[None, None, :]
    elem_nodes = gj * nix + gi
    gi_all, gj_all = np.meshgrid(np.arange(nix), np.arange(niy), indexing="xy")
    gi_all, gj_all = gi_all.ravel(), gj_all.ravel()
    tag = np.zeros(nix * niy, dtype=np.int8)
    tag[gj_all == niy - 1] = ETA_MAX
    tag[gj_all == 0] = ETA_MIN
    tag[gi_all == nix - 1] = XI_MAX
    tag[gi_all == 0] = XI_MIN
    return elem_nodes.astype(np.int64), tag, ex, ey


def _logical_coords(nx, ny, k, ex, ey):
    """Cell-local logical coordinates in [0, 1]^2 of every element's GL nodes."""
    s = 0.5 * (1.0 + gll_rule(k).nodes)
    u = (ex[:, None, None] + s[None, :, None]) / nx
    v = (ey[:, None, None] + s[None, None, :]) / ny
    return np.broadcast_arrays(u, v)


def _scatter_geometry(n_nodes, elem_nodes, geom):
    coords = np.empty((n_nodes, 2))
    coords[elem_nodes.reshape(-1)] = geom.reshape(-1, 2)
    return coords


def _as_pair(n):
    if np.ndim(n) == 0:
        return int(n), int(n)
    nx, ny = n
    return int(nx), int(ny)


def build_cartesian(domain=(0.0, 1.0, 0.0, 1.0), n=1, k=2) -> Mesh:
    """Uniform ``n x n`` (or ``nx x ny``) Cartesian mesh of a rectangle.

    ``domain`` is ``(x0, x1, y0, y1)``.
    """
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0) or not np.all(np.isfinite([x0, x1, y0, y1])):
        raise InvalidDomainError(f"degenerate rectangle {domain!r}")
    nx, ny = _as_pair(n)
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per side")
    if k < 1:
        raise ValueError("degree must be >= 1")
    elem_nodes, tag, ex, ey = _lattice(nx, ny, k)
    u, v = _logical_coords(nx, ny, k, ex, ey)
    geom = np.stack([x0 + (x1 - x0) * u, y0 + (y1 - y0) * v], axis=-1)
    n_nodes = (k * nx + 1) * (k * ny + 1)
    coords = _scatter_geometry(n_nodes, elem_nodes, geom)
    area = (x1 - x0) * (y1 - y0)
    return Mesh(k=k, nx=nx, ny=ny, coords=coords, elem_nodes=elem_nodes,
                boundary=tag, h=0.5 * np.sqrt(area / (nx * ny)), area=area,
                family="cartesian", meta={"domain": (x0, x1, y0, y1)})


def _bilinear_geometry(vertices, k, nx, ny, ex, ey):
    """Straight-sided cells from a (ny+1, nx+1, 2) vertex array."""
    r = gll_rule(k).nodes
    a = 0.5 * (1.0 - r)
    b = 0.5 * (1.0 + r)
    v00 = vertices[ey, ex][:, None, None, :]
    v10 = vertices[ey, ex + 1][:, None, None, :]
    v01 = vertices[ey + 1, ex][:, None, None, :]
    v11 = vertices[ey + 1, ex + 1][:, None, None, :]
    ai, bi = a[None, :, None, None], b[None, :, None, None]
    aj, bj = a[None, None, :, None], b[None, None, :, None]
    return ai * aj * v00 + bi * aj * v10 + ai * bj * v01 + bi * bj * v11


def _bilinear_det_ok(vertices):
    """Corner Jacobians of every bilinear cell are positive."""
    v00 = vertices[:-1, :-1]
    v10 = vertices[:-1, 1:]
    v01 = vertices[1:, :-1]
    v11 = vertices[1:, 1:]

    def cross(o, p, q):
        d1, d2 = p - o, q - o
        return d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]

    return ((cross(v00, v10, v01) > 0) & (cross(v10, v11, v00) > 0)
            & (cross(v11, v01, v10) > 0) & (cross(v01, v00, v11) > 0))


def _vertex_stream(seed, i, j):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i, j))))


def perturb_random(mesh: Mesh, magnitude_fraction: float = 0.25, seed: int = 0) -> Mesh:
    """Displace interior cell vertices by i.i.d. uniform offsets.

    Each component of the offset of an interior vertex is drawn from
    ``[-f*h, f*h]`` with ``h`` the Cartesian cell half-width and ``f`` the
    magnitude fraction. Cells are rebuilt as bilinear quadrilaterals.
    Every vertex owns its own PCG64 stream keyed on ``(seed, i, j)``.
    """
    if mesh.family != "cartesian":
        raise ValueError("random perturbation needs a Cartesian mesh")
    if magnitude_fraction == 0:
        return mesh
    x0, x1, y0, y1 = mesh.meta["domain"]
    nx, ny, k = mesh.nx, mesh.ny, mesh.k
    hx, hy = 0.5 * (x1 - x0) / nx, 0.5 * (y1 - y0) / ny
    bound = np.array([magnitude_fraction * hx, magnitude_fraction * hy])

    vx = x0 + (x1 - x0) * np.arange(nx + 1) / nx
    vy = y0 + (y1 - y0) * np.arange(ny + 1) / ny
    base = np.stack(np.meshgrid(vx, vy, indexing="xy"), axis=-1)  # (ny+1, nx+1, 2)
    offsets = np.zeros_like(base)
    streams = {}
    for j in range(1, ny):
        for i in range(1, nx):
            rng = streams[i, j] = _vertex_stream(seed, i, j)
            offsets[j, i] = rng.uniform(-bound, bound)

    vertices = base + offsets
    for _ in range(_MAX_RESAMPLE):
        ok = _bilinear_det_ok(vertices)
        if ok.all():
            break
        bad_cells = np.argwhere(~ok)
        redraw = set()
        for cj, ci in bad_cells:
            for dj in (0, 1):
                for di in (0, 1):
                    if (ci + di, cj + dj) in streams:
                        redraw.add((ci + di, cj + dj))
        for i, j in sorted(redraw):
            offsets[j, i] = streams[i, j].uniform(-bound, bound)
        vertices = base + offsets
    else:
        raise DegenerateElementError("random perturbation produced inverted cells after retries")

    elem_nodes = mesh.elem_nodes
    ex = np.tile(np.arange(nx), ny)
    ey = np.repeat(np.arange(ny), nx)
    geom = _bilinear_geometry(vertices, k, nx, ny, ex, ey)
    coords = _scatter_geometry(mesh.n_nodes, elem_nodes, geom)
    meta = dict(mesh.meta, seed=int(seed), magnitude_fraction=float(magnitude_fraction),
                vertex_offsets=offsets)
    return replace(mesh, coords=coords, family="random", meta=meta)


def map_smooth(mesh: Mesh) -> Mesh:
    """Apply (x, y) -> (x + 0.1 sin x sin y, y + 0.1 sin x sin y) to all nodes."""
    dom = mesh.meta.get("domain")
    if dom is None or not np.allclose(dom, (-np.pi, np.pi, -np.pi, np.pi), rtol=0, atol=1e-14):
        raise InvalidDomainError("the smooth map is defined on [-pi, pi]^2")
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    bump = 0.1 * np.sin(x) * np.sin(y)
    coords = np.stack([x + bump, y + bump], axis=-1)
    return replace(mesh, coords=coords, family="smooth")


def _polar(r, th):
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def build_annulus(r_inner: float, r_outer: float, n: int, k: int,
                  variant: str = "curvilinear") -> Mesh:
    """Quarter annulus ``r_inner <= r <= r_outer, 0 <= theta <= pi/2``.

    ``xi`` runs along the radius and ``eta`` along the angle. Variants:

    ``curvilinear``
        every geometry node is the exact polar image of its logical point.
    ``straight``
        bilinear cells through the polar images of the cell vertices.
    ``curved_boundary_straight_interior``
        arcs on r = r_inner and r = r_outer, straight interior edges
        (transfinite blending inside the boundary cells).
    """
    if not (0.0 < r_inner < r_outer) or not np.isfinite(r_outer):
        raise InvalidDomainError(f"invalid radii ({r_inner!r}, {r_outer!r})")
    if variant == "mixed":
        variant = "curved_boundary_straight_interior"
    nx = ny = int(n)
    elem_nodes, tag, ex, ey = _lattice(nx, ny, k)
    u, v = _logical_coords(nx, ny, k, ex, ey)
    half_pi = 0.5 * np.pi

    def radius(s):
        return r_inner + (r_outer - r_inner) * s

    if variant == "curvilinear":
        geom = _polar(radius(u), half_pi * v)
    elif variant in ("straight", "curved_boundary_straight_interior"):
        vr = radius(np.arange(nx + 1) / nx)
        vt = half_pi * np.arange(ny + 1) / ny
        rr, tt = np.meshgrid(vr, vt, indexing="xy")
        vertices = _polar(rr, tt)
        geom = _bilinear_geometry(vertices, k, nx, ny, ex, ey)
        if variant == "curved_boundary_straight_interior":
            geom = _curve_boundary_cells(geom, vertices, k, nx, ex, ey, vr, vt)
    else:
        raise ValueError(f"unknown annulus variant {variant!r}")

    n_nodes = (k * nx + 1) * (k * ny + 1)
    coords = _scatter_geometry(n_nodes, elem_nodes, geom)
    area = 0.25 * np.pi * (r_outer ** 2 - r_inner ** 2)
    family = {"curvilinear": "annulus:curvilinear", "straight": "annulus:straight",
              "curved_boundary_straight_interior": "annulus:mixed"}[variant]
    return Mesh(k=k, nx=nx, ny=ny, coords=coords, elem_nodes=elem_nodes, boundary=tag,
                h=0.5 * np.sqrt(area / (nx * ny)), area=area, family=family,
                meta={"radii": (float(r_inner), float(r_outer))})


def _curve_boundary_cells(geom, vertices, k, nx, ex, ey, vr, vt):
    """Gordon-Hall blending that replaces the radial-boundary chords with arcs."""
    r = gll_rule(k).nodes
    a, b = 0.5 * (1.0 - r), 0.5 * (1.0 + r)
    geom = geom.copy()
    for e in np.flatnonzero((ex == 0) | (ex == nx - 1)):
        i, j = ex[e], ey[e]
        th = vt[j] * a + vt[j + 1] * b  # angle along the eta direction

        def chord(p, q):
            return a[:, None] * p + b[:, None] * q

        left = _polar(vr[i], th) if i == 0 else chord(vertices[j, i], vertices[j + 1, i])
        right = (_polar(vr[i + 1], th) if i == nx - 1
                 else chord(vertices[j, i + 1], vertices[j + 1, i + 1]))
        bottom = chord(vertices[j, i], vertices[j, i + 1])
        top = chord(vertices[j + 1, i], vertices[j + 1, i + 1])
        A, B = a[:, None, None], b[:, None, None]  # along xi (first axis)
        C, D = a[None, :, None], b[None, :, None]  # along eta
        corners = (A * C * vertices[j, i] + B * C * vertices[j, i + 1]
                   + A * D * vertices[j + 1, i] + B * D * vertices[j + 1, i + 1])
        geom[e] = (A * left[None, :, :] + B * right[None, :, :]
                   + C * bottom[:, None, :] + D * top[:, None, :] - corners)
    return geom


def metric_terms(geom, ref: RefElement) -> MetricData:
    """Jacobians of the isoparametric map at the tensor GLL points.

    Derivatives come from applying the nodal differentiation matrix to the
    geometry nodes, never from an analytic map. ``geom`` may be a single
    element ``(k+1, k+1, 2)`` (or an :class:`Element`) or a stack of them.
    """
    if isinstance(geom, Element):
        geom = geom.geom_nodes
    geom = np.asarray(geom, dtype=float)
    d = ref.diff
    d_xi = np.einsum("im,...mjc->...ijc", d, geom)
    d_eta = np.einsum("jm,...imc->...ijc", d, geom)
    jac = np.stack([d_xi, d_eta], axis=-1)  # [..., c, dir]
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(~(det > 0)):
        flat = det.reshape(-1, *det.shape[-2:]) if det.ndim > 2 else det[None]
        bad = int(np.flatnonzero((~(flat > 0)).any(axis=(1, 2)))[0])
        raise DegenerateElementError(f"non-positive Jacobian determinant in element {bad}")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    w = ref.rule.weights
    wdet = w[:, None] * w[None, :] * det
    return MetricData(jac=jac, inv=inv, det=det, wdet=wdet)


def make_mesh(family: str, n: int, k: int, domain=None, radii=None, seed: int = 0,
              magnitude_fraction: float = 0.25) -> Mesh:
    """Build a mesh by family name (see ``FAMILIES``)."""
    if family.startswith("annulus"):
        if radii is None:
            raise ValueError("annulus meshes need radii")
        variant = family.split(":", 1)[1] if ":" in family else "curvilinear"
        return build_annulus(radii[0], radii[1], n, k, variant)
    if domain is None:
        domain = (-np.pi, np.pi, -np.pi, np.pi)
    mesh = build_cartesian(domain, n, k)
    if family == "cartesian":
        return mesh
    if family == "random":
        return perturb_random(mesh, magnitude_fraction, seed)
    if family == "smooth":
        return map_smooth(mesh)
    raise ValueError(f"unknown mesh family {family!r}; expected one of {FAMILIES}")
