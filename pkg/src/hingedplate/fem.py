"""Conforming C1 discretization of the plate bending energy.

Tensor-product cubic Hermite rectangles (value, both first derivatives and
the cross derivative at every node) discretize the energy inner product

    (u, v) = int  du dv + (1-sigma) (2 u_xy v_xy - u_xx v_yy - u_yy v_xx)

on the uniform grid of (0, pi) x (-l, l).  The short edges carry the only
essential constraints (value and tangential-derivative dofs pinned to zero);
the free-edge conditions on the long edges are natural and never imposed.

Element matrices and load vectors are accumulated in extended precision:
the fourth-order operator's conditioning (~h^-4) otherwise drowns the
fine-mesh discretization error in assembly roundoff.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

LONG = np.longdouble

#: per-node dof order
DOF_VALUE, DOF_DX, DOF_DY, DOF_DXY = 0, 1, 2, 3

#: sign flips of the four dof types under a reflection of y and of x
_Y_MIRROR_SIGNS = np.array([1.0, 1.0, -1.0, -1.0])
_X_MIRROR_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])

_GAUSS_PTS, _GAUSS_WTS = np.polynomial.legendre.leggauss(4)


# ---------------------------------------------------------------------------
# mesh and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh:
    """Uniform rectangular grid of the plate with nx x ny elements."""

    nx: int
    ny: int
    half_width: float

    def __post_init__(self):
        if self.nx < 4 or self.ny < 2:
            raise ValueError(f"mesh must be at least 4x2 elements, got {self.nx}x{self.ny}")
        if self.half_width <= 0.0:
            raise ValueError("half_width must be positive")

    @property
    def hx(self):
        return np.pi / self.nx

    @property
    def hy(self):
        return 2.0 * self.half_width / self.ny

    @property
    def xs(self):
        return np.linspace(0.0, np.pi, self.nx + 1)

    @property
    def ys(self):
        return np.linspace(-self.half_width, self.half_width, self.ny + 1)

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_dofs(self):
        return 4 * self.n_nodes

    def node_index(self, i, j):
        """Flat node number; nodes are row-major in x then y (x fastest)."""
        return j * (self.nx + 1) + i

    def dof_index(self, i, j, d):
        return 4 * self.node_index(i, j) + d

    def node_coordinates(self):
        """(x, y) arrays of all nodes in flat node order."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return X.ravel(), Y.ravel()

    def locate(self, x, y):
        """Element (ei, ej) containing (x, y) and local coordinates in [0,1]^2."""
        l = self.half_width
        tol = 1e-12 * max(1.0, l)
        if not (-tol <= x <= np.pi + tol) or not (-l - tol <= y <= l + tol):
            raise ValueError(f"point ({x}, {y}) outside the closed plate")
        ei = min(int(np.clip(x / self.hx, 0, self.nx - 1)), self.nx - 1)
        ej = min(int(np.clip((y + l) / self.hy, 0, self.ny - 1)), self.ny - 1)
        tx = (x - ei * self.hx) / self.hx
        ty = (y + l - ej * self.hy) / self.hy
        return ei, ej, float(np.clip(tx, 0.0, 1.0)), float(np.clip(ty, 0.0, 1.0))

    def element_dofs(self, ei, ej):
        """Global dof numbers of the 16 local dofs of element (ei, ej)."""
        out = np.empty(16, dtype=np.int64)
        k = 0
        for (ii, jj) in ((0, 0), (1, 0), (0, 1), (1, 1)):
            base = 4 * self.node_index(ei + ii, ej + jj)
            for d in range(4):
                out[k] = base + d
                k += 1
        return out

    def free_dof_mask(self):
        """Essential constraints: value and y-derivative pinned on short edges."""
        free = np.ones(self.n_dofs, dtype=bool)
        for j in range(self.ny + 1):
            for i in (0, self.nx):
                free[self.dof_index(i, j, DOF_VALUE)] = False
                free[self.dof_index(i, j, DOF_DY)] = False
        return free


@dataclass
class DofField:
    """A C1 field given by its nodal (value, ux, uy, uxy) degrees of freedom."""

    mesh: Mesh
    dofs: np.ndarray

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=float)
        if self.dofs.shape != (self.mesh.n_dofs,):
            raise ValueError(f"expected {self.mesh.n_dofs} dofs, got {self.dofs.shape}")

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_dofs))

    @property
    def node_values(self):
        """Point values at nodes, flat node order."""
        return self.dofs[0::4]

    def value_grid(self):
        """Point values as a (ny+1, nx+1) grid."""
        return self.node_values.reshape(self.mesh.ny + 1, self.mesh.nx + 1)

    def sup_norm(self):
        return float(np.max(np.abs(self.node_values)))

    def __neg__(self):
        return DofField(self.mesh, -self.dofs)

    def __add__(self, other):
        return DofField(self.mesh, self.dofs + other.dofs)

    def __sub__(self, other):
        return DofField(self.mesh, self.dofs - other.dofs)


# ---------------------------------------------------------------------------
# Hermite basis
# ---------------------------------------------------------------------------

def _hermite_1d(t, h):
    """Cubic Hermite basis on one interval of length h, in local t in [0,1].

    Returns (N, dN, d2N), each of length 4 in the order value-left,
    slope-left, value-right, slope-right; derivatives are with respect to the
    physical coordinate and slope dofs represent physical derivatives.
    """
    t = LONG(t)
    h = LONG(h)
    N = np.array([1 - 3 * t ** 2 + 2 * t ** 3,
                  h * (t - 2 * t ** 2 + t ** 3),
                  3 * t ** 2 - 2 * t ** 3,
                  h * (t ** 3 - t ** 2)], dtype=LONG)
    dN = np.array([-6 * t + 6 * t ** 2,
                   h * (1 - 4 * t + 3 * t ** 2),
                   6 * t - 6 * t ** 2,
                   h * (3 * t ** 2 - 2 * t)], dtype=LONG) / h
    d2N = np.array([-6 + 12 * t,
                    h * (-4 + 6 * t),
                    6 - 12 * t,
                    h * (6 * t - 2)], dtype=LONG) / h ** 2
    return N, dN, d2N


def _local_rows(tx, ty, hx, hy, derivatives=False):
    """Rows of the 16 element basis functions at local point (tx, ty).

    Returns B (values) or (B, Bx, By, Bxx, Byy, Bxy) with physical
    derivatives when ``derivatives`` is set.
    """
    Nx, dNx, d2Nx = _hermite_1d(tx, hx)
    Ny, dNy, d2Ny = _hermite_1d(ty, hy)
    B = np.empty(16, dtype=LONG)
    if derivatives:
        Bx = np.empty(16, dtype=LONG)
        By = np.empty(16, dtype=LONG)
        Bxx = np.empty(16, dtype=LONG)
        Byy = np.empty(16, dtype=LONG)
        Bxy = np.empty(16, dtype=LONG)
    k = 0
    for (ii, jj) in ((0, 0), (1, 0), (0, 1), (1, 1)):
        for (a, b) in ((0, 0), (1, 0), (0, 1), (1, 1)):
            px, py = 2 * ii + a, 2 * jj + b
            B[k] = Nx[px] * Ny[py]
            if derivatives:
                Bx[k] = dNx[px] * Ny[py]
                By[k] = Nx[px] * dNy[py]
                Bxx[k] = d2Nx[px] * Ny[py]
                Byy[k] = Nx[px] * d2Ny[py]
                Bxy[k] = dNx[px] * dNy[py]
            k += 1
    if derivatives:
        return B, Bx, By, Bxx, Byy, Bxy
    return B


_ELEMENT_CACHE = {}


def element_stiffness(hx, hy, sigma):
    """16x16 element matrix of the energy inner product (extended precision).

    4x4 Gauss is exact here: the integrand is polynomial of degree at most
    six per direction.
    """
    key = (float(hx), float(hy), float(sigma))
    if key in _ELEMENT_CACHE:
        return _ELEMENT_CACHE[key]
    tq = (_GAUSS_PTS.astype(LONG) + 1) / 2
    wq = _GAUSS_WTS.astype(LONG) / 2
    sigma = LONG(sigma)
    K = np.zeros((16, 16), dtype=LONG)
    for tx, wx in zip(tq, wq):
        for ty, wy in zip(tq, wq):
            _, _, _, Bxx, Byy, Bxy = _local_rows(tx, ty, hx, hy, derivatives=True)
            lap = Bxx + Byy
            w = wx * wy * LONG(hx) * LONG(hy)
            K += w * (np.outer(lap, lap)
                      + (1 - sigma) * (2 * np.outer(Bxy, Bxy)
                                       - np.outer(Bxx, Byy) - np.outer(Byy, Bxx)))
    _ELEMENT_CACHE[key] = K
    return K


# ---------------------------------------------------------------------------
# loads and reinforcement regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadSpec:
    """A load: bounded density and/or finitely many signed point masses.

    ``density`` is a callable (x, y) -> values (broadcasting over arrays), a
    constant, or an array of per-node samples (interpolated bilinearly).
    ``point_masses`` is a tuple of (x, y, weight).  ``norm_tag`` records the
    ball the load is measured in: ``"dual"`` (total variation), ``"sup"``
    or ``"lp"``.
    """

    density: object = None
    point_masses: tuple = ()
    norm_tag: str = "dual"

    def __post_init__(self):
        if self.norm_tag not in ("dual", "sup", "lp"):
            raise ValueError(f"unknown norm tag {self.norm_tag!r}")
        object.__setattr__(self, "point_masses",
                           tuple((float(x), float(y), float(w))
                                 for (x, y, w) in self.point_masses))

    @classmethod
    def point(cls, x, y, weight=1.0):
        return cls(point_masses=((x, y, weight),))

    @classmethod
    def antisym_pair(cls, xi, eta):
        """Antisymmetric pair (delta_(xi,eta) - delta_(xi,-eta)) / 2."""
        return cls(point_masses=((xi, eta, 0.5), (xi, -eta, -0.5)))

    @property
    def is_pure_density(self):
        return self.density is not None and not self.point_masses

    def total_point_mass(self):
        return sum(abs(w) for (_, _, w) in self.point_masses)

    def validate(self, mesh):
        l = mesh.half_width
        tol = 1e-12 * max(1.0, l)
        for (x, y, _) in self.point_masses:
            if not (-tol <= x <= np.pi + tol and -l - tol <= y <= l + tol):
                raise ValueError(f"point mass at ({x}, {y}) outside the closed plate")

    def negated(self):
        dens = self.density
        if dens is not None:
            if callable(dens):
                orig = dens
                dens = lambda x, y: -orig(x, y)
            else:
                dens = -np.asarray(dens) if np.ndim(dens) else -float(dens)
        masses = tuple((x, y, -w) for (x, y, w) in self.point_masses)
        return replace(self, density=dens, point_masses=masses)


@dataclass(frozen=True)
class ReinforcementMask:
    """Element-resolution indicator of the reinforced region D.

    ``elements`` has shape (ny, nx); densities satisfy 0 < alpha <= 1 <= beta
    and the degenerate case alpha = beta = 1 collapses every weighting.
    """

    elements: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "elements", np.asarray(self.elements, dtype=bool))
        if not (0.0 < self.alpha <= 1.0 <= self.beta):
            raise ValueError(f"densities must satisfy 0 < alpha <= 1 <= beta, "
                             f"got alpha={self.alpha}, beta={self.beta}")

    @property
    def is_degenerate(self):
        return self.alpha == 1.0 and self.beta == 1.0

    def target_area(self, mesh):
        """|D| imposed by the density balance |D| = |Omega| (1-a)/(b-a)."""
        if self.beta == self.alpha:
            raise ValueError("degenerate densities impose no area constraint")
        area_omega = 2.0 * np.pi * mesh.half_width
        return area_omega * (1.0 - self.alpha) / (self.beta - self.alpha)

    def area(self, mesh):
        return float(np.count_nonzero(self.elements)) * mesh.hx * mesh.hy

    def area_defect(self, mesh):
        """Signed defect of |D| from its target, in units of one element."""
        return (self.area(mesh) - self.target_area(mesh)) / (mesh.hx * mesh.hy)

    def check_shape(self, mesh):
        if self.elements.shape != (mesh.ny, mesh.nx):
            raise ValueError(f"mask shape {self.elements.shape} does not match "
                             f"mesh {mesh.nx}x{mesh.ny}")

    def validate(self, mesh, tol_elements=1.0):
        self.check_shape(mesh)
        if not self.is_degenerate and abs(self.area_defect(mesh)) > tol_elements:
            raise ValueError(
                f"|D|={self.area(mesh):.6g} misses the density balance "
                f"|Omega|(1-alpha)/(beta-alpha)={self.target_area(mesh):.6g} "
                f"by more than {tol_elements:g} element(s)")

    def complement(self):
        return ReinforcementMask(~self.elements, self.alpha, self.beta)

    @classmethod
    def from_indicator(cls, mesh, indicator, alpha, beta):
        """Rasterize a region indicator (x, y) -> bool by element centers."""
        xc = (np.arange(mesh.nx) + 0.5) * mesh.hx
        yc = -mesh.half_width + (np.arange(mesh.ny) + 0.5) * mesh.hy
        X, Y = np.meshgrid(xc, yc)
        return cls(indicator(X, Y), alpha, beta)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

class AssembledForm:
    """Symmetric operator on the dof space, kept in extended precision.

    Holds deduplicated COO triplets in longdouble plus a cached float64 CSR
    view.  Weighted combinations (for two-material energies) stay exact at
    the triplet level.
    """

    def __init__(self, shape, rows, cols, vals):
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        keep = np.ones(len(rows), dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(keep)
        self.shape = shape
        self.rows = rows[starts]
        self.cols = cols[starts]
        self.vals = np.add.reduceat(vals, starts)
        self._csr = None

    @property
    def matrix(self):
        """float64 CSR view of the operator."""
        if self._csr is None:
            self._csr = sp.coo_matrix(
                (self.vals.astype(float), (self.rows, self.cols)),
                shape=self.shape).tocsr()
            self._csr.sum_duplicates()
        return self._csr

    def matvec_extended(self, x):
        """Operator application in longdouble."""
        out = np.zeros(self.shape[0], dtype=LONG)
        np.add.at(out, self.rows, self.vals * x[self.cols])
        return out

    def scaled(self, c):
        return AssembledForm(self.shape, self.rows.copy(), self.cols.copy(),
                             self.vals * LONG(c))

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError("shape mismatch")
        return AssembledForm(self.shape,
                             np.concatenate([self.rows, other.rows]),
                             np.concatenate([self.cols, other.cols]),
                             np.concatenate([self.vals, other.vals]))


def _element_selector(mesh, region):
    if region is None:
        return np.ones((mesh.ny, mesh.nx), dtype=bool)
    if isinstance(region, ReinforcementMask):
        region.check_shape(mesh)
        return region.elements
    sel = np.asarray(region, dtype=bool)
    if sel.shape != (mesh.ny, mesh.nx):
        raise ValueError(f"region shape {sel.shape} does not match mesh")
    return sel


def assemble_bilinear(mesh, params, region=None):
    """Galerkin matrix of the energy inner product over ``region``.

    ``region`` is None for the whole plate, a ReinforcementMask, or a boolean
    (ny, nx) element selector.  Restriction to a region simply drops the
    element contributions outside it; matrices over complementary regions add
    exactly to the full one.
    """
    sel = _element_selector(mesh, region)
    Ke = element_stiffness(mesh.hx, mesh.hy, params.sigma)
    n_sel = int(np.count_nonzero(sel))
    rows = np.empty(256 * n_sel, dtype=np.int64)
    cols = np.empty(256 * n_sel, dtype=np.int64)
    vals = np.empty(256 * n_sel, dtype=LONG)
    flat = Ke.ravel()
    k = 0
    for ej in range(mesh.ny):
        for ei in range(mesh.nx):
            if not sel[ej, ei]:
                continue
            gl = mesh.element_dofs(ei, ej)
            rows[k:k + 256] = np.repeat(gl, 16)
            cols[k:k + 256] = np.tile(gl, 16)
            vals[k:k + 256] = flat
            k += 256
    return AssembledForm((mesh.n_dofs, mesh.n_dofs), rows, cols, vals)


def _density_evaluator(mesh, density):
    if callable(density):
        return density
    arr = np.asarray(density, dtype=float)
    if arr.ndim == 0:
        c = float(arr)
        return lambda x, y: np.full(np.shape(x), c)
    if arr.shape == (mesh.n_nodes,):
        grid = arr.reshape(mesh.ny + 1, mesh.nx + 1)

        def interp(x, y):
            fi = np.clip(np.asarray(x) / mesh.hx, 0, mesh.nx)
            fj = np.clip((np.asarray(y) + mesh.half_width) / mesh.hy, 0, mesh.ny)
            i0 = np.clip(fi.astype(int), 0, mesh.nx - 1)
            j0 = np.clip(fj.astype(int), 0, mesh.ny - 1)
            tx, ty = fi - i0, fj - j0
            return ((1 - tx) * (1 - ty) * grid[j0, i0] + tx * (1 - ty) * grid[j0, i0 + 1]
                    + (1 - tx) * ty * grid[j0 + 1, i0] + tx * ty * grid[j0 + 1, i0 + 1])

        return interp
    raise ValueError("density must be callable, scalar, or per-node samples")


def assemble_load(mesh, load, weight=None):
    """Dof functional of a load, in extended precision.

    Point masses evaluate the C1 basis exactly at their location (legitimate
    because the field space embeds in continuous functions).  With ``weight``
    given, the density is multiplied by beta on D and alpha off D; point
    masses cannot be weighted.
    """
    load.validate(mesh)
    if weight is not None and load.point_masses and not weight.is_degenerate:
        raise ValueError("density weighting applies to integrable loads only; "
                         "remove point masses")
    b = np.zeros(mesh.n_dofs, dtype=LONG)
    if load.density is not None:
        f = _density_evaluator(mesh, load.density)
        tq = (_GAUSS_PTS + 1) / 2
        wq = _GAUSS_WTS / 2
        brows = [[_local_rows(tx, ty, mesh.hx, mesh.hy) for ty in tq] for tx in tq]
        wsel = None
        if weight is not None and not weight.is_degenerate:
            weight.check_shape(mesh)
            wsel = np.where(weight.elements, weight.beta, weight.alpha)
        scale = LONG(mesh.hx) * LONG(mesh.hy)
        for ej in range(mesh.ny):
            y0 = -mesh.half_width + ej * mesh.hy
            for ei in range(mesh.nx):
                x0 = ei * mesh.hx
                gl = mesh.element_dofs(ei, ej)
                w_elem = 1.0 if wsel is None else wsel[ej, ei]
                fe = np.zeros(16, dtype=LONG)
                for a, (tx, wx) in enumerate(zip(tq, wq)):
                    for bq, (ty, wy) in enumerate(zip(tq, wq)):
                        fv = float(np.asarray(f(x0 + tx * mesh.hx, y0 + ty * mesh.hy)))
                        fe += LONG(wx * wy * w_elem * fv) * brows[a][bq]
                b[gl] += fe * scale
    for (x, y, w) in load.point_masses:
        ei, ej, tx, ty = mesh.locate(x, y)
        b[mesh.element_dofs(ei, ej)] += LONG(w) * _local_rows(tx, ty, mesh.hx, mesh.hy)
    return b


def apply_functional(load_vector, field):
    """Value of an assembled load functional on a field."""
    return float(np.dot(load_vector.astype(float), field.dofs))


# ---------------------------------------------------------------------------
# point evaluation and symmetry
# ---------------------------------------------------------------------------

def point_eval(field, q):
    """C1 interpolant value at a point of the closed plate."""
    x, y = q
    mesh = field.mesh
    ei, ej, tx, ty = mesh.locate(x, y)
    B = _local_rows(tx, ty, mesh.hx, mesh.hy).astype(float)
    return float(B @ field.dofs[mesh.element_dofs(ei, ej)])


def _mirror_permutation(mesh, axis):
    """Dof permutation and signs realizing y -> -y (axis='y') or x -> pi - x."""
    perm = np.empty(mesh.n_dofs, dtype=np.int64)
    signs = np.empty(mesh.n_dofs)
    dof_signs = _Y_MIRROR_SIGNS if axis == "y" else _X_MIRROR_SIGNS
    for j in range(mesh.ny + 1):
        for i in range(mesh.nx + 1):
            mi, mj = (i, mesh.ny - j) if axis == "y" else (mesh.nx - i, j)
            src = 4 * mesh.node_index(mi, mj)
            dst = 4 * mesh.node_index(i, j)
            for d in range(4):
                perm[dst + d] = src + d
                signs[dst + d] = dof_signs[d]
    return perm, signs


def reflect_y(field):
    """The field composed with the reflection y -> -y."""
    perm, signs = _mirror_permutation(field.mesh, "y")
    return DofField(field.mesh, signs * field.dofs[perm])


def reflect_x(field):
    """The field composed with the mirror x -> pi - x."""
    perm, signs = _mirror_permutation(field.mesh, "x")
    return DofField(field.mesh, signs * field.dofs[perm])


def symmetry_decompose(field):
    """Even and odd parts in y; the parts are energy-orthogonal."""
    mirrored = reflect_y(field)
    even = DofField(field.mesh, 0.5 * (field.dofs + mirrored.dofs))
    odd = DofField(field.mesh, 0.5 * (field.dofs - mirrored.dofs))
    return even, odd


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def energy_value(field, load, params, variant="base", mask=None):
    """Total energy of a field under a load: quadratic part minus work.

    ``variant`` selects the plain energy, the stiffness-weighted one ("E1",
    weights alpha off D and beta on D inside the quadratic part) or the
    density-weighted one ("E2", weights multiply the load density).  The
    density-weighted variant requires an integrable load: point masses are
    rejected.
    """
    mesh = field.mesh
    if variant not in ("base", "E1", "E2"):
        raise ValueError(f"unknown energy variant {variant!r}")
    if variant in ("E1", "E2") and mask is None:
        raise ValueError(f"variant {variant} needs a reinforcement mask")
    if variant == "E2" and load.point_masses:
        raise ValueError("density-weighted energy is undefined for point masses")

    if variant == "E1" and not mask.is_degenerate:
        k_full = assemble_bilinear(mesh, params)
        k_region = assemble_bilinear(mesh, params, region=mask)
        quad = (mask.alpha * _quad_form(k_full, field)
                + (mask.beta - mask.alpha) * _quad_form(k_region, field))
    else:
        quad = _quad_form(assemble_bilinear(mesh, params), field)

    weight = mask if variant == "E2" else None
    b = assemble_load(mesh, load, weight=weight)
    return 0.5 * quad - apply_functional(b, field)


def _quad_form(form, field):
    x = field.dofs.astype(LONG)
    return float(np.dot(x, form.matvec_extended(x)))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def field_to_csv(field, path):
    """Dump nodal dofs as CSV x,y,u,ux,uy,uxy (row-major in x then y)."""
    mesh = field.mesh
    X, Y = mesh.node_coordinates()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,u,ux,uy,uxy\n")
        for n in range(mesh.n_nodes):
            vals = field.dofs[4 * n:4 * n + 4]
            cells = [f"{v:.17g}" for v in (X[n], Y[n], *vals)]
            fh.write(",".join(cells) + "\n")
