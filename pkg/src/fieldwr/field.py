"""Space-discrete eddy-current field model.

The field DAE is::

    M a' + K(a) a - X i_m = 0,      X^T a' = v_c

In a 2D cross-section the vector potential only has a z-component, so the
lowest-order edge elements reduce to nodal P1 elements for ``A_z`` and curls
become rotated gradients. ``|B|^2 = |grad A_z|^2`` on each triangle.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import structured_mesh

MU0 = 4e-7 * math.pi
NU0 = 1.0 / MU0


class FieldModelError(ValueError):
    pass


# reluctivity laws


@dataclass(frozen=True)
class ConstantReluctivity:
    nu: float

    is_linear = True

    def __post_init__(self):
        if not self.nu > 0:
            raise FieldModelError(f"reluctivity must be positive, got {self.nu}")

    def __call__(self, b2):
        return np.full_like(np.asarray(b2, dtype=float), self.nu)

    def derivative(self, b2):
        return np.zeros_like(np.asarray(b2, dtype=float))


@dataclass(frozen=True)
class BrauerReluctivity:
    """``nu(b2) = k1 * exp(k2 * b2) + k3`` with ``b2 = |B|^2``.

    The defaults are not fitted to any particular steel; they keep
    ``nu`` between ``NU0/5000`` and ``NU0`` for ``|B|`` up to about 2.5 T.
    """

    k1: float = 3.8
    k2: float = 2.17
    k3: float = NU0 / 5000

    is_linear = False

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or not self.k3 > 0:
            raise FieldModelError("Brauer law needs k1, k2 >= 0 and k3 > 0 to be monotone")

    def __call__(self, b2):
        return self.k1 * np.exp(self.k2 * np.asarray(b2, dtype=float)) + self.k3

    def derivative(self, b2):
        return self.k1 * self.k2 * np.exp(self.k2 * np.asarray(b2, dtype=float))


@dataclass(frozen=True)
class Material:
    sigma: float = 0.0
    nu: object = field(default_factory=lambda: ConstantReluctivity(NU0))

    def __post_init__(self):
        if self.sigma < 0:
            raise FieldModelError(f"conductivity must be non-negative, got {self.sigma}")
        if isinstance(self.nu, (int, float)):
            object.__setattr__(self, "nu", ConstantReluctivity(float(self.nu)))


@dataclass(frozen=True)
class CoilSpec:
    """Stranded coil made of one or more ``(region, sign)`` sides.

    Uncoupled coils carry an imposed zero current and get no column in ``X``.
    """

    name: str
    turns: float
    sides: tuple
    coupled: bool = True


# stiffness operators


class LinearStiffness:
    is_linear = True

    def __init__(self, K):
        self.K = sp.csr_matrix(K, dtype=float)
        self.n = self.K.shape[0]

    def matrix(self, a):
        return self.K

    def apply(self, a):
        return self.K @ a

    def jacobian(self, a):
        return self.K


class FEStiffness:
    """``K(a)`` assembled on a P1 mesh with per-triangle reluctivity laws."""

    def __init__(self, grads, areas, laws, dofs):
        self.grads = grads  # (nt, 3, 2)
        self.areas = areas
        self.dofs = dofs  # (nt, 3), -1 on Dirichlet vertices
        self.n = int(dofs.max()) + 1
        self.laws = laws  # list of (law, triangle index array)
        self.is_linear = all(law.is_linear for law, _ in laws)
        self._local = self.areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
        rows = np.repeat(dofs, 3, axis=1)
        cols = np.tile(dofs, (1, 3))
        self._mask = ((rows >= 0) & (cols >= 0)).ravel()
        self._rows = rows.ravel()[self._mask]
        self._cols = cols.ravel()[self._mask]
        if self.is_linear:
            self._K0 = self._assemble(self._nu(np.zeros(len(areas))))

    def _nu(self, b2):
        nu = np.empty_like(b2)
        for law, tri in self.laws:
            nu[tri] = law(b2[tri])
        return nu

    def _dnu(self, b2):
        d = np.empty_like(b2)
        for law, tri in self.laws:
            d[tri] = law.derivative(b2[tri])
        return d

    def _assemble(self, local):
        if local.ndim == 1:
            local = local[:, None, None] * self._local
        data = local.reshape(len(self.areas), 9).ravel()[self._mask]
        return sp.csr_matrix((data, (self._rows, self._cols)), shape=(self.n, self.n))

    def flux_density_squared(self, a):
        a_loc = np.where(self.dofs >= 0, np.append(a, 0.0)[self.dofs], 0.0)
        g = np.einsum("ti,tid->td", a_loc, self.grads)
        return np.einsum("td,td->t", g, g), g

    def matrix(self, a):
        if self.is_linear:
            return self._K0
        b2, _ = self.flux_density_squared(a)
        return self._assemble(self._nu(b2))

    def apply(self, a):
        return self.matrix(a) @ a

    def jacobian(self, a):
        if self.is_linear:
            return self._K0
        b2, g = self.flux_density_squared(a)
        proj = np.einsum("tid,td->ti", self.grads, g)
        extra = (2.0 * self._dnu(b2) * self.areas)[:, None, None] * np.einsum("ti,tj->tij", proj, proj)
        return self._assemble(self._nu(b2)[:, None, None] * self._local + extra)


class BlockStiffness:
    """Block-diagonal composition of independent stiffness operators."""

    def __init__(self, blocks):
        self.blocks = list(blocks)
        self.offsets = np.cumsum([0] + [b.n for b in self.blocks])
        self.n = int(self.offsets[-1])
        self.is_linear = all(b.is_linear for b in self.blocks)

    def _parts(self, a):
        return [a[lo:hi] for lo, hi in zip(self.offsets[:-1], self.offsets[1:])]

    def matrix(self, a):
        return sp.block_diag([b.matrix(p) for b, p in zip(self.blocks, self._parts(a))], format="csr")

    def apply(self, a):
        return np.concatenate([b.apply(p) for b, p in zip(self.blocks, self._parts(a))])

    def jacobian(self, a):
        return sp.block_diag([b.jacobian(p) for b, p in zip(self.blocks, self._parts(a))], format="csr")


# the model


class FieldModel:
    """The triple ``(M, K(.), X)`` of a space-discrete field model.

    Parameters
    ----------
    M : sparse or dense (n, n)
    stiffness : LinearStiffness, FEStiffness or BlockStiffness
    X : array (n, m), one column per coupled coil
    coils : list of CoilSpec, optional
        Coil metadata, including uncoupled coils.
    mesh : Mesh2D, optional
    """

    def __init__(self, M, stiffness, X, coils=None, mesh=None, dof_vertices=None):
        self.M = sp.csr_matrix(M, dtype=float)
        self.stiffness = stiffness
        X = np.asarray(X, dtype=float)
        self.X = X.reshape(-1, 1) if X.ndim == 1 else X
        self.coils = list(coils or [])
        self.mesh = mesh
        self.dof_vertices = dof_vertices
        n = self.M.shape[0]
        if self.M.shape != (n, n) or stiffness.n != n or self.X.shape[0] != n:
            raise FieldModelError(
                f"dimension mismatch: M {self.M.shape}, K {stiffness.n}, X {self.X.shape}"
            )
        if n == 0:
            raise FieldModelError("field model has no degrees of freedom")

    @property
    def n_dof(self):
        return self.M.shape[0]

    @property
    def n_ports(self):
        return self.X.shape[1]

    @property
    def is_linear(self):
        return self.stiffness.is_linear

    def K(self, a):
        return self.stiffness.matrix(a)

    def Ka(self, a):
        return self.stiffness.apply(a)

    def dKa(self, a):
        return self.stiffness.jacobian(a)

    def port_current(self, a):
        """Coil currents consistent with ``a``.

        Exact whenever ``X^T M = 0``, since then ``X^T (K(a) a - X i) = 0``.
        """
        return np.linalg.solve(self.X.T @ self.X, self.X.T @ self.Ka(a))

    def algebraic_rows(self):
        """Indices of the rows of ``M`` that vanish identically."""
        M = self.M.tocsr()
        nnz_rows = np.flatnonzero(np.abs(M).sum(axis=1).A1 > 0)
        return np.setdiff1d(np.arange(self.n_dof), nnz_rows)

    def select_ports(self, columns):
        return FieldModel(self.M, self.stiffness, self.X[:, list(columns)], self.coils, self.mesh, self.dof_vertices)


def equivalent_inductance(model, a=None):
    """``X^T K(a)^{-1} X``, the low-frequency inductance matrix of the ports."""
    if a is None:
        a = np.zeros(model.n_dof)
    sol = spla.splu(sp.csc_matrix(model.K(a))).solve(model.X)
    return model.X.T @ sol


def eval_field_residual(model, a_new, a_old, dt, i_m, v_c):
    """Implicit Euler residual of the field DAE, stacked as (field rows, port rows)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    da = (np.asarray(a_new) - np.asarray(a_old)) / dt
    i_m = np.atleast_1d(np.asarray(i_m, dtype=float))
    v_c = np.atleast_1d(np.asarray(v_c, dtype=float))
    r_field = model.M @ da + model.Ka(a_new) - model.X @ i_m
    r_port = model.X.T @ da - v_c
    return np.concatenate([r_field, r_port])


# finite element assembly


_MIDPOINTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def assemble_fe(mesh, materials, coils):
    """Assemble ``(M, K(.), X)`` with P1 elements on ``mesh``.

    Parameters
    ----------
    mesh : Mesh2D
    materials : dict
        Region tag -> :class:`Material`. Every region present in the mesh
        needs an entry.
    coils : list of CoilSpec
        At least one must be coupled. The winding density on a side is
        ``sign * turns / area(side)``.
    """
    coils = list(coils)
    if not any(c.coupled for c in coils):
        raise FieldModelError("at least one coupled coil is required")
    missing = set(np.unique(mesh.regions)) - set(materials)
    if missing:
        raise FieldModelError(f"no material for regions {sorted(missing)}")

    free = np.ones(mesh.n_vertices, dtype=bool)
    free[mesh.dirichlet] = False
    n = int(free.sum())
    if n == 0:
        raise FieldModelError("empty model: every vertex is Dirichlet")
    dof_of_vertex = np.full(mesh.n_vertices, -1)
    dof_of_vertex[free] = np.arange(n)
    dofs = dof_of_vertex[mesh.triangles]

    p = mesh.vertices[mesh.triangles]
    areas = mesh.areas()
    # grad phi_i = (y_j - y_k, x_k - x_j) / (2 area), (i, j, k) cyclic
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    grads /= (2 * areas)[:, None, None]

    laws = []
    sigma = np.zeros(mesh.n_triangles)
    for region, mat in sorted(materials.items()):
        tri = np.flatnonzero(mesh.regions == region)
        if len(tri):
            laws.append((mat.nu, tri))
            sigma[tri] = mat.sigma
    stiffness = FEStiffness(grads, areas, laws, dofs)

    # mass matrix, edge-midpoint quadrature (exact for P1 x P1)
    quad = np.einsum("qi,qj->ij", _MIDPOINTS, _MIDPOINTS) / 3.0
    local_m = (sigma * areas)[:, None, None] * quad[None]
    M = _scatter(local_m, dofs, n)

    columns = []
    for coil in coils:
        if not coil.coupled:
            continue
        col = np.zeros(mesh.n_vertices)
        for region, sign in coil.sides:
            tri = np.flatnonzero(mesh.regions == region)
            if len(tri) == 0:
                raise FieldModelError(f"coil {coil.name!r}: region {region} is empty")
            chi = sign * coil.turns / areas[tri].sum()
            # midpoint rule: integral of phi_i over a triangle is area / 3
            weights = _MIDPOINTS.sum(axis=0) / 3.0
            np.add.at(col, mesh.triangles[tri], chi * areas[tri, None] * weights[None, :])
        columns.append(col[free])
    X = np.column_stack(columns)
    return FieldModel(M, stiffness, X, coils=coils, mesh=mesh, dof_vertices=np.flatnonzero(free))


def _scatter(local, dofs, n):
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    data = local.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    return sp.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(n, n))


# built-in geometry

# region tags of the transformer-lite cross-section
AIR, CORE, PRIMARY_GO, PRIMARY_RETURN, SECONDARY_GO, SECONDARY_RETURN = range(6)

# rectangles in units of 1/16 of the unit square: (x0, x1, y0, y1)
_CORE_OUTER = (3, 13, 3, 13)
_CORE_WINDOW = (6, 10, 6, 10)
_COIL_SIDES = {
    PRIMARY_GO: (7, 8, 7, 9),
    PRIMARY_RETURN: (1, 2, 7, 9),
    SECONDARY_GO: (8, 9, 7, 9),
    SECONDARY_RETURN: (14, 15, 7, 9),
}

TRANSFORMER_TURNS = 50.0


def _inside(box, x, y):
    x0, x1, y0, y1 = (v / 16.0 for v in box)
    return x0 < x < x1 and y0 < y < y1


def _transformer_region(x, y):
    for region, box in _COIL_SIDES.items():
        if _inside(box, x, y):
            return region
    if _inside(_CORE_OUTER, x, y) and not _inside(_CORE_WINDOW, x, y):
        return CORE
    return AIR


def transformer_lite(n=33, sigma_core=0.0, mu_r=1000.0, core_law=None, turns=TRANSFORMER_TURNS):
    """Mesh, materials and coils of a single-phase core-type transformer.

    A square core ring sits in the unit square. The primary winding wraps
    the left leg, the secondary the right leg; each winding has one side in
    the core window and one outside. Coils are separated from the core by
    an air gap so that ``X^T M = 0`` holds exactly. The secondary is
    uncoupled (zero current). ``n - 1`` must be a multiple of 16 for the
    regions to align with the grid.
    """
    if (n - 1) % 16:
        raise FieldModelError("transformer-lite needs n - 1 divisible by 16")
    mesh = structured_mesh(n, _transformer_region)
    if core_law is None:
        core_law = ConstantReluctivity(NU0 / mu_r)
    materials = {
        AIR: Material(0.0, NU0),
        CORE: Material(sigma_core, core_law),
        PRIMARY_GO: Material(0.0, NU0),
        PRIMARY_RETURN: Material(0.0, NU0),
        SECONDARY_GO: Material(0.0, NU0),
        SECONDARY_RETURN: Material(0.0, NU0),
    }
    coils = [
        CoilSpec("primary", turns, ((PRIMARY_GO, 1), (PRIMARY_RETURN, -1)), coupled=True),
        CoilSpec("secondary", turns, ((SECONDARY_GO, 1), (SECONDARY_RETURN, -1)), coupled=False),
    ]
    return mesh, materials, coils


BUILTINS = {
    "transformer-lite": {},
    "transformer-lite-eddy": {"sigma_core": 1e3},
    "transformer-lite-nonlinear": {"core_law": BrauerReluctivity()},
}


def builtin_field_model(name, **overrides):
    try:
        params = dict(BUILTINS[name])
    except KeyError:
        raise FieldModelError(f"unknown builtin field model {name!r}; known: {sorted(BUILTINS)}") from None
    params.update(overrides)
    return assemble_fe(*transformer_lite(**params))


# MatrixMarket ingestion / export


def _read_mm(path):
    return scipy.io.mmread(path)


def load_matrix_model(paths, strict=True):
    """Read a linear model from MatrixMarket files.

    Parameters
    ----------
    paths : dict or str
        ``{"M": path, "K": path, "X": path}`` or a directory holding
        ``M.mtx``, ``K.mtx`` and ``X.mtx``.
    strict : bool
        If True, reject asymmetric ``M`` (beyond ``1e-12`` relative) and
        rank-deficient ``X``. ``validate_assumptions`` reports these
        instead when ``strict=False``.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = {k: os.path.join(paths, f"{k}.mtx") for k in "MKX"}
    M = sp.csr_matrix(_read_mm(paths["M"]), dtype=float)
    K = sp.csr_matrix(_read_mm(paths["K"]), dtype=float)
    X = _read_mm(paths["X"])
    X = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or K.shape != (n, n) or X.shape[0] != n:
        raise FieldModelError(f"dimension mismatch: M {M.shape}, K {K.shape}, X {X.shape}")
    if strict:
        if _asymmetry(M) > 1e-12:
            raise FieldModelError("M is not symmetric")
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise FieldModelError("X rank-deficient")
    return FieldModel(M, LinearStiffness(K), X)


def export_matrix_model(model, directory):
    """Write ``M.mtx``, ``K.mtx`` and ``X.mtx`` (coordinate format) to ``directory``."""
    if not model.is_linear:
        raise FieldModelError("only linear models can be exported")
    os.makedirs(directory, exist_ok=True)
    K = model.K(np.zeros(model.n_dof))
    scipy.io.mmwrite(os.path.join(directory, "M.mtx"), sp.coo_matrix(model.M), precision=17)
    scipy.io.mmwrite(os.path.join(directory, "K.mtx"), sp.coo_matrix(K), precision=17)
    scipy.io.mmwrite(os.path.join(directory, "X.mtx"), sp.coo_matrix(model.X), precision=17)
    return {k: os.path.join(directory, f"{k}.mtx") for k in "MKX"}


def _asymmetry(A):
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0:
        return 0.0
    diff = A - A.T
    return (abs(diff).max() if diff.nnz else 0.0) / scale


# structural checks


@dataclass
class CheckResult:
    ok: bool
    detail: str


@dataclass
class ValidationReport:
    symmetric: CheckResult
    pencil_positive_definite: CheckResult
    coupling_full_rank: CheckResult
    strongly_monotone: CheckResult
    monotonicity_constant: float = float("nan")

    @property
    def items(self):
        return {
            "a": ("M symmetric", self.symmetric),
            "b": ("M + K(a) positive definite", self.pencil_positive_definite),
            "c": ("X full column rank", self.coupling_full_rank),
            "d": ("a -> K(a) a strongly monotone", self.strongly_monotone),
        }

    @property
    def passed(self):
        return all(item.ok for _, item in self.items.values())

    def to_text(self):
        lines = []
        for key, (label, item) in self.items.items():
            lines.append(f"({key}) {label}: {'PASS' if item.ok else 'FAIL'} ({item.detail})")
        return "\n".join(lines)


def validate_assumptions(model, samples=50, seed=0, scale=1e-2, monotone_samples=None):
    """Check the structural properties the field model has to satisfy.

    (a) ``M`` symmetric to ``1e-12`` relative; (b) Cholesky of
    ``M + K(a)`` at ``samples`` random states; (c) ``rank(X)`` equal to the
    column count; (d) ``(a2 - a1)^T (K(a2) a2 - K(a1) a1) >= 1e-12 |a2 - a1|^2``
    over ``monotone_samples`` random pairs (defaults to ``samples``).
    Random states are ``scale * N(0, 1)``, drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    n = model.n_dof
    if monotone_samples is None:
        monotone_samples = samples

    asym = _asymmetry(model.M)
    symmetric = CheckResult(asym <= 1e-12, f"relative asymmetry {asym:.3g}")

    failures = 0
    for _ in range(samples):
        a = scale * rng.standard_normal(n)
        A = (model.M + model.K(a)).toarray()
        if _asymmetry(sp.csr_matrix(A)) > 1e-12:
            failures += 1
            continue
        try:
            scipy.linalg.cholesky(A, lower=True)
        except np.linalg.LinAlgError:
            failures += 1
    pencil = CheckResult(failures == 0, f"{samples - failures}/{samples} factorizations succeeded")

    rank = np.linalg.matrix_rank(model.X)
    full_rank = CheckResult(rank == model.X.shape[1], f"rank {rank} of {model.X.shape[1]} columns")

    mu = np.inf
    for _ in range(monotone_samples):
        a1 = scale * rng.standard_normal(n)
        a2 = scale * rng.standard_normal(n)
        d = a2 - a1
        mu = min(mu, d @ (model.Ka(a2) - model.Ka(a1)) / (d @ d))
    monotone = CheckResult(
        bool(mu >= 1e-12), f"min ratio {mu:.6g} over {monotone_samples} pairs"
    )
    return ValidationReport(symmetric, pencil, full_rank, monotone, float(mu))


def couple_field_models(models, refs):
    """Combine field models into one with a column per port reference.

    Parameters
    ----------
    models : dict
        Field id -> FieldModel.
    refs : list of (field id, coil index)
        One entry per circuit port, in port order.
    """
    order = []
    for fid, _ in refs:
        if fid not in models:
            raise FieldModelError(f"unknown field model {fid!r}")
        if fid not in order:
            order.append(fid)
    for fid, coil in refs:
        if not 0 <= coil < models[fid].n_ports:
            raise FieldModelError(f"field {fid!r} has no coupled coil {coil}")
    if len(order) == 1:
        model = models[order[0]]
        return model.select_ports([coil for _, coil in refs])

    offsets = {}
    pos = 0
    for fid in order:
        offsets[fid] = pos
        pos += models[fid].n_dof
    X = np.zeros((pos, len(refs)))
    for j, (fid, coil) in enumerate(refs):
        m = models[fid]
        X[offsets[fid] : offsets[fid] + m.n_dof, j] = m.X[:, coil]
    M = sp.block_diag([models[fid].M for fid in order], format="csr")
    stiffness = BlockStiffness([models[fid].stiffness for fid in order])
    return FieldModel(M, stiffness, X)
