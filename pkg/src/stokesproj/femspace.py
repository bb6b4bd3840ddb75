"""Lagrange finite elements on triangles: reference P1/P2 bases,
symmetric Gauss rules, and global DOF spaces.

Scalar degrees of freedom are numbered vertices first (mesh order) and,
for P2, edge midpoints after them (edge-table order).  A space with two
components (velocity) stores one coefficient block per component:
``u[0:ns]`` are the x-component coefficients and ``u[ns:2*ns]`` the
y-component ones, where ns is the scalar DOF count.

Vector-valued analytic fields are callables ``f(x, y) -> array`` whose
leading axis is the component, broadcasting over point arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import mesh as _mesh

_BARY_TOL = 1e-12


@dataclass(frozen=True)
class ReferenceElement:
    """Reference triangle element of degree 1 or 2.

    ``nodes`` holds the Lagrange nodes in reference coordinates (xi, eta)
    on the triangle {xi >= 0, eta >= 0, xi + eta <= 1}.
    """

    degree: int
    nodes: np.ndarray

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    def eval(self, points):
        """Basis values and reference gradients at reference points.

        points: (npts, 2) array of (xi, eta).
        Returns (values (npts, nb), gradients (npts, nb, 2)).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        xi, eta = pts[:, 0], pts[:, 1]
        lam0 = 1.0 - xi - eta
        if self.degree == 1:
            vals = np.stack([lam0, xi, eta], axis=1)
            grads = np.broadcast_to(
                np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
                (pts.shape[0], 3, 2),
            ).copy()
            return vals, grads
        # P2: vertex functions lam*(2 lam - 1), edge functions 4 lam_i lam_j
        # local nodes 3, 4, 5 sit on edges (0,1), (1,2), (2,0)
        vals = np.stack(
            [
                lam0 * (2.0 * lam0 - 1.0),
                xi * (2.0 * xi - 1.0),
                eta * (2.0 * eta - 1.0),
                4.0 * lam0 * xi,
                4.0 * xi * eta,
                4.0 * eta * lam0,
            ],
            axis=1,
        )
        zero = np.zeros_like(xi)
        gx = np.stack(
            [
                1.0 - 4.0 * lam0,
                4.0 * xi - 1.0,
                zero,
                4.0 * (lam0 - xi),
                4.0 * eta,
                -4.0 * eta,
            ],
            axis=1,
        )
        gy = np.stack(
            [
                1.0 - 4.0 * lam0,
                zero,
                4.0 * eta - 1.0,
                -4.0 * xi,
                4.0 * xi,
                4.0 * (lam0 - eta),
            ],
            axis=1,
        )
        return vals, np.stack([gx, gy], axis=2)


_P1_NODES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_P2_NODES = np.vstack([_P1_NODES, [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]])


def reference_element(degree):
    if degree == 1:
        return ReferenceElement(1, _P1_NODES)
    if degree == 2:
        return ReferenceElement(2, _P2_NODES)
    raise ValueError(f"unsupported element degree {degree}; only 1 and 2")


def eval_basis(elem, point):
    """Evaluate all shape functions of ``elem`` at one barycentric point.

    Returns (values (nb,), gradients (nb, 2)); the gradients are with
    respect to the reference coordinates and must be pushed through the
    element Jacobian for physical derivatives.
    """
    bary = np.asarray(point, dtype=float)
    if bary.shape != (3,):
        raise ValueError("expected a single barycentric triple")
    if abs(bary.sum() - 1.0) > _BARY_TOL:
        raise ValueError(f"barycentric coordinates must sum to 1, got {bary.sum()!r}")
    if np.any(bary < -_BARY_TOL):
        raise ValueError("point lies outside the closed reference triangle")
    vals, grads = elem.eval(np.array([[bary[1], bary[2]]]))
    return vals[0], grads[0]


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric Gauss rule on the reference triangle.

    ``points`` are barycentric, ``weights`` sum to the reference area 1/2.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def num_points(self):
        return self.weights.shape[0]

    def reference_points(self):
        """Quadrature points as (xi, eta) pairs."""
        return self.points[:, 1:3].copy()


def _orbit3(a):
    c = 1.0 - 2.0 * a
    return [(c, a, a), (a, c, a), (a, a, c)]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def quadrature(degree):
    """Triangle Gauss rule exact for polynomials up to ``degree`` (2, 4 or 6)."""
    if degree == 2:
        pts = [(0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)]
        wts = [1.0 / 6.0] * 3
    elif degree == 4:
        pts = _orbit3(0.445948490915965) + _orbit3(0.091576213509771)
        wts = [0.223381589678011 / 2.0] * 3 + [0.109951743655322 / 2.0] * 3
    elif degree == 6:
        pts = (
            _orbit3(0.249286745170910)
            + _orbit3(0.063089014491502)
            + _orbit6(0.310352451033785, 0.053145049844816)
        )
        wts = (
            [0.116786275726379 / 2.0] * 3
            + [0.050844906370207 / 2.0] * 3
            + [0.082851075618374 / 2.0] * 6
        )
    else:
        raise ValueError(f"unsupported quadrature degree {degree}; choose 2, 4 or 6")
    return QuadratureRule(degree, np.array(pts), np.array(wts))


@dataclass(frozen=True)
class FeSpace:
    """Global Lagrange space on a mesh.

    ``components`` is 1 for pressure-like scalars and 2 for velocities.
    Velocity spaces carry the homogeneous Dirichlet DOF set (every DOF
    whose node lies on the domain boundary, both components); scalar
    spaces have no constrained DOFs, the pressure nullspace being handled
    algebraically by the solvers.
    """

    mesh: _mesh.Mesh
    degree: int
    components: int
    element_dofs: np.ndarray
    node_coords: np.ndarray
    boundary_scalar: np.ndarray
    free_scalar: np.ndarray = field(repr=False)

    @property
    def num_scalar_dofs(self):
        return self.node_coords.shape[0]

    @property
    def num_dofs(self):
        return self.components * self.num_scalar_dofs

    @property
    def num_free_scalar(self):
        return self.free_scalar.shape[0]

    @property
    def reference(self):
        return reference_element(self.degree)

    def dirichlet_dofs(self):
        """Global indices of constrained DOFs (empty for scalar spaces)."""
        if self.components == 1:
            return np.empty(0, dtype=np.int64)
        ns = self.num_scalar_dofs
        b = np.flatnonzero(self.boundary_scalar)
        return np.concatenate([b, b + ns])

    def restrict(self, coeffs):
        """Drop Dirichlet entries: keep free scalar DOFs of each component."""
        coeffs = np.asarray(coeffs)
        if self.components == 1:
            return coeffs.copy()
        ns = self.num_scalar_dofs
        return np.concatenate([coeffs[self.free_scalar], coeffs[ns + self.free_scalar]])

    def extend(self, coeffs_free):
        """Inverse of restrict: insert zeros at Dirichlet DOFs."""
        if self.components == 1:
            return np.asarray(coeffs_free).copy()
        ns, nf = self.num_scalar_dofs, self.num_free_scalar
        out = np.zeros(self.num_dofs)
        out[self.free_scalar] = coeffs_free[:nf]
        out[ns + self.free_scalar] = coeffs_free[nf:]
        return out


def build_space(mesh, degree, components=1):
    """Construct a degree-1 or degree-2 Lagrange space over ``mesh``."""
    if degree not in (1, 2):
        raise ValueError(f"unsupported element degree {degree}; only 1 and 2")
    if components not in (1, 2):
        raise ValueError(f"components must be 1 or 2, got {components}")
    if degree == 1:
        element_dofs = mesh.triangles.copy()
        node_coords = mesh.vertices.copy()
        boundary_scalar = mesh.boundary_vertex.copy()
    else:
        nv = mesh.num_vertices
        element_dofs = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
        midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        node_coords = np.vstack([mesh.vertices, midpoints])
        # midpoint nodes of boundary edges (edges owned by a single triangle)
        boundary_scalar = np.concatenate(
            [mesh.boundary_vertex, mesh.edge_triangle_count == 1]
        )
    free_scalar = np.flatnonzero(~boundary_scalar)
    return FeSpace(
        mesh=mesh,
        degree=degree,
        components=components,
        element_dofs=element_dofs,
        node_coords=node_coords,
        boundary_scalar=boundary_scalar,
        free_scalar=free_scalar,
    )


def interpolate(space, f):
    """Nodal Lagrange interpolant: coefficient i equals f at node i.

    For two-component spaces ``f`` must return an array with leading
    axis of length 2; the result uses the component-block layout.
    """
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    vals = np.asarray(f(x, y), dtype=float)
    if space.components == 1:
        if vals.shape != x.shape:
            vals = np.broadcast_to(vals, x.shape).astype(float)
        return vals.copy()
    if vals.shape != (2,) + x.shape:
        vals = np.broadcast_to(vals, (2,) + x.shape).astype(float)
    return vals.reshape(-1).copy()
