"""Assembly of the sparse matrices and load vectors behind the discrete
Stokes operators: velocity mass and stiffness, the pressure-gradient
coupling (grad psi, phi), its integration-by-parts twin (div phi, psi),
the pressure stiffness, and analytic right-hand sides.

Dirichlet conditions are homogeneous, so constrained rows/columns are
simply eliminated; ``restrict``/``extend`` on FeSpace translate between
full and free coefficient vectors.  Accumulation is element-major with a
stable sorted reduction, so matrices are bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from . import femspace


def _default_quad_degree(*degrees):
    return 2 if max(degrees) == 1 else 4


def _geometry(mesh):
    """Per-triangle affine data: Jacobians, determinants, inverse transposes."""
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edges
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1]
    inv_t[:, 0, 1] = -jac[:, 1, 0]
    inv_t[:, 1, 0] = -jac[:, 0, 1]
    inv_t[:, 1, 1] = jac[:, 0, 0]
    inv_t /= det[:, None, None]
    return p, det, inv_t


def _csr_from_coo(rows, cols, vals, shape):
    """Deterministic COO -> CSR: stable sort by (row, col), then a left-to-right
    reduction of duplicates, which reproduces the sequential element-major sum."""
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if rows.size == 0:
        return sparse.csr_array(shape)
    order = np.lexsort((cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    first = np.empty(r.size, dtype=bool)
    first[0] = True
    first[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.flatnonzero(first)
    data = np.add.reduceat(v, starts)
    rr, cc = r[starts], c[starts]
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(rr, minlength=shape[0]), out=indptr[1:])
    return sparse.csr_array((data, cc, indptr), shape=shape)


def _physical_gradients(space, rule):
    """Basis values and physical gradients at quadrature points.

    Returns (vals (nq, nb), grads (nt, nq, nb, 2), det (nt,)).
    """
    _, det, inv_t = _geometry(space.mesh)
    vals, gref = space.reference.eval(rule.reference_points())
    grads = np.einsum("tab,qib->tqia", inv_t, gref)
    return vals, grads, det


def _scatter_square(space, elem_mats):
    dofs = space.element_dofs
    nb = dofs.shape[1]
    rows = np.repeat(dofs, nb, axis=1)
    cols = np.tile(dofs, (1, nb))
    ns = space.num_scalar_dofs
    return _csr_from_coo(rows, cols, elem_mats, (ns, ns))


def _vector_expand(space, scalar_matrix):
    if space.components == 1:
        return scalar_matrix
    return sparse.block_diag([scalar_matrix, scalar_matrix], format="csr")


def assemble_mass(space, quad_degree=None):
    """Mass matrix (phi_j, phi_i) on the full (pre-elimination) space."""
    qd = quad_degree or _default_quad_degree(space.degree)
    rule = femspace.quadrature(qd)
    _, det, _ = _geometry(space.mesh)
    vals, _ = space.reference.eval(rule.reference_points())
    elem = np.einsum("q,qi,qj,t->tij", rule.weights, vals, vals, det)
    return _vector_expand(space, _scatter_square(space, elem))


def assemble_stiffness(space, quad_degree=None):
    """Stiffness matrix (grad phi_j, grad phi_i) on the full space."""
    qd = quad_degree or _default_quad_degree(space.degree)
    rule = femspace.quadrature(qd)
    _, grads, det = _physical_gradients(space, rule)
    elem = np.einsum("q,tqia,tqja,t->tij", rule.weights, grads, grads, det)
    return _vector_expand(space, _scatter_square(space, elem))


def assemble_pressure_stiffness(p_space, quad_degree=None):
    """Pressure stiffness (grad psi_nu, grad psi_mu); constants span its nullspace."""
    if p_space.components != 1:
        raise ValueError("pressure space must be scalar")
    return assemble_stiffness(p_space, quad_degree)


def _check_shared_mesh(v_space, p_space):
    if v_space.mesh is not p_space.mesh and v_space.mesh.n != p_space.mesh.n:
        raise ValueError("velocity and pressure spaces must share the mesh")


def assemble_pressure_gradient(v_space, p_space, quad_degree=None, restrict_rows=True):
    """Coupling G with G[i, mu] = (grad psi_mu, phi_i) for vector velocity
    basis functions phi_i.

    Rows are restricted to free velocity DOFs unless ``restrict_rows`` is
    False.  Columns always span the whole pressure space.
    """
    _check_shared_mesh(v_space, p_space)
    if v_space.components != 2:
        raise ValueError("velocity space must have two components")
    qd = quad_degree or _default_quad_degree(v_space.degree, p_space.degree)
    rule = femspace.quadrature(qd)
    _, det, _ = _geometry(v_space.mesh)
    v_vals, _ = v_space.reference.eval(rule.reference_points())
    _, p_grads, _ = _physical_gradients(p_space, rule)

    ns = v_space.num_scalar_dofs
    np_ = p_space.num_scalar_dofs
    nbv, nbp = v_vals.shape[1], p_space.element_dofs.shape[1]
    vd, pd = v_space.element_dofs, p_space.element_dofs
    rows = np.repeat(vd, nbp, axis=1)
    cols = np.tile(pd, (1, nbv))
    blocks = []
    for axis in range(2):
        elem = np.einsum("q,tqm,qi,t->tim", rule.weights, p_grads[..., axis], v_vals, det)
        blocks.append(_csr_from_coo(rows, cols, elem, (ns, np_)))
    full = sparse.vstack(blocks, format="csr")
    if not restrict_rows:
        return full
    keep = np.concatenate([v_space.free_scalar, ns + v_space.free_scalar])
    return full[keep]


def assemble_divergence(v_space, p_space, quad_degree=None, restrict_cols=True):
    """Divergence matrix D with D[mu, i] = (div phi_i, psi_mu), assembled
    directly; equals -G^T up to quadrature exactness."""
    _check_shared_mesh(v_space, p_space)
    qd = quad_degree or _default_quad_degree(v_space.degree, p_space.degree)
    rule = femspace.quadrature(qd)
    _, det, _ = _geometry(v_space.mesh)
    p_vals, _ = p_space.reference.eval(rule.reference_points())
    _, v_grads, _ = _physical_gradients(v_space, rule)

    ns = v_space.num_scalar_dofs
    np_ = p_space.num_scalar_dofs
    nbv = v_space.element_dofs.shape[1]
    nbp = p_vals.shape[1]
    vd, pd = v_space.element_dofs, p_space.element_dofs
    rows = np.repeat(pd, nbv, axis=1)
    cols = np.tile(vd, (1, nbp))
    blocks = []
    for axis in range(2):
        elem = np.einsum("q,qm,tqi,t->tmi", rule.weights, p_vals, v_grads[..., axis], det)
        blocks.append(_csr_from_coo(rows, cols, elem, (np_, ns)))
    full = sparse.hstack(blocks, format="csr")
    if not restrict_cols:
        return full
    keep = np.concatenate([v_space.free_scalar, ns + v_space.free_scalar])
    return full[:, keep].tocsr()


def quadrature_points_physical(mesh, rule):
    """Physical coordinates of the rule's points on every triangle: (nt, nq, 2)."""
    p, _, _ = _geometry(mesh)
    ref = rule.reference_points()
    return (
        p[:, None, 0, :]
        + ref[None, :, 0, None] * (p[:, None, 1, :] - p[:, None, 0, :])
        + ref[None, :, 1, None] * (p[:, None, 2, :] - p[:, None, 0, :])
    )


def _eval_field(space, f, xq, t=None):
    vals = f(xq[..., 0], xq[..., 1]) if t is None else f(xq[..., 0], xq[..., 1], t)
    vals = np.asarray(vals, dtype=float)
    want = (space.components,) + xq.shape[:-1] if space.components == 2 else xq.shape[:-1]
    if vals.shape != want:
        vals = np.broadcast_to(vals, want).astype(float)
    return vals


def assemble_load(space, f, t=None, quad_degree=6, restrict=True):
    """Load vector (f, phi_i) with the degree-``quad_degree`` rule.

    ``f`` is an analytic field (optionally time-dependent, evaluated at
    ``t``).  Dirichlet rows are dropped unless ``restrict`` is False.
    """
    rule = femspace.quadrature(quad_degree)
    _, det, _ = _geometry(space.mesh)
    vals, _ = space.reference.eval(rule.reference_points())
    xq = quadrature_points_physical(space.mesh, rule)
    fv = _eval_field(space, f, xq, t)
    ns = space.num_scalar_dofs
    out = np.zeros(space.num_dofs)
    if space.components == 1:
        elem = np.einsum("q,tq,qi,t->ti", rule.weights, fv, vals, det)
        np.add.at(out, space.element_dofs, elem)
    else:
        for c in range(2):
            elem = np.einsum("q,tq,qi,t->ti", rule.weights, fv[c], vals, det)
            np.add.at(out, c * ns + space.element_dofs, elem)
    if restrict and space.components == 2:
        return space.restrict(out)
    return out


def assemble_gradient_load(space, grad_f, quad_degree=6, restrict=True):
    """Load vector (grad f, grad phi_i) from an analytic gradient field.

    For scalar spaces ``grad_f(x, y)`` returns shape (2, ...); for vector
    spaces shape (2, 2, ...) with [c][a] = d f_c / d x_a.
    """
    rule = femspace.quadrature(quad_degree)
    _, grads, det = _physical_gradients(space, rule)
    xq = quadrature_points_physical(space.mesh, rule)
    gv = np.asarray(grad_f(xq[..., 0], xq[..., 1]), dtype=float)
    ns = space.num_scalar_dofs
    out = np.zeros(space.num_dofs)
    if space.components == 1:
        elem = np.einsum("q,atq,tqia,t->ti", rule.weights, gv, grads, det)
        np.add.at(out, space.element_dofs, elem)
    else:
        for c in range(2):
            elem = np.einsum("q,atq,tqia,t->ti", rule.weights, gv[c], grads, det)
            np.add.at(out, c * ns + space.element_dofs, elem)
    if restrict and space.components == 2:
        return space.restrict(out)
    return out


def basis_integrals(space):
    """Integrals of every scalar basis function; the weights defining the
    discrete mean value of a pressure field."""
    if space.components != 1:
        raise ValueError("mean weights are defined for scalar spaces")
    return assemble_load(space, lambda x, y: np.ones_like(x),
                         quad_degree=_default_quad_degree(space.degree), restrict=False)


def restrict_matrix(space, matrix):
    """Drop Dirichlet rows and columns of a full-space square matrix."""
    if space.components == 1:
        return matrix.tocsr()
    ns = space.num_scalar_dofs
    keep = np.concatenate([space.free_scalar, ns + space.free_scalar])
    return matrix.tocsr()[keep][:, keep].tocsr()


@dataclass(frozen=True)
class SystemMatrices:
    """The four operators of the discrete schemes, restricted to free
    velocity DOFs: velocity mass M, velocity stiffness A, pressure
    gradient coupling G, pressure stiffness S."""

    M: sparse.csr_array
    A: sparse.csr_array
    G: sparse.csr_array
    S: sparse.csr_array

    @classmethod
    def build(cls, v_space, p_space):
        M = restrict_matrix(v_space, assemble_mass(v_space))
        A = restrict_matrix(v_space, assemble_stiffness(v_space))
        G = assemble_pressure_gradient(v_space, p_space)
        S = assemble_pressure_stiffness(p_space)
        return cls(M=M, A=A, G=G, S=S)
