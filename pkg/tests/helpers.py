"""Independent reference routes used to cross-check the package's solvers."""

import numpy as np
from scipy.optimize import linprog


def lp_basis_pursuit(m_mat, b):
    """min ||x||_1 s.t. m_mat @ x = b, solved as an LP with HiGHS."""
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    rows, cols = m_mat.shape
    c = np.concatenate([np.zeros(cols), np.ones(cols)])
    a_eq = np.hstack([m_mat, np.zeros((rows, cols))])
    eye = np.eye(cols)
    a_ub = np.block([[eye, -eye], [-eye, -eye]])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(2 * cols), A_eq=a_eq, b_eq=b,
                  bounds=[(None, None)] * cols + [(0, None)] * cols, method="highs")
    assert res.status == 0, res.message
    return res.x[:cols]


def lp_joint_blind_id(psi_a, z):
    """min ||u||_1 s.t. u + psi_a @ a = z over (u, a), solved as an LP."""
    psi_a = np.asarray(psi_a, dtype=float)
    m, r = psi_a.shape
    c = np.concatenate([np.zeros(m + r), np.ones(m)])
    a_eq = np.hstack([np.eye(m), psi_a, np.zeros((m, m))])
    eye = np.eye(m)
    a_ub = np.block([[eye, np.zeros((m, r)), -eye], [-eye, np.zeros((m, r)), -eye]])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(2 * m), A_eq=a_eq, b_eq=z,
                  bounds=[(None, None)] * (m + r) + [(0, None)] * m, method="highs")
    assert res.status == 0, res.message
    return res.x[:m], res.x[m:m + r]


def socp_bpdn(m_mat, b, eta):
    """min ||x||_1 s.t. ||m_mat @ x - b||_2 <= eta via cvxpy (interior point)."""
    import cvxpy as cp

    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    x = cp.Variable(m_mat.shape[1])
    prob = cp.Problem(cp.Minimize(cp.norm1(x)),
                      [cp.norm2(m_mat @ x - b) <= eta])
    prob.solve()
    assert prob.status in ("optimal", "optimal_inaccurate"), prob.status
    return np.asarray(x.value).ravel()
