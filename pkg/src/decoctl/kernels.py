"""Label-resolved memory convolution shared by the decay and dephasing engines.

For outer nodes ``s_m = m h`` the inner integral

    U_ab(s_m) = int_0^{s_m} Phi_ab(s_m - x) g_b(x) exp(i L_b(x) theta_b) dx

is split by the pulse label ``L_b`` of the integration panel. Each h-panel is
integrated with Simpson's rule using Phi tabulated on the quarter grid h/2, and
its contribution is binned by the relative label ``r = ref_b(m) - L_b(panel)``.
The result ``Ur[m, a, b, r]`` does not depend on the phase steps, so a new set
of ``theta`` costs only the contraction in ``MemoryConvolution.inner``.
"""

import numpy as np

from ._accel import dispatch, njit


@njit
def _convolve_loop(phi_q, g_q, panel_labels, ref, n_rel, window, h):
    n_ab = phi_q.shape[0]
    n_nodes = ref.shape[1]
    out = np.zeros((n_nodes, n_ab, n_ab, n_rel), dtype=np.complex128)
    w = h / 6.0
    for m in range(1, n_nodes):
        q_lo = max(0, m - window)
        for q in range(q_lo, m):
            k0 = 2 * (m - q)
            for b in range(n_ab):
                r = ref[b, m] - panel_labels[b, q]
                g0 = g_q[b, 2 * q]
                g1 = g_q[b, 2 * q + 1]
                g2 = g_q[b, 2 * q + 2]
                for a in range(n_ab):
                    out[m, a, b, r] += w * (
                        phi_q[a, b, k0] * g0 + 4.0 * phi_q[a, b, k0 - 1] * g1 + phi_q[a, b, k0 - 2] * g2
                    )
    return out


def _convolve_numpy(phi_q, g_q, panel_labels, ref, n_rel, window, h):
    n_ab = phi_q.shape[0]
    n_nodes = ref.shape[1]
    out = np.zeros((n_nodes, n_ab, n_ab, n_rel), dtype=np.complex128)
    w = h / 6.0
    b_idx = np.arange(n_ab)
    for d in range(1, min(window, n_nodes - 1) + 1):
        m = np.arange(d, n_nodes)
        q = m - d
        k0 = 2 * d
        # (len(m), b) samples of g at the three Simpson nodes of panel q
        contrib = w * (
            phi_q[None, :, :, k0] * g_q[:, 2 * q].T[:, None, :]
            + 4.0 * phi_q[None, :, :, k0 - 1] * g_q[:, 2 * q + 1].T[:, None, :]
            + phi_q[None, :, :, k0 - 2] * g_q[:, 2 * q + 2].T[:, None, :]
        )
        r = ref[:, m] - panel_labels[:, q]  # (b, len(m)); one r per (m, b) for fixed d
        mm = np.broadcast_to(m[None, :], r.shape)
        bb = np.broadcast_to(b_idx[:, None], r.shape)
        # out[m, :, b, r] += contrib[m, :, b]; (m, b) pairs are unique for fixed d
        out[mm.T, :, bb.T, r.T] += np.transpose(contrib, (0, 2, 1))
    return out


labelled_convolution = dispatch(_convolve_loop, _convolve_numpy)


class MemoryConvolution:
    """Precomputed inner integrals on a uniform grid aligned to the pulse trains.

    Parameters
    ----------
    phi_q : (A, A, K) complex
        Response on the quarter grid, ``phi_q[..., k] = Phi(k h / 2)``.
    g_q : (A, 2 n_h + 1) complex
        Smooth right factor on the quarter grid.
    labels_q : (A, 2 n_h + 1) int
        Pulse labels on the quarter grid; panel labels are read at panel midpoints.
    window : int
        Memory window in h-panels.
    """

    def __init__(self, phi_q, g_q, labels_q, h, window, backend=None):
        self.h = float(h)
        n_nodes = (g_q.shape[1] - 1) // 2 + 1
        panel_labels = np.ascontiguousarray(labels_q[:, 1::2])
        node_labels = labels_q[:, ::2]
        # reference label at node m: label of the last panel before it
        ref = np.empty((g_q.shape[0], n_nodes), dtype=np.int64)
        ref[:, 0] = node_labels[:, 0]
        ref[:, 1:] = panel_labels
        lo = np.maximum(np.arange(n_nodes) - window, 0)
        spread = 0
        if n_nodes > 1:
            # largest label gap across a window; labels are non-decreasing
            lo_lab = panel_labels[:, np.minimum(lo[1:], n_nodes - 2)]
            spread = int((ref[:, 1:] - lo_lab).max())
        self.n_rel = spread + 1
        self.ref = ref
        self.window = int(window)
        self.Ur = labelled_convolution(
            np.ascontiguousarray(phi_q, dtype=np.complex128),
            np.ascontiguousarray(g_q, dtype=np.complex128),
            panel_labels.astype(np.int64),
            ref,
            self.n_rel,
            self.window,
            self.h,
            backend=backend,
        )

    def inner(self, thetas):
        """U[m, a, b] for the given phase steps (one per right channel)."""
        thetas = np.asarray(thetas, dtype=float)
        r = np.arange(self.n_rel)
        lab = self.ref.T[:, :, None] - r[None, None, :]  # (m, b, r)
        phase = np.exp(1j * lab * thetas[None, :, None])
        return np.einsum("mabr,mbr->mab", self.Ur, phase)

    def label_moments(self, nodes, weights, node_phase, left_labels):
        """Contract ``Ur`` into M[a, b, k, l] for fast end-point integrals.

        Each occurrence ``i`` is an outer quadrature node ``nodes[i]`` with
        weight ``weights[i]``, smooth left factor ``node_phase[i, a, b]`` and
        left labels ``left_labels[i, a]``. The weighted sum of W equals
        ``sum_{k,l} exp(-i k theta_a) M[a,b,k,l] exp(i l theta_b)``.
        """
        A = left_labels.shape[1]
        ref = self.ref[:, nodes]
        k_max = int(left_labels.max()) + 1
        l_max = int(ref.max()) + 1
        mom = np.zeros((A, A, k_max, l_max), dtype=complex)
        wphase = weights[:, None, None] * node_phase
        ur = self.Ur[nodes]
        for b in range(A):
            for r in range(self.n_rel):
                l = ref[b] - r
                ok = l >= 0
                vals = wphase[ok, :, b] * ur[ok, :, b, r]
                for a in range(A):
                    np.add.at(mom[a, b], (left_labels[ok, a], l[ok]), vals[:, a])
        return mom


def contract_moments(mom, thetas_left, thetas_right):
    k = np.arange(mom.shape[2])
    l = np.arange(mom.shape[3])
    left = np.exp(-1j * np.outer(thetas_left, k))  # (a, k)
    right = np.exp(1j * np.outer(thetas_right, l))  # (b, l)
    return np.einsum("ak,abkl,bl->ab", left, mom, right)
