"""Infinite XXZ ground states as two-site unit-cell MPS (iTEBD).

Conventions: physical basis index 0 is spin up (S^z = +1/2). The chain reads
``... lam_B Gamma_A lam_A Gamma_B lam_B Gamma_A ...``; site tensors have shape
(chi_left, 2, chi_right). Imaginary-time evolution works on the right-canonical
tensors ``B = Gamma lam`` so no Schmidt value is ever inverted.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

log = logging.getLogger(__name__)

SZ = np.array([[0.5, 0.0], [0.0, -0.5]])
SX = np.array([[0.0, 0.5], [0.5, 0.0]])
SPLUS = np.array([[0.0, 1.0], [0.0, 0.0]])
SMINUS = SPLUS.T
SPIN_OPERATORS = {"z": SZ, "x": SX}

DEFAULT_SCHEDULE = ((0.1, 2000), (0.01, 2000), (0.001, 4000))
SCHMIDT_CUTOFF = 1e-12


class ConvergenceError(RuntimeError):
    """Ground-state search did not converge; carries the last energy change."""

    def __init__(self, message: str, last_delta: float = float("nan")):
        super().__init__(message)
        self.last_delta = last_delta


class NonInjectiveError(RuntimeError):
    pass


@dataclass(frozen=True)
class XxzParams:
    delta: float
    coupling: float = 1.0

    def __post_init__(self):
        if abs(self.delta) > 1:
            warnings.warn(f"delta={self.delta} lies outside the critical window |delta| <= 1")


@dataclass
class UnitCellMps:
    """Two-site unit-cell infinite MPS in Vidal form."""

    gamma: tuple[np.ndarray, np.ndarray]
    lam: tuple[np.ndarray, np.ndarray]  # (lam_A: bond A->B, lam_B: bond B->A)
    delta: float | None = None
    energy: float | None = None
    _fixed_point: "TransferFixedPoint | None" = field(default=None, repr=False, compare=False)

    @property
    def chi(self) -> int:
        return max(self.lam[0].shape[0], self.lam[1].shape[0])

    @property
    def right_tensors(self) -> tuple[np.ndarray, np.ndarray]:
        """B_A = Gamma_A lam_A and B_B = Gamma_B lam_B."""
        return (
            self.gamma[0] * self.lam[0][None, None, :],
            self.gamma[1] * self.lam[1][None, None, :],
        )

    @classmethod
    def from_right_tensors(cls, b_a, b_b, lam_a, lam_b, **kw) -> "UnitCellMps":
        return cls(
            (b_a / lam_a[None, None, :], b_b / lam_b[None, None, :]), (lam_a, lam_b), **kw
        )

    @property
    def fixed_point(self) -> "TransferFixedPoint":
        if self._fixed_point is None:
            self._fixed_point = transfer_fixed_point(self)
        return self._fixed_point


@dataclass
class TransferFixedPoint:
    """Dominant left/right eigenmatrices of the unit-cell transfer operator.

    ``left`` sits on the bond in front of site A, ``right`` on the bond after
    site B (the same bond, by periodicity).
    """

    left: np.ndarray
    right: np.ndarray
    eigenvalue: float
    gap: float = float("nan")


def bond_hamiltonian(params: XxzParams) -> np.ndarray:
    """Two-site term J (SxSx + SySy + Delta SzSz) as a real 4x4 matrix."""
    hop = 0.5 * (np.kron(SPLUS, SMINUS) + np.kron(SMINUS, SPLUS))
    return params.coupling * (hop + params.delta * np.kron(SZ, SZ))


def xxz_gate(params: XxzParams, tau: float) -> np.ndarray:
    """exp(-tau h) for the bond term; real symmetric positive definite."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    w, v = la.eigh(bond_hamiltonian(params))
    return (v * np.exp(-tau * w)) @ v.T


def product_state(up_a: np.ndarray, up_b: np.ndarray, **kw) -> UnitCellMps:
    """chi = 1 unit cell from two normalized local spinors."""
    ga = np.asarray(up_a, dtype=float).reshape(1, 2, 1)
    gb = np.asarray(up_b, dtype=float).reshape(1, 2, 1)
    return UnitCellMps((ga, gb), (np.ones(1), np.ones(1)), **kw)


def neel_state() -> UnitCellMps:
    return product_state(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def _two_site_step(b_left, b_right, lam_outer, gate4, chi):
    """Apply a gate on (left, right) sites; return new (b_left, lam_mid, b_right)."""
    dl, dr = b_left.shape[0], b_right.shape[2]
    c = np.tensordot(b_left, b_right, axes=(2, 0))  # (dl, 2, 2, dr)
    c = np.tensordot(gate4, c, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
    theta = lam_outer[:, None, None, None] * c
    x, s, y = la.svd(theta.reshape(dl * 2, 2 * dr), full_matrices=False, lapack_driver="gesdd")
    if not np.all(np.isfinite(s)) or s[0] <= 0:
        raise ConvergenceError("Schmidt spectrum collapsed during imaginary-time step")
    keep = min(chi, int(np.count_nonzero(s > SCHMIDT_CUTOFF * s[0])))
    norm = np.linalg.norm(s[:keep])
    y = y[:keep]
    b_right_new = y.reshape(keep, 2, dr)
    b_left_new = np.tensordot(c, y.reshape(keep, 2, dr), axes=([2, 3], [1, 2])) / norm
    return b_left_new, s[:keep] / norm, b_right_new


def _bond_energy(b_left, b_right, lam_outer, h4):
    theta = lam_outer[:, None, None, None] * np.tensordot(b_left, b_right, axes=(2, 0))
    ht = np.tensordot(h4, theta, axes=([2, 3], [1, 2]))  # (2, 2, dl, dr)
    return float(np.tensordot(theta.transpose(1, 2, 0, 3), ht, axes=4) / np.vdot(theta, theta))


def _random_tilted_neel(rng: np.random.Generator, tilt: float) -> UnitCellMps:
    ua = np.array([1.0, 0.0]) + tilt * rng.standard_normal(2)
    ub = np.array([0.0, 1.0]) + tilt * rng.standard_normal(2)
    return product_state(ua / np.linalg.norm(ua), ub / np.linalg.norm(ub))


def itebd_ground_state(
    params: XxzParams,
    chi: int,
    schedule=DEFAULT_SCHEDULE,
    *,
    initial: UnitCellMps | None = None,
    tilt: float = 0.0,
    seed: int = 0,
    tol: float = 1e-10,
    check_every: int = 10,
    require_convergence: bool = True,
) -> UnitCellMps:
    """Second-order Trotterized imaginary-time evolution to the ground state.

    ``schedule`` is a sequence of ``(tau, steps)`` with decreasing tau. The
    last stage stops early once the bond energy changes by less than ``tol``
    between checks; if it never does, :class:`ConvergenceError` is raised
    (unless ``require_convergence`` is False). The start state is the Neel
    product state, optionally tilted by ``tilt`` with a seeded random spinor
    perturbation.
    """
    if chi < 2:
        raise ValueError(f"chi too small: {chi} (need chi >= 2)")
    schedule = [(float(t), int(n)) for t, n in schedule]
    if not schedule:
        raise ValueError("empty tau schedule")
    taus = [t for t, _ in schedule]
    if any(b > a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau schedule must be non-increasing")

    if initial is None:
        initial = _random_tilted_neel(np.random.default_rng(seed), tilt) if tilt else neel_state()
    b_a, b_b = initial.right_tensors
    lam_a, lam_b = initial.lam
    h4 = bond_hamiltonian(params).reshape(2, 2, 2, 2)

    def energy():
        return 0.5 * (_bond_energy(b_a, b_b, lam_b, h4) + _bond_energy(b_b, b_a, lam_a, h4))

    last = energy()
    delta_e = float("inf")
    for stage, (tau, steps) in enumerate(schedule):
        final = stage == len(schedule) - 1
        half = xxz_gate(params, tau / 2).reshape(2, 2, 2, 2)
        full = xxz_gate(params, tau).reshape(2, 2, 2, 2)
        for step in range(steps):
            # e^{-tau/2 h_AB} e^{-tau h_BA} e^{-tau/2 h_AB}
            b_a, lam_a, b_b = _two_site_step(b_a, b_b, lam_b, half, chi)
            b_b, lam_b, b_a = _two_site_step(b_b, b_a, lam_a, full, chi)
            b_a, lam_a, b_b = _two_site_step(b_a, b_b, lam_b, half, chi)
            if (step + 1) % check_every == 0:
                e = energy()
                delta_e = abs(e - last)
                last = e
                if final and delta_e < tol:
                    break
        log.debug("tau=%g: energy %.12f (last change %.2e)", tau, last, delta_e)
    if not delta_e < tol and require_convergence:
        raise ConvergenceError(
            f"energy change {delta_e:.3e} above tol {tol:.1e} after the final tau stage",
            delta_e,
        )
    mps = canonicalize_right(b_a, b_b, lam_b, chi=chi, delta=params.delta)
    mps.energy = energy_per_bond(mps, params)
    return mps


def _dominant_fixed_point(apply, dim, x0=None, tol=1e-13, max_iter=20000):
    x = np.eye(dim) if x0 is None else x0.copy()
    x /= np.linalg.norm(x)
    eig = 0.0
    for _ in range(max_iter):
        y = apply(x)
        y = 0.5 * (y + y.T)
        eig = np.linalg.norm(y)
        if np.trace(y) < 0:
            y = -y
        y /= eig
        if np.linalg.norm(y - x) < tol:
            return y, eig
        x = y
    raise ConvergenceError("power iteration on the transfer operator did not converge")


def canonicalize_right(b_a, b_b, lam_b=None, chi=None, **kw) -> UnitCellMps:
    """Exact canonical form of a two-site unit cell given right-ish tensors.

    Fixes the gauge so that the right fixed point is the identity and the left
    one is diagonal (squared Schmidt values), then re-splits the cell by SVD.
    """
    m = np.tensordot(b_a, b_b, axes=(2, 0))  # (D, 2, 2, D)
    d = m.shape[0]
    mm = m.reshape(d, 4, d)
    right, eta = _dominant_fixed_point(lambda x: np.einsum("asb,bc,dsc->ad", mm, x, mm), d)
    mm = mm / np.sqrt(eta)
    w, v = la.eigh(right)
    keep = w > 1e-14 * w.max()
    y = v[:, keep] * np.sqrt(w[keep])
    y_inv = (v[:, keep] / np.sqrt(w[keep])).T
    mm = np.einsum("ab,bsc,cd->asd", y_inv, mm, y)
    d = mm.shape[0]
    x0 = None if lam_b is None or lam_b.shape[0] != d else np.diag(lam_b**2)
    left, _ = _dominant_fixed_point(lambda x: np.einsum("asb,ac,csd->bd", mm, x, mm), d, x0=x0)
    left /= np.trace(left)
    w, u = la.eigh(left)
    order = np.argsort(w)[::-1]
    w, u = w[order], u[:, order]
    keep = w > SCHMIDT_CUTOFF**2 * w[0]
    w, u = w[keep], u[:, keep]
    lam_b_new = np.sqrt(w)
    mm = np.einsum("ba,bsc,cd->asd", u, mm, u)
    theta = lam_b_new[:, None, None] * mm
    k = theta.shape[0]
    x, s, yt = la.svd(theta.reshape(k * 2, 2 * k), full_matrices=False)
    cut = np.count_nonzero(s > SCHMIDT_CUTOFF * s[0])
    if chi is not None:
        cut = min(cut, chi)
    s = s[:cut] / np.linalg.norm(s[:cut])
    b_b_new = yt[:cut].reshape(cut, 2, k)
    b_a_new = np.tensordot(mm.reshape(k, 2, 2, k), b_b_new, axes=([2, 3], [1, 2]))
    return UnitCellMps.from_right_tensors(b_a_new, b_b_new, s, lam_b_new, **kw)


def energy_per_bond(mps: UnitCellMps, params: XxzParams) -> float:
    """Average of the two inequivalent bond energies."""
    b_a, b_b = mps.right_tensors
    h4 = bond_hamiltonian(params).reshape(2, 2, 2, 2)
    lam_a, lam_b = mps.lam
    return 0.5 * (_bond_energy(b_a, b_b, lam_b, h4) + _bond_energy(b_b, b_a, lam_a, h4))


def canonical_defect(mps: UnitCellMps) -> float:
    """Largest deviation from left/right orthonormality over both sites."""
    b = mps.right_tensors
    lam = mps.lam  # lam[0] right of A, lam[1] right of B
    worst = 0.0
    for site in (0, 1):
        bt = b[site]
        left_lam = lam[1 - site]
        right = np.einsum("asb,csb->ac", bt, bt)
        worst = max(worst, np.abs(right - np.eye(right.shape[0])).max())
        a = left_lam[:, None, None] * bt / lam[site][None, None, :]
        left = np.einsum("asb,asc->bc", a, a)
        worst = max(worst, np.abs(left - np.eye(left.shape[0])).max())
    return float(worst)


# transfer operators -----------------------------------------------------------


def _cell_tensors(mps: UnitCellMps) -> tuple[np.ndarray, np.ndarray]:
    return mps.right_tensors


def transfer_left(a: np.ndarray, x: np.ndarray, op: np.ndarray | None = None) -> np.ndarray:
    """sum_{s,t} op[s,t] A^{s T} x A^{t} (op=None means identity)."""
    if op is None:
        return np.einsum("ac,asb,csd->bd", x, a, a, optimize=True)
    return np.einsum("ac,asb,st,ctd->bd", x, a, op, a, optimize=True)


def transfer_right(a: np.ndarray, x: np.ndarray, op: np.ndarray | None = None) -> np.ndarray:
    if op is None:
        return np.einsum("asb,bd,csd->ac", a, x, a, optimize=True)
    return np.einsum("asb,bd,st,ctd->ac", a, x, op, a, optimize=True)


def transfer_fixed_point(mps: UnitCellMps, tol: float = 1e-12, max_iter: int = 100000) -> TransferFixedPoint:
    """Dominant eigenpair of the unit-cell transfer operator by power iteration."""
    a, b = _cell_tensors(mps)
    d = a.shape[0]
    cell = np.tensordot(a, b, axes=(2, 0)).reshape(d, 4, d)

    def left_map(x):
        return transfer_left(cell, x)

    def right_map(x):
        return transfer_right(cell, x)

    lam_b = mps.lam[1]
    left, eig_l = _dominant_fixed_point(left_map, d, x0=np.diag(lam_b**2), tol=tol, max_iter=max_iter)
    right, eig_r = _dominant_fixed_point(right_map, d, x0=np.eye(d), tol=tol, max_iter=max_iter)
    norm = np.trace(left @ right)
    left = left / norm
    gap = _transfer_gap(cell)
    if gap < 1e-10:
        raise NonInjectiveError(f"degenerate dominant transfer eigenvalue (gap {gap:.2e})")
    return TransferFixedPoint(left, right, 0.5 * (eig_l + eig_r), gap)


def _transfer_gap(cell: np.ndarray) -> float:
    d = cell.shape[0]
    if d == 1:
        return 1.0
    if d * d <= 256:
        mat = np.einsum("asb,csd->acbd", cell, cell).reshape(d * d, d * d)
        ev = np.sort(np.abs(la.eigvals(mat)))[::-1]
    else:
        from scipy.sparse.linalg import LinearOperator, eigs

        op = LinearOperator(
            (d * d, d * d), matvec=lambda v: transfer_right(cell, v.reshape(d, d)).ravel()
        )
        ev = np.sort(np.abs(eigs(op, k=2, which="LM", tol=1e-10, return_eigenvectors=False)))[::-1]
    return float(ev[0] - ev[1])


def site_expectation(mps: UnitCellMps, op: np.ndarray) -> tuple[float, float]:
    """<op> on site A and on site B."""
    fp = mps.fixed_point
    a, b = _cell_tensors(mps)
    right_after_a = transfer_right(b, fp.right)
    on_a = np.trace(transfer_left(a, fp.left, op) @ right_after_a)
    left_before_b = transfer_left(a, fp.left)
    on_b = np.trace(transfer_left(b, left_before_b, op) @ fp.right)
    return float(on_a), float(on_b)


def correlators(mps: UnitCellMps, axis: str, n_max: int, connected: bool = True) -> np.ndarray:
    """<S^a_0 S^a_n> for n = 1..n_max, averaged over both placements in the cell.

    One left-to-right sweep per placement, O(n_max chi^3).
    """
    op = SPIN_OPERATORS[axis]
    fp = mps.fixed_point
    a, b = _cell_tensors(mps)
    tensors = (a, b)
    # right environments after A (index 0) and after B (index 1)
    rights = (transfer_right(b, fp.right), fp.right)
    lefts = (fp.left, transfer_left(a, fp.left))  # in front of A / in front of B
    means = site_expectation(mps, op)
    out = np.zeros(n_max)
    for start in (0, 1):
        x = transfer_left(tensors[start], lefts[start], op)
        for n in range(1, n_max + 1):
            site = (start + n) % 2
            val = np.trace(transfer_left(tensors[site], x, op) @ rights[site])
            if connected:
                val -= means[start] * means[site]
            out[n - 1] += 0.5 * val
            x = transfer_left(tensors[site], x)
    return out


def correlator(mps: UnitCellMps, axis: str, n: int) -> float:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return float(correlators(mps, axis, n)[-1])


# state file -------------------------------------------------------------------

IMPS_FORMAT = "IMPS"


def save_imps(path, mps: UnitCellMps, extra: dict | None = None) -> None:
    from .statefile import save_state

    manifest = {
        "format": IMPS_FORMAT,
        "version": 1,
        "chi": mps.chi,
        "delta": mps.delta,
        "energy": mps.energy,
    }
    if extra:
        manifest.update(extra)
    arrays = {
        "gamma_A": mps.gamma[0],
        "gamma_B": mps.gamma[1],
        "lambda_A": mps.lam[0],
        "lambda_B": mps.lam[1],
    }
    save_state(path, manifest, arrays)


def load_imps(path) -> UnitCellMps:
    from .statefile import load_state

    manifest, arr = load_state(path, IMPS_FORMAT)
    return UnitCellMps(
        (arr["gamma_A"], arr["gamma_B"]),
        (arr["lambda_A"], arr["lambda_B"]),
        delta=manifest.get("delta"),
        energy=manifest.get("energy"),
    )
