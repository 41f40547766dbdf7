"""Sequential Born-rule sampling of +-1 series from matrix product states.

Infinite chains are closed with the transfer-matrix fixed points; the left
boundary matrix absorbs every measured outcome and is renormalized by the
outcome probability, so the cost per site is O(chi^3) and the memory O(chi^2).
Measurements in the x basis rotate the physical legs by the Hadamard matrix,
whose columns are the S^x eigenvectors (index 0 = +x).

Symbols are twice the measured spin projection: index 0 -> +1, index 1 -> -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .itebd import UnitCellMps, transfer_left, transfer_right
from .trajectory import Trajectory

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
SYMBOLS = np.array([1, -1], dtype=np.int8)


class ImpossibleHistoryError(FloatingPointError):
    pass


def derive_seed(master: int, index: int) -> int:
    """Independent substream seed for trajectory ``index``."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def rotate_physical(a: np.ndarray, basis: str) -> np.ndarray:
    if basis == "z":
        return a
    if basis == "x":
        return np.einsum("ts,atb->asb", HADAMARD, a)
    raise ValueError(f"basis must be 'z' or 'x', got {basis!r}")


@dataclass
class ConditionalState:
    """Left boundary after the fixed outcomes, and the right environment of the next site."""

    boundary: np.ndarray
    right_env: np.ndarray


@dataclass
class _Cell:
    tensors: tuple[np.ndarray, np.ndarray]
    rights: tuple[np.ndarray, np.ndarray]  # right environment after site A / after site B
    left: np.ndarray


def _prepare(state: UnitCellMps, basis: str) -> _Cell:
    fp = state.fixed_point
    a, b = state.right_tensors
    rights = (transfer_right(b, fp.right), fp.right)
    return _Cell((rotate_physical(a, basis), rotate_physical(b, basis)), rights, fp.left)


def initial_condition(state: UnitCellMps) -> ConditionalState:
    fp = state.fixed_point
    _, b = state.right_tensors
    return ConditionalState(fp.left.copy(), transfer_right(b, fp.right))


def conditional_density(state: UnitCellMps, cond: ConditionalState, site_parity: int, basis: str = "z") -> np.ndarray:
    """2x2 density matrix of the next site given the outcomes stored in ``cond``.

    ``site_parity`` is 0 for an A site and 1 for a B site; the matrix is in
    the measurement basis, so its diagonal holds P(+1|past), P(-1|past).
    """
    a = rotate_physical(state.right_tensors[site_parity], basis)
    rho = np.einsum("ac,asb,ctd,bd->st", cond.boundary, a, a, cond.right_env, optimize=True)
    rho = 0.5 * (rho + rho.T)
    tr = np.trace(rho)
    if not tr > 0:
        raise ImpossibleHistoryError(f"conditional density has trace {tr:g}")
    return rho / tr


def advance(state: UnitCellMps, cond: ConditionalState, site_parity: int, outcome: int, basis: str = "z") -> ConditionalState:
    """Fix ``outcome`` (0 or 1) on the site and move the boundary one step right."""
    tensors = state.right_tensors
    a = rotate_physical(tensors[site_parity], basis)
    proj = np.zeros((2, 2))
    proj[outcome, outcome] = 1.0
    new = transfer_left(a, cond.boundary, proj)
    fp = state.fixed_point
    # right environment of the following site
    nxt = 1 - site_parity
    right = fp.right if nxt == 1 else transfer_right(tensors[1], fp.right)
    norm = np.trace(new @ right)
    if not norm > 0:
        raise ImpossibleHistoryError(f"outcome {outcome} has zero probability")
    return ConditionalState(new / norm, right)


def sample_infinite_mps(state: UnitCellMps, n: int, seed: int, basis: str = "z", start_parity: int = 0) -> Trajectory:
    """Draw ``n`` consecutive symbols from the infinite state, site by site.

    Per site: the two outcome weights are Frobenius products of the boundary
    with precomputed matrices Q_s = A^s r A^{sT}; only the chosen branch is
    propagated (two chi x chi products).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cell = _prepare(state, basis)
    q = []
    for parity in (0, 1):
        a = cell.tensors[parity]
        r = cell.rights[parity]
        q.append([a[:, s, :] @ r @ a[:, s, :].T for s in (0, 1)])
    mats = [[np.ascontiguousarray(cell.tensors[p][:, s, :]) for s in (0, 1)] for p in (0, 1)]
    boundary = cell.left if start_parity == 0 else transfer_left(cell.tensors[0], cell.left)
    boundary = boundary / np.sum(boundary * (q[start_parity][0] + q[start_parity][1]))
    u = _rng(seed).random(n)
    out = np.empty(n, dtype=np.int8)
    parity = start_parity
    for i in range(n):
        p0 = float(np.sum(boundary * q[parity][0]))
        p1 = float(np.sum(boundary * q[parity][1]))
        tot = p0 + p1
        if not tot > 0 or p0 < -1e-10 * tot or p1 < -1e-10 * tot:
            raise ImpossibleHistoryError(f"invalid outcome weights ({p0:g}, {p1:g}) at site {i}")
        s = 0 if u[i] * tot < p0 else 1
        out[i] = SYMBOLS[s]
        m = mats[parity][s]
        boundary = m.T @ boundary @ m
        boundary /= p0 if s == 0 else p1
        parity ^= 1
    return Trajectory(
        out, seed=seed, basis=basis, delta=state.delta, chi=state.chi, model="imps",
    )


def sequence_probability(state: UnitCellMps, symbols, basis: str = "z", start_parity: int = 0) -> float:
    """Born probability of a finite window of symbols by direct contraction."""
    cell = _prepare(state, basis)
    x = cell.left if start_parity == 0 else transfer_left(cell.tensors[0], cell.left)
    parity = start_parity
    for sym in symbols:
        s = 0 if sym > 0 else 1
        m = cell.tensors[parity][:, s, :]
        x = m.T @ x @ m
        parity ^= 1
    # parity now labels the next site, so the last one closes with rights[1 - parity]
    return float(np.sum(x * cell.rights[1 - parity]))


def chain_rule_probability(state: UnitCellMps, symbols, basis: str = "z", start_parity: int = 0) -> float:
    """Product of the sequential conditionals along ``symbols``."""
    cond = initial_condition(state)
    if start_parity == 1:
        # identity transfer is basis independent
        cond = ConditionalState(transfer_left(state.right_tensors[0], cond.boundary), state.fixed_point.right)
    prob = 1.0
    parity = start_parity
    for sym in symbols:
        s = 0 if sym > 0 else 1
        rho = conditional_density(state, cond, parity, basis)
        prob *= rho[s, s]
        cond = advance(state, cond, parity, s, basis)
        parity ^= 1
    return prob


def magnetization_series(traj: Trajectory, staggered: bool = False) -> np.ndarray:
    """Running sums M(l) = sum_{k<=l} s_k/2, or N(l) with weights (-1)^k, k from 1."""
    spins = 0.5 * np.asarray(traj.values, dtype=float)
    if staggered:
        spins = spins.copy()
        spins[0::2] *= -1.0
    return np.cumsum(spins)


# finite chains ----------------------------------------------------------------


def right_canonicalize(tensors: list[np.ndarray]) -> list[np.ndarray]:
    """Open-boundary MPS in right-canonical form (norm carried by the first tensor)."""
    out = [np.asarray(t, dtype=float) for t in tensors]
    for k in range(len(out) - 1, 0, -1):
        dl, d, dr = out[k].shape
        q, r = np.linalg.qr(out[k].reshape(dl, d * dr).T)
        out[k] = q.T.reshape(-1, d, dr)
        out[k - 1] = np.tensordot(out[k - 1], r.T, axes=(2, 0))
    out[0] = out[0] / np.linalg.norm(out[0])
    return out


def sample_finite_mps(tensors: list[np.ndarray], n_samples: int, seed: int, basis: str = "z") -> list[Trajectory]:
    """Exact samples of an open-boundary MPS (boundary bonds of size 1), batched."""
    mps = right_canonicalize([rotate_physical(t, basis) for t in tensors])
    rng = _rng(seed)
    length = len(mps)
    v = np.ones((n_samples, 1))
    idx = np.empty((n_samples, length), dtype=np.int8)
    for k, a in enumerate(mps):
        amp = np.einsum("na,asb->nsb", v, a)
        p = np.einsum("nsb,nsb->ns", amp, amp)
        p /= p.sum(axis=1, keepdims=True)
        s = (rng.random(n_samples) >= p[:, 0]).astype(np.int8)
        idx[:, k] = s
        v = amp[np.arange(n_samples), s] / np.sqrt(p[np.arange(n_samples), s])[:, None]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    symbols = SYMBOLS[idx]
    return [Trajectory(row, seed=seed, basis=basis, model="finite-mps", meta={"index": i}) for i, row in enumerate(symbols)]


def dense_to_mps(psi: np.ndarray, length: int) -> list[np.ndarray]:
    """Exact open-boundary MPS of a dense state vector by successive SVDs."""
    tensors = []
    rest = np.asarray(psi, dtype=float).reshape(1, -1)
    for _ in range(length - 1):
        dl = rest.shape[0]
        u, s, vt = np.linalg.svd(rest.reshape(dl * 2, -1), full_matrices=False)
        keep = max(1, int(np.count_nonzero(s > 1e-14 * s[0])))
        tensors.append(u[:, :keep].reshape(dl, 2, keep))
        rest = s[:keep, None] * vt[:keep]
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return tensors


def born_distribution(psi: np.ndarray, basis: str = "z") -> np.ndarray:
    """Outcome probabilities over all 2^L configurations (first site most significant, 0 = +1)."""
    psi = np.asarray(psi, dtype=float)
    length = int(np.log2(psi.size))
    if basis == "x":
        t = psi.reshape((2,) * length)
        for k in range(length):
            t = np.moveaxis(np.tensordot(HADAMARD, t, axes=(1, k)), 0, k)
        psi = t.ravel()
    p = psi**2
    return p / p.sum()


def xxz_open_chain_ground_state(length: int, delta: float) -> np.ndarray:
    """Ground state of the open XXZ chain by dense diagonalization (length <= 14)."""
    from .itebd import XxzParams, bond_hamiltonian

    h2 = bond_hamiltonian(XxzParams(delta))
    dim = 2**length
    ham = np.zeros((dim, dim))
    for k in range(length - 1):
        ham += np.kron(np.kron(np.eye(2**k), h2), np.eye(2 ** (length - k - 2)))
    w, v = np.linalg.eigh(ham)
    psi = v[:, 0]
    return psi if psi[np.argmax(np.abs(psi))] > 0 else -psi


def outcome_index(symbols: np.ndarray) -> np.ndarray:
    """Integer code of each configuration, first site most significant."""
    bits = (np.asarray(symbols) < 0).astype(np.int64)
    length = bits.shape[-1]
    return bits @ (1 << np.arange(length - 1, -1, -1))
