"""Scale-invariant ternary MERA with transitional layers.

Tensor conventions (real throughout):

* isometry ``w[a, i, j, k]``, shape (chi_out, chi_in, chi_in, chi_in), rows
  orthonormal: ``w.reshape(chi_out, -1) @ w.reshape(chi_out, -1).T = I``;
* disentangler ``u[a, b, i, j]``, (upper, upper, lower, lower), orthogonal
  as a (chi_in^2, chi_in^2) matrix.

Within a layer, disentanglers act on lower site pairs (3m+2, 3m+3) and the
isometry of upper site j collects lower sites 3j, 3j+1, 3j+2. A k-site
operator is stored as a tensor with k ket legs followed by k bra legs.

Windows are described by the offset of their leftmost site modulo 3. Every
two-site window ascends to two sites. Three-site windows ascend to three sites
at offset 0 (kind ``C``) and to two sites at offsets 1 (``L``) and 2 (``R``).

All contractions are generated from one causal-cone builder and compiled with
opt_einsum, so ascending and descending maps are trace-dual by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import opt_einsum as oe

from .itebd import SZ, ConvergenceError, XxzParams, bond_hamiltonian
from .trajectory import Trajectory

log = logging.getLogger(__name__)

KIND_OFFSET = {"C": 0, "L": 1, "R": 2}
PHYS_DIM = 2
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
FLIP = np.array([[0.0, 1.0], [1.0, 0.0]])


class EigenvalueConditionError(ValueError):
    pass


@dataclass
class MeraLayer:
    w: np.ndarray
    u: np.ndarray

    @property
    def chi_in(self) -> int:
        return self.u.shape[2]

    @property
    def chi_out(self) -> int:
        return self.w.shape[0]

    def defects(self) -> tuple[float, float]:
        wm = self.w.reshape(self.chi_out, -1)
        um = self.u.reshape(self.chi_in**2, -1)
        dw = np.abs(wm @ wm.T - np.eye(self.chi_out)).max()
        du = max(
            np.abs(um @ um.T - np.eye(um.shape[0])).max(),
            np.abs(um.T @ um - np.eye(um.shape[0])).max(),
        )
        return float(dw), float(du)


@dataclass
class TernaryMera:
    transition_layers: list[MeraLayer]
    scale_invariant: MeraLayer
    chi: int
    top: np.ndarray | None = None  # average two-site density matrix of the scale-invariant layer
    delta: float | None = None
    energy: float | None = None
    meta: dict = field(default_factory=dict)
    _rho3: np.ndarray | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return len(self.transition_layers)

    def layer(self, index: int) -> MeraLayer:
        return self.transition_layers[index] if index < self.T else self.scale_invariant

    @property
    def rho2(self) -> np.ndarray:
        if self.top is None:
            self.top = average_rho2(self)
        return self.top

    @property
    def rho3(self) -> np.ndarray:
        if self._rho3 is None:
            self._rho3 = average_rho3(self)
        return self._rho3

    def invalidate(self) -> None:
        self.top = None
        self._rho3 = None


# operator helpers -------------------------------------------------------------


def op_matrix(op: np.ndarray) -> np.ndarray:
    k = op.ndim // 2
    d = int(round(op.size ** (1.0 / (2 * k))))
    return op.reshape(d**k, d**k)


def op_tensor(mat: np.ndarray, sites: int) -> np.ndarray:
    d = int(round(mat.shape[0] ** (1.0 / sites)))
    return mat.reshape((d,) * (2 * sites))


def identity_op(dim: int, sites: int) -> np.ndarray:
    return op_tensor(np.eye(dim**sites), sites)


def trace_op(op: np.ndarray) -> float:
    return float(np.trace(op_matrix(op)))


def partial_trace(rho: np.ndarray, keep: list[int]) -> np.ndarray:
    """Reduce a k-site operator tensor to the sites in ``keep`` (sorted)."""
    k = rho.ndim // 2
    letters = oe.get_symbol
    ket = [letters(i) for i in range(k)]
    bra = [letters(k + i) if i in keep else letters(i) for i in range(k)]
    out = [ket[i] for i in keep] + [bra[i] for i in keep]
    return np.einsum("".join(ket + bra) + "->" + "".join(out), rho)


# network builder --------------------------------------------------------------


class _Net:
    def __init__(self):
        self.ops: list[tuple[str, tuple[str, ...], str]] = []

    def add(self, role: str, labels, side: str = "") -> None:
        self.ops.append((role, tuple(labels), side))


def _pair_of(s: int) -> int:
    return (s - 2) // 3 if s % 3 == 2 else s // 3 - 1


def _emit_layer(net: _Net, tag: str, window, lower_lab, upper_lab, wrole="w", urole="u") -> list[int]:
    """Append the causal cone of ``window`` (lower positions) for one layer.

    ``lower_lab(s, side)`` names the lower leg of site s; ket/bra sides are
    'k'/'b'. Returns the sorted upper positions (isometry blocks).
    """
    window = sorted(window)
    inside = set(window)
    pairs = sorted({_pair_of(s) for s in window if s % 3 != 1})
    paired = {3 * m + o for m in pairs for o in (2, 3)}
    mids = inside | paired
    blocks = sorted({s // 3 for s in mids})

    def mid(s, side):
        if s in paired:
            return f"{tag}m{side}{s}"
        if s in inside:
            return lower_lab(s, side)
        return f"{tag}mt{s}"

    def low(s, side):
        if s in inside:
            return lower_lab(s, side)
        return f"{tag}lt{s}"

    for side in "kb":
        for j in blocks:
            net.add(wrole, [upper_lab(j, side)] + [mid(3 * j + i, side) for i in range(3)], side)
        for m in pairs:
            a, b = 3 * m + 2, 3 * m + 3
            net.add(urole, [mid(a, side), mid(b, side), low(a, side), low(b, side)], side)
    return blocks


_EXPR_CACHE: dict = {}


def _compile(key, net: _Net, out, shapes, exclude: int | None = None, optimize="auto-hq"):
    ck = (key, shapes, exclude)
    expr = _EXPR_CACHE.get(ck)
    if expr is None:
        sym: dict[str, str] = {}

        def s(label):
            if label not in sym:
                sym[label] = oe.get_symbol(len(sym))
            return sym[label]

        terms = ["".join(s(l) for l in labs) for i, (_, labs, _) in enumerate(net.ops) if i != exclude]
        eq = ",".join(terms) + "->" + "".join(s(l) for l in out)
        use = tuple(sh for i, sh in enumerate(shapes) if i != exclude)
        expr = oe.contract_expression(eq, *use, optimize=optimize)
        _EXPR_CACHE[ck] = expr
    return expr


def _run(key, net: _Net, out, arrays: dict, exclude: int | None = None, optimize="auto-hq"):
    operands = [arrays[role] for role, _, _ in net.ops]
    shapes = tuple(a.shape for a in operands)
    expr = _compile(key, net, out, shapes, exclude, optimize)
    return expr(*[a for i, a in enumerate(operands) if i != exclude])


_LAYER_NETS: dict = {}


def _single_layer(offset: int, width: int):
    """Network of one layer for a window; returns (net, lower labels, upper labels)."""
    key = (offset, width)
    if key not in _LAYER_NETS:
        window = [3 + offset + i for i in range(width)]
        net = _Net()
        blocks = _emit_layer(net, "", window, lambda s, side: f"x{side}{s}", lambda j, side: f"y{side}{j}")
        low = [f"xk{s}" for s in window] + [f"xb{s}" for s in window]
        up = [f"yk{j}" for j in blocks] + [f"yb{j}" for j in blocks]
        _LAYER_NETS[key] = (net, low, up)
    return _LAYER_NETS[key]


def ascend(op: np.ndarray, layer: MeraLayer, offset: int) -> np.ndarray:
    """Lift an operator on a window at ``offset`` (mod 3) through one layer."""
    width = op.ndim // 2
    net, low, up = _single_layer(offset % 3, width)
    full = _Net()
    full.ops = list(net.ops) + [("op", tuple(low), "")]
    return _run(("asc", offset % 3, width), full, up, {"w": layer.w, "u": layer.u, "op": op})


def descend(rho: np.ndarray, layer: MeraLayer, offset: int, width: int) -> np.ndarray:
    """Trace-dual of :func:`ascend`: lower a density matrix onto a ``width``-site window."""
    net, low, up = _single_layer(offset % 3, width)
    full = _Net()
    full.ops = list(net.ops) + [("op", tuple(up), "")]
    return _run(("desc", offset % 3, width), full, low, {"w": layer.w, "u": layer.u, "op": rho})


def ascend3(kind: str, op3: np.ndarray, layer: MeraLayer) -> np.ndarray:
    return ascend(op3, layer, KIND_OFFSET[kind])


def descend3(kind: str, rho: np.ndarray, layer: MeraLayer) -> np.ndarray:
    return descend(rho, layer, KIND_OFFSET[kind], 3)


def ascend2_average(op2: np.ndarray, layer: MeraLayer) -> np.ndarray:
    return sum(ascend(op2, layer, p) for p in range(3)) / 3.0


def descend2_average(rho2: np.ndarray, layer: MeraLayer) -> np.ndarray:
    return sum(descend(rho2, layer, p, 2) for p in range(3)) / 3.0


# scale-invariant density matrices ---------------------------------------------


def _hermitize(rho: np.ndarray) -> np.ndarray:
    k = rho.ndim // 2
    perm = list(range(k, 2 * k)) + list(range(k))
    return 0.5 * (rho + rho.transpose(perm))


def average_rho2(mera: TernaryMera, tol: float = 1e-12, max_iter: int = 20000, start: np.ndarray | None = None) -> np.ndarray:
    """Fixed point of the average two-site descending map of the scale-invariant layer."""
    layer = mera.scale_invariant
    chi = layer.chi_out
    if start is None and mera.top is not None:
        start = mera.top
    rho = identity_op(chi, 2) / chi**2 if start is None else start.copy()
    residual = float("inf")
    for _ in range(max_iter):
        new = _hermitize(descend2_average(rho, layer))
        new /= trace_op(new)
        residual = float(np.linalg.norm(new - rho))
        rho = new
        if residual < tol:
            return rho
    raise ConvergenceError(f"average_rho2: power iteration stalled, residual {residual:.2e}", residual)


def _trace_norm(op: np.ndarray) -> float:
    m = op_matrix(op)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T))).sum())


def average_rho3(mera: TernaryMera, tol: float = 1e-12, check: bool = False, max_terms: int = 200) -> np.ndarray:
    """Average three-site density matrix as a Neumann series in the central descending map.

    rho3 = sum_n (D_C/3)^n (D_L + D_R)(rho2)/3. The central map is trace
    preserving and contractive in trace norm, so the tail after a term of
    trace norm t is bounded by t/2; summation stops once that bound is below
    ``tol``.
    """
    layer = mera.scale_invariant
    if check:
        lam = dominant_ascend_c_eigenvalue(mera)
        if not abs(lam) < 3.0:
            raise EigenvalueConditionError(f"dominant eigenvalue of the central ascending map is {lam:.6g}")
    rho2 = mera.rho2
    term = (descend3("L", rho2, layer) + descend3("R", rho2, layer)) / 3.0
    total = term.copy()
    for _ in range(max_terms):
        term = descend3("C", term, layer) / 3.0
        total += term
        if _trace_norm(term) / 2.0 < tol:
            return _hermitize(total)
    raise ConvergenceError("average_rho3: Neumann series did not reach tolerance")


def average_rho3_terms(mera: TernaryMera, n_terms: int) -> np.ndarray:
    """Neumann series truncated after ``n_terms`` powers (self-consistency checks)."""
    layer = mera.scale_invariant
    rho2 = mera.rho2
    term = (descend3("L", rho2, layer) + descend3("R", rho2, layer)) / 3.0
    total = term.copy()
    for _ in range(n_terms):
        term = descend3("C", term, layer) / 3.0
        total += term
    return _hermitize(total)


def dominant_ascend_c_eigenvalue(mera: TernaryMera) -> float:
    """Largest-magnitude eigenvalue of the central three-site ascending map."""
    from scipy.sparse.linalg import LinearOperator, eigs

    layer = mera.scale_invariant
    chi = layer.chi_out
    dim = chi**3
    shape = (chi,) * 6

    def mv(v):
        return ascend3("C", v.reshape(shape), layer).ravel()

    if dim * dim <= 4096:
        mat = np.column_stack([mv(e) for e in np.eye(dim * dim)])
        ev = np.linalg.eigvals(mat)
    else:
        op = LinearOperator((dim * dim, dim * dim), matvec=mv, dtype=float)
        ev = eigs(op, k=1, which="LM", return_eigenvectors=False, tol=1e-10)
    return float(np.abs(ev).max())


def physical_densities(mera: TernaryMera) -> tuple[np.ndarray, np.ndarray]:
    """Average two- and three-site density matrices on the physical sites."""
    rho2, rho3 = mera.rho2, mera.rho3
    for layer in reversed(mera.transition_layers):
        new3 = (descend3("L", rho2, layer) + descend3("R", rho2, layer) + descend3("C", rho3, layer)) / 3.0
        rho2 = descend2_average(rho2, layer)
        rho3 = new3
    return _hermitize(rho2), _hermitize(rho3)


def physical_rho2(mera: TernaryMera) -> np.ndarray:
    rho2 = mera.rho2
    for layer in reversed(mera.transition_layers):
        rho2 = descend2_average(rho2, layer)
    return _hermitize(rho2)


def expectation3(mera: TernaryMera, op3: np.ndarray) -> float:
    """Tr(rho3 O3) with rho3 the average physical three-site density matrix."""
    _, rho3 = physical_densities(mera)
    return float(np.tensordot(rho3, op3.transpose(3, 4, 5, 0, 1, 2), axes=6))


def expectation2(mera: TernaryMera, op2: np.ndarray) -> float:
    rho2 = physical_rho2(mera)
    return float(np.tensordot(rho2, op2.transpose(2, 3, 0, 1), axes=4))


def bond_energy(mera: TernaryMera, params: XxzParams) -> float:
    return expectation2(mera, op_tensor(bond_hamiltonian(params), 2))


# construction -----------------------------------------------------------------


def _polar(env_matrix: np.ndarray) -> np.ndarray:
    """Orthogonal factor minimizing Tr(X env^T) over row-orthonormal X."""
    uu, _, vt = np.linalg.svd(env_matrix, full_matrices=False)
    return -(uu @ vt)


def _flip_generator(dim: int, physical: bool) -> np.ndarray:
    if physical:
        return FLIP
    even = (dim + 1) // 2
    return np.diag(np.concatenate([np.ones(even), -np.ones(dim - even)]))


def _apply_legs(t: np.ndarray, gens) -> np.ndarray:
    for axis, g in enumerate(gens):
        t = np.moveaxis(np.tensordot(g, t, axes=(1, axis)), 0, axis)
    return t


def _symmetrize(t: np.ndarray, gens) -> np.ndarray:
    return 0.5 * (t + _apply_legs(t, gens))


def _layer_dims(chi: int, T: int) -> list[tuple[int, int]]:
    dims = []
    d = PHYS_DIM
    for _ in range(T):
        out = min(chi, d**3)
        dims.append((d, out))
        d = out
    if d != chi:
        raise ValueError(f"scale-invariant layer needs input dimension {chi}, got {d}; use more transitional layers")
    return dims


def _layer_gens(chi_in: int, chi_out: int, physical: bool):
    gin = _flip_generator(chi_in, physical)
    gout = _flip_generator(chi_out, False)
    return (gout, gin, gin, gin), (gin, gin, gin, gin)


def random_mera(chi: int, T: int, seed: int = 0, z2: bool = True) -> TernaryMera:
    """Random isometries, identity disentanglers; spin-flip symmetric when ``z2``."""
    rng = np.random.Generator(np.random.Philox(seed))
    layers = []
    for index, (din, dout) in enumerate(_layer_dims(chi, T) + [(chi, chi)]):
        w = rng.standard_normal((dout, din, din, din))
        gw, gu = _layer_gens(din, dout, index == 0)
        if z2:
            w = _symmetrize(w, gw)
        w = -_polar(w.reshape(dout, -1)).reshape(w.shape)
        u = np.eye(din * din).reshape(din, din, din, din)
        layers.append(MeraLayer(w, u))
    return TernaryMera(layers[:-1], layers[-1], chi)


def product_state_mera(T: int = 0) -> TernaryMera:
    """chi = 2 MERA whose physical state is |up up ...>."""
    w = np.zeros((2, 2, 2, 2))
    w[0, 0, 0, 0] = 1.0
    w[1, 1, 0, 0] = 1.0
    u = np.eye(4).reshape(2, 2, 2, 2)
    return TernaryMera([MeraLayer(w.copy(), u.copy()) for _ in range(T)], MeraLayer(w, u), 2)


# optimization -----------------------------------------------------------------

_ENV_NETS: dict = {}


def _energy_net(offset: int):
    if offset not in _ENV_NETS:
        net, low, up = _single_layer(offset, 2)
        full = _Net()
        full.ops = list(net.ops) + [("h", tuple(low), ""), ("rho", tuple(up), "")]
        _ENV_NETS[offset] = full
    return _ENV_NETS[offset]


def _environment(layer: MeraLayer, h: np.ndarray, rho: np.ndarray, role: str) -> np.ndarray:
    arrays = {"w": layer.w, "u": layer.u, "h": h, "rho": rho}
    env = np.zeros_like(arrays[role])
    for p in range(3):
        net = _energy_net(p)
        for i, (r, labs, side) in enumerate(net.ops):
            if r == role and side == "k":
                env += _run(("env", p, i), net, list(labs), arrays, exclude=i)
    return env


def _update_layer(layer: MeraLayer, h, rho, gens, z2: bool, n_iter: int = 1) -> MeraLayer:
    gw, gu = gens
    for _ in range(n_iter):
        env = _environment(layer, h, rho, "u")
        if z2:
            env = _symmetrize(env, gu)
        n = layer.chi_in**2
        u = _polar(env.reshape(n, n)).reshape(layer.u.shape)
        layer = MeraLayer(layer.w, u)
        env = _environment(layer, h, rho, "w")
        if z2:
            env = _symmetrize(env, gw)
        w = _polar(env.reshape(layer.chi_out, -1)).reshape(layer.w.shape)
        layer = MeraLayer(w, u)
    return layer


def optimize_mera(
    params: XxzParams,
    chi: int,
    T: int = 2,
    *,
    max_sweeps: int = 5000,
    tol: float = 1e-8,
    seed: int = 0,
    si_layers: int = 1,
    z2: bool = True,
    require_convergence: bool = True,
    initial: TernaryMera | None = None,
) -> TernaryMera:
    """Energy minimization by alternating polar (environment) updates.

    The bond Hamiltonian is shifted to be negative semi-definite so each
    linearized update lowers the energy. Per sweep, transitional layers are
    updated bottom-up against the densities descended from the current
    scale-invariant fixed point; the scale-invariant layer sees the
    Hamiltonian summed over ``si_layers`` ascents. With ``z2`` all tensors are
    projected onto the spin-flip symmetric subspace.
    """
    if chi < 2:
        raise ValueError(f"chi too small: {chi} (need chi >= 2)")
    if chi > 8:
        raise ValueError("desk-scale optimization supports chi <= 8")
    if T < 1 and chi != PHYS_DIM:
        raise ValueError("T >= 1 transitional layers required for chi > 2")
    h_phys = bond_hamiltonian(params)
    shift = float(np.linalg.eigvalsh(h_phys).max())
    h0 = op_tensor(h_phys - shift * np.eye(4), 2)

    mera = initial if initial is not None else random_mera(chi, T, seed, z2)
    dims = _layer_dims(chi, T) + [(chi, chi)]
    gens = [_layer_gens(din, dout, i == 0) for i, (din, dout) in enumerate(dims)]
    trace = []
    last = float("inf")
    converged = False
    for sweep in range(max_sweeps):
        rho_top = average_rho2(mera)
        rhos = [rho_top]
        for layer in reversed(mera.transition_layers):
            rhos.append(descend2_average(rhos[-1], layer))
        rhos = rhos[::-1]  # rhos[l] lives on the input of layer l; rhos[T] is the top
        h = h0
        new_layers = []
        for ell, layer in enumerate(mera.transition_layers):
            layer = _update_layer(layer, h, rhos[ell + 1], gens[ell], z2)
            new_layers.append(layer)
            h = ascend2_average(h, layer)
        si = mera.scale_invariant
        h_sum = h.copy()
        hk = h
        for _ in range(si_layers - 1):
            hk = ascend2_average(hk, si)
            h_sum = h_sum + hk
        si = _update_layer(si, h_sum, rho_top, gens[-1], z2)
        mera = TernaryMera(new_layers, si, chi, delta=params.delta)
        mera.top = average_rho2(mera, start=rho_top)
        energy = bond_energy(mera, params)
        trace.append(energy)
        if abs(last - energy) < tol:
            converged = True
            break
        last = energy
    mera.energy = trace[-1]
    mera.meta["energy_trace"] = trace
    mera.meta["sweeps"] = len(trace)
    if not converged and require_convergence:
        err = ConvergenceError(
            f"optimize_mera: energy change above {tol:g} after {max_sweeps} sweeps", abs(trace[-1] - trace[-2])
        )
        err.energy_trace = trace
        raise err
    return mera


# sampling ---------------------------------------------------------------------


def _sampling_net(mera: TernaryMera, n: int, lower_lab, first_offset: int = 1):
    """Network of the n-site physical density operator; returns (net, cap width)."""
    net = _Net()
    start = first_offset if first_offset > 0 else 3
    window = list(range(start, start + n))
    lab = lower_lab
    ell = 0
    while ell < mera.T or len(window) > 3:
        role = f"t{ell}" if ell < mera.T else "si"

        def upper(j, side, ell=ell):
            return f"L{ell + 1}{side}{j}"

        blocks = _emit_layer(net, f"{ell}_", window, lab, upper, "w" + role, "u" + role)
        shift = 1 - blocks[0]
        window = [j + shift for j in blocks]
        lab = lambda s, side, ell=ell, shift=shift: f"L{ell + 1}{side}{s - shift}"  # noqa: E731
        ell += 1
    width = len(window)
    net.add(f"cap{width}", [lab(s, "k") for s in window] + [lab(s, "b") for s in window])
    return net, width


def _tensor_arrays(mera: TernaryMera) -> dict:
    arrays = {}
    for ell, layer in enumerate(mera.transition_layers):
        arrays[f"wt{ell}"] = layer.w
        arrays[f"ut{ell}"] = layer.u
    arrays["wsi"] = mera.scale_invariant.w
    arrays["usi"] = mera.scale_invariant.u
    rho2 = mera.rho2
    arrays["cap2"] = rho2
    arrays["cap1"] = partial_trace(rho2, [0])
    arrays["cap3"] = mera.rho3
    return arrays


def _basis_matrix(basis: str) -> np.ndarray:
    if basis == "z":
        return np.eye(2)
    if basis == "x":
        return HADAMARD
    raise ValueError(f"basis must be 'z' or 'x', got {basis!r}")


def window_distribution(mera: TernaryMera, n: int, basis: str = "z", average_layouts: bool = False) -> np.ndarray:
    """Joint outcome probabilities of n consecutive sites (first site most significant).

    Dense route: contracts the diagonal of the n-site density operator in the
    measurement basis. With ``average_layouts`` the result is averaged over
    the three offsets of the first physical site.
    """
    if n < 1 or n > 14:
        raise ValueError("dense window distribution supports 1 <= n <= 14")
    offsets = (0, 1, 2) if average_layouts else (1,)
    arrays = _tensor_arrays(mera)
    arrays["basis"] = _basis_matrix(basis)
    total = np.zeros((2,) * n)
    for off in offsets:
        net, _ = _sampling_net(mera, n, lambda s, side: f"P{side}{s}", off)
        start = off if off > 0 else 3
        sites = range(start, start + n)
        for s in sites:
            net.add("basis", [f"Pk{s}", f"X{s}"])
            net.add("basis", [f"Pb{s}", f"X{s}"])
        out = [f"X{s}" for s in sites]
        total += _run(("dense", n, off), net, out, arrays, optimize="greedy")
    p = total.ravel() / len(offsets)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def site_density(mera: TernaryMera, n: int, past, basis: str = "z") -> np.ndarray:
    """2x2 density matrix of site ``len(past)`` of an n-site window, given past outcomes (0/1)."""
    k = len(past)
    if k >= n:
        raise ValueError("no free site left")

    def lab(s, side):
        q = s - 1
        if q > k:
            return f"P{s}"
        return f"P{side}{s}"

    net, _ = _sampling_net(mera, n, lab, 1)
    arrays = _tensor_arrays(mera)
    vecs = _basis_matrix(basis)
    for q, s_out in enumerate(past):
        arrays[f"v{q}"] = vecs[:, s_out]
        net.add(f"v{q}", [f"Pk{q + 1}"])
        net.add(f"v{q}", [f"Pb{q + 1}"])
    arrays["rot"] = vecs
    net.add("rot", [f"Pk{k + 1}", "Ok"])
    net.add("rot", [f"Pb{k + 1}", "Ob"])
    rho = _run(("cond", n, k, basis), net, ["Ok", "Ob"], arrays, optimize="greedy")
    rho = 0.5 * (rho + rho.T)
    tr = np.trace(rho)
    if not tr > 0:
        raise FloatingPointError(f"conditional density has trace {tr:g}")
    return rho / tr


def chain_rule_probability(mera: TernaryMera, outcomes, basis: str = "z") -> float:
    """Product of sequential conditionals for an outcome string (0 = +1, 1 = -1)."""
    n = len(outcomes)
    prob = 1.0
    for k in range(n):
        rho = site_density(mera, n, list(outcomes[:k]), basis)
        prob *= rho[outcomes[k], outcomes[k]]
    return float(prob)


def sample_mera(mera: TernaryMera, n: int, seed: int, basis: str = "z", method: str = "auto") -> Trajectory:
    """Sample n consecutive symbols from the single middle-leg layout.

    ``method="dense"`` draws from the contracted joint distribution (n <= 12),
    ``"sequential"`` conditions site by site on the already sampled outcomes.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if method == "auto":
        method = "dense" if n <= 12 else "sequential"
    rng = np.random.Generator(np.random.Philox(seed))
    if method == "dense":
        p = window_distribution(mera, n, basis)
        code = int(rng.choice(p.size, p=p))
        outcomes = [(code >> (n - 1 - q)) & 1 for q in range(n)]
    elif method == "sequential":
        outcomes = []
        u = rng.random(n)
        for k in range(n):
            rho = site_density(mera, n, outcomes, basis)
            outcomes.append(0 if u[k] < rho[0, 0] else 1)
    else:
        raise ValueError(f"unknown method {method!r}")
    symbols = np.where(np.array(outcomes) == 0, 1, -1).astype(np.int8)
    return Trajectory(symbols, seed=seed, basis=basis, delta=mera.delta, chi=mera.chi, model="mera")


def sample_mera_batch(mera: TernaryMera, n: int, n_samples: int, seed: int, basis: str = "z") -> np.ndarray:
    """Many independent n-site windows from the dense joint distribution; (n_samples, n) symbols."""
    p = window_distribution(mera, n, basis)
    rng = np.random.Generator(np.random.Philox(seed))
    codes = rng.choice(p.size, size=n_samples, p=p)
    bits = (codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return np.where(bits == 0, 1, -1).astype(np.int8)


# cost model -------------------------------------------------------------------


def contraction_cost_estimate(n: int, chi: int, mode: str = "exact"):
    """Sampling cost model sum_{k=1}^{log3 n} chi^(3k+4) n / 3^k.

    ``n`` is rounded up to a power of three. ``mode="exponent"`` returns
    3 log3(chi); ``mode="bound"`` returns n^(3 log3(chi) + 1) for a full
    trajectory.
    """
    if n < 1 or chi < 1:
        raise ValueError("n and chi must be positive")
    if mode == "exponent":
        return 3.0 * math.log(chi, 3)
    if mode == "bound":
        return float(n) ** (3.0 * math.log(chi, 3) + 1.0)
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    levels = 0
    n3 = 1
    while n3 < n:
        n3 *= 3
        levels += 1
    return sum(chi ** (3 * k + 4) * (n3 // 3**k) for k in range(1, levels + 1))


# state file -------------------------------------------------------------------

MERA_FORMAT = "MERA3"
_MANIFEST_KEYS = {"format", "version", "chi", "T", "delta", "energy", "arrays"}


def save_mera(path, mera: TernaryMera, extra: dict | None = None) -> None:
    from .statefile import save_state

    manifest = {
        "format": MERA_FORMAT,
        "version": 1,
        "chi": mera.chi,
        "T": mera.T,
        "delta": mera.delta,
        "energy": mera.energy,
    }
    if extra:
        manifest.update(extra)
    arrays = {}
    for ell, layer in enumerate(mera.transition_layers):
        arrays[f"w_{ell}"] = layer.w
        arrays[f"u_{ell}"] = layer.u
    arrays["w_si"] = mera.scale_invariant.w
    arrays["u_si"] = mera.scale_invariant.u
    arrays["rho2"] = mera.rho2
    save_state(path, manifest, arrays)


def load_mera(path) -> TernaryMera:
    from .statefile import load_state

    manifest, arr = load_state(path, MERA_FORMAT)
    layers = [MeraLayer(arr[f"w_{ell}"], arr[f"u_{ell}"]) for ell in range(int(manifest["T"]))]
    return TernaryMera(
        layers,
        MeraLayer(arr["w_si"], arr["u_si"]),
        int(manifest["chi"]),
        top=arr["rho2"],
        delta=manifest.get("delta"),
        energy=manifest.get("energy"),
        meta={k: v for k, v in manifest.items() if k not in _MANIFEST_KEYS},
    )


def sz_site_operator(position: int = 0) -> np.ndarray:
    """S^z on one site of a three-site window."""
    ops = [np.eye(2)] * 3
    ops[position] = SZ
    return op_tensor(np.kron(np.kron(ops[0], ops[1]), ops[2]), 3)
