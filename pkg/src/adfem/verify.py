"""Verification oracles and regression demonstrations."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from . import matexp as me
from . import tangent as tg
from .assembly import BsrMatrix, JacobianMethod, scatter_matrices
from .elements import jacobian as jac
from .elements.kernels import PSI11, PSI22, OldroydBKernel, mass_matrix
from .newton import SingularMatrixError, dense_lu
from .problems import ChannelSetup, oldroydb_problem

REL_FLOOR = 1e-3


class PatternMismatchError(ValueError):
    pass


# --------------------------------------------------------------------------
# global Jacobian comparison


@dataclass
class JacobianReport:
    methods: tuple
    max_abs: float
    max_rel: float
    location: tuple     # (row, col) of the worst relative entry
    ref_value: float
    other_value: float
    floor: float

    def as_dict(self):
        return asdict(self)


def compare_matrices(ref, other, methods=("ref", "other"), rel_floor=REL_FLOOR):
    """Entrywise comparison over a shared pattern.

    Relative errors use ``max(|ref_ij|, rel_floor * max|ref|)`` as the
    denominator so that tiny entries are judged against the matrix scale.
    """
    if isinstance(ref, BsrMatrix) and isinstance(other, BsrMatrix):
        if not (np.array_equal(ref.indptr, other.indptr) and np.array_equal(ref.indices, other.indices)):
            raise PatternMismatchError("matrices have different sparsity patterns")
        a, b = ref.to_dense(), other.to_dense()
    else:
        a, b = np.asarray(ref, float), np.asarray(other, float)
        if a.shape != b.shape:
            raise PatternMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    floor = rel_floor * np.abs(a).max() if a.size else 0.0
    den = np.maximum(np.abs(a), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0, diff / den, np.where(diff > 0, np.inf, 0.0))
    loc = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else (0, 0)
    return JacobianReport(tuple(methods), float(diff.max(initial=0.0)), float(rel.max(initial=0.0)),
                          tuple(int(i) for i in loc), float(a[loc]), float(b[loc]), float(floor))


def node_coloring(mesh):
    """Colour nodes so that no two nodes of one colour share a neighbour.

    Columns of one colour can be perturbed together: no row couples to more
    than one of them.
    """
    g = nx.Graph()
    g.add_nodes_from(range(mesh.n_nodes))
    for el in mesh.elements:
        el = [int(i) for i in el]
        g.add_edges_from((a, b) for i, a in enumerate(el) for b in el[i + 1:])
    coloring = nx.greedy_color(nx.power(g, 2), strategy="largest_first")
    return np.array([coloring[i] for i in range(mesh.n_nodes)])


def global_fd_jacobian(assembler, u, h=1e-6):
    """Central-difference Jacobian of the global residual.

    Columns are grouped by a distance-2 node colouring (one group per colour
    and field), so the cost is ``2 * colours * ndf`` residual evaluations.
    """
    u = np.asarray(u, dtype=float)
    A = assembler.pattern.zeros_like()
    ndf = A.ndf
    colors = node_coloring(assembler.mesh)
    step = h * (1.0 + np.abs(u))
    rows = A.block_rows()
    for c in range(colors.max() + 1):
        nodes = np.flatnonzero(colors == c)
        # block entries whose column node has this colour
        sel = np.flatnonzero(colors[A.indices] == c)
        for f in range(ndf):
            dofs = nodes * ndf + f
            up, dn = u.copy(), u.copy()
            up[dofs] += step[dofs]
            dn[dofs] -= step[dofs]
            span = up - dn
            diff = assembler.residual(up) - assembler.residual(dn)
            col = A.indices[sel] * ndf + f
            rdofs = rows[sel][:, None] * ndf + np.arange(ndf)[None, :]
            A.data[sel, :, f] = diff[rdofs] / span[col][:, None]
    return A


def assembled_jacobian(problem, u, method, h=1e-6):
    """Global Jacobian before boundary conditions; ``fd_global`` uses colouring."""
    if method == "fd_global":
        return global_fd_jacobian(problem.assembler, u, h)
    return problem.assembler.assemble(u, method, fd_h=h)[0]


def compare_jacobians(problem, u, methods=("ad_identity", "fd_global"), h=1e-6):
    a = assembled_jacobian(problem, u, methods[0], h)
    b = assembled_jacobian(problem, u, methods[1], h)
    return compare_matrices(a, b, methods)


# --------------------------------------------------------------------------
# the zero-derivative pitfall


@dataclass
class PolicyOutcome:
    policy: str
    psi_block_max: float        # max |entry| of the Psi-Psi sub-block of the Psi rows
    psi_rows_max: float         # max |entry| of the Psi rows over all columns
    singular: bool
    solved: bool
    lu_message: str
    mass_error: float = float("nan")


@dataclass
class SingularSystemReport:
    outcomes: dict
    generic_state_diff: float
    lam: float
    seed: int

    def as_dict(self):
        return {"outcomes": {k: asdict(v) for k, v in self.outcomes.items()},
                "generic_state_diff": self.generic_state_diff, "lam": self.lam, "seed": self.seed}


def _psi_masks(ndf, n_nodes):
    fields = np.arange(ndf * n_nodes) % ndf
    return (fields >= PSI11) & (fields <= PSI22)


def reproduce_singular_system(mesh, params, setup=ChannelSetup(), seed=0,
                              policies=("naive_identity", "taylor_fix")):
    """Assemble at ``u = 0, Psi = 0`` under each small-norm policy and try to solve."""
    outcomes = {}
    mass = None
    for name in policies:
        cfg = me.ExpmConfig(small_norm_policy=name)
        prob = oldroydb_problem(mesh, params, cfg, setup, JacobianMethod.AD_BLOCKED)
        u0 = np.zeros(prob.ndofs)
        A_raw, _ = prob.assemble_raw(u0)
        dense = A_raw.to_dense()
        psi = _psi_masks(6, mesh.n_nodes)
        psi_block = float(np.abs(dense[np.ix_(psi, psi)]).max())
        psi_rows = float(np.abs(dense[psi]).max())
        A, b = prob.assemble(u0)
        try:
            dense_lu(A, b)
            singular, solved, msg = False, True, "solved"
        except SingularMatrixError as err:
            singular, solved, msg = True, False, str(err)
        out = PolicyOutcome(name, psi_block, psi_rows, singular, solved, msg)
        if name != "naive_identity":
            if mass is None:
                mass = _global_mass(prob)
            blocks = A_raw.data[:, PSI11:PSI22 + 1, PSI11:PSI22 + 1]
            expect = mass[:, None, None] * np.eye(3) / params.lam
            out.mass_error = float(np.abs(blocks - expect).max())
        outcomes[name] = out

    # away from the floor both policies give the same Jacobian
    rng = np.random.default_rng(seed)
    ref_prob = oldroydb_problem(mesh, params, me.ExpmConfig(small_norm_policy="taylor_fix"), setup)
    u = rng.normal(0.0, 0.3, ref_prob.ndofs)
    a1 = ref_prob.assemble_raw(u)[0]
    a2 = oldroydb_problem(mesh, params, me.ExpmConfig(small_norm_policy="naive_identity"),
                          setup).assemble_raw(u)[0]
    diff = float(np.abs(a1.data - a2.data).max())
    return SingularSystemReport(outcomes, diff, params.lam, seed)


def _global_mass(prob):
    """Scalar P2 mass matrix on the BSR pattern: one value per block."""
    A = prob.assembler.pattern
    Me = mass_matrix(prob.mesh.coords())
    scalar = BsrMatrix(1, A.n_nodes, A.indptr, A.indices, np.zeros((A.nnzb, 1, 1)), A.elem_blocks)
    scatter_matrices(scalar, Me, slice(None))
    return scalar.data[:, 0, 0]


# --------------------------------------------------------------------------
# expm pitfalls at the matrix level


@dataclass
class SpectralReport:
    spectral_deviation: float
    scaling_squaring_deviation: float
    closed_form: list
    spectral_tangent: list


def spectral_instability(delta=1e-10, direction=(0.3, 0.7, -0.2)):
    """Tangents of the two exponentials at ``diag(1, 1) + delta * offdiag``.

    Non-finite tangents count as infinite deviation.
    """
    M = me.Sym2(1.0, delta, 1.0)
    dM = me.Sym2(*direction)
    ref = me.dexpm_closed(M, dM).to_array()
    spec = me.tangent_of(me.expm_spectral, M, dM).to_array()
    sq = me.tangent_of(me.expm, M, dM).to_array()
    scale = np.abs(ref).max()
    dev = float(np.abs(spec - ref).max() / scale) if np.all(np.isfinite(spec)) else float("inf")
    return SpectralReport(dev, float(np.abs(sq - ref).max()), ref.tolist(), spec.tolist())


# --------------------------------------------------------------------------
# cost of AD


@dataclass
class AlphaFit:
    strategy: str
    alpha: float
    beta: float
    r2: float
    ratios: list
    spread: list          # IQR / median per p
    inconclusive: bool


@dataclass
class AlphaReport:
    p_values: list
    residual_s: float
    fits: dict = field(default_factory=dict)
    seed: int = 0
    elements: int = 0
    note: str = ("central FD would cost 2 residual evaluations per direction; "
                 "the ratios here are relative to one residual evaluation")

    def as_dict(self):
        return {"p_values": self.p_values, "residual_s": self.residual_s, "seed": self.seed,
                "elements": self.elements, "note": self.note,
                "fits": {k: asdict(v) for k, v in self.fits.items()}}


def random_p2_batch(n, seed=0, scale=0.5):
    """Random well-shaped P2 elements with random Oldroyd-B states."""
    rng = np.random.default_rng(seed)
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    v = base[None] * rng.uniform(0.5, 2.0, (n, 1, 1)) + rng.uniform(-0.1, 0.1, (n, 3, 2))
    v[:, 1, 0] += 0.2  # keep orientation positive
    mid = np.stack([(v[:, 0] + v[:, 1]) / 2, (v[:, 1] + v[:, 2]) / 2, (v[:, 2] + v[:, 0]) / 2], 1)
    coords = np.concatenate([v, mid], axis=1)
    ue = rng.normal(0.0, scale, (n, 36))
    return coords, ue


def _median_time(fn, trials):
    times = []
    for _ in range(trials):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    times = np.array(times)
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return med, (q3 - q1) / med if med > 0 else 0.0


def _seeded_eval(kernel, coords, ue, C, block):
    nen = kernel.nen
    if block is None:
        return kernel.residual(coords, tg.lift(ue, tg.SeedMatrix(C)))
    parts = [ue[..., k * nen:(k + 1) * nen] for k in range(kernel.ndf)]
    parts[block] = tg.lift(parts[block], tg.SeedMatrix(C))
    return kernel.residual(coords, parts)


def measure_alpha(kernel=None, p_values=(1, 2, 4, 8, 16, 36), trials=7, elements=500, seed=0,
                  spread_limit=0.2):
    """Fit ``cost(AD, p) / cost(residual) = beta + alpha * p`` per seeding strategy.

    ``identity`` pushes p random directions through all unknowns; ``blocked``
    pushes p random directions through one DOF block at a time (averaged
    over the blocks), the situation the blocked seeding creates.
    """
    kernel = kernel or OldroydBKernel()
    coords, ue = random_p2_batch(elements, seed)
    rng = np.random.default_rng(seed + 1)
    n, nen, ndf = kernel.ndf * kernel.nen, kernel.nen, kernel.ndf
    kernel.residual(coords, ue)  # warm-up
    base, _ = _median_time(lambda: kernel.residual(coords, ue), trials)
    report = AlphaReport(list(p_values), base, seed=seed, elements=elements)
    for strategy in ("identity", "blocked"):
        ratios, spreads = [], []
        for p in p_values:
            if strategy == "identity":
                C = rng.normal(size=(p, n))
                _seeded_eval(kernel, coords, ue, C, None)
                t, s = _median_time(lambda: _seeded_eval(kernel, coords, ue, C, None), trials)
            else:
                ts, ss = [], []
                for k in range(ndf):
                    C = rng.normal(size=(p, nen))
                    _seeded_eval(kernel, coords, ue, C, k)
                    tk, sk = _median_time(lambda: _seeded_eval(kernel, coords, ue, C, k), trials)
                    ts.append(tk)
                    ss.append(sk)
                t, s = float(np.mean(ts)), float(np.max(ss))
            ratios.append(t / base)
            spreads.append(s)
        pv = np.asarray(p_values, dtype=float)
        r = np.asarray(ratios)
        alpha, beta = np.polyfit(pv, r, 1)
        fit = beta + alpha * pv
        ss_tot = np.sum((r - r.mean()) ** 2)
        r2 = 1.0 - np.sum((r - fit) ** 2) / ss_tot if ss_tot > 0 else 1.0
        report.fits[strategy] = AlphaFit(strategy, float(alpha), float(beta), float(r2), list(map(float, r)),
                                         list(map(float, spreads)), bool(max(spreads) > spread_limit))
    return report


@dataclass
class SeedingTiming:
    identity_s: list
    blocked_s: list
    elements: int

    @property
    def identity_median(self):
        return float(np.median(self.identity_s))

    @property
    def blocked_median(self):
        return float(np.median(self.blocked_s))

    @property
    def gain(self):
        """Fraction of the identity-seeding time saved by blocked seeding."""
        return 1.0 - self.blocked_median / self.identity_median


def time_seeding(kernel=None, elements=10_000, trials=5, chunk=1000, seed=0):
    """Wall time of full element Jacobians over ``elements`` evaluations per strategy."""
    kernel = kernel or OldroydBKernel()
    coords, ue = random_p2_batch(chunk, seed)
    reps = max(1, elements // chunk)

    def run(seeding):
        for _ in range(reps):
            jac.elem_jacobian_ad(kernel, coords, ue, seeding)

    run("identity")
    run("block_per_dof")
    out = SeedingTiming([], [], reps * chunk)
    for _ in range(trials):
        for seeding, store in (("identity", out.identity_s), ("block_per_dof", out.blocked_s)):
            t = time.perf_counter()
            run(seeding)
            store.append(time.perf_counter() - t)
    return out
