"""Random-walk increment laws on the integer lattice.

A walk law is a finitely supported probability mass function on Z^d
(infinite-support laws are truncated with the removed mass recorded).
From it we derive iterated transition kernels, collision probabilities,
truncated Green functions, first-return tables and the power-law
exponents that govern kernel decay and intersection tails.

Kernels are stored as dense arrays over a bounding box that grows with
the step count.  The box schedule is planned from per-axis Chernoff
bounds so that the clipped mass stays below a configured tolerance; the
actually clipped mass is tracked exactly at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DiagnosticError, ResourceBudgetError

DEFAULT_MAX_CELLS = 33_554_432  # largest single kernel array (256 MB of float64)
DEFAULT_MAX_CELL_OPS = 4.0e9  # total element operations for one table


# ---------------------------------------------------------------------------
# walk laws


@dataclass(frozen=True)
class WalkLaw:
    """Increment distribution on Z^d.

    ``vectors`` holds the support (one lattice vector per row, no
    duplicates, no zero-probability padding) and ``probs`` the matching
    probabilities.  ``truncation_loss`` records mass removed when an
    infinite-support law was truncated; the stored probabilities sum to
    ``1 - truncation_loss``.
    """

    d: int
    vectors: np.ndarray
    probs: np.ndarray
    label: str
    truncation_loss: float = 0.0

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.int64).reshape(-1, self.d)
        probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if self.d < 1:
            raise ValueError("dimension must be a positive integer")
        if vectors.shape[0] != probs.shape[0] or vectors.shape[0] == 0:
            raise ValueError("support and probability arrays do not match")
        if np.any(probs <= 0.0):
            raise ValueError("support must carry strictly positive probabilities")
        order = np.lexsort(vectors.T[::-1])
        vectors = vectors[order]
        probs = probs[order]
        if np.any(np.all(vectors[1:] == vectors[:-1], axis=1)):
            raise ValueError("duplicate support vectors")
        if not 0.0 <= self.truncation_loss < 1.0:
            raise ValueError("truncation loss must lie in [0, 1)")
        if abs(probs.sum() - (1.0 - self.truncation_loss)) > 1e-12:
            raise ValueError("probabilities must sum to 1 minus the recorded loss")
        vectors.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "probs", probs)

    @property
    def support_size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def support_radius(self) -> float:
        """Largest Euclidean norm over the support."""
        return float(np.sqrt((self.vectors.astype(float) ** 2).sum(axis=1).max()))

    @property
    def axis_radius(self) -> np.ndarray:
        """Per-axis maximum of |v_a| over the support."""
        return np.abs(self.vectors).max(axis=0)

    @property
    def is_symmetric(self) -> bool:
        """True when the law is invariant under x -> -x."""
        return self._matches_reflection(-self.vectors)

    @property
    def is_axis_symmetric(self) -> bool:
        """True when the law is invariant under every single-axis reflection."""
        for a in range(self.d):
            refl = self.vectors.copy()
            refl[:, a] = -refl[:, a]
            if not self._matches_reflection(refl):
                return False
        return True

    def _matches_reflection(self, reflected: np.ndarray) -> bool:
        order = np.lexsort(reflected.T[::-1])
        return bool(
            np.array_equal(reflected[order], self.vectors)
            and np.array_equal(self.probs[order], self.probs)
        )

    def as_mapping(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(c) for c in v): float(p) for v, p in zip(self.vectors, self.probs)}

    def pmf(self, x) -> float:
        key = tuple(int(c) for c in np.atleast_1d(x))
        return self.as_mapping().get(key, 0.0)

    def axis_log_mgf(self, axis: int, ts: np.ndarray) -> np.ndarray:
        """log E[exp(t * X_1[axis])] for an array of t values."""
        va = self.vectors[:, axis].astype(float)
        logp = np.log(self.probs)
        return logsumexp(logp[None, :] + ts[:, None] * va[None, :], axis=1)


def make_simple_walk(d: int) -> WalkLaw:
    """Uniform law on the 2d unit vectors."""
    if d < 1:
        raise ValueError("dimension must be a positive integer")
    vectors = np.zeros((2 * d, d), dtype=np.int64)
    for a in range(d):
        vectors[2 * a, a] = 1
        vectors[2 * a + 1, a] = -1
    probs = np.full(2 * d, 1.0 / (2 * d))
    return WalkLaw(d, vectors, probs, label=f"simple-{d}d")


def make_point_walk(d: int) -> WalkLaw:
    """Degenerate walk staying at the origin."""
    return WalkLaw(d, np.zeros((1, d), dtype=np.int64), np.ones(1), label=f"point-{d}d")


# ---------------------------------------------------------------------------
# tower walk (heavy-tailed one-dimensional law with doubly exponential shells)

TOWER_MAX_SHELLS = 4


def tower_sequence(n_terms: int) -> list[int]:
    """a_0 = 1, a_{k+1} = 2**a_k.  Refuses terms past a_4 = 65536."""
    if n_terms < 1:
        raise ValueError("need at least one term")
    if n_terms > TOWER_MAX_SHELLS + 1:
        raise OverflowError(
            "tower sequence beyond a_4 = 65536 is not representable at desk scale "
            "(a_5 = 2**65536)"
        )
    seq = [1]
    while len(seq) < n_terms:
        seq.append(2 ** seq[-1])
    return seq


def tower_weight(x: int, shell_cutoff: int = TOWER_MAX_SHELLS) -> float:
    """Unnormalized weight: 1 on |x| <= 1, 1/((2 a_k + 1) a_{k-1}^4) on shell k."""
    a = tower_sequence(shell_cutoff + 1)
    r = abs(int(x))
    if r <= 1:
        return 1.0
    for k in range(1, shell_cutoff + 1):
        if a[k - 1] < r <= a[k]:
            return 1.0 / ((2 * a[k] + 1) * a[k - 1] ** 4)
    raise ValueError(f"|x| = {r} lies beyond shell {shell_cutoff}")


def tower_shell_masses(shell_cutoff: int = TOWER_MAX_SHELLS) -> list[float]:
    """Total unnormalized weight per shell, index 0 = the core |x| <= 1."""
    a = tower_sequence(shell_cutoff + 1)
    masses = [3.0]
    for k in range(1, shell_cutoff + 1):
        count = 2 * (a[k] - a[k - 1])
        masses.append(count / ((2 * a[k] + 1) * a[k - 1] ** 4))
    return masses


def _tower_tail_bound(shell_cutoff: int) -> float:
    # Shell k > cutoff carries at most a_{k-1}^{-4}; the first omitted term
    # dominates the rest by many orders of magnitude.
    a_cut = tower_sequence(shell_cutoff + 1)[-1]
    first = float(a_cut) ** -4
    return 2.0 * first


def make_tower_walk(shell_cutoff: int = TOWER_MAX_SHELLS) -> WalkLaw:
    """One-dimensional heavy-tail law built on the tower sequence.

    Shells beyond ``shell_cutoff`` are dropped and their (bounded) mass is
    recorded as truncation loss.
    """
    if shell_cutoff < 1:
        raise ValueError("shell_cutoff must be >= 1")
    if shell_cutoff > TOWER_MAX_SHELLS:
        raise OverflowError(
            f"shell_cutoff={shell_cutoff} needs a_{shell_cutoff} beyond the "
            "representable range (a_5 = 2**65536)"
        )
    a = tower_sequence(shell_cutoff + 1)
    radius = a[-1]
    xs = np.arange(-radius, radius + 1, dtype=np.int64)
    f = np.empty(xs.shape[0])
    absx = np.abs(xs)
    f[absx <= 1] = 1.0
    for k in range(1, shell_cutoff + 1):
        sel = (absx > a[k - 1]) & (absx <= a[k])
        f[sel] = 1.0 / ((2 * a[k] + 1) * a[k - 1] ** 4)
    tail = _tower_tail_bound(shell_cutoff)
    total = f.sum() + tail
    probs = f / total
    loss = tail / total
    return WalkLaw(
        1,
        xs.reshape(-1, 1),
        probs,
        label=f"tower-{shell_cutoff}",
        truncation_loss=loss,
    )


# ---------------------------------------------------------------------------
# box planning


def chernoff_radii(law: WalkLaw, k_max: int, per_step_tol: float) -> np.ndarray:
    """Per-axis box radii for steps 1..k_max.

    Returns an int array of shape (k_max, d): row k-1 holds radii such
    that P(|X_k . e_a| > r) <= per_step_tol for every axis, from the
    walk's own moment generating function.  Radii are clipped at the
    exact support bound k * max|v_a| and made nondecreasing in k.
    """
    target = math.log(max(per_step_tol, 1e-300) / 2.0)
    ks = np.arange(1, k_max + 1, dtype=float)
    radii = np.empty((k_max, law.d), dtype=np.int64)
    for a in range(law.d):
        ra = int(law.axis_radius[a])
        if ra == 0:
            radii[:, a] = 0
            continue
        ts = np.geomspace(1e-4, 690.0 / ra, 64)
        need = np.zeros(k_max)
        for sign in (1.0, -1.0):
            logm = law.axis_log_mgf(a, sign * ts)
            # smallest r with min_t (k logm(t) - t r) <= target
            r_star = ((ks[:, None] * logm[None, :] - target) / ts[None, :]).min(axis=1)
            need = np.maximum(need, r_star)
        r = np.minimum(np.ceil(np.maximum(need, 0.0)), ks * ra).astype(np.int64)
        radii[:, a] = np.maximum.accumulate(r)
    return radii


def _table_cost(law: WalkLaw, radii: np.ndarray) -> np.ndarray:
    cells = np.prod(2 * radii.astype(float) + 1, axis=1)
    return law.support_size * cells


def feasible_horizon(
    law: WalkLaw,
    k_max: int,
    trunc_tol: float = 1e-12,
    max_cells: int = DEFAULT_MAX_CELLS,
    max_cell_ops: float = DEFAULT_MAX_CELL_OPS,
) -> int:
    """Largest horizon <= k_max whose kernel table fits the work budget."""
    radii = chernoff_radii(law, k_max, trunc_tol / max(k_max, 1))
    cells = np.prod(2 * radii.astype(float) + 1, axis=1)
    ok_cells = cells <= max_cells
    cum_ops = np.cumsum(law.support_size * cells)
    ok = ok_cells & (cum_ops <= max_cell_ops)
    if not ok[0]:
        return 0
    bad = np.flatnonzero(~ok)
    return int(bad[0]) if bad.size else k_max


# ---------------------------------------------------------------------------
# kernel tables


def _prob_groups(law: WalkLaw):
    """Support vectors grouped by identical probability (saves multiplies)."""
    values, inverse = np.unique(law.probs, return_inverse=True)
    return [(float(p), law.vectors[inverse == i]) for i, p in enumerate(values)]


def _shift_add(acc: np.ndarray, lo_acc, arr: np.ndarray, lo_arr, v) -> None:
    """acc[region] += arr shifted by lattice vector v, clipped to acc's box."""
    src_sl = []
    dst_sl = []
    for a in range(acc.ndim):
        t_lo = max(lo_arr[a] + v[a], lo_acc[a])
        t_hi = min(lo_arr[a] + v[a] + arr.shape[a], lo_acc[a] + acc.shape[a])
        if t_hi <= t_lo:
            return
        dst_sl.append(slice(t_lo - lo_acc[a], t_hi - lo_acc[a]))
        src_sl.append(slice(t_lo - lo_arr[a] - v[a], t_hi - lo_arr[a] - v[a]))
    acc[tuple(dst_sl)] += arr[tuple(src_sl)]


def _convolve_once(lo, arr, groups, new_lo, new_shape) -> np.ndarray:
    out = np.zeros(new_shape)
    buf = np.empty(new_shape)
    for p, vecs in groups:
        buf.fill(0.0)
        for v in vecs:
            _shift_add(buf, new_lo, arr, lo, v)
        out += p * buf
    return out


def _mirror(arr: np.ndarray) -> np.ndarray:
    return arr[tuple(slice(None, None, -1) for _ in range(arr.ndim))]


@dataclass(frozen=True)
class KernelTable:
    """Iterated kernels p_1..p_k_max of a walk law, dense over growing boxes."""

    law: WalkLaw
    k_max: int
    trunc_tol: float
    los: list = field(repr=False)
    arrs: list = field(repr=False)
    losses: np.ndarray = field(repr=False)  # cumulative clipped+inherited mass per k

    def distribution(self, k: int):
        """(lower corner, dense array) of p_k."""
        self._check(k)
        return self.los[k - 1], self.arrs[k - 1]

    def prob(self, k: int, x) -> float:
        lo, arr = self.distribution(k)
        idx = np.asarray(x, dtype=np.int64).ravel() - lo
        if np.any(idx < 0) or np.any(idx >= np.asarray(arr.shape)):
            return 0.0
        return float(arr[tuple(idx)])

    def mass(self, k: int) -> float:
        self._check(k)
        return float(self.arrs[k - 1].sum())

    def loss(self, k: int) -> float:
        self._check(k)
        return float(self.losses[k - 1])

    def _check(self, k: int) -> None:
        if not 1 <= k <= self.k_max:
            raise ValueError(f"step {k} outside table range 1..{self.k_max}")


def iterate_kernel(
    law: WalkLaw,
    k_max: int,
    trunc_tol: float = 1e-12,
    max_cells: int = DEFAULT_MAX_CELLS,
    max_cell_ops: float = DEFAULT_MAX_CELL_OPS,
) -> KernelTable:
    """Build p_1..p_k_max by repeated convolution.

    Deterministic; per-step mass clipped outside the planned boxes is
    bounded by trunc_tol/k_max and the exact cumulative deficit is
    recorded.  Raises ResourceBudgetError (with the feasible horizon)
    when the planned table exceeds the cell or work budget.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    radii = chernoff_radii(law, k_max, trunc_tol / k_max)
    cells = np.prod(2 * radii.astype(float) + 1, axis=1)
    cum_ops = np.cumsum(law.support_size * cells)
    if cells.max() > max_cells or cum_ops[-1] > max_cell_ops:
        raise ResourceBudgetError(
            f"kernel table to k={k_max} exceeds the work budget",
            feasible_horizon=feasible_horizon(law, k_max, trunc_tol, max_cells, max_cell_ops),
        )
    groups = _prob_groups(law)
    symmetric = law.is_symmetric
    los: list[np.ndarray] = []
    arrs: list[np.ndarray] = []
    losses = np.empty(k_max)

    lo = np.zeros(law.d, dtype=np.int64)
    arr = np.ones((1,) * law.d)
    for k in range(1, k_max + 1):
        new_lo = -radii[k - 1]
        new_shape = tuple(int(2 * r + 1) for r in radii[k - 1])
        arr = _convolve_once(lo, arr, groups, new_lo, new_shape)
        if symmetric:
            arr = 0.5 * (arr + _mirror(arr))
        lo = new_lo
        arr.setflags(write=False)
        los.append(lo)
        arrs.append(arr)
        losses[k - 1] = 1.0 - arr.sum()
    return KernelTable(law, k_max, trunc_tol, los, arrs, losses)


def collision_probability(table: KernelTable, k: int) -> float:
    """P(two independent copies meet at step k) = sum_x p_k(x)^2."""
    _, arr = table.distribution(k)
    return float((arr * arr).sum())


def collision_series(table: KernelTable) -> np.ndarray:
    """Partial sums of the collision probabilities, index k-1 = sum_{j<=k}."""
    terms = np.array([collision_probability(table, k) for k in range(1, table.k_max + 1)])
    return np.cumsum(terms)


def sup_norm(table: KernelTable, k: int) -> float:
    """max_x p_k(x)."""
    _, arr = table.distribution(k)
    return float(arr.max())


def difference_walk(law: WalkLaw, dense_pair_limit: int = 4_000_000) -> WalkLaw:
    """Law of X - X' for two independent copies (autocorrelation of the pmf)."""
    n_pairs = law.support_size**2
    base_loss = law.truncation_loss
    loss = 1.0 - (1.0 - base_loss) ** 2
    lo = law.vectors.min(axis=0) - law.vectors.max(axis=0)
    hi = law.vectors.max(axis=0) - law.vectors.min(axis=0)
    shape = tuple(int(h - l + 1) for l, h in zip(lo, hi))
    if n_pairs <= dense_pair_limit:
        dense = np.zeros(shape)
        diffs = (law.vectors[:, None, :] - law.vectors[None, :, :]).reshape(-1, law.d)
        pr = (law.probs[:, None] * law.probs[None, :]).ravel()
        flat = np.ravel_multi_index(tuple((diffs - lo).T), shape)
        np.add.at(dense.ravel(), flat, pr)
    else:
        if law.d != 1:
            raise ResourceBudgetError("difference law too large for exact pair sum")
        from scipy.signal import fftconvolve

        line = np.zeros(int(law.vectors[:, 0].max() - law.vectors[:, 0].min() + 1))
        line[law.vectors[:, 0] - law.vectors[:, 0].min()] = law.probs
        dense = fftconvolve(line, line[::-1]).reshape(shape)
        np.clip(dense, 0.0, None, out=dense)
        dense *= (1.0 - loss) / dense.sum()
    keep = np.argwhere(dense > 0.0)
    probs = dense[tuple(keep.T)]
    return WalkLaw(
        law.d,
        keep + lo,
        probs,
        label=f"diff({law.label})",
        truncation_loss=loss if abs(probs.sum() - (1 - loss)) <= 1e-12 else float(1 - probs.sum()),
    )


# ---------------------------------------------------------------------------
# truncated Green function of the difference walk


@dataclass(frozen=True)
class GreenFunction:
    """g0(x) = sum_{n<=n0} P(X^(1)_n - X^(2)_n = x), dense over a box."""

    lo: np.ndarray
    arr: np.ndarray
    n0: int

    @property
    def norm1(self) -> float:
        return float(self.arr.sum())

    def __call__(self, x) -> float:
        idx = np.asarray(x, dtype=np.int64).ravel() - self.lo
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.arr.shape)):
            return 0.0
        return float(self.arr[tuple(idx)])

    def at_origin(self) -> float:
        return self(np.zeros(len(self.lo), dtype=np.int64))


def truncated_green(diff_table: KernelTable, n0: int) -> GreenFunction:
    """Sum the difference-walk kernels up to n0.  n0 = 0 gives the zero map."""
    d = diff_table.law.d
    if n0 < 0:
        raise ValueError("n0 must be >= 0")
    if n0 == 0:
        return GreenFunction(np.zeros(d, dtype=np.int64), np.zeros((1,) * d), 0)
    if n0 > diff_table.k_max:
        raise ValueError(f"n0={n0} beyond table horizon {diff_table.k_max}")
    lo_n, arr_n = diff_table.distribution(n0)
    total = np.array(arr_n)  # largest box is the last one
    for k in range(1, n0):
        lo_k, arr_k = diff_table.distribution(k)
        _shift_add(total, lo_n, arr_k, lo_k, np.zeros(d, dtype=np.int64))
    total.setflags(write=False)
    return GreenFunction(lo_n, total, n0)


# ---------------------------------------------------------------------------
# first return to the origin (taboo dynamic programming)


def first_return_probabilities(
    law: WalkLaw,
    horizon: int,
    trunc_tol: float = 1e-12,
    max_cells: int = DEFAULT_MAX_CELLS,
    max_cell_ops: float = DEFAULT_MAX_CELL_OPS,
) -> np.ndarray:
    """K(n) = P(first visit to 0 happens at step n), for n = 1..horizon.

    Standard taboo recursion: evolve the sub-probability of never having
    touched the origin, harvesting the mass that lands on it each step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    radii = chernoff_radii(law, horizon, trunc_tol / horizon)
    cells = np.prod(2 * radii.astype(float) + 1, axis=1)
    if cells.max() > max_cells or (law.support_size * cells).sum() > max_cell_ops:
        raise ResourceBudgetError(
            f"first-return table to n={horizon} exceeds the work budget",
            feasible_horizon=feasible_horizon(law, horizon, trunc_tol, max_cells, max_cell_ops),
        )
    groups = _prob_groups(law)
    out = np.empty(horizon)
    lo = np.zeros(law.d, dtype=np.int64)
    arr = np.ones((1,) * law.d)
    for n in range(1, horizon + 1):
        new_lo = -radii[n - 1]
        new_shape = tuple(int(2 * r + 1) for r in radii[n - 1])
        arr = _convolve_once(lo, arr, groups, new_lo, new_shape)
        lo = new_lo
        origin = tuple(int(-l) for l in lo)
        out[n - 1] = arr[origin]
        arr[origin] = 0.0
    return out


# ---------------------------------------------------------------------------
# spectral route: collision series and return probabilities via characters


def _axis_tail_log(law: WalkLaw, axis: int, k: int, r: float, squared: bool = False) -> float:
    """log Chernoff bound for P(|X_k . e_a| >= r), both tails.

    With squared=True the bound is for the difference of two independent
    copies (the mgf becomes m(t) m(-t)), without building that law.
    """
    ra = int(law.axis_radius[axis]) * (2 if squared else 1)
    if ra == 0:
        return -math.inf
    ts = np.geomspace(1e-4, 690.0 / ra, 64)
    side = -math.inf
    for sign in (1.0, -1.0):
        logm = law.axis_log_mgf(axis, sign * ts)
        if squared:
            logm = logm + law.axis_log_mgf(axis, -sign * ts)
        side = max(side, float((k * logm - ts * r).min()))
    return side + math.log(2.0)


def _choose_torus_size(
    law: WalkLaw, horizon: int, alias_tol: float, squared: bool, max_m: int = 1 << 15
) -> int:
    """Smallest power-of-two torus with total wraparound below alias_tol.

    The per-step wrap mass is bounded by the walk's own Chernoff tails at
    distance m (we use m/2 for slack); symmetric laws make the bound
    monotone in the step count, so the horizon term dominates.
    """
    m = 16
    log_target = math.log(alias_tol) - math.log(max(horizon, 1)) - math.log(law.d)
    while m <= max_m:
        worst = max(
            _axis_tail_log(law, a, horizon, m / 2, squared=squared) for a in range(law.d)
        )
        if worst <= log_target:
            return m
        m *= 2
    raise ResourceBudgetError(f"torus size beyond {max_m} needed for horizon {horizon}")


def _squared_char_grid(law: WalkLaw, m: int, max_grid_cells: float = 4.0e7):
    """|phi(theta)|^2 on the size-m torus grid.

    Returns (s, weights); the weighted mean of f(s) over the grid equals
    the plain mean over the full torus exactly.  One-dimensional laws go
    through an FFT of the wrapped pmf; higher dimensions accumulate the
    character support vector by support vector, folding axes when the
    law is invariant under single-axis reflections.
    """
    if law.d == 1:
        if m > max_grid_cells:
            raise ResourceBudgetError("character grid too large")
        wrapped = np.zeros(m)
        np.add.at(wrapped, law.vectors[:, 0] % m, law.probs)
        c = np.fft.fft(wrapped)
        return (c.real**2 + c.imag**2), np.ones(m)
    fold = law.is_axis_symmetric
    pts = m // 2 + 1 if fold else m
    if float(pts) ** law.d > max_grid_cells:
        raise ResourceBudgetError("character grid too large")
    axis_theta = 2.0 * np.pi * np.arange(pts) / m
    axis_w = np.ones(pts)
    if fold:
        axis_w[:] = 2.0
        axis_w[0] = 1.0
        axis_w[-1] = 1.0
    shape = (pts,) * law.d
    re = np.zeros(shape)
    im = None if fold else np.zeros(shape)
    for v, p in zip(law.vectors, law.probs):
        phase = np.zeros(shape)
        for a in range(law.d):
            if v[a]:
                ax_shape = [1] * law.d
                ax_shape[a] = pts
                phase = phase + (v[a] * axis_theta).reshape(ax_shape)
        re += p * np.cos(phase)
        if im is not None:
            im += p * np.sin(phase)
    s = re * re if im is None else re * re + im * im
    w = np.ones(shape)
    for a in range(law.d):
        ax_shape = [1] * law.d
        ax_shape[a] = pts
        w = w * axis_w.reshape(ax_shape)
    return s.ravel(), w.ravel()


@dataclass(frozen=True)
class SpectralSeries:
    """Collision-series partial sum evaluated through the walk's characters."""

    horizon: int
    torus_size: int
    partial_sum: float
    alias_bound: float


def collision_series_spectral(
    law: WalkLaw, horizon: int, alias_tol: float = 1e-9, max_grid_cells: float = 4.0e7
) -> SpectralSeries:
    """Sum_{k<=horizon} P(X_k = X'_k) through a torus character sum.

    Exact identity: the mean of |phi|^(2k) over the size-m torus grid is
    the collision probability of the walk wrapped on the torus, which
    exceeds the true one by wraparound mass only.  The reported alias
    bound certifies that excess from the walk's moment generating
    function; it does not rely on the kernel table at all, so this is an
    independent summation route.
    """
    m = _choose_torus_size(law, horizon, alias_tol, squared=True)
    s, w = _squared_char_grid(law, m, max_grid_cells)
    total_w = float(m) ** law.d
    one_minus = 1.0 - s
    near_one = one_minus < 1e-12
    logs = np.log(np.maximum(s, 1e-300))
    geom = np.where(
        near_one,
        float(horizon) * s,
        s * -np.expm1(horizon * logs) / np.where(near_one, 1.0, one_minus),
    )
    partial = float((w * geom).sum() / total_w)
    alias = math.exp(
        min(
            0.0,
            math.log(max(horizon, 1))
            + math.log(law.d)
            + max(_axis_tail_log(law, a, horizon, m / 2, squared=True) for a in range(law.d)),
        )
    )
    return SpectralSeries(horizon, m, partial, alias)


def return_probability_spectral(
    law: WalkLaw, ks, alias_tol: float = 1e-9, max_grid_cells: float = 4.0e7
) -> np.ndarray:
    """p_k(0) for even k via torus character sums (symmetric laws only)."""
    ks = np.asarray(ks, dtype=np.int64)
    if np.any(ks % 2):
        raise ValueError("spectral return probabilities need even step counts")
    if not law.is_symmetric:
        raise DiagnosticError("spectral route needs a symmetric law")
    m = _choose_torus_size(law, int(ks.max()), alias_tol, squared=False)
    s, w = _squared_char_grid(law, m, max_grid_cells)  # phi real, so s = phi^2
    total_w = float(m) ** law.d
    logs = np.log(np.maximum(s, 1e-300))
    zero = s <= 0.0
    out = np.empty(ks.shape[0])
    for i, k in enumerate(ks):
        powed = np.where(zero, 0.0, np.exp((k // 2) * logs))
        out[i] = float((w * powed).sum() / total_w)
    return out


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class FitResult:
    """Power-law exponent from a log-log least-squares fit."""

    value: float
    residual: float
    k_lo: int
    k_hi: int
    n_points: int

    @property
    def low_confidence(self) -> bool:
        return self.residual > 0.2


@dataclass(frozen=True)
class WalkExponents:
    """Tail, kernel-decay and intersection exponents of a walk law."""

    eta: float
    eta_bar: float
    nu: FitResult
    alpha: FitResult

    def consistency_gap(self, d: int) -> float:
        """max(0, violation) of nu <= alpha + 1 <= d / min(2, eta)."""
        upper = d / min(2.0, self.eta)
        return max(0.0, self.nu.value - (self.alpha.value + 1.0), (self.alpha.value + 1.0) - upper)


def _loglog_fit(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    keep = ys > 0.0
    xs, ys = np.log(xs[keep]), np.log(ys[keep])
    if xs.size < 3:
        raise DiagnosticError("fewer than 3 usable points for a log-log fit")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def _drop_top_octave(ks: np.ndarray) -> np.ndarray:
    return ks[ks <= ks.max() / 2] if ks.size > 4 else ks


def estimate_eta(law: WalkLaw) -> tuple[float, float]:
    """Tail exponent of |X_1|; +inf for exactly supported (untruncated) laws."""
    if law.truncation_loss == 0.0:
        return math.inf, 0.0
    norms = np.sqrt((law.vectors.astype(float) ** 2).sum(axis=1))
    order = np.argsort(norms)
    norms, probs = norms[order], law.probs[order]
    tail = law.truncation_loss + probs[::-1].cumsum()[::-1]
    us = np.unique(norms[norms >= 2.0])
    if us.size < 3:
        return math.inf, 0.0
    tails = np.array([tail[np.searchsorted(norms, u)] for u in us])
    slope, _, resid = _loglog_fit(us, tails)
    return -slope, resid


def estimate_exponents(
    law: WalkLaw,
    k_range: tuple[int, int] = (8, 512),
    mc_budget: int = 0,
    seed: int = 0,
    trunc_tol: float = 1e-12,
) -> WalkExponents:
    """Estimate (eta, nu, alpha) with fit diagnostics.

    nu comes from the decay of max_x p_k(x): exact kernels when the table
    is affordable, otherwise even-step return probabilities through the
    spectral route (symmetric laws).  alpha comes from the tail of the
    first meeting time of two copies, by taboo DP on the difference walk
    when affordable and by Monte Carlo otherwise.
    """
    k_lo, k_hi = int(k_range[0]), int(k_range[1])
    if k_hi <= k_lo:
        raise ValueError("empty k range")
    eta, _eta_resid = estimate_eta(law)
    eta_bar = min(eta, 1.0)

    ks = np.unique(np.geomspace(k_lo, k_hi, 24).astype(np.int64))
    ks = _drop_top_octave(ks)
    nu_ks, sup = _sup_norm_sequence(law, ks, trunc_tol)
    slope, _, resid = _loglog_fit(nu_ks.astype(float), sup)
    nu = FitResult(-slope, resid, int(nu_ks.min()), int(nu_ks.max()), int(nu_ks.size))

    alpha = estimate_alpha(law, k_hi, mc_budget=mc_budget, seed=seed, trunc_tol=trunc_tol)
    return WalkExponents(eta, eta_bar, nu, alpha)


def _sup_norm_sequence(law: WalkLaw, ks: np.ndarray, trunc_tol: float):
    """max_x p_k(x) along ks, via exact kernels or the spectral route."""
    k_top = int(ks.max())
    if feasible_horizon(law, k_top, trunc_tol) >= k_top:
        table = iterate_kernel(law, k_top, trunc_tol)
        return ks, np.array([sup_norm(table, int(k)) for k in ks])
    if law.is_symmetric:
        # for symmetric laws the even-step maximum sits at the origin
        # (Cauchy-Schwarz on p_{2j} = p_j * p_j), so p_{2j}(0) is the norm
        even = np.unique((ks // 2) * 2)
        even = even[even >= 2]
        try:
            return even, return_probability_spectral(law, even)
        except ResourceBudgetError:
            pass
    reachable = feasible_horizon(law, k_top, trunc_tol)
    shrunk = ks[ks <= reachable]
    if shrunk.size < 3:
        raise DiagnosticError("kernel decay not computable inside the work budget")
    table = iterate_kernel(law, int(shrunk.max()), trunc_tol)
    return shrunk, np.array([sup_norm(table, int(k)) for k in shrunk])


def estimate_alpha(
    law: WalkLaw,
    horizon: int,
    mc_budget: int = 0,
    seed: int = 0,
    trunc_tol: float = 1e-12,
) -> FitResult:
    """Exponent of the finite-part tail of the first meeting time.

    Fits P(n < T <= 2n) against n, which has the same power-law exponent
    as the tail itself but cancels the defect P(T = inf) exactly, so the
    transient case needs no defect estimate.
    """
    diff = difference_walk(law)
    if mc_budget == 0 and feasible_horizon(diff, horizon, trunc_tol) >= horizon:
        first = first_return_probabilities(diff, horizon, trunc_tol)
        survival = 1.0 - np.cumsum(first)
    else:
        survival = _mc_first_return_survival(diff, horizon, max(mc_budget, 20_000), seed)
    ns = np.unique(np.geomspace(2, horizon // 2, 20).astype(np.int64))
    vals = survival[ns - 1] - survival[2 * ns - 1]
    slope, _, resid = _loglog_fit(ns.astype(float), vals)
    return FitResult(-slope, resid, int(ns.min()), int(ns.max()), int(ns.size))


def _mc_first_return_survival(diff: WalkLaw, horizon: int, budget: int, seed: int) -> np.ndarray:
    from .rng import stream

    gen = stream(seed, "alpha-mc")
    alive = np.zeros(horizon)
    block = 4096
    done = 0
    while done < budget:
        b = min(block, budget - done)
        steps = gen.choice(diff.support_size, size=(b, horizon), p=diff.probs / diff.probs.sum())
        pos = diff.vectors[steps].cumsum(axis=1)
        hit_zero = np.all(pos == 0, axis=2)
        first_hit = np.where(hit_zero.any(axis=1), hit_zero.argmax(axis=1), horizon)
        alive += (np.arange(horizon)[None, :] < first_hit[:, None]).sum(axis=0)
        done += b
    return alive / budget
