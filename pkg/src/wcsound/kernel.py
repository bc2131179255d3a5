"""Transition kernel of the Kolmogorov process dω = ν dt, dν = √(2b) dW.

The kernel ``k(ω, ν ‖ ω', ν')`` is the density of reaching ``(ω, ν)``
after a time ``delta`` when starting from ``(ω', ν')``. As a function of
``(ω', ν')`` it is a Gaussian centred at ``(ω - delta*ν, ν)``; both
marginal integrals equal one.

Three evaluations are provided and cross-checked by the tests:

* :func:`kernel_value` - the closed form ``peak * exp(-g / (b δ³))``;
* :func:`kernel_value_matrix_form` - the same Gaussian assembled from the
  drift matrix exponential and the controllability Gramian;
* :func:`monte_carlo_density` - an Euler-Maruyama histogram of the
  process itself.

:func:`build_table` discretises the kernel on a (frequency, chirpiness)
lattice as sparse rows restricted to the superlevel set
``{k >= epsilon}`` described by :func:`threshold_support`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import sparse
from scipy.special import ndtr

__all__ = [
    "KernelParams",
    "kernel_value",
    "kernel_value_matrix_form",
    "drift_exponential",
    "diffusion_covariance",
    "SupportBand",
    "threshold_support",
    "KernelTable",
    "build_table",
    "build_table_naive",
    "Histogram2D",
    "monte_carlo_density",
    "cell_masses",
]

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class KernelParams:
    """Delay ``delta`` (s), diffusion strength ``b`` and threshold ``epsilon``."""

    delta: float
    b: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")

    @property
    def peak(self) -> float:
        """Maximum of the kernel, √3 / (2π b δ²)."""
        return _SQRT3 / (2 * math.pi * self.b * self.delta**2)

    def with_relative_epsilon(self, fraction: float) -> "KernelParams":
        return KernelParams(self.delta, self.b, fraction * self.peak)


# Error-free transformations. Near the kernel centre the deviation from the
# transported point is many orders of magnitude below |ω| and |δν|, so it is
# formed in doubled precision; otherwise a single rounding of δν would set
# the relative accuracy of the kernel.
_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _centre_offset(d_omega_hi, d_omega_lo, delta, nu, nu_p):
    # d_omega - delta * (nu + nu_p) / 2 with d_omega = hi + lo
    s_hi, s_lo = _two_sum(nu, nu_p)
    p_hi, p_lo = _two_prod(delta, 0.5 * s_hi)
    p_lo = p_lo + delta * 0.5 * s_lo
    return ((d_omega_hi - p_hi) + d_omega_lo) - p_lo


def _g(delta, omega, nu, omega_p, nu_p):
    # 3 d² - 3 δ d (ν + ν') + δ² (ν² + ν ν' + ν'²) with d = ω - ω', written as
    # a sum of squares to avoid cancelling large terms near the kernel centre
    d_hi, d_lo = _two_sum(omega, np.negative(omega_p))
    u = _centre_offset(d_hi, d_lo, delta, nu, nu_p)
    return 3 * u**2 + 0.25 * delta**2 * np.subtract(nu, nu_p) ** 2


def kernel_value(params: KernelParams, omega, nu, omega_p, nu_p):
    """Closed-form kernel ``k(omega, nu ‖ omega_p, nu_p)``; broadcasts over arrays."""
    d, b = params.delta, params.b
    args = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (omega, nu, omega_p, nu_p)))
    g = _g(d, *args)
    return params.peak * np.exp(-g / (b * d**3))


def drift_exponential(delta: float) -> np.ndarray:
    """exp(δA) for A = [[0, -1], [0, 0]]."""
    return np.array([[1.0, -delta], [0.0, 1.0]])


def diffusion_covariance(params: KernelParams) -> np.ndarray:
    """D_δ = 2b [[δ³/3, -δ²/2], [-δ²/2, δ]]."""
    d = params.delta
    return 2 * params.b * np.array([[d**3 / 3, -(d**2) / 2], [-(d**2) / 2, d]])


def _residual(M, x, y):
    """``y - M x`` for a 2×2 ``M`` with every product and sum compensated."""
    out = []
    for i in range(2):
        acc, err = y[..., i], np.zeros_like(y[..., i])
        for j in range(2):
            p, pe = _two_prod(-M[i, j], x[..., j])
            acc, se = _two_sum(acc, p)
            err = err + pe + se
        out.append(acc + err)
    return np.stack(out, axis=-1)


def kernel_value_matrix_form(params: KernelParams, x, x_p):
    """Kernel as ``exp(-½ zᵀ D⁻¹ z) / (2π √det D)`` with ``z = x_p - exp(δA) x``.

    ``x`` and ``x_p`` are ``(..., 2)`` arrays of ``(omega, nu)`` pairs. The
    2×2 inverse is formed from the adjugate, independently of the closed form.
    """
    x, x_p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(x_p, dtype=float))
    E = drift_exponential(params.delta)
    D = diffusion_covariance(params)
    det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
    inv = np.array([[D[1, 1], -D[0, 1]], [-D[1, 0], D[0, 0]]]) / det
    z = _residual(E, x, x_p)
    quad = np.einsum("...i,ij,...j->...", z, inv, z)
    return np.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(det))


@dataclass(frozen=True)
class SupportBand:
    """Superlevel set ``{(ω', ν') : k(ω, ν ‖ ω', ν') >= epsilon}`` of one node.

    ``c_eps < 0`` means the set is empty.
    """

    omega: float
    nu: float
    delta: float
    c_eps: float

    @property
    def empty(self) -> bool:
        return self.c_eps < 0

    @property
    def nu_radius(self) -> float:
        return math.sqrt(self.c_eps) if self.c_eps >= 0 else float("nan")

    def omega_center(self, nu_p):
        return self.omega - self.delta * (self.nu + np.asarray(nu_p)) / 2

    def omega_halfwidth(self, nu_p):
        rest = self.c_eps - (self.nu - np.asarray(nu_p)) ** 2
        return self.delta / (2 * _SQRT3) * np.sqrt(np.maximum(rest, 0.0))

    def contains(self, omega_p, nu_p):
        omega_p = np.asarray(omega_p, dtype=float)
        nu_p = np.asarray(nu_p, dtype=float)
        if self.empty:
            return np.zeros(np.broadcast(omega_p, nu_p).shape, dtype=bool)
        dnu2 = (self.nu - nu_p) ** 2
        first = dnu2 <= self.c_eps
        lhs = np.abs(omega_p - self.omega + self.delta * (self.nu + nu_p) / 2)
        second = lhs <= self.delta / (2 * _SQRT3) * np.sqrt(np.maximum(self.c_eps - dnu2, 0.0))
        return first & second


def threshold_support(params: KernelParams, omega: float, nu: float) -> SupportBand:
    """Band description of ``{k >= epsilon}`` around ``(omega, nu)``.

    ``C_eps = -4 b δ log(2π b δ² ε / √3)``; ``epsilon = 0`` gives an
    unbounded band (``C_eps = inf``).
    """
    if params.epsilon == 0:
        c = math.inf
    else:
        c = -4 * params.b * params.delta * math.log(params.epsilon / params.peak)
    return SupportBand(float(omega), float(nu), params.delta, c)


# ---------------------------------------------------------------------------
# sparse tables


@dataclass(frozen=True)
class KernelTable:
    """Sparse kernel rows on a circular frequency lattice × chirpiness grid.

    Nodes are numbered ``k * n_nu + j`` for frequency bin ``k`` (0..n_omega-1,
    periodic) and chirpiness index ``j``. Rows exist for the bins in
    ``row_bins``; columns always address the full lattice. ``matrix[r, c]``
    is the weight of node ``c`` in the update of row node ``r``.
    """

    matrix: sparse.csr_matrix
    row_bins: np.ndarray
    n_omega: int
    omega_step: float
    nu_values: np.ndarray
    weighting: str

    @property
    def n_nu(self) -> int:
        return self.nu_values.size

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def row_node(self, r: int) -> int:
        return int(self.row_bins[r // self.n_nu]) * self.n_nu + r % self.n_nu

    def rows(self):
        """Yield ``(node, columns, weights)`` for every row."""
        m = self.matrix
        for r in range(m.shape[0]):
            sl = slice(m.indptr[r], m.indptr[r + 1])
            yield self.row_node(r), m.indices[sl], m.data[sl]

    def row_mass(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def save(self, path) -> None:
        """Row count, then per row: node index, entry count, (index, weight) pairs.

        Every field is a little-endian float64.
        """
        parts = [struct.pack("<d", float(self.n_rows))]
        for node, cols, w in self.rows():
            parts.append(struct.pack("<dd", float(node), float(cols.size)))
            pairs = np.empty((cols.size, 2), dtype="<f8")
            pairs[:, 0] = cols
            pairs[:, 1] = w
            parts.append(pairs.tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path, n_omega, omega_step, nu_values, weighting="unknown") -> "KernelTable":
        buf = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
        n_nu = len(nu_values)
        n_rows = int(buf[0])
        pos = 1
        nodes, indptr, cols, data = [], [0], [], []
        for _ in range(n_rows):
            node, count = int(buf[pos]), int(buf[pos + 1])
            pairs = buf[pos + 2 : pos + 2 + 2 * count].reshape(count, 2)
            nodes.append(node)
            cols.append(pairs[:, 0].astype(np.int64))
            data.append(pairs[:, 1].copy())
            indptr.append(indptr[-1] + count)
            pos += 2 + 2 * count
        nodes = np.array(nodes, dtype=np.int64)
        row_bins = np.unique(nodes // n_nu)
        m = sparse.csr_matrix(
            (np.concatenate(data) if data else np.zeros(0),
             np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
             np.array(indptr)),
            shape=(n_rows, n_omega * n_nu),
        )
        return cls(m, row_bins, n_omega, omega_step, np.asarray(nu_values, dtype=float), weighting)


def _check_nu_grid(nu_values):
    nu = np.asarray(nu_values, dtype=float)
    if nu.ndim != 1 or nu.size == 0:
        raise ValueError("chirpiness grid must be a non-empty 1-D array")
    if nu.size > 1 and not np.all(np.diff(nu) > 0):
        raise ValueError("chirpiness grid must be strictly increasing")
    return nu


def _nu_step(nu):
    return float(nu[1] - nu[0]) if nu.size > 1 else 1.0


def _midpoint_template(params, omega_step, nu, j):
    """Entries (dk, j', weight) of the row of node (0, nu[j]), weight = k · cell area."""
    band = threshold_support(params, 0.0, nu[j])
    if band.empty:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    area = omega_step * _nu_step(nu)
    dks, jps, ws = [], [], []
    for jp in np.flatnonzero((nu - nu[j]) ** 2 <= band.c_eps):
        centre = float(band.omega_center(nu[jp]))
        half = float(band.omega_halfwidth(nu[jp]))
        dk = np.arange(math.floor((centre - half) / omega_step) - 1, math.ceil((centre + half) / omega_step) + 2)
        keep = band.contains(dk * omega_step, nu[jp])
        dk = dk[keep]
        w = _midpoint_weight(params, dk * omega_step, nu[j], nu[jp]) * area
        dks.append(dk)
        jps.append(np.full(dk.size, jp))
        ws.append(w)
    if not dks:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return np.concatenate(dks), np.concatenate(jps), np.concatenate(ws)


def _midpoint_weight(params, d_omega_p, nu, nu_p):
    # d_omega_p = omega' - omega
    return kernel_value(params, 0.0, nu, d_omega_p, nu_p)


def _ramp_mean(z):
    # E[max(X, 0)] / s for X ~ N(z s, s²)
    return np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) + z * ndtr(z)


def _hat_expectation(mean, s, nodes, h):
    """E[Λ((X - node)/h)] for X ~ N(mean, s²), Λ the unit hat function."""
    if s <= 1e-9 * h:
        return np.maximum(1.0 - np.abs(mean - nodes) / h, 0.0)
    t = (mean - nodes) / s
    r = h / s
    val = (s / h) * (_ramp_mean(t + r) - 2 * _ramp_mean(t) + _ramp_mean(t - r))
    return np.maximum(val, 0.0)


_GH_ORDER = 24


def _hat_template(params, omega_step, nu, j):
    """Entries (dk, j', weight) with weight = ∫ k(0, ν_j ‖ x') φ(x') dx'.

    φ is the bilinear hat basis function of lattice node (dk, j'). The hats
    sum to one, so an interior row carries unit mass and reproduces the
    drift of the kernel mean exactly, however narrow the kernel is
    compared with the lattice spacing.
    """
    d, b = params.delta, params.b
    h = omega_step
    dnu = _nu_step(nu)
    sd_nu = math.sqrt(2 * b * d)
    sd_omega = math.sqrt(b * d**3 / 6)  # conditional on ν'
    z, wq = hermegauss(_GH_ORDER)
    wq = wq / math.sqrt(2 * math.pi)
    band = threshold_support(params, 0.0, nu[j])
    if band.empty:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)

    acc: dict[tuple[int, int], float] = {}
    reach = int(math.ceil(8 * sd_omega / h)) + 2
    for zq, w in zip(z, wq):
        u = nu[j] + sd_nu * zq
        if nu.size > 1:
            pos = (u - nu[0]) / dnu
            jl = math.floor(pos)
            frac = pos - jl
            split = ((jl, 1.0 - frac), (jl + 1, frac))
        else:
            split = ((0, 1.0),)
        mean = -d * (nu[j] + u) / 2
        k0 = math.floor(mean / h)
        dk = np.arange(k0 - reach, k0 + reach + 2)
        hw = _hat_expectation(mean, sd_omega, dk * h, h)
        for jp, fnu in split:
            if jp < 0 or jp >= nu.size or fnu <= 0:
                continue
            for kk, v in zip(dk, hw):
                if v > 0:
                    key = (int(kk), jp)
                    acc[key] = acc.get(key, 0.0) + w * fnu * v
    if not acc:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    keys = np.array(list(acc.keys()))
    vals = np.array(list(acc.values()))
    if math.isfinite(band.c_eps):
        keep = _hat_touches_band(band, keys[:, 0] * h, nu[keys[:, 1]], h, dnu)
        keys, vals = keys[keep], vals[keep]
    return keys[:, 0], keys[:, 1], vals


def _hat_touches_band(band, omega_p, nu_p, h, dnu):
    """Whether the support box of each hat intersects the band (conservative)."""
    r = band.nu_radius
    lo = np.maximum(nu_p - dnu, band.nu - r)
    hi = np.minimum(nu_p + dnu, band.nu + r)
    ok = lo <= hi
    c1, c2 = band.omega_center(lo), band.omega_center(hi)
    hw = band.delta / (2 * _SQRT3) * r
    wlo = np.minimum(c1, c2) - hw
    whi = np.maximum(c1, c2) + hw
    return ok & (omega_p + h >= wlo) & (omega_p - h <= whi)


_TEMPLATES = {"midpoint": _midpoint_template, "hat": _hat_template}


def _row_bins(rows, n_omega):
    if isinstance(rows, str):
        if rows == "full":
            return np.arange(n_omega)
        if rows == "half":
            return np.arange(n_omega // 2 + 1)
        raise ValueError(f"unknown row selection {rows!r}")
    return np.asarray(rows, dtype=np.int64)


def build_table(
    params: KernelParams,
    n_omega: int,
    omega_step: float,
    nu_values,
    rows="full",
    weighting: str = "midpoint",
) -> KernelTable:
    """Sparse kernel table on a periodic frequency lattice.

    Parameters
    ----------
    params : KernelParams
    n_omega, omega_step : int, float
        Number of frequency bins on the circular axis and their spacing.
    nu_values : array_like
        Uniform, increasing chirpiness grid.
    rows : {"full", "half"} or array of bins
        Frequency bins that get a row; "half" is bins ``0..n_omega//2``.
    weighting : {"midpoint", "hat"}
        ``"midpoint"`` stores ``k(ξ‖ξ') Δω Δν`` at the nodes inside the
        superlevel band. ``"hat"`` stores the kernel mass seen by the
        linear-interpolation basis function of each node, which stays
        mass-conserving when the kernel is narrower than a cell.

    The kernel only depends on ``ω - ω'``, so one template per chirpiness
    index is computed and shifted to every frequency bin.
    """
    nu = _check_nu_grid(nu_values)
    if weighting not in _TEMPLATES:
        raise ValueError(f"unknown weighting {weighting!r}")
    if weighting == "midpoint" and params.epsilon == 0:
        raise ValueError("midpoint weighting needs epsilon > 0 to bound the stencil")
    template = _TEMPLATES[weighting]
    n_nu = nu.size
    bins = _row_bins(rows, n_omega)
    row_ids, col_ids, data = [], [], []
    for j in range(n_nu):
        dk, jp, w = template(params, omega_step, nu, j)
        if dk.size == 0:
            continue
        r = (np.arange(bins.size) * n_nu + j)[:, None]
        cols = ((bins[:, None] + dk[None, :]) % n_omega) * n_nu + jp[None, :]
        row_ids.append(np.broadcast_to(r, cols.shape).ravel())
        col_ids.append(cols.ravel())
        data.append(np.broadcast_to(w, cols.shape).ravel())
    shape = (bins.size * n_nu, n_omega * n_nu)
    if data:
        m = sparse.coo_matrix((np.concatenate(data), (np.concatenate(row_ids), np.concatenate(col_ids))), shape=shape)
    else:
        m = sparse.coo_matrix(shape)
    m = m.tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return KernelTable(m, bins, n_omega, omega_step, nu, weighting)


def build_table_naive(params, n_omega, omega_step, nu_values, rows="full") -> KernelTable:
    """Midpoint table built row by row over every lattice node (reference for tests)."""
    nu = _check_nu_grid(nu_values)
    n_nu = nu.size
    bins = _row_bins(rows, n_omega)
    area = omega_step * _nu_step(nu)
    k_all = np.repeat(np.arange(n_omega), n_nu)
    j_all = np.tile(np.arange(n_nu), n_omega)
    dense = np.zeros((bins.size * n_nu, n_omega * n_nu))
    for r, k in enumerate(bins):
        for j in range(n_nu):
            dk = (k_all - k + n_omega // 2) % n_omega - n_omega // 2
            band = threshold_support(params, 0.0, nu[j])
            inside = band.contains(dk * omega_step, nu[j_all])
            w = _midpoint_weight(params, dk[inside] * omega_step, nu[j], nu[j_all[inside]]) * area
            dense[r * n_nu + j, np.flatnonzero(inside)] = w
    m = sparse.csr_matrix(dense)
    m.sort_indices()
    return KernelTable(m, bins, n_omega, omega_step, nu, "midpoint")


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


@dataclass(frozen=True)
class Histogram2D:
    omega_edges: np.ndarray
    nu_edges: np.ndarray
    counts: np.ndarray
    n_paths: int

    @property
    def mass(self) -> np.ndarray:
        return self.counts / self.n_paths

    @property
    def density(self) -> np.ndarray:
        area = np.diff(self.omega_edges)[:, None] * np.diff(self.nu_edges)[None, :]
        return self.mass / area


def _default_edges(params, start, bins, width):
    d, b = params.delta, params.b
    sd_w = math.sqrt(2 * b * d**3 / 3)
    sd_n = math.sqrt(2 * b * d)
    cw = start[0] + d * start[1]
    return (
        np.linspace(cw - width * sd_w, cw + width * sd_w, bins + 1),
        np.linspace(start[1] - width * sd_n, start[1] + width * sd_n, bins + 1),
    )


def monte_carlo_density(
    params: KernelParams,
    start,
    n_paths: int = 100_000,
    n_steps: int = 200,
    bins: int = 20,
    width: float = 4.0,
    seed=0,
    edges=None,
) -> Histogram2D:
    """Euler-Maruyama endpoints of dω = ν dt, dν = √(2b) dW over [0, δ].

    The histogram covers ``width`` standard deviations of each endpoint
    coordinate around the drift-transported start unless ``edges`` is given.
    """
    rng = np.random.default_rng(seed)
    dt = params.delta / n_steps
    omega = np.full(n_paths, float(start[0]))
    nu = np.full(n_paths, float(start[1]))
    scale = math.sqrt(2 * params.b * dt)
    for _ in range(n_steps):
        omega += nu * dt
        nu += scale * rng.standard_normal(n_paths)
    if edges is None:
        edges = _default_edges(params, start, bins, width)
    counts, ew, en = np.histogram2d(omega, nu, bins=edges)
    return Histogram2D(ew, en, counts, n_paths)


def cell_masses(params: KernelParams, start, omega_edges, nu_edges, order: int = 8) -> np.ndarray:
    """∫∫ over each histogram cell of ``k(ω, ν ‖ start)`` by tensor Gauss-Legendre."""
    x, w = leggauss(order)
    ow, on = np.asarray(omega_edges), np.asarray(nu_edges)
    cw, hw = (ow[1:] + ow[:-1]) / 2, np.diff(ow) / 2
    cn, hn = (on[1:] + on[:-1]) / 2, np.diff(on) / 2
    om = cw[:, None] + hw[:, None] * x[None, :]
    nm = cn[:, None] + hn[:, None] * x[None, :]
    vals = kernel_value(params, om[:, None, :, None], nm[None, :, None, :], start[0], start[1])
    return np.einsum("abij,i,j->ab", vals, w, w) * hw[:, None] * hn[None, :]
