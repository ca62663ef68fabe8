"""Assemble decision models from measurement scenarios.

The joint Gaussian over all epochs, signals and satellites is built in information
form: measurement rows carry the geometry/iono/clock/wind-up coefficients, the
error covariance combines a temporally constant component with a stationary AR(1)
component, and Gaussian priors add information on the nuisance blocks. Flat priors
add nothing; marginalizing the nuisances is a Schur complement, and any flatness
that survives into the ambiguity block (a common integer increment absorbed by a
clock or wind-up shift) is quotiented out exactly by an integer change of basis,
which is the finite-interval-limit realization of the flat priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular, toeplitz

from .._intmat import complete_basis, int_inverse, sublattice_basis
from ..decoder import AmbiguityModel, Separability
from ..errors import DegenerateModel, DimensionMismatch, NonStationary, ValidationError
from ..lattice import SpdForm
from .scenario import Scenario
from .signals import (
    BASE_SIGNALS,
    IONO_SCALE,
    WAVELENGTH_M,
    effective_wavelength,
    measurement_set,
)

EIG_GUARD = 1e-10
NULL_TOL = 1e-9


def ar1_series_covariance(coef: float, innovation_var: float, n: int) -> SpdForm:
    """Stationary AR(1) covariance over n epochs: sigma_stat^2 coef^|i-j|."""
    if not (-1.0 < coef < 1.0):
        raise NonStationary(f"AR(1) coefficient {coef} is not stationary")
    if innovation_var <= 0 or n < 1:
        raise ValidationError("need positive innovation variance and n >= 1")
    stat = innovation_var / (1.0 - coef * coef)
    return SpdForm(stat * toeplitz(coef ** np.arange(n)))


def _ar1_unit(coef: float, n: int) -> np.ndarray:
    return toeplitz(coef ** np.arange(n, dtype=float))


def _bias_basis(m: int) -> np.ndarray:
    """Orthonormal basis of the sum-zero subspace (m x (m-1) Helmert columns)."""
    b = np.zeros((m, m - 1))
    for j in range(1, m):
        b[:j, j - 1] = 1.0
        b[j, j - 1] = -float(j)
        b[:, j - 1] /= math.sqrt(j * (j + 1.0))
    return b


@dataclass(eq=False)
class Layout:
    """Column layout: ambiguities first, then the nuisance blocks."""

    p_raw: int
    n_sat: int
    n_epochs: int
    n_phase: int
    n_code: int
    blocks: dict  # name -> slice into theta (offsets after the N block)

    @property
    def dim_theta(self) -> int:
        return max((sl.stop for sl in self.blocks.values()), default=0)

    def theta_slice(self, name: str) -> slice:
        return self.blocks[name]


@dataclass(eq=False)
class Assembly:
    """Design matrix, noise blocks, and the joint information matrix."""

    scenario: Scenario
    layout: Layout
    h: np.ndarray                  # (rows, p_raw + dim_theta)
    noise_blocks: list             # (slice, cov ndarray)
    j: np.ndarray                  # joint information (priors included)
    freq_indicators: np.ndarray    # (n_phase, p_raw) common-increment directions

    def information_rhs(self, y: np.ndarray) -> np.ndarray:
        """b = H^T Sigma^-1 y for a measurement vector."""
        b = np.zeros(self.h.shape[1])
        for sl, cov in self.noise_blocks:
            cf = cho_factor(cov)
            b += self.h[sl].T @ cho_solve(cf, y[sl])
        return b

    def sample_noise(self, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros(self.h.shape[0])
        for sl, cov in self.noise_blocks:
            low = np.linalg.cholesky(cov)
            out[sl] = low @ rng.standard_normal(cov.shape[0])
        return out


def _assemble(s: Scenario, flat_prior_variance: float | None = None) -> Assembly:
    ms = measurement_set(s.measurement_set)
    combos = ms.phase_combos()
    k_sat, n_ep = s.n_satellites, s.n_epochs
    nphi, nrho = ms.n_phase, len(ms.code_types)
    p_raw = nphi * k_sat
    lam1 = WAVELENGTH_M["L1"]
    lam_eff = [effective_wavelength(u) for u in combos]
    lam_base = np.array([WAVELENGTH_M[q] for q in BASE_SIGNALS])
    psi_coef = combos.sum(axis=1).astype(float)
    has_psi = (not s.windup_informed) and bool(np.any(psi_coef != 0))
    m_tau_pre = nphi + nrho
    joint_bias = s.bias_prior_override is not None and \
        s.bias_prior_override.shape[0] != m_tau_pre - 1
    has_iono = s.sigma_delta_iono > 0 or s.iono_prior_override is not None or joint_bias
    static = s.coordinates_prior == "static"

    blocks = {}
    off = 0
    if has_iono:
        blocks["iono"] = slice(off, off + k_sat)
        off += k_sat
    ncoord = 3 if static else 3 * n_ep
    blocks["coord"] = slice(off, off + ncoord)
    off += ncoord
    blocks["clock"] = slice(off, off + n_ep)
    off += n_ep
    m_tau = nphi + nrho
    blocks["bias"] = slice(off, off + m_tau - 1)
    off += m_tau - 1
    if has_psi:
        blocks["psi"] = slice(off, off + 1)
        off += 1
    layout = Layout(p_raw, k_sat, n_ep, nphi, nrho, blocks)
    d = p_raw + off

    bias_b = _bias_basis(m_tau)
    rows_per_sat_phase = n_ep * nphi
    rows_per_sat_code = n_ep * nrho
    n_rows = k_sat * (rows_per_sat_phase + rows_per_sat_code)
    h = np.zeros((n_rows, d))

    def th(name):
        sl = blocks[name]
        return slice(p_raw + sl.start, p_raw + sl.stop)

    row = 0
    phase_slices = []
    for k in range(k_sat):
        start = row
        for i in range(n_ep):
            for t in range(nphi):
                r = h[row]
                r[t * k_sat + k] = 1.0
                if has_iono:
                    r[th("iono").start + k] = -float(combos[t] @ lam_base) / lam1**2
                e = s.satellites[i, k]
                cs = th("coord")
                if static:
                    h[row, cs.start:cs.start + 3] = e / lam_eff[t]
                else:
                    h[row, cs.start + 3 * i:cs.start + 3 * i + 3] = e / lam_eff[t]
                r[th("clock").start + i] = 1.0 / lam_eff[t]
                bs = th("bias")
                h[row, bs] = bias_b[t] / lam_eff[t]
                if has_psi:
                    r[th("psi").start] = psi_coef[t]
                row += 1
        phase_slices.append(slice(start, row))
    code_slices = []
    for k in range(k_sat):
        start = row
        for i in range(n_ep):
            for jdx, q in enumerate(ms.code_types):
                r = h[row]
                if has_iono:
                    r[th("iono").start + k] = IONO_SCALE[q]
                e = s.satellites[i, k]
                cs = th("coord")
                if static:
                    h[row, cs.start:cs.start + 3] = e
                else:
                    h[row, cs.start + 3 * i:cs.start + 3 * i + 3] = e
                r[th("clock").start + i] = 1.0
                h[row, th("bias")] = bias_b[nphi + jdx]
                row += 1
        code_slices.append(slice(start, row))

    sv, sc = s.carrier_noise
    phase_cv = sv * sv * (combos @ combos.T).astype(float)
    phase_cc = sc * sc * (combos @ combos.T).astype(float)
    phase_cov = np.kron(_ar1_unit(s.ar1_phase, n_ep), phase_cv) \
        + np.kron(np.ones((n_ep, n_ep)), phase_cc)
    rv, rc = s.code_noise
    code_cov = rv * rv * np.kron(_ar1_unit(s.ar1_code, n_ep), np.eye(nrho)) \
        + rc * rc * np.kron(np.ones((n_ep, n_ep)), np.eye(nrho))

    noise_blocks = [(sl, phase_cov) for sl in phase_slices]
    noise_blocks += [(sl, code_cov) for sl in code_slices]

    j = np.zeros((d, d))
    cf_phase = cho_factor(phase_cov)
    cf_code = cho_factor(code_cov)
    for sl in phase_slices:
        j += self_outer(h[sl], cf_phase)
    for sl in code_slices:
        j += self_outer(h[sl], cf_code)

    # priors
    if has_iono:
        isl = th("iono")
        if joint_bias:
            if s.bias_prior_override.shape[0] != k_sat + m_tau - 1:
                raise ValidationError(
                    "joint (iono, bias) prior has the wrong size "
                    f"{s.bias_prior_override.shape}"
                )
            idx = np.r_[np.arange(isl.start, isl.stop),
                        np.arange(th("bias").start, th("bias").stop)]
            j[np.ix_(idx, idx)] += s.bias_prior_override
        elif s.iono_prior_override is not None:
            j[isl, isl] += s.iono_prior_override
        else:
            j[isl, isl] += np.eye(k_sat) / s.sigma_delta_iono**2
    if s.bias_prior_override is not None and not joint_bias:
        bsl = th("bias")
        j[bsl, bsl] += s.bias_prior_override
    if flat_prior_variance is not None:
        for name in ("coord", "clock", "bias", "psi"):
            if name in blocks:
                sl = th(name)
                j[sl, sl] += np.eye(sl.stop - sl.start) / flat_prior_variance

    freq_ind = np.zeros((nphi, p_raw))
    for t in range(nphi):
        freq_ind[t, t * k_sat:(t + 1) * k_sat] = 1.0
    return Assembly(scenario=s, layout=layout, h=h, noise_blocks=noise_blocks,
                    j=j, freq_indicators=freq_ind)


def self_outer(hb: np.ndarray, cf) -> np.ndarray:
    """H_b^T Sigma_b^-1 H_b via a Cholesky solve."""
    return hb.T @ cho_solve(cf, hb)


def _theta_inverse(j_tt: np.ndarray, j_nt: np.ndarray):
    """Guarded inverse: drops null directions only when nothing couples to them."""
    w, v = np.linalg.eigh(j_tt)
    wmax = float(w[-1]) if w.size else 0.0
    keep = w > EIG_GUARD * max(wmax, 1.0)
    if not np.all(keep):
        coupling = np.abs(j_nt @ v[:, ~keep])
        scale = float(np.max(np.abs(j_nt))) or 1.0
        if np.max(coupling) > 1e-6 * scale:
            raise DegenerateModel(
                "nuisance information is singular in a direction coupled to the "
                "ambiguities; the scenario does not determine the model"
            )
    vk = v[:, keep]
    return vk, w[keep]


def marginal_ambiguity_information(assembly: Assembly) -> np.ndarray:
    """Schur complement of the joint information onto the ambiguity block."""
    p = assembly.layout.p_raw
    j = assembly.j
    j_nn = j[:p, :p]
    j_nt = j[:p, p:]
    j_tt = j[p:, p:]
    vk, wk = _theta_inverse(j_tt, j_nt)
    half = j_nt @ vk
    return j_nn - (half / wk) @ half.T


@dataclass(eq=False)
class ModelBuild:
    """A built model plus the exact maps between raw and model coordinates."""

    scenario: Scenario
    assembly: Assembly
    model: AmbiguityModel
    raw_information: np.ndarray
    w: np.ndarray            # (p_raw, p_model) integer complement basis
    float_map: np.ndarray    # (p_model, p_raw): raw float solution -> model coords
    null_dirs: np.ndarray    # (p_raw, d0) integer quotiented directions


def _integer_null_dirs(m_n: np.ndarray, freq_ind: np.ndarray):
    """Integer directions of the flat subspace, verified to sit inside the
    common-increment span."""
    p = m_n.shape[0]
    w, v = np.linalg.eigh(m_n)
    scale = float(np.max(np.abs(w))) or 1.0
    null_mask = w < NULL_TOL * scale
    d0 = int(np.count_nonzero(null_mask))
    if d0 == 0:
        return np.zeros((p, 0), dtype=np.int64)
    q = v[:, null_mask]
    vt = freq_ind.T  # p x p0
    proj = vt @ np.linalg.solve(vt.T @ vt, vt.T @ q)
    if float(np.max(np.abs(q - proj))) > 1e-6:
        raise DegenerateModel(
            "flat ambiguity directions do not lie in the common-increment span"
        )
    p0 = vt.shape[1]
    if d0 == p0:
        return vt.astype(np.int64)
    # solve for integer combinations s with freq_ind^T s in the null space
    resid = vt - q @ (q.T @ vt)
    _, sv, vh = np.linalg.svd(resid, full_matrices=False)
    small = sv < 1e-8 * max(float(sv[0]), 1.0)
    if int(np.count_nonzero(small)) != d0:
        raise DegenerateModel("rank of the flat subspace is inconsistent")
    dirs = []
    for row in vh[small]:
        s = row / np.max(np.abs(row))
        s_int = np.rint(s).astype(np.int64)
        if np.max(np.abs(s - s_int)) > 1e-6 or not np.any(s_int):
            raise DegenerateModel("flat direction is not an integer combination")
        g = np.gcd.reduce(np.abs(s_int[s_int != 0]))
        dirs.append(s_int // g)
    u = (vt.astype(np.int64) @ np.stack(dirs, axis=1))
    return u


def build(s: Scenario, flat_prior_variance: float | None = None) -> ModelBuild:
    """Full build: assemble, marginalize, quotient, classify."""
    assembly = _assemble(s, flat_prior_variance)
    m_n = marginal_ambiguity_information(assembly)
    m_n = (m_n + m_n.T) / 2.0
    p = assembly.layout.p_raw
    p0 = assembly.layout.n_phase
    null_dirs = _integer_null_dirs(m_n, assembly.freq_indicators)
    d0 = null_dirs.shape[1]

    if d0 == 0:
        w_int = np.eye(p, dtype=np.int64)
        m_out = m_n
        n0 = assembly.freq_indicators.astype(np.int64)
        sep = Separability.NONSEPARABLE
    else:
        t, tinv = complete_basis([list(null_dirs[:, j]) for j in range(d0)])
        t = np.array(t, dtype=np.int64)
        tinv = np.array(tinv, dtype=np.int64)
        w_int = t[:, : p - d0]
        m_out = w_int.T.astype(float) @ m_n @ w_int.astype(float)
        if d0 == p0:
            n0 = np.zeros((0, p - d0), dtype=np.int64)
            sep = Separability.SEPARABLE
        else:
            images = (tinv @ assembly.freq_indicators.T.astype(np.int64))[: p - d0].T
            n0 = np.array(sublattice_basis([list(r) for r in images]), dtype=np.int64)
            if n0.shape[0] != p0 - d0:
                raise DegenerateModel("residual common-increment rank is inconsistent")
            sep = Separability.INTERMEDIATE

    try:
        form = SpdForm(m_out)
        from ..lattice import cholesky
        cholesky(form)
        model = AmbiguityModel(
            form,
            p0=n0.shape[0],
            n0_basis=n0 if n0.shape[0] else None,
            separability=sep,
        )
    except Exception as exc:
        raise DegenerateModel(f"marginalized information has unexpected rank: {exc}") from exc

    float_map = np.linalg.solve(m_out, w_int.T.astype(float) @ m_n)
    return ModelBuild(
        scenario=s,
        assembly=assembly,
        model=model,
        raw_information=m_n,
        w=w_int,
        float_map=float_map,
        null_dirs=null_dirs.astype(np.int64),
    )


def build_model(s: Scenario) -> AmbiguityModel:
    """Marginalized decision model for a scenario."""
    return build(s).model


def simulate_float_solution(model: AmbiguityModel, true_delta_n, seed: int) -> np.ndarray:
    """true + a draw from the model's error distribution; deterministic per seed."""
    t = np.asarray(true_delta_n, dtype=float)
    if t.shape != (model.p,):
        raise DimensionMismatch(
            f"true vector length {t.shape} does not match p = {model.p}"
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    low = np.linalg.cholesky(model.form.entries)
    z = rng.standard_normal(model.p)
    return t + solve_triangular(low.T, z, lower=False)


def simulate_measurements(s: Scenario, seed: int, true_n=None):
    """Synthetic measurement vector plus the truth that generated it.

    Truth draws: coordinates ~ N(0, 1 m), clocks ~ N(0, 10 m), biases ~ N(0, 1 m),
    wind-up ~ N(0, 0.1 cycles) (zero when compensated), iono ~ N(0, sigma).
    Returns (y, truth dict with the raw parameter vector under 'z').
    """
    bld = build(s)
    asm = bld.assembly
    lay = asm.layout
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    z = np.zeros(asm.h.shape[1])
    p = lay.p_raw
    if true_n is None:
        true_n = np.zeros(p, dtype=int)
    z[:p] = np.asarray(true_n, dtype=float)
    truth = {"n": np.asarray(true_n, dtype=int)}
    for name, sl in lay.blocks.items():
        full = slice(p + sl.start, p + sl.stop)
        size = sl.stop - sl.start
        if name == "iono":
            vals = rng.standard_normal(size) * s.sigma_delta_iono
        elif name == "coord":
            vals = rng.standard_normal(size) * 1.0
        elif name == "clock":
            vals = rng.standard_normal(size) * 10.0
        elif name == "bias":
            vals = rng.standard_normal(size) * 1.0
        else:
            vals = rng.standard_normal(size) * 0.1
        z[full] = vals
        truth[name] = vals
    y = asm.h @ z + asm.sample_noise(rng)
    truth["z"] = z
    return y, truth


@dataclass(eq=False)
class NuisancePosterior:
    """Mixture posterior over the real nuisances, one Gaussian per common
    integer increment."""

    increments: list       # integer vectors (length = number of phase types)
    weights: np.ndarray
    means: list            # theta mean per mode
    covariance: np.ndarray
    blocks: dict           # name -> slice into theta

    def block_mean(self, name: str, mode: int = 0) -> np.ndarray:
        return self.means[mode][self.blocks[name]]

    def block_cov(self, name: str) -> np.ndarray:
        sl = self.blocks[name]
        return self.covariance[sl, sl]


def nuisance_posterior(s: Scenario, delta_n, y: np.ndarray,
                       window: int = 3) -> NuisancePosterior:
    """Posterior of (coordinates, iono, biases, ...) given a resolved decision.

    The common integer increment stays unknown, so the posterior is a mixture
    indexed by it; mode weights come from the marginal joint density. In the
    fully separated case the weights are uniform (the increment is unresolvable)
    and only the mode structure differs.
    """
    bld = build(s)
    lay = bld.assembly.layout
    p = lay.p_raw
    dn = np.asarray(delta_n, dtype=np.int64)
    if dn.shape != (bld.model.p,):
        raise DimensionMismatch(
            f"decision length {dn.shape} does not match model p = {bld.model.p}"
        )
    rep = bld.w @ dn
    b = bld.assembly.information_rhs(np.asarray(y, dtype=float))
    j = bld.assembly.j
    j_nt = j[:p, p:]
    j_tt = j[p:, p:]
    vk, wk = _theta_inverse(j_tt, j_nt)
    cov = (vk / wk) @ vk.T
    b_tilde = b[:p] - j_nt @ (cov @ b[p:])

    vt = bld.assembly.freq_indicators.T  # p x p0
    a_q = vt.T @ bld.raw_information @ vt
    lin = vt.T @ (b_tilde - bld.raw_information @ rep)
    p0 = vt.shape[1]
    if float(np.max(np.abs(a_q))) > NULL_TOL * max(float(np.max(np.abs(bld.raw_information))), 1.0):
        center = np.linalg.lstsq(a_q, lin, rcond=None)[0]
    else:
        center = np.zeros(p0)
    base = np.rint(center).astype(int)
    grids = np.meshgrid(*[np.arange(-window, window + 1)] * p0, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1) + base

    logw = []
    means = []
    incs = []
    for n0 in offsets:
        n_raw = rep + vt.astype(np.int64) @ n0
        lw = float(-0.5 * n_raw @ bld.raw_information @ n_raw + b_tilde @ n_raw)
        mean = cov @ (b[p:] - j_nt.T @ n_raw.astype(float))
        logw.append(lw)
        means.append(mean)
        incs.append(n0.copy())
    logw = np.array(logw)
    logw -= logw.max()
    weights = np.exp(logw)
    weights /= weights.sum()
    order = np.argsort(-weights, kind="stable")
    return NuisancePosterior(
        increments=[incs[i] for i in order],
        weights=weights[order],
        means=[means[i] for i in order],
        covariance=cov,
        blocks=lay.blocks,
    )


def range_error_variance(s: Scenario) -> np.ndarray:
    """Per-epoch conditional variance (m^2) of the geometric range given the
    resolved decision: LOS-projected coordinate posterior, averaged over satellites."""
    bld = build(s)
    lay = bld.assembly.layout
    p = lay.p_raw
    j = bld.assembly.j
    j_nt = j[:p, p:]
    j_tt = j[p:, p:]
    vk, wk = _theta_inverse(j_tt, j_nt)
    cov = (vk / wk) @ vk.T
    csl = lay.blocks["coord"]
    static = s.coordinates_prior == "static"
    out = np.zeros(s.n_epochs)
    for i in range(s.n_epochs):
        if static:
            sub = cov[csl, csl][0:3, 0:3]
        else:
            sl = slice(csl.start + 3 * i, csl.start + 3 * i + 3)
            sub = cov[sl, sl]
        vals = [float(s.satellites[i, k] @ sub @ s.satellites[i, k])
                for k in range(s.n_satellites)]
        out[i] = float(np.mean(vals))
    return out


def succeeding_init_model(s: Scenario, kind: str) -> AmbiguityModel:
    """Model for a resolution that inherits nuisance posteriors from an earlier,
    correctly resolved segment.

    non_self re-uses the iono posterior only; self additionally re-uses the
    interfrequency biases and requires continuously measured antenna attitude
    (windup_informed). Zero pre-measurement epochs degrade to the cold model.
    """
    if kind not in ("self", "non_self"):
        raise ValidationError(f"kind must be self or non_self, got {kind}")
    if s.pre_measurement_epochs == 0:
        return build_model(s)
    if kind == "self" and not s.windup_informed:
        raise ValidationError(
            "self-type succeeding initialization needs windup_informed=True "
            "(continuously measured antenna attitude)"
        )
    pre_los = np.repeat(s.satellites[0:1], s.pre_measurement_epochs, axis=0)
    s_pre = s.with_changes(satellites=pre_los, pre_measurement_epochs=0,
                           iono_prior_override=None, bias_prior_override=None)
    asm = _assemble(s_pre)
    lay = asm.layout
    p = lay.p_raw
    j_tt = asm.j[p:, p:]
    w, v = np.linalg.eigh(j_tt)
    keep = w > EIG_GUARD * max(float(w[-1]), 1.0)
    cov = (v[:, keep] / w[keep]) @ v[:, keep].T
    flats = v[:, ~keep]
    bsl = lay.blocks["bias"]

    def _checked_block(idx: np.ndarray) -> np.ndarray:
        # a flat posterior direction must not touch the block being transferred,
        # otherwise its pseudo-covariance would fake knowledge that is not there
        if flats.shape[1] and float(np.max(np.abs(flats[idx, :]))) > 1e-8:
            raise DegenerateModel(
                "pre-measurement posterior is flat inside the transferred block"
            )
        return cov[np.ix_(idx, idx)]
    if "iono" not in lay.blocks:
        if kind == "non_self":
            return build_model(s.with_changes(pre_measurement_epochs=0))
        info = np.linalg.inv(_checked_block(np.arange(bsl.start, bsl.stop)))
        info = (info + info.T) / 2.0
        return build_model(s.with_changes(pre_measurement_epochs=0,
                                          bias_prior_override=info,
                                          interfreq_bias_prior="informative"))
    isl = lay.blocks["iono"]
    if kind == "non_self":
        info = np.linalg.inv(_checked_block(np.arange(isl.start, isl.stop)))
        info = (info + info.T) / 2.0
        s_new = s.with_changes(pre_measurement_epochs=0, iono_prior_override=info,
                               bias_prior_override=None)
        return build_model(s_new)
    idx = np.r_[np.arange(isl.start, isl.stop), np.arange(bsl.start, bsl.stop)]
    info = np.linalg.inv(_checked_block(idx))
    info = (info + info.T) / 2.0
    s_new = s.with_changes(pre_measurement_epochs=0, iono_prior_override=None,
                           bias_prior_override=info,
                           interfreq_bias_prior="informative")
    return build_model(s_new)
