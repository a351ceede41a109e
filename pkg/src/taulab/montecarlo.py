"""Desk-scale continuous-time validation by simulation.

Everything here is floating point and statistical, in deliberate contrast to
the exact engine: the conditional-CDF recursion is integrated by an explicit
Euler scheme, default times are drawn by inverse sampling, and martingale or
projection statements are accepted or rejected at a stated number of standard
errors.

Reproducibility contract: the random source is the Philox 4x64-10
counter-based generator; paths are processed in fixed-size chunks and chunk c
uses ``numpy.random.SeedSequence(seed).spawn``'s c-th child, so results are
bit-identical for a given config no matter how many worker threads execute
the chunks or in which order they finish.

Paths whose conditional-CDF state leaves [0, 1] are flagged and excluded from
kernel inversion, never clamped; the exclusion rate is a first-class output.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class McConfig:
    """Simulation parameters; ``f`` must satisfy f(0) = 0 with the declared
    bounds on f and its derivative."""

    dt: float
    horizon: float
    paths: int
    seed: int
    lambda_rate: float = 0.5
    n_vol: float = 0.0  # N = exp(s B - s^2 t / 2); 0 means N == 1
    y_kind: str = "brownian"  # "brownian" | "same-as-w" | "none"
    f_kind: str = "zero"  # "zero" | "linear"
    f_slope: float = 0.0
    f_bound: float = 1.0
    f_prime_bound: float = 1.0
    u_grid: Optional[tuple] = None  # defaults to 17 evenly spaced points
    workers: int = 1
    chunk_size: int = 4096
    z_floor: float = 1e-8

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if self.paths < 1:
            raise ValueError("path count must be >= 1")
        if self.f_kind == "linear" and self.f_slope == 0.0 and self.f_bound < 0:
            raise ValueError("invalid f bounds")

    @property
    def n_steps(self) -> int:
        n = int(round(self.horizon / self.dt))
        if abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError("horizon must be an integer number of steps")
        return n

    def f(self, x: np.ndarray) -> np.ndarray:
        if self.f_kind == "zero":
            return np.zeros_like(x)
        if self.f_kind == "linear":
            return self.f_slope * x
        raise ValueError(f"unknown f spec: {self.f_kind}")

    def report_times(self) -> np.ndarray:
        if self.u_grid is not None:
            return np.asarray(self.u_grid, dtype=float)
        return np.linspace(0.0, self.horizon, 17)

    def as_dict(self) -> dict:
        return {
            "dt": self.dt,
            "horizon": self.horizon,
            "paths": self.paths,
            "seed": self.seed,
            "lambda_rate": self.lambda_rate,
            "n_vol": self.n_vol,
            "y_kind": self.y_kind,
            "f_kind": self.f_kind,
            "f_slope": self.f_slope,
            "u_grid": list(self.report_times()),
            "workers": self.workers,
            "chunk_size": self.chunk_size,
            "z_floor": self.z_floor,
            "rng": "philox4x64-10, SeedSequence(seed).spawn per chunk",
        }


def _chunk_generator(seed: int, chunk_index: int, n_chunks: int) -> np.random.Generator:
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return np.random.Generator(np.random.Philox(children[chunk_index]))


def _chunk_bounds(paths: int, chunk_size: int) -> list:
    return [(a, min(a + chunk_size, paths)) for a in range(0, paths, chunk_size)]


@dataclass
class PathBundle:
    """Per-path summaries at the report grid plus everything needed to
    regenerate the fine increments deterministically."""

    cfg: McConfig
    times: np.ndarray  # report grid
    w: np.ndarray  # paths x report
    n_mart: np.ndarray
    y: np.ndarray
    lam_cum: np.ndarray  # report grid, deterministic
    z: np.ndarray  # paths x report, N exp(-Lambda)
    uniforms: np.ndarray  # one U(0,1) per path for default sampling
    m_curves: Optional[np.ndarray] = None  # paths x report (M^{u_j} terminal)
    m_flags: Optional[np.ndarray] = None  # paths marked invalid
    near_singular: int = 0

    @property
    def n_paths(self) -> int:
        return self.w.shape[0]

    def manifest(self) -> dict:
        return {
            "config": self.cfg.as_dict(),
            "paths": int(self.n_paths),
            "flagged_paths": int(self.m_flags.sum()) if self.m_flags is not None else 0,
            "near_singular_steps": int(self.near_singular),
        }


def _lambda_cum(cfg: McConfig, times: np.ndarray) -> np.ndarray:
    return cfg.lambda_rate * times


def _simulate_chunk(cfg: McConfig, lo: int, hi: int, chunk_index: int, n_chunks: int,
                    fine_times: np.ndarray, report_idx: np.ndarray, solve_m: bool):
    """One chunk of paths: summaries at the report grid and, optionally, the
    terminal conditional-CDF values for every report-grid start point."""
    m = hi - lo
    rng = _chunk_generator(cfg.seed, chunk_index, n_chunks)
    n_steps = cfg.n_steps
    sd = math.sqrt(cfg.dt)
    normals = rng.standard_normal((n_steps, 3, m))
    uniforms = rng.random(m)

    w = np.zeros(m)
    bn = np.zeros(m)
    y = np.zeros(m)
    report_cols = len(report_idx)
    out_w = np.zeros((m, report_cols))
    out_n = np.zeros((m, report_cols))
    out_y = np.zeros((m, report_cols))

    u_times = fine_times[report_idx]
    lam_report = _lambda_cum(cfg, u_times)
    n_u = len(u_times)
    m_state = np.zeros((m, n_u))
    m_alive = np.zeros((m, n_u), dtype=bool)
    m_bad = np.zeros(m, dtype=bool)
    near_singular = 0

    col = {int(k): j for j, k in enumerate(report_idx)}
    if 0 in col:
        out_w[:, col[0]] = 0.0
        out_n[:, col[0]] = 1.0
        out_y[:, col[0]] = 0.0
        if solve_m:
            m_state[:, col[0]] = 0.0  # 1 - Z_0 with Z_0 = 1
            m_alive[:, col[0]] = True

    for step in range(1, n_steps + 1):
        t_prev = fine_times[step - 1]
        dw = normals[step - 1, 0] * sd
        dbn = normals[step - 1, 1] * sd
        dy_own = normals[step - 1, 2] * sd

        n_prev = np.exp(cfg.n_vol * bn - 0.5 * cfg.n_vol**2 * t_prev)
        e_prev = math.exp(-cfg.lambda_rate * t_prev)
        z_prev = n_prev * e_prev
        dn = n_prev * (np.exp(cfg.n_vol * dbn - 0.5 * cfg.n_vol**2 * cfg.dt) - 1.0)
        if cfg.y_kind == "brownian":
            dy = dy_own
        elif cfg.y_kind == "same-as-w":
            dy = dw
        else:
            dy = np.zeros(m)

        if solve_m:
            one_minus_z = 1.0 - z_prev
            # singular coefficients only matter on paths carrying a live
            # nonzero curve; the gated coefficient never silently rescales one
            relevant = (m_alive & (m_state != 0.0)).any(axis=1)
            sing = relevant & (one_minus_z < cfg.z_floor)
            if sing.any():
                near_singular += int(sing.sum())
            with np.errstate(divide="ignore", invalid="ignore"):
                coeff = np.where(
                    one_minus_z >= cfg.z_floor, np.exp(-cfg.lambda_rate * t_prev) / one_minus_z, 0.0
                )
            gap = m_state - one_minus_z[:, None]
            factor = 1.0 - coeff[:, None] * dn[:, None] + cfg.f(gap) * dy[:, None]
            m_state = np.where(m_alive, m_state * factor, m_state)
            out = m_alive & ((m_state < 0.0) | (m_state > 1.0))
            if out.any():
                m_bad |= out.any(axis=1)

        w += dw
        bn += dbn
        y += dy
        j = col.get(step)
        if j is not None:
            out_w[:, j] = w
            out_n[:, j] = np.exp(cfg.n_vol * bn - 0.5 * cfg.n_vol**2 * fine_times[step])
            out_y[:, j] = y
            if solve_m:
                # a curve starting at u_j is born here at 1 - Z_{u_j}
                z_here = out_n[:, j] * math.exp(-lam_report[j])
                m_state[:, j] = 1.0 - z_here
                m_alive[:, j] = True

    return out_w, out_n, out_y, uniforms, m_state, m_bad, near_singular


def simulate_base_paths(cfg: McConfig, solve_m: bool = True) -> PathBundle:
    """Simulate the driver, the positive martingale, the auxiliary martingale
    and (optionally) the conditional-CDF curves for every report-grid start.

    Deterministic given the config; see the module docstring for the seeding
    contract.
    """
    n_steps = cfg.n_steps
    fine_times = np.arange(n_steps + 1) * cfg.dt
    report = cfg.report_times()
    report_idx = np.array([int(round(t / cfg.dt)) for t in report])
    if not np.allclose(fine_times[report_idx], report, atol=1e-9):
        raise ValueError("report grid must lie on the step grid")

    bounds = _chunk_bounds(cfg.paths, cfg.chunk_size)
    n_chunks = len(bounds)

    def work(ci):
        lo, hi = bounds[ci]
        return _simulate_chunk(
            cfg, lo, hi, ci, n_chunks, fine_times, report_idx, solve_m
        )

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, range(n_chunks)))
    else:
        results = [work(ci) for ci in range(n_chunks)]

    w = np.concatenate([r[0] for r in results])
    n_mart = np.concatenate([r[1] for r in results])
    y = np.concatenate([r[2] for r in results])
    uniforms = np.concatenate([r[3] for r in results])
    m_curves = np.concatenate([r[4] for r in results]) if solve_m else None
    m_flags = np.concatenate([r[5] for r in results]) if solve_m else None
    near_singular = sum(r[6] for r in results)

    lam_cum = _lambda_cum(cfg, report)
    z = n_mart * np.exp(-lam_cum)[None, :]
    return PathBundle(
        cfg=cfg,
        times=report,
        w=w,
        n_mart=n_mart,
        y=y,
        lam_cum=lam_cum,
        z=z,
        uniforms=uniforms,
        m_curves=m_curves,
        m_flags=m_flags,
        near_singular=near_singular,
    )


def solve_natural_sde(bundle: PathBundle, u: float) -> tuple:
    """Terminal conditional-CDF values started at u, with the per-path
    validity flags.  ``u`` must be a report-grid point (the curves are
    integrated during the base simulation with the same increments)."""
    j = int(np.argmin(np.abs(bundle.times - u)))
    if abs(bundle.times[j] - u) > 1e-9:
        raise ValueError("u must lie on the report grid")
    if bundle.m_curves is None:
        raise ValueError("bundle was simulated without conditional-CDF curves")
    return bundle.m_curves[:, j], bundle.m_flags


@dataclass
class DefaultSample:
    tau: np.ndarray  # per path; inf for no default; nan for excluded paths
    excluded: int
    rule: str

    @property
    def flagged_fraction(self) -> float:
        return self.excluded / len(self.tau)


def sample_default(bundle: PathBundle, rule: str = "cox") -> DefaultSample:
    """Draw the default time per path.

    ``cox``: threshold inversion, tau = inf{t : Lambda_t >= -log U} with the
    constant-intensity inverse applied in closed form (a continuous value).
    ``natural``: inverse of u -> M^u_infty on the report grid; paths with an
    invalid or non-monotone curve family are excluded and counted.
    """
    u = bundle.uniforms
    if rule == "cox":
        e = -np.log(u)
        tau = e / bundle.cfg.lambda_rate if bundle.cfg.lambda_rate > 0 else np.full_like(u, np.inf)
        tau = np.where(tau <= bundle.cfg.horizon, tau, np.inf)
        return DefaultSample(tau=tau, excluded=0, rule=rule)
    if rule == "natural":
        if bundle.m_curves is None:
            raise ValueError("bundle carries no conditional-CDF curves")
        m_term = bundle.m_curves
        mono_bad = (np.diff(m_term, axis=1) < -1e-9).any(axis=1)
        bad = mono_bad | bundle.m_flags
        hit = m_term >= u[:, None]
        any_hit = hit.any(axis=1)
        first = np.where(any_hit, hit.argmax(axis=1), -1)
        tau = np.where(any_hit, bundle.times[np.maximum(first, 0)], np.inf)
        tau = np.where(bad, np.nan, tau)
        return DefaultSample(tau=tau, excluded=int(bad.sum()), rule=rule)
    raise ValueError(f"unknown sampling rule: {rule}")


# ---------------------------------------------------------------------------
# statistical reports
# ---------------------------------------------------------------------------


@dataclass
class ProjectionReport:
    rows: list  # (t, lhs_mean, rhs_mean, diff, se, passed)
    passed: bool
    n_paths: int
    flagged_fraction: float

    def as_dict(self) -> dict:
        return {
            "check": "projection-condition",
            "passed": self.passed,
            "n_paths": self.n_paths,
            "flagged_fraction": self.flagged_fraction,
            "rows": [
                {
                    "t": t,
                    "survival_frequency": a,
                    "survival_predicted": b,
                    "diff": d,
                    "se": s,
                    "passed": p,
                }
                for (t, a, b, d, s, p) in self.rows
            ],
        }

    def csv_rows(self) -> list:
        header = ["t", "survival_frequency", "survival_predicted", "diff", "se", "passed"]
        return [header] + [[f"{t:.10g}", f"{a:.10g}", f"{b:.10g}", f"{d:.10g}", f"{s:.10g}", str(p)] for (t, a, b, d, s, p) in self.rows]


def projection_condition_test(
    bundle: PathBundle, sample: DefaultSample, n_se: float = 3.0
) -> ProjectionReport:
    """Binned, regression-free test of the survival projection: at every
    report time the default-survival frequency must match the mean of
    ``N_t exp(-Lambda_t)`` within ``n_se`` paired standard errors."""
    keep = ~np.isnan(sample.tau)
    n = int(keep.sum())
    if n < 2:
        raise ValueError("insufficient paths for the requested confidence")
    tau = sample.tau[keep]
    rows = []
    ok_all = True
    for j, t in enumerate(bundle.times):
        lhs = (tau > t).astype(float)
        rhs = bundle.z[keep, j]
        diff = lhs - rhs
        mean = float(diff.mean())
        se = float(diff.std(ddof=1) / math.sqrt(n))
        passed = abs(mean) <= n_se * se if se > 0 else abs(mean) == 0.0
        ok_all &= passed
        rows.append((float(t), float(lhs.mean()), float(rhs.mean()), mean, se, passed))
    return ProjectionReport(
        rows=rows,
        passed=ok_all,
        n_paths=n,
        flagged_fraction=sample.flagged_fraction,
    )


@dataclass
class ReplicationReport:
    claim: str
    rows: list  # (dt, rms, ratio_to_previous)
    passed: bool

    def as_dict(self) -> dict:
        return {
            "check": "replication-convergence",
            "claim": self.claim,
            "passed": self.passed,
            "rows": [
                {"dt": dt, "rms_error": rms, "ratio": ratio}
                for (dt, rms, ratio) in self.rows
            ],
        }

    def csv_rows(self) -> list:
        return [["dt", "rms_error", "ratio"]] + [
            [f"{dt:.10g}", f"{rms:.10g}", "" if r is None else f"{r:.10g}"]
            for (dt, rms, r) in self.rows
        ]


def replication_backtest(
    cfg: McConfig,
    claim: str,
    levels: Sequence[int],
    fine_factor: int = 4,
    max_ratio: float = 0.85,
) -> ReplicationReport:
    """Hedging error convergence for closed-form claims on the constant-
    intensity first-jump model.

    ``levels`` are trading-grid step counts (per horizon), each dividing the
    finest level ``max(levels) * fine_factor`` on which the truth (driver
    path and default time) is simulated.  The claim is replicated with its
    closed-form predictable integrand; the terminal error's RMS must fall by
    at least ``1 - max_ratio`` per step-count doubling.

    ``bond``: pays 1 at the horizon if no default; hedged through the
    compensated default indicator only.
    ``stopped-driver``: pays the driver value at horizon-or-default; hedged
    through the driver only.
    ``constant``: pays 1; the hedge is empty and the error must vanish.
    """
    if claim not in ("bond", "stopped-driver", "constant"):
        raise ValueError(f"no integrand rule for claim {claim!r}")
    levels = sorted(int(l) for l in levels)
    n_fine = levels[-1] * fine_factor
    dt_fine = cfg.horizon / n_fine
    lam = cfg.lambda_rate
    horizon = cfg.horizon

    bounds = _chunk_bounds(cfg.paths, cfg.chunk_size)
    n_chunks = len(bounds)
    fine_times = np.arange(n_fine + 1) * dt_fine

    sq_err = {lv: 0.0 for lv in levels}

    def work(ci):
        lo, hi = bounds[ci]
        m = hi - lo
        rng = _chunk_generator(cfg.seed, ci, n_chunks)
        dw = rng.standard_normal((n_fine, m)) * math.sqrt(dt_fine)
        u = rng.random(m)
        w = np.vstack([np.zeros(m), np.cumsum(dw, axis=0)])
        tau = -np.log(u) / lam if lam > 0 else np.full(m, np.inf)
        out = {}
        if claim == "constant":
            payoff = np.ones(m)
            for lv in levels:
                out[lv] = float(np.sum((payoff - 1.0) ** 2))
            return out
        if claim == "bond":
            payoff = (tau > horizon).astype(float)
            for lv in levels:
                dt_lv = horizon / lv
                v = np.full(m, math.exp(-lam * horizon))
                for j in range(lv):
                    t0, t1 = j * dt_lv, (j + 1) * dt_lv
                    alive0 = tau > t0
                    bond_price = math.exp(-lam * (horizon - t0))
                    dh = ((tau > t0) & (tau <= t1)).astype(float)
                    dl = dh - alive0.astype(float) * lam * dt_lv
                    v += -bond_price * dl
                out[lv] = float(np.sum((v - payoff) ** 2))
            return out
        # stopped-driver
        idx = np.where(np.isinf(tau), n_fine, np.minimum(tau / dt_fine, n_fine)).astype(int)
        w_at_tau = w[np.minimum(idx, n_fine), np.arange(m)]
        payoff = np.where(tau > horizon, w[n_fine, np.arange(m)], w_at_tau)
        for lv in levels:
            stride = n_fine // lv
            dt_lv = horizon / lv
            v = np.zeros(m)
            for j in range(lv):
                t0 = j * dt_lv
                alive0 = tau > t0
                dwj = w[(j + 1) * stride, np.arange(m)] - w[j * stride, np.arange(m)]
                v += alive0.astype(float) * dwj
            out[lv] = float(np.sum((v - payoff) ** 2))
        return out

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, range(n_chunks)))
    else:
        results = [work(ci) for ci in range(n_chunks)]
    for r in results:
        for lv in levels:
            sq_err[lv] += r[lv]

    rows = []
    prev = None
    ok = True
    for lv in levels:
        rms = math.sqrt(sq_err[lv] / cfg.paths)
        ratio = None if prev is None else (rms / prev if prev > 0 else 0.0)
        if ratio is not None and claim != "constant" and ratio > max_ratio:
            ok = False
        rows.append((cfg.horizon / lv, rms, ratio))
        prev = rms
    if claim == "constant":
        ok = all(rms == 0.0 for (_, rms, _) in rows)
    return ReplicationReport(claim=claim, rows=rows, passed=ok)


@dataclass
class DriftTestReport:
    rows: list  # (block, mean, se, t_stat, p_value)
    passed: bool
    alpha: float

    def as_dict(self) -> dict:
        return {
            "check": "martingale-drift",
            "passed": self.passed,
            "alpha": self.alpha,
            "rows": [
                {"block": b, "mean": m, "se": s, "t": t, "p": p}
                for (b, m, s, t, p) in self.rows
            ],
        }

    def csv_rows(self) -> list:
        return [["block", "mean", "se", "t", "p"]] + [
            [str(b), f"{m:.10g}", f"{s:.10g}", f"{t:.10g}", f"{p:.10g}"]
            for (b, m, s, t, p) in self.rows
        ]


def martingale_drift_test(
    values: np.ndarray, n_blocks: int = 8, alpha: float = 0.01
) -> DriftTestReport:
    """Per-time-block t-test of the mean path increment, Bonferroni-adjusted.

    ``values`` is a paths x times array of a sampled process on independent
    paths.  A block with zero variance passes iff its mean increment is zero.
    """
    inc = np.diff(values, axis=1)
    n_paths, n_times = inc.shape
    if n_times < n_blocks:
        n_blocks = max(1, n_times)
    edges = np.linspace(0, n_times, n_blocks + 1).astype(int)
    rows = []
    worst_p = 1.0
    for b in range(n_blocks):
        lo, hi = edges[b], edges[b + 1]
        if hi <= lo:
            continue
        block = inc[:, lo:hi].sum(axis=1)
        mean = float(block.mean())
        sd = float(block.std(ddof=1)) if n_paths > 1 else 0.0
        if sd == 0.0:
            p = 1.0 if mean == 0.0 else 0.0
            t = 0.0 if mean == 0.0 else math.inf
        else:
            se = sd / math.sqrt(n_paths)
            t = mean / se
            p = math.erfc(abs(t) / math.sqrt(2.0))
        rows.append((b, mean, sd / math.sqrt(n_paths) if sd else 0.0, t, p))
        worst_p = min(worst_p, p)
    passed = worst_p * len(rows) >= alpha
    return DriftTestReport(rows=rows, passed=passed, alpha=alpha)
