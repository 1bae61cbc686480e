"""Self-checks run by ``polyfilt verify``: each returns ``(name, passed, detail)`` rows."""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from .heston import HestonParams, heston_equivalent, heston_gaussian_equivalent, heston_generator, heston_ssm
from .kalman import ObservationPartition, kalman_filter, penrose_residual, predict, pseudo_inverse, smooth
from .multiindex import IndexBasis
from .oracle import MomentTable, linear_mmse
from .polyproc import PolyProcess, discretize
from .polyssm import LinearGaussianSSM, ssm_from_gaussian, structural_mask

Check = tuple[str, bool, str]

DESK = HestonParams(kappa=1.0, m=0.16, sigma=0.3, rho=-0.5)


def _desk_observations(model: LinearGaussianSSM, T: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = rng.multivariate_normal(model.mu0, model.Sigma0, method="eigh")
    out = [x]
    for t in range(1, T + 1):
        x = model.a_at(t) + model.A_at(t) @ x + model.noise_factor(t) @ rng.standard_normal(model.d)
        out.append(x)
    return np.array(out)


def oracle_gaps(model: LinearGaussianSSM, table: MomentTable, part: ObservationPartition,
                obs: np.ndarray, T: int) -> dict[str, float]:
    """Largest mean and covariance gaps between the recursions and the normal equations."""
    y = obs[:, part.o]
    fr = kalman_filter(model, part, y)
    gaps = {"filter": 0.0, "predict": 0.0, "smooth": 0.0}

    def gap(est_x, est_P, t, times):
        r = linear_mmse(table, part, t, times)
        return max(float(np.max(np.abs(r.estimate(y[list(times)]) - est_x))),
                   float(np.max(np.abs(r.mse - est_P))))

    for t in range(T + 1):
        st = fr.filtered(t)
        gaps["filter"] = max(gaps["filter"], gap(st.x, st.P, t, range(t + 1)))
        if t + 2 <= T:
            pr = predict(model, st, t + 2)
            gaps["predict"] = max(gaps["predict"], gap(pr.x, pr.P, t + 2, range(t + 1)))
        if t + 3 <= T:
            sm = smooth(model, fr, t + 3)
            gaps["smooth"] = max(gaps["smooth"], gap(sm.x[t], sm.P[t], t, range(t + 4)))
    return gaps


def suite_kalman_oracle(tol: float = 1e-7) -> list[Check]:
    rows: list[Check] = []
    T = 8
    desk = heston_gaussian_equivalent(DESK, T)
    table = MomentTable.from_polyssm(heston_ssm(DESK), T)
    obs = _desk_observations(desk, T, seed=7)
    for observed, label in (((1, 2), "dY,dY2"), ((1,), "dY")):
        gaps = oracle_gaps(desk, table, ObservationPartition(3, observed), obs, T)
        for kind, g in gaps.items():
            rows.append((f"heston {kind} [{label}]", g <= tol, f"max gap {g:.2e}"))
    rng = np.random.default_rng(3)
    for trial in range(3):
        d = 4
        A = rng.normal(size=(d, d))
        A *= 0.8 / max(abs(np.linalg.eigvals(A)))
        L = rng.normal(size=(d, d))
        S = rng.normal(size=(d, d))
        model = LinearGaussianSSM(rng.normal(size=d), A, L @ L.T, rng.normal(size=d), S @ S.T)
        table = MomentTable.from_polyssm(ssm_from_gaussian(model), 6)
        obs = _desk_observations(model, 6, seed=trial)
        gaps = oracle_gaps(model, table, ObservationPartition(d, (1, 3)), obs, 6)
        g = max(gaps.values())
        rows.append((f"random d=4 model #{trial}", g <= tol, f"max gap {g:.2e}"))
    return rows


def suite_pipeline(tol: float = 1e-8) -> list[Check]:
    rows: list[Check] = []
    worst = 0.0
    for kappa, sigma, rho, f in itertools.product((0.5, 1.0, 2.0), (0.1, 0.3), (-0.5, 0.0, 0.5), (1, 2)):
        p = HestonParams(kappa, 0.16, sigma, rho, mu_v=f * 0.16)
        closed = heston_gaussian_equivalent(p, 5)
        generic = heston_equivalent(p, 5)
        Cc = np.broadcast_to(closed.C, (5, 3, 3))
        Cg = np.broadcast_to(generic.C, (5, 3, 3))
        worst = max(worst, float(np.max(np.abs(Cc - Cg))), float(np.max(np.abs(closed.a - generic.a))),
                    float(np.max(np.abs(closed.A - generic.A))))
    rows.append(("closed form vs generator route (36 parameter sets)", worst <= tol, f"max gap {worst:.2e}"))
    return rows


def suite_invariants() -> list[Check]:
    rows: list[Check] = []
    for d, n in ((1, 4), (2, 3), (3, 2), (5, 2)):
        b = IndexBasis(d, n)
        ok = all(b.rank(b.unrank(i)) == i for i in range(len(b)))
        rows.append((f"rank/unrank d={d} n={n}", ok, f"{len(b)} indices"))
    gen = heston_generator(DESK, 3)
    mask = structural_mask(gen.basis)
    M = heston_ssm(DESK, n=3).B.values
    rows.append(("heston triangularity", bool(np.all(M[~mask & ~np.eye(len(mask), dtype=bool)] == 0)), "n=3"))
    proc = PolyProcess(gen, heston_ssm(DESK, n=3).initial_moments)
    B1 = discretize(proc, 1.0).B.values
    B2 = discretize(proc, 2.0).B.values
    gap = float(np.max(np.abs(B1 @ B1 - B2)) / max(1.0, np.max(np.abs(B2))))
    rows.append(("semigroup exp(2B) = exp(B)^2", gap <= 1e-12, f"rel gap {gap:.2e}"))
    rng = np.random.default_rng(0)
    worst = 0.0
    for shape, rank in (((4, 4), 4), ((5, 3), 2), ((3, 3), 1), ((2, 2), 0)):
        M = rng.normal(size=(shape[0], rank)) @ rng.normal(size=(rank, shape[1]))
        worst = max(worst, penrose_residual(M, pseudo_inverse(M)))
    rows.append(("Penrose identities", worst <= 1e-9, f"max residual {worst:.2e}"))
    return rows


SUITES: dict[str, Callable[[], list[Check]]] = {
    "kalman-oracle": suite_kalman_oracle,
    "pipeline": suite_pipeline,
    "invariants": suite_invariants,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [row for fn in SUITES.values() for row in fn()]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(list(SUITES) + ['all'])}")
    return SUITES[name]()
