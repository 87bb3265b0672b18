"""End-to-end runs shared by the command line and the tests.

``certify`` checks every hypothesis that applies to a built problem,
``solve_built`` solves it with its prescribed shift, ``cross_check``
compares against the oracle and ``gallery`` does all three for the
bundled presets.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import conditions, kernel, oracle, problems, solver
from .conditions import Certificate, EnvelopeError, MarginRecord
from .problems import BuiltProblem

GALLERY = ("singular_constant", "lazer_solimini", "pendulum", "pendulum_forced", "duffing3")
ORACLE_TOL = 1e-6


def thread_count(default: int = 4) -> int:
    raw = os.environ.get("PBVP_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def certify(built: BuiltProblem, a: float | None = None, b: float | None = None,
            delta: float | None = None, Delta: float | None = None, samples: int = 200,
            seed: int = 7, mu: float | None = None) -> Certificate:
    """Certificate of all hypotheses relevant to ``built``."""
    prob, bracket = built.prob, built.bracket
    cert = Certificate()
    cert.add(conditions.check_lower(prob, bracket.alpha))
    cert.add(conditions.check_upper(prob, bracket.beta))
    ell, rec = conditions.estimate_E2(prob, bracket, mu)
    cert.add(rec)
    params: dict = {"mu": rec.details["mu"], "ell": ell}

    L = K = K_hat = None
    gap = bracket.beta.values - bracket.alpha.values
    c_arr = conditions._as_array(built.c_fun, bracket.n)
    if built.growth_variant is not None and prob.f1 is not None:
        cert.add(conditions.check_growth_condition(prob.f1, prob.f2, bracket, built.c_fun, built.growth_variant))
        try:
            L, K, y0, c_arr = conditions.e3_constants(prob.f1, bracket, built.c_fun)
        except ValueError as exc:
            cert.add(MarginRecord("E3", False, -math.inf, {}, conditions.EXACT, 0.0, {"message": str(exc)}))
        else:
            check = conditions.verify_E3 if built.growth_variant == 1 else conditions.verify_E3prime
            cert.add(check(prob, bracket, c_arr, L, K))
            K_hat = conditions.k_hat(prob, bracket, K)
            params.update(L=L, K=K, K_hat=K_hat, y0=y0)
    c_att = float(np.max(c_arr * gap))
    params["c"] = c_att

    a = built.a if a is None else a
    b = built.b if b is None else b
    N = None
    if a is None and K_hat is not None:
        try:
            choice = solver.pick_shift(prob, bracket, ell, params["mu"], c_att, L, K_hat)
            a, b, N = choice.a, choice.b, choice.N
            params.update(N0=choice.N0, a0=choice.a0, C_N=choice.C_N)
        except solver.ShiftError as exc:
            params["shift_error"] = str(exc)
    delta = built.delta if delta is None else float(delta)
    Delta = max(built.Delta, delta / 2.0) if Delta is None else float(Delta)
    if a is not None:
        b = 0.0 if b is None else b
        p = kernel.make_params(a, b)
        N = -p.lambda2 if N is None else N
        params.update(a=a, b=b, delta=delta, Delta=Delta, k0=p.k0, N=N)
        cert.add(conditions.verify_E0(prob, bracket, p, delta))
        if built.invariance_check is not None:
            try:
                env = conditions.build_envelope(bracket, p, Delta, delta)
                members = conditions.sample_envelope(env, samples, seed)
            except (EnvelopeError, ValueError) as exc:
                cert.add(MarginRecord("envelope", False, -math.inf, {}, conditions.SAMPLED, 0.0,
                                      {"message": str(exc)}))
            else:
                check = conditions.verify_E1 if built.invariance_check == "E1" else conditions.verify_E1prime
                cert.add(check(prob, bracket, p, Delta, members))
    cert.parameters = params
    return cert


def solve_built(built: BuiltProblem, cfg: solver.SolveConfig) -> solver.SolveResult:
    return solver.solve(built.prob, built.bracket, cfg, built.a, built.b, built.c_fun)


def cross_check(built: BuiltProblem, result: solver.SolveResult) -> tuple[float, str]:
    """Oracle deviation: shooting first, dense collocation at 4n if shooting fails."""
    x = result.x
    try:
        ref = oracle.shoot_periodic(built.prob, (x.values[0], x.derivative[0]), x.n)
        return oracle.compare(x, ref.x), "shooting"
    except oracle.OracleError:
        ref = oracle.collocation_oracle(built.prob, x, 4 * x.n)
        return oracle.compare(x, ref.x), "collocation"


@dataclass
class GalleryRow:
    instance: str
    residual: float
    oracle_deviation: float
    certificate: str
    method: str
    oracle: str
    status: str
    message: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def run_instance(name: str, n: int = 256, seed: int = 7, samples: int = 200) -> GalleryRow:
    try:
        built = problems.build_problem(problems.load_problem(name), n)
        cert = certify(built, samples=samples, seed=seed)
        result = solve_built(built, solver.SolveConfig(n=n))
        dev, which = cross_check(built, result)
    except Exception as exc:  # one broken instance must not hide the others
        return GalleryRow(name, math.nan, math.nan, "error", "", "", "FAIL", f"{type(exc).__name__}: {exc}")
    ok = result.converged and dev <= ORACLE_TOL and cert.passed
    failed = ",".join(r.name for r in cert.records if not r.passed)
    return GalleryRow(name, result.residual, dev, "pass" if cert.passed else "fail", result.method, which,
                      "pass" if ok else "FAIL", f"failed checks: {failed}" if failed else "")


def gallery(names: Iterable[str] = GALLERY, n: int = 256, seed: int = 7, samples: int = 200,
            threads: Optional[int] = None) -> list[GalleryRow]:
    names = list(names)
    workers = min(len(names), threads or thread_count())
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda nm: run_instance(nm, n, seed, samples), names))


def write_gallery(rows: list[GalleryRow], path: Path) -> None:
    fields = ["instance", "residual", "oracle_deviation", "certificate", "method", "oracle", "status", "message"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            d = r.as_dict()
            for k in ("residual", "oracle_deviation"):
                d[k] = "%.17g" % d[k]
            w.writerow(d)
