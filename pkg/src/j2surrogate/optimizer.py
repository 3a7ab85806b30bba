"""Two-step optimization of long-duration multiple-impulse rendezvous.

Step one searches maneuver-time ratios and the free impulse vectors with
differential evolution, closing the last leg with a two-body Lambert arc.
Step two hands each DE result to SLSQP with every leg flown under secular J2;
the terminal departure impulse is re-solved by shooting so the position
constraint holds at every iterate, and the final impulse matches velocity.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .orbits import EARTH, OrbitalElements, PhysicalConstants, propagate_to

log = logging.getLogger(__name__)

TWO_BODY_TERMINAL = "two_body_terminal"
FULLY_PERTURBED = "fully_perturbed"

_PENALTY = 1e6
_SHOOT_TOL = 1e-6  # m, inner terminal-shooting tolerance
_MIN_LEG = 60.0  # s, shortest terminal leg handed to the refiner
_SOFT = 1e-2  # (m/s)^2, smooths |dv| so vanishing impulses do not stall SQP
_FD_STEP = 1e-5  # optimizer units
_TSCALE = 1000.0  # s per optimizer unit for maneuver epochs
_CENTRAL = True  # central rather than forward differences in the refiner


class RefinementError(RuntimeError):
    """Local refinement could not meet the terminal tolerances.

    ``solution`` is the best (infeasible) attempt, with its residuals.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleTransferError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


ARRIVAL_MODES = ("end", "level", "free")


@dataclass
class OptimizerConfig:
    n_impulses: int = 5
    restarts: int = 100
    de_population: int = 50
    de_generations: int = 300
    de_F: float = 0.7
    de_CR: float = 0.9
    seed: int = 0
    eps_r: float = 1.0
    eps_v: float = 0.01
    dv_bound: float = 300.0
    local_frame: bool = True  # free impulse components are (radial, transverse, normal)
    # how each restart seeds the arrival ratio, cycled by restart index
    arrival_modes: tuple = ("end", "level", "end", "free")

    def __post_init__(self):
        if self.n_impulses < 3:
            raise ValueError("n_impulses must be at least 3")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.de_population < 4:
            raise ValueError("DE needs a population of at least 4")
        if not (self.eps_r > 0 and self.eps_v > 0):
            raise ValueError("terminal tolerances must be positive")
        self.arrival_modes = tuple(self.arrival_modes)
        bad = [m for m in self.arrival_modes if m not in ARRIVAL_MODES]
        if not self.arrival_modes or bad:
            raise ValueError(f"arrival_modes must be a non-empty sequence of {ARRIVAL_MODES}")

    def arrival_mode(self, restart: int) -> str:
        """Arrival seeding of one restart.

        ``end`` starts the whole population at the window end, ``level`` at
        one random arrival ratio, ``free`` draws it per individual.
        """
        return self.arrival_modes[restart % len(self.arrival_modes)]

    @property
    def dimension(self) -> int:
        return self.n_impulses + 3 * (self.n_impulses - 2)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_impulses
        lo = np.r_[np.zeros(n), np.full(3 * (n - 2), -self.dv_bound)]
        hi = np.r_[np.ones(n), np.full(3 * (n - 2), self.dv_bound)]
        return lo, hi


@dataclass
class DesignVector:
    etas: np.ndarray
    impulses: np.ndarray

    def __post_init__(self):
        self.etas = np.asarray(self.etas, dtype=float)
        self.impulses = np.asarray(self.impulses, dtype=float).reshape(-1, 3)
        if np.any(self.etas < 0) or np.any(self.etas > 1):
            raise ValueError("time ratios must lie in [0, 1]")
        if len(self.impulses) != len(self.etas) - 2:
            raise ValueError("need n-2 free impulses for n time ratios")

    def to_array(self) -> np.ndarray:
        return np.r_[self.etas, self.impulses.ravel()]

    @classmethod
    def from_array(cls, x, n: int) -> "DesignVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:n], x[n:].reshape(-1, 3))


@dataclass
class TransferSolution:
    """One optimized transfer.

    ``maneuver_times`` are seconds after the departure epoch; ``impulses`` is
    (n, 3) in m/s.
    """

    maneuver_times: np.ndarray
    impulses: np.ndarray
    total_dv: float
    pos_residual: float
    vel_residual: float
    model: str
    seed: int | None = None
    objective: float = field(default=math.nan, repr=False)
    design: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.maneuver_times = np.asarray(self.maneuver_times, dtype=float)
        self.impulses = np.asarray(self.impulses, dtype=float).reshape(-1, 3)
        if math.isnan(self.objective):
            self.objective = self.total_dv

    def meets(self, eps_r: float, eps_v: float) -> bool:
        return self.pos_residual <= eps_r and self.vel_residual <= eps_v

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "maneuver_times_s": self.maneuver_times.tolist(),
            "impulses_mps": self.impulses.tolist(),
            "total_dv_mps": self.total_dv,
            "pos_residual_m": self.pos_residual,
            "vel_residual_mps": self.vel_residual,
            "seed": self.seed,
        }


def decode_times(etas, dt_max: float) -> np.ndarray:
    """Maneuver epochs from nested ratios: T_n = eta_n dt_max, T_i = eta_i T_(i+1)."""
    etas = np.asarray(etas, dtype=float)
    if np.any(etas < 0) or np.any(etas > 1):
        raise ValueError("time ratios must lie in [0, 1]")
    out = np.empty_like(etas)
    K.decode_times(etas, float(dt_max), out)
    return out


def encode_times(times, dt_max: float) -> np.ndarray:
    """Inverse of :func:`decode_times` (a zero later epoch maps its ratio to 0)."""
    t = np.asarray(times, dtype=float)
    etas = np.empty_like(t)
    etas[-1] = t[-1] / dt_max
    nxt = t[1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        etas[:-1] = np.where(nxt > 0, t[:-1] / np.where(nxt > 0, nxt, 1.0), 0.0)
    return np.clip(etas, 0.0, 1.0)


def _aligned(dep: OrbitalElements, tgt: OrbitalElements, k: PhysicalConstants):
    return dep.as_array(), propagate_to(tgt, dep.epoch, k).as_array()


def evaluate_candidate(
    x: DesignVector,
    dep: OrbitalElements,
    tgt: OrbitalElements,
    dt_max: float,
    cfg: OptimizerConfig | None = None,
    k: PhysicalConstants = EARTH,
) -> TransferSolution:
    """Fly a design vector with a two-body Lambert terminal leg.

    A failed Lambert leg leaves the coasting miss in the residuals and a
    penalized ``objective``.
    """
    cfg = cfg or OptimizerConfig(n_impulses=len(x.etas))
    n = len(x.etas)
    dep_a, tgt_a = _aligned(dep, tgt, k)
    times = np.empty(n)
    dvs = np.empty(3 * n)
    resid = np.empty(2)
    obj, status = K.evaluate_candidate(
        x.to_array(), n, dep_a, tgt_a, float(dt_max), k.mu, k.j2, k.re,
        cfg.eps_r, cfg.eps_v, cfg.local_frame, times, dvs, resid,
    )
    if status != K.OK:
        dvs[3 * (n - 2):] = 0.0
    total = float(np.linalg.norm(dvs.reshape(n, 3), axis=1).sum())
    return TransferSolution(times, dvs.reshape(n, 3), total, float(resid[0]), float(resid[1]),
                            TWO_BODY_TERMINAL, objective=float(obj))


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(restart)])


def _run_de(fitness, lo, hi, cfg: OptimizerConfig, rngs, modes=None):
    """DE/best/1/bin on several independent populations in lockstep.

    ``fitness`` maps an (R, P, D) array to (R, P) objective values. Each
    population draws only from its own generator, so a restart's trajectory
    does not depend on which other restarts share the batch.
    """
    R, P, D = len(rngs), cfg.de_population, len(lo)
    span = hi - lo
    # DE/best/1 never moves a ratio the whole population shares, so a pinned
    # restart searches one arrival time (the refiner may still move it);
    # free restarts tend to settle on early arrivals
    a = cfg.n_impulses - 1
    pops = []
    for b, g in enumerate(rngs):
        p = lo + span * g.random((P, D))
        mode = "free" if modes is None else modes[b]
        if mode == "end":
            p[:, a] = hi[a]
        elif mode == "level":
            p[:, a] = lo[a] + span[a] * g.random()
        pops.append(p)
    pop = np.stack(pops)
    fit = fitness(pop)
    rows = np.arange(P)
    r1 = np.empty((R, P), dtype=np.intp)
    r2 = np.empty((R, P), dtype=np.intp)
    cross = np.empty((R, P, D), dtype=bool)
    for _ in range(cfg.de_generations):
        for b, g in enumerate(rngs):
            a = (rows + g.integers(1, P, P)) % P
            # second donor from the P-2 rows that are neither the target nor a
            c = g.integers(0, P - 2, P)
            first, second = np.minimum(rows, a), np.maximum(rows, a)
            c += c >= first
            c += c >= second
            r1[b], r2[b] = a, c
            mask = g.random((P, D)) < cfg.de_CR
            mask[rows, g.integers(0, D, P)] = True
            cross[b] = mask
        best = pop[np.arange(R), np.argmin(fit, axis=1)]
        idx = np.arange(R)[:, None]
        mutant = best[:, None, :] + cfg.de_F * (pop[idx, r1] - pop[idx, r2])
        trial = np.where(cross, mutant, pop)
        # out-of-range components go halfway back to the violated bound
        trial = np.where(trial < lo, 0.5 * (lo + pop), trial)
        trial = np.where(trial > hi, 0.5 * (hi + pop), trial)
        tfit = fitness(trial)
        better = tfit <= fit
        pop = np.where(better[..., None], trial, pop)
        fit = np.where(better, tfit, fit)
    j = np.argmin(fit, axis=1)
    return pop[np.arange(R), j], fit[np.arange(R), j]


def _global_batch(dep, tgt, dt_max, cfg, k, restart_ids):
    n = cfg.n_impulses
    dep_a, tgt_a = _aligned(dep, tgt, k)
    lo, hi = cfg.bounds()
    R = len(restart_ids)
    deps = np.repeat(dep_a[None], R, axis=0)
    tgts = np.repeat(tgt_a[None], R, axis=0)
    dts = np.full(R, float(dt_max))

    def fitness(pops):
        out = np.empty(pops.shape[:2])
        K.evaluate_batches(pops, n, deps, tgts, dts, k.mu, k.j2, k.re, cfg.eps_r, cfg.eps_v,
                           cfg.local_frame, out)
        return out

    rngs = [_restart_rng(cfg.seed, r) for r in restart_ids]
    xs, _ = _run_de(fitness, lo, hi, cfg, rngs, [cfg.arrival_mode(r) for r in restart_ids])
    sols = []
    for r, x in zip(restart_ids, xs):
        sol = evaluate_candidate(DesignVector.from_array(x, n), dep, tgt, dt_max, cfg, k)
        sol.seed = int(r)
        sol.design = x
        sols.append(sol)
    return sols


def optimize_global(
    dep: OrbitalElements,
    tgt: OrbitalElements,
    dt_max: float,
    cfg: OptimizerConfig | None = None,
    k: PhysicalConstants = EARTH,
    restart: int = 0,
) -> TransferSolution:
    """Best DE candidate of a single restart (two-body terminal leg)."""
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    cfg = cfg or OptimizerConfig()
    return _global_batch(dep, tgt, dt_max, cfg, k, [restart])[0]


def _perturbed(times, free, n, dep_a, tgt_a, k, local, tol=_SHOOT_TOL):
    dvs = np.zeros(3 * n)
    total, miss, vres, period, status = K.perturbed_transfer(
        np.ascontiguousarray(times, dtype=float), np.ascontiguousarray(free, dtype=float),
        n, dep_a, tgt_a, k.mu, k.j2, k.re, tol, local, dvs, False, np.empty((3, 3)), np.empty(3),
    )
    return total, miss, vres, period, status, dvs.reshape(n, 3)


def _local_components(times, impulses, dep_a, k):
    """Express inertial free impulses in each burn's (radial, transverse, normal) frame."""
    el = dep_a.copy()
    t_prev = 0.0
    out = np.empty_like(impulses)
    for j, (t, dv) in enumerate(zip(times, impulses)):
        el[3:] = K.j2_advance(*el, t - t_prev, k.mu, k.j2, k.re)
        s = np.array(K.el2cart(*el, k.mu))
        r, v = s[:3], s[3:]
        rh = r / np.linalg.norm(r)
        nh = np.cross(r, v)
        nh /= np.linalg.norm(nh)
        out[j] = [dv @ rh, dv @ np.cross(nh, rh), dv @ nh]
        *el6, st = K.cart2el(*r, *(v + dv), k.mu)
        if st != K.OK:
            raise ValueError("impulse sequence leaves the elliptic regime")
        el = np.array(el6)
        t_prev = t
    return out


def refine_perturbed(
    init: TransferSolution,
    dep: OrbitalElements,
    tgt: OrbitalElements,
    dt_max: float,
    cfg: OptimizerConfig | None = None,
    k: PhysicalConstants = EARTH,
) -> TransferSolution:
    """Local refinement of a two-body-terminal solution under full secular J2.

    Free variables are all maneuver epochs and the free impulses. The
    terminal leg is kept within one revolution of the pre-terminal chaser
    orbit.

    Raises
    ------
    RefinementError
        If no iterate satisfies the terminal tolerances.
    """
    cfg = cfg or OptimizerConfig(n_impulses=len(init.maneuver_times))
    n = len(init.maneuver_times)
    nf = 3 * (n - 2)
    dep_a, tgt_a = _aligned(dep, tgt, k)
    local = cfg.local_frame
    tscale = _TSCALE
    grad = np.empty(n + nf)
    pgrad = np.empty(n + nf)
    last = {}

    def evaluate(z):
        key = z.tobytes()
        if last.get("key") != key:
            f, period, status = K.refine_objective(
                np.ascontiguousarray(z, dtype=float), n, dep_a, tgt_a, k.mu, k.j2, k.re,
                _SHOOT_TOL, local, tscale, _SOFT, _FD_STEP, _CENTRAL, grad, pgrad,
            )
            last.update(key=key, f=f, period=period, grad=grad.copy(), pgrad=pgrad.copy())
        return last

    def objective(z):
        e = evaluate(z)
        return e["f"], e["grad"]

    leg_row = np.zeros(n + nf)
    leg_row[n - 1], leg_row[n - 2] = 1.0, -1.0

    def cap(z):
        e = evaluate(z)
        leg = (z[n - 1] - z[n - 2]) * tscale
        return np.array([e["period"] - leg, leg - _MIN_LEG]) / tscale

    def cap_jac(z):
        e = evaluate(z)
        return np.vstack([(e["pgrad"] - leg_row * tscale) / tscale, leg_row])

    ordering = np.zeros((n - 1, n + nf))
    for j in range(n - 1):
        ordering[j, j] = -1.0
        ordering[j, j + 1] = 1.0
    constraints = [
        {"type": "ineq", "fun": lambda z: ordering @ z, "jac": lambda z: ordering},
        {"type": "ineq", "fun": cap, "jac": cap_jac},
    ]
    wide = max(3.0 * cfg.dv_bound, 1000.0)
    bounds = [(0.0, dt_max / tscale)] * n + [(-wide, wide)] * nf

    def solution(z):
        t, free = z[:n] * tscale, z[n:]
        t = np.clip(t, 0.0, dt_max)
        total, miss, vres, period, status, dvs = _perturbed(t, free, n, dep_a, tgt_a, k, local)
        leg = t[-1] - t[-2]
        ok = status == K.OK and 0 < leg <= period * (1 + 1e-12) and np.all(np.diff(t) >= 0)
        sol = TransferSolution(t, dvs, float(np.linalg.norm(dvs, axis=1).sum()) if ok else math.inf,
                               float(miss), float(vres), FULLY_PERTURBED, seed=init.seed)
        return sol, ok

    if init.design is not None and len(init.design) == n + nf:
        free0 = np.asarray(init.design[n:], dtype=float)
    elif local:
        free0 = _local_components(init.maneuver_times[: n - 2], init.impulses[: n - 2], dep_a, k).ravel()
    else:
        free0 = init.impulses[: n - 2].ravel()
    z0 = np.r_[init.maneuver_times / tscale, free0]
    start, start_ok = solution(z0)
    try:
        with warnings.catch_warnings():
            # clipped line-search steps are expected near the epoch bounds
            warnings.filterwarnings("ignore", message="Values in x were outside bounds")
            res = minimize(objective, z0, jac=True, method="SLSQP", bounds=bounds,
                           constraints=constraints, options={"maxiter": 200, "ftol": 1e-9})
        z = res.x
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
        log.debug("SLSQP aborted: %s", exc)
        z = z0
    final, final_ok = solution(z)
    candidates = [s for s, ok in ((final, final_ok), (start, start_ok))
                  if ok and s.meets(cfg.eps_r, cfg.eps_v)]
    if not candidates:
        best = min((final, start), key=lambda s: s.pos_residual)
        raise RefinementError(
            f"terminal constraints not met (pos {best.pos_residual:.3g} m)", solution=best
        )
    return min(candidates, key=lambda s: s.total_dv)


def _pick_best(solutions):
    # lowest dv, ties to the lowest restart index
    return min(solutions, key=lambda s: (s.total_dv, s.seed if s.seed is not None else 0))


def optimize_transfer(
    dep: OrbitalElements,
    tgt: OrbitalElements,
    dt_max: float,
    cfg: OptimizerConfig | None = None,
    k: PhysicalConstants = EARTH,
    *,
    return_all: bool = False,
):
    """Best feasible fully perturbed transfer over ``cfg.restarts`` restarts.

    With ``return_all`` the per-restart outcomes (solution or ``None`` for a
    failed refinement) are returned alongside the best one.

    Raises
    ------
    InfeasibleTransferError
        If every restart fails to refine.
    """
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    cfg = cfg or OptimizerConfig()
    ids = list(range(cfg.restarts))
    outcomes = []
    failures = []
    chunk = 25
    for s in range(0, len(ids), chunk):
        for init in _global_batch(dep, tgt, dt_max, cfg, k, ids[s:s + chunk]):
            try:
                outcomes.append(refine_perturbed(init, dep, tgt, dt_max, cfg, k))
            except RefinementError as exc:
                log.debug("restart %s: %s", init.seed, exc)
                outcomes.append(None)
                if exc.solution is not None:
                    failures.append(exc.solution)
    feasible = [s for s in outcomes if s is not None]
    if not feasible:
        best = min(failures, key=lambda s: s.pos_residual) if failures else None
        raise InfeasibleTransferError(
            f"all {cfg.restarts} restarts failed to meet the terminal tolerances", best=best
        )
    best = _pick_best(feasible)
    return (best, outcomes) if return_all else best


def simulate(
    times, impulses, dep: OrbitalElements, tgt: OrbitalElements, k: PhysicalConstants = EARTH
) -> tuple[float, float, float]:
    """Re-fly a maneuver plan under secular J2 with the public orbit API.

    Independent of the compiled optimizer path; returns
    (total_dv, pos_residual, vel_residual).
    """
    from .orbits import apply_impulse, cartesian_to_elements, elements_to_cartesian, propagate_j2

    times = np.asarray(times, dtype=float)
    impulses = np.asarray(impulses, dtype=float).reshape(-1, 3)
    el = dep
    t_prev = dep.epoch
    for t, dv in zip(times, impulses):
        el = propagate_j2(el, dep.epoch + t - t_prev, k)
        t_prev = dep.epoch + t
        s = apply_impulse(elements_to_cartesian(el, k), dv)
        el = cartesian_to_elements(s, k)
    chaser = elements_to_cartesian(el, k)
    target = elements_to_cartesian(propagate_to(tgt, t_prev, k), k)
    return (
        float(np.linalg.norm(impulses, axis=1).sum()),
        float(np.linalg.norm(chaser.r - target.r)),
        float(np.linalg.norm(chaser.v - target.v)),
    )


def config_dict(cfg: OptimizerConfig) -> dict:
    return asdict(cfg)
