"""Estimating the dephasing rate, relaxation rate and drive amplitude from
tank phase (and optionally amplitude) curves.

The three parameters are fitted in log space by a damped Gauss-Newton
(Levenberg-Marquardt) iteration on the weighted residuals. The Jacobian is
built from central finite differences, so the fit stays honest across the
seams of the readout regime dispatcher.

Residuals: ``(chi_model - chi) / sigma`` for the phase (sigma in radians),
and ``(v_model / v - 1) / sigma`` for the amplitude, i.e. the same sigma read
as a relative uncertainty.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import readout
from .params import HBAR, TankParams, TlsParams

PARAM_NAMES = ("gamma_phi", "gamma_z", "f")
KINDS = ("flux", "omega", "power")
FD_STEP = 1e-6
COST_RTOL = 1e-10
GRAD_TOL = 1e-8
MAX_ITER = 500
CONDITION_LIMIT = 1e8
MIN_POINTS = 8


class RankDeficiencyError(ValueError):
    """The data do not constrain every parameter direction."""

    def __init__(self, message: str, eigenvalues, directions):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.directions = directions


@dataclass(frozen=True)
class MeasuredCurve:
    """Tank readout sampled along one abscissa.

    ``kind`` is ``"flux"`` (x = f_X), ``"omega"`` (x = probe frequency in
    rad/s) or ``"power"`` (x = relative drive amplitude; the fitted ``f`` is
    the drive amplitude at x = 1).
    """

    kind: str
    x: np.ndarray
    chi: np.ndarray | None = None
    v_t: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points")
        d = np.diff(x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("abscissa must be strictly monotone")
        if self.chi is None and self.v_t is None:
            raise ValueError("need chi and/or v_t")
        for name in ("chi", "v_t", "sigma"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != x.shape or not np.all(np.isfinite(v)):
                    raise ValueError(f"{name} must be finite with one value per point")
                object.__setattr__(self, name, v)
        if not np.all(np.isfinite(x)):
            raise ValueError("abscissa must be finite")
        if self.sigma is not None and np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        if self.v_t is not None and np.any(self.v_t <= 0):
            raise ValueError("v_t must be positive")

    def sorted(self) -> "MeasuredCurve":
        """Same data in ascending abscissa order."""
        if self.x[0] < self.x[-1]:
            return self
        idx = np.argsort(self.x)
        pick = (lambda a: None if a is None else a[idx])
        return MeasuredCurve(self.kind, self.x[idx], pick(self.chi), pick(self.v_t), pick(self.sigma))

    @classmethod
    def from_csv(cls, path, kind: str = "flux") -> "MeasuredCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no data rows")
        cols = set(rows[0])
        if not {"x", "chi"} <= cols or cols - {"x", "chi", "v_t", "sigma"}:
            raise ValueError(f"{path}: expected columns x,chi[,v_t][,sigma], got {sorted(cols)}")
        col = (lambda k: np.array([float(r[k]) for r in rows]) if k in cols else None)
        return cls(kind, col("x"), col("chi"), col("v_t"), col("sigma"))

    def to_csv(self, path) -> None:
        names = ["x", "chi"] + [k for k in ("v_t", "sigma") if getattr(self, k) is not None]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for i in range(self.x.size):
                w.writerow([repr(float(getattr(self, k)[i])) for k in names])


@dataclass(frozen=True)
class CurveSpec:
    """Everything held fixed while fitting.

    ``tls`` supplies delta, temperature and (for non-flux curves) epsilon; its
    rates are ignored. For flux curves ``e_j`` sets epsilon = E_J f_X / hbar.
    """

    tls: TlsParams
    tank: TankParams
    omega: float | None = None
    detuning: float = 0.0
    e_j: float | None = None
    convention: str = "bloch"
    policy: readout.RegimePolicy = field(default_factory=readout.RegimePolicy)

    @property
    def probe(self) -> float:
        return self.tank.omega_t if self.omega is None else self.omega


def forward_model(params: dict, spec: CurveSpec, kind: str, x) -> tuple[np.ndarray, np.ndarray]:
    """Predicted (chi, V_T) at each abscissa value."""
    gam, gz, f = (float(params[k]) for k in PARAM_NAMES)
    base = spec.tls.with_rates(gam, gz)
    x = np.asarray(x, dtype=float)
    chi = np.empty(x.size)
    v_t = np.empty(x.size)
    for i, xi in enumerate(x):
        tls, omega, amp = base, spec.probe, f
        if kind == "flux":
            if spec.e_j is None:
                raise ValueError("flux curves need e_j")
            tls = base.with_bias(spec.e_j * xi / HBAR)
        elif kind == "omega":
            omega = xi
        else:
            amp = f * xi
        pt = readout.readout(tls, spec.tank, amp, spec.detuning, omega, spec.convention, spec.policy)
        chi[i], v_t[i] = pt.chi, pt.v_t
    return chi, v_t


@dataclass
class FitResult:
    estimates: dict
    std_errors: dict
    cost: float
    residual_norm: float
    iterations: int
    accepted: int
    gradient_norm: float
    converged: bool
    message: str
    covariance: np.ndarray
    hessian_eigenvalues: np.ndarray
    cost_history: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "estimates": self.estimates,
            "std_errors": self.std_errors,
            "cost": self.cost,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "accepted_steps": self.accepted,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "message": self.message,
            "log_space_covariance": self.covariance.tolist(),
            "hessian_eigenvalues": self.hessian_eigenvalues.tolist(),
        }


class _Problem:
    def __init__(self, data: MeasuredCurve, spec: CurveSpec, workers: int = 1):
        self.data = data.sorted()
        self.spec = spec
        self.workers = workers
        d = self.data
        self.sigma = d.sigma if d.sigma is not None else np.ones(d.x.size)
        parts = []
        if d.chi is not None:
            parts.append(d.chi / self.sigma)
        if d.v_t is not None:
            parts.append(1.0 / self.sigma)
        # cost normalisation that scales with sigma^-2 like the cost itself
        scale = float(sum(np.sum(p ** 2) for p in parts))
        self.scale = scale if scale > 0 else 1.0

    def residuals(self, theta) -> np.ndarray:
        params = dict(zip(PARAM_NAMES, np.exp(theta)))
        chi, v_t = forward_model(params, self.spec, self.data.kind, self.data.x)
        out = []
        if self.data.chi is not None:
            out.append((chi - self.data.chi) / self.sigma)
        if self.data.v_t is not None:
            out.append((v_t / self.data.v_t - 1.0) / self.sigma)
        return np.concatenate(out)

    def jacobian(self, theta, method: str = "central") -> np.ndarray:
        """d residuals / d log(param), by central (or 5-point) differences
        with relative parameter step FD_STEP."""
        h = FD_STEP
        if method == "central":
            offsets = [(+1, 0.5), (-1, -0.5)]
        elif method == "five_point":
            offsets = [(+2, -1 / 12), (+1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)]
        else:
            raise ValueError(method)
        jobs = []
        for j in range(theta.size):
            for k, _ in offsets:
                t = theta.copy()
                t[j] += k * h
                jobs.append(t)
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                res = list(pool.map(self.residuals, jobs))
        else:
            res = [self.residuals(t) for t in jobs]
        n_off = len(offsets)
        cols = []
        for j in range(theta.size):
            acc = sum(w * res[j * n_off + i] for i, (_, w) in enumerate(offsets))
            cols.append(acc / h)
        return np.column_stack(cols)


def _check_bounds(init: dict, bounds: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi, th = [], [], []
    for k in PARAM_NAMES:
        if k not in init or k not in bounds:
            raise ValueError(f"init and bounds must both give {k!r}")
        b_lo, b_hi = (float(v) for v in bounds[k])
        v = float(init[k])
        if not (0 < b_lo < b_hi):
            raise ValueError(f"bounds for {k} must be positive and increasing")
        if not b_lo <= v <= b_hi:
            raise ValueError(f"init {k}={v:g} outside bounds [{b_lo:g}, {b_hi:g}]")
        lo.append(math.log(b_lo))
        hi.append(math.log(b_hi))
        th.append(math.log(v))
    return np.array(th), np.array(lo), np.array(hi)


def fit_rates(data: MeasuredCurve, init: dict, bounds: dict, spec: CurveSpec, *,
              max_iter: int = MAX_ITER, workers: int = 1, check_rank: bool = True) -> FitResult:
    """Weighted least squares for (gamma_phi, gamma_z, f), all in rad/s.

    ``bounds`` maps each name to ``(low, high)``. Steps leaving the box are
    projected back onto it; a step is accepted only if it lowers the cost,
    so the accepted cost sequence is non-increasing. Stops when an accepted
    step lowers the cost by less than COST_RTOL relative, when the gradient
    of the normalised cost drops below GRAD_TOL, or after ``max_iter``
    iterations (returned with ``converged=False``).
    """
    prob = _Problem(data, spec, workers)
    theta, lo, hi = _check_bounds(init, bounds)
    r = prob.residuals(theta)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    message = f"no convergence in {max_iter} iterations; returning best point"
    it = 0
    accepted = 0
    J = prob.jacobian(theta)
    grad = 2 * J.T @ r / prob.scale
    while it < max_iter:
        if np.linalg.norm(grad) < GRAD_TOL:
            converged, message = True, "gradient norm below tolerance"
            break
        it += 1
        jtj = J.T @ J
        rhs = -J.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        step_taken = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), rhs)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = np.clip(theta + step, lo, hi)
            if np.allclose(trial, theta, rtol=0, atol=1e-15):
                break
            r_new = prob.residuals(trial)
            c_new = float(r_new @ r_new)
            if c_new < cost:
                step_taken = True
                break
            lam *= 4
        if not step_taken:
            converged, message = True, "no further decrease possible"
            break
        decrease = (cost - c_new) / max(cost, 1e-300)
        theta, r, cost = trial, r_new, c_new
        history.append(cost)
        accepted += 1
        lam = max(lam / 3, 1e-12)
        J = prob.jacobian(theta)
        grad = 2 * J.T @ r / prob.scale
        if decrease < COST_RTOL:
            converged, message = True, "relative cost decrease below tolerance"
            break

    jtj = J.T @ J
    evals, evecs = np.linalg.eigh(jtj)
    top = float(evals[-1])
    if check_rank:
        flat = [i for i, ev in enumerate(evals) if top <= 0 or ev <= top / CONDITION_LIMIT]
        if flat:
            dirs = [{name: float(evecs[k, i]) for k, name in enumerate(PARAM_NAMES)} for i in flat]
            desc = "; ".join(" + ".join(f"{c:+.3f}*log({n})" for n, c in d.items() if abs(c) > 1e-3)
                             for d in dirs)
            raise RankDeficiencyError(
                f"data do not constrain {len(flat)} direction(s) (Hessian condition number "
                f"> {CONDITION_LIMIT:g}): {desc}", evals, dirs)
    dof = max(r.size - theta.size, 1)
    s2 = 1.0 if data.sigma is not None else cost / dof
    try:
        cov = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov = np.full((theta.size, theta.size), np.nan)
    est = dict(zip(PARAM_NAMES, (float(v) for v in np.exp(theta))))
    se = {k: float(est[k] * math.sqrt(max(cov[i, i], 0.0))) for i, k in enumerate(PARAM_NAMES)}
    return FitResult(est, se, cost, float(math.sqrt(cost)), it, accepted,
                     float(np.linalg.norm(grad)), converged, message, cov, 2 * evals, history)


def gradient_check(data: MeasuredCurve, params: dict, spec: CurveSpec) -> float:
    """Relative difference between the central and 5-point cost gradients."""
    prob = _Problem(data, spec)
    theta = np.log([float(params[k]) for k in PARAM_NAMES])
    r = prob.residuals(theta)
    g2 = prob.jacobian(theta, "central").T @ r
    g5 = prob.jacobian(theta, "five_point").T @ r
    return float(np.linalg.norm(g2 - g5) / max(np.linalg.norm(g5), 1e-300))
