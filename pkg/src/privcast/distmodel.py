"""Normal model of shortest-path lengths and closed-form estimators for its parameters.

The distance distribution of a k-growing graph is summarised by a normal
``N(mu, sigma^2)``; ``mu`` and ``sigma`` are in turn predicted from ``(n, k)``
by small nonlinear regression models (``M1``..``M4`` for ``mu``, ``S`` for
``sigma``).  The regression models follow the scikit-learn estimator API.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import (
    DegenerateFitError,
    FitFailure,
    InfeasibleDiscretizationError,
    ParameterError,
    check_counts,
    check_nk,
    check_real,
)
from .graph import DistanceHistogram, generate_k_growing, pooled_histogram

MODEL_PARAMS = {
    "M1": ("alpha", "beta", "gamma", "delta", "epsilon"),
    "M2": ("alpha", "beta", "gamma", "delta", "eta", "zeta", "epsilon"),
    "M3": ("alpha", "beta", "gamma", "epsilon"),
    "M4": ("alpha", "beta", "gamma", "delta", "zeta", "eta", "theta", "iota",
           "kappa", "lambda", "nu", "xi"),
    "S": ("a", "b", "c", "d", "e"),
}

# constants that sit inside a logarithm or a power base must stay positive
_POSITIVE = {
    "M1": {"beta"},
    "M2": {"beta", "eta"},
    "M3": {"beta"},
    "M4": {"beta", "iota", "kappa", "xi"},
    "S": {"b"},
}

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma: float

    def __post_init__(self):
        check_real(self.mu, "mu")
        check_real(self.sigma, "sigma", low=0.0, low_open=True)


@dataclass(frozen=True)
class ModelConstants:
    """Named constants of one estimator model, plus optional fit statistics."""

    model_id: str
    constants: dict
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.model_id not in MODEL_PARAMS:
            raise ParameterError(f"unknown model {self.model_id!r}")
        names = MODEL_PARAMS[self.model_id]
        if set(self.constants) != set(names):
            raise ParameterError(
                f"{self.model_id} needs constants {names}, got {tuple(self.constants)}"
            )
        object.__setattr__(self, "constants", {k: float(self.constants[k]) for k in names})

    @property
    def vector(self):
        return np.array([self.constants[k] for k in MODEL_PARAMS[self.model_id]])

    @classmethod
    def from_vector(cls, model_id, values, stats=None):
        names = MODEL_PARAMS[model_id]
        if len(values) != len(names):
            raise ParameterError(f"{model_id} has {len(names)} constants, got {len(values)}")
        return cls(model_id, dict(zip(names, (float(v) for v in values))), stats or {})

    def to_json(self):
        payload = {"model": self.model_id, "constants": self.constants}
        if self.stats:
            payload["stats"] = self.stats
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return cls(payload["model"], payload["constants"], payload.get("stats", {}))


DEFAULT_M2 = ModelConstants("M2", {
    "alpha": 0.595, "beta": 2.135, "gamma": 0.314, "delta": 0.341,
    "eta": 1.626, "zeta": 0.241, "epsilon": -0.224,
})
DEFAULT_S = ModelConstants("S", {"a": 0.0345, "b": 0.925, "c": 1.222, "d": 0.301, "e": 0.189})


def _m1(p, n, k):
    alpha, beta, gamma, delta, eps = p
    return alpha * np.log(beta * n) + gamma * np.exp(-delta * k) + eps


def _m2(p, n, k):
    alpha, beta, gamma, delta, eta, zeta, eps = p
    decay = np.exp(-gamma * k)
    return alpha * np.log(beta * n) * decay + delta * np.log(eta * n) + zeta * decay + eps


def _m3(p, n, k):
    alpha, beta, gamma, eps = p
    return alpha * np.log(beta * n) * np.exp(-gamma * k) + eps


def _m4(p, n, k):
    alpha, beta, gamma, delta, zeta, eta, theta, iota, kappa, lam, nu, xi = p
    decay = np.exp(-gamma * k)
    # (kappa n)^(lambda n) overflows for moderate n; go through log space
    log_power = np.clip(lam * n * np.log(kappa * n), -745.0, 700.0)
    return (alpha * np.log(beta * n) * decay
            - alpha * delta * k * decay
            + zeta * np.exp(-eta * k)
            + theta * np.log(iota * n) * np.exp(-log_power)
            + nu * np.log(xi * n))


_MODEL_FUNCS = {"M1": _m1, "M2": _m2, "M3": _m3, "M4": _m4, "S": _m1}


def evaluate_model(constants, n, k):
    """Vectorised evaluation of a model at ``(n, k)``."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = _MODEL_FUNCS[constants.model_id](constants.vector, n, k)
    return out


def estimate_mu(n, k, c=DEFAULT_M2):
    n, k = check_nk(n, k)
    return float(evaluate_model(c, n, k))


def estimate_sigma(n, k, c=DEFAULT_S):
    n, k = check_nk(n, k)
    return float(evaluate_model(c, n, k))


def _distance_weights(h):
    counts = h.counts if isinstance(h, DistanceHistogram) else check_counts(h)
    w = np.asarray(counts, dtype=float).copy()
    w[0] = 0.0  # self-pairs carry no path-length information
    return np.arange(len(w), dtype=float), w


def fit_normal(h):
    """Maximum-likelihood normal over pooled distances, self-pairs excluded."""
    x, w = _distance_weights(h)
    if np.count_nonzero(w) < 2:
        raise DegenerateFitError("need at least two distinct positive distances")
    mu = float(np.average(x, weights=w))
    sigma = float(math.sqrt(np.average((x - mu) ** 2, weights=w)))
    return NormalParams(mu, sigma)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability mass over hop distances ``0..t_max``."""

    mass: np.ndarray
    n: int
    k: int
    epsilon: float

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.ndim != 1 or mass.size == 0 or np.any(mass < 0):
            raise ParameterError("mass must be a non-negative vector")
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ParameterError(f"mass sums to {mass.sum()!r}")
        object.__setattr__(self, "mass", mass)

    @property
    def t_max(self):
        return len(self.mass) - 1

    def __len__(self):
        return len(self.mass)

    def padded(self, length):
        """Same distribution with trailing zero mass up to ``length`` entries."""
        if length <= len(self.mass):
            return self
        return DiscreteDistribution(np.pad(self.mass, (0, length - len(self.mass))),
                                    self.n, self.k, self.epsilon)


def closed_form_head(n, k):
    """Exact masses at distance 0 (the node itself) and 1 (average degree over n)."""
    return 1.0 / n, k * (2 * n - k - 1) / n ** 2


def discretize(p, n, k, epsilon=DEFAULT_EPSILON):
    """Point-wise normal discretisation with exact masses at distances 0 and 1."""
    n, k = check_nk(n, k)
    epsilon = check_real(epsilon, "epsilon", low=0.0, high=0.1, low_open=True)
    m0, m1 = closed_form_head(n, k)
    if m0 + m1 >= 1.0:
        raise InfeasibleDiscretizationError(f"n={n}, k={k} leaves no mass beyond distance 1")
    dist = stats.norm(p.mu, p.sigma)
    t_max = max(2, math.ceil(dist.isf(epsilon)))
    while t_max > 2 and dist.sf(t_max - 1) <= epsilon:
        t_max -= 1
    while dist.sf(t_max) > epsilon:
        t_max += 1
    pdf = dist.pdf(np.arange(2, t_max + 1))
    total = pdf.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise InfeasibleDiscretizationError("normal density vanishes beyond distance 1")
    mass = np.empty(t_max + 1)
    mass[0], mass[1] = m0, m1
    mass[2:] = pdf * ((1.0 - m0 - m1) / total)
    return DiscreteDistribution(mass, n, k, epsilon)


class ShortestPathNormal(BaseEstimator):
    """Fit a normal to a distance histogram and discretise it for ``(n, k)``.

    ``fit`` accepts a :class:`DistanceHistogram` or a raw count vector.
    """

    def __init__(self, epsilon=DEFAULT_EPSILON):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        params = fit_normal(X)
        self.mu_ = params.mu
        self.sigma_ = params.sigma
        return self

    def discretize(self, n, k):
        check_is_fitted(self, ("mu_", "sigma_"))
        return discretize(NormalParams(self.mu_, self.sigma_), n, k, self.epsilon)


@dataclass(frozen=True)
class FitDataset:
    """Rows of ``(n, k, mu_hat, sigma_hat)`` measured on generated graphs."""

    n: np.ndarray
    k: np.ndarray
    mu_hat: np.ndarray
    sigma_hat: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float) for c in (self.n, self.k, self.mu_hat, self.sigma_hat)]
        if len({len(c) for c in cols}) != 1:
            raise ParameterError("columns differ in length")
        n, k, _, s = cols
        if np.any(n < 2) or np.any(k < 1) or np.any(s <= 0):
            raise ParameterError("rows need n >= 2, k >= 1 and sigma_hat > 0")
        for name, col in zip(("n", "k", "mu_hat", "sigma_hat"), cols):
            object.__setattr__(self, name, col)

    def __len__(self):
        return len(self.n)

    @property
    def X(self):
        return np.column_stack([self.n, self.k])

    def to_csv(self):
        rows = ["n,k,mu_hat,sigma_hat"]
        rows += [f"{int(n)},{int(k)},{float(m)!r},{float(s)!r}"
                 for n, k, m, s in zip(self.n, self.k, self.mu_hat, self.sigma_hat)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text):
        data = np.array([[float(x) for x in r.split(",")] for r in text.strip().splitlines()[1:]])
        data = data.reshape(-1, 4)
        return cls(*data.T)


def build_fit_dataset(grid, seeds, sample_sources="auto"):
    """Generate one graph per ``(n, k, seed)`` and record its fitted normal."""
    rows = []
    for n, k in grid:
        for seed in seeds:
            g = generate_k_growing(n, k, seed)
            p = fit_normal(pooled_histogram(g, sample_sources, seed=seed))
            rows.append((n, k, p.mu, p.sigma))
    if not rows:
        raise ParameterError("empty grid")
    return FitDataset(*np.array(rows, dtype=float).T)


class DistanceModelRegressor(RegressorMixin, BaseEstimator):
    """Nonlinear least-squares fit of one of the ``(n, k)`` estimator models.

    ``X`` has two columns ``(n, k)``; ``y`` is the fitted ``mu`` (or ``sigma``
    for model ``S``).  Optimisation starts from ``init`` when given, from the
    default constants for ``M2``/``S``, and from all ones otherwise.
    """

    def __init__(self, model="M2", init=None, max_nfev=20000, tol=1e-12):
        self.model = model
        self.init = init
        self.max_nfev = max_nfev
        self.tol = tol

    def _start(self):
        if self.init is not None:
            start = self.init.vector if isinstance(self.init, ModelConstants) else self.init
            return np.asarray(start, dtype=float)
        if self.model == "M2":
            return DEFAULT_M2.vector
        if self.model == "S":
            return DEFAULT_S.vector
        return np.ones(len(MODEL_PARAMS[self.model]))

    def fit(self, X, y):
        if self.model not in MODEL_PARAMS:
            raise ParameterError(f"unknown model {self.model!r}")
        X, y = check_X_y(X, y, dtype=float)
        if X.shape[1] != 2:
            raise ParameterError("X must have columns (n, k)")
        names = MODEL_PARAMS[self.model]
        start = self._start()
        if len(start) != len(names):
            raise ParameterError(f"{self.model} needs {len(names)} initial values")
        if len(y) < 2 * len(names):
            raise FitFailure(
                f"{len(y)} rows cannot determine {len(names)} constants",
                constants=ModelConstants.from_vector(self.model, start),
            )
        lower = np.array([1e-12 if nm in _POSITIVE[self.model] else -np.inf for nm in names])
        start = np.maximum(start, lower)
        func = _MODEL_FUNCS[self.model]
        n, k = X[:, 0], X[:, 1]

        def residual(p):
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                r = func(p, n, k) - y
            return np.nan_to_num(r, nan=1e6, posinf=1e6, neginf=-1e6)

        res = optimize.least_squares(
            residual, start, bounds=(lower, np.full(len(names), np.inf)),
            method="trf", x_scale="jac", max_nfev=self.max_nfev,
            xtol=self.tol, ftol=self.tol, gtol=self.tol,
        )
        r = res.fun
        fit_stats = {
            "rmse": float(np.sqrt(np.mean(r ** 2))),
            "residual_std": float(np.std(r, ddof=0)),
            "max_abs_residual": float(np.max(np.abs(r))),
            "nfev": int(res.nfev),
            "status": int(res.status),
        }
        best = ModelConstants.from_vector(self.model, res.x, fit_stats)
        if not res.success or not np.all(np.isfinite(res.x)):
            raise FitFailure(f"least squares did not converge: {res.message}",
                             constants=best, residual=fit_stats["rmse"])
        self.constants_ = best
        self.residual_std_ = fit_stats["residual_std"]
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "constants_")
        X = check_array(X, dtype=float)
        return evaluate_model(self.constants_, X[:, 0], X[:, 1])


def fit_model_constants(data, model_id, init=None, max_nfev=20000):
    """Least-squares constants for ``model_id`` on ``data`` (sigma column for ``S``)."""
    if model_id not in MODEL_PARAMS:
        raise ParameterError(f"unknown model {model_id!r}")
    y = data.sigma_hat if model_id == "S" else data.mu_hat
    reg = DistanceModelRegressor(model=model_id, init=init, max_nfev=max_nfev).fit(data.X, y)
    return reg.constants_


@dataclass(frozen=True)
class BiasReport:
    """Residuals ``predicted - observed`` per dataset row with summary statistics."""

    n: np.ndarray
    k: np.ndarray
    observed: np.ndarray
    predicted: np.ndarray

    @property
    def residuals(self):
        return self.predicted - self.observed

    @property
    def quartiles(self):
        return tuple(float(v) for v in np.percentile(self.residuals, [25, 50, 75]))

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.residuals)))

    @property
    def median_abs(self):
        return float(np.median(np.abs(self.residuals)))

    def to_csv(self):
        rows = ["n,k,observed,predicted,residual"]
        for n, k, obs, pred in zip(self.n, self.k, self.observed, self.predicted):
            rows.append(f"{int(n)},{int(k)},{float(obs)!r},{float(pred)!r},{float(pred - obs)!r}")
        return "\n".join(rows) + "\n"


def model_bias_report(data, c):
    if len(data) == 0:
        raise ParameterError("empty dataset")
    observed = data.sigma_hat if c.model_id == "S" else data.mu_hat
    return BiasReport(data.n, data.k, observed, evaluate_model(c, data.n, data.k))


def _weibull_weighted_fit(x, w):
    def nll(theta):
        shape, scale = np.exp(theta)
        return -np.sum(w * stats.weibull_min.logpdf(x, shape, scale=scale))

    mean = np.average(x, weights=w)
    res = optimize.minimize(nll, x0=np.log([3.0, mean]), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    return np.exp(res.x)


def compare_distributions(h):
    """Point-wise squared error of candidate models against the empirical pmf.

    Each candidate is evaluated at the observed distances (self-pairs
    excluded) and renormalised over them before scoring.  Lower is better.
    """
    x_all, w_all = _distance_weights(h)
    keep = x_all >= 1
    x, w = x_all[keep], w_all[keep]
    last = np.nonzero(w)[0]
    if len(last) < 2:
        raise DegenerateFitError("need at least two distinct positive distances")
    x, w = x[: last[-1] + 1], w[: last[-1] + 1]
    emp = w / w.sum()
    mean = float(np.average(x, weights=w))
    var = float(np.average((x - mean) ** 2, weights=w))
    sigma = math.sqrt(var)

    shape, scale = _weibull_weighted_fit(x[w > 0], w[w > 0])
    p_binom = min(max(1.0 - var / mean, 1e-6), 1.0)
    n_binom = math.ceil(mean / p_binom)
    candidates = {
        "normal": stats.norm.pdf(x, mean, sigma),
        "weibull": stats.weibull_min.pdf(x, shape, scale=scale),
        "poisson": stats.poisson.pmf(x, mean),
        "geometric": stats.geom.pmf(x, 1.0 / mean),
        "binomial": stats.binom.pmf(x, n_binom, p_binom),
    }
    scores = {}
    for name, values in candidates.items():
        total = values.sum()
        model = values / total if total > 0 else values
        scores[name] = float(np.sum((model - emp) ** 2))
    return scores

