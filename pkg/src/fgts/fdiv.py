"""f-divergences used as training objectives.

Only the two divergences needed by the generators are provided: KL with
``f(x) = x log x`` and chi-squared with ``f(x) = (x - 1)^2``.  Both carry the
curvature constants ``(a, b)`` of the lower bound
``f''(x + 1) >= a / (1 + b x)^3`` for ``x >= -1``.

Argument order convention: ``divergence_discrete(spec, p, q)`` returns the
divergence of ``q`` from the base measure ``p``, i.e. ``sum_i p_i f(q_i / p_i)``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_prob_vector

CHI2_CONJUGATE_FLOOR = -2.0


@dataclass(frozen=True)
class FDivergenceSpec:
    """An f-divergence with its convex conjugate and curvature constants."""

    name: str
    a: float
    b: float

    def __post_init__(self):
        if self.name not in ("kl", "chi2"):
            raise ValueError(f"unknown divergence {self.name!r}; expected 'kl' or 'chi2'")
        if not self.a > 0 or not 0 < self.b < 1:
            raise ValueError("curvature constants need a > 0 and 0 < b < 1")

    def f(self, x):
        return eval_f(self, x)

    def conjugate(self, y):
        return eval_conjugate(self, y)

    def f_prime(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.name == "kl":
            return np.log(x) + 1.0
        return 2.0 * (x - 1.0)

    def f_second(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.name == "kl":
            return 1.0 / x
        return np.full_like(x, 2.0)


KL = FDivergenceSpec("kl", a=1.0, b=1.0 / 3.0)
CHI2 = FDivergenceSpec("chi2", a=0.25, b=0.5)

_REGISTRY = {"kl": KL, "chi2": CHI2}


def get_divergence(name):
    """Look up a divergence by config string (``"kl"`` or ``"chi2"``)."""
    if isinstance(name, FDivergenceSpec):
        return name
    try:
        return _REGISTRY[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown divergence {name!r}; expected one of {sorted(_REGISTRY)}") from None


def eval_f(spec, x):
    """Evaluate the generator function ``f`` at ``x >= 0``.

    For KL, ``f(0) = 0`` by continuous extension.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("f is only defined for x >= 0")
    if spec.name == "kl":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
    else:
        out = (x - 1.0) ** 2
    return out[()] if out.ndim == 0 else out


def eval_conjugate(spec, y):
    """Closed-form convex conjugate ``f*(y) = sup_x {x y - f(x)}``.

    KL: ``exp(y - 1)``.  Chi-squared: ``y^2 / 4 + y``, with ``y`` clamped at -2
    from below (the supremum over ``x >= 0`` is attained at ``x = 0`` there).
    """
    y = np.asarray(y, dtype=np.float64)
    if spec.name == "kl":
        out = np.exp(y - 1.0)
    else:
        yc = np.maximum(y, CHI2_CONJUGATE_FLOOR)
        out = 0.25 * yc * yc + yc
    return out[()] if out.ndim == 0 else out


def divergence_discrete(spec, p, q):
    """Divergence of ``q`` from ``p``: ``sum_i p_i f(q_i / p_i)``.

    Returns ``inf`` when ``q`` puts mass outside the support of ``p``.
    """
    p = check_prob_vector(p, "p")
    q = check_prob_vector(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    on = p > 0
    if np.any(q[~on] > 0):
        return float("inf")
    ratio = q[on] / p[on]
    return float(max(np.sum(p[on] * eval_f(spec, ratio)), 0.0))


def check_lower_bound(spec, p, q, tol=1e-12):
    """Check ``D_f(p || q) >= (a / 2) ||p - q||_1^2`` on discrete distributions.

    Returns a dict with ``lhs``, ``rhs`` and ``holds``.
    """
    lhs = divergence_discrete(spec, q, p)
    l1 = float(np.sum(np.abs(check_prob_vector(p) - check_prob_vector(q))))
    rhs = 0.5 * spec.a * l1 * l1
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs >= rhs - tol)}


def check_curvature_condition(spec, n_points=10_000, x_max=10.0, eps=1e-6):
    """Sampled check of ``f''(x + 1) >= a / (1 + b x)^3`` on ``[-1 + eps, x_max]``."""
    x = np.linspace(-1.0 + eps, x_max, n_points)
    lhs = spec.f_second(x + 1.0)
    rhs = spec.a / (1.0 + spec.b * x) ** 3
    return bool(np.all(lhs >= rhs * (1 - 1e-12)))
