"""Adversarial estimation of time-series generators.

For each forecast lag ``s`` a generator ``G_s(eta, history)`` and a critic
``H_s(history, target)`` solve

    min_G max_H  mean_{(t, s) in pairs} [ H(x_t, G(eta_t, x_t)) - f*(H(x_t, x_{t+s})) ]

where ``x_t`` is the (lag-k) history ending at ``t``.  The objective over all
lags splits into one independent min-max problem per ``s``, so each head is
trained on its own slice of pairs with its own random stream; head ``s = 1``
is the one-step generator used for iterative forecasting.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import derive_seed, rng_for
from ._validation import check_panel
from .fdiv import CHI2_CONJUGATE_FLOOR, get_divergence
from .io import load_container, save_container, write_rows
from .neural import MLP, AdamW, MLPSpec, PairCritic, Tensor, grad, init_network

logger = logging.getLogger(__name__)

LOSS_GUARD = 1e6


class TrainingError(RuntimeError):
    """Raised when adversarial training diverges or produces NaN."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class TrainConfig:
    divergence: str = "kl"
    noise_dim: int = 20
    horizon: int = 3
    lag: int = 1
    epochs: int = 200
    batch_size: int = 64
    disc_steps_per_gen_step: int = 2
    pair_budget: int = 10_000
    gen_lr: float = 1e-3
    gen_wd: float = 1e-4
    disc_lr: float = 2e-4
    disc_wd: float = 1e-4
    gen_hidden: tuple = (256, 128)
    disc_width: int = 64
    standardize: bool = True
    instance_noise: float = 1.0
    shared_heads: bool = False
    seed: int = 0

    def __post_init__(self):
        self.gen_hidden = tuple(int(h) for h in self.gen_hidden)
        get_divergence(self.divergence)
        if self.horizon < 1 or self.lag < 1:
            raise ValueError("horizon and lag must be >= 1")
        if self.noise_dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("noise_dim and batch_size must be >= 1, epochs >= 0")
        if self.pair_budget < self.batch_size:
            raise ValueError("pair_budget must be >= batch_size")
        if not self.instance_noise >= 0 or self.disc_steps_per_gen_step < 1:
            raise ValueError("instance_noise must be >= 0 and disc_steps_per_gen_step >= 1")
        if len(self.gen_hidden) < 1:
            raise ValueError("gen_hidden needs at least one layer")

    @classmethod
    def imaging_preset(cls, **overrides):
        """Settings for small panels of short image sequences: AdamW with lr = wd = 1e-4, batch 12, 500 epochs."""
        base = dict(epochs=500, batch_size=12, gen_lr=1e-4, gen_wd=1e-4, disc_lr=1e-4, disc_wd=1e-4)
        return cls(**{**base, **overrides})

    def to_dict(self):
        d = asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        return d


# ---------------------------------------------------------------------------
# pairs


@dataclass
class PairSet:
    """Training pairs ``(history ending at t, target at t + s)``.

    ``subject``, ``t`` and ``s`` are parallel integer arrays; ``weight`` makes
    every subject contribute equally at each lag (uniform for one series).
    """

    subject: np.ndarray
    t: np.ndarray
    s: np.ndarray
    lag: int = 1
    weight: np.ndarray = None
    omega_size: int = 0

    def __post_init__(self):
        self.subject = np.asarray(self.subject, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.int64)
        if self.weight is None:
            self.weight = _balanced_weights(self.subject, self.s)

    def __len__(self):
        return self.t.size

    @property
    def entries(self):
        return list(zip(self.subject.tolist(), self.t.tolist(), self.s.tolist()))

    def at_lag(self, s):
        m = self.s == s
        return PairSet(self.subject[m], self.t[m], self.s[m], self.lag, self.weight[m], self.omega_size)


def _balanced_weights(subject, s):
    w = np.ones(subject.size)
    if subject.size:
        keys = subject * (int(s.max()) + 1) + s
        _, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        w = 1.0 / counts[inv]
    return w


def enumerate_omega(lengths, k, S):
    """All admissible ``(subject, t, s)``: ``t >= k - 1``, ``t + s <= T_i``, ``1 <= s <= S``."""
    subj, ts, ss = [], [], []
    for i, T in enumerate(lengths):
        for s in range(1, S + 1):
            t = np.arange(k - 1, T - s + 1)
            subj.append(np.full(t.size, i))
            ts.append(t)
            ss.append(np.full(t.size, s))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
    return cat(subj).astype(np.int64), cat(ts).astype(np.int64), cat(ss).astype(np.int64)


def build_pair_set(data, k, S, pair_budget=None, seed=0):
    """Sample up to ``pair_budget`` pairs without replacement from the pair index set.

    A single series is sampled uniformly; a panel is sampled subject by
    subject so every subject gets an equal share of the budget.
    """
    subjects = check_panel(data)
    lengths = [x.shape[0] - 1 for x in subjects]
    if min(lengths) + 1 < k + S:
        raise ValueError(f"series with {min(lengths) + 1} frames are too short for lag {k} and horizon {S}")
    subj, t, s = enumerate_omega(lengths, k, S)
    omega = t.size
    if pair_budget is not None and omega > pair_budget:
        rng = np.random.default_rng(int(seed))
        if len(subjects) == 1:
            keep = np.sort(rng.choice(omega, size=int(pair_budget), replace=False))
        else:
            keep = _balanced_subset(subj, int(pair_budget), rng)
        subj, t, s = subj[keep], t[keep], s[keep]
    return PairSet(subj, t, s, lag=k, omega_size=omega)


def _balanced_subset(subj, budget, rng):
    n = int(subj.max()) + 1
    groups = [np.flatnonzero(subj == i) for i in range(n)]
    quota = np.full(n, budget // n)
    quota[rng.permutation(n)[: budget % n]] += 1
    # move quota unused by short subjects to the others
    spare = 0
    for i, g in enumerate(groups):
        if quota[i] > g.size:
            spare += quota[i] - g.size
            quota[i] = g.size
    for i in rng.permutation(n):
        if spare == 0:
            break
        take = min(spare, groups[i].size - quota[i])
        quota[i] += take
        spare -= take
    keep = [rng.choice(g, size=q, replace=False) for g, q in zip(groups, quota) if q]
    return np.sort(np.concatenate(keep))


class PairData:
    """Flattened frames of all subjects with O(1) batch gathering."""

    def __init__(self, data, loc=0.0, scale=1.0):
        subjects = check_panel(data)
        self.frame_shape = subjects[0].shape[1:]
        self.dim = int(np.prod(self.frame_shape))
        self.flat = (np.concatenate([x.reshape(x.shape[0], -1) for x in subjects]) - loc) / scale
        self.offsets = np.concatenate([[0], np.cumsum([x.shape[0] for x in subjects])[:-1]])

    def batch(self, pairs, idx):
        g = self.offsets[pairs.subject[idx]] + pairs.t[idx]
        k = pairs.lag
        hist = self.flat[g[:, None] + np.arange(-k + 1, 1)].reshape(g.size, k * self.dim)
        return hist, self.flat[g + pairs.s[idx]]


# ---------------------------------------------------------------------------
# objective


def conjugate_tensor(spec, t):
    """``f*`` applied to a Tensor of critic scores."""
    if spec.name == "kl":
        return (t - 1.0).exp()
    c = t.clamp_min(CHI2_CONJUGATE_FLOOR)
    return c.square() * 0.25 + c


def empirical_loss(gen, disc, histories, targets, noise, spec, lag_code=None, weights=None, jitter=None):
    """Mean over the batch of ``H(x, G(eta, x)) - f*(H(x, y))``.

    ``gen`` and ``disc`` are any callables returning Tensors (networks or test
    doubles).  The result is a scalar Tensor differentiable w.r.t. both.
    ``jitter``, when given, is a pair of arrays added to the real and the
    generated targets before the critic sees them (instance noise).
    """
    spec = get_divergence(spec)
    histories = np.asarray(histories, dtype=np.float64)
    if histories.shape[0] == 0:
        raise ValueError("empty batch")
    fake = gen(histories, noise=noise, lag_code=lag_code) if lag_code is not None else gen(histories, noise=noise)
    if jitter is not None:
        targets = np.asarray(targets) + jitter[0]
        fake = fake + jitter[1]
    kw = {} if lag_code is None else {"lag_code": lag_code}
    fake_score = disc(histories, fake, **kw)
    real_term = conjugate_tensor(spec, disc(histories, targets, **kw))
    bad = ~np.isfinite(real_term.data.ravel()) | ~np.isfinite(fake_score.data.ravel())
    if bad.any():
        raise FloatingPointError(f"non-finite critic value at batch entry {int(np.flatnonzero(bad)[0])}")
    if weights is None:
        return fake_score.mean() - real_term.mean()
    return fake_score.weighted_mean(weights) - real_term.weighted_mean(weights)


# ---------------------------------------------------------------------------
# trained model


@dataclass
class TrainedGenerator:
    """Per-lag generator heads ``G_s`` (``G_1`` is the one-step generator) and their critics."""

    generators: dict
    critics: dict
    config: TrainConfig
    frame_shape: tuple
    trace: list = field(default_factory=list)
    loc: float = 0.0
    scale: float = 1.0

    @property
    def lag(self):
        return self.config.lag

    @property
    def horizon(self):
        return self.config.horizon

    @property
    def noise_dim(self):
        return self.config.noise_dim

    def head(self, s):
        if not 1 <= s <= self.horizon:
            raise ValueError(f"horizon s={s} was not trained (trained 1..{self.horizon})")
        return self.generators[0 if self.config.shared_heads else s]

    def lag_code(self, s, n):
        if not self.config.shared_heads:
            return None
        return np.full((n, 1), s / self.horizon)

    def sample(self, histories, noise, s):
        """Apply head ``s`` to flattened histories (n, k*d) and noise (n, m); returns (n, d).

        Inputs and outputs are on the data scale; the networks see
        ``(x - loc) / scale``.
        """
        histories = (np.atleast_2d(histories) - self.loc) / self.scale
        out = self.head(s).predict(histories, noise, self.lag_code(s, histories.shape[0]))
        return out * self.scale + self.loc

    def save(self, path):
        arrays, nets = {}, {}
        for s, g in self.generators.items():
            nets[f"G{s}"] = {"spec": g.spec.to_dict(), "rng_seed_used": g.rng_seed_used}
            arrays.update({f"G{s}/{k}": v for k, v in g.arrays().items()})
        for s, h in self.critics.items():
            for name, net in h.branches().items():
                nets[f"H{s}.{name}"] = {"spec": net.spec.to_dict(), "rng_seed_used": net.rng_seed_used}
                arrays.update({f"H{s}.{name}/{k}": v for k, v in net.arrays().items()})
        meta = {"kind": "trained_generator", "config": self.config.to_dict(),
                "frame_shape": list(self.frame_shape), "networks": nets,
                "loc": self.loc, "scale": self.scale}
        return save_container(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_container(path)
        if meta.get("kind") != "trained_generator":
            raise ValueError(f"{path} does not hold a trained generator")

        def net(section):
            info = meta["networks"][section]
            params = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.split("/", 1)[0] == section}
            return MLP(MLPSpec.from_dict(info["spec"]), params, info["rng_seed_used"])

        gens, crits = {}, {}
        for section in meta["networks"]:
            if section.startswith("G"):
                gens[int(section[1:])] = net(section)
            else:
                s = int(section[1:].split(".")[0])
                if s not in crits:
                    crits[s] = PairCritic(net(f"H{s}.history"), net(f"H{s}.target"), net(f"H{s}.head"))
        return cls(gens, crits, TrainConfig(**meta["config"]), tuple(meta["frame_shape"]),
                   loc=meta["loc"], scale=meta["scale"])

    def write_trace_csv(self, path):
        return write_rows(path, ["epoch", "s", "gen_loss", "disc_loss"], self.trace)


def generator_spec(config, dim, lag_dim=0):
    """Dense generator: history -> hidden ReLU layers -> concat noise -> linear frame output."""
    dims = (config.lag * dim, *config.gen_hidden, dim)
    at = len(config.gen_hidden)
    return MLPSpec(dims, noise_dim=config.noise_dim, concat_noise_at=at,
                   lag_dim=lag_dim, concat_lag_at=at if lag_dim else None)


def init_head(config, dim, s, lag_dim=0):
    gen = init_network(generator_spec(config, dim, lag_dim), derive_seed(config.seed, s, 0))
    disc = PairCritic.build(config.lag * dim, dim, derive_seed(config.seed, s, 1),
                            width=config.disc_width, lag_dim=lag_dim)
    return gen, disc


def _check_loss(value, trace, s):
    if not np.isfinite(value) or abs(value) > LOSS_GUARD:
        raise TrainingError(f"training diverged at lag {s}: loss={value!r}", trace)


def train_head(gen, disc, data, pairs, config, s, rng, freeze_generator=False, step_log=None,
               callback=None):
    """Alternating critic ascent / generator descent on one lag's pairs.

    Mutates ``gen`` and ``disc``; returns per-epoch trace rows.  ``step_log``,
    when given, receives the objective value after every critic step;
    ``callback(epoch, gen, disc)`` runs after every epoch.
    """
    spec = get_divergence(config.divergence)
    shared = config.shared_heads
    sigma = config.instance_noise
    gen_opt = AdamW(gen.parameters(), lr=config.gen_lr, weight_decay=config.gen_wd)
    disc_opt = AdamW(disc.parameters(), lr=config.disc_lr, weight_decay=config.disc_wd)
    n = len(pairs)
    if n == 0:
        raise ValueError(f"no training pairs at lag {s}")
    B = min(config.batch_size, n)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        d_vals, g_vals = [], []
        for start in range(0, n, B):
            idx = order[start:start + B]
            hist, target = data.batch(pairs, idx)
            w = pairs.weight[idx]
            code = (pairs.s[idx, None] / config.horizon) if shared else None
            for _ in range(config.disc_steps_per_gen_step):
                noise = rng.standard_normal((idx.size, config.noise_dim))
                loss = empirical_loss(gen, disc, hist, target, noise, spec, code, w, _jitter(rng, sigma, target))
                d_vals.append(float(loss.data))
                _check_loss(d_vals[-1], trace, s)
                disc_opt.step(grad(loss, disc.parameters()), maximize=True)
                if step_log is not None:
                    step_log.append(d_vals[-1])
            if freeze_generator:
                continue
            noise = rng.standard_normal((idx.size, config.noise_dim))
            fake = gen(hist, noise=noise, lag_code=code) if shared else gen(hist, noise=noise)
            jit = _jitter(rng, sigma, target)
            if jit is not None:
                fake = fake + jit[1]
            kw = {"lag_code": code} if shared else {}
            fake_term = disc(hist, fake, **kw).weighted_mean(w)
            real = disc.predict(hist, target if jit is None else target + jit[0], **kw).ravel()
            real_term = float(np.sum(w * _conj(spec, real)) / w.sum())
            g_vals.append(float(fake_term.data) - real_term)
            _check_loss(g_vals[-1], trace, s)
            gen_opt.step(grad(fake_term, gen.parameters()))
        row = {"epoch": epoch, "s": s,
               "gen_loss": float(np.mean(g_vals)) if g_vals else float("nan"),
               "disc_loss": float(np.mean(d_vals))}
        trace.append(row)
        if callback is not None:
            callback(epoch, gen, disc)
    return trace


def _jitter(rng, sigma, target):
    if not sigma:
        return None
    return sigma * rng.standard_normal((2,) + target.shape)


def _conj(spec, y):
    from .fdiv import eval_conjugate

    return eval_conjugate(spec, y)


def train(data, config, pairs=None):
    """Fit generator heads for lags ``1..config.horizon``.

    ``data`` is one series (array or ``MatrixSeries``) or a panel.  Each lag
    is an independent subproblem seeded from ``(config.seed, s)``; a panel
    weights every subject equally within each lag.
    """
    loc, scale = standardization(data) if config.standardize else (0.0, 1.0)
    pdata = PairData(data, loc, scale)
    if pairs is None:
        pairs = build_pair_set(data, config.lag, config.horizon, config.pair_budget,
                               seed=derive_seed(config.seed, 0, 2))
    if pairs.lag != config.lag:
        raise ValueError(f"pair set lag {pairs.lag} != config lag {config.lag}")
    gens, crits, trace = {}, {}, []
    if config.shared_heads:
        sub = pairs if config.horizon == int(pairs.s.max()) else _restrict(pairs, config.horizon)
        gen, disc = init_head(config, pdata.dim, 0, lag_dim=1)
        trace += train_head(gen, disc, pdata, sub, config, 0, rng_for(config.seed, 0))
        gens[0], crits[0] = gen, disc
    else:
        for s in range(1, config.horizon + 1):
            gen, disc = init_head(config, pdata.dim, s)
            logger.debug("training lag %d on %d pairs", s, len(pairs.at_lag(s)))
            trace += train_head(gen, disc, pdata, pairs.at_lag(s), config, s, rng_for(config.seed, s))
            gens[s], crits[s] = gen, disc
    return TrainedGenerator(gens, crits, config, tuple(pdata.frame_shape), trace, loc, scale)


def standardization(data):
    """Scalar mean and standard deviation over every entry of every training frame."""
    flat = np.concatenate([x.ravel() for x in check_panel(data)])
    scale = float(flat.std())
    if not np.isfinite(scale) or scale <= 0:
        raise ValueError("training frames are constant; cannot standardize")
    return float(flat.mean()), scale


def _restrict(pairs, S):
    m = pairs.s <= S
    return PairSet(pairs.subject[m], pairs.t[m], pairs.s[m], pairs.lag, pairs.weight[m], pairs.omega_size)


def with_config(config, **changes):
    return replace(config, **changes)
