"""Simulation-study orchestration: configs, replications, tables and artifacts."""

import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import derive_seed
from .baselines import naive_predict, ols_fit, ols_predict
from .forecast import generate_iterative, generate_sstep
from .gan import TrainConfig, TrainedGenerator, train
from .io import save_container, write_rows
from .metrics import aggregate, nrmse
from .simgen import (CASE_LAGS, case_number, conditional_mean_oracle, make_coefficients, normalize_case,
                     simulate, simulate_panel)

logger = logging.getLogger(__name__)

METHODS = ("OLS", "Naive", "iter GTS", "s-step GTS")
RESULT_COLUMNS = ["study", "case", "T", "n", "method", "s", "nrmse_mean", "nrmse_sd",
                  "replications", "master_seed"]
REPLICATION_COLUMNS = ["replication", "method", "s", "nrmse"]
OUTPUT_DIR_ENV = "FGTS_OUTPUT_DIR"
MAX_FAILURE_FRACTION = 0.10

# stream keys (second component of derive_seed)
_DATA, _TRAIN, _FORECAST, _ORACLE, _COEFF = range(5)


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    study: str = "I"
    case_id: str = "linear1"
    T: int = 1000
    n: int = 1
    p: int = 32
    S: int = 3
    J: int = 100
    t_new_count: int = 100
    replications: int = 10
    oracle_draws: int = 2000
    spectral_radius: float = 0.9
    methods: tuple = METHODS
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs"
    master_seed: int = 0
    save_checkpoints: bool = True

    def __post_init__(self):
        self.study = str(self.study).upper()
        if self.study not in ("I", "II"):
            raise ValueError("study must be 'I' or 'II'")
        self.case_id = normalize_case(self.case_id)
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        self.methods = tuple(self.methods)
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; expected {METHODS}")
        if self.replications < 1 or self.S < 1 or self.J < 1 or self.t_new_count < 1:
            raise ValueError("replications, S, J and t_new_count must be >= 1")
        if self.study == "II" and self.n < 1:
            raise ValueError("Study II needs n >= 1")
        lag = CASE_LAGS[self.case_id]
        if self.T + 1 < lag + self.S:
            raise ValueError(f"T={self.T} too short for lag {lag} and horizon {self.S}")
        self.train = dataclasses.replace(self.train, lag=lag, horizon=self.S)

    @property
    def lag(self):
        return self.train.lag

    def coefficients(self, r):
        """Transition matrices of replication ``r``; each replication draws its own."""
        seed = derive_seed(self.master_seed, r, _COEFF, case_number(self.case_id))
        return make_coefficients(self.case_id, self.p, seed, self.spectral_radius)

    def needs_gan(self):
        return any(m.endswith("GTS") for m in self.methods)


# -- config text format ------------------------------------------------------

def _coerce(value, like):
    if isinstance(like, bool):
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        if isinstance(value, (tuple, list)):
            return tuple(value)
        parts = [v.strip() for v in str(value).split(",") if v.strip()]
        return tuple(int(v) if v.lstrip("-").isdigit() else v for v in parts)
    return value


def config_from_mapping(values):
    """Build an ExperimentConfig from flat ``key -> value`` pairs (strings allowed)."""
    exp_fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    exp_kw, train_kw = {}, {}
    for key, value in values.items():
        if value is None:
            continue
        if key in train_fields and key not in ("lag", "horizon"):
            default = train_fields[key].default
            train_kw[key] = _coerce(value, default if default is not None else 0.0)
        elif key in exp_fields and key != "train":
            f = exp_fields[key]
            default = f.default if f.default is not dataclasses.MISSING else None
            exp_kw[key] = value if default is None else _coerce(value, default)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return ExperimentConfig(**exp_kw, train=TrainConfig(**train_kw))


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def load_config(path, overrides=None):
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(values)


def config_to_text(config):
    lines = []
    for f in dataclasses.fields(config):
        if f.name == "train":
            continue
        v = getattr(config, f.name)
        lines.append(f"{f.name}={','.join(map(str, v)) if isinstance(v, tuple) else v}")
    for f in dataclasses.fields(config.train):
        if f.name in ("lag", "horizon", "seed"):
            continue
        v = getattr(config.train, f.name)
        lines.append(f"{f.name}={','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"


# -- experiment --------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".10g")


def score_replication(config, coeffs, r, frames_list, gen=None, ols=None):
    """NRMSE records for one replication given its data and fitted models.

    Study I scores rolling forecasts of X_{T+t_new}, t_new = 1..t_new_count,
    each conditioned on the frames ending at T + t_new - s.  Study II scores
    X_{i,T+s} from the frames ending at X_{i,T} for the first
    ``min(n, t_new_count)`` subjects.
    """
    k, T = config.lag, config.T
    f_seed = derive_seed(config.master_seed, r, _FORECAST)
    o_seed = derive_seed(config.master_seed, r, _ORACLE)
    if config.study == "I":
        tasks = [(0, t_new) for t_new in range(1, config.t_new_count + 1)]
    else:
        tasks = [(i, config.S) for i in range(min(config.n, config.t_new_count))]
    records = []
    for s in range(1, config.S + 1):
        scores = {m: [] for m in config.methods}
        for subject, t_new in tasks:
            frames = frames_list[subject]
            target_idx = T + t_new if config.study == "I" else T + s
            origin = target_idx - s
            hist = frames[origin - k + 1: origin + 1]
            key = t_new if config.study == "I" else subject
            target = conditional_mean_oracle(coeffs, hist, s, M=config.oracle_draws,
                                             seed=derive_seed(o_seed, key, s))
            for m in config.methods:
                if m == "OLS":
                    est = ols_predict(ols, hist, s)
                elif m == "Naive":
                    est = naive_predict(frames, target_idx, s)
                elif m == "iter GTS":
                    est = generate_iterative(gen, hist, s, config.J, f_seed, key).mean(axis=0)
                else:
                    est = generate_sstep(gen, hist, s, config.J, f_seed, key).mean(axis=0)
                scores[m].append(nrmse(est, target))
        for m in config.methods:
            records.append({"replication": r, "method": m, "s": s, "nrmse": float(np.mean(scores[m]))})
    return records


def simulate_replication(config, coeffs, r):
    seed = derive_seed(config.master_seed, r, _DATA)
    if config.study == "I":
        return [simulate(coeffs, config.T + config.t_new_count, seed).frames]
    return [x.frames for x in simulate_panel(coeffs, config.n, config.T + config.S, seed).subjects]


def run_replication(config, r, coeffs=None, out_dir=None):
    coeffs = coeffs if coeffs is not None else config.coefficients(r)
    frames_list = simulate_replication(config, coeffs, r)
    train_part = [f[: config.T + 1] for f in frames_list]
    train_data = train_part[0] if config.study == "I" else train_part
    ols = ols_fit(train_data, config.lag) if "OLS" in config.methods else None
    gen = None
    if config.needs_gan():
        tcfg = dataclasses.replace(config.train, seed=derive_seed(config.master_seed, r, _TRAIN))
        gen = train(train_data, tcfg)
        if out_dir is not None and config.save_checkpoints:
            gen.save(Path(out_dir) / "checkpoints" / f"rep{r:03d}_generator.npz")
            gen.write_trace_csv(Path(out_dir) / "traces" / f"rep{r:03d}_loss.csv")
    if out_dir is not None and ols is not None and config.save_checkpoints:
        save_container(Path(out_dir) / "checkpoints" / f"rep{r:03d}_ols.npz", ols.arrays(),
                       {"kind": "ols", "lag": ols.lag})
    return score_replication(config, coeffs, r, frames_list, gen, ols)


def rescore_replication(config, r, out_dir):
    """Recompute a replication's records from its persisted checkpoints."""
    from .baselines import OLSCoefficients
    from .io import load_container

    coeffs = config.coefficients(r)
    frames_list = simulate_replication(config, coeffs, r)
    gen = ols = None
    if config.needs_gan():
        gen = TrainedGenerator.load(Path(out_dir) / "checkpoints" / f"rep{r:03d}_generator.npz")
    if "OLS" in config.methods:
        arrays, meta = load_container(Path(out_dir) / "checkpoints" / f"rep{r:03d}_ols.npz")
        ols = OLSCoefficients([arrays[f"phi{j + 1}"] for j in range(meta["lag"])])
    return score_replication(config, coeffs, r, frames_list, gen, ols)


def resolve_output_dir(path=None):
    return Path(os.environ.get(OUTPUT_DIR_ENV) or path or "runs")


def result_rows(config, report):
    rows = []
    for m in config.methods:
        for s in range(1, config.S + 1):
            cell = report.get(m, s)
            rows.append({"study": config.study, "case": case_number(config.case_id), "T": config.T,
                         "n": config.n if config.study == "II" else 1, "method": m, "s": s,
                         "nrmse_mean": _fmt(cell["mean"]), "nrmse_sd": _fmt(cell["sd"]),
                         "replications": cell["count"], "master_seed": config.master_seed})
    return rows


def run_experiment(config, order=None, out_dir=None):
    """Run all replications, aggregate NRMSE and write artifacts.

    ``order`` permutes the execution order of replications (results are
    joined by replication index, so the output does not depend on it).
    Returns ``(MetricsReport, rows)``.
    """
    out = Path(out_dir) if out_dir is not None else resolve_output_dir(config.output_dir)
    for sub in ("", "checkpoints", "traces"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(config))
    order = list(range(config.replications)) if order is None else list(order)
    if sorted(order) != list(range(config.replications)):
        raise ValueError("order must be a permutation of the replication indices")
    by_rep, failures = {}, []
    for r in order:
        t0 = time.perf_counter()
        try:
            by_rep[r] = run_replication(config, r, out_dir=out)
        except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            failures.append(f"replication={r} error={type(exc).__name__}: {exc}")
            logger.warning("replication %d failed: %s", r, exc)
        else:
            logger.info("replication %d done in %.1fs", r, time.perf_counter() - t0)
    (out / "failures.log").write_text("".join(line + "\n" for line in failures))
    if len(failures) > MAX_FAILURE_FRACTION * config.replications:
        raise ExperimentError(f"{len(failures)} of {config.replications} replications failed")
    records = [rec for r in sorted(by_rep) for rec in by_rep[r]]
    write_rows(out / "replications.csv", REPLICATION_COLUMNS,
               [{**rec, "nrmse": _fmt(rec["nrmse"])} for rec in records])
    report = aggregate(records, key="nrmse")
    rows = result_rows(config, report)
    write_rows(out / "results.csv", RESULT_COLUMNS, rows)
    return report, rows


# -- table reproduction --------------------------------------------------------

def table_cells(study, scale):
    """(case, T, n) cells of the Study I / II tables at the given scale."""
    cases = ("linear1", "nonlinear1", "nonlinear3")
    if study == "I":
        Ts = (1000,) if scale == "desk" else (1000, 5000)
        return [(c, T, 1) for T in Ts for c in cases]
    ns = (200,) if scale == "desk" else (200, 500)
    return [(c, 20, n) for n in ns for c in cases]


SCALES = {
    "desk": {"replications": 10, "t_new_count": 100, "epochs": 100},
    "full": {"replications": 100, "t_new_count": 500, "epochs": 200},
}


def reproduce_table(study="I", scale="desk", master_seed=0, output_dir=None, overrides=None, cases=None):
    """Run every cell of the Study I/II table and write ``table.csv``.

    ``overrides`` are flat config keys applied on top of the scale preset;
    ``cases`` restricts the table to a subset of case ids.
    """
    study = str(study).upper()
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {sorted(SCALES)}")
    out = resolve_output_dir(output_dir)
    wanted = None if cases is None else {normalize_case(c) for c in cases}
    all_rows = []
    for case, T, n in table_cells(study, scale):
        if wanted is not None and case not in wanted:
            continue
        values = {**SCALES[scale], "study": study, "case_id": case, "T": T, "n": n,
                  "master_seed": master_seed, **(overrides or {})}
        config = config_from_mapping(values)
        cell_dir = out / f"study{study}_case{case_number(case)}_T{T}_n{n}"
        _, rows = run_experiment(config, out_dir=cell_dir)
        all_rows.extend(rows)
    write_rows(out / "table.csv", RESULT_COLUMNS, all_rows)
    return all_rows
