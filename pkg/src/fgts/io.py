"""On-disk containers.

Checkpoints and series share one format: an uncompressed ``.npz`` archive of
little-endian float64 arrays plus a ``__meta__`` entry holding JSON text
(format version, network specs, seeds, series header).  Loading never
unpickles, and arrays round-trip bit-exactly.
"""

import csv
import json

import numpy as np

FORMAT_VERSION = 1
_META = "__meta__"


def save_container(path, arrays, metadata):
    """Write ``arrays`` (name -> array) and a JSON-serialisable ``metadata`` dict."""
    payload = {name: np.ascontiguousarray(a, dtype="<f8") for name, a in arrays.items()}
    if _META in payload:
        raise ValueError(f"array name {_META!r} is reserved")
    meta = {"format_version": FORMAT_VERSION, **metadata}
    payload[_META] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_container(path):
    """Inverse of :func:`save_container`; returns ``(arrays, metadata)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z[_META]))
        arrays = {k: z[k].astype(np.float64, copy=False) for k in z.files if k != _META}
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported container format_version {version!r}")
    return arrays, meta


# -- networks ---------------------------------------------------------------

def save_network(path, net):
    from .neural import MLP

    if not isinstance(net, MLP):
        raise TypeError("save_network expects an MLP")
    return save_container(path, net.arrays(), {"kind": "mlp", "spec": net.spec.to_dict(),
                                               "rng_seed_used": net.rng_seed_used})


def load_network(path):
    from .neural import MLP, MLPSpec

    arrays, meta = load_container(path)
    return MLP(MLPSpec.from_dict(meta["spec"]), arrays, meta["rng_seed_used"])


# -- series -----------------------------------------------------------------

def _coeff_arrays(coeffs):
    if coeffs is None:
        return {}
    out = {"coef/phi1": coeffs.phi1, "coef/phi_e": coeffs.phi_e}
    if coeffs.phi2 is not None:
        out["coef/phi2"] = coeffs.phi2
    return out


def save_series(path, series, coeffs=None):
    """Save one series; ``coeffs`` (optional) stores the generating coefficients alongside."""
    header = {"kind": "series", "p1": series.p1, "p2": series.p2, "T": series.T,
              "lag": series.lag, "case_id": series.case_id, "seed": series.seed,
              "has_coefficients": coeffs is not None}
    return save_container(path, {"frames": series.frames, **_coeff_arrays(coeffs)}, header)


def save_panel(path, panel, coeffs=None):
    subj = panel.subjects
    header = {"kind": "panel", "n": len(subj), "lag": subj[0].lag, "case_id": subj[0].case_id,
              "seeds": [x.seed for x in subj], "has_coefficients": coeffs is not None}
    arrays = {f"subject{i:05d}": x.frames for i, x in enumerate(subj)}
    return save_container(path, {**arrays, **_coeff_arrays(coeffs)}, header)


def load_data(path):
    """Load a series or panel container; returns ``(MatrixSeries | PanelDataset, CoefficientSet | None)``."""
    from .simgen import CoefficientSet, MatrixSeries, PanelDataset

    arrays, meta = load_container(path)
    coeffs = None
    if meta.get("has_coefficients"):
        coeffs = CoefficientSet(arrays["coef/phi1"], arrays["coef/phi_e"], meta["case_id"],
                                arrays.get("coef/phi2"))
    if meta.get("kind") == "series":
        data = MatrixSeries(arrays["frames"], lag=meta["lag"], case_id=meta["case_id"], seed=meta["seed"])
    elif meta.get("kind") == "panel":
        data = PanelDataset([MatrixSeries(arrays[f"subject{i:05d}"], lag=meta["lag"],
                                          case_id=meta["case_id"], seed=seed)
                             for i, seed in enumerate(meta["seeds"])])
    else:
        raise ValueError(f"{path} holds neither a series nor a panel")
    return data, coeffs


def load_series(path):
    from .simgen import MatrixSeries

    arrays, meta = load_container(path)
    if meta.get("kind") != "series":
        raise ValueError(f"{path} does not hold a series")
    return MatrixSeries(arrays["frames"], lag=meta["lag"], case_id=meta["case_id"], seed=meta["seed"])


def write_series_csv(path, frames):
    """One row per frame, entries flattened row-major (debugging aid)."""
    frames = np.asarray(frames, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(frames[0].size)])
        for t, f in enumerate(frames):
            w.writerow([t] + [repr(float(v)) for v in f.ravel()])
    return path


def write_rows(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return path
