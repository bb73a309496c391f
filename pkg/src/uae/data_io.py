"""Datasets, synthetic generators, checkpoints and CSV/PGM output."""
import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError, ValidationError
from .nets import DecoderNet, Encoder, GaussianChannel, Mlp, MlpSpec, UaeModel

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801

# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------


def _read_header(buf, path, magic, ndims):
    need = 4 * (1 + ndims)
    if len(buf) < need:
        raise FormatError(f"{path}: truncated header at offset {len(buf)}, need {need} bytes")
    found = struct.unpack_from(">I", buf, 0)[0]
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x} at offset 0, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndims}I", buf, 4), need


def load_idx_images(path):
    """IDX image file (magic 0x00000803) as an N x (rows*cols) float array in [0, 1]."""
    buf = Path(path).read_bytes()
    (count, rows, cols), off = _read_header(buf, path, IDX_IMAGES, 3)
    size = count * rows * cols
    if len(buf) - off < size:
        raise FormatError(
            f"{path}: truncated pixel data at offset {len(buf)}, expected {off + size} bytes"
        )
    pix = np.frombuffer(buf, dtype=np.uint8, count=size, offset=off)
    return pix.reshape(count, rows * cols).astype(np.float64) / 255.0


def idx_image_shape(path):
    buf = Path(path).read_bytes()[:16]
    (_, rows, cols), _ = _read_header(buf, path, IDX_IMAGES, 3)
    return rows, cols


def load_idx_labels(path):
    buf = Path(path).read_bytes()
    (count,), off = _read_header(buf, path, IDX_LABELS, 1)
    if len(buf) - off < count:
        raise FormatError(f"{path}: truncated labels at offset {len(buf)}, expected {off + count} bytes")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=off).astype(np.int64)


def write_idx_images(path, images):
    """Write an N x rows x cols uint8 array."""
    images = np.asarray(images)
    if images.ndim != 3 or images.dtype != np.uint8:
        raise ValidationError("images must be a uint8 array of shape (N, rows, cols)")
    with open(path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES, *images.shape))
        f.write(np.ascontiguousarray(images).tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValidationError("labels must be a 1-D array of values in [0, 255]")
    with open(path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS, labels.size))
        f.write(labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    train_labels: Optional[np.ndarray] = None
    valid_labels: Optional[np.ndarray] = None
    test_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        n = None
        for name in ("train", "valid", "test"):
            block = np.asarray(getattr(self, name), dtype=np.float64)
            if block.ndim != 2:
                raise ValidationError(f"{name} split must be 2-D")
            if block.size and (block.min() < 0.0 or block.max() > 1.0):
                raise ValidationError(f"{name} split has values outside [0, 1]")
            if n is not None and block.shape[0] and block.shape[1] != n:
                raise ValidationError("splits disagree on the signal dimension")
            if block.shape[0]:
                n = block.shape[1]
            setattr(self, name, block)
            labels = getattr(self, f"{name}_labels")
            if labels is not None and len(labels) != block.shape[0]:
                raise ValidationError(f"{name} labels do not match the split size")

    @property
    def n(self):
        return self.train.shape[1]


def split_counts(total, fractions):
    """Sizes of contiguous splits; the last split absorbs rounding."""
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions) or sum(fractions) <= 0:
        raise ValidationError(f"bad split fractions {fractions}")
    s = sum(fractions)
    counts = [int(round(total * f / s)) for f in fractions[:-1]]
    counts.append(total - sum(counts))
    if counts[-1] < 0:
        raise ValidationError(f"split fractions {fractions} overflow {total} rows")
    return counts


def make_dataset(X, labels=None, fractions=(0.7, 0.15, 0.15), counts=None):
    """Cut rows of ``X`` into contiguous train/valid/test blocks."""
    X = np.asarray(X, dtype=np.float64)
    if counts is None:
        counts = split_counts(X.shape[0], fractions)
    counts = [int(c) for c in counts]
    if sum(counts) > X.shape[0] or min(counts) < 0:
        raise ValidationError(f"split counts {counts} exceed {X.shape[0]} rows")
    bounds = np.cumsum([0, *counts])
    parts = [X[bounds[i]:bounds[i + 1]] for i in range(3)]
    lab = [None] * 3
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        lab = [labels[bounds[i]:bounds[i + 1]] for i in range(3)]
    return Dataset(*parts, *lab)


def load_dataset(path, labels_path=None, fractions=(0.7, 0.15, 0.15), counts=None):
    X = load_idx_images(path)
    labels = load_idx_labels(labels_path) if labels_path else None
    if labels is not None and labels.size != X.shape[0]:
        raise FormatError(f"{labels_path}: {labels.size} labels for {X.shape[0]} images")
    return make_dataset(X, labels, fractions, counts)


def make_two_gaussian_mixture(
    N, rng, mu_a=(-2.0, 2.0), mu_b=(2.0, -2.0), s_long=2.0, s_short=0.2, return_labels=False
):
    """Fair-coin mixture of two axis-aligned Gaussians elongated along orthogonal axes.

    Component 0 has std ``(s_long, s_short)`` around ``mu_a``; component 1 has
    ``(s_short, s_long)`` around ``mu_b``.
    """
    if N < 1:
        raise ValidationError("N must be >= 1")
    comp = (rng.uniform(N) >= 0.5).astype(np.int64)
    z = rng.normal((N, 2))
    mu = np.where(comp[:, None] == 0, np.asarray(mu_a, float), np.asarray(mu_b, float))
    sd = np.where(comp[:, None] == 0, [s_long, s_short], [s_short, s_long])
    X = mu + sd * z
    return (X, comp) if return_labels else X


def make_sparse_signals(N, n, k_sparse, rng):
    """Rows with ``k_sparse`` random coordinates set to +-Uniform[1, 2]."""
    if not 0 <= k_sparse <= n:
        raise ValidationError(f"k_sparse={k_sparse} must lie in [0, {n}]")
    X = np.zeros((N, n))
    if k_sparse == 0 or N == 0:
        return X
    keys = rng.raw(N * n).reshape(N, n)
    support = np.argsort(keys, axis=1, kind="stable")[:, :k_sparse]
    mag = 1.0 + rng.uniform((N, k_sparse))
    sign = np.where(rng.uniform((N, k_sparse)) < 0.5, -1.0, 1.0)
    np.put_along_axis(X, support, sign * mag, axis=1)
    return X


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MAGIC = b"UAE1"
FORMAT_VERSION = 1


def _header(model):
    enc = model.channel.encoder
    dec = model.decoder
    return {
        "format_version": FORMAT_VERSION,
        "n": enc.n,
        "l": enc.l,
        "m": enc.m,
        "sigma": float(model.channel.sigma),
        "seed": int(model.seed),
        "acquisition": None if enc.acquisition is None else enc.acquisition.spec.to_dict(),
        "decoder": {**dec.mlp.spec.to_dict(), "family": dec.family, "sigma_dec": float(dec.sigma_dec)},
    }


def _mlp_count(sizes):
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


def checkpoint_bytes(model):
    """Serialized checkpoint: magic, u32-LE header length, JSON header, f64-LE blob."""
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.asarray(p, dtype="<f8").tobytes(order="C") for p in model.params())
    return MAGIC + struct.pack("<I", len(header)) + header + blob


def save_checkpoint(model, path):
    Path(path).write_bytes(checkpoint_bytes(model))


def _take_mlp(spec, flat, pos):
    weights, biases = [], []
    for i, o in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(flat[pos:pos + o * i].reshape(o, i).copy())
        pos += o * i
        biases.append(flat[pos:pos + o].copy())
        pos += o
    return Mlp(spec, weights, biases), pos


def checkpoint_from_bytes(data, source="<bytes>"):
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    (hlen,) = struct.unpack_from("<I", data, 4)
    if len(data) < 8 + hlen:
        raise FormatError(f"{source}: header truncated, expected {hlen} bytes")
    try:
        h = json.loads(data[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: unreadable header: {exc}") from exc
    if h.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{source}: format version {h.get('format_version')} != {FORMAT_VERSION}")
    try:
        n, l, m = int(h["n"]), int(h["l"]), int(h["m"])
        acq_spec = None if h["acquisition"] is None else MlpSpec(**h["acquisition"])
        d = dict(h["decoder"])
        family = d.pop("family")
        sigma_dec = d.pop("sigma_dec")
        dec_spec = MlpSpec(**d)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{source}: malformed header: {exc}") from exc
    if acq_spec is None and l != n:
        raise FormatError(f"{source}: linear encoder needs l == n, header has l={l}, n={n}")
    if acq_spec is not None and (acq_spec.n_in != n or acq_spec.n_out != l):
        raise FormatError(f"{source}: acquisition sizes {acq_spec.layer_sizes} inconsistent with n={n}, l={l}")
    if dec_spec.n_in != m or dec_spec.n_out != n:
        raise FormatError(f"{source}: decoder sizes {dec_spec.layer_sizes} inconsistent with m={m}, n={n}")
    count = m * l + _mlp_count(dec_spec.layer_sizes)
    if acq_spec is not None:
        count += _mlp_count(acq_spec.layer_sizes)
    blob = data[8 + hlen:]
    if len(blob) != 8 * count:
        raise FormatError(f"{source}: parameter blob has {len(blob)} bytes, expected {8 * count}")
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    W = flat[: m * l].reshape(m, l).copy()
    pos = m * l
    acq = None
    if acq_spec is not None:
        acq, pos = _take_mlp(acq_spec, flat, pos)
    dec_mlp, pos = _take_mlp(dec_spec, flat, pos)
    try:
        return UaeModel(
            GaussianChannel(Encoder(W, acq), float(h["sigma"])),
            DecoderNet(dec_mlp, family, float(sigma_dec)),
            int(h.get("seed", 0)),
        )
    except ValidationError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes(), str(path))


def param_blob(params):
    """Bytes of a parameter list, for bit-exact comparisons."""
    return b"".join(np.asarray(p, dtype="<f8").tobytes() for p in params)


# ---------------------------------------------------------------------------
# CSV and PGM
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_train_report(path, report):
    write_csv(path, ["epoch", "train_loss", "valid_loss", "frob_W"], report.rows())


EVAL_HEADER = ["method", "m", "seed", "mean_l2_per_image", "std_err", "n_test"]


def upsert_eval_rows(path, reports):
    """Merge EvalReports into a results CSV keyed by (method, m, seed)."""
    path = Path(path)
    rows = {}
    if path.exists():
        for r in read_csv(path):
            rows[(r["method"], r["m"], r["seed"])] = [r[h] for h in EVAL_HEADER]
    for rep in reports:
        row = [rep.method, rep.m, rep.seed, rep.mean_l2_per_image, rep.std_err, rep.n_test]
        row = [_fmt(v) for v in row]
        rows[(row[0], row[1], row[2])] = row
    write_csv(path, EVAL_HEADER, [rows[k] for k in sorted(rows, key=lambda k: (k[0], int(k[1]), int(k[2])))])


def write_pgm_grid(path, images, shape, n_cols=10, pad=1):
    """Binary PGM (P5) tiling of rows of ``images`` reshaped to ``shape``; values clipped to [0, 1]."""
    images = np.asarray(images, dtype=np.float64)
    rows, cols = shape
    n = images.shape[0]
    n_cols = max(1, min(n_cols, n))
    n_rows = -(-n // n_cols)
    H = n_rows * (rows + pad) + pad
    Wd = n_cols * (cols + pad) + pad
    canvas = np.zeros((H, Wd), dtype=np.uint8)
    pix = np.round(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    for i in range(n):
        r, c = divmod(i, n_cols)
        y0 = pad + r * (rows + pad)
        x0 = pad + c * (cols + pad)
        canvas[y0:y0 + rows, x0:x0 + cols] = pix[i].reshape(rows, cols)
    with open(path, "wb") as f:
        f.write(f"P5\n{Wd} {H}\n255\n".encode("ascii"))
        f.write(canvas.tobytes())


def read_pgm(path):
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
