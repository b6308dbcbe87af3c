"""Synthetic biased datasets over fixed representations, plus file I/O.

The generator plants the main label signal and the protected label signal in
disjoint coordinate blocks of a Gaussian feature vector; the train/dev splits
are skewed over the four (y, g) cells while the test split stays balanced.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmbeddingParseError, ShapeError, ValidationError
from .numkit import layer_rng

SPLITS = ("train", "dev", "test")

# Cell order mirrors the skew table: (y=1,g=1), (y=1,g=0), (y=0,g=1), (y=0,g=0)
# with y=1 = "happy" and g=1 = "AAE".
CELLS = ((1, 1), (1, 0), (0, 1), (0, 0))

_STREAM_DATA = 20
_STREAM_SPLIT = 21


@dataclass
class SkewSpec:
    """Proportions over the four (y, g) cells, in CELLS order."""

    proportions: tuple

    def validate(self):
        p = np.asarray(self.proportions, dtype=np.float64)
        if p.shape != (4,):
            raise ValidationError("skew needs exactly four cell proportions")
        if (p < 0).any():
            raise ValidationError("skew proportions must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"skew proportions must sum to 1, got {p.sum()}")
        return self


PAPER_SKEW = SkewSpec((0.4, 0.1, 0.1, 0.4))
UNIFORM_SKEW = SkewSpec((0.25, 0.25, 0.25, 0.25))


@dataclass
class GeneratorSpec:
    d: int = 48
    main_signal: float = 1.0
    protected_signal: float = 1.0
    noise_sigma: float = 1.0
    y_dims: tuple = tuple(range(0, 8))
    g_dims: tuple = tuple(range(8, 16))
    seed: int = 0

    def validate(self):
        if self.d < 1 or self.noise_sigma <= 0:
            raise ValidationError("d must be >= 1 and noise_sigma > 0")
        y_dims, g_dims = set(self.y_dims), set(self.g_dims)
        if not y_dims or not g_dims:
            raise ValidationError("y_dims and g_dims must be non-empty")
        if y_dims & g_dims:
            raise ValidationError("y_dims and g_dims must be disjoint")
        if max(y_dims | g_dims) >= self.d:
            raise ValidationError("signal dims must lie below d")
        return self


@dataclass
class Dataset:
    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) in {0, 1}
    g: np.ndarray  # (n,) in {0, 1}
    split: np.ndarray = field(default=None)  # (n,) of SPLITS strings

    def __post_init__(self):
        n = len(self.X)
        if len(self.y) != n or len(self.g) != n or (
                self.split is not None and len(self.split) != n):
            raise ValidationError("X, y, g, split lengths disagree")

    @property
    def n(self):
        return len(self.X)

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, name):
        """(X, y, g) for one split tag."""
        mask = self.split == name
        return self.X[mask], self.y[mask], self.g[mask]


def apportion(n, proportions):
    """Largest-remainder apportionment of n items over the proportions."""
    p = np.asarray(proportions, dtype=np.float64)
    exact = n * p
    counts = np.floor(exact).astype(np.int64)
    remainder = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def generate_synthetic(gen, n_train, n_dev, n_test, skew=PAPER_SKEW):
    """Skewed train/dev and balanced test, deterministic per gen.seed.

    Cell counts are exact (largest remainder), not sampled.
    """
    gen.validate()
    skew.validate()
    blocks = []
    for split_idx, (name, n, props) in enumerate((
            ("train", n_train, skew.proportions),
            ("dev", n_dev, skew.proportions),
            ("test", n_test, UNIFORM_SKEW.proportions))):
        rng = layer_rng(gen.seed, _STREAM_DATA, split_idx)
        counts = apportion(n, props)
        for (yy, gg), count in zip(CELLS, counts):
            x = rng.normal(0.0, gen.noise_sigma, size=(count, gen.d))
            x[:, list(gen.y_dims)] += gen.main_signal * (2 * yy - 1)
            x[:, list(gen.g_dims)] += gen.protected_signal * (2 * gg - 1)
            blocks.append((x, np.full(count, yy, dtype=np.int64),
                           np.full(count, gg, dtype=np.int64),
                           np.full(count, name, dtype="<U5")))
    return Dataset(X=np.concatenate([b[0] for b in blocks]),
                   y=np.concatenate([b[1] for b in blocks]),
                   g=np.concatenate([b[2] for b in blocks]),
                   split=np.concatenate([b[3] for b in blocks]))


def make_splits(X, y, g, fractions=(0.8, 0.1, 0.1), seed=0):
    """Assign train/dev/test tags, stratified by (y, g) cell."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (3,) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValidationError("fractions must be three values summing to 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    g = np.asarray(g)
    split = np.empty(len(X), dtype="<U5")
    rng = layer_rng(seed, _STREAM_SPLIT)
    for yy, gg in CELLS:
        cell_idx = np.flatnonzero((y == yy) & (g == gg))
        cell_idx = cell_idx[rng.permutation(len(cell_idx))]
        counts = apportion(len(cell_idx), fractions)
        start = 0
        for name, count in zip(SPLITS, counts):
            split[cell_idx[start:start + count]] = name
            start += count
    return Dataset(X=X, y=y, g=g, split=split)


def save_embeddings(ds, path):
    """Line-oriented text format: header ``n d`` then one row per instance."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{ds.n} {ds.d}\n")
        for i in range(ds.n):
            values = " ".join(f"{v:.17g}" for v in ds.X[i])
            f.write(f"{ds.split[i]} {ds.y[i]} {ds.g[i]} {values}\n")


def load_embeddings(path):
    """Parse the embedding file format; errors carry the 1-based line number."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise EmbeddingParseError(1, "empty file")
    header = lines[0].split()
    if len(header) != 2:
        raise EmbeddingParseError(1, "header must be 'n d'")
    try:
        n, d = int(header[0]), int(header[1])
    except ValueError:
        raise EmbeddingParseError(1, "header must hold two integers") from None
    if n < 1 or d < 1:
        raise EmbeddingParseError(1, f"invalid sizes n={n} d={d}")
    if len(lines) < n + 1:
        raise EmbeddingParseError(len(lines) + 1,
                                  f"expected {n} data rows, found {len(lines) - 1}")
    X = np.empty((n, d))
    y = np.empty(n, dtype=np.int64)
    g = np.empty(n, dtype=np.int64)
    split = np.empty(n, dtype="<U5")
    for i in range(n):
        line_no = i + 2
        parts = lines[i + 1].split()
        if len(parts) != 3 + d:
            raise ShapeError(
                f"line {line_no}: expected {3 + d} fields, found {len(parts)}")
        if parts[0] not in SPLITS:
            raise EmbeddingParseError(line_no, f"unknown split tag {parts[0]!r}")
        try:
            yi, gi = int(parts[1]), int(parts[2])
            row = [float(v) for v in parts[3:]]
        except ValueError:
            raise EmbeddingParseError(line_no, "malformed number") from None
        if yi not in (0, 1):
            raise EmbeddingParseError(line_no, f"y must be 0 or 1, got {yi}")
        if gi not in (0, 1):
            raise EmbeddingParseError(line_no, f"g must be 0 or 1, got {gi}")
        split[i], y[i], g[i] = parts[0], yi, gi
        X[i] = row
    return Dataset(X=X, y=y, g=g, split=split)
