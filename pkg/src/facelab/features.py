"""Image feature pipeline: grayscale, gridded local binary patterns, PCA.

LBP codes compare each interior pixel's 8 neighbours to the centre,
clockwise from the top-left, packing "neighbour >= centre" bits
most-significant-first.  Per-cell 256-bin histograms are concatenated
row-major over the cell grid.  The PCA reducer and LBP extractor follow
the fit/transform estimator convention so they compose with standard
pipelines.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

IMAGE_W, IMAGE_H = 60, 70

# clockwise neighbour offsets starting at the top-left corner
_NEIGHBOR_OFFSETS = [
    (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
]


class UndecodableImage(ValueError):
    pass


class WrongDimensions(ValueError):
    pass


class BadCellGeometry(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def to_gray(image, strict: bool = False) -> np.ndarray:
    """Convert an RGB or grayscale raster to uint8 luminance."""
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 3:
        lum = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
        out = np.rint(lum).astype(np.uint8)
    elif arr.ndim == 2:
        out = arr.astype(np.uint8)
    else:
        raise UndecodableImage(f"unsupported raster shape {arr.shape}")
    if strict and out.shape != (IMAGE_H, IMAGE_W):
        raise WrongDimensions(f"expected {IMAGE_H}x{IMAGE_W}, got {out.shape}")
    return out


def lbp_code(patch) -> int:
    """8-bit code of a 3x3 patch, MSB = top-left neighbour."""
    p = np.asarray(patch)
    if p.shape != (3, 3):
        raise ValueError("patch must be 3x3")
    center = p[1, 1]
    code = 0
    for dy, dx in _NEIGHBOR_OFFSETS:
        code = (code << 1) | int(p[1 + dy, 1 + dx] >= center)
    return code


def lbp_codes(image: np.ndarray) -> np.ndarray:
    """Codes for all interior pixels of a grayscale image (vectorized)."""
    img = np.asarray(image, dtype=np.int16)
    center = img[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.uint8)
    for dy, dx in _NEIGHBOR_OFFSETS:
        neigh = img[1 + dy: img.shape[0] - 1 + dy, 1 + dx: img.shape[1] - 1 + dx]
        codes = (codes << 1) | (neigh >= center).astype(np.uint8)
    return codes


def extract_lbp(image, cell_w: int = 10, cell_h: int = 10) -> np.ndarray:
    """Concatenated per-cell LBP histograms (row-major over cells).

    Border pixels are skipped, so cells touching the image edge histogram
    fewer pixels; each cell's histogram still sums to its coded-pixel
    count.
    """
    img = np.asarray(image)
    h, w = img.shape
    if h % cell_h or w % cell_w:
        raise BadCellGeometry(f"{h}x{w} image not divisible by {cell_h}x{cell_w} cells")
    codes = lbp_codes(img)
    # cell index of each interior pixel, in full-image coordinates
    ys, xs = np.mgrid[1:h - 1, 1:w - 1]
    cell_idx = (ys // cell_h) * (w // cell_w) + xs // cell_w
    n_cells = (h // cell_h) * (w // cell_w)
    flat = cell_idx.ravel() * 256 + codes.ravel()
    return np.bincount(flat, minlength=n_cells * 256).astype(np.float64)


class LbpExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer from image stacks to LBP histogram vectors."""

    def __init__(self, cell_w: int = 10, cell_h: int = 10):
        self.cell_w = cell_w
        self.cell_h = cell_h

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return np.stack([extract_lbp(img, self.cell_w, self.cell_h) for img in X])


class RankDeficient(UserWarning):
    pass


class PcaReducer(BaseEstimator, TransformerMixin):
    """Principal-component projection fitted via the Gram matrix when
    samples are fewer than dimensions.

    Attributes after fit: ``mean_`` (d,), ``components_`` (d, k) with
    orthonormal columns, ``explained_variance_`` (k,) non-increasing, and
    ``rank_deficient_`` when the requested dimension exceeded the data
    rank.
    """

    def __init__(self, n_components: int = 400):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        if n < 2:
            raise ValueError("need at least two samples")
        k = min(self.n_components, n - 1, d)
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        if n < d:
            gram = Xc @ Xc.T
            w, v = np.linalg.eigh(gram)
            w, v = w[::-1], v[:, ::-1]
            keep = w > max(w[0], 0) * 1e-12
            rank = int(np.sum(keep))
            kk = min(k, rank)
            comps = Xc.T @ v[:, :kk]
            comps /= np.linalg.norm(comps, axis=0)
            var = w[:kk] / (n - 1)
        else:
            cov = Xc.T @ Xc / (n - 1)
            w, v = np.linalg.eigh(cov)
            w, v = w[::-1], v[:, ::-1]
            keep = w > max(w[0], 0) * 1e-12
            rank = int(np.sum(keep))
            kk = min(k, rank)
            comps = v[:, :kk]
            var = w[:kk]
        self.components_ = comps
        self.explained_variance_ = np.maximum(var, 0.0)
        self.rank_deficient_ = kk < k
        return self

    def transform(self, X):
        if not hasattr(self, "components_"):
            raise NotFittedError("PcaReducer is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean_.shape[0]:
            raise DimensionMismatch(
                f"vector dim {X.shape[-1]} != model dim {self.mean_.shape[0]}"
            )
        return (X - self.mean_) @ self.components_

    def inverse_transform(self, Z):
        return np.asarray(Z) @ self.components_.T + self.mean_


# ---------------------------------------------------------------------------
# portable graymap and feature-cache I/O

def write_pgm(image: np.ndarray, path) -> None:
    img = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise UndecodableImage(f"{path}: not a binary PGM")
    # scan the three header tokens by hand: splitting the whole buffer on
    # whitespace would also eat raster bytes that look like whitespace
    tokens, pos = [], 2
    while len(tokens) < 3 and pos < len(data):
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # the single whitespace byte that terminates the header
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise UndecodableImage(f"{path}: malformed header") from exc
    raster = data[pos:pos + w * h]
    if maxval > 255 or len(raster) < w * h:
        raise UndecodableImage(f"{path}: truncated or wide PGM")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


class StaleCache(RuntimeError):
    pass


def _geometry_hash(cell_w, cell_h) -> str:
    return hashlib.sha256(f"lbp:{cell_w}x{cell_h}".encode()).hexdigest()[:16]


def save_feature_cache(path, image_ids, vectors, cell_w=10, cell_h=10) -> None:
    header = json.dumps({
        "cell_w": cell_w, "cell_h": cell_h,
        "geometry_hash": _geometry_hash(cell_w, cell_h),
    })
    np.savez_compressed(
        path,
        header=np.frombuffer(header.encode(), dtype=np.uint8),
        image_ids=np.array(list(image_ids)),
        vectors=np.asarray(vectors, dtype=np.float64),
    )


def load_feature_cache(path, cell_w=10, cell_h=10):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header["geometry_hash"] != _geometry_hash(cell_w, cell_h):
            raise StaleCache(
                f"cache built for {header['cell_w']}x{header['cell_h']} cells"
            )
        return list(z["image_ids"]), z["vectors"]
