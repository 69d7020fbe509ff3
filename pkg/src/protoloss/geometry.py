"""Feature-space geometry: inter/intra-class angles, separation statistics, SCR, histograms.

Angles are computed between unit-normalized vectors and clamped before
``arccos``; SCR uses raw vectors and Euclidean distances.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegeneratePrototypeError

DEFAULT_BIN_WIDTH = 2.0


def _as_matrix(C) -> np.ndarray:
    C = np.asarray(getattr(C, "values", C), dtype=np.float64)
    if C.ndim != 2:
        raise ContractError(f"expected an (M, d) matrix, got shape {C.shape}")
    return C


def _unit_rows(C: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(C, axis=1, keepdims=True)
    if np.any(norms[:, 0] == 0):
        raise DegeneratePrototypeError("zero-norm prototype has no direction")
    return C / norms


def inter_class_angles(prototypes) -> np.ndarray:
    """Symmetric (M, M) matrix of pairwise prototype angles in degrees; zero diagonal."""
    C = _as_matrix(prototypes)
    if C.shape[0] < 2:
        raise ContractError("need at least two prototypes")
    U = _unit_rows(C)
    cos = np.clip(U @ U.T, -1.0, 1.0)
    # symmetrize explicitly so phi[j, k] == phi[k, j] bit for bit
    cos = np.triu(cos, 1)
    cos = cos + cos.T
    ang = np.degrees(np.arccos(cos))
    np.fill_diagonal(ang, 0.0)
    return ang


def separation_stats(angles: np.ndarray) -> tuple[float, float, float]:
    """(MinSep, MeanSep, Std) from an inter-class angle matrix.

    MeanSep and Std describe each class's nearest-neighbour angle; Std is the
    population standard deviation.
    """
    A = np.array(angles, dtype=np.float64)
    M = A.shape[0]
    if A.shape != (M, M) or M < 2:
        raise ContractError("need a square angle matrix with M >= 2")
    np.fill_diagonal(A, np.inf)
    nearest = A.min(axis=1)
    return float(nearest.min()), float(nearest.mean()), float(nearest.std())


def intra_class_angles(embeddings, labels, prototypes) -> tuple[np.ndarray, np.ndarray]:
    """Angle between each embedding and its class prototype, in degrees.

    Returns ``(angles, zero_mask)``: zero-norm embeddings get 90 degrees and
    are flagged in ``zero_mask``.
    """
    H = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    C = _as_matrix(prototypes)
    if y.size and (y.min() < 0 or y.max() >= C.shape[0]):
        raise ContractError("every label needs a prototype")
    U = _unit_rows(C)[y]
    hn = np.linalg.norm(H, axis=1)
    zero = hn == 0
    safe = np.where(zero, 1.0, hn)
    cos = np.clip(np.einsum("ij,ij->i", H / safe[:, None], U), -1.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    ang[zero] = 90.0
    return ang, zero


@dataclass
class ScrResult:
    scr: float
    per_class: dict[int, float]
    infinite_classes: list[int] = field(default_factory=list)
    empty_classes: list[int] = field(default_factory=list)


def scr_details(embeddings, labels, prototypes) -> ScrResult:
    """Separation-to-compactness ratio with per-class detail.

    Classes without samples are skipped with a warning; classes whose samples
    all sit exactly on the center have an infinite ratio and are reported in
    ``infinite_classes`` instead of being averaged.
    """
    H = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    C = _as_matrix(prototypes)
    M = C.shape[0]
    if M < 2:
        raise ContractError("SCR needs at least two classes")
    diff = C[:, None, :] - C[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(D, np.inf)
    sep = D.min(axis=1)
    per_class, inf_classes, empty = {}, [], []
    for j in range(M):
        members = H[y == j]
        if len(members) == 0:
            empty.append(j)
            continue
        compact = np.linalg.norm(members - C[j], axis=1).mean()
        if compact == 0:
            inf_classes.append(j)
            continue
        per_class[j] = float(sep[j] / compact)
    if empty:
        warnings.warn(f"SCR: classes {empty} have no samples and were excluded", RuntimeWarning, stacklevel=2)
    value = float(np.mean(list(per_class.values()))) if per_class else float("inf")
    return ScrResult(value, per_class, inf_classes, empty)


def scr(embeddings, labels, prototypes) -> float:
    return scr_details(embeddings, labels, prototypes).scr


def histogram_edges(bin_width: float = DEFAULT_BIN_WIDTH, lo: float = 0.0, hi: float = 180.0) -> np.ndarray:
    if not bin_width > 0:
        raise ContractError("bin_width must be positive")
    n = int(np.ceil((hi - lo) / bin_width - 1e-9))
    edges = lo + bin_width * np.arange(n + 1)
    edges[-1] = hi
    return edges


def angle_histogram(values, bin_width: float = DEFAULT_BIN_WIDTH) -> tuple[np.ndarray, np.ndarray]:
    """Counts over fixed bins covering [0, 180]; bins are half-open except the last."""
    edges = histogram_edges(bin_width)
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges)
    return edges, counts


def spherical_coords(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth in [-180, 180) and polar angle in [0, 180] for 3-D vectors, degrees.

    At the poles the azimuth is 0 by convention.
    """
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != 3:
        raise ContractError(f"spherical coordinates need (N, 3) input, got {V.shape}")
    n = np.linalg.norm(V, axis=1)
    n = np.where(n == 0, 1.0, n)
    U = V / n[:, None]
    theta = np.degrees(np.arccos(np.clip(U[:, 2], -1.0, 1.0)))
    on_axis = (U[:, 0] == 0) & (U[:, 1] == 0)
    phi = np.where(on_axis, 0.0, np.degrees(np.arctan2(U[:, 1], U[:, 0])))
    phi = np.where(phi >= 180.0, phi - 360.0, phi)
    return phi, theta


@dataclass
class SphereHistogram:
    phi_edges: np.ndarray
    theta_edges: np.ndarray
    counts: np.ndarray  # (M, n_phi, n_theta)
    markers: list[tuple[str, int, float, float]]  # (kind, class, phi, theta)

    def rows(self):
        """Non-zero cells as (phi_bin, theta_bin, class, count)."""
        for j, a, b in zip(*np.nonzero(self.counts)):
            yield int(a), int(b), int(j), int(self.counts[j, a, b])


def spherical_surface_histogram(embeddings, labels, prototypes, cell: float = DEFAULT_BIN_WIDTH) -> SphereHistogram:
    """Per-class (phi, theta) counts of length-normalized 3-D embeddings.

    Markers hold each prototype direction (``weight``) and each class's mean
    unit embedding (``center``).
    """
    H = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    C = _as_matrix(prototypes)
    if H.ndim != 2 or H.shape[1] != 3 or C.shape[1] != 3:
        raise ContractError("sphere histogram is only defined for 3-D latent spaces")
    phi_edges = histogram_edges(cell, -180.0, 180.0)
    theta_edges = histogram_edges(cell, 0.0, 180.0)
    phi, theta = spherical_coords(H)
    M = C.shape[0]
    counts = np.zeros((M, len(phi_edges) - 1, len(theta_edges) - 1), dtype=np.int64)
    for j in range(M):
        sel = y == j
        c, _, _ = np.histogram2d(phi[sel], theta[sel], bins=[phi_edges, theta_edges])
        counts[j] = c.astype(np.int64)
    markers = []
    wphi, wtheta = spherical_coords(C)
    for j in range(M):
        markers.append(("weight", j, float(wphi[j]), float(wtheta[j])))
    hn = np.linalg.norm(H, axis=1, keepdims=True)
    U = H / np.where(hn == 0, 1.0, hn)
    for j in range(M):
        sel = y == j
        if sel.any():
            m = U[sel].mean(axis=0)
            if np.linalg.norm(m) > 0:
                cphi, ctheta = spherical_coords(m[None, :])
                markers.append(("center", j, float(cphi[0]), float(ctheta[0])))
    return SphereHistogram(phi_edges, theta_edges, counts, markers)


@dataclass
class GeometryReport:
    min_sep: float
    mean_sep: float
    std_sep: float
    scr: float
    inter_hist: tuple[np.ndarray, np.ndarray]
    intra_hist: tuple[np.ndarray, np.ndarray]
    intra_mean: float = float("nan")
    scr_infinite_classes: list[int] = field(default_factory=list)
    scr_empty_classes: list[int] = field(default_factory=list)
    zero_embeddings: int = 0

    def to_json(self) -> dict:
        def hist(h):
            return {"edges": [float(e) for e in h[0]], "counts": [int(c) for c in h[1]]}

        return {
            "min_sep": self.min_sep,
            "mean_sep": self.mean_sep,
            "std_sep": self.std_sep,
            "scr": self.scr,
            "intra_mean": self.intra_mean,
            "scr_infinite_classes": self.scr_infinite_classes,
            "scr_empty_classes": self.scr_empty_classes,
            "zero_embeddings": self.zero_embeddings,
            "inter_hist": hist(self.inter_hist),
            "intra_hist": hist(self.intra_hist),
        }


def geometry_report(embeddings, labels, prototypes, bin_width: float = DEFAULT_BIN_WIDTH) -> GeometryReport:
    C = _as_matrix(prototypes)
    A = inter_class_angles(C)
    min_sep, mean_sep, std_sep = separation_stats(A)
    iu = np.triu_indices(C.shape[0], 1)
    intra, zero = intra_class_angles(embeddings, labels, C)
    s = scr_details(embeddings, labels, C)
    return GeometryReport(
        min_sep=min_sep,
        mean_sep=mean_sep,
        std_sep=std_sep,
        scr=s.scr,
        inter_hist=angle_histogram(A[iu], bin_width),
        intra_hist=angle_histogram(intra, bin_width),
        intra_mean=float(intra.mean()) if intra.size else float("nan"),
        scr_infinite_classes=s.infinite_classes,
        scr_empty_classes=s.empty_classes,
        zero_embeddings=int(zero.sum()),
    )
