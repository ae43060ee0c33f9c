"""Synthetic problem instances and the plain-text distribution file format."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .info import JointDistribution

LOAD_TOL = 1e-9


class DatasetError(ValueError):
    pass


def make_bsc(p_cross: float = 0.1, prior=None) -> JointDistribution:
    """Binary symmetric channel: ``Y`` is ``X`` flipped with probability ``p_cross``."""
    if not 0.0 <= p_cross <= 0.5:
        raise DatasetError(f"p_cross must lie in [0, 0.5], got {p_cross}")
    prior = np.full(2, 0.5) if prior is None else _check_prior(prior, 2)
    cond = np.array([[1 - p_cross, p_cross], [p_cross, 1 - p_cross]])
    return JointDistribution.from_conditional(cond, prior)


@dataclass(frozen=True)
class HierarchicalParams:
    """Row weights of ``p(y|x)`` at the four levels of the 8-class hierarchy."""

    w_self: float = 0.90
    w_pair: float = 0.06
    w_macro: float = 0.01
    w_other: float = 0.005

    def __post_init__(self):
        if not self.w_self > self.w_pair > self.w_macro > self.w_other >= 0:
            raise DatasetError("need w_self > w_pair > w_macro > w_other >= 0")
        total = self.w_self + self.w_pair + 2 * self.w_macro + 4 * self.w_other
        if abs(total - 1.0) > 1e-12:
            raise DatasetError(f"weights give row sum {total}, expected 1")


def hierarchical_conditional(params: HierarchicalParams = HierarchicalParams()) -> np.ndarray:
    cond = np.empty((8, 8))
    for x in range(8):
        for y in range(8):
            if y == x:
                w = params.w_self
            elif y // 2 == x // 2:
                w = params.w_pair
            elif y // 4 == x // 4:
                w = params.w_macro
            else:
                w = params.w_other
            cond[x, y] = w
    return cond


def make_hierarchical_8x8(params: HierarchicalParams = HierarchicalParams(), prior=None) -> JointDistribution:
    """Pairs {0,1},{2,3},{4,5},{6,7} inside macro groups {0..3},{4..7}."""
    prior = np.full(8, 1 / 8) if prior is None else _check_prior(prior, 8)
    return JointDistribution.from_conditional(hierarchical_conditional(params), prior)


def coarsen(joint: JointDistribution, groups) -> JointDistribution:
    """Merge x-values into superclasses; ``groups`` lists x indices per class."""
    return JointDistribution(np.array([joint.p_xy[list(g)].sum(axis=0) for g in groups]))


PAIR_GROUPS = ((0, 1), (2, 3), (4, 5), (6, 7))
MACRO_GROUPS = ((0, 1, 2, 3), (4, 5, 6, 7))


def _check_prior(prior, n: int) -> np.ndarray:
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (n,) or np.any(prior < 0) or abs(prior.sum() - 1) > 1e-12:
        raise DatasetError(f"prior must be a distribution over {n} values")
    return prior


# -- file format -----------------------------------------------------------------
#
#   # optional comment lines
#   x_size 2
#   y_size 2
#   labels_x a b          (optional)
#   0.450000000000000 0.050000000000000
#   0.050000000000000 0.450000000000000


def format_matrix(matrix: np.ndarray, header: dict[str, object], comment: str = "") -> str:
    lines = [f"# {line}" for line in comment.splitlines()]
    lines += [f"{k} {v}" for k, v in header.items()]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in np.asarray(matrix, dtype=float)]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, row_key: str, col_key: str) -> tuple[np.ndarray, dict[str, str]]:
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        first = line.split(None, 1)
        if first[0][0].isalpha():
            header[first[0]] = first[1] if len(first) > 1 else ""
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: cannot parse {line!r}") from exc
    try:
        n_rows, n_cols = int(header[row_key]), int(header[col_key])
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"header must define integer {row_key} and {col_key}") from exc
    if len(rows) != n_rows or any(len(r) != n_cols for r in rows):
        raise DatasetError(f"expected a {n_rows}x{n_cols} body")
    mat = np.array(rows, dtype=float)
    if not np.all(np.isfinite(mat)):
        raise DatasetError("non-finite entries")
    if np.any(mat < 0):
        raise DatasetError("negative probabilities")
    return mat, header


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_joint(joint: JointDistribution, path, comment: str = "") -> Path:
    header = {"x_size": joint.x_size, "y_size": joint.y_size}
    return atomic_write_text(path, format_matrix(joint.p_xy, header, comment))


def load_joint(path, format: str = "text") -> JointDistribution:
    if format != "text":
        raise DatasetError(f"unsupported format {format!r}")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(str(exc)) from exc
    mat, _ = parse_matrix(text, "x_size", "y_size")
    total = mat.sum()
    if abs(total - 1.0) > LOAD_TOL:
        raise DatasetError(f"probabilities sum to {total!r}, not 1 (tolerance {LOAD_TOL})")
    if total != 1.0:
        mat = mat / total
        if abs(mat.sum() - 1.0) > 1e-12:
            raise DatasetError("cannot normalize")
    try:
        return JointDistribution(mat)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc


def save_encoder(enc, path, comment: str = "") -> Path:
    q = np.asarray(enc, dtype=float)
    return atomic_write_text(path, format_matrix(q, {"x_size": q.shape[0], "z_size": q.shape[1]}, comment))


def load_encoder(path) -> np.ndarray:
    mat, _ = parse_matrix(Path(path).read_text(encoding="utf-8"), "x_size", "z_size")
    if np.max(np.abs(mat.sum(axis=1) - 1.0)) > LOAD_TOL:
        raise DatasetError("encoder rows must sum to 1")
    return mat
