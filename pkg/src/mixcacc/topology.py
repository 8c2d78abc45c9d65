"""Platoon composition strings, leader election and connectivity matrices.

A platoon is described by a string over ``-APLG``: an optional independent
head ``-`` (profile-driven, position 0 only) followed by controller letters.
Every follower elects as its communication leader the nearest vehicle ahead
running a different controller; if no such vehicle exists, the follower falls
back to an external reference (encoded as ``None``).

The information flow induced by the controllers is summarized in a binary
matrix: row i marks the vehicles whose state vehicle i needs.  The extended
variant adds a leading column for the external reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INDEPENDENT = "-"
CONTROLLER_LETTERS = "APLG"
ALPHABET = INDEPENDENT + CONTROLLER_LETTERS

#: Election result of a vehicle that tracks an external reference instead of
#: a platoon member.
EXTERNAL_REF = None


class ConfigError(ValueError):
    """Raised for malformed platoon composition strings."""


@dataclass(frozen=True)
class PlatoonConfig:
    """Immutable, validated platoon composition."""

    controllers: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.controllers)

    def __str__(self) -> str:
        return "".join(self.controllers)

    def __iter__(self):
        return iter(self.controllers)

    def __getitem__(self, i):
        return self.controllers[i]


def parse_config(text: str) -> PlatoonConfig:
    """Parse and validate a composition string such as ``-PLG``."""
    if len(text) < 2:
        raise ConfigError(f"platoon needs at least 2 vehicles, got {text!r}")
    for pos, letter in enumerate(text):
        if letter not in ALPHABET:
            raise ConfigError(
                f"invalid controller letter {letter!r} at position {pos} in {text!r}"
            )
        if letter == INDEPENDENT and pos != 0:
            raise ConfigError(
                f"independent head marker only allowed at position 0, found at {pos} in {text!r}"
            )
    return PlatoonConfig(tuple(text))


def format_config(cfg: PlatoonConfig) -> str:
    """Inverse of :func:`parse_config`."""
    return str(cfg)


def elect_ego_leaders(cfg: PlatoonConfig | str) -> dict[int, int | None]:
    """Leader election for every follower.

    Returns a map from follower index (1..N-1) to the index of the nearest
    preceding vehicle with a different controller, or :data:`EXTERNAL_REF`
    when all preceding vehicles run the same controller.
    """
    if isinstance(cfg, str):
        cfg = parse_config(cfg)
    leaders: dict[int, int | None] = {}
    for i in range(1, cfg.size):
        leaders[i] = EXTERNAL_REF
        for j in range(i - 1, -1, -1):
            if cfg[j] != cfg[i]:
                leaders[i] = j
                break
    return leaders


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """Binary information-need matrix; optionally with an external-reference
    column prepended."""

    cells: np.ndarray
    has_external_ref: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def to_lists(self) -> list[list[int]]:
        return self.cells.astype(int).tolist()

    def to_text(self) -> str:
        """Render as a grid; the external-reference column is separated by a bar."""
        lines = []
        for row in self.cells:
            items = [str(int(x)) for x in row]
            if self.has_external_ref:
                lines.append(items[0] + " | " + " ".join(items[1:]))
            else:
                lines.append(" ".join(items))
        return "\n".join(lines)


def _fill_rows(cfg: PlatoonConfig, cells: np.ndarray, col0: int) -> None:
    """Mark controller information needs; vehicle j lives in column col0+j."""
    leaders = elect_ego_leaders(cfg)
    for i, letter in enumerate(cfg):
        cells[i, col0 + i] = 1
        if letter == INDEPENDENT:
            continue
        if i > 0:
            cells[i, col0 + i - 1] = 1
        if letter in ("P", "G"):
            j = leaders.get(i, EXTERNAL_REF)
            if j is not EXTERNAL_REF:
                cells[i, col0 + j] = 1
        if letter == "G" and i + 1 < cfg.size:
            cells[i, col0 + i + 1] = 1


def connectivity_matrix(cfg: PlatoonConfig | str) -> ConnectivityMatrix:
    """Square N x N matrix restricted to platoon members."""
    if isinstance(cfg, str):
        cfg = parse_config(cfg)
    cells = np.zeros((cfg.size, cfg.size), dtype=np.int8)
    _fill_rows(cfg, cells, col0=0)
    return ConnectivityMatrix(cells, has_external_ref=False)


def extended_connectivity_matrix(
    cfg: PlatoonConfig | str,
    head_externally_guided: bool = False,
) -> ConnectivityMatrix:
    """N x (N+1) matrix with a leading external-reference column.

    The external column is set for spring-damper vehicles whose election fell
    back to the external reference, and for the independent head when it is
    driven by an external speed profile.
    """
    if isinstance(cfg, str):
        cfg = parse_config(cfg)
    cells = np.zeros((cfg.size, cfg.size + 1), dtype=np.int8)
    _fill_rows(cfg, cells, col0=1)
    leaders = elect_ego_leaders(cfg)
    for i, letter in enumerate(cfg):
        if letter == "G" and leaders.get(i, EXTERNAL_REF) is EXTERNAL_REF:
            cells[i, 0] = 1
        elif letter == INDEPENDENT and head_externally_guided:
            cells[i, 0] = 1
    return ConnectivityMatrix(cells, has_external_ref=True)


def classify_matrix(matrix: ConnectivityMatrix) -> dict[str, bool]:
    """Shape classification used in reports.

    Triangularity is only defined for square matrices; any upward link (for
    example a spring-damper successor coupling) breaks it.
    """
    rows, cols = matrix.shape
    square = rows == cols and not matrix.has_external_ref
    lower = bool(square and not np.triu(matrix.cells, k=1).any())
    return {"square": square, "lower_triangular": lower}


def matrix_diff(a: ConnectivityMatrix, b: ConnectivityMatrix) -> list[tuple[int, int, int, int]]:
    """Cell-level differences ``(row, col, a_value, b_value)`` between two
    matrices of equal shape."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = []
    rows, cols = a.shape
    for i in range(rows):
        for j in range(cols):
            va, vb = int(a.cells[i, j]), int(b.cells[i, j])
            if va != vb:
                out.append((i, j, va, vb))
    return out
