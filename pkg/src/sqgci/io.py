"""
Run configuration, binary field files, JSON reports and state directories.

Field file layout (all little endian)::

    offset  size  content
         0     4  magic b"SQF1"
         4     4  u32 version = 1
         8     4  u32 N
        12     4  u32 layout = 0 (row-major samples, axis 0 = x1)
        16     8  f64 period = 2 pi
        24  8N^2  f64 samples

Every write goes to a temporary name in the target directory and is then
renamed, so readers never see half-written files.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import re
import shutil
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .engine import EngineConfig, InitRecipe, IterState, ParamSchedule, StageReport
from .spectral import TorusField

__all__ = [
    "RunConfig",
    "FieldFormatError",
    "HEADER",
    "save_field",
    "load_field",
    "field_file_size",
    "save_report",
    "load_report",
    "save_state",
    "load_state",
    "list_states",
    "state_dir",
]

MAGIC = b"SQF1"
VERSION = 1
LAYOUT_ROW_MAJOR = 0
HEADER = struct.Struct("<4sIIId")

OUT_DIR_ENV = "SQGCI_OUT_DIR"

PathLike = Union[str, os.PathLike]


class FieldFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _pair(text: str) -> Tuple[int, int]:
    parts = [int(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    if len(parts) != 2:
        raise ValueError(f"expected two integers, got {text!r}")
    return parts[0], parts[1]


@dataclass(frozen=True)
class RunConfig:
    """Flat ``key = value`` run description; ``#`` starts a comment."""

    lambda0: int = 12
    b: float = 1.2
    beta: float = 0.3
    alpha: float = 0.6
    gamma: float = 1.0
    nu: float = 0.0
    c0: float = 2.0
    stages: int = 2
    grid: str = "auto"
    grid_cap: int = 8192
    init_k_pi: Tuple[int, int] = (1, 0)
    init_k_mu: Tuple[int, int] = (1, 1)
    init_amp_pi: float = 1.0
    init_amp_mu: float = 1.0
    init_shrink: float = 0.9
    init_margin: float = 0.1
    kappa: float = 1.0
    two_way_tol: float = 1e-9
    band_tol: float = 1e-8
    leakage_tol: float = 1e-10
    iter3_constant: float = 10.0
    k_test: int = 8
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.grid != "auto" and not self.grid.isdigit():
            raise ValueError(f"grid must be 'auto' or a power of two, got {self.grid!r}")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            values[key] = _convert(types[key], val)
        return cls(**values)

    @classmethod
    def load(cls, path: PathLike) -> "RunConfig":
        cfg = cls.from_text(Path(path).read_text())
        env = os.environ.get(OUT_DIR_ENV)
        return dataclasses.replace(cfg, out_dir=env) if env else cfg

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def params(self) -> ParamSchedule:
        return ParamSchedule(self.lambda0, self.b, self.beta, self.alpha, self.gamma,
                             self.nu, self.c0, self.stages)

    def engine_config(self) -> EngineConfig:
        grid = None if self.grid == "auto" else int(self.grid)
        return EngineConfig(
            kappa=self.kappa, grid=grid, grid_cap=self.grid_cap,
            two_way_tol=self.two_way_tol, band_tol=self.band_tol,
            leakage_tol=self.leakage_tol, iter3_constant=self.iter3_constant,
            init=InitRecipe(self.init_k_pi, self.init_k_mu, self.init_amp_pi,
                            self.init_amp_mu, self.init_shrink, self.init_margin),
        )

    def physics_key(self) -> dict:
        """Fields that must agree between a run and its resumption."""
        d = dataclasses.asdict(self)
        for k in ("stages", "out_dir", "k_test", "seed"):
            d.pop(k)
        return d


def _convert(typ, val: str):
    typ = str(typ)
    if "Tuple" in typ:
        return _pair(val)
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    if typ == "str":
        return val
    raise TypeError(typ)


# ---------------------------------------------------------------------------
# atomic writes
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# field files
# ---------------------------------------------------------------------------


def field_file_size(n: int) -> int:
    return HEADER.size + 8 * n * n


def save_field(path: PathLike, f: TorusField):
    header = HEADER.pack(MAGIC, VERSION, f.n, LAYOUT_ROW_MAJOR, 2.0 * math.pi)
    body = np.ascontiguousarray(f.samples, dtype="<f8").tobytes()
    _atomic_write(Path(path), header + body)


def load_field(path: PathLike, band_limit: Optional[float] = None) -> TorusField:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, version, n, layout, period = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION or layout != LAYOUT_ROW_MAJOR:
        raise FieldFormatError(f"{path}: unsupported version {version} / layout {layout}")
    if period != 2.0 * math.pi:
        raise FieldFormatError(f"{path}: unexpected period {period}")
    if len(data) != field_file_size(n):
        raise FieldFormatError(f"{path}: expected {field_file_size(n)} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(n, n)
    return TorusField(arr.astype(np.float64), band_limit)


# ---------------------------------------------------------------------------
# reports and states
# ---------------------------------------------------------------------------


def _dumps(obj) -> bytes:
    return (json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n").encode()


def save_report(path: PathLike, report: StageReport):
    _atomic_write(Path(path), _dumps(report.to_dict()))


def load_report(path: PathLike) -> StageReport:
    return StageReport.from_dict(json.loads(Path(path).read_text()))


FIELD_NAMES = ("eta", "eta_t", "G", "Gt")


def state_dir(root: PathLike, n: int) -> Path:
    return Path(root) / f"state_{n:04d}"


def save_state(root: PathLike, state: IterState, report: StageReport,
               increment: Optional[TorusField] = None) -> Path:
    """Write one state directory atomically (build under a temp name, then rename)."""
    final = state_dir(root, state.n)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=final.parent, prefix=f".{final.name}."))
    try:
        for name in FIELD_NAMES:
            save_field(tmp / f"{name}.sqf", getattr(state, name))
        save_field(tmp / "Pi.sqf", state.Pi)
        save_field(tmp / "mu.sqf", state.mu)
        if increment is not None:
            save_field(tmp / "M.sqf", increment)
        meta = {"n": state.n, "parity_next": state.parity, "grid": state.grid,
                "bands": state.bands}
        _atomic_write(tmp / "meta.json", _dumps(meta))
        save_report(tmp / "report.json", report)
        os.chmod(tmp, 0o755)
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def load_state(path: PathLike) -> Tuple[IterState, StageReport]:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    fields = [load_field(path / f"{k}.sqf", meta["bands"][k]) for k in FIELD_NAMES]
    return IterState(meta["n"], *fields), load_report(path / "report.json")


def list_states(root: PathLike) -> List[Path]:
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and re.fullmatch(r"state_\d{4}", p.name))
