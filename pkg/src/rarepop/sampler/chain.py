"""Retained MCMC draws and their text-file form."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParseError

SCALAR_HEADER = ["iter", "alpha", "beta", "nu", "x_unobs", "r_unobs", "T"]
COMPONENT_HEADER = ["iter", "component_label", "observed_flag", "lambda"]


@dataclass
class Chain:
    """Thinned draws of one run.

    ``lambda_s`` has one column per observed component (for the network model,
    a single column holding the shared rate); ``lambda_unobs`` holds one
    ascending tuple per draw.
    """

    iters: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    nu: np.ndarray
    x_unobs: np.ndarray
    r_unobs: np.ndarray
    T: np.ndarray
    lambda_s: np.ndarray
    lambda_unobs: list
    acceptance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iters)

    @property
    def R_s(self) -> int:
        return self.lambda_s.shape[1]

    def acceptance_rates(self) -> dict:
        return {k: (a / p if p else float("nan")) for k, (p, a) in self.acceptance.items()}

    def scalar(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_chain(chain: Chain, out_dir, prefix: str = "chain") -> dict:
    """Write the scalar CSV, the component CSV and the acceptance JSON; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scalars": out / f"{prefix}_scalars.csv",
        "components": out / f"{prefix}_components.csv",
        "acceptance": out / f"{prefix}_acceptance.json",
    }
    lines = [",".join(SCALAR_HEADER)]
    for i in range(len(chain)):
        lines.append(",".join(_fmt(v) for v in (
            chain.iters[i], chain.alpha[i], chain.beta[i], chain.nu[i],
            chain.x_unobs[i], chain.r_unobs[i], chain.T[i])))
    paths["scalars"].write_text("\n".join(lines) + "\n")
    lines = [",".join(COMPONENT_HEADER)]
    R_s = chain.R_s
    for i in range(len(chain)):
        it = _fmt(chain.iters[i])
        for j in range(R_s):
            lines.append(f"{it},{j},1,{_fmt(chain.lambda_s[i, j])}")
        for k, lam in enumerate(chain.lambda_unobs[i]):
            lines.append(f"{it},{R_s + k},0,{_fmt(lam)}")
    paths["components"].write_text("\n".join(lines) + "\n")
    doc = {
        "acceptance": {k: {"proposed": int(p), "accepted": int(a),
                           "rate": (a / p if p else None)}
                       for k, (p, a) in sorted(chain.acceptance.items())},
        "meta": chain.meta,
    }
    paths["acceptance"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return paths


def _read_csv(path: Path, header: list) -> list:
    if not path.exists():
        raise ParseError("file not found", path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ParseError(f"expected header {','.join(header)}", path, 1)
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
    return rows[1:]


def read_chain(out_dir, prefix: str = "chain") -> Chain:
    out = Path(out_dir)
    spath = out / f"{prefix}_scalars.csv"
    rows = _read_csv(spath, SCALAR_HEADER)
    try:
        iters = np.array([int(r[0]) for r in rows], dtype=np.int64)
        cols = [np.array([float(r[k]) for r in rows]) for k in (1, 2, 3)]
        ints = [np.array([int(r[k]) for r in rows], dtype=np.int64) for k in (4, 5, 6)]
    except ValueError as exc:
        raise ParseError(f"malformed value: {exc}", spath) from None
    cpath = out / f"{prefix}_components.csv"
    crow = _read_csv(cpath, COMPONENT_HEADER)
    index = {int(it): i for i, it in enumerate(iters)}
    obs = [dict() for _ in iters]
    unobs = [dict() for _ in iters]
    for lineno, r in enumerate(crow, start=2):
        try:
            i = index[int(r[0])]
            (obs if int(r[2]) else unobs)[i][int(r[1])] = float(r[3])
        except (KeyError, ValueError):
            raise ParseError(f"bad component row {','.join(r)}", cpath, lineno) from None
    R_s = len(obs[0]) if obs else 0
    lambda_s = np.array([[o[j] for j in sorted(o)] for o in obs], dtype=float).reshape(len(iters), R_s)
    lambda_unobs = [tuple(u[k] for k in sorted(u)) for u in unobs]
    acc, meta = {}, {}
    apath = out / f"{prefix}_acceptance.json"
    if apath.exists():
        doc = json.loads(apath.read_text())
        acc = {k: (v["proposed"], v["accepted"]) for k, v in doc.get("acceptance", {}).items()}
        meta = doc.get("meta", {})
    return Chain(iters, cols[0], cols[1], cols[2], ints[0], ints[1], ints[2],
                 lambda_s, lambda_unobs, acc, meta)
