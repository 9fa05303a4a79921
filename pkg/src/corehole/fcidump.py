"""Molpro-style FCIDUMP reader and writer.

Integrals are spatial and in chemists' notation ``(ij|kl)`` with 1-based
indices; they are expanded to the interleaved spin-orbital basis on read.
"""
from __future__ import annotations

import io
import logging
import re
from pathlib import Path

import numpy as np

from .hamiltonian import Hamiltonian

log = logging.getLogger(__name__)


class FcidumpError(ValueError):
    pass


_HEADER_END = re.compile(r"(&END|/)\s*$", re.IGNORECASE | re.MULTILINE)


def _parse_header(text: str) -> dict:
    body = re.sub(r"^\s*&FCI", "", text, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    fields: dict[str, list[str]] = {}
    key = None
    for tok in re.split(r"[,\s]+", body):
        if not tok:
            continue
        if "=" in tok:
            key, _, val = tok.partition("=")
            key = key.upper()
            fields[key] = [val] if val else []
        elif key is not None:
            fields[key].append(tok)
        else:
            raise FcidumpError(f"malformed header token {tok!r}")
    out = {}
    try:
        for k, vals in fields.items():
            if k in ("NORB", "NELEC", "MS2", "ISYM", "UHF", "IUHF"):
                out[k] = int(vals[0])
            elif k == "ORBSYM":
                out[k] = [int(v) for v in vals if v]
    except (ValueError, IndexError) as exc:
        raise FcidumpError(f"malformed header: {exc}") from exc
    for required in ("NORB", "NELEC"):
        if required not in out:
            raise FcidumpError(f"header lacks {required}")
    return out


def read_spatial(source) -> tuple[dict, np.ndarray, np.ndarray, float]:
    """Parse an FCIDUMP into ``(header, h_ij, (ij|kl), constant)``."""
    if isinstance(source, (bytes, bytearray)):
        text = source.decode()
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                      and Path(source).exists()):
        text = Path(source).read_text()
    elif hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode()
    else:
        text = str(source)
    m = _HEADER_END.search(text)
    if not text.lstrip().upper().startswith("&FCI") or m is None:
        raise FcidumpError("missing &FCI ... &END namelist header")
    header = _parse_header(text[: m.end()])
    norb = header["NORB"]
    orbsym = header.get("ORBSYM")
    h1 = np.zeros((norb, norb))
    eri = np.zeros((norb, norb, norb, norb))
    const = 0.0
    warned = False
    for lineno, line in enumerate(text[m.end():].splitlines(), 1):
        parts = line.replace("D", "E").replace("d", "e").split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"data line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            val = float(parts[0])
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"data line {lineno}: {exc}") from exc
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise FcidumpError(f"data line {lineno}: index out of range 0..{norb}")
        if orbsym and not warned and i > 0:
            labels = [orbsym[x - 1] - 1 for x in (i, j, k, l) if x > 0]
            irrep = 0
            for s in labels:
                irrep ^= s
            if irrep != 0:
                log.warning("integral %s breaks orbital symmetry labels; labels ignored", parts[1:])
                warned = True
        if i == j == k == l == 0:
            const = val
        elif k == 0 and l == 0:
            if j == 0:
                # orbital-energy lines (i 0 0 0) carry no Hamiltonian data
                continue
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = val
        else:
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for p, q, r, s in ((a, b, c, d), (b, a, c, d), (a, b, d, c), (b, a, d, c),
                               (c, d, a, b), (d, c, a, b), (c, d, b, a), (d, c, b, a)):
                eri[p, q, r, s] = val
    return header, h1, eri, const


def spatial_to_spin(h_spatial: np.ndarray, eri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand spatial integrals to antisymmetrized interleaved spin-orbital ones."""
    norb = h_spatial.shape[0]
    n = 2 * norb
    spin = np.arange(n) % 2
    sp = np.arange(n) // 2
    h1 = np.kron(h_spatial, np.eye(2))
    # <pq|rs> = (pr|qs) delta(s_p, s_r) delta(s_q, s_s)
    g = eri[np.ix_(sp, sp, sp, sp)].transpose(0, 2, 1, 3)
    same = spin[:, None] == spin[None, :]
    g = g * same[:, None, :, None] * same[None, :, None, :]
    v2 = g - g.transpose(0, 1, 3, 2)
    return h1, v2


def load_fcidump(source) -> Hamiltonian:
    """Read an FCIDUMP (path, text, bytes or stream) into a :class:`Hamiltonian`."""
    header, hs, eri, const = read_spatial(source)
    h1, v2 = spatial_to_spin(hs, eri)
    return Hamiltonian(h1, v2, const, header["NELEC"])


def spin_to_spatial(h: Hamiltonian) -> tuple[np.ndarray, np.ndarray]:
    n = h.n_spin_orbitals
    if n % 2:
        raise FcidumpError("odd spin-orbital count has no spatial origin")
    up, dn = np.arange(0, n, 2), np.arange(1, n, 2)
    hs = h.h1[np.ix_(up, up)]
    # (ij|kl) = <i k|j l> with i,j up and k,l down
    eri = h.v2[np.ix_(up, dn, up, dn)].transpose(0, 2, 1, 3)
    return hs, eri


def write_fcidump(h: Hamiltonian, target=None, tol: float = 0.0, ms2: int = 0) -> str:
    """Serialize ``h`` as FCIDUMP text; also written to ``target`` if given."""
    hs, eri = spin_to_spatial(h)
    norb = hs.shape[0]
    buf = io.StringIO()
    buf.write(f"&FCI NORB={norb},NELEC={h.n_electrons},MS2={ms2},\n")
    buf.write(" ORBSYM=" + ",".join("1" for _ in range(norb)) + ",\n ISYM=1,\n&END\n")
    for i in range(norb):
        for j in range(i + 1):
            for k in range(norb):
                for l in range(k + 1):
                    if i * (i + 1) // 2 + j < k * (k + 1) // 2 + l:
                        continue
                    v = eri[i, j, k, l]
                    if abs(v) > tol:
                        buf.write(f"{float(v)!r:>24} {i + 1:4d} {j + 1:4d} {k + 1:4d} {l + 1:4d}\n")
    for i in range(norb):
        for j in range(i + 1):
            if abs(hs[i, j]) > tol:
                buf.write(f"{float(hs[i, j])!r:>24} {i + 1:4d} {j + 1:4d}    0    0\n")
    buf.write(f"{float(h.scalar_shift)!r:>24}    0    0    0    0\n")
    text = buf.getvalue()
    if target is not None:
        if hasattr(target, "write"):
            target.write(text)
        else:
            Path(target).write_text(text)
    return text
