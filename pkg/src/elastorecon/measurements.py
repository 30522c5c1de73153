"""Displacement data: deterministic noise and the binary field-file format."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .fem import Field
from .mesh import BROKEN, CONFORMING, FeSpace, MeshSpec

MAGIC = "ELASTOFIELD"
VERSION = 1
HEADER_ALIGN = 64


class AliasingWarning(UserWarning):
    pass


class FieldFileError(ValueError):
    pass


def noise_profile(x, y, delta, M=20):
    """Scalar noise amplitude ``delta * sum_{m=-M}^{M} |m|/M cos(2 pi s x) cos(2 pi s y)``,
    ``s = |m| / (M sqrt(delta))``. Both displacement components receive it."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if delta == 0:
        return np.zeros(np.broadcast(x, y).shape)
    out = np.zeros(np.broadcast(x, y).shape)
    sq = np.sqrt(delta)
    for m in range(-M, M + 1):
        s = abs(m) / M
        out += s * np.cos(2 * np.pi * s * x / sq) * np.cos(2 * np.pi * s * y / sq)
    return delta * out


def noise_bound(M=20):
    """Sup of the noise over the domain divided by delta (attained at the origin)."""
    return float(sum(abs(m) / M for m in range(-M, M + 1)))


def add_noise(u, delta, M=20):
    """Nodal interpolant of ``u + noise``; ``u`` is a conforming vector field."""
    if delta < 0:
        raise ValueError("noise level must be nonnegative")
    if M < 1:
        raise ValueError("need at least one noise mode")
    if delta == 0:
        return Field(u.space, u.values.copy())
    s = u.space
    if s.continuity != CONFORMING:
        raise ValueError("noise is interpolated on nodal functions of a conforming space")
    wavelength = np.sqrt(delta)
    spacing = s.mesh.h / s.r
    if wavelength < 2 * spacing:
        warnings.warn(f"noise wavelength {wavelength:.2e} is below twice the nodal spacing {spacing:.2e}; "
                      "the nodal interpolant aliases it", AliasingWarning, stacklevel=2)
    xy = s.node_coords()
    n = noise_profile(xy[:, 0], xy[:, 1], delta, M)
    return Field(s, u.values + n[None, :])


@dataclass
class MeasurementSet:
    u1: Field
    u2: Field
    delta: float = 0.0
    omega1: float = 0.0
    omega2: float = 0.0
    metadata: dict = dc_field(default_factory=dict)

    def noisy(self, delta, M=20):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            return MeasurementSet(add_noise(self.u1, delta, M), add_noise(self.u2, delta, M), delta,
                                  self.omega1, self.omega2, dict(self.metadata, noise_modes=M))


# Field files ----------------------------------------------------------------------
#
# ASCII header of ``key=value`` tokens, space padded to a multiple of 64 bytes
# and terminated by a newline, then little-endian float64 coefficients,
# component-major, each component in lexicographic dof order.

def _format_header(field):
    s = field.space
    x0, x1, y0, y1 = s.mesh.domain
    text = (f"{MAGIC} version={VERSION} nx={s.mesh.nx} ny={s.mesh.ny} r={s.r} continuity={s.continuity} "
            f"ncomp={field.ncomp} domain={x0!r},{x1!r},{y0!r},{y1!r}")
    size = -(-(len(text) + 1) // HEADER_ALIGN) * HEADER_ALIGN
    return (text.ljust(size - 1) + "\n").encode("ascii")


def write_field(field, path):
    if not np.all(np.isfinite(field.values)):
        raise ValueError("refusing to write non-finite coefficients")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_format_header(field))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def _parse_header(raw):
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FieldFileError("header is not ASCII") from exc
    tokens = text.split()
    if not tokens or tokens[0] != MAGIC:
        raise FieldFileError("bad magic")
    kv = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise FieldFileError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    missing = {"version", "nx", "ny", "r", "continuity", "ncomp"} - kv.keys()
    if missing:
        raise FieldFileError(f"header lacks {sorted(missing)}")
    if int(kv["version"]) != VERSION:
        raise FieldFileError(f"unsupported version {kv['version']}")
    return kv


def read_header(path):
    with open(path, "rb") as fh:
        head = fh.read(HEADER_ALIGN)
        while head and not head.endswith(b"\n"):
            chunk = fh.read(HEADER_ALIGN)
            if not chunk:
                raise FieldFileError("unterminated header")
            head += chunk
    kv = _parse_header(head)
    domain = tuple(float(v) for v in kv.get("domain", "0,1,0,1").split(","))
    space = FeSpace(MeshSpec(domain, int(kv["nx"]), int(kv["ny"])), int(kv["r"]), kv["continuity"])
    return space, int(kv["ncomp"]), len(head)


def read_field(path, space=None):
    """Read a field file; ``space`` (optional) must match the header."""
    fspace, ncomp, offset = read_header(path)
    if space is not None and (space.mesh.nx, space.mesh.ny, space.r, space.continuity) != (
            fspace.mesh.nx, fspace.mesh.ny, fspace.r, fspace.continuity):
        raise FieldFileError(f"file holds nx={fspace.mesh.nx} ny={fspace.mesh.ny} r={fspace.r} "
                             f"{fspace.continuity}, expected nx={space.mesh.nx} ny={space.mesh.ny} "
                             f"r={space.r} {space.continuity}")
    data = Path(path).read_bytes()[offset:]
    expected = 8 * ncomp * fspace.dof_count
    if len(data) != expected:
        raise FieldFileError(f"payload length {len(data)} bytes, header implies {expected}")
    vals = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(ncomp, fspace.dof_count)
    return Field(space or fspace, vals)
