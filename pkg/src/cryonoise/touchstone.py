"""Touchstone v1 (.s1p / .s2p) reader and writer.

Option line grammar: ``# <HZ|KHZ|MHZ|GHZ> S <RI|MA|DB> R <z0>``; any token
may be omitted and defaults to ``GHZ S MA R 50``.  Two-port rows carry
``f S11 S21 S12 S22`` on a single line.
"""

import numpy as np

from .errors import TouchstoneError
from .sparams import OnePortSParams, TwoPortSParams

UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
FORMATS = ("RI", "MA", "DB")


def _parse_option_line(line, lineno):
    opts = {"unit": "GHZ", "fmt": "MA", "z0": 50.0}
    tokens = line[1:].split()
    i = 0
    while i < len(tokens):
        tok = tokens[i].upper()
        if tok in UNITS:
            opts["unit"] = tok
        elif tok in FORMATS:
            opts["fmt"] = tok
        elif tok == "S":
            pass
        elif tok in ("Y", "Z", "H", "G"):
            raise TouchstoneError(f"parameter type {tok} not supported (S only)", lineno)
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneError("missing reference impedance after R", lineno)
            try:
                opts["z0"] = float(tokens[i + 1])
            except ValueError:
                raise TouchstoneError(f"bad reference impedance {tokens[i + 1]!r}", lineno) from None
            i += 1
        else:
            raise TouchstoneError(f"malformed option line: unexpected token {tokens[i]!r}", lineno)
        i += 1
    return opts


def _to_complex(a, b, fmt):
    if fmt == "RI":
        return a + 1j * b
    mag = a if fmt == "MA" else 10 ** (a / 20)
    return mag * np.exp(1j * np.deg2rad(b))


def parse_touchstone(text, nports=None):
    """Parse Touchstone v1 content (``str`` or ``bytes``).

    Returns :class:`TwoPortSParams` for two-port data and
    :class:`OnePortSParams` for one-port data.  ``nports`` forces the port
    count; otherwise it is inferred from the first data row.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    opts = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported (v1 only)", lineno)
        if line.startswith("#"):
            if opts is not None:
                raise TouchstoneError("duplicate option line", lineno)
            opts = _parse_option_line(line, lineno)
            continue
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise TouchstoneError(f"non-numeric data: {line!r}", lineno) from None
        if nports is None:
            if len(values) == 3:
                nports = 1
            elif len(values) == 9:
                nports = 2
            else:
                raise TouchstoneError(f"expected 3 or 9 columns, got {len(values)}", lineno)
        want = 3 if nports == 1 else 9
        if len(values) != want:
            raise TouchstoneError(f"expected {want} columns, got {len(values)}", lineno)
        if rows and values[0] <= rows[-1][1][0]:
            raise TouchstoneError("frequencies must be strictly ascending", lineno)
        rows.append((lineno, values))
    if opts is None:
        opts = _parse_option_line("#", None)
    if not rows:
        raise TouchstoneError("no data rows")
    data = np.array([v for _, v in rows])
    freqs = data[:, 0] * UNITS[opts["unit"]]
    if freqs[0] <= 0:
        raise TouchstoneError("frequencies must be positive", rows[0][0])
    pairs = [_to_complex(data[:, 1 + 2 * k], data[:, 2 + 2 * k], opts["fmt"]) for k in range(want // 2)]
    if nports == 1:
        return OnePortSParams(freqs, pairs[0], z0=opts["z0"])
    s11, s21, s12, s22 = pairs
    return TwoPortSParams.from_entries(freqs, s11, s12, s21, s22, z0=opts["z0"])


def _pair(z, fmt):
    if fmt == "RI":
        return z.real, z.imag
    ang = float(np.rad2deg(np.angle(z)))
    if fmt == "MA":
        return abs(z), ang
    return 20 * np.log10(abs(z)) if z != 0 else -np.inf, ang


def write_touchstone(net, fmt="RI", unit="HZ", comment=None):
    """Serialise a one- or two-port network; floats are written with full precision."""
    fmt = fmt.upper()
    unit = unit.upper()
    if fmt not in FORMATS or unit not in UNITS:
        raise TouchstoneError(f"unsupported format/unit {fmt}/{unit}")
    lines = []
    if comment:
        lines.extend(f"! {c}" for c in comment.splitlines())
    lines.append(f"# {unit} S {fmt} R {net.z0:g}")
    scale = UNITS[unit]
    if isinstance(net, OnePortSParams):
        cols = [net.gamma]
    else:
        cols = [net.s11, net.s21, net.s12, net.s22]
    for k, f in enumerate(net.freqs):
        vals = [repr(float(f / scale))]
        for c in cols:
            vals.extend(repr(float(v)) for v in _pair(complex(c[k]), fmt))
        lines.append(" ".join(vals))
    return "\n".join(lines) + "\n"


def read_touchstone(path, nports=None):
    with open(path, "rb") as fh:
        return parse_touchstone(fh.read(), nports=nports)
