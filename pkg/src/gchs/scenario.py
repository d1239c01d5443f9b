"""Scenario files: an INI dialect describing a manifold, a Hamiltonian and runs.

Expression values are double-quoted; lists are comma separated.  Example::

    [manifold]
    dim = 2
    coords = "q", "p"
    J = canonical
    chi = "0.3*q"

    [hamiltonian]
    H = "0.5*p^2 + 10*q^2"

    [audit]
    box = -2:2, -2:2
    samples = 500
    seed = 1
    identities = all
    pool = "q*p", "q^2 + p", "p^3 - q", "q*p^2", "1 + q + p^2", "q^2*p", "sin(q)*p", "exp(0.3*q)*p"

    [simulate]
    x0 = 1, 0
    t0 = 0
    t1 = 10
    h = 1e-3
    method = RK4
    convention = transport
    observables = "q*p"

See ``docs/scenario-format.md`` for the full grammar.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .audit import AuditProblem, catalog_ids
from .dynamics import CONVENTIONS, METHODS, TrajectoryConfig
from .expr import ExprError, ScalarExpr, parse
from .manifold import ManifoldError, PoissonWManifold

__all__ = ["ScenarioError", "Scenario", "AuditSettings", "SimulateSettings", "load_scenario", "parse_scenario"]

SECTIONS = ("manifold", "frame", "hamiltonian", "audit", "simulate")
_KEYS = {
    "manifold": {"dim", "coords", "chi", "J", "A"},
    "hamiltonian": {"H"},
    "audit": {"box", "samples", "seed", "identities", "pool", "v"},
    "simulate": {"x0", "t0", "t1", "h", "method", "convention", "observables", "v"},
}
_J_ENTRY = re.compile(r"J(\d)(\d)$")
_FRAME_ROW = re.compile(r"E(\d+)$")
_QUOTED = re.compile(r'\s*"([^"]*)"\s*')


class ScenarioError(ValueError):
    """Malformed scenario; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class AuditSettings:
    box: tuple
    samples: int
    seed: int
    identities: tuple | str
    pool: tuple
    v: tuple | None = None


@dataclass(frozen=True)
class SimulateSettings:
    x0: tuple
    t0: float
    t1: float
    h: float
    method: str
    convention: str
    observables: tuple = ()
    v: tuple | None = None


@dataclass
class Scenario:
    name: str
    manifold: PoissonWManifold
    H: ScalarExpr | None
    audit: AuditSettings | None = None
    simulate: SimulateSettings | None = None
    source: str = field(default="", repr=False)

    def audit_problem(self) -> AuditProblem:
        if self.audit is None:
            raise ScenarioError("scenario has no [audit] section")
        return AuditProblem(self.manifold, self.H, self.audit.pool, self.audit.box, self.audit.v, self.name)

    def trajectory_config(self, convention: str | None = None) -> TrajectoryConfig:
        if self.simulate is None:
            raise ScenarioError("scenario has no [simulate] section")
        s = self.simulate
        return TrajectoryConfig(self.manifold, self.H, s.x0, s.t0, s.t1, s.h, s.method,
                                convention or s.convention, s.observables)

    def echo(self) -> str:
        """Normalized rendering: every expression fully parenthesized."""
        M = self.manifold
        names = M.names or tuple(f"x{i + 1}" for i in range(M.n))
        lines = [f"# scenario {self.name}", "[manifold]", f"dim = {M.n}",
                 "coords = " + ", ".join(f'"{a}"' for a in names)]
        if M.canonical:
            lines.append("J = canonical")
        else:
            for i in range(M.n):
                for j in range(i + 1, M.n):
                    lines.append(f'J{i + 1}{j + 1} = "{M.J[i][j]}"')
        lines.append(f'chi = "{M.chi}"')
        if M.structural_override is not None:
            lines.append("A = " + _qjoin(M.structural_override))
        if M.frame is not None:
            lines.append("[frame]")
            lines += [f"E{i + 1} = " + _qjoin(row) for i, row in enumerate(M.frame)]
        if self.H is not None:
            lines += ["[hamiltonian]", f'H = "{self.H}"']
        if self.audit is not None:
            a = self.audit
            lines += ["[audit]", "box = " + ", ".join(f"{lo!r}:{hi!r}" for lo, hi in a.box),
                      f"samples = {a.samples}", f"seed = {a.seed}",
                      "identities = " + (a.identities if isinstance(a.identities, str) else ", ".join(a.identities)),
                      "pool = " + _qjoin(a.pool)]
            if a.v is not None:
                lines.append("v = " + ", ".join(repr(c) for c in a.v))
        if self.simulate is not None:
            s = self.simulate
            lines += ["[simulate]", "x0 = " + ", ".join(repr(c) for c in s.x0), f"t0 = {s.t0!r}",
                      f"t1 = {s.t1!r}", f"h = {s.h!r}", f"method = {s.method}", f"convention = {s.convention}"]
            if s.observables:
                lines.append("observables = " + _qjoin(s.observables))
            if s.v is not None:
                lines.append("v = " + ", ".join(repr(c) for c in s.v))
        return "\n".join(lines) + "\n"


def _qjoin(exprs) -> str:
    return ", ".join(f'"{e}"' for e in exprs)


# -- raw positions ---------------------------------------------------------------------


def _positions(text: str) -> dict:
    """(section, key) -> (line, column of the value) for error reporting."""
    pos = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        m = re.match(r"\s*\[([^\]]+)\]", raw)
        if m:
            section = m.group(1).strip()
            pos[(section, None)] = (lineno, m.start(1) + 1)
            continue
        m = re.match(r"\s*([^=:\s][^=]*?)\s*=\s*", raw)
        if m and section is not None:
            pos[(section, m.group(1))] = (lineno, m.end() + 1)
    return pos


class _Reader:
    def __init__(self, text: str, name: str):
        self.name = name
        self.text = text
        self.pos = _positions(text)
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#", ";"), strict=True)
        cp.optionxform = str
        try:
            cp.read_string(text, source=name)
        except configparser.MissingSectionHeaderError as exc:
            raise ScenarioError("content before the first [section]", exc.lineno) from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0] if exc.errors else (None, "")
            raise ScenarioError(f"cannot parse {str(line).strip()!r} (expected key = value)", lineno) from None
        except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
            raise ScenarioError(exc.message.split(": ", 1)[-1], exc.lineno) from None
        self.cp = cp
        for sec in cp.sections():
            if sec not in SECTIONS:
                raise ScenarioError(f"unknown section [{sec}]", *self.where(sec))
            allowed = _KEYS.get(sec)
            for key in cp[sec]:
                if allowed is None:
                    if not _FRAME_ROW.match(key):
                        raise ScenarioError(f"unknown key {key!r} in [frame] (expected E1, E2, ...)",
                                            *self.where(sec, key))
                elif key not in allowed and not (sec == "manifold" and _J_ENTRY.match(key)):
                    raise ScenarioError(f"unknown key {key!r} in [{sec}]", *self.where(sec, key))

    def where(self, section, key=None):
        return self.pos.get((section, key), (None, None))

    def has(self, section, key=None) -> bool:
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def raw(self, section, key, required=True):
        if not self.cp.has_section(section):
            if required:
                raise ScenarioError(f"missing section [{section}]")
            return None
        if not self.cp.has_option(section, key):
            if required:
                raise ScenarioError(f"missing key {key!r} in [{section}]", *self.where(section))
            return None
        return self.cp[section][key]

    def error(self, section, key, message, offset=0):
        line, col = self.where(section, key)
        raise ScenarioError(message, line, None if col is None else col + offset)

    def quoted(self, section, key, required=True) -> list[tuple[str, int]]:
        """Double-quoted strings with their offsets inside the value."""
        value = self.raw(section, key, required)
        if value is None:
            return []
        out, i = [], 0
        while True:
            m = _QUOTED.match(value, i)
            if not m:
                self.error(section, key, "expected a double-quoted expression", i)
            out.append((m.group(1), m.start(1)))
            i = m.end()
            if i == len(value):
                break
            if value[i] != ",":
                self.error(section, key, "unexpected text after expression", i)
            i += 1
        if not out:
            self.error(section, key, "expected at least one double-quoted expression")
        return out

    def numbers(self, section, key, required=True, kind=float):
        value = self.raw(section, key, required)
        if value is None:
            return None
        out = []
        offset = 0
        for part in value.split(","):
            token = part.strip()
            try:
                out.append(kind(token))
            except ValueError:
                self.error(section, key, f"not a number: {token!r}", offset + part.find(token))
            offset += len(part) + 1
        return out

    def scalar(self, section, key, default=None, kind=float):
        if not self.has(section, key):
            if default is None:
                self.error(section, None, f"missing key {key!r} in [{section}]")
            return default
        vals = self.numbers(section, key, kind=kind)
        if len(vals) != 1:
            self.error(section, key, f"{key} takes a single value")
        return vals[0]


def _expr(rd: _Reader, section, key, text, offset, n, names) -> ScalarExpr:
    try:
        return parse(text, n, names)
    except ExprError as exc:
        col = None if exc.pos is None else offset + exc.pos
        rd.error(section, key, f"{exc.reason} in {text!r}", col if col is not None else 0)


def _single_expr(rd, section, key, n, names, required=True):
    items = rd.quoted(section, key, required)
    if not items:
        return None
    if len(items) != 1:
        rd.error(section, key, f"{key} takes a single expression")
    text, off = items[0]
    return _expr(rd, section, key, text, off, n, names)


def _box(rd: _Reader, n: int):
    value = rd.raw("audit", "box")
    parts = [p.strip() for p in value.split(",")]
    box = []
    for k, part in enumerate(parts):
        lo_hi = part.split(":")
        try:
            lo, hi = (float(t) for t in lo_hi)
        except ValueError:
            rd.error("audit", "box", f"interval {k + 1} must look like lo:hi, got {part!r}",
                     value.find(part))
        if not hi > lo:
            rd.error("audit", "box", f"interval {k + 1} is empty ({lo} >= {hi})", value.find(part))
        box.append((lo, hi))
    if len(box) == 1:
        box = box * n
    if len(box) != n:
        rd.error("audit", "box", f"box needs 1 or {n} intervals, got {len(box)}")
    return tuple(box)


def parse_scenario(text: str, name: str = "scenario", require_hamiltonian: bool = True) -> Scenario:
    rd = _Reader(text, name)
    if not rd.has("manifold"):
        raise ScenarioError("missing section [manifold]")
    n = rd.scalar("manifold", "dim", kind=int)
    if n < 1:
        rd.error("manifold", "dim", "dim must be >= 1")

    names = None
    if rd.has("manifold", "coords"):
        items = rd.quoted("manifold", "coords")
        names = tuple(t.strip() for t, _ in items)
        if len(names) != n:
            rd.error("manifold", "coords", f"coords lists {len(names)} names for dim = {n}")
        for t in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", t) or t in ("pi", "e"):
                rd.error("manifold", "coords", f"invalid coordinate name {t!r}")
        if len(set(names)) != n:
            rd.error("manifold", "coords", "coordinate names must be distinct")

    chi = _single_expr(rd, "manifold", "chi", n, names, required=False) or parse("0", n, names)

    entries = {k: v for k, v in rd.cp["manifold"].items() if _J_ENTRY.match(k)}
    J_key = rd.raw("manifold", "J", required=False)
    if J_key is not None and entries:
        rd.error("manifold", "J", "give either J = canonical or explicit Jij entries, not both")
    if J_key is not None:
        if J_key.strip() != "canonical":
            rd.error("manifold", "J", 'J must be "canonical" (or use explicit Jij entries)')
        if n % 2:
            rd.error("manifold", "J", f"the canonical structure needs an even dimension, got {n}")
        J = "canonical"
    else:
        if not entries:
            rd.error("manifold", None, "missing structure matrix: J = canonical or entries Jij")
        J = [[parse("0", n, names)] * n for _ in range(n)]
        given = set()
        for key in entries:
            i, j = (int(c) - 1 for c in _J_ENTRY.match(key).groups())
            if not (0 <= i < n and 0 <= j < n):
                rd.error("manifold", key, f"{key} is outside a {n}x{n} matrix")
            J[i][j] = _single_expr(rd, "manifold", key, n, names)
            given.add((i, j))
        for i, j in given:
            if (j, i) not in given:
                J[j][i] = parse(f"-({J[i][j]})", n, names)
    override = None
    if rd.has("manifold", "A"):
        items = rd.quoted("manifold", "A")
        if len(items) != n:
            rd.error("manifold", "A", f"A needs {n} components, got {len(items)}")
        override = [_expr(rd, "manifold", "A", t, o, n, names) for t, o in items]

    frame = None
    if rd.has("frame"):
        rows = {}
        for key in rd.cp["frame"]:
            k = int(_FRAME_ROW.match(key).group(1)) - 1
            if not 0 <= k < n:
                rd.error("frame", key, f"{key} is not a frame index for dim = {n}")
            items = rd.quoted("frame", key)
            if len(items) != n:
                rd.error("frame", key, f"{key} needs {n} components, got {len(items)}")
            rows[k] = [_expr(rd, "frame", key, t, o, n, names) for t, o in items]
        frame = [rows.get(k, [parse("1" if a == k else "0", n, names) for a in range(n)]) for k in range(n)]

    H = None
    if rd.has("hamiltonian"):
        H = _single_expr(rd, "hamiltonian", "H", n, names)
    elif require_hamiltonian:
        raise ScenarioError("missing section [hamiltonian]")

    audit = None
    box = None
    if rd.has("audit"):
        box = _box(rd, n)
        samples = rd.scalar("audit", "samples", 500, kind=int)
        if samples < 1:
            rd.error("audit", "samples", "samples must be >= 1")
        seed = rd.scalar("audit", "seed", 0, kind=int)
        ident = rd.raw("audit", "identities", required=False) or "all"
        if ident.strip() == "all":
            identities = "all"
        else:
            identities = tuple(t.strip() for t in ident.split(",") if t.strip())
            unknown = [t for t in identities if t not in catalog_ids()]
            if unknown:
                rd.error("audit", "identities", f"unknown identities: {', '.join(unknown)}")
        pool = tuple(_expr(rd, "audit", "pool", t, o, n, names) for t, o in rd.quoted("audit", "pool"))
        if len(pool) < 3:
            rd.error("audit", "pool", "pool needs at least 3 test functions")
        v = _vector(rd, "audit", n)
        audit = AuditSettings(box, samples, seed, identities, pool, v)

    try:
        M = PoissonWManifold.build(n, J, chi, frame, names, override, box)
    except ManifoldError as exc:
        key = "J" if J == "canonical" else next(iter(entries), None)
        line, _ = rd.where("manifold", key)
        raise ScenarioError(f"invalid [manifold]: {exc}", line) from None

    simulate = None
    if rd.has("simulate"):
        if H is None:
            raise ScenarioError("[simulate] needs a [hamiltonian] section", *rd.where("simulate"))
        x0 = rd.numbers("simulate", "x0")
        if len(x0) != n:
            rd.error("simulate", "x0", f"x0 needs {n} components, got {len(x0)}")
        t0 = rd.scalar("simulate", "t0", 0.0)
        t1 = rd.scalar("simulate", "t1")
        h = rd.scalar("simulate", "h")
        if not h > 0:
            rd.error("simulate", "h", "h must be positive")
        if not t1 > t0:
            rd.error("simulate", "t1", "t1 must exceed t0")
        steps = (t1 - t0) / h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            rd.error("simulate", "h", "(t1 - t0) must be a whole number of steps h")
        method = (rd.raw("simulate", "method", required=False) or "RK4").strip().upper()
        if method not in METHODS:
            rd.error("simulate", "method", f"method must be one of {', '.join(METHODS)}")
        convention = (rd.raw("simulate", "convention", required=False) or "transport").strip()
        if convention not in CONVENTIONS:
            rd.error("simulate", "convention", f"convention must be one of {', '.join(CONVENTIONS)}")
        obs = ()
        if rd.has("simulate", "observables"):
            obs = tuple(_expr(rd, "simulate", "observables", t, o, n, names)
                        for t, o in rd.quoted("simulate", "observables"))
        v = _vector(rd, "simulate", n)
        simulate = SimulateSettings(tuple(x0), t0, t1, h, method, convention, obs, v)
        if audit is not None and audit.v is None and v is not None:
            audit = AuditSettings(audit.box, audit.samples, audit.seed, audit.identities, audit.pool, v)

    return Scenario(name, M, H, audit, simulate, text)


def _vector(rd, section, n):
    v = rd.numbers(section, "v", required=False)
    if v is not None and len(v) != n:
        rd.error(section, "v", f"v needs {n} components, got {len(v)}")
    return None if v is None else tuple(v)


def load_scenario(path, require_hamiltonian: bool = True) -> Scenario:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_scenario(text, path.stem, require_hamiltonian)


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package (``abelian``, ``chi-q``, ...)."""
    from importlib.resources import files

    p = files("gchs") / "scenarios" / f"{name}.ini"
    return Path(str(p))
