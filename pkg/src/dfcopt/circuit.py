"""Resonator geometry, layout templates and random layout sampling.

A layout is an ordered tuple of square open-loop resonators. Index 0 is the
resonator attached to the input port and index ``N - 1`` the one attached to
the output port. Each resonator carries nine numbers::

    x, y, l, w, gap_x, gap_y, gap_h, gap_w, u

of which ``gap_*`` are derived from the other five and are never set
directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

FIELDS = ("x", "y", "l", "w", "gap_x", "gap_y", "gap_h", "gap_w", "u")
FREE_FIELDS = ("x", "y", "l", "w", "u")

MIN_CLEARANCE = 0.02
MAX_REJECTIONS = 1000


class BoundsError(ValueError):
    """A resonator parameter lies outside its allowed interval."""

    def __init__(self, field_name: str, value: float, lo: float, hi: float):
        self.field = field_name
        super().__init__(f"{field_name}={value!r} outside [{lo}, {hi}]")


class SamplingExhausted(RuntimeError):
    """Rejection sampling did not produce a valid layout."""


@dataclass(frozen=True)
class ParamBounds:
    """Closed intervals for every resonator parameter (``u`` is half-open)."""

    x: tuple[float, float] = (0.0, 6.0)
    y: tuple[float, float] = (0.0, 6.0)
    l: tuple[float, float] = (0.57, 0.91)
    w: tuple[float, float] = (0.08, 0.16)
    gap_w: tuple[float, float] = (0.05, 0.20)
    u: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        for name in ("x", "y", "l", "w", "gap_w", "u"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"bounds for {name} must satisfy lower < upper, got {(lo, hi)}")

    def interval(self, name: str) -> tuple[float, float]:
        """Interval for any of the nine fields; derived fields borrow from their source."""
        if name in ("gap_x",):
            return self.x
        if name in ("gap_y",):
            return self.y
        if name == "gap_h":
            return self.w
        return getattr(self, name)

    def contains(self, name: str, value: float) -> bool:
        lo, hi = self.interval(name)
        if name == "u":
            return lo <= value < hi
        return lo <= value <= hi

    def lower(self) -> np.ndarray:
        return np.array([self.interval(f)[0] for f in FIELDS])

    def upper(self) -> np.ndarray:
        return np.array([self.interval(f)[1] for f in FIELDS])


DEFAULT_BOUNDS = ParamBounds()


@dataclass(frozen=True)
class Resonator:
    x: float
    y: float
    l: float
    w: float
    gap_x: float
    gap_y: float
    gap_h: float
    gap_w: float
    u: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FIELDS], dtype=float)


def _perimeter_point(x: float, y: float, l: float, u: float) -> tuple[float, float]:
    theta = 2.0 * math.pi * u
    c, s = math.cos(theta), math.sin(theta)
    scale = 0.5 * l / max(abs(c), abs(s))
    return x + scale * c, y + scale * s


def _gap_width(w: float, bounds: ParamBounds) -> float:
    lo, hi = bounds.gap_w
    return min(max(1.25 * w, lo), hi)


def derive_gap_fields(r: Resonator, bounds: ParamBounds = DEFAULT_BOUNDS, check: bool = True) -> Resonator:
    """Recompute the opening position and size from ``x, y, l, w, u``.

    The opening sits on the square's perimeter along the ray leaving the
    center at angle ``2*pi*u`` counterclockwise from the horizontal. With
    ``check=False`` out-of-bounds inputs are allowed (used for candidate
    layouts that are validated afterwards).
    """
    if check:
        for name in FREE_FIELDS:
            value = getattr(r, name)
            if not bounds.contains(name, value):
                raise BoundsError(name, value, *bounds.interval(name))
    gx, gy = _perimeter_point(r.x, r.y, r.l, r.u)
    return replace(r, gap_x=gx, gap_y=gy, gap_h=r.w, gap_w=_gap_width(r.w, bounds))


def make_resonator(x: float, y: float, l: float, w: float, u: float,
                   bounds: ParamBounds = DEFAULT_BOUNDS, check: bool = True) -> Resonator:
    """Build a resonator from its five free parameters."""
    raw = Resonator(x=x, y=y, l=l, w=w, gap_x=0.0, gap_y=0.0, gap_h=0.0, gap_w=0.0, u=u)
    return derive_gap_fields(raw, bounds, check=check)


@dataclass(frozen=True)
class Layout:
    resonators: tuple[Resonator, ...]
    template_id: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "resonators", tuple(self.resonators))
        if len(self.resonators) < 2:
            raise ValueError(f"a layout needs at least 2 resonators, got {len(self.resonators)}")

    @property
    def N(self) -> int:
        return len(self.resonators)

    def centers(self) -> np.ndarray:
        return np.array([[r.x, r.y] for r in self.resonators])

    def sides(self) -> np.ndarray:
        return np.array([r.l for r in self.resonators])

    def reversed(self) -> Layout:
        """Same geometry with input and output ports swapped."""
        return Layout(self.resonators[::-1], self.template_id)

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "resonators": [{f: float(getattr(r, f)) for f in FIELDS} for r in self.resonators],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Layout:
        res = tuple(Resonator(**{f: float(item[f]) for f in FIELDS}) for item in data["resonators"])
        return cls(res, str(data.get("template_id", "custom")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Layout:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    bounds_violations: tuple[tuple[int, str, float], ...] = ()
    overlaps: tuple[tuple[int, int, float], ...] = ()

    def __bool__(self) -> bool:
        return self.valid


def pair_clearance(a: Resonator, b: Resonator) -> float:
    """Separation between the axis-aligned bounding squares (negative if they intersect)."""
    half = 0.5 * (a.l + b.l)
    return max(abs(a.x - b.x) - half, abs(a.y - b.y) - half)


def validate_layout(layout: Layout, bounds: ParamBounds = DEFAULT_BOUNDS,
                    min_clearance: float = MIN_CLEARANCE) -> ValidityReport:
    """Check parameter bounds and pairwise clearance; report every violation."""
    violations = []
    for i, r in enumerate(layout.resonators):
        for name in FIELDS:
            value = getattr(r, name)
            if not bounds.contains(name, value):
                violations.append((i, name, value))
    overlaps = []
    res = layout.resonators
    for i in range(len(res)):
        for j in range(i + 1, len(res)):
            c = pair_clearance(res[i], res[j])
            if c < min_clearance:
                overlaps.append((i, j, c))
    valid = not violations and not overlaps
    return ValidityReport(valid, tuple(violations), tuple(overlaps))


def is_valid(layout: Layout, bounds: ParamBounds = DEFAULT_BOUNDS) -> bool:
    return validate_layout(layout, bounds).valid


# -- templates --------------------------------------------------------------

TEMPLATE_SIZES = (2, 3, 4, 5, 6, 8)


@dataclass(frozen=True)
class TemplateSpec:
    """Arrangement pattern for random layouts.

    ``chain`` places each resonator a random edge-to-edge gap beyond the
    previous one with a small random perpendicular offset, folding into a new
    row (meander) when the box edge is reached. ``offset-chain`` does the
    same with perpendicular offsets of alternating sign, giving a zig-zag.

    With ``tuning="synchronous"`` one side length is drawn per layout and
    shared by every resonator; ``"independent"`` draws one per resonator.
    """

    N: int = 4
    pattern: str = "chain"
    gap_range: tuple[float, float] = (0.05, 0.40)
    offset_range: tuple[float, float] | None = None
    tuning: str = "synchronous"

    def __post_init__(self):
        if self.N not in TEMPLATE_SIZES:
            raise ValueError(f"N must be one of {TEMPLATE_SIZES}, got {self.N}")
        if self.pattern not in ("chain", "offset-chain"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.tuning not in ("synchronous", "independent"):
            raise ValueError(f"unknown tuning {self.tuning!r}")
        if self.offset_range is None:
            default = (-0.3, 0.3) if self.pattern == "chain" else (0.15, 0.35)
            object.__setattr__(self, "offset_range", default)
        lo, hi = self.gap_range
        if not 0 < lo < hi:
            raise ValueError(f"bad gap_range {self.gap_range}")

    @property
    def template_id(self) -> str:
        return f"{self.pattern}-{self.N}"


def _place_chain(template: TemplateSpec, bounds: ParamBounds, rng: np.random.Generator):
    n = template.N
    if template.tuning == "synchronous":
        l = np.full(n, rng.uniform(*bounds.l))
    else:
        l = rng.uniform(*bounds.l, size=n)
    w = rng.uniform(*bounds.w, size=n)
    u = rng.uniform(*bounds.u, size=n) % 1.0
    gaps = rng.uniform(*template.gap_range, size=n)
    offsets = rng.uniform(*template.offset_range, size=n)
    if template.pattern == "offset-chain":
        offsets = offsets * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)

    x0, x1 = bounds.x
    y0, y1 = bounds.y
    xs = np.empty(n)
    ys = np.empty(n)
    xs[0], ys[0] = x0 + 0.5 * l[0], y0 + 0.5 * l[0]
    row_base = ys[0]
    row_top = ys[0] + 0.5 * l[0]
    direction = 1.0
    for i in range(1, n):
        step = 0.5 * l[i - 1] + gaps[i] + 0.5 * l[i]
        nx = xs[i - 1] + direction * step
        if nx + 0.5 * l[i] > x1 or nx - 0.5 * l[i] < x0:
            # fold: next row sits above the current one, directly over resonator i-1
            direction = -direction
            nx = xs[i - 1]
            row_base = row_top + gaps[i] + 0.5 * l[i]
            ys[i] = row_base
        else:
            ys[i] = row_base + offsets[i]
        xs[i] = nx
        row_top = max(row_top, ys[i] + 0.5 * l[i])
    # center the bounding box of all squares inside the parameter box
    lo_x, hi_x = (xs - 0.5 * l).min(), (xs + 0.5 * l).max()
    lo_y, hi_y = (ys - 0.5 * l).min(), (ys + 0.5 * l).max()
    xs += 0.5 * (x0 + x1) - 0.5 * (lo_x + hi_x)
    ys += 0.5 * (y0 + y1) - 0.5 * (lo_y + hi_y)
    return xs, ys, l, w, u


def sample_random_layout(template: TemplateSpec, bounds: ParamBounds = DEFAULT_BOUNDS,
                         rng_seed: int | Sequence[int] | np.random.Generator = 0) -> Layout:
    """Draw a valid random layout for ``template``.

    ``rng_seed`` may be an int, a sequence of ints (hashed together), or a
    Generator that is consumed in place. Raises ``SamplingExhausted`` after
    1000 rejected draws.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    for _ in range(MAX_REJECTIONS):
        xs, ys, l, w, u = _place_chain(template, bounds, rng)
        res = tuple(
            make_resonator(float(xs[i]), float(ys[i]), float(l[i]), float(w[i]), float(u[i]), bounds, check=False)
            for i in range(template.N)
        )
        layout = Layout(res, template.template_id)
        if validate_layout(layout, bounds).valid:
            return layout
    raise SamplingExhausted(f"no valid {template.template_id} layout after {MAX_REJECTIONS} draws")


# -- state matrix -----------------------------------------------------------

def state_matrix(layout: Layout, bounds: ParamBounds = DEFAULT_BOUNDS) -> np.ndarray:
    """N x 9 min-max normalized parameters; ``u`` is passed through."""
    raw = np.array([r.as_array() for r in layout.resonators])
    lo, hi = bounds.lower(), bounds.upper()
    out = (raw - lo) / (hi - lo)
    out[:, -1] = raw[:, -1]
    return out


def denormalize(matrix: np.ndarray, bounds: ParamBounds = DEFAULT_BOUNDS,
                template_id: str = "custom") -> Layout:
    """Inverse of :func:`state_matrix`."""
    matrix = np.asarray(matrix, dtype=float)
    lo, hi = bounds.lower(), bounds.upper()
    raw = matrix * (hi - lo) + lo
    raw[:, -1] = matrix[:, -1]
    res = tuple(Resonator(**{f: float(v) for f, v in zip(FIELDS, row)}) for row in raw)
    return Layout(res, template_id)


def with_free_params(layout: Layout, updates: Iterable[tuple[int, dict]],
                     bounds: ParamBounds = DEFAULT_BOUNDS) -> Layout:
    """Return a copy with some resonators' free parameters replaced (unchecked)."""
    res = list(layout.resonators)
    for i, changes in updates:
        res[i] = derive_gap_fields(replace(res[i], **changes), bounds, check=False)
    return Layout(tuple(res), layout.template_id)
