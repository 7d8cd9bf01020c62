"""Scalar fields on gridded rectangles and boxes.

Two backends share one interface:

* :class:`PolynomialField` is exact.  It stores ``numerator / base**power``
  where both are :class:`Polynomial` objects; with ``power == 0`` it is an
  ordinary polynomial.  The denominator is needed once a vector has to be
  divided by ``|g|**2`` (minimum-norm solves), and derivatives of such
  quotients stay in the same family.
* :class:`SampledField` holds node values on a :class:`Grid`; derivatives are
  second-order finite differences (central inside, one-sided at the
  boundary), antiderivatives are composite trapezoid sums and evaluation is
  multilinear interpolation.

Arithmetic between the two produces a sampled field on the shared grid.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import OutOfDomain

MAX_DEGREE = 16
VAR_NAMES = ("u1", "u2", "u3")


@dataclass(frozen=True)
class Grid:
    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        counts = tuple(int(c) for c in self.counts)
        if not (len(lower) == len(upper) == len(counts)) or len(lower) not in (2, 3):
            raise ValueError("grid must be 2- or 3-dimensional with matching bounds")
        if any(u <= lo for lo, u in zip(lower, upper)):
            raise ValueError("grid upper bounds must exceed lower bounds")
        if any(c < 3 for c in counts):
            raise ValueError("grid needs at least 3 samples per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def with_step(cls, lower, upper, h):
        """Grid with step exactly ``h``; each upper bound is pulled in if needed."""
        counts = [int(np.floor((u - lo) / h + 1e-9)) + 1 for lo, u in zip(lower, upper)]
        upper = [lo + (c - 1) * h for lo, c in zip(lower, counts)]
        return cls(tuple(lower), tuple(upper), tuple(counts))

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def steps(self):
        return tuple((u - lo) / (c - 1) for lo, u, c in zip(self.lower, self.upper, self.counts))

    @property
    def h(self):
        return max(self.steps)

    def axis(self, i):
        return np.linspace(self.lower[i], self.upper[i], self.counts[i])

    @property
    def axes(self):
        return tuple(self.axis(i) for i in range(self.dim))

    def mesh(self):
        """Node coordinates, shape ``counts + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def contains(self, point, tol=1e-12):
        point = np.asarray(point, dtype=float)
        return all(lo - tol <= p <= u + tol for lo, u, p in zip(self.lower, self.upper, point))

    def nearest_index(self, point):
        return tuple(int(np.clip(round((p - lo) / h), 0, c - 1))
                     for p, lo, h, c in zip(point, self.lower, self.steps, self.counts))

    def node(self, index):
        return tuple(lo + i * h for i, lo, h in zip(index, self.lower, self.steps))

    def refined(self, factor=2):
        counts = tuple((c - 1) * factor + 1 for c in self.counts)
        return Grid(self.lower, self.upper, counts)

    def to_json(self):
        return {"lower": list(self.lower), "upper": list(self.upper), "counts": list(self.counts)}

    @classmethod
    def from_json(cls, data):
        return cls(tuple(data["lower"]), tuple(data["upper"]), tuple(data["counts"]))


class Polynomial:
    """Real polynomial in ``nvars`` variables, stored as ``{exponents: coefficient}``."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms=None, nvars=3):
        self.nvars = int(nvars)
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.nvars or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent tuple {exps} for {self.nvars} variables")
            c = float(c)
            if not np.isfinite(c):
                raise ValueError("polynomial coefficients must be finite")
            if c != 0.0:
                clean[exps] = clean.get(exps, 0.0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    # construction -----------------------------------------------------------
    @classmethod
    def constant(cls, c, nvars=3):
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def variable(cls, i, nvars=3):
        exps = [0] * nvars
        exps[i] = 1
        return cls({tuple(exps): 1.0}, nvars)

    @classmethod
    def from_json(cls, data, nvars=None):
        names = list(data.get("vars", VAR_NAMES[: (nvars or 3)]))
        n = len(names)
        terms = {}
        for t in data["terms"]:
            e = tuple(t["e"])
            if len(e) != n:
                raise ValueError("exponent length does not match 'vars'")
            terms[e] = terms.get(e, 0.0) + float(t["c"])
        poly = cls(terms, n)
        if poly.degree > MAX_DEGREE:
            raise ValueError(f"total degree {poly.degree} exceeds {MAX_DEGREE}")
        if nvars is not None and nvars != n:
            poly = poly.embed(nvars)
        return poly

    def to_json(self):
        return {"vars": list(VAR_NAMES[: self.nvars]) if self.nvars <= 3
                else [f"u{i + 1}" for i in range(self.nvars)],
                "terms": [{"c": c, "e": list(e)} for e, c in sorted(self.terms.items())]}

    # structure --------------------------------------------------------------
    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, axis):
        return max((e[axis] for e in self.terms), default=0)

    def depends_on(self, axis):
        return any(e[axis] for e in self.terms)

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.terms.values())

    def is_constant(self):
        return all(not any(e) for e in self.terms)

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, 0.0)

    def max_abs_coefficient(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def embed(self, nvars):
        if nvars < self.nvars and any(any(e[nvars:]) for e in self.terms):
            raise ValueError("cannot drop variables the polynomial depends on")
        pad = max(nvars - self.nvars, 0)
        return Polynomial({e[:nvars] + (0,) * pad: c for e, c in self.terms.items()}, nvars)

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials in different numbers of variables")
            return other
        return Polynomial.constant(float(other), self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(terms, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return Polynomial({e: c * float(other) for e, c in self.terms.items()}, self.nvars)
        other = self._coerce(other)
        terms = {}
        for (e1, c1), (e2, c2) in itertools.product(self.terms.items(), other.terms.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            terms[e] = terms.get(e, 0.0) + c1 * c2
        return Polynomial(terms, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, n):
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(int(n)):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, tuple(sorted(self.terms.items()))))

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"u{i + 1}^{k}" if k > 1 else f"u{i + 1}" for i, k in enumerate(e) if k)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(parts) + ")"

    # calculus ---------------------------------------------------------------
    def partial(self, axis):
        terms = {}
        for e, c in self.terms.items():
            if e[axis]:
                d = list(e)
                d[axis] -= 1
                terms[tuple(d)] = terms.get(tuple(d), 0.0) + c * e[axis]
        return Polynomial(terms, self.nvars)

    def antiderivative(self, axis):
        terms = {}
        for e, c in self.terms.items():
            d = list(e)
            d[axis] += 1
            terms[tuple(d)] = c / d[axis]
        return Polynomial(terms, self.nvars)

    def substitute(self, axis, value):
        """Fix variable ``axis`` at ``value`` (the variable slot is kept, unused)."""
        terms = {}
        for e, c in self.terms.items():
            d = list(e)
            k = d[axis]
            d[axis] = 0
            terms[tuple(d)] = terms.get(tuple(d), 0.0) + c * float(value) ** k
        return Polynomial(terms, self.nvars)

    def compose(self, polys):
        """Substitute polynomial ``polys[i]`` for variable ``i``."""
        if len(polys) != self.nvars:
            raise ValueError("need one polynomial per variable")
        nv = polys[0].nvars
        powers = [dict() for _ in polys]
        out = Polynomial({}, nv)
        for e, c in self.terms.items():
            term = Polynomial.constant(c, nv)
            for i, k in enumerate(e):
                if k:
                    if k not in powers[i]:
                        powers[i][k] = polys[i] ** k
                    term = term * powers[i][k]
            out = out + term
        return out

    # evaluation -------------------------------------------------------------
    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.nvars:
            raise ValueError(f"expected points with {self.nvars} coordinates")
        out = np.zeros(points.shape[:-1])
        for e, c in self.terms.items():
            term = np.full(points.shape[:-1], c)
            for i, k in enumerate(e):
                if k:
                    term = term * points[..., i] ** k
            out = out + term
        return out

    def on_grid(self, grid):
        """Values at the nodes of ``grid`` (tensor-product evaluation)."""
        axes = grid.axes
        if len(axes) < self.nvars and any(any(e[len(axes):]) for e in self.terms):
            raise ValueError("grid has fewer axes than the polynomial uses")
        cache = {}
        out = np.zeros(grid.shape)
        for e, c in self.terms.items():
            term = c
            for i, k in enumerate(e):
                if not k:
                    continue
                if (i, k) not in cache:
                    shape = [1] * grid.dim
                    shape[i] = grid.counts[i]
                    cache[(i, k)] = (axes[i] ** k).reshape(shape)
                term = term * cache[(i, k)]
            out = out + term
        return out


def _as_poly(x, nvars):
    if isinstance(x, Polynomial):
        return x
    return Polynomial.constant(float(x), nvars)


class ScalarField:
    """Common interface; see :class:`PolynomialField` and :class:`SampledField`."""

    grid = None
    exact = False

    def __call__(self, points):
        return self.evaluate(points)

    def __radd__(self, other):
        return self + other

    def __rsub__(self, other):
        return (-self) + other

    def __rmul__(self, other):
        return self * other


class PolynomialField(ScalarField):
    """Exact field ``numerator / base**power`` with an optional domain grid."""

    exact = True

    def __init__(self, numerator, base=None, power=0, grid=None):
        self.numerator = numerator
        nv = numerator.nvars
        self.base = base if (base is not None and power) else Polynomial.constant(1.0, nv)
        self.power = int(power) if base is not None else 0
        self.grid = grid
        if self.base.is_constant() and self.power:
            self.numerator = numerator * (1.0 / self.base.constant_term() ** self.power)
            self.base, self.power = Polynomial.constant(1.0, nv), 0

    @classmethod
    def constant(cls, c, nvars=3, grid=None):
        return cls(Polynomial.constant(c, nvars), grid=grid)

    @classmethod
    def variable(cls, i, nvars=3, grid=None):
        return cls(Polynomial.variable(i, nvars), grid=grid)

    @property
    def nvars(self):
        return self.numerator.nvars

    @property
    def is_polynomial(self):
        return self.power == 0

    def with_grid(self, grid):
        return PolynomialField(self.numerator, self.base, self.power, grid)

    def _lift(self, other):
        if isinstance(other, PolynomialField):
            return other
        if isinstance(other, Polynomial):
            return PolynomialField(other, grid=self.grid)
        return PolynomialField(Polynomial.constant(float(other), self.nvars), grid=self.grid)

    def _common(self, other):
        """Rewrite both operands over a shared denominator."""
        if other.power == 0 or self.base == other.base or self.power == 0:
            base = self.base if self.power else other.base
            power = max(self.power, other.power)
            n1 = self.numerator * (base ** (power - self.power)) if power > self.power else self.numerator
            n2 = other.numerator * (base ** (power - other.power)) if power > other.power else other.numerator
            return n1, n2, base, power
        base = (self.base ** self.power) * (other.base ** other.power)
        n1 = self.numerator * other.base ** other.power
        n2 = other.numerator * self.base ** self.power
        return n1, n2, base, 1

    def _grid_with(self, other):
        return self.grid if self.grid is not None else getattr(other, "grid", None)

    def __add__(self, other):
        if isinstance(other, SampledField):
            return other + self
        other = self._lift(other)
        n1, n2, base, power = self._common(other)
        return PolynomialField(n1 + n2, base, power, self._grid_with(other))

    def __neg__(self):
        return PolynomialField(-self.numerator, self.base, self.power, self.grid)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, SampledField):
            return other * self
        other = self._lift(other)
        if other.power == 0 or self.power == 0 or self.base == other.base:
            base = self.base if self.power else other.base
            return PolynomialField(self.numerator * other.numerator, base,
                                   self.power + other.power, self._grid_with(other))
        base = (self.base ** self.power) * (other.base ** other.power)
        return PolynomialField(self.numerator * other.numerator, base, 1, self._grid_with(other))

    def partial(self, axis):
        dn = self.numerator.partial(axis)
        if self.power == 0 or not self.base.depends_on(axis):
            return PolynomialField(dn, self.base, self.power, self.grid)
        num = dn * self.base - self.numerator * self.base.partial(axis) * self.power
        return PolynomialField(num, self.base, self.power + 1, self.grid)

    def cumulative_integral(self, axis, base_value):
        if self.grid is not None and not (self.grid.lower[axis] - 1e-12 <= base_value
                                          <= self.grid.upper[axis] + 1e-12):
            raise OutOfDomain(f"base {base_value} outside axis {axis} range")
        if self.power and self.base.depends_on(axis):
            if self.grid is None:
                raise ValueError("denominator depends on the integration axis; need a grid")
            return self.sample(self.grid).cumulative_integral(axis, base_value)
        anti = self.numerator.antiderivative(axis)
        return PolynomialField(anti - anti.substitute(axis, base_value), self.base,
                               self.power, self.grid)

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        if self.grid is not None:
            flat = points.reshape(-1, points.shape[-1])
            if not all(self.grid.contains(p) for p in flat):
                raise OutOfDomain("point outside the field's domain")
        val = self.numerator(points)
        if self.power:
            val = val / self.base(points) ** self.power
        return val

    def on_grid(self, grid=None):
        grid = grid or self.grid
        val = self.numerator.on_grid(grid)
        if self.power:
            val = val / self.base.on_grid(grid) ** self.power
        return val

    def sample(self, grid=None):
        grid = grid or self.grid
        return SampledField(grid, self.on_grid(grid))

    def is_zero(self, tol=0.0):
        return self.numerator.is_zero(tol)

    def __repr__(self):
        if self.power:
            return f"PolynomialField({self.numerator!r} / ({self.base!r})^{self.power})"
        return f"PolynomialField({self.numerator!r})"

    def to_json(self):
        if self.power:
            raise ValueError("only polynomial (denominator-free) fields serialize to JSON")
        return self.numerator.to_json()


class SampledField(ScalarField):
    """Node values on a grid, finite-difference calculus."""

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            values = np.broadcast_to(values, grid.shape).copy()
        if not np.all(np.isfinite(values)):
            raise ValueError("sampled field has non-finite values")
        self.grid = grid
        self.values = values
        self._interp = None

    def _other_values(self, other):
        if isinstance(other, SampledField):
            if other.grid != self.grid:
                raise ValueError("sampled fields live on different grids")
            return other.values
        if isinstance(other, PolynomialField):
            return other.on_grid(self.grid)
        return float(other)

    def __add__(self, other):
        return SampledField(self.grid, self.values + self._other_values(other))

    def __neg__(self):
        return SampledField(self.grid, -self.values)

    def __sub__(self, other):
        return SampledField(self.grid, self.values - self._other_values(other))

    def __mul__(self, other):
        return SampledField(self.grid, self.values * self._other_values(other))

    def partial(self, axis):
        d = np.gradient(self.values, self.grid.steps[axis], axis=axis, edge_order=2)
        return SampledField(self.grid, d)

    def cumulative_integral(self, axis, base_value):
        lo, hi = self.grid.lower[axis], self.grid.upper[axis]
        if not (lo - 1e-12 <= base_value <= hi + 1e-12):
            raise OutOfDomain(f"base {base_value} outside axis {axis} range")
        h = self.grid.steps[axis]
        cum = cumulative_trapezoid(self.values, dx=h, axis=axis, initial=0.0)
        pos = np.clip((base_value - lo) / h, 0.0, self.grid.counts[axis] - 1)
        i = min(int(np.floor(pos)), self.grid.counts[axis] - 2)
        t = pos - i
        at_base = ((1 - t) * np.take(cum, [i], axis=axis)
                   + t * np.take(cum, [i + 1], axis=axis))
        return SampledField(self.grid, cum - at_base)

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        if self._interp is None:
            self._interp = RegularGridInterpolator(self.grid.axes, self.values, method="linear",
                                                   bounds_error=True)
        try:
            return self._interp(points)
        except ValueError as exc:
            raise OutOfDomain(str(exc)) from None

    def on_grid(self, grid=None):
        if grid is not None and grid != self.grid:
            raise ValueError("sampled field cannot be re-sampled onto another grid")
        return self.values

    def sample(self, grid=None):
        return self

    def to_csv(self, path):
        names = VAR_NAMES[: self.grid.dim]
        mesh = self.grid.mesh().reshape(-1, self.grid.dim)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(names) + ["value"])
            for p, v in zip(mesh, self.values.ravel()):
                w.writerow([repr(float(x)) for x in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        dim = len(header) - 1
        if header[:dim] != list(VAR_NAMES[:dim]) or header[-1] != "value":
            raise ValueError(f"unexpected CSV header {header}")
        axes = [np.unique(body[:, i]) for i in range(dim)]
        grid = Grid(tuple(a[0] for a in axes), tuple(a[-1] for a in axes),
                    tuple(len(a) for a in axes))
        idx = tuple(np.rint((body[:, i] - grid.lower[i]) / grid.steps[i]).astype(int)
                    for i in range(dim))
        values = np.full(grid.shape, np.nan)
        values[idx] = body[:, -1]
        return cls(grid, values)


# --- module-level operations -----------------------------------------------

def eval_field(field, point):
    """Value of ``field`` at ``point``; raises :class:`OutOfDomain` outside the grid."""
    return float(np.asarray(field.evaluate(np.asarray(point, dtype=float))).reshape(-1)[0])


def partial(field, axis):
    return field.partial(axis)


def cumulative_integral(field, axis, base):
    """Antiderivative along ``axis`` that vanishes where that coordinate equals ``base``."""
    return field.cumulative_integral(axis, base)


def load_polynomial(path_or_data, nvars=None):
    data = path_or_data
    if isinstance(path_or_data, (str, Path)):
        data = json.loads(Path(path_or_data).read_text())
    return Polynomial.from_json(data, nvars)
