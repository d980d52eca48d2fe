"""Tape-based automatic differentiation.

Functions built from smooth scalar primitives are recorded once into a flat
instruction tape by tracing; the tape is then replayed at arbitrary points,
optionally batched over many points at once (one numpy "lane" per point).
Derivatives come from reverse-mode sweeps over the tape (gradients, Jacobian
rows) and forward-over-reverse sweeps (Hessians). Structural sparsity is
obtained by propagating input index sets through the instruction list.

Tapes are immutable after recording; every replay allocates its own
workspace, so concurrent replays of one tape are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteValue, UnsupportedPrimitive

# opcode table; arg2 == -1 for unary ops, const payload used by CONST/POW
_CONST = 0
_ADD = 1
_SUB = 2
_MUL = 3
_DIV = 4
_NEG = 5
_POW = 6
_EXP = 7
_LOG = 8
_SIN = 9
_COS = 10
_TAN = 11
_SQRT = 12


@dataclass(frozen=True)
class SparsityPattern:
    """Sorted, deduplicated structural nonzero coordinates of a matrix."""

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray

    @staticmethod
    def from_coords(shape, rows, cols) -> "SparsityPattern":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size:
            key = np.unique(rows * shape[1] + cols)
            rows, cols = key // shape[1], key % shape[1]
        return SparsityPattern(shape, rows, cols)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def as_set(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def issuperset(self, other: "SparsityPattern") -> bool:
        return self.as_set() >= other.as_set()


@dataclass
class Tape:
    """Recorded instruction list for one vector function of scalars.

    Slots 0..n_in-1 hold the inputs; instruction k writes slot n_in + k
    (single assignment). Replaying at the recording point reproduces the
    recorded outputs bit for bit.
    """

    n_in: int
    n_out: int
    ops: np.ndarray
    arg1: np.ndarray
    arg2: np.ndarray
    consts: np.ndarray
    out_slots: np.ndarray
    _deps: list | None = field(default=None, repr=False)

    @property
    def n_slots(self) -> int:
        return self.n_in + len(self.ops)

    def input_dependencies(self) -> list[frozenset]:
        """Input index set each output structurally depends on."""
        if self._deps is None:
            deps: list[frozenset] = [frozenset((i,)) for i in range(self.n_in)]
            empty = frozenset()
            for op, a, b in zip(self.ops, self.arg1, self.arg2):
                if op == _CONST:
                    deps.append(empty)
                elif b < 0:
                    deps.append(deps[a])
                else:
                    deps.append(deps[a] | deps[b])
            self._deps = [deps[s] for s in self.out_slots]
        return self._deps


class _Recorder:
    def __init__(self, n_in: int):
        self.n_in = n_in
        self.ops: list[int] = []
        self.arg1: list[int] = []
        self.arg2: list[int] = []
        self.consts: list[float] = []
        self._const_slots: dict[float, int] = {}

    def emit(self, op, a, b=-1, const=0.0) -> int:
        slot = self.n_in + len(self.ops)
        self.ops.append(op)
        self.arg1.append(a)
        self.arg2.append(b)
        self.consts.append(const)
        return slot

    def const(self, value) -> int:
        value = float(value)
        slot = self._const_slots.get(value)
        if slot is None:
            slot = self.emit(_CONST, -1, -1, value)
            self._const_slots[value] = slot
        return slot


class Var:
    """Tracer scalar; arithmetic on it appends instructions to the recorder."""

    __slots__ = ("rec", "slot")

    def __init__(self, rec: _Recorder, slot: int):
        self.rec = rec
        self.slot = slot

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # lets numpy scalars and ufuncs (np.sin, np.float64 * var, ...)
        # participate in tracing
        if method != "__call__" or kwargs:
            raise UnsupportedPrimitive(f"ufunc {ufunc.__name__}.{method} is not traceable")
        name = ufunc.__name__
        if name in ("add", "subtract", "multiply", "true_divide", "divide", "power"):
            a, b = inputs
            op = {"add": "__add__", "subtract": "__sub__", "multiply": "__mul__",
                  "true_divide": "__truediv__", "divide": "__truediv__",
                  "power": "__pow__"}[name]
            if isinstance(a, Var):
                return getattr(a, op)(b)
            rop = {"__add__": "__radd__", "__sub__": "__rsub__", "__mul__": "__rmul__",
                   "__truediv__": "__rtruediv__", "__pow__": "__rpow__"}[op]
            return getattr(b, rop)(a)
        if name in ("exp", "log", "sin", "cos", "tan", "sqrt"):
            return getattr(inputs[0], name)()
        if name == "negative":
            return -inputs[0]
        if name == "positive":
            return inputs[0]
        raise UnsupportedPrimitive(f"ufunc {name} is not a supported primitive")

    def _lift(self, other) -> int:
        if isinstance(other, Var):
            if other.rec is not self.rec:
                raise UnsupportedPrimitive("mixing tracers from different recordings")
            return other.slot
        return self.rec.const(other)

    def __add__(self, other):
        return Var(self.rec, self.rec.emit(_ADD, self.slot, self._lift(other)))

    __radd__ = __add__

    def __sub__(self, other):
        return Var(self.rec, self.rec.emit(_SUB, self.slot, self._lift(other)))

    def __rsub__(self, other):
        return Var(self.rec, self.rec.emit(_SUB, self._lift(other), self.slot))

    def __mul__(self, other):
        return Var(self.rec, self.rec.emit(_MUL, self.slot, self._lift(other)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Var(self.rec, self.rec.emit(_DIV, self.slot, self._lift(other)))

    def __rtruediv__(self, other):
        return Var(self.rec, self.rec.emit(_DIV, self._lift(other), self.slot))

    def __neg__(self):
        return Var(self.rec, self.rec.emit(_NEG, self.slot))

    def __pow__(self, e):
        if isinstance(e, Var):
            return (self.log() * e).exp()
        return Var(self.rec, self.rec.emit(_POW, self.slot, -1, float(e)))

    def __rpow__(self, base):
        return (self * float(np.log(base))).exp()

    def exp(self):
        return Var(self.rec, self.rec.emit(_EXP, self.slot))

    def log(self):
        return Var(self.rec, self.rec.emit(_LOG, self.slot))

    def sin(self):
        return Var(self.rec, self.rec.emit(_SIN, self.slot))

    def cos(self):
        return Var(self.rec, self.rec.emit(_COS, self.slot))

    def tan(self):
        return Var(self.rec, self.rec.emit(_TAN, self.slot))

    def sqrt(self):
        return Var(self.rec, self.rec.emit(_SQRT, self.slot))

    def __bool__(self):
        raise UnsupportedPrimitive(
            "data-dependent branching on a traced value; rewrite with smooth guards"
        )

    def __float__(self):
        raise UnsupportedPrimitive("traced values cannot be collapsed to floats")

    def __abs__(self):
        raise UnsupportedPrimitive("abs() is nonsmooth; use smooth_abs")


def _comparison(self, other):
    raise UnsupportedPrimitive(
        "comparisons on traced values are not supported; use smooth_min/smooth_max"
    )


for _name in ("__lt__", "__le__", "__gt__", "__ge__"):
    setattr(Var, _name, _comparison)


def _dispatch_unary(name):
    def fn(x):
        if isinstance(x, Var):
            return getattr(x, name)()
        return getattr(np, name)(x)

    fn.__name__ = name
    return fn


# module-level primitives usable on tracers and plain numbers alike
exp = _dispatch_unary("exp")
log = _dispatch_unary("log")
sin = _dispatch_unary("sin")
cos = _dispatch_unary("cos")
tan = _dispatch_unary("tan")
sqrt = _dispatch_unary("sqrt")


def smooth_max(a, b, eps: float = 1e-8):
    """Everywhere-differentiable stand-in for max(a, b)."""
    return 0.5 * (a + b + sqrt((a - b) * (a - b) + eps * eps))


def smooth_min(a, b, eps: float = 1e-8):
    return -smooth_max(-a, -b, eps)


def smooth_abs(a, eps: float = 1e-8):
    return sqrt(a * a + eps * eps)


def record(function, n_in: int, n_out: int | None = None) -> Tape:
    """Trace ``function`` on symbolic inputs and freeze it into a Tape.

    ``function`` receives a list of ``n_in`` scalars and must return a scalar
    or a flat sequence of scalars composed of the supported primitives
    (+, -, *, /, powers, exp, log, sin, cos, tan, sqrt and the smooth
    guards). The tape is verified against direct evaluation at 10
    pseudo-random points; disagreement (typically data-dependent branching
    the tracer cannot see) raises UnsupportedPrimitive.
    """
    rec = _Recorder(n_in)
    try:
        raw = function([Var(rec, i) for i in range(n_in)])
    except UnsupportedPrimitive:
        raise
    except (TypeError, ValueError) as exc:
        raise UnsupportedPrimitive(f"function is not traceable: {exc}") from exc
    if isinstance(raw, Var) or np.isscalar(raw):
        raw = [raw]
    out_slots = []
    for item in raw:
        if isinstance(item, Var):
            if item.rec is not rec:
                raise UnsupportedPrimitive("output traced on a foreign recorder")
            out_slots.append(item.slot)
        else:
            out_slots.append(rec.const(float(item)))
    if n_out is not None and len(out_slots) != n_out:
        raise UnsupportedPrimitive(
            f"function produced {len(out_slots)} outputs, expected {n_out}"
        )
    tape = Tape(
        n_in=n_in,
        n_out=len(out_slots),
        ops=np.asarray(rec.ops, dtype=np.int8),
        arg1=np.asarray(rec.arg1, dtype=np.int32),
        arg2=np.asarray(rec.arg2, dtype=np.int32),
        consts=np.asarray(rec.consts, dtype=np.float64),
        out_slots=np.asarray(out_slots, dtype=np.int32),
    )
    _verify_tape(tape, function)
    return tape


def _verify_tape(tape: Tape, function, n_points: int = 10) -> None:
    rng = np.random.default_rng(0x5EED)
    for _ in range(n_points):
        x = rng.uniform(0.1, 1.9, size=tape.n_in)  # positive: safe for log/sqrt
        got = replay(tape, x)
        try:
            want = function(list(x))
        except Exception as exc:
            raise UnsupportedPrimitive(f"probe evaluation failed: {exc}") from exc
        want = np.atleast_1d(np.asarray(want, dtype=np.float64))
        scale = np.maximum(1.0, np.abs(want))
        if not np.all(np.abs(got - want) <= 1e-14 * scale):
            raise UnsupportedPrimitive(
                "tape replay disagrees with direct evaluation; the function "
                "likely branches on its arguments"
            )


def _forward(tape: Tape, x: np.ndarray) -> list:
    """Replay returning the full slot-value workspace."""
    vals: list = [None] * tape.n_slots
    lane_shape = np.shape(x[0]) if tape.n_in else ()
    for i in range(tape.n_in):
        vals[i] = x[i]
    k = tape.n_in
    for op, a, b, c in zip(tape.ops, tape.arg1, tape.arg2, tape.consts):
        if op == _ADD:
            v = vals[a] + vals[b]
        elif op == _MUL:
            v = vals[a] * vals[b]
        elif op == _SUB:
            v = vals[a] - vals[b]
        elif op == _DIV:
            v = vals[a] / vals[b]
        elif op == _NEG:
            v = -vals[a]
        elif op == _CONST:
            v = c if not lane_shape else np.full(lane_shape, c)
        elif op == _POW:
            v = vals[a] ** c
        elif op == _EXP:
            v = np.exp(vals[a])
        elif op == _LOG:
            v = np.log(vals[a])
        elif op == _SIN:
            v = np.sin(vals[a])
        elif op == _COS:
            v = np.cos(vals[a])
        elif op == _TAN:
            v = np.tan(vals[a])
        elif op == _SQRT:
            v = np.sqrt(vals[a])
        else:  # pragma: no cover
            raise AssertionError(f"unknown opcode {op}")
        vals[k] = v
        k += 1
    return vals


def replay(tape: Tape, x) -> np.ndarray:
    """Evaluate the tape at ``x``; shape (n_in,) or (n_in, L) for L lanes."""
    x = np.asarray(x, dtype=np.float64)
    vals = _forward(tape, x)
    lane_shape = np.shape(x[0]) if tape.n_in else ()
    out = np.empty((tape.n_out,) + lane_shape)
    for r, s in enumerate(tape.out_slots):
        out[r] = vals[s]
    return out


def _reverse(tape: Tape, vals: list, seed: dict, lane_shape: tuple) -> list:
    """One adjoint sweep; ``seed`` maps slot -> adjoint (scalar or lane array).

    Returns input-slot adjoints broadcast to ``lane_shape``.
    """
    bars: list = [None] * tape.n_slots

    def bump(slot, amount):
        cur = bars[slot]
        bars[slot] = amount if cur is None else cur + amount

    for slot, val in seed.items():
        bump(slot, val)
    for k in range(len(tape.ops) - 1, -1, -1):
        slot = tape.n_in + k
        bar = bars[slot]
        if bar is None:
            continue
        op = tape.ops[k]
        a, b, c = tape.arg1[k], tape.arg2[k], tape.consts[k]
        if op == _ADD:
            bump(a, bar)
            bump(b, bar)
        elif op == _MUL:
            bump(a, bar * vals[b])
            bump(b, bar * vals[a])
        elif op == _SUB:
            bump(a, bar)
            bump(b, -bar)
        elif op == _DIV:
            bump(a, bar / vals[b])
            bump(b, -bar * vals[slot] / vals[b])
        elif op == _NEG:
            bump(a, -bar)
        elif op == _POW:
            bump(a, bar * c * vals[a] ** (c - 1.0))
        elif op == _EXP:
            bump(a, bar * vals[slot])
        elif op == _LOG:
            bump(a, bar / vals[a])
        elif op == _SIN:
            bump(a, bar * np.cos(vals[a]))
        elif op == _COS:
            bump(a, -bar * np.sin(vals[a]))
        elif op == _TAN:
            bump(a, bar * (1.0 + vals[slot] * vals[slot]))
        elif op == _SQRT:
            bump(a, bar * 0.5 / vals[slot])
        # _CONST: nothing to propagate
    out = []
    for i in range(tape.n_in):
        g = bars[i]
        if g is None:
            out.append(np.zeros(lane_shape) if lane_shape else 0.0)
        elif lane_shape and np.shape(g) != lane_shape:
            out.append(np.broadcast_to(g, lane_shape).copy())
        else:
            out.append(g)
    return out


def weighted_gradient(tape: Tape, x, weights) -> np.ndarray:
    """Gradient of sum_r weights[r] * F_r(x) in a single reverse sweep.

    ``x`` may be (n_in,) or (n_in, L); ``weights`` likewise (n_out,) or
    (n_out, L). Result matches the shape of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    lane_shape = np.shape(x[0]) if tape.n_in else ()
    vals = _forward(tape, x)
    seed: dict = {}
    for r, slot in enumerate(tape.out_slots):
        w = weights[r]
        seed[slot] = w if slot not in seed else seed[slot] + w
    grads = _reverse(tape, vals, seed, lane_shape)
    out = np.empty((tape.n_in,) + lane_shape)
    for i, g in enumerate(grads):
        out[i] = g
    return out


def gradient(tape: Tape, point) -> np.ndarray:
    """Gradient of a single-output tape; raises on non-finite results."""
    if tape.n_out != 1:
        raise ValueError("gradient requires a scalar-output tape")
    return _checked(weighted_gradient(tape, point, np.ones(1)))


def _checked(arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("derivative evaluation produced non-finite values")
    return arr


def jacobian(tape: Tape, point) -> sp.csr_matrix:
    """Sparse Jacobian via one reverse sweep per output row."""
    x = np.asarray(point, dtype=np.float64)
    vals = _forward(tape, x)
    deps = tape.input_dependencies()
    rows, cols, data = [], [], []
    for r, slot in enumerate(tape.out_slots):
        if not deps[r]:
            continue
        g = _reverse(tape, vals, {slot: 1.0}, ())
        for j in sorted(deps[r]):
            rows.append(r)
            cols.append(j)
            data.append(g[j])
    mat = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), (rows, cols)),
        shape=(tape.n_out, tape.n_in),
    )
    _checked(mat.data)
    return mat


def _forward_tangent(tape: Tape, x: np.ndarray, seeds: np.ndarray):
    """Forward sweep carrying K tangent directions; ``seeds`` is (n_in, K).

    Tangent entries have shape (K,) + lane_shape. Returns (vals, dots).
    """
    lane_shape = np.shape(x[0]) if tape.n_in else ()
    K = seeds.shape[1]
    vals = _forward(tape, x)
    dots: list = [None] * tape.n_slots
    for i in range(tape.n_in):
        d = seeds[i].reshape((K,) + (1,) * len(lane_shape))
        dots[i] = np.broadcast_to(d, (K,) + lane_shape)
    zero = np.zeros((K,) + lane_shape)
    k = tape.n_in
    for op, a, b, c in zip(tape.ops, tape.arg1, tape.arg2, tape.consts):
        slot = k
        if op == _ADD:
            d = dots[a] + dots[b]
        elif op == _MUL:
            d = dots[a] * vals[b] + vals[a] * dots[b]
        elif op == _SUB:
            d = dots[a] - dots[b]
        elif op == _DIV:
            d = (dots[a] - vals[slot] * dots[b]) / vals[b]
        elif op == _NEG:
            d = -dots[a]
        elif op == _CONST:
            d = zero
        elif op == _POW:
            d = dots[a] * (c * vals[a] ** (c - 1.0))
        elif op == _EXP:
            d = dots[a] * vals[slot]
        elif op == _LOG:
            d = dots[a] / vals[a]
        elif op == _SIN:
            d = dots[a] * np.cos(vals[a])
        elif op == _COS:
            d = -dots[a] * np.sin(vals[a])
        elif op == _TAN:
            d = dots[a] * (1.0 + vals[slot] * vals[slot])
        elif op == _SQRT:
            d = dots[a] * 0.5 / vals[slot]
        else:  # pragma: no cover
            raise AssertionError(f"unknown opcode {op}")
        dots[k] = d
        k += 1
    return vals, dots


def weighted_hessian_action(tape: Tape, x, weights, seeds) -> np.ndarray:
    """Hessian of w^T F applied to tangent directions, forward-over-reverse.

    ``x``: (n_in,) or (n_in, L); ``weights``: (n_out,) or (n_out, L);
    ``seeds``: (n_in, K). Returns (n_in, K) or (n_in, K, L); entry [i, k]
    is (H s_k)_i.
    """
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.float64)
    lane_shape = np.shape(x[0]) if tape.n_in else ()
    K = seeds.shape[1]
    vals, dots = _forward_tangent(tape, x, seeds)

    bars: list = [None] * tape.n_slots
    bard: list = [None] * tape.n_slots

    def bump(store, slot, amount):
        cur = store[slot]
        store[slot] = amount if cur is None else cur + amount

    for r, slot in enumerate(tape.out_slots):
        bump(bars, slot, weights[r])

    zeroK = np.zeros((K,) + lane_shape)
    for k in range(len(tape.ops) - 1, -1, -1):
        slot = tape.n_in + k
        bar = bars[slot]
        if bar is None:
            continue
        bd = bard[slot]
        if bd is None:
            bd = zeroK
        op = tape.ops[k]
        a, b, c = tape.arg1[k], tape.arg2[k], tape.consts[k]
        if op == _ADD:
            bump(bars, a, bar)
            bump(bard, a, bd)
            bump(bars, b, bar)
            bump(bard, b, bd)
        elif op == _SUB:
            bump(bars, a, bar)
            bump(bard, a, bd)
            bump(bars, b, -bar)
            bump(bard, b, -bd)
        elif op == _MUL:
            bump(bars, a, bar * vals[b])
            bump(bard, a, bd * vals[b] + bar * dots[b])
            bump(bars, b, bar * vals[a])
            bump(bard, b, bd * vals[a] + bar * dots[a])
        elif op == _DIV:
            inv_b = 1.0 / vals[b]
            p_a = inv_b
            dp_a = -dots[b] * inv_b * inv_b
            p_b = -vals[slot] * inv_b
            dp_b = (-dots[slot] + vals[slot] * dots[b] * inv_b) * inv_b
            bump(bars, a, bar * p_a)
            bump(bard, a, bd * p_a + bar * dp_a)
            bump(bars, b, bar * p_b)
            bump(bard, b, bd * p_b + bar * dp_b)
        elif op == _NEG:
            bump(bars, a, -bar)
            bump(bard, a, -bd)
        elif op == _POW:
            p = c * vals[a] ** (c - 1.0)
            bump(bars, a, bar * p)
            dp = dots[a] * (c * (c - 1.0) * vals[a] ** (c - 2.0)) if c != 1.0 else 0.0
            bump(bard, a, bd * p + bar * dp)
        elif op == _EXP:
            bump(bars, a, bar * vals[slot])
            bump(bard, a, bd * vals[slot] + bar * dots[slot])
        elif op == _LOG:
            inv_a = 1.0 / vals[a]
            bump(bars, a, bar * inv_a)
            bump(bard, a, bd * inv_a - bar * inv_a * inv_a * dots[a])
        elif op == _SIN:
            ca = np.cos(vals[a])
            bump(bars, a, bar * ca)
            bump(bard, a, bd * ca - bar * np.sin(vals[a]) * dots[a])
        elif op == _COS:
            sa = np.sin(vals[a])
            bump(bars, a, -bar * sa)
            bump(bard, a, -bd * sa - bar * np.cos(vals[a]) * dots[a])
        elif op == _TAN:
            p = 1.0 + vals[slot] * vals[slot]
            bump(bars, a, bar * p)
            bump(bard, a, bd * p + bar * 2.0 * vals[slot] * dots[slot])
        elif op == _SQRT:
            inv2s = 0.5 / vals[slot]
            bump(bars, a, bar * inv2s)
            bump(bard, a, bd * inv2s - bar * dots[slot] * 2.0 * inv2s * inv2s)
        # _CONST: nothing
    out = np.zeros((tape.n_in, K) + lane_shape)
    for i in range(tape.n_in):
        if bard[i] is not None:
            out[i] = bard[i]
    return out


def hessian_lagrangian(obj_tape, con_tape, point, obj_weight, multipliers) -> sp.coo_matrix:
    """Sparse lower triangle of grad^2(sigma * f0 + lambda^T c) at ``point``."""
    point = np.asarray(point, dtype=np.float64)
    n = point.shape[0]
    dense = np.zeros((n, n))
    seeds = np.eye(n)
    if obj_tape is not None and obj_weight != 0.0:
        w = np.full(obj_tape.n_out, float(obj_weight))
        dense += weighted_hessian_action(obj_tape, point, w, seeds)
    if con_tape is not None:
        lam = np.atleast_1d(np.asarray(multipliers, dtype=np.float64))
        if lam.shape[0] != con_tape.n_out:
            raise ValueError("multiplier length does not match constraint rows")
        if np.any(lam != 0.0):
            dense += weighted_hessian_action(con_tape, point, lam, seeds)
    _checked(dense)
    return sp.coo_matrix(np.tril(dense))


def detect_sparsity(tape: Tape) -> SparsityPattern:
    """Jacobian sparsity by index-set propagation through the tape."""
    deps = tape.input_dependencies()
    rows, cols = [], []
    for r, dep in enumerate(deps):
        for j in sorted(dep):
            rows.append(r)
            cols.append(j)
    return SparsityPattern.from_coords((tape.n_out, tape.n_in), rows, cols)


def hessian_sparsity(tape: Tape) -> SparsityPattern:
    """Conservative lower-triangle pattern for the Hessian of any w^T F."""
    deps = tape.input_dependencies()
    rows, cols = [], []
    for dep in deps:
        idx = sorted(dep)
        for i in idx:
            for j in idx:
                if i >= j:
                    rows.append(i)
                    cols.append(j)
    return SparsityPattern.from_coords((tape.n_in, tape.n_in), rows, cols)
