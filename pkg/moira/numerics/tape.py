"""
Reverse-mode automatic differentiation on dense 2-d float64 arrays.

A `Tape` records every primitive in the order it is evaluated, so node ids referenced
as inputs always precede the node that uses them. `Tape.backward(root)` walks the
record in reverse and accumulates vector-Jacobian products. Only the operations the
MOIRA network and its losses need are implemented.
"""
import numpy as np

from ..utils.exceptions import ContractError, DimensionError, EmptySupportError, NumericalError

LEAKY_SLOPE = 0.01
COSINE_EPS = 1e-8
LOG_CLAMP = 1e-12


def _as2d(value):
    value = np.array(value, dtype=np.float64)
    if value.ndim == 0:
        value = value.reshape(1, 1)
    elif value.ndim == 1:
        value = value.reshape(1, -1)
    if value.ndim != 2:
        raise DimensionError(f"Expected a scalar, vector or matrix, got {value.ndim} dimensions", value.shape)
    return value


def _unbroadcast(grad, shape):
    """Sums a gradient over the axes that were broadcast in the forward pass."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i in range(2) if shape[i] == 1 and grad.shape[i] != 1)
    return grad.sum(axis=axes, keepdims=True)


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape, id):
        self.tape = tape
        self.id = id

    @property
    def value(self):
        return self.tape.values[self.id]

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self):
        return self.tape.grad(self)

    @property
    def T(self):
        return self.tape.transpose(self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __rmatmul__(self, other):
        return self.tape.matmul(other, self)

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.tape.scale(self, other)
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape.scale(self, -1.0)

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"


class Tape:
    """Records primitive operations and differentiates them in reverse order.

    `nodes[k]` is `(op_name, input_ids, vjp)` where `vjp(g)` maps the gradient of
    node k to one gradient (or None) per input. `values[k]` holds the forward value
    and, after `backward`, `grads[k]` the gradient of the root w.r.t. node k.
    """

    def __init__(self):
        self.nodes = []
        self.values = []
        self.grads = None

    def __len__(self):
        return len(self.nodes)

    def _record(self, op, value, inputs=(), vjp=None):
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"Non-finite value produced by `{op}`.")
        self.nodes.append((op, tuple(v.id for v in inputs), vjp))
        self.values.append(value)
        return Var(self, len(self.values) - 1)

    def _var(self, x):
        if isinstance(x, Var):
            assert x.tape is self, "Cannot mix nodes of different tapes."
            return x
        return self.leaf(x)

    # ------------------------------------------------------------------------
    # leaves

    def leaf(self, value):
        """Records an input array (parameter, data or constant)."""
        return self._record("leaf", _as2d(value))

    # ------------------------------------------------------------------------
    # linear algebra

    def matmul(self, a, b):
        a, b = self._var(a), self._var(b)
        A, B = a.value, b.value
        if A.shape[1] != B.shape[0]:
            raise DimensionError("matmul shape mismatch", A.shape, B.shape)
        return self._record("matmul", A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))

    def transpose(self, x):
        x = self._var(x)
        return self._record("transpose", x.value.T.copy(), (x,), lambda g: (g.T,))

    def _broadcast(self, op, a, b):
        a, b = self._var(a), self._var(b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise DimensionError(f"{op} shape mismatch", a.shape, b.shape)
        return a, b

    def add(self, a, b):
        a, b = self._broadcast("add", a, b)
        sa, sb = a.shape, b.shape
        return self._record("add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sub(self, a, b):
        a, b = self._broadcast("sub", a, b)
        sa, sb = a.shape, b.shape
        return self._record("sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))

    def mul(self, a, b):
        a, b = self._broadcast("mul", a, b)
        A, B = a.value, b.value
        return self._record(
            "mul", A * B, (a, b), lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape))
        )

    def scale(self, x, c):
        x = self._var(x)
        c = float(c)
        return self._record("scale", x.value * c, (x,), lambda g: (g * c,))

    # ------------------------------------------------------------------------
    # reductions

    def sum(self, x):
        x = self._var(x)
        shape = x.shape
        return self._record("sum", x.value.sum().reshape(1, 1), (x,), lambda g: (np.full(shape, g[0, 0]),))

    def mean(self, x):
        x = self._var(x)
        shape = x.shape
        n = x.value.size
        return self._record(
            "mean", (x.value.sum() / n).reshape(1, 1), (x,), lambda g: (np.full(shape, g[0, 0] / n),)
        )

    # ------------------------------------------------------------------------
    # nonlinearities

    def leaky_relu(self, x, slope=LEAKY_SLOPE):
        assert 0 <= slope < 1, "LeakyReLU slope must be in [0, 1)."
        x = self._var(x)
        X = x.value
        # derivative at exactly 0 is the slope
        d = np.where(X > 0, 1.0, slope)
        return self._record("leaky_relu", np.where(X > 0, X, slope * X), (x,), lambda g: (g * d,))

    def dropout(self, x, p, training, rng=None):
        """Inverted dropout: survivors are scaled by 1/(1-p), evaluation is the identity."""
        if not 0 <= p < 1:
            raise ContractError(f"Dropout probability must be in [0, 1), got {p}.")
        x = self._var(x)
        if not training or p == 0:
            return x
        assert rng is not None, "Dropout in training mode needs a random generator."
        keep = (rng.random(x.shape) >= p) / (1.0 - p)
        return self._record("dropout", x.value * keep, (x,), lambda g: (g * keep,))

    def row_softmax(self, x, mask=None):
        """Softmax over every row restricted to the unmasked entries; masked entries are exactly 0.

        :param mask: None (all entries), per-column flags of length `cols`, or a boolean matrix of x's shape
        """
        x = self._var(x)
        X = x.value
        if mask is None:
            mask = np.ones(X.shape, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.ndim == 1:
                mask = np.broadcast_to(mask.reshape(1, -1), X.shape)
            if mask.shape != X.shape:
                raise DimensionError("softmax mask shape mismatch", mask.shape, X.shape)
        if not mask.any(axis=1).all():
            raise EmptySupportError("Every row of a masked softmax needs at least one unmasked entry.")
        shift = np.where(mask, X, -np.inf).max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, X - shift, 0.0)), 0.0)
        Y = e / e.sum(axis=1, keepdims=True)
        return self._record(
            "row_softmax", Y, (x,), lambda g: (Y * (g - (g * Y).sum(axis=1, keepdims=True)),)
        )

    def log_softmax(self, x):
        x = self._var(x)
        X = x.value
        shifted = X - X.max(axis=1, keepdims=True)
        logZ = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        Y = shifted - logZ
        S = np.exp(Y)
        return self._record("log_softmax", Y, (x,), lambda g: (g - S * g.sum(axis=1, keepdims=True),))

    def log(self, x, clamp=LOG_CLAMP):
        """Natural log of max(x, clamp). The clamped region has zero gradient."""
        x = self._var(x)
        X = x.value
        active = X > clamp
        safe = np.where(active, X, 1.0)
        return self._record(
            "log", np.log(np.maximum(X, clamp)), (x,), lambda g: (np.where(active, g / safe, 0.0),)
        )

    # ------------------------------------------------------------------------
    # indexing

    def gather_rows(self, x, rows):
        x = self._var(x)
        rows = np.asarray(rows, dtype=int)
        shape = x.shape

        def vjp(g):
            G = np.zeros(shape)
            np.add.at(G, rows, g)
            return (G,)

        return self._record("gather_rows", x.value[rows], (x,), vjp)

    def scatter_rows(self, x, rows, n_rows):
        """Places the rows of x at `rows` of an otherwise zero (n_rows x cols) matrix."""
        x = self._var(x)
        rows = np.asarray(rows, dtype=int)
        if len(rows) != x.shape[0]:
            raise DimensionError("scatter row count mismatch", (len(rows),), x.shape)
        assert len(np.unique(rows)) == len(rows), "Scatter rows must be distinct."
        out = np.zeros((n_rows, x.shape[1]))
        out[rows] = x.value
        return self._record("scatter_rows", out, (x,), lambda g: (g[rows],))

    def pick(self, x, cols):
        """Selects entry `cols[i]` from row i, returns a column vector."""
        x = self._var(x)
        cols = np.asarray(cols, dtype=int)
        if len(cols) != x.shape[0]:
            raise DimensionError("pick index count mismatch", (len(cols),), x.shape)
        rows = np.arange(len(cols))
        shape = x.shape

        def vjp(g):
            G = np.zeros(shape)
            G[rows, cols] = g[:, 0]
            return (G,)

        return self._record("pick", x.value[rows, cols].reshape(-1, 1), (x,), vjp)

    # ------------------------------------------------------------------------
    # similarity

    def cosine_matrix(self, a, b, eps=COSINE_EPS):
        """Pairwise cosine similarities S[i, j] = a_i.b_j / max(|a_i| |b_j|, eps)."""
        a, b = self._var(a), self._var(b)
        A, B = a.value, b.value
        if A.shape[1] != B.shape[1]:
            raise DimensionError("cosine embedding width mismatch", A.shape, B.shape)
        na = np.linalg.norm(A, axis=1, keepdims=True)
        nb = np.linalg.norm(B, axis=1, keepdims=True)
        P = A @ B.T
        N = na @ nb.T
        active = N > eps
        D = np.where(active, N, eps)
        S = P / D
        unitA = np.divide(A, na, out=np.zeros_like(A), where=na > 0)
        unitB = np.divide(B, nb, out=np.zeros_like(B), where=nb > 0)

        def vjp(g):
            gD = g / D
            # d/dD of P/D, only where the norm product is the denominator
            w = np.where(active, g * P / (D * D), 0.0)
            Ga = gD @ B - (w * nb.T).sum(axis=1, keepdims=True) * unitA
            Gb = gD.T @ A - (w * na).sum(axis=0).reshape(-1, 1) * unitB
            return Ga, Gb

        return self._record("cosine_matrix", S, (a, b), vjp)

    # ------------------------------------------------------------------------
    # differentiation

    def backward(self, root):
        """Fills `grads` with d(root)/d(node) for every node the root depends on.

        :param root: Scalar (1x1) node
        :type root: Var
        :raises ContractError: If root is not 1x1
        """
        root = self._var(root)
        if root.shape != (1, 1):
            raise ContractError(f"backward() needs a 1x1 root, got shape {root.shape}.")
        grads = [None] * len(self.values)
        grads[root.id] = np.ones((1, 1))
        for k in range(root.id, -1, -1):
            g = grads[k]
            if g is None:
                continue
            _, inputs, vjp = self.nodes[k]
            if vjp is None:
                continue
            for i, contribution in zip(inputs, vjp(g)):
                if contribution is None:
                    continue
                grads[i] = contribution if grads[i] is None else grads[i] + contribution
        self.grads = grads
        return grads

    def grad(self, var):
        """Gradient of the last backward root w.r.t. `var` (zeros if unreachable)."""
        assert self.grads is not None, "Call backward() first."
        g = self.grads[var.id] if var.id < len(self.grads) else None
        return np.zeros(var.shape) if g is None else g


# ----------------------------------------------------------------------------
# functional interface: works on Vars (recorded) or plain arrays (evaluated)


def _apply(op, *args, **kwargs):
    tape = next((x.tape for x in args if isinstance(x, Var)), None)
    if tape is not None:
        return getattr(tape, op)(*args, **kwargs)
    return getattr(Tape(), op)(*args, **kwargs).value


def matmul(a, b):
    return _apply("matmul", a, b)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return _apply("leaky_relu", x, slope=slope)


def dropout(x, p, training, rng=None):
    return _apply("dropout", x, p, training, rng=rng)


def row_softmax(x, mask=None):
    return _apply("row_softmax", x, mask=mask)


def cosine_sim(a, b, eps=COSINE_EPS):
    """Cosine similarity of two vectors, a.b / max(|a| |b|, eps). The floor replaces an
    additive eps so that cosine_sim(a, a) is 1 to rounding whenever |a|^2 >= eps; below
    the floor the similarity shrinks towards 0."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError("cosine_sim length mismatch", a.shape, b.shape)
    return float(a @ b / max(np.linalg.norm(a) * np.linalg.norm(b), eps))


def backward(tape, root):
    return tape.backward(root)
