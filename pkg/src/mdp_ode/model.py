"""Domain types for nature/nurture Markov models.

States live on a cartesian product X = X_u x X_n: the X_u components can be
steered by the controller ("nurture"), the X_n components are exogenous
("nature").  Every transition matrix under consideration factors as

    P(x, (xu', xn')) = R(x, xu') * Q0(x, xn')

with the nature kernel Q0 fixed.  Flat state indices are control-major,
x = xu * d_n + xn, so marginalizing out the nature coordinate is a
contiguous reduction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, ModelFormatError, ReducibilityError

ROW_SUM_TOL = 1e-12
SUPPORT_TOL = 1e-14
FILE_ROW_SUM_TOL = 1e-9


def _freeze(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _adopt(arr):
    """Mark a freshly computed float array read-only without copying."""
    arr.setflags(write=False)
    return arr


def _bless(cls, **fields):
    """Construct an instance whose invariants hold by construction, skipping checks.

    Only for arrays this library just computed (normalized rows, solver
    outputs); never for user-supplied data.
    """
    obj = object.__new__(cls)
    for name, value in fields.items():
        object.__setattr__(obj, name, value)
    return obj


def _check_probability_rows(entries, what, tol=ROW_SUM_TOL):
    if entries.size == 0:
        raise ModelError(f"{what} is empty")
    if not np.all(np.isfinite(entries)):
        raise ModelError(f"{what} has non-finite entries")
    if entries.min() < 0.0:
        i, j = np.unravel_index(int(entries.argmin()), entries.shape)
        raise ModelError(f"{what} has negative entry {entries[i, j]:.6g} at ({i}, {j})")
    sums = entries.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.max() > tol:
        i = int(off.argmax())
        raise ModelError(f"{what} row {i} sums to {sums[i]:.17g} (tolerance {tol:g})")


@dataclass(frozen=True)
class StateSpace:
    """Product state space with control-major flat indexing x = xu * d_n + xn."""

    xu_labels: tuple
    xn_labels: tuple

    def __post_init__(self):
        xu = tuple(str(s) for s in self.xu_labels)
        xn = tuple(str(s) for s in self.xn_labels)
        if not xu or not xn:
            raise ModelError("state space needs at least one label per factor")
        if len(set(xu)) != len(xu) or len(set(xn)) != len(xn):
            raise ModelError("state labels must be unique within each factor")
        object.__setattr__(self, "xu_labels", xu)
        object.__setattr__(self, "xn_labels", xn)

    @property
    def d_u(self):
        return len(self.xu_labels)

    @property
    def d_n(self):
        return len(self.xn_labels)

    @property
    def d(self):
        return self.d_u * self.d_n

    def flat(self, xu, xn):
        if not (0 <= xu < self.d_u and 0 <= xn < self.d_n):
            raise ModelError(f"component index ({xu}, {xn}) out of range")
        return xu * self.d_n + xn

    def split(self, x):
        if not 0 <= x < self.d:
            raise ModelError(f"flat index {x} out of range")
        return x // self.d_n, x % self.d_n

    def label(self, x):
        xu, xn = self.split(x)
        return f"{self.xu_labels[xu]},{self.xn_labels[xn]}"

    def index_of(self, xu_label, xn_label):
        try:
            xu = self.xu_labels.index(xu_label)
            xn = self.xn_labels.index(xn_label)
        except ValueError:
            raise ModelError(f"unknown state label ({xu_label!r}, {xn_label!r})") from None
        return self.flat(xu, xn)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over a finite index set."""

    weights: np.ndarray

    def __post_init__(self):
        w = _freeze(self.weights)
        if w.ndim != 1:
            raise ModelError("pmf weights must be a vector")
        _check_probability_rows(w[None, :], "pmf")
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.weights.size


@dataclass(frozen=True)
class StochasticMatrix:
    """Row-stochastic square matrix indexed by current state."""

    entries: np.ndarray

    def __post_init__(self):
        m = _freeze(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError(f"stochastic matrix must be square, got shape {m.shape}")
        _check_probability_rows(m, "transition matrix")
        object.__setattr__(self, "entries", m)

    @property
    def d(self):
        return self.entries.shape[0]

    def row(self, x):
        return Pmf(self.entries[x])


@dataclass(frozen=True)
class NatureKernel:
    """Exogenous kernel: row x is a pmf over the nature factor X_n."""

    entries: np.ndarray

    def __post_init__(self):
        m = _freeze(self.entries)
        if m.ndim != 2:
            raise ModelError("nature kernel must be a matrix")
        _check_probability_rows(m, "nature kernel")
        object.__setattr__(self, "entries", m)


@dataclass(frozen=True)
class ControlKernel:
    """Controllable kernel: row x is a pmf over the control factor X_u."""

    entries: np.ndarray

    def __post_init__(self):
        m = _freeze(self.entries)
        if m.ndim != 2:
            raise ModelError("control kernel must be a matrix")
        _check_probability_rows(m, "control kernel")
        object.__setattr__(self, "entries", m)


def assemble_p0(q0: NatureKernel, r0: ControlKernel) -> StochasticMatrix:
    """Combine nature and control kernels into the full transition matrix.

    Row x of the result is the outer product of the control row and the
    nature row: P(x, (xu', xn')) = R(x, xu') * Q0(x, xn').
    """
    r = r0.entries
    q = q0.entries
    d, d_u = r.shape
    d_n = q.shape[1]
    if q.shape[0] != d:
        raise ModelError(f"kernel row counts disagree: control {d}, nature {q.shape[0]}")
    if d_u * d_n != d:
        raise ModelError(f"kernel widths {d_u} x {d_n} do not span the {d} states")
    p = np.einsum("xu,xn->xun", r, q).reshape(d, d)
    return StochasticMatrix(p)


def check_irreducible_aperiodic(p: StochasticMatrix) -> int:
    """Smallest n0 with all entries of P^n positive for every n >= n0.

    Works on the boolean support of P, so the answer depends only on which
    transitions are possible.  Existence of such an n0 <= d^2 is equivalent
    to the chain being irreducible and aperiodic; otherwise an unreachable
    state pair is reported.
    """
    support = (p.entries > SUPPORT_TOL).astype(np.int64)
    d = support.shape[0]
    limit = d * d
    power = support
    n = 1
    while True:
        if power.all():
            # support idempotence: once positive, higher powers stay positive
            if not ((power @ support) > 0).all():
                raise ReducibilityError(
                    f"support of P^{n} is positive but P^{n + 1} is not"
                )
            return n
        if n == limit:
            break
        power = (power @ support > 0).astype(np.int64)
        n += 1
    i, j = (int(v) for v in np.argwhere(power == 0)[0])
    raise ReducibilityError(
        f"chain is not irreducible and aperiodic: no positive-probability "
        f"path from state {i} to state {j} at horizon {limit}",
        pair=(i, j),
    )


@dataclass(frozen=True)
class KLModel:
    """Control instance: nature kernel, nominal control kernel, state utility.

    The assembled nominal matrix must be irreducible and aperiodic; the
    mixing horizon n0 is recorded at construction.  Utility is a pure state
    function and the reference state pins the additive normalization of
    value functions.
    """

    space: StateSpace
    q0: NatureKernel
    r0: ControlKernel
    utility: np.ndarray
    reference_state: int
    p0: StochasticMatrix = field(init=False, repr=False, compare=False)
    n0: int = field(init=False, compare=False)

    def __post_init__(self):
        d, d_u, d_n = self.space.d, self.space.d_u, self.space.d_n
        if self.q0.entries.shape != (d, d_n):
            raise ModelError(f"nature kernel shape {self.q0.entries.shape} != ({d}, {d_n})")
        if self.r0.entries.shape != (d, d_u):
            raise ModelError(f"control kernel shape {self.r0.entries.shape} != ({d}, {d_u})")
        u = _freeze(self.utility)
        if u.shape != (d,):
            raise ModelError(f"utility must be a length-{d} vector, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ModelError("utility has non-finite entries")
        x0 = int(self.reference_state)
        if not 0 <= x0 < d:
            raise ModelError(f"reference state {x0} out of range 0..{d - 1}")
        object.__setattr__(self, "utility", u)
        object.__setattr__(self, "reference_state", x0)
        p0 = assemble_p0(self.q0, self.r0)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "n0", check_irreducible_aperiodic(p0))
        # strictly positive control rows admit a maskless log-sum-exp path
        object.__setattr__(self, "_full_support", bool(self.r0.entries.min() > 0.0))

    @property
    def d(self):
        return self.space.d


@dataclass(frozen=True)
class StandardMDP:
    """Plain finite MDP: transition law rho[s, a, s'] plus a randomized nominal policy phi0[s, a]."""

    state_labels: tuple
    action_labels: tuple
    transitions: np.ndarray
    nominal_policy: np.ndarray

    def __post_init__(self):
        states = tuple(str(s) for s in self.state_labels)
        actions = tuple(str(a) for a in self.action_labels)
        n_s, n_a = len(states), len(actions)
        rho = _freeze(self.transitions)
        phi = _freeze(self.nominal_policy)
        if rho.shape != (n_s, n_a, n_s):
            raise ModelError(f"transition law shape {rho.shape} != ({n_s}, {n_a}, {n_s})")
        if phi.shape != (n_s, n_a):
            raise ModelError(f"nominal policy shape {phi.shape} != ({n_s}, {n_a})")
        _check_probability_rows(rho.reshape(n_s * n_a, n_s), "transition law")
        _check_probability_rows(phi, "nominal policy")
        object.__setattr__(self, "state_labels", states)
        object.__setattr__(self, "action_labels", actions)
        object.__setattr__(self, "transitions", rho)
        object.__setattr__(self, "nominal_policy", phi)


def embed_standard_mdp(m: StandardMDP):
    """Lift a standard MDP onto the product space X = A x S.

    The control factor records the action component of the pair chain, the
    nature factor the MDP state.  Returns (space, nature kernel, nominal
    control kernel); utility and reference state are supplied by the caller.
    """
    n_s, n_a = len(m.state_labels), len(m.action_labels)
    space = StateSpace(xu_labels=m.action_labels, xn_labels=m.state_labels)
    # x = (a, s) at flat index a * n_s + s
    q0 = np.transpose(m.transitions, (1, 0, 2)).reshape(n_a * n_s, n_s)
    r0 = np.tile(m.nominal_policy, (n_a, 1))
    return space, NatureKernel(q0), ControlKernel(r0)


def support_equivalence(p: StochasticMatrix, p0: StochasticMatrix, tol=SUPPORT_TOL) -> bool:
    """True when both matrices allow exactly the same transitions."""
    a, b = p.entries, p0.entries
    if a.shape != b.shape:
        raise ModelError(f"shape mismatch {a.shape} vs {b.shape}")
    return bool(np.array_equal(a > tol, b > tol))


# ---------------------------------------------------------------------------
# model files

_MODEL_KEYS = ("xu_labels", "xn_labels", "Q0", "R0", "utility", "reference_state")


def _reject_nonfinite(token):
    raise ModelFormatError(f"non-finite number {token!r} is not allowed in model files")


def _numeric_matrix(raw, key, rows, cols):
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError("not a rectangular numeric array", field=key) from None
    if arr.shape != (rows, cols):
        raise ModelFormatError(f"shape {arr.shape} != ({rows}, {cols})", field=key)
    if not np.all(np.isfinite(arr)):
        i = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise ModelFormatError("non-finite entry", field=f"{key}[{i}]")
    if arr.min() < 0.0:
        i = int(np.unravel_index(int(arr.argmin()), arr.shape)[0])
        raise ModelFormatError("negative entry", field=f"{key}[{i}]")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.max() > FILE_ROW_SUM_TOL:
        i = int(off.argmax())
        raise ModelFormatError(
            f"row sums to {sums[i]:.17g}, off by more than {FILE_ROW_SUM_TOL:g}",
            field=f"{key}[{i}]",
        )
    return arr


def model_from_dict(raw) -> KLModel:
    """Build a model from parsed JSON content, with field-level diagnostics."""
    if not isinstance(raw, dict):
        raise ModelFormatError("model file must contain a JSON object")
    missing = [k for k in _MODEL_KEYS if k not in raw]
    if missing:
        raise ModelFormatError(f"missing keys: {', '.join(missing)}")

    for key in ("xu_labels", "xn_labels"):
        labels = raw[key]
        if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
            raise ModelFormatError("must be an array of strings", field=key)
    space = StateSpace(tuple(raw["xu_labels"]), tuple(raw["xn_labels"]))

    q0 = _numeric_matrix(raw["Q0"], "Q0", space.d, space.d_n)
    r0 = _numeric_matrix(raw["R0"], "R0", space.d, space.d_u)

    try:
        utility = np.array(raw["utility"], dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError("not a numeric array", field="utility") from None
    if utility.shape != (space.d,):
        raise ModelFormatError(f"length {utility.size} != {space.d}", field="utility")
    if not np.all(np.isfinite(utility)):
        raise ModelFormatError("non-finite entry", field="utility")

    ref = raw["reference_state"]
    if isinstance(ref, bool) or not isinstance(ref, (int, str)):
        raise ModelFormatError("must be an integer index or 'xu_label,xn_label'", field="reference_state")
    if isinstance(ref, str):
        if "," not in ref:
            raise ModelFormatError(f"label {ref!r} is not of the form 'xu_label,xn_label'", field="reference_state")
        xu_label, xn_label = ref.split(",", 1)
        try:
            ref = space.index_of(xu_label, xn_label)
        except ModelError as exc:
            raise ModelFormatError(str(exc), field="reference_state") from None
    elif not 0 <= ref < space.d:
        raise ModelFormatError(f"index {ref} out of range 0..{space.d - 1}", field="reference_state")

    try:
        return KLModel(space, NatureKernel(q0), ControlKernel(r0), utility, int(ref))
    except ReducibilityError:
        raise
    except ModelError as exc:
        raise ModelFormatError(str(exc)) from None


def load_model(path) -> KLModel:
    """Read and validate a model file (JSON, UTF-8)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh, parse_constant=_reject_nonfinite)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(
                f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
    return model_from_dict(raw)


def model_to_dict(model: KLModel) -> dict:
    return {
        "xu_labels": list(model.space.xu_labels),
        "xn_labels": list(model.space.xn_labels),
        "Q0": model.q0.entries.tolist(),
        "R0": model.r0.entries.tolist(),
        "utility": model.utility.tolist(),
        "reference_state": model.space.label(model.reference_state),
    }


def save_model(model: KLModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
