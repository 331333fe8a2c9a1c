"""Finite Markov chains: validation, stationary distributions, generators, JSON I/O.

A chain is a validated row-stochastic matrix ``P`` over ``m`` states.
The stationary distribution solves ``pi P = pi`` by a direct linear
solve (normalization row replacing one equation) with a lazy-chain
power-iteration fallback for systems that come back singular.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadParamsError,
    ChainFileError,
    NegativeEntryError,
    NonSquareError,
    NonStochasticRowError,
    NotIrreducibleError,
    SingularSystemError,
    ValidationError,
)

ROW_SUM_TOL = 1e-12
ENTRY_CLAMP = 1e-15
STATIONARY_RESIDUAL_TOL = 1e-10
POWER_ITER_MAX = 10**6
POWER_ITER_TOL = 1e-12

CHAIN_FAMILIES = ("iid", "two-state", "lazy-cycle", "birth-death", "random-dense")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Validated row-stochastic matrix over ``m`` states."""

    m: int
    rows: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.rows.setflags(write=False)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Probability vector ``pi`` with a recomputed fixed-point residual."""

    pi: np.ndarray
    residual: float

    def __post_init__(self):
        self.pi.setflags(write=False)

    def mass(self, members) -> float:
        """Total stationary mass of a collection of state indices."""
        idx = np.asarray(sorted(members), dtype=int)
        return float(self.pi[idx].sum()) if idx.size else 0.0


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """A transition matrix plus an initial distribution.

    ``start=None`` means "start from the stationary distribution"; it is
    resolved lazily so generated chains stay cheap to construct.
    """

    matrix: TransitionMatrix
    start: np.ndarray | None = None

    def __post_init__(self):
        if self.start is not None:
            s = np.asarray(self.start, dtype=float)
            if s.shape != (self.matrix.m,):
                raise ValidationError(
                    f"start has length {s.shape}, expected ({self.matrix.m},)")
            if np.any(s < 0):
                raise ValidationError("start has a negative entry")
            if abs(s.sum() - 1.0) > ROW_SUM_TOL:
                raise ValidationError(f"start sums to {s.sum()!r}, expected 1")
            s.setflags(write=False)
            object.__setattr__(self, "start", s)

    def resolved_start(self, pi: StationaryDistribution | None = None) -> np.ndarray:
        if self.start is not None:
            return self.start
        if pi is None:
            pi = stationary(self.matrix)
        return pi.pi


def point_start(m: int, x: int) -> np.ndarray:
    """Point-mass initial distribution at state ``x``."""
    s = np.zeros(m)
    s[x] = 1.0
    return s


def validate(raw, labels=None) -> TransitionMatrix:
    """Validate a raw square matrix as a transition matrix.

    Entries within 1e-15 outside [0, 1] are clamped (decimal round-trip
    noise); each row must sum to 1 within 1e-12.

    Raises
    ------
    NonSquareError, NegativeEntryError, NonStochasticRowError
    """
    P = np.array(raw, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise NonSquareError(f"expected a square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        i, j = np.argwhere(~np.isfinite(P))[0]
        raise ValidationError(f"P[{i}][{j}] is not finite")
    P[(P > -ENTRY_CLAMP) & (P < 0.0)] = 0.0
    P[(P > 1.0) & (P < 1.0 + ENTRY_CLAMP)] = 1.0
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        raise NegativeEntryError(f"P[{i}][{j}] = {P[i, j]!r} is negative")
    sums = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        i = int(bad[0])
        raise NonStochasticRowError(f"row {i} sums to {sums[i]!r}, expected 1")
    if labels is not None:
        labels = tuple(str(x) for x in labels)
        if len(labels) != P.shape[0]:
            raise ValidationError(f"got {len(labels)} labels for {P.shape[0]} states")
    return TransitionMatrix(m=int(P.shape[0]), rows=P, labels=labels)


def is_irreducible(P: TransitionMatrix) -> bool:
    """True iff the support graph {(x, y): P(x, y) > 0} is strongly connected."""
    support = csr_matrix(P.rows > 0)
    n_comp, _ = connected_components(support, directed=True, connection="strong")
    return int(n_comp) == 1


def stationary(P: TransitionMatrix) -> StationaryDistribution:
    """Solve ``pi P = pi`` for an irreducible chain.

    Direct solve of ``(P^T - I) pi = 0`` with the last equation replaced
    by the normalization ``sum(pi) = 1``. If that system is singular to
    working precision, falls back to power iteration on the half-lazy
    chain ``(P + I)/2`` (same fixed point, guaranteed aperiodic).
    """
    if not is_irreducible(P):
        raise NotIrreducibleError("chain is not irreducible")
    m = P.m
    if m == 1:
        return StationaryDistribution(pi=np.array([1.0]), residual=0.0)

    pi = None
    A = P.rows.T - np.eye(m)
    A[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        pi = None
    if pi is not None and (np.any(~np.isfinite(pi)) or _residual(pi, P) > STATIONARY_RESIDUAL_TOL):
        pi = None
    if pi is None:
        pi = _stationary_power(P)

    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    res = _residual(pi, P)
    if res > STATIONARY_RESIDUAL_TOL:
        raise SingularSystemError(f"stationary residual {res!r} exceeds tolerance")
    if np.any(pi <= 0):
        raise SingularSystemError("stationary entry underflowed to zero on an irreducible chain")
    return StationaryDistribution(pi=pi, residual=res)


def _residual(pi, P) -> float:
    return float(np.max(np.abs(pi @ P.rows - pi)))


def _stationary_power(P: TransitionMatrix) -> np.ndarray:
    lazy = 0.5 * (P.rows + np.eye(P.m))
    v = np.full(P.m, 1.0 / P.m)
    for _ in range(POWER_ITER_MAX):
        nxt = v @ lazy
        if np.max(np.abs(nxt - v)) <= POWER_ITER_TOL:
            return nxt
        v = nxt
    raise SingularSystemError("power iteration did not converge")


def generate(family: str, m: int | None = None, seed: int = 0, **params) -> ChainSpec:
    """Deterministic chain construction for a named family.

    Families: ``iid(mu)``, ``two-state(p, q)``, ``lazy-cycle(m, hold)``,
    ``birth-death(m, p, q)``, ``random-dense(m, alpha)``. Every family is
    irreducible by construction; ``seed`` only matters for random-dense.
    """
    if family == "iid":
        rows = _gen_iid(params)
    elif family == "two-state":
        rows = _gen_two_state(params)
    elif family == "lazy-cycle":
        rows = _gen_lazy_cycle(m, params)
    elif family == "birth-death":
        rows = _gen_birth_death(m, params)
    elif family == "random-dense":
        rows = _gen_random_dense(m, params, seed)
    else:
        raise BadParamsError(f"unknown chain family {family!r}; known: {CHAIN_FAMILIES}")
    _reject_extras(family, params)
    return ChainSpec(matrix=validate(rows))


def _reject_extras(family, params):
    if params:
        raise BadParamsError(f"unused parameters for family {family!r}: {sorted(params)}")


def _gen_iid(params):
    mu = np.asarray(params.pop("mu", None), dtype=float)
    if mu.ndim != 1 or mu.size < 1:
        raise BadParamsError("iid needs a 1-d probability vector mu")
    if np.any(mu <= 0) or abs(mu.sum() - 1.0) > ROW_SUM_TOL:
        raise BadParamsError("mu must be a strictly positive distribution")
    return np.tile(mu, (mu.size, 1))


def _gen_two_state(params):
    p = params.pop("p", None)
    q = params.pop("q", None)
    if p is None or q is None or not (0 < p <= 1) or not (0 < q <= 1):
        raise BadParamsError("two-state needs flip probabilities p, q in (0, 1]")
    return np.array([[1 - p, p], [q, 1 - q]])


def _gen_lazy_cycle(m, params):
    hold = params.pop("hold", None)
    if m is None or m < 1:
        raise BadParamsError("lazy-cycle needs m >= 1")
    if hold is None or not (0 <= hold < 1):
        raise BadParamsError("lazy-cycle needs hold probability in [0, 1)")
    rows = np.zeros((m, m))
    for i in range(m):
        rows[i, i] += hold
        rows[i, (i + 1) % m] += (1 - hold) / 2
        rows[i, (i - 1) % m] += (1 - hold) / 2
    return rows


def _gen_birth_death(m, params):
    p = params.pop("p", None)
    q = params.pop("q", None)
    if m is None or m < 1:
        raise BadParamsError("birth-death needs m >= 1")
    if p is None or q is None or p <= 0 or q <= 0 or p + q > 1:
        raise BadParamsError("birth-death needs p > 0, q > 0 with p + q <= 1")
    rows = np.zeros((m, m))
    for i in range(m):
        up = p if i + 1 < m else 0.0
        down = q if i > 0 else 0.0
        rows[i, i] = 1.0 - up - down
        if i + 1 < m:
            rows[i, i + 1] = up
        if i > 0:
            rows[i, i - 1] = down
    return rows


def _gen_random_dense(m, params, seed):
    alpha = params.pop("alpha", 1.0)
    if m is None or m < 1:
        raise BadParamsError("random-dense needs m >= 1")
    if alpha <= 0:
        raise BadParamsError("random-dense needs alpha > 0")
    from .simulate import derive_stream

    rng = derive_stream(seed, 0)
    rows = rng.dirichlet(np.full(m, float(alpha)), size=m)
    # Dirichlet samples are strictly positive a.s.; clamp defensively.
    rows = np.clip(rows, 1e-300, None)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return rows


# --- chain-spec files -------------------------------------------------------
#
# UTF-8 JSON object {"m": int, "P": [[...]], "labels": [...]?, "start": [...]?}
# Absent "start" means "use the stationary distribution".


def chain_to_dict(chain: ChainSpec) -> dict:
    out = {"m": chain.matrix.m, "P": [list(map(float, row)) for row in chain.matrix.rows]}
    if chain.matrix.labels is not None:
        out["labels"] = list(chain.matrix.labels)
    if chain.start is not None:
        out["start"] = list(map(float, chain.start))
    return out


def save_chain(chain: ChainSpec, path) -> None:
    Path(path).write_text(json.dumps(chain_to_dict(chain), indent=2) + "\n", encoding="utf-8")


def load_chain(path) -> ChainSpec:
    """Load and validate a chain-spec file; errors name the offending field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ChainFileError(f"{path}: {e.strerror or e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ChainFileError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    return chain_from_dict(obj, where=str(path))


def chain_from_dict(obj, where="<chain>") -> ChainSpec:
    if not isinstance(obj, dict):
        raise ChainFileError(f"{where}: top level must be a JSON object")
    if "m" not in obj:
        raise ChainFileError(f"{where}: field 'm' is missing")
    m = obj["m"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ChainFileError(f"{where}: field 'm' must be an integer >= 1, got {m!r}")
    if "P" not in obj:
        raise ChainFileError(f"{where}: field 'P' is missing")
    P = obj["P"]
    if not isinstance(P, list) or len(P) != m:
        raise ChainFileError(f"{where}: field 'P' must be a list of {m} rows")
    for i, row in enumerate(P):
        if not isinstance(row, list) or len(row) != m:
            raise ChainFileError(f"{where}: P[{i}] must be a list of {m} numbers")
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ChainFileError(f"{where}: P[{i}][{j}] is not a finite number: {v!r}")
    labels = obj.get("labels")
    if labels is not None:
        if not isinstance(labels, list) or len(labels) != m:
            raise ChainFileError(f"{where}: field 'labels' must be a list of {m} strings")
    start = obj.get("start")
    if start is not None:
        if not isinstance(start, list) or len(start) != m:
            raise ChainFileError(f"{where}: field 'start' must be a list of {m} numbers")
        for j, v in enumerate(start):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ChainFileError(f"{where}: start[{j}] is not a finite number: {v!r}")
    extra = set(obj) - {"m", "P", "labels", "start"}
    if extra:
        raise ChainFileError(f"{where}: unknown field {sorted(extra)[0]!r}")
    matrix = validate(P, labels=labels)
    return ChainSpec(matrix=matrix, start=np.asarray(start, dtype=float) if start is not None else None)
