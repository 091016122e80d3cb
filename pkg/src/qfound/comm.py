"""Fingerprinting states from classical codes and the one-way message lower bound."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Dims, PureState, as_rng
from .errors import GenerationBudgetExceeded, ParameterOutOfRange, SchemaError, TriplesNotAntiDistinguishable
from .ontology import anti_distinguishable_triple


@dataclass(frozen=True)
class Codebook:
    n: int
    m: int
    words: tuple[str, ...]

    def __post_init__(self):
        if len(self.words) != 2**self.n:
            raise ParameterOutOfRange(f"need 2^{self.n} words, got {len(self.words)}")
        if len(set(self.words)) != len(self.words):
            raise ParameterOutOfRange("code words must be distinct")
        for w in self.words:
            if len(w) != self.m or set(w) - {"0", "1"}:
                raise ParameterOutOfRange(f"bad code word {w!r}")

    def bits(self) -> np.ndarray:
        return np.array([[int(ch) for ch in w] for w in self.words], dtype=np.int8)

    def distances(self) -> np.ndarray:
        b = self.bits()
        return (b[:, None, :] != b[None, :, :]).sum(axis=2)


@dataclass(frozen=True)
class FingerprintSet:
    states: tuple[PureState, ...]
    source: Codebook | None = None

    def overlaps(self) -> np.ndarray:
        """Matrix of squared inner products."""
        a = np.array([s.amplitudes for s in self.states])
        return np.abs(a.conj() @ a.T) ** 2


def fingerprint_states(code: Codebook) -> FingerprintSet:
    """|F_x> = m^(-1/2) sum_k (-1)^(E_k(x)) |k>."""
    dims = Dims.of(("F", code.m))
    amps = (1 - 2 * code.bits().astype(float)) / math.sqrt(code.m)
    return FingerprintSet(tuple(PureState(dims, a) for a in amps), code)


def fingerprint_overlap(distance: int, m: int) -> float:
    return (1 - 2 * distance / m) ** 2


@dataclass
class TripleReport:
    ok: bool
    checked: int
    failures: list[tuple[int, int, int]]


def verify_triples(fs: FingerprintSet) -> TripleReport:
    """Check that every unordered triple of states is anti-distinguishable."""
    n = len(fs.states)
    if n < 3:
        raise ParameterOutOfRange("need at least three states")
    ov = np.clip(fs.overlaps(), 0.0, 1.0)
    failures = []
    checked = 0
    for i, j, k in itertools.combinations(range(n), 3):
        checked += 1
        if not anti_distinguishable_triple(ov[i, j], ov[i, k], ov[j, k]):
            failures.append((i, j, k))
    return TripleReport(not failures, checked, failures)


def fc_lower_bound(fs: FingerprintSet) -> tuple[int, int]:
    """(minimum number of messages, minimum bits) for a one-way classical simulation:
    no message may be sent for three anti-distinguishable states, so each message
    covers at most two."""
    n = len(fs.states)
    if n >= 3:
        report = verify_triples(fs)
        if not report.ok:
            raise TriplesNotAntiDistinguishable(f"{len(report.failures)} triples fail, e.g. {report.failures[0]}")
    messages = math.ceil(n / 2)
    return messages, math.ceil(math.log2(messages)) if messages > 1 else 0


@dataclass
class PigeonholeWitness:
    message: object
    triple: tuple[int, int, int]
    argument: str


def fc_pigeonhole_witness(fs: FingerprintSet, assignment) -> PigeonholeWitness | None:
    """Return a message that is assigned three or more states, if any.

    assignment maps state index to message (a mapping or a sequence)."""
    items = assignment.items() if hasattr(assignment, "items") else enumerate(assignment)
    groups: dict = {}
    for idx, msg in items:
        if not 0 <= idx < len(fs.states):
            raise ParameterOutOfRange(f"state index {idx} out of range")
        groups.setdefault(msg, []).append(idx)
    for msg, idxs in groups.items():
        if len(idxs) >= 3:
            triple = tuple(sorted(idxs)[:3])
            argument = (
                f"states {triple} share message {msg!r}; the measurement that anti-distinguishes "
                "them must give each outcome probability zero on all three, yet the receiver's "
                "response to this one message is a single normalised distribution over those outcomes"
            )
            return PigeonholeWitness(msg, triple, argument)
    return None


def random_code(n: int, m: int, min_frac: float = 0.25, max_frac: float = 0.75, seed=None, budget: int = 10_000) -> Codebook:
    """Random 2^n-word code of length m whose pairwise distances d satisfy
    min_frac*m < d < max_frac*m (checked exhaustively; the open upper end keeps
    fingerprint overlaps strictly below (1 - 2*max_frac)^2). Words are drawn one at a
    time and rejected if they break the window; the whole draw restarts on a dead end."""
    if n < 0 or m < 1:
        raise ParameterOutOfRange("need n >= 0 and m >= 1")
    rng = as_rng(seed)
    lo, hi = min_frac * m, max_frac * m
    count = 2**n
    attempts = 0
    while attempts < budget:
        words: list[np.ndarray] = []
        while len(words) < count and attempts < budget:
            attempts += 1
            w = rng.integers(0, 2, m, dtype=np.int8)
            if all(lo < int((w != v).sum()) < hi for v in words):
                words.append(w)
                continue
            if attempts % 200 == 0:
                break
        if len(words) == count:
            code = Codebook(n, m, tuple("".join(map(str, w)) for w in words))
            dist = code.distances()[np.triu_indices(count, 1)]
            assert np.all((dist > lo) & (dist < hi))
            return code
    raise GenerationBudgetExceeded(f"no code with n={n}, m={m} in the distance window after {budget} draws")


def codebook_to_json(code: Codebook) -> dict:
    return {"n": code.n, "m": code.m, "words": list(code.words)}


def codebook_from_json(doc) -> Codebook:
    try:
        return Codebook(int(doc["n"]), int(doc["m"]), tuple(str(w) for w in doc["words"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed codebook: {exc}") from None
