"""Symbolic Cartesian tensor terms built from products of field factors.

A term is a product of factors such as ``u[j] du[i]/dx[j]``.  Every factor
slot carries an integer suffix label; a label occurring once is a free
suffix (an output index of the term) and a label occurring twice is a
repeated suffix (summed over spatial axes).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import permutations, product
from typing import Iterable, Sequence

_ALPHABET = "ijklmnopqrstuvwxyz"


def suffix_name(label: int) -> str:
    """Display name of a suffix label (0 -> 'i', 1 -> 'j', ...)."""
    if label < 0:
        raise ValueError(f"suffix label must be non-negative, got {label}")
    if label < len(_ALPHABET):
        return _ALPHABET[label]
    return f"i{label}"


def _derived_slot_groups(base_order: int, deriv_order: int,
                         symmetric_base: bool) -> tuple[tuple[int, ...], ...]:
    groups = []
    if symmetric_base and base_order > 1:
        groups.append(tuple(range(base_order)))
    if deriv_order > 1:
        groups.append(tuple(range(base_order, base_order + deriv_order)))
    return tuple(groups)


@dataclass(frozen=True)
class FactorShape:
    """An unlabeled factor: a field (or derivative of one) with open slots."""

    base: str
    base_order: int
    deriv_order: int = 0
    symmetric_slot_groups: tuple[tuple[int, ...], ...] = ()

    @property
    def n_slots(self) -> int:
        return self.base_order + self.deriv_order

    @property
    def key(self) -> tuple:
        return (self.base, self.deriv_order, self.base_order,
                self.symmetric_slot_groups)

    def text(self) -> str:
        return _factor_text(self.base, self.base_order, self.deriv_order, None)


def factor_shape(base: str, base_order: int, deriv_order: int = 0,
                 symmetric_base: bool = False) -> FactorShape:
    return FactorShape(base, base_order, deriv_order,
                       _derived_slot_groups(base_order, deriv_order,
                                            symmetric_base))


TermTemplate = tuple[FactorShape, ...]


def template_text(template: TermTemplate) -> str:
    if not template:
        return "1"
    return "*".join(f.text() for f in template)


def _slot_names(labels: Iterable[int]) -> str:
    return ",".join(suffix_name(l) for l in labels)


def _factor_text(base: str, base_order: int, deriv_order: int,
                 slots: Sequence[int] | None) -> str:
    if slots is None:
        base_part = base if base_order == 0 else f"{base}[{','.join('.' for _ in range(base_order))}]"
        deriv_slots = "".join("dx[.]" for _ in range(deriv_order))
    else:
        base_labels = slots[:base_order]
        base_part = base if base_order == 0 else f"{base}[{_slot_names(base_labels)}]"
        deriv_slots = "".join(f"dx[{suffix_name(l)}]" for l in slots[base_order:])
    if deriv_order == 0:
        return base_part
    prefix = "d" if deriv_order == 1 else f"d{deriv_order}"
    return f"{prefix}{base_part}/{deriv_slots}"


@dataclass(frozen=True)
class TensorFactor:
    """A factor with labeled slots, e.g. d2u[i]/dx[j]dx[k]."""

    base: str
    base_order: int
    deriv_order: int
    slots: tuple[int, ...]
    symmetric_slot_groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if len(self.slots) != self.base_order + self.deriv_order:
            raise ValueError(
                f"factor {self.base}: {len(self.slots)} slots for "
                f"base_order {self.base_order} + deriv_order {self.deriv_order}")

    @property
    def shape(self) -> FactorShape:
        return FactorShape(self.base, self.base_order, self.deriv_order,
                           self.symmetric_slot_groups)

    @property
    def text(self) -> str:
        return _factor_text(self.base, self.base_order, self.deriv_order,
                            self.slots)


@dataclass(frozen=True)
class CandidateTerm:
    """A product of tensor factors; the empty product is the constant term."""

    factors: tuple[TensorFactor, ...]

    @property
    def suffix_counts(self) -> Counter:
        return Counter(l for f in self.factors for l in f.slots)

    @property
    def free_suffixes(self) -> tuple[int, ...]:
        counts = self.suffix_counts
        return tuple(sorted(l for l, c in counts.items() if c == 1))

    @property
    def repeated_suffixes(self) -> frozenset[int]:
        counts = self.suffix_counts
        return frozenset(l for l, c in counts.items() if c == 2)

    @property
    def order(self) -> int:
        """Tensor order of the term = number of free suffixes."""
        return len(self.free_suffixes)

    @property
    def text(self) -> str:
        if not self.factors:
            return "1"
        return " ".join(f.text for f in self.factors)

    @property
    def n_slots(self) -> int:
        return sum(len(f.slots) for f in self.factors)


@dataclass(frozen=True)
class Validity:
    valid: bool
    reason: str | None = None


def labeled_term(template: TermTemplate, labels: Sequence[int]) -> CandidateTerm:
    """Attach a flat label sequence to a template's slots, left to right."""
    factors = []
    pos = 0
    for shape in template:
        n = shape.n_slots
        factors.append(TensorFactor(shape.base, shape.base_order,
                                    shape.deriv_order,
                                    tuple(labels[pos:pos + n]),
                                    shape.symmetric_slot_groups))
        pos += n
    if pos != len(labels):
        raise ValueError(f"expected {pos} labels, got {len(labels)}")
    return CandidateTerm(tuple(factors))


def assign_suffixes(template: TermTemplate) -> list[CandidateTerm]:
    """All n^n suffix labelings of a template with n open slots.

    Each slot independently takes one of n labels, so a template with
    three slots yields 27 raw assignments.  The empty template yields a
    single constant term.
    """
    n = sum(shape.n_slots for shape in template)
    if n == 0:
        return [CandidateTerm(tuple())]
    return [labeled_term(template, labels)
            for labels in product(range(n), repeat=n)]


def check_validity(term: CandidateTerm, target_order: int) -> Validity:
    """Suffix bookkeeping: each suffix at most twice, free count == target."""
    counts = term.suffix_counts
    for label in sorted(counts):
        if counts[label] > 2:
            return Validity(False,
                            f"suffix {suffix_name(label)} appears "
                            f"{counts[label]} times (at most 2 allowed)")
    free = sum(1 for c in counts.values() if c == 1)
    if free != target_order:
        return Validity(False,
                        f"{free} free suffix(es), target equation order is "
                        f"{target_order}")
    return Validity(True, None)


def _group_runs(factors: Sequence[TensorFactor]):
    """Factors sorted by shape key, grouped into runs of equal shape."""
    ordered = sorted(factors, key=lambda f: f.shape.key)
    runs: list[list[TensorFactor]] = []
    for f in ordered:
        if runs and runs[-1][0].shape.key == f.shape.key:
            runs[-1].append(f)
        else:
            runs.append([f])
    return runs


def _sym_variants(shape: FactorShape, slots: tuple[int, ...]):
    """All slot orderings reachable by permuting symmetric slot groups."""
    variants = [list(slots)]
    for group in shape.symmetric_slot_groups:
        new = []
        for v in variants:
            vals = [v[i] for i in group]
            for perm in set(permutations(vals)):
                w = list(v)
                for i, val in zip(group, perm):
                    w[i] = val
                new.append(w)
        variants = new
    return [tuple(v) for v in variants]


def canonicalize(term: CandidateTerm) -> CandidateTerm:
    """Unique representative of a term's equivalence class.

    Two terms are equivalent when they differ only by commuting factors,
    renaming repeated suffixes, or permuting slots inside a declared
    symmetric group.  The representative is found by minimizing over that
    orbit after renaming: free suffixes are compressed onto the lowest
    labels preserving their relative order (they address components of the
    target equation, so their order is meaningful), repeated suffixes take
    the following labels in order of first appearance.
    """
    counts = term.suffix_counts
    for label, c in counts.items():
        if c > 2:
            raise ValueError(
                f"cannot canonicalize: suffix {suffix_name(label)} appears "
                f"{c} times")
    free_old = sorted(l for l, c in counts.items() if c == 1)
    free_map = {l: r for r, l in enumerate(free_old)}
    n_free = len(free_old)

    runs = _group_runs(term.factors)
    best_key = None
    best_factors = None
    for arrangement in product(*(permutations(run) for run in runs)):
        ordered = [f for run in arrangement for f in run]
        variant_sets = [_sym_variants(f.shape, f.slots) for f in ordered]
        for slot_choice in product(*variant_sets):
            rep_map: dict[int, int] = {}
            renamed: list[tuple[int, ...]] = []
            for slots in slot_choice:
                new_slots = []
                for l in slots:
                    if counts[l] == 1:
                        new_slots.append(free_map[l])
                    else:
                        if l not in rep_map:
                            rep_map[l] = n_free + len(rep_map)
                        new_slots.append(rep_map[l])
                renamed.append(tuple(new_slots))
            # sort labels inside each symmetric group ascending
            final = []
            for f, slots in zip(ordered, renamed):
                s = list(slots)
                for group in f.shape.symmetric_slot_groups:
                    vals = sorted(s[i] for i in group)
                    for i, val in zip(group, vals):
                        s[i] = val
                final.append(tuple(s))
            key = tuple((f.shape.key, s) for f, s in zip(ordered, final))
            if best_key is None or key < best_key:
                best_key = key
                best_factors = tuple(
                    TensorFactor(f.base, f.base_order, f.deriv_order, s,
                                 f.symmetric_slot_groups)
                    for f, s in zip(ordered, final))
    return CandidateTerm(best_factors if best_factors is not None else tuple())


def equivalent(a: CandidateTerm, b: CandidateTerm) -> bool:
    """True when two valid terms denote the same contraction."""
    return canonicalize(a) == canonicalize(b)
