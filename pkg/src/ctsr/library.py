"""Candidate library construction.

Builds the tensor candidate library (products of field factors with all
valid suffix assignments, canonicalized and deduplicated) and the
scalar-mode baseline library (componentwise monomial x derivative
products).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product

from ctsr.terms import (
    CandidateTerm,
    FactorShape,
    TermTemplate,
    canonicalize,
    factor_shape,
    labeled_term,
    template_text,
)

AXIS_LETTERS = "xyz"


@dataclass(frozen=True)
class InputTensorSpec:
    """A physical quantity available for library construction."""

    name: str
    base_order: int
    max_deriv: int = 0
    symmetric_base: bool = False
    include_as_nonderivative: bool = True
    excluded_standalone_derivatives: tuple[int, ...] = ()
    component_names: tuple[str, ...] | None = None
    # cap on how often the quantity may appear in one product; a constant
    # external vector must enter at most once, otherwise |g|^2-style
    # factors duplicate existing candidates as functions of the data
    max_multiplicity: int | None = None

    def __post_init__(self):
        if self.max_deriv not in (0, 1, 2):
            raise ValueError(f"max_deriv must be 0, 1 or 2, got {self.max_deriv}")
        if self.max_multiplicity is not None and self.max_multiplicity < 1:
            raise ValueError("max_multiplicity must be >= 1 when set")

    def shape(self, deriv_order: int = 0) -> FactorShape:
        return factor_shape(self.name, self.base_order, deriv_order,
                            self.symmetric_base)


@dataclass(frozen=True)
class LibrarySpec:
    inputs: tuple[InputTensorSpec, ...]
    P: int
    target_order: int
    mode: str = "tensor"
    spatial_dim: int = 2

    def __post_init__(self):
        if self.P < 0 or self.target_order < 0:
            raise ValueError("P and target_order must be non-negative")
        if self.spatial_dim not in (2, 3):
            raise ValueError("spatial_dim must be 2 or 3")
        if self.mode not in ("tensor", "scalar"):
            raise ValueError(f"unknown mode {self.mode!r}")


def component_names(inp: InputTensorSpec, dim: int) -> dict[tuple[int, ...], str]:
    """Map each independent component index tuple to its channel name.

    Order-2 symmetric quantities expose only i <= j components; both index
    orders resolve to the same channel.
    """
    if inp.base_order == 0:
        return {(): inp.name}
    if inp.base_order == 1:
        if inp.component_names is not None:
            if len(inp.component_names) < dim:
                raise ValueError(f"{inp.name}: need {dim} component names")
            return {(a,): inp.component_names[a] for a in range(dim)}
        return {(a,): f"{inp.name}{AXIS_LETTERS[a]}" for a in range(dim)}
    if inp.base_order == 2:
        out = {}
        for i in range(dim):
            for j in range(dim):
                key = (i, j)
                if inp.symmetric_base:
                    a, b = sorted(key)
                else:
                    a, b = key
                out[key] = f"{inp.name}_{AXIS_LETTERS[a]}{AXIS_LETTERS[b]}"
        return out
    raise ValueError(f"unsupported base_order {inp.base_order}")


def independent_components(inp: InputTensorSpec, dim: int) -> list[str]:
    """Distinct channel names of a quantity, in deterministic order."""
    seen = []
    for _, name in sorted(component_names(inp, dim).items()):
        if name not in seen:
            seen.append(name)
    return seen


def enumerate_templates(spec: LibrarySpec) -> list[TermTemplate]:
    """All products (non-derivative monomial of degree <= P) x ({1} or one
    derivative factor).  The pure-constant template is included here and
    filtered downstream."""
    nonderiv = [inp.shape(0) for inp in spec.inputs
                if inp.include_as_nonderivative]
    deriv: list[FactorShape | None] = [None]
    for inp in spec.inputs:
        for d in range(1, inp.max_deriv + 1):
            deriv.append(inp.shape(d))

    caps = {inp.name: inp.max_multiplicity for inp in spec.inputs
            if inp.max_multiplicity is not None}

    templates = []
    for degree in range(spec.P + 1):
        for mono in combinations_with_replacement(nonderiv, degree):
            for dfac in deriv:
                factors = tuple(sorted(mono, key=lambda s: s.key))
                if dfac is not None:
                    factors = factors + (dfac,)
                if any(sum(1 for f in factors if f.base == name) > cap
                       for name, cap in caps.items()):
                    continue
                templates.append(factors)
    templates.sort(key=lambda t: (len(t), template_text(t)))
    return templates


def _standalone_excluded(template: TermTemplate, spec: LibrarySpec) -> bool:
    """True for a bare derivative factor whose depth the input excludes."""
    if len(template) != 1 or template[0].deriv_order == 0:
        return False
    fac = template[0]
    for inp in spec.inputs:
        if inp.name == fac.base and fac.deriv_order in inp.excluded_standalone_derivatives:
            return True
    return False


@dataclass(frozen=True)
class LibraryEntry:
    term: CandidateTerm
    template: str


def build_tensor_entries(spec: LibrarySpec) -> list[LibraryEntry]:
    if spec.mode != "tensor":
        raise ValueError("tensor build requires mode='tensor'")
    found: dict[str, LibraryEntry] = {}
    for template in enumerate_templates(spec):
        if _standalone_excluded(template, spec):
            continue
        n = sum(s.n_slots for s in template)
        if n == 0:
            if spec.target_order == 0:
                term = CandidateTerm(tuple())
                found.setdefault(term.text, LibraryEntry(term, "1"))
            continue
        # a valid labeling has target_order singletons plus pairs, so the
        # slot count must exceed the target by an even amount
        if n < spec.target_order or (n - spec.target_order) % 2 != 0:
            continue
        ttext = template_text(template)
        for labels in product(range(n), repeat=n):
            counts = [0] * n
            for l in labels:
                counts[l] += 1
            free = 0
            ok = True
            for c in counts:
                if c > 2:
                    ok = False
                    break
                if c == 1:
                    free += 1
            if not ok or free != spec.target_order:
                continue
            canon = canonicalize(labeled_term(template, labels))
            found.setdefault(canon.text, LibraryEntry(canon, ttext))
    return [found[k] for k in sorted(found)]


def build_tensor_library(spec: LibrarySpec) -> list[CandidateTerm]:
    """Canonical, deduplicated tensor candidates, sorted by text form."""
    return [e.term for e in build_tensor_entries(spec)]


@dataclass(frozen=True)
class ScalarCandidate:
    """A componentwise product: monomial over field components times at
    most one ordered derivative of a component."""

    monomial: tuple[str, ...]
    derivative: tuple[str, tuple[int, ...]] | None = None

    @property
    def text(self) -> str:
        parts = list(self.monomial)
        if self.derivative is not None:
            comp, axes = self.derivative
            parts.append(comp + "_" + "".join(AXIS_LETTERS[a] for a in axes))
        return " ".join(parts) if parts else "1"


def _scalar_fields(spec: LibrarySpec) -> list[InputTensorSpec]:
    # constant inputs (no spatial derivatives declared) are not treated as
    # field variables by the componentwise baseline
    return [inp for inp in spec.inputs if inp.max_deriv >= 1]


def build_scalar_library(spec: LibrarySpec) -> list[ScalarCandidate]:
    if spec.mode != "scalar":
        raise ValueError("scalar build requires mode='scalar'")
    dim = spec.spatial_dim
    varying = _scalar_fields(spec)
    mono_fields = sorted(
        comp for inp in varying if inp.include_as_nonderivative
        for comp in independent_components(inp, dim))

    monomials = [tuple(m) for deg in range(spec.P + 1)
                 for m in combinations_with_replacement(mono_fields, deg)]

    derivs: list[tuple[tuple[str, tuple[int, ...]], int]] = []
    for inp in varying:
        for comp in independent_components(inp, dim):
            for depth in range(1, inp.max_deriv + 1):
                excluded = depth in inp.excluded_standalone_derivatives
                for axes in product(range(dim), repeat=depth):
                    derivs.append(((comp, axes), excluded))

    out = []
    for mono in monomials:
        if mono:
            out.append(ScalarCandidate(mono, None))
        for dv, excluded_standalone in derivs:
            if not mono and excluded_standalone:
                continue
            out.append(ScalarCandidate(mono, dv))
    return out


def library_report(entries) -> tuple[str, list[dict]]:
    """Text and row-record forms of a built library.

    Accepts tensor LibraryEntry lists, bare CandidateTerm lists, or
    ScalarCandidate lists.
    """
    rows = []
    for idx, item in enumerate(entries):
        if isinstance(item, LibraryEntry):
            rows.append({"index": idx, "term": item.term.text,
                         "template": item.template})
        elif isinstance(item, CandidateTerm):
            rows.append({"index": idx, "term": item.text, "template": ""})
        else:
            rows.append({"index": idx, "term": item.text, "template": ""})
    lines = [f"{r['index']:4d}  {r['term']}" for r in rows]
    lines.append(f"total: {len(rows)}")
    return "\n".join(lines), rows
