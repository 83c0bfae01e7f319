"""Compilation of robustness queries into solver scripts.

Verification of a fixed network is quantifier-free linear arithmetic: the
network equations are asserted over declared input/neuron/output variables
and the solver searches for a counterexample inside the ball. Repair frees
selected parameters as real variables and wraps each property in a
universal quantifier over the inputs; products of free weights with neuron
values make this nonlinear, hence logic NRA.

Similarity heuristics produce soft constraints: classification requirements
at concrete points, each wrapped in a Boolean indicator, of which at least
``threshold`` must hold.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import smtio
from .datagen import LabeledPoint, Rect
from .network import (
    BIAS,
    WEIGHT,
    Network,
    WeightId,
    decide_batch,
    decide_exact,
    enumerate_weight_ids,
)
from .smtio import (
    Script,
    SolverConfig,
    SolverVerdict,
    Status,
    Term,
    Var,
    add,
    and_,
    at_least_k,
    forall,
    ge,
    gt,
    implies,
    le,
    let,
    mul,
    or_,
    real,
    relu,
    sub,
)

L1 = "l1"
LINF = "linf"


class ConfigError(ValueError):
    pass


class SoundnessError(RuntimeError):
    """A solver answer failed its mandatory concrete re-check."""


@dataclass(frozen=True)
class RobustnessProperty:
    """All points within the delta ball of the center must classify as
    target_class. Norm is l1 or linf; both expand to linear inequalities."""

    name: str
    center: tuple[float, ...]
    delta: float
    norm: str
    target_class: int

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.norm not in (L1, LINF):
            raise ConfigError(f"unsupported norm {self.norm!r}")
        if self.target_class < 0:
            raise ConfigError("target_class must be a class index")


def load_properties(path: str) -> list[RobustnessProperty]:
    with open(path) as fh:
        docs = json.load(fh)
    return [
        RobustnessProperty(
            name=d["name"],
            center=tuple(float(v) for v in d["center"]),
            delta=float(d["delta"]),
            norm=str(d["norm"]).lower(),
            target_class=int(d["target_class"]),
        )
        for d in docs
    ]


def save_properties(props: Sequence[RobustnessProperty], path: str) -> None:
    docs = [
        {
            "name": p.name,
            "center": list(p.center),
            "delta": p.delta,
            "norm": p.norm,
            "target_class": p.target_class,
        }
        for p in props
    ]
    with open(path, "w") as fh:
        json.dump(docs, fh, indent=2)


# ---------------------------------------------------------------------------
# predicates


def ball_predicate(prop: RobustnessProperty, input_vars: Sequence[Term]) -> Term:
    """Membership of the input vector in the property ball.

    The L1 ball expands into 2^d half-planes, one per sign pattern, so no
    absolute values or disjunctions appear. Linf is the 2d-inequality box.
    """
    if len(input_vars) != len(prop.center):
        raise ConfigError("input arity does not match property center")
    delta = real(prop.delta)
    center = [real(c) for c in prop.center]
    parts: list[Term] = []
    if prop.norm == L1:
        for signs in itertools.product((1, -1), repeat=len(input_vars)):
            total = add(*(mul(real(s), sub(x, c)) for s, x, c in zip(signs, input_vars, center)))
            parts.append(le(total, delta))
    else:
        for x, c in zip(input_vars, center):
            parts.append(ge(x, sub(c, delta)))
            parts.append(le(x, add(c, delta)))
    return and_(*parts)


def ball_contains_exact(prop: RobustnessProperty, x: Sequence[Fraction]) -> bool:
    c = [Fraction(v) for v in prop.center]
    d = Fraction(prop.delta)
    diffs = [Fraction(a) - b for a, b in zip(x, c)]
    if prop.norm == L1:
        return sum(abs(v) for v in diffs) <= d
    return max(abs(v) for v in diffs) <= d


def class_predicate(target: int, output_terms: Sequence[Term]) -> Term:
    """Strict argmax: the target output exceeds every other output."""
    if not 0 <= target < len(output_terms):
        raise ConfigError(f"target class {target} out of range")
    return and_(
        *(gt(output_terms[target], output_terms[j]) for j in range(len(output_terms)) if j != target)
    )


def misclass_predicate(target: int, output_terms: Sequence[Term]) -> Term:
    """decide(x) != target under lowest-index tie-breaking.

    A class below the target index wins already on a tie, one above it needs
    to be strictly larger. Weaker than the negated strict class predicate:
    an exact tie that argmax still resolves to the target is not a
    misclassification, and must not be reported as a counterexample.
    """
    if not 0 <= target < len(output_terms):
        raise ConfigError(f"target class {target} out of range")
    parts = []
    for j in range(len(output_terms)):
        if j < target:
            parts.append(ge(output_terms[j], output_terms[target]))
        elif j > target:
            parts.append(gt(output_terms[j], output_terms[target]))
    return or_(*parts)


# ---------------------------------------------------------------------------
# network encoding

def weight_var_name(wid: WeightId, net: Network) -> str:
    """Solver-facing parameter names: layer-major 1-based flattening, so a
    2-1-2 net's output layer reads w21, w22, bias21, bias22."""
    layer = net.layers[wid.layer - 1]
    if wid.kind == WEIGHT:
        flat = wid.row * layer.in_width + wid.col + 1
        return f"w{wid.layer}{flat}"
    return f"bias{wid.layer}{wid.row + 1}"


def selection_order(ids) -> list[WeightId]:
    return sorted(ids, key=lambda w: (w.layer, 0 if w.kind == WEIGHT else 1, w.row, w.col))


@dataclass
class NetworkEncoding:
    """Symbolic network: per-layer definitions plus final output terms.

    Definitions only exist where a value could not be folded to a constant;
    with concrete inputs and no free weight upstream a neuron is just a
    number.
    """

    free_vars: list[tuple[WeightId, str]]
    layer_defs: list[list[tuple[str, Term]]]
    outputs: list[Term]


def encode_network(
    net: Network,
    free: Sequence[WeightId],
    input_terms: Sequence[Term],
    inline: bool = False,
) -> NetworkEncoding:
    """Compile the network over the given input terms.

    Free parameters become named real variables; every other parameter is
    inlined as an exact rational constant. Hidden neurons become
    if-then-else terms gated on the pre-activation sign. With ``inline``
    neuron terms are substituted directly instead of named, which suits
    small quantifier-free bodies at concrete points.
    """
    free_set = set(free)
    all_ids = set(enumerate_weight_ids(net))
    for wid in free_set:
        if wid not in all_ids:
            from .network import AddressError

            raise AddressError(f"{wid} does not address a parameter of this network")

    free_vars = [(wid, weight_var_name(wid, net)) for wid in selection_order(free_set)]
    name_of = dict(free_vars)

    def param_term(wid: WeightId) -> Term:
        if wid in free_set:
            return Var(name_of[wid])
        from .network import get_param

        return real(get_param(net, wid))

    activations: list[Term] = list(input_terms)
    layer_defs: list[list[tuple[str, Term]]] = []
    outputs: list[Term] = []
    n_layers = len(net.layers)
    for li, layer in enumerate(net.layers, start=1):
        defs: list[tuple[str, Term]] = []
        next_acts: list[Term] = []
        for r in range(layer.out_width):
            pre = add(
                *(mul(param_term(WeightId(li, WEIGHT, r, c)), activations[c]) for c in range(layer.in_width)),
                param_term(WeightId(li, BIAS, r)),
            )
            if li < n_layers:
                value = relu(pre)
                name = f"n{li}{r + 1}"
            else:
                value = pre
                name = f"out{r + 1}"
            if smtio.is_const(value) or inline:
                next_acts.append(value)
            else:
                defs.append((name, value))
                next_acts.append(Var(name))
        layer_defs.append(defs)
        activations = next_acts
        if li == n_layers:
            outputs = next_acts
    return NetworkEncoding(free_vars, layer_defs, outputs)


def _let_chain(layer_defs: list[list[tuple[str, Term]]], body: Term) -> Term:
    for defs in reversed(layer_defs):
        body = let(defs, body)
    return body


def input_vars(net: Network) -> list[Var]:
    return [Var(f"in{i + 1}") for i in range(net.input_dim)]


# ---------------------------------------------------------------------------
# verification of a fixed network


@dataclass
class PropertyCheck:
    holds: bool | None  # None when the solver was inconclusive
    counterexample: tuple[Fraction, ...] | None
    verdict: SolverVerdict


def verification_script(net: Network, prop: RobustnessProperty) -> Script:
    """Quantifier-free counterexample search: in the ball, decided wrongly."""
    script = Script(logic="QF_LRA")
    ins = input_vars(net)
    for v in ins:
        script.declare(v.name)
    enc = encode_network(net, free=(), input_terms=ins)
    for defs in enc.layer_defs:
        for name, term in defs:
            script.declare(name)
            script.assert_(smtio.eq(Var(name), term))
    script.assert_(ball_predicate(prop, ins))
    script.assert_(misclass_predicate(prop.target_class, enc.outputs))
    script.get_values = [v.name for v in ins]
    return script


def verify_property(
    net: Network, prop: RobustnessProperty, solver: SolverConfig | None = None
) -> PropertyCheck:
    """HOLDS (unsat), VIOLATED with a replayed counterexample (sat), or
    inconclusive. A sat model is re-checked in exact rational arithmetic;
    disagreement with the solver raises SoundnessError."""
    script = verification_script(net, prop)
    verdict = smtio.run_solver(script, solver, tag=f"verify_{prop.name}")
    if verdict.status is Status.UNSAT:
        return PropertyCheck(True, None, verdict)
    if verdict.status is Status.SAT:
        cex = tuple(verdict.model[v] for v in script.get_values)
        if not ball_contains_exact(prop, cex):
            raise SoundnessError(f"counterexample for {prop.name} escapes the ball: {cex}")
        if decide_exact(net, cex) == prop.target_class:
            raise SoundnessError(
                f"counterexample for {prop.name} actually classifies as the target: {cex}"
            )
        return PropertyCheck(False, cex, verdict)
    return PropertyCheck(None, None, verdict)


def dense_misclassified(
    net: Network, prop: RobustnessProperty, resolution: int = 201
) -> list[tuple[Fraction, ...]]:
    """Dense-sampling oracle over the ball: lattice points whose decision
    differs from the target class. Float evaluation prefilters, exact
    rational evaluation confirms, so the returned points are certain."""
    if resolution < 2:
        raise ConfigError("resolution must be at least 2")
    half = (resolution - 1) // 2
    steps = np.arange(resolution) - half
    if prop.norm == L1:
        k1, k2 = np.meshgrid(steps, steps, indexing="ij")
        mask = np.abs(k1) + np.abs(k2) <= half
        lattice = np.stack([k1[mask], k2[mask]], axis=1)
    else:
        k1, k2 = np.meshgrid(steps, steps, indexing="ij")
        lattice = np.stack([k1.ravel(), k2.ravel()], axis=1)
    center = np.asarray(prop.center)
    pts = center + prop.delta * lattice / half
    preds = decide_batch(net, pts)
    suspects = lattice[preds != prop.target_class]
    bad = []
    c = [Fraction(v) for v in prop.center]
    d = Fraction(prop.delta)
    for k in suspects:
        x = tuple(ci + d * int(ki) / half for ci, ki in zip(c, k))
        if decide_exact(net, x) != prop.target_class:
            bad.append(x)
    return bad


# ---------------------------------------------------------------------------
# soft constraints and similarity heuristics


@dataclass(frozen=True)
class SoftConstraint:
    """One indicator: the network must put every listed point in the class."""

    name: str
    points: tuple[tuple[float, ...], ...]
    required_class: int


@dataclass
class SoftConstraintSet:
    constraints: list[SoftConstraint]
    threshold: int = 1
    heuristic: str = "samples"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.constraints and not 1 <= self.threshold <= len(self.constraints):
            raise ConfigError(
                f"threshold {self.threshold} outside 1..{len(self.constraints)}"
            )


def heuristic_samples(data: Sequence[LabeledPoint], m: int, seed: int) -> SoftConstraintSet:
    """Anchor the model at m training points chosen uniformly without
    replacement; each constraint demands the point's own label."""
    if not 1 <= m <= len(data):
        raise ConfigError(f"cannot pick {m} of {len(data)} points")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(data), size=m, replace=False)
    constraints = [
        SoftConstraint(f"b{i}", (tuple(data[j].x),), data[j].label) for i, j in enumerate(idx)
    ]
    return SoftConstraintSet(constraints, heuristic="samples", provenance={"m": m, "seed": seed})


@dataclass(frozen=True)
class GridConfig:
    rect: Rect
    cells_per_axis: int
    samples_per_cell: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.cells_per_axis < 1:
            raise ConfigError("cells_per_axis must be >= 1")
        if self.samples_per_cell < 1:
            raise ConfigError("samples_per_cell must be >= 1")


def heuristic_grid(net: Network, cfg: GridConfig) -> SoftConstraintSet:
    """Rasterize the decision boundary: per grid cell, sample a few interior
    points, take the network's majority vote, and require that class at each
    sampled point of the cell. One indicator per cell."""
    if cfg.rect.dim != 2:
        raise ConfigError("grid heuristic is built for 2-d inputs")
    rng = np.random.default_rng(cfg.seed)
    (x_lo, y_lo), (x_hi, y_hi) = cfg.rect.lo, cfg.rect.hi
    n = cfg.cells_per_axis
    dx = (x_hi - x_lo) / n
    dy = (y_hi - y_lo) / n
    constraints = []
    for i in range(n):
        for j in range(n):
            cell_lo = (x_lo + i * dx, y_lo + j * dy)
            pts = rng.uniform(cell_lo, (cell_lo[0] + dx, cell_lo[1] + dy), size=(cfg.samples_per_cell, 2))
            votes = decide_batch(net, pts)
            majority = int(np.bincount(votes, minlength=net.output_dim).argmax())
            constraints.append(
                SoftConstraint(f"b{i * n + j}", tuple(tuple(map(float, p)) for p in pts), majority)
            )
    return SoftConstraintSet(
        constraints,
        heuristic="grid",
        provenance={"cells_per_axis": n, "samples_per_cell": cfg.samples_per_cell, "seed": cfg.seed},
    )


@dataclass(frozen=True)
class VoronoiConfig:
    generators: tuple[LabeledPoint, ...]
    clip_rect: Rect
    seed: int = 0

    def __post_init__(self):
        if len(self.generators) < 2:
            raise ConfigError("voronoi needs at least two generators")


def voronoi_halfplanes(
    generators: Sequence[tuple[float, ...]], k: int
) -> list[tuple[np.ndarray, float]]:
    """Half-planes a.x <= b describing cell k: derived from squared
    distances only, so the terms stay linear and root-free."""
    pk = np.asarray(generators[k])
    planes = []
    for j, pj in enumerate(generators):
        if j == k:
            continue
        pj = np.asarray(pj)
        a = 2.0 * (pj - pk)
        b = float(pj @ pj - pk @ pk)
        planes.append((a, b))
    return planes


def clip_polygon(rect: Rect, planes: Sequence[tuple[np.ndarray, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of the rectangle by the half-planes."""
    (x_lo, y_lo), (x_hi, y_hi) = rect.lo, rect.hi
    poly = [(x_lo, y_lo), (x_hi, y_lo), (x_hi, y_hi), (x_lo, y_hi)]
    for a, b in planes:
        if not poly:
            break
        nxt = []
        for idx in range(len(poly)):
            p = np.asarray(poly[idx])
            q = np.asarray(poly[(idx + 1) % len(poly)])
            p_in = float(a @ p) <= b + 1e-12
            q_in = float(a @ q) <= b + 1e-12
            if p_in:
                nxt.append(tuple(map(float, p)))
            if p_in != q_in:
                denom = float(a @ (q - p))
                if abs(denom) > 1e-15:
                    t = (b - float(a @ p)) / denom
                    t = min(max(t, 0.0), 1.0)
                    nxt.append(tuple(map(float, p + t * (q - p))))
        poly = nxt
    return poly


def heuristic_voronoi(net: Network, cfg: VoronoiConfig) -> SoftConstraintSet:
    """One indicator per Voronoi generator: its label is required at the
    generator and at every vertex of its cell clipped to the rectangle."""
    seen = {}
    for g in cfg.generators:
        if g.x in seen:
            warnings.warn(f"duplicate voronoi generator {g.x} dropped")
            continue
        seen[g.x] = g
    gens = list(seen.values())
    coords = [g.x for g in gens]
    constraints = []
    for k, g in enumerate(gens):
        planes = voronoi_halfplanes(coords, k)
        vertices = clip_polygon(cfg.clip_rect, planes)
        pts = (tuple(g.x),) + tuple(vertices)
        constraints.append(SoftConstraint(f"b{k}", pts, g.label))
    return SoftConstraintSet(
        constraints,
        heuristic="voronoi",
        provenance={"generators": len(gens), "seed": cfg.seed},
    )


# ---------------------------------------------------------------------------
# repair encoding


def soft_body(net: Network, free: Sequence[WeightId], sc: SoftConstraint) -> Term:
    parts = []
    for point in sc.points:
        enc = encode_network(net, free, [real(v) for v in point], inline=True)
        parts.append(class_predicate(sc.required_class, enc.outputs))
    return and_(*parts)


def encode_repair(
    net: Network,
    free: Sequence[WeightId],
    props: Sequence[RobustnessProperty],
    soft: SoftConstraintSet | None = None,
    threshold: int | None = None,
    get_indicators: bool = False,
) -> Script:
    """Existential search for new values of the free parameters.

    Each property contributes one universally quantified implication over
    fresh input variables (ball implies class), with neuron terms shared
    through let bindings. Each soft constraint contributes a Boolean
    indicator implying its body, and at least ``threshold`` indicators must
    be true. The free weights are the model values requested back.
    """
    if not free:
        raise ConfigError("repair needs a non-empty free selection")
    script = Script(logic="NRA")
    ins = input_vars(net)
    enc = encode_network(net, free, input_terms=ins)
    for _, name in enc.free_vars:
        script.declare(name)

    for prop in props:
        body = implies(
            ball_predicate(prop, ins), class_predicate(prop.target_class, enc.outputs)
        )
        script.assert_(forall([(v.name, "Real") for v in ins], _let_chain(enc.layer_defs, body)))

    indicator_names: list[str] = []
    if soft is not None and soft.constraints:
        k = soft.threshold if threshold is None else threshold
        if not 1 <= k <= len(soft.constraints):
            raise ConfigError(f"threshold {k} outside 1..{len(soft.constraints)}")
        for sc in soft.constraints:
            b = script.declare(sc.name, "Bool")
            script.assert_(implies(b, soft_body(net, free, sc)))
            indicator_names.append(sc.name)
        script.assert_(at_least_k([Var(n, "Bool") for n in indicator_names], k))

    script.get_values = [name for _, name in enc.free_vars]
    if get_indicators:
        script.get_values += indicator_names
    return script


def solve_outputs(
    net: Network, x: Sequence[float], solver: SolverConfig | None = None
) -> list[Fraction]:
    """Ask the solver for the network outputs at a concrete point by
    asserting the forward-pass equations. Cross-validates the encoder
    against direct evaluation."""
    script = Script(logic="QF_LRA")
    ins = input_vars(net)
    for v in ins:
        script.declare(v.name)
        script.assert_(smtio.eq(v, real(x[int(v.name[2:]) - 1])))
    enc = encode_network(net, free=(), input_terms=ins)
    for defs in enc.layer_defs:
        for name, term in defs:
            script.declare(name)
            script.assert_(smtio.eq(Var(name), term))
    names = []
    consts = {}
    for i, out in enumerate(enc.outputs):
        if isinstance(out, Var):
            names.append(out.name)
        else:
            consts[i] = out.value
    script.get_values = names
    verdict = smtio.run_solver(script, solver, tag="outputs")
    if verdict.status is not Status.SAT:
        raise SoundnessError(f"output query unexpectedly {verdict.status}: {verdict.raw_output}")
    result = []
    for i, out in enumerate(enc.outputs):
        result.append(consts[i] if i in consts else verdict.model[out.name])
    return result
