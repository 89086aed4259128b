"""Set-theoretic covering machinery: greedy Vitali selection, density-based
child covers, the staged sparse-tree construction, and martingale
disjointification of nested set families.

Every public routine machine-verifies its postconditions before returning;
failures raise with a witness rather than returning a silently wrong family.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (AlphaViolated, ConstructionFailure, NestingViolated,
                     NotACover, PostconditionFailure)
from .space import BallBasis, as_atom_array


def _measure(basis: BallBasis, members: np.ndarray) -> float:
    return float(basis.space.weights[members].sum())


# -- greedy Vitali selection ---------------------------------------------------


def vitali_cover(basis: BallBasis, E, G) -> list[int]:
    """Select pairwise disjoint balls from G whose stars cover E.

    Greedy by decreasing measure (each pick has measure > half the running
    sup, trivially), ties broken by ascending ball id.
    """
    E = as_atom_array(E)
    ids = [int(g) for g in G]
    if E.size:
        covered = np.zeros(basis.n_atoms, dtype=bool)
        for g in ids:
            covered[basis.balls[g].members] = True
        missing = E[~covered[E]]
        if missing.size:
            raise NotACover(f"atoms {missing[:5].tolist()} not covered by the family")
    order = sorted(ids, key=lambda g: (-basis.mu[g], g))
    taken: list[int] = []
    blocked = np.zeros(basis.n_atoms, dtype=bool)
    for g in order:
        if blocked[basis.balls[g].members].any():
            continue
        taken.append(g)
        blocked[basis.balls[g].members] = True
    # postconditions: disjointness is by construction; star coverage asserted
    star_cover = np.zeros(basis.n_atoms, dtype=bool)
    for g in taken:
        star_cover[basis.star_members(g)] = True
    if E.size and not star_cover[E].all():
        raise PostconditionFailure("stars of the selection do not cover E",
                                   witness=E[~star_cover[E]][:5].tolist())
    return taken


# -- density-based child cover ---------------------------------------------------


def child_cover(basis: BallBasis, F, E) -> list[int]:
    """Cover E by hull balls of near-maximal half-density balls of F.

    Postconditions (all asserted): E covered; total mass at most 2K mu(F)
    (2 eta K when a doubling enlargement fired); every strict superset of an
    output ball meets F in less than half its measure; every output ball
    meets E.
    """
    F = as_atom_array(F)
    E = as_atom_array(E)
    if E.size and np.setdiff1d(E, F).size:
        raise ValueError("E must be a subset of F")
    if E.size == 0:
        return []
    w = basis.space.weights
    f_mask = np.zeros(basis.n_atoms, dtype=bool)
    f_mask[F] = True
    mu_f = float(w[F].sum())

    picked: dict[int, None] = {}
    for x in E:
        cands = basis.balls_containing_atom(int(x))
        best = -1
        best_key = None
        for c in cands:
            c = int(c)
            m = basis.balls[c].members
            if float(w[m[f_mask[m]]].sum()) >= basis.mu[c] / 2.0:
                key = (-basis.mu[c], c)
                if best_key is None or key < best_key:
                    best_key = key
                    best = c
        if best >= 0:
            picked[best] = None
    if not picked:
        raise PostconditionFailure("no density ball found for any atom of E",
                                   witness=E[:5].tolist())
    disjoint = vitali_cover(basis, [], list(picked))
    out = []
    enlarged = False
    for b in disjoint:
        g = int(basis.hull[b])
        m = basis.balls[g].members
        if float(w[m[f_mask[m]]].sum()) >= basis.mu[g] / 2.0:
            # half-density survives on the hull itself: grow once (doubling)
            sups = basis.supersets(g, strict=True)
            if sups.size == 0:
                raise PostconditionFailure(
                    "cannot enlarge a maximal hull ball", witness=g)
            g2 = int(min(sups, key=lambda i: (basis.mu[i], i)))
            if basis.eta is not None and basis.mu[g2] > basis.eta * basis.mu[g] + 1e-12:
                raise PostconditionFailure(
                    "doubling enlargement exceeded eta", witness=(g, g2))
            g = g2
            enlarged = True
        out.append(g)
    e_mask = np.zeros(basis.n_atoms, dtype=bool)
    e_mask[E] = True
    out = [g for g in out if e_mask[basis.balls[g].members].any()]
    out.sort(key=lambda g: (-basis.mu[g], g))

    covered = np.zeros(basis.n_atoms, dtype=bool)
    total = 0.0
    for g in out:
        covered[basis.balls[g].members] = True
        total += basis.mu[g]
    if not covered[E].all():
        raise PostconditionFailure("cover misses atoms of E",
                                   witness=E[~covered[E]][:5].tolist())
    bound = 2.0 * basis.K * mu_f
    if enlarged:
        bound *= basis.eta if basis.eta is not None else 1.0
    if total > bound + 1e-12:
        raise PostconditionFailure("mass bound violated",
                                   witness={"total": total, "bound": bound})
    for g in out:
        for gp in basis.supersets(g, strict=True):
            gp = int(gp)
            m = basis.balls[gp].members
            if float(w[m[f_mask[m]]].sum()) >= basis.mu[gp] / 2.0:
                raise PostconditionFailure("half-density persists above a cover ball",
                                           witness=(g, gp))
    return out


# -- sparse tree ---------------------------------------------------------------


@dataclass
class SparseTree:
    basis: BallBasis
    root: int                      # node ball id (double hull of the seed)
    nodes: list[int]               # node ball ids (double hulls)
    underlying: list[int]          # the covered balls the nodes enclose
    parent: list[int | None]       # indices into nodes
    children: list[list[int]]
    rank: list[int]
    witness: list[np.ndarray]
    sparse_gamma: float
    alpha: float
    admissible: bool
    sparseness_certified: bool
    constants: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def descendants(self, i: int) -> list[int]:
        out = []
        stack = list(self.children[i])
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children[j])
        return out

    def to_json(self) -> str:
        recs = []
        for i in range(self.n_nodes):
            recs.append({
                "ball": int(self.nodes[i]),
                "underlying": int(self.underlying[i]),
                "parent": None if self.parent[i] is None else int(self.parent[i]),
                "rank": int(self.rank[i]),
                "witness": [int(a) for a in self.witness[i]],
            })
        return json.dumps({"root": int(self.root), "alpha": self.alpha,
                           "sparse_gamma": self.sparse_gamma,
                           "certified": self.sparseness_certified,
                           "nodes": recs}, indent=1)

    def edge_list(self) -> str:
        lines = []
        for i in range(self.n_nodes):
            p = self.parent[i]
            if p is not None:
                lines.append(f"ball_{self.nodes[p]} -> ball_{self.nodes[i]}")
        return "\n".join(lines)


def _node_rank(basis: BallBasis, bid: int, R: float) -> int:
    return int(math.floor(math.log(basis.mu[bid]) / math.log(R)))


def sparsify_tree(basis: BallBasis, F_map, a0: int, alpha: float,
                  tolerant: bool = False) -> SparseTree:
    """Build a sparse tree of double-hull balls whose nodes cover the seed
    ball outside the exceptional sets F_map.

    F_map: callable ball id -> atom set with mu(F_B) < alpha mu(B), checked
    lazily on every ball actually read.  In tolerant mode an inadmissible
    alpha skips the removal stages (the pointwise coverage facts still hold
    and are verified) and the tree is flagged sparseness_certified=False.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    K = basis.K
    threshold = 1.0 / (10.0 * K ** 7)
    admissible = alpha < threshold
    if not admissible:
        warnings.warn(f"alpha={alpha:g} is above the guaranteed threshold "
                      f"{threshold:g}; construction attempted anyway")
    w = basis.space.weights
    f_cache: dict[int, np.ndarray] = {}

    def get_f(bid: int) -> np.ndarray:
        bid = int(bid)
        if bid not in f_cache:
            fs = as_atom_array(F_map(bid))
            mu_fs = float(w[fs].sum()) if fs.size else 0.0
            if mu_fs >= alpha * basis.mu[bid]:
                raise AlphaViolated("exceptional set too large", ball_id=bid,
                                    ratio=mu_fs / basis.mu[bid])
            f_cache[bid] = fs
        return f_cache[bid]

    # phase 1: the raw generation tree over the underlying balls
    und: list[int] = [int(a0)]
    parent: list[int | None] = [None]
    children: list[list[int]] = [[]]
    transcript: list[str] = []
    queue = [0]
    while queue:
        i = queue.pop(0)
        a = und[i]
        hull2 = int(basis.hull[int(basis.hull[a])])
        fs = get_f(hull2)
        hull_m = basis.balls[int(basis.hull[a])].members
        e = np.intersect1d(hull_m, fs)
        if e.size == 0:
            continue
        kids = child_cover(basis, fs, e)
        for g in kids:
            if basis.mu[g] >= basis.mu[a]:
                if tolerant:
                    transcript.append(f"dropped non-shrinking child {g} of {a}")
                    continue
                raise ConstructionFailure(
                    f"child ball {g} does not shrink below its parent {a}; "
                    "alpha too large", transcript=transcript)
            j = len(und)
            und.append(int(g))
            parent.append(i)
            children.append([])
            children[i].append(j)
            queue.append(j)
        if len(und) > 50 * basis.n_balls + 1000:
            raise ConstructionFailure("tree growth out of control",
                                      transcript=transcript)

    R = K * K
    rank = [_node_rank(basis, b, R) for b in und]
    alive = [True] * len(und)

    run_removals = admissible or not tolerant
    if run_removals:
        for i, p in enumerate(parent):
            if p is not None and rank[i] >= rank[p]:
                raise ConstructionFailure(
                    f"rank did not drop from node {p} to {i}",
                    transcript=transcript)

        def kill(i: int):
            alive[i] = False
            for j in children[i]:
                if alive[j]:
                    kill(j)

        def star2(node: int) -> np.ndarray:
            return basis.star2_members(und[node])

        k0 = rank[0]
        kmin = min(rank)
        for k in range(k0 - 1, kmin - 1, -1):
            bucket = [i for i in range(len(und)) if alive[i] and rank[i] == k]
            bucket.sort(key=lambda i: (-basis.mu[und[i]], und[i], i))
            # removal via a higher ball wedged strictly between the ranks of
            # consecutive ancestors
            for i in bucket:
                if not alive[i]:
                    continue
                s2 = None
                hit = False
                anc = i
                while parent[anc] is not None and not hit:
                    lo_rank, hi_rank = rank[anc], rank[parent[anc]]
                    if hi_rank - lo_rank > 3:  # room for a rank strictly between
                        if s2 is None:
                            s2 = star2(i)
                        for b in range(len(und)):
                            if not alive[b] or b == i:
                                continue
                            if not (lo_rank + 2 <= rank[b] <= hi_rank - 2):
                                continue
                            if np.intersect1d(s2, basis.balls[und[b]].members).size:
                                hit = True
                                transcript.append(f"wedge pass removed node {i} via {b}")
                                break
                    anc = parent[anc]
                if hit:
                    kill(i)
            # disjointification of the remaining bucket by greedy selection
            bucket = [i for i in range(len(und)) if alive[i] and rank[i] == k]
            bucket.sort(key=lambda i: (-basis.mu[und[i]], und[i], i))
            blocked = np.zeros(basis.n_atoms, dtype=bool)
            for i in bucket:
                m = basis.balls[und[i]].members
                if blocked[m].any():
                    transcript.append(f"disjointing pass removed node {i}")
                    kill(i)
                else:
                    blocked[m] = True

    # compact the surviving nodes
    keep = [i for i in range(len(und)) if alive[i]]
    remap = {i: j for j, i in enumerate(keep)}
    n_und = [und[i] for i in keep]
    n_parent: list[int | None] = []
    for i in keep:
        p = parent[i]
        while p is not None and not alive[p]:
            p = parent[p]
        n_parent.append(remap[p] if p is not None else None)
    n_children: list[list[int]] = [[] for _ in keep]
    for j, p in enumerate(n_parent):
        if p is not None:
            n_children[p].append(j)
    n_rank = [rank[i] for i in keep]
    node_balls = [int(basis.hull[int(basis.hull[b])]) for b in n_und]

    # witnesses: the part of each underlying ball not covered by much smaller
    # survivors that meet it
    witness: list[np.ndarray] = []
    for j, b in enumerate(n_und):
        m = basis.balls[b].members
        cut = np.zeros(basis.n_atoms, dtype=bool)
        for j2, g in enumerate(n_und):
            if n_rank[j2] < n_rank[j] - 1:
                gm = basis.balls[g].members
                cut[gm] = True
        witness.append(m[~cut[m]])

    certified = bool(run_removals)
    constants: dict = {"threshold": threshold, "R": R}
    if certified:
        _verify_sparse_tree(basis, n_und, node_balls, n_parent, n_children,
                            n_rank, witness, get_f, alpha, constants)
    else:
        # tolerant callers may repair coverage themselves, so report instead
        # of raising
        constants["uncovered"] = _uncovered_atoms(basis, node_balls, a0, get_f)
        constants["coverage_certified"] = len(constants["uncovered"]) == 0
    gamma = 0.5 if certified else 0.0
    return SparseTree(basis=basis, root=node_balls[0], nodes=node_balls,
                      underlying=n_und, parent=n_parent, children=n_children,
                      rank=n_rank, witness=witness, sparse_gamma=gamma,
                      alpha=alpha, admissible=admissible,
                      sparseness_certified=certified, constants=constants)


def _uncovered_atoms(basis: BallBasis, node_balls, a0: int, get_f) -> list[int]:
    covered = np.zeros(basis.n_atoms, dtype=bool)
    for nb in node_balls:
        m = basis.balls[nb].members
        fs = get_f(nb)
        keep = np.ones(basis.n_atoms, dtype=bool)
        keep[fs] = False
        covered[m[keep[m]]] = True
    seed = basis.balls[int(a0)].members
    return [int(a) for a in seed[~covered[seed]]]


def _verify_coverage(basis: BallBasis, node_balls, a0: int, get_f):
    missing = _uncovered_atoms(basis, node_balls, a0, get_f)
    if missing:
        raise ConstructionFailure(
            "seed ball not covered outside the exceptional sets",
            transcript=[f"missing atoms {missing[:5]}"])


def _verify_sparse_tree(basis, und, node_balls, parent, children, rank,
                        witness, get_f, alpha, constants):
    w = basis.space.weights
    K = basis.K
    eta = basis.eta if basis.eta is not None else 1.0
    # nesting of node balls
    for j, p in enumerate(parent):
        if p is not None and not basis.contains(node_balls[j], node_balls[p]):
            raise ConstructionFailure(f"node {j} not nested in its parent")
    # coverage
    _verify_coverage(basis, node_balls, und[0], get_f)
    # child mass
    worst = 0.0
    for j in range(len(und)):
        if children[j]:
            s = sum(basis.mu[node_balls[c]] for c in children[j])
            worst = max(worst, s / basis.mu[node_balls[j]])
    bound = 2.0 * eta * alpha * K ** 3
    constants["child_mass_ratio"] = worst
    constants["child_mass_bound"] = bound
    if worst > bound + 1e-12:
        raise ConstructionFailure(
            f"child mass ratio {worst:g} exceeds {bound:g}")
    # half-density above every child node ball
    f_masks: dict[int, np.ndarray] = {}
    for j, p in enumerate(parent):
        if p is None:
            continue
        fb = node_balls[p]
        if fb not in f_masks:
            mask = np.zeros(basis.n_atoms, dtype=bool)
            mask[get_f(fb)] = True
            f_masks[fb] = mask
        mask = f_masks[fb]
        for gp in basis.supersets(node_balls[j], strict=True):
            gp = int(gp)
            m = basis.balls[gp].members
            if float(w[m[mask[m]]].sum()) >= basis.mu[gp] / 2.0:
                raise ConstructionFailure(
                    f"half-density fails above child node {j}")
    # witness size and parity disjointness
    for j in range(len(und)):
        if float(w[witness[j]].sum()) < basis.mu[und[j]] / 2.0 - 1e-12:
            raise ConstructionFailure(f"witness of node {j} below half mass")
    for j in range(len(und)):
        for j2 in range(j + 1, len(und)):
            if rank[j] == rank[j2] or abs(rank[j] - rank[j2]) > 1:
                if np.intersect1d(witness[j], witness[j2]).size:
                    raise ConstructionFailure(
                        f"witnesses of nodes {j},{j2} overlap")


# -- martingale disjointification ---------------------------------------------------


@dataclass
class MartingaleFamily:
    shrink: list[np.ndarray]

    def to_json(self) -> str:
        return json.dumps({"shrink": [[int(a) for a in s] for s in self.shrink]})


def disjointify(sets, parent, E_map, weights=None, order=None) -> MartingaleFamily:
    """Shrink a nested family of atom sets so the shrunken pieces respect the
    tree: children stay inside parents, unrelated nodes become disjoint, and
    the union of (shrunken set intersect E) is preserved.

    sets: list of atom arrays; parent: list of node index or None; E_map:
    list of atom arrays with E_i inside sets[i].  Processing order defaults
    to decreasing measure with ties by node index.
    """
    n = len(sets)
    sets = [as_atom_array(s) for s in sets]
    E = [as_atom_array(e) for e in E_map]
    if len(E) != n or len(parent) != n:
        raise ValueError("sets, parent and E_map must have equal length")
    n_atoms = 1 + max((int(s.max()) for s in sets if s.size), default=0)
    for i, p in enumerate(parent):
        if p is not None and np.setdiff1d(sets[i], sets[int(p)]).size:
            raise NestingViolated(f"node {i} not inside its parent")
        if np.setdiff1d(E[i], sets[i]).size:
            raise ValueError(f"E[{i}] not inside its set")
    if weights is None:
        weights = np.ones(n_atoms)
    desc: list[set[int]] = [set() for _ in range(n)]
    for i, p in enumerate(parent):
        q = p
        while q is not None:
            desc[int(q)].add(i)
            q = parent[int(q)]

    cur = []
    u_mask = np.zeros(n_atoms, dtype=bool)
    for e in E:
        u_mask[e] = True
    for s in sets:  # normalization: drop the part no E set can ever claim
        m = np.zeros(n_atoms, dtype=bool)
        m[s] = True
        cur.append(m & u_mask)
    e_masks = []
    for e in E:
        m = np.zeros(n_atoms, dtype=bool)
        m[e] = True
        e_masks.append(m)

    if order is None:
        mus = [float(weights[s].sum()) for s in sets]
        order = sorted(range(n), key=lambda i: (-mus[i], i))
    for stage in order:
        carve = cur[stage] & e_masks[stage]
        if not carve.any():
            continue
        for a in range(n):
            if a == stage or stage in desc[a]:
                continue  # the node itself and its ancestors keep the piece
            cur[a] &= ~carve

    shrink = [np.flatnonzero(m).astype(np.int64) for m in cur]

    # invariants, asserted exactly
    for i, p in enumerate(parent):
        if p is not None and np.setdiff1d(shrink[i], shrink[int(p)]).size:
            raise PostconditionFailure("child shrink left its parent shrink",
                                       witness=i)
    for i in range(n):
        for j in range(i + 1, n):
            related = j in desc[i] or i in desc[j]
            if not related and np.intersect1d(shrink[i], shrink[j]).size:
                raise PostconditionFailure("unrelated shrinks overlap",
                                           witness=(i, j))
    got = np.zeros(n_atoms, dtype=bool)
    pieces = []
    for i in range(n):
        piece = cur[i] & e_masks[i]
        pieces.append(piece)
        got |= piece
    if not np.array_equal(got, u_mask):
        raise PostconditionFailure("union of E pieces not preserved")
    acc = np.zeros(n_atoms, dtype=bool)
    for piece in pieces:
        if (acc & piece).any():
            raise PostconditionFailure("E pieces overlap")
        acc |= piece
    return MartingaleFamily(shrink=shrink)
