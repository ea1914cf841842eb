"""Bayesian additive PR trees: tree-structure prior, Metropolis-Hastings
topology moves, marginalized residual likelihood, and Gibbs draws of leaf
weights and the noise scale."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import invgamma

from .data import Dataset, RngSpec
from .kernel import MembershipMatrix, membership_column
from .regions import Region
from .tree import LeafNode, SplitNode, StoppingRule

log = logging.getLogger(__name__)

GROW, PRUNE, CHANGE, SWAP = "grow", "prune", "change", "swap"


def _log(x: float) -> float:
    """log with log(0) = -inf, so zero-probability reverse moves reject."""
    return math.log(x) if x > 0.0 else -np.inf
MOVES = (GROW, PRUNE, CHANGE, SWAP)


@dataclass
class PBartHyper:
    """Prior and chain-length settings for the Bayesian sampler.

    lam (noise-scale prior) and sigma_gamma (weight prior std) default to
    data-calibrated values chosen at fit time: lam puts prior probability
    0.9 below the normalized target's sample variance, and sigma_gamma is
    0.5 / (2 sqrt(m)) so the m-tree sum matches the [-0.5, 0.5] range.
    """

    m: int = 50
    alpha: float = 0.95
    beta: float = 2.0
    nu: float = 3.0
    lam: float | None = None
    sigma_gamma: float | None = None
    it_burn: int = 200
    it_max: int = 1000
    move_probs: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not (0.0 < self.alpha < 1.0) or self.beta < 0.0:
            raise ValueError("need alpha in (0, 1) and beta >= 0")
        if self.it_burn >= self.it_max:
            raise ValueError("it_burn must be < it_max")
        if abs(sum(self.move_probs) - 1.0) > 1e-9 or min(self.move_probs) < 0.0:
            raise ValueError("move_probs must be non-negative and sum to 1")

    def calibrated(self, y_norm: np.ndarray) -> "PBartHyper":
        lam = self.lam
        if lam is None:
            s2 = float(np.var(y_norm, ddof=1)) if y_norm.size > 1 else 1.0
            s2 = max(s2, 1e-12)
            lam = 2.0 * s2 / (self.nu * invgamma.ppf(0.9, self.nu / 2.0))
        sg = self.sigma_gamma
        if sg is None:
            sg = 0.5 / (2.0 * math.sqrt(self.m))
        return PBartHyper(
            m=self.m, alpha=self.alpha, beta=self.beta, nu=self.nu, lam=lam,
            sigma_gamma=sg, it_burn=self.it_burn, it_max=self.it_max,
            move_probs=self.move_probs,
        )


class SampledTree:
    """One tree of the additive model, with cached region/leaf metadata.

    `refresh` recomputes leaf regions and hard-assignment counts from the
    topology and reports whether the tree is structurally valid (every
    split value strictly inside its region, every leaf at least
    `min_count` hard rows)."""

    def __init__(self, root=None):
        self.root = root if root is not None else LeafNode(None)
        self.leaves: list[LeafNode] = []
        self.leaf_depths: list[int] = []
        self.leaf_counts: list[int] = []
        self.internals: list[tuple[SplitNode, int, Region]] = []
        self.pairs: list[tuple[SplitNode, SplitNode]] = []
        self.node_cuts: dict[int, int] = {}

    def copy(self) -> "SampledTree":
        return SampledTree(copy.deepcopy(self.root))

    def refresh(self, d: Dataset, min_count: int) -> bool:
        self.leaves, self.leaf_depths, self.leaf_counts = [], [], []
        self.internals, self.pairs, self.node_cuts = [], [], {}
        ok = self._walk(self.root, Region.root(d.p), 0, d, min_count)
        return ok

    def _walk(self, node, region: Region, depth: int, d: Dataset, min_count: int) -> bool:
        if isinstance(node, LeafNode):
            node.region = region
            count = int(region.contains(d.features).sum())
            self.leaves.append(node)
            self.leaf_depths.append(depth)
            self.leaf_counts.append(count)
            return count >= min_count
        if not (region.lower[node.j] < node.s < region.upper[node.j]):
            return False
        self.internals.append((node, depth, region))
        self.node_cuts[id(node)] = _region_cuts(d, region, node.j).size
        for child in (node.left, node.right):
            if isinstance(child, SplitNode):
                self.pairs.append((node, child))
        left_r, right_r = region.split(node.j, node.s)
        return self._walk(node.left, left_r, depth + 1, d, min_count) and self._walk(
            node.right, right_r, depth + 1, d, min_count
        )

    @property
    def k(self) -> int:
        return len(self.leaves)

    def gammas(self) -> np.ndarray:
        return np.array([leaf.gamma for leaf in self.leaves])

    def set_gammas(self, gam: np.ndarray):
        for leaf, g in zip(self.leaves, gam):
            leaf.gamma = float(g)

    def membership(self, X: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        return np.column_stack([membership_column(X, lf.region, sigma) for lf in self.leaves])

    def prunable(self) -> list[SplitNode]:
        return [
            node
            for node, _, _ in self.internals
            if isinstance(node.left, LeafNode) and isinstance(node.right, LeafNode)
        ]


def _region_cuts(d: Dataset, region: Region, j: int) -> np.ndarray:
    mask = region.contains(d.features)
    values = np.unique(d.features[mask, j])
    return (values[:-1] + values[1:]) / 2.0


def _admissible_vars(d: Dataset, region: Region) -> list[tuple[int, np.ndarray]]:
    mask = region.contains(d.features)
    X = d.features[mask]
    out = []
    for j in range(d.p):
        values = np.unique(X[:, j])
        if values.size >= 2:
            out.append((j, (values[:-1] + values[1:]) / 2.0))
    return out


def tree_log_prior(t: SampledTree, alpha: float, beta: float) -> float:
    """Log prior of a tree topology: depth-decaying split probabilities
    plus uniform split-variable and cut-point factors."""
    total = 0.0
    p = t.leaves[0].region.p
    for node, depth, _ in t.internals:
        total += math.log(alpha / (1.0 + depth) ** beta)
        n_cuts = t.node_cuts[id(node)]
        if n_cuts == 0:
            return -np.inf
        total += -math.log(p) - math.log(n_cuts)
    for depth in t.leaf_depths:
        total += math.log1p(-alpha / (1.0 + depth) ** beta)
    return total


def marginal_log_likelihood(R, P, sigma_gamma: float, sigma_tilde: float) -> float:
    """Log density of residuals with leaf weights integrated out:
    N(0, sigma_tilde^2 I + sigma_gamma^2 P P^T).

    Evaluated by the K-step Sherman-Morrison recursion (one rank-one
    update per membership column) applied to the vectors actually needed,
    with the matrix-determinant lemma accumulating the log determinant.
    """
    logdet, quad = _sigma0_recursion(R, P, sigma_gamma, sigma_tilde)
    n = len(np.asarray(R))
    return float(-0.5 * n * math.log(2.0 * math.pi) - 0.5 * logdet - 0.5 * quad)


def sigma0_log_det(P, sigma_gamma: float, sigma_tilde: float) -> float:
    """log det of the marginal residual covariance, from the same rank-one
    recursion that the likelihood uses."""
    V = P.values if isinstance(P, MembershipMatrix) else np.asarray(P, dtype=float)
    logdet, _ = _sigma0_recursion(np.zeros(V.shape[0]), V, sigma_gamma, sigma_tilde)
    return logdet


def _sigma0_recursion(R, P, sigma_gamma: float, sigma_tilde: float):
    """(log det Sigma0, R^T Sigma0^{-1} R) by K rank-one updates."""
    if sigma_tilde <= 0.0:
        raise ValueError("sigma_tilde must be positive")
    V = P.values if isinstance(P, MembershipMatrix) else np.asarray(P, dtype=float)
    R = np.asarray(R, dtype=float)
    n, K = V.shape
    if R.shape != (n,):
        raise ValueError("residual length must match P's row count")
    st2 = sigma_tilde**2
    if sigma_gamma == 0.0:
        return n * math.log(st2), float(R @ R) / st2
    sg2 = sigma_gamma**2
    U = V / st2          # columns u_k = Sigma^{-1} c_k for the current Sigma
    v = R / st2
    logdet = n * math.log(st2)
    for k in range(K):
        c = V[:, k]
        u = U[:, k].copy()
        denom = float(c @ u) + 1.0 / sg2
        logdet += math.log(sg2 * denom)
        if k + 1 < K:
            U[:, k + 1 :] -= np.outer(u, (c @ U[:, k + 1 :]) / denom)
        v -= u * (float(c @ v) / denom)
    return logdet, float(R @ v)


def propose_tree(
    t: SampledTree,
    rng: np.random.Generator,
    move_probs,
    d: Dataset,
    rule: StoppingRule,
):
    """Draw one local topology move. Returns (candidate, log q-ratio, kind);
    an impossible or invalid proposal carries log q-ratio = -inf and a
    None candidate."""
    min_count = rule.min_count(d.n)
    kind = MOVES[rng.choice(4, p=np.asarray(move_probs, dtype=float))]
    invalid = (None, -np.inf, kind)

    if kind == GROW:
        i = int(rng.integers(len(t.leaves)))
        leaf, depth = t.leaves[i], t.leaf_depths[i]
        if rule.max_depth is not None and depth >= rule.max_depth:
            return invalid
        adm = _admissible_vars(d, leaf.region)
        if not adm:
            return invalid
        j, cuts = adm[int(rng.integers(len(adm)))]
        s = float(cuts[int(rng.integers(cuts.size))])
        star = t.copy()
        target = star.leaves[i] if star.refresh(d, 0) else None
        assert target is not None
        split = SplitNode(j, s, LeafNode(None, target.gamma), LeafNode(None, target.gamma))
        _replace(star, target, split)
        if not star.refresh(d, min_count):
            return invalid
        log_fwd = (
            _log(move_probs[0]) - math.log(len(t.leaves))
            - math.log(len(adm)) - math.log(cuts.size)
        )
        log_rev = _log(move_probs[1]) - math.log(len(star.prunable()))
        return star, log_rev - log_fwd, kind

    if kind == PRUNE:
        prunable = t.prunable()
        if not prunable:
            return invalid
        pick = int(rng.integers(len(prunable)))
        star = t.copy()
        star.refresh(d, 0)
        node = star.prunable()[pick]
        j_old, region = node.j, _node_region(star, node)
        _replace(star, node, LeafNode(None, 0.0))
        if not star.refresh(d, min_count):
            return invalid
        adm = _admissible_vars(d, region)
        n_cuts_old = _region_cuts(d, region, j_old).size
        log_fwd = _log(move_probs[1]) - math.log(len(prunable))
        log_rev = (
            _log(move_probs[0]) - math.log(len(star.leaves))
            - math.log(len(adm)) - math.log(n_cuts_old)
        )
        return star, log_rev - log_fwd, kind

    if kind == CHANGE:
        if not t.internals:
            return invalid
        pick = int(rng.integers(len(t.internals)))
        _, _, region = t.internals[pick]
        adm = _admissible_vars(d, region)
        if not adm:
            return invalid
        j_new, cuts_new = adm[int(rng.integers(len(adm)))]
        s_new = float(cuts_new[int(rng.integers(cuts_new.size))])
        star = t.copy()
        star.refresh(d, 0)
        node = star.internals[pick][0]
        j_old = node.j
        node.j, node.s = j_new, s_new
        if not star.refresh(d, min_count):
            return invalid
        n_cuts_old = _region_cuts(d, region, j_old).size
        return star, math.log(cuts_new.size) - math.log(n_cuts_old), kind

    # SWAP: exchange the split rules of a parent/child internal pair
    if not t.pairs:
        return invalid
    pick = int(rng.integers(len(t.pairs)))
    star = t.copy()
    star.refresh(d, 0)
    parent, child = star.pairs[pick]
    parent.j, child.j = child.j, parent.j
    parent.s, child.s = child.s, parent.s
    if not star.refresh(d, min_count):
        return invalid
    return star, 0.0, kind


def _replace(tree: SampledTree, old, new):
    if tree.root is old:
        tree.root = new
        return
    stack = [tree.root]
    while stack:
        node = stack.pop()
        if isinstance(node, SplitNode):
            if node.left is old:
                node.left = new
                return
            if node.right is old:
                node.right = new
                return
            stack.extend([node.left, node.right])
    raise ValueError("node not found in tree")


def _node_region(tree: SampledTree, node) -> Region:
    for cand, _, region in tree.internals:
        if cand is node:
            return region
    raise ValueError("internal node not found")


def mh_accept(
    t: SampledTree,
    t_star: SampledTree | None,
    R,
    P,
    P_star,
    hyper: PBartHyper,
    rng: np.random.Generator,
    sigma_tilde: float,
    log_q_ratio: float = 0.0,
) -> bool:
    """Metropolis-Hastings accept/reject for a proposed tree, using the
    weight-marginalized residual likelihood."""
    if t_star is None or log_q_ratio == -np.inf:
        return False
    delta = (
        log_q_ratio
        + marginal_log_likelihood(R, P_star, hyper.sigma_gamma, sigma_tilde)
        - marginal_log_likelihood(R, P, hyper.sigma_gamma, sigma_tilde)
        + tree_log_prior(t_star, hyper.alpha, hyper.beta)
        - tree_log_prior(t, hyper.alpha, hyper.beta)
    )
    if delta >= 0.0:
        return True
    return bool(rng.random() < math.exp(delta))


def draw_gammas(
    t: SampledTree,
    R,
    P,
    hyper: PBartHyper,
    rng: np.random.Generator,
    sigma_tilde: float,
) -> np.ndarray:
    """One full Gibbs sweep over leaf weights, in leaf order, each draw
    conditioning on the freshest values of the other weights."""
    V = P.values if isinstance(P, MembershipMatrix) else np.asarray(P, dtype=float)
    R = np.asarray(R, dtype=float)
    sg2 = hyper.sigma_gamma**2
    st2 = sigma_tilde**2
    gam = t.gammas()
    total = V @ gam
    A = np.einsum("ij,ij->j", V, V)
    for k in range(gam.size):
        partial = total - V[:, k] * gam[k]
        B = float(V[:, k] @ (R - partial))
        denom = st2 + sg2 * A[k]
        mean = sg2 * B / denom
        std = math.sqrt(st2 * sg2 / denom)
        new = mean + std * rng.standard_normal()
        total += V[:, k] * (new - gam[k])
        gam[k] = new
    t.set_gammas(gam)
    return gam


def draw_sigma_tilde(y, full_fit, hyper: PBartHyper, rng: np.random.Generator) -> float:
    """Posterior draw of the noise scale: sigma^2 ~ IG((nu+n)/2,
    (nu lam + SSE)/2); with no data this falls back to the prior."""
    y = np.asarray(y, dtype=float)
    fit = np.asarray(full_fit, dtype=float)
    if y.shape != fit.shape:
        raise ValueError("y and full_fit must have the same length")
    n = y.size
    if n == 0:
        shape, scale = hyper.nu / 2.0, hyper.nu * hyper.lam / 2.0
    else:
        sse = float(np.sum((y - fit) ** 2))
        shape = (hyper.nu + n) / 2.0
        scale = (hyper.nu * hyper.lam + sse) / 2.0
    var = scale / rng.gamma(shape)
    return math.sqrt(var)


@dataclass
class PBartChain:
    """Post-burn-in posterior trace of the additive tree model."""

    snapshots: list  # per iteration: list of (regions tuple, gamma array) per tree
    sigma_trace: np.ndarray
    acceptance_log: dict
    sigma: np.ndarray
    y_offset: float
    y_scale: float
    hyper: PBartHyper

    @property
    def n_snapshots(self) -> int:
        return len(self.snapshots)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sigma.shape[0]:
            raise ValueError("feature dimension mismatch")
        # identical regions recur across snapshots; group their weights so
        # each unique region's membership column is evaluated once
        accum: dict[bytes, tuple[Region, float]] = {}
        for snap in self.snapshots:
            for regions, gammas in snap:
                for region, g in zip(regions, gammas):
                    key = region.lower.tobytes() + region.upper.tobytes()
                    if key in accum:
                        accum[key] = (region, accum[key][1] + float(g))
                    else:
                        accum[key] = (region, float(g))
        total = np.zeros(X.shape[0])
        for region, gsum in accum.values():
            total += gsum * membership_column(X, region, self.sigma)
        norm = total / self.n_snapshots
        return (norm + 0.5) * self.y_scale + self.y_offset

    def to_json(self) -> str:
        snaps = [
            [
                {
                    "gammas": [float(g) for g in gammas],
                    "lower": [[float(v) for v in r.lower] for r in regions],
                    "upper": [[float(v) for v in r.upper] for r in regions],
                }
                for regions, gammas in snap
            ]
            for snap in self.snapshots
        ]
        return json.dumps(
            {
                "kind": "pbart",
                "hyper": {
                    "m": self.hyper.m, "alpha": self.hyper.alpha, "beta": self.hyper.beta,
                    "nu": self.hyper.nu, "lam": self.hyper.lam,
                    "sigma_gamma": self.hyper.sigma_gamma,
                    "it_burn": self.hyper.it_burn, "it_max": self.hyper.it_max,
                    "move_probs": list(self.hyper.move_probs),
                },
                "sigma": [float(v) for v in self.sigma],
                "y_offset": self.y_offset,
                "y_scale": self.y_scale,
                "sigma_trace": [float(v) for v in self.sigma_trace],
                "acceptance_log": self.acceptance_log,
                "snapshots": snaps,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PBartChain":
        obj = json.loads(text)
        if obj.get("kind") != "pbart":
            raise ValueError("not a pbart chain")
        h = obj["hyper"]
        hyper = PBartHyper(
            m=h["m"], alpha=h["alpha"], beta=h["beta"], nu=h["nu"], lam=h["lam"],
            sigma_gamma=h["sigma_gamma"], it_burn=h["it_burn"], it_max=h["it_max"],
            move_probs=tuple(h["move_probs"]),
        )
        snapshots = []
        for snap in obj["snapshots"]:
            trees = []
            for entry in snap:
                regions = tuple(
                    Region(np.array(lo), np.array(hi))
                    for lo, hi in zip(entry["lower"], entry["upper"])
                )
                trees.append((regions, np.array(entry["gammas"], dtype=float)))
            snapshots.append(trees)
        return cls(
            snapshots=snapshots,
            sigma_trace=np.array(obj["sigma_trace"], dtype=float),
            acceptance_log=obj["acceptance_log"],
            sigma=np.array(obj["sigma"], dtype=float),
            y_offset=float(obj["y_offset"]),
            y_scale=float(obj["y_scale"]),
            hyper=hyper,
        )


def predict_pbart(c: PBartChain, x) -> float:
    return float(c.predict(np.asarray(x, dtype=float)[None, :])[0])


def fit_pbart(
    d: Dataset,
    hyper: PBartHyper,
    sigma,
    rng: RngSpec,
    rule: StoppingRule = StoppingRule(),
    sigma_tilde_fixed: float | None = None,
) -> PBartChain:
    """Run the Gibbs/MH sampler and retain post-burn-in snapshots.

    The target is internally shifted and scaled to [-0.5, 0.5]; prediction
    undoes the transform. `sigma_tilde_fixed` pins the noise scale instead
    of resampling it (diagnostics and exactness tests)."""
    if d.n < 2:
        raise ValueError("need at least 2 rows")
    sigma = np.asarray(sigma, dtype=float)
    y = d.target
    y_min, y_max = float(y.min()), float(y.max())
    span = y_max - y_min if y_max > y_min else 1.0
    y_norm = (y - y_min) / span - 0.5

    hyper = hyper.calibrated(y_norm)
    gen = rng.generator()
    min_count = rule.min_count(d.n)

    trees = []
    mats = []
    fits = np.zeros((hyper.m, d.n))
    for ell in range(hyper.m):
        t = SampledTree(LeafNode(None, float(gen.normal(0.0, hyper.sigma_gamma))))
        t.refresh(d, min_count)
        trees.append(t)
        V = t.membership(d.features, sigma)
        mats.append(V)
        fits[ell] = V @ t.gammas()
    total_fit = fits.sum(axis=0)

    if sigma_tilde_fixed is not None:
        sigma_tilde = float(sigma_tilde_fixed)
    else:
        sigma_tilde = math.sqrt(
            (hyper.nu * hyper.lam / 2.0) / gen.gamma(hyper.nu / 2.0)
        )

    accept_log = {kind: {"accepted": 0, "rejected": 0} for kind in MOVES}
    sigma_trace = np.empty(hyper.it_max)
    snapshots = []

    for it in range(1, hyper.it_max + 1):
        for ell in range(hyper.m):
            R = y_norm - (total_fit - fits[ell])
            t = trees[ell]
            star, log_q, kind = propose_tree(t, gen, hyper.move_probs, d, rule)
            P = MembershipMatrix(mats[ell], [lf.region for lf in t.leaves])
            if star is not None:
                V_star = star.membership(d.features, sigma)
                P_star = MembershipMatrix(V_star, [lf.region for lf in star.leaves])
                accepted = mh_accept(
                    t, star, R, P, P_star, hyper, gen, sigma_tilde, log_q
                )
            else:
                accepted = False
            accept_log[kind]["accepted" if accepted else "rejected"] += 1
            if accepted:
                trees[ell] = t = star
                mats[ell] = V_star
                P = P_star
            gam = draw_gammas(t, R, P, hyper, gen, sigma_tilde)
            new_fit = mats[ell] @ gam
            total_fit += new_fit - fits[ell]
            fits[ell] = new_fit
        if sigma_tilde_fixed is None:
            sigma_tilde = draw_sigma_tilde(y_norm, total_fit, hyper, gen)
        sigma_trace[it - 1] = sigma_tilde
        if it > hyper.it_burn:
            snapshots.append(
                [
                    (tuple(lf.region for lf in t.leaves), t.gammas())
                    for t in trees
                ]
            )
        if it % 100 == 0:
            acc = sum(v["accepted"] for v in accept_log.values())
            tot = acc + sum(v["rejected"] for v in accept_log.values())
            log.debug("iteration %d sigma=%.4g acceptance=%.3f", it, sigma_tilde, acc / tot)

    return PBartChain(
        snapshots=snapshots,
        sigma_trace=sigma_trace,
        acceptance_log=accept_log,
        sigma=sigma,
        y_offset=y_min,
        y_scale=span,
        hyper=hyper,
    )
