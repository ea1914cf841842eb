"""Bagged (PR-RF) and gradient-boosted (PR-GBT) ensembles of PR trees."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, RngSpec
from .tree import PRTree, StoppingRule, fit_prtree

log = logging.getLogger(__name__)


@dataclass
class Forest:
    """Average of independently fitted PR trees (bootstrap bagging)."""

    trees: list[PRTree]
    bootstrap: bool = True
    feature_subsets: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        preds = np.stack([t.predict(X) for t in self.trees])
        # sort per point before averaging so the result is exactly invariant
        # to the order the trees are stored in
        return np.sort(preds, axis=0).mean(axis=0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "forest",
                "bootstrap": self.bootstrap,
                "feature_subsets": [list(fs) for fs in self.feature_subsets],
                "trees": [t.to_dict() for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        obj = json.loads(text)
        if obj.get("kind") != "forest":
            raise ValueError("not a forest model")
        return cls(
            trees=[PRTree.from_dict(t) for t in obj["trees"]],
            bootstrap=bool(obj["bootstrap"]),
            feature_subsets=[tuple(fs) for fs in obj["feature_subsets"]],
        )


@dataclass
class BoostedEnsemble:
    """Stagewise additive PR trees, each fit to the running residuals."""

    trees: list[PRTree]
    shrinkage: float = 1.0

    @property
    def m(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += self.shrinkage * t.predict(X)
        return total

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "gbt",
                "shrinkage": float(self.shrinkage),
                "trees": [t.to_dict() for t in self.trees],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "BoostedEnsemble":
        obj = json.loads(text)
        if obj.get("kind") != "gbt":
            raise ValueError("not a boosted model")
        return cls(
            trees=[PRTree.from_dict(t) for t in obj["trees"]],
            shrinkage=float(obj["shrinkage"]),
        )


def fit_prrf(
    d: Dataset,
    m: int,
    sigma,
    rule: StoppingRule = StoppingRule(),
    rng: RngSpec = RngSpec(0),
    bootstrap: bool = True,
    vars_per_tree: int | None = None,
) -> Forest:
    """Fit m PR trees on bootstrap resamples, each restricted to a uniformly
    drawn variable subset (default: all variables). Every tree consumes its
    own named rng stream, so the forest is reproducible and trees could be
    fitted in parallel."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if vars_per_tree is None:
        vars_per_tree = d.p
    if not (1 <= vars_per_tree <= d.p):
        raise ValueError("vars_per_tree must lie in [1, p]")
    trees, subsets = [], []
    for ell in range(m):
        gen = rng.stream(ell).generator()
        sample = d.subset(gen.integers(0, d.n, size=d.n)) if bootstrap else d
        if vars_per_tree < d.p:
            feats = tuple(sorted(gen.choice(d.p, size=vars_per_tree, replace=False)))
        else:
            feats = tuple(range(d.p))
        trees.append(fit_prtree(sample, sigma, rule, features=list(feats)))
        subsets.append(feats)
    return Forest(trees=trees, bootstrap=bootstrap, feature_subsets=subsets)


def predict_forest(f: Forest, x) -> float:
    return float(f.predict(np.asarray(x, dtype=float)[None, :])[0])


def fit_prgbt(
    d: Dataset,
    m: int,
    sigma,
    rule: StoppingRule = StoppingRule(),
    rng: RngSpec = RngSpec(0),
    shrinkage: float = 1.0,
) -> BoostedEnsemble:
    """Fit m boosting stages; stage trees are PR trees fit to the residuals
    of the shrinkage-weighted accumulated model. Squared-error residual
    fitting is exact gradient boosting, so no gradient reweighting is
    applied."""
    del rng
    if m < 1:
        raise ValueError("m must be >= 1")
    if not (0.0 < shrinkage <= 1.0):
        raise ValueError("shrinkage must lie in (0, 1]")
    trees = []
    resid = d.target.astype(float).copy()
    for ell in range(m):
        t = fit_prtree(d, sigma, rule, target=resid)
        trees.append(t)
        resid = resid - shrinkage * t.predict(d.features)
        log.debug("stage %d training rmse %.6g", ell + 1, np.sqrt(np.mean(resid**2)))
    return BoostedEnsemble(trees=trees, shrinkage=shrinkage)


def predict_boosted(b: BoostedEnsemble, x) -> float:
    return float(b.predict(np.asarray(x, dtype=float)[None, :])[0])
