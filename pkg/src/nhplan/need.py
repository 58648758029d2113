"""Service-need characterization.

Raw resident-classification groups carry mean direct/indirect daily staff-time;
each group's total staff-time is a two-rate hypoexponential distribution.
Groups are merged by complete-linkage hierarchical clustering under
Jensen-Shannon divergence until the smallest partition whose every cluster
stays within the divergence tolerance, and a pruned decision tree maps the
identifying variables (ADL band, rehabilitation level, extensive-care level)
onto the clustered need groups.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy import integrate

from .cohort import EXTENSIVE_LEVELS, REHAB_LEVELS, ResidentRecord

LN2 = math.log(2.0)
_EQUAL_RATE_REL_TOL = 1e-9

ADL_BANDS = ((0, 5), (6, 10), (11, 16))


class NeedError(ValueError):
    pass


@dataclass(frozen=True)
class HypoExp:
    """Sum of two independent exponentials (rates per minute)."""

    rate1: float
    rate2: float

    def __post_init__(self):
        if self.rate1 <= 0 or self.rate2 <= 0:
            raise NeedError("rates must be positive")

    @classmethod
    def from_means(cls, direct_mean: float, indirect_mean: float) -> "HypoExp":
        return cls(rate1=1.0 / direct_mean, rate2=1.0 / indirect_mean)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate1 + 1.0 / self.rate2

    @property
    def _erlang(self) -> bool:
        return abs(self.rate1 - self.rate2) / self.rate1 < _EQUAL_RATE_REL_TOL

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise NeedError("t must be nonnegative")
        l1, l2 = self.rate1, self.rate2
        if self._erlang:
            out = l1 * l1 * t * np.exp(-l1 * t)
        else:
            out = l1 * l2 / (l2 - l1) * (np.exp(-l1 * t) - np.exp(-l2 * t))
        return out if out.shape else float(out)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        l1, l2 = self.rate1, self.rate2
        if self._erlang:
            out = 1.0 - np.exp(-l1 * t) * (1.0 + l1 * t)
        else:
            out = 1.0 - (l2 * np.exp(-l1 * t) - l1 * np.exp(-l2 * t)) / (l2 - l1)
        out = np.clip(out, 0.0, 1.0)
        return out if out.shape else float(out)

    def quantile(self, q: float) -> float:
        if not (0.0 <= q < 1.0):
            raise NeedError("q must be in [0, 1)")
        hi = self.mean
        while self.cdf(hi) < q:
            hi *= 2.0
        from scipy.optimize import brentq
        return float(brentq(lambda t: self.cdf(t) - q, 0.0, hi, xtol=1e-10))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.exponential(1.0 / self.rate1, size=n)
                + rng.exponential(1.0 / self.rate2, size=n))

    def representative_sample(self, n: int) -> np.ndarray:
        """Deterministic mid-quantile grid; its empirical CDF tracks the true
        CDF to O(1/n), which makes it a low-noise probe for fit checks."""
        return np.array([self.quantile((i + 0.5) / n) for i in range(n)])


def jsd(p: HypoExp, q: HypoExp, abs_tol: float = 1e-8) -> float:
    """Jensen-Shannon divergence (natural log), by adaptive quadrature over
    [0, quantile(1 - 1e-10)]. Symmetric by construction; bounded by ln 2."""
    upper = max(p.quantile(1.0 - 1e-10), q.quantile(1.0 - 1e-10))

    def integrand(t):
        fp, fq = p.pdf(t), q.pdf(t)
        m = 0.5 * (fp + fq)
        total = 0.0
        if fp > 0:
            total += 0.5 * fp * math.log(fp / m)
        if fq > 0:
            total += 0.5 * fq * math.log(fq / m)
        return total

    value, err = integrate.quad(integrand, 0.0, upper, epsabs=abs_tol * 0.1,
                                epsrel=1e-10, limit=400)
    if err > abs_tol:
        raise NeedError(f"quadrature did not reach tolerance (err={err:.2e})")
    return float(min(max(value, 0.0), LN2))


# ---------------------------------------------------------------------------
# Raw group table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RawGroup:
    group_id: str
    direct_mean: float
    indirect_mean: float
    adl_lo: int
    adl_hi: int
    rehab_level: str
    extensive_level: str

    @property
    def total_mean(self) -> float:
        return self.direct_mean + self.indirect_mean

    @property
    def distribution(self) -> HypoExp:
        return HypoExp.from_means(self.direct_mean, self.indirect_mean)


@dataclass(frozen=True)
class RawGroupTable:
    groups: tuple[RawGroup, ...]

    def __post_init__(self):
        ids = [g.group_id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise NeedError("group ids must be unique")
        for g in self.groups:
            if g.direct_mean <= 0 or g.indirect_mean <= 0:
                raise NeedError(f"group {g.group_id}: means must be positive")

    def lookup(self, adl: float, rehab_level: str, extensive_level: str) -> RawGroup:
        """Map identifying variables to the unique raw group. Branch
        precedence: extensive care, then rehabilitation, then physical
        function."""
        if extensive_level != "none":
            matches = [g for g in self.groups
                       if g.extensive_level == extensive_level
                       and g.adl_lo <= adl <= g.adl_hi]
        elif rehab_level != "none":
            matches = [g for g in self.groups
                       if g.extensive_level == "none" and g.rehab_level == rehab_level
                       and g.adl_lo <= adl <= g.adl_hi]
        else:
            matches = [g for g in self.groups
                       if g.extensive_level == "none" and g.rehab_level == "none"
                       and g.adl_lo <= adl <= g.adl_hi]
        if len(matches) != 1:
            raise NeedError(
                f"signature (adl={adl}, rehab={rehab_level}, ext={extensive_level}) "
                f"matches {len(matches)} raw groups")
        return matches[0]


def load_raw_group_table(path: str | Path) -> RawGroupTable:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(RawGroup(
                group_id=row["group_id"],
                direct_mean=float(row["direct_mean"]),
                indirect_mean=float(row["indirect_mean"]),
                adl_lo=int(row["adl_lo"]),
                adl_hi=int(row["adl_hi"]),
                rehab_level=row["rehab_level"],
                extensive_level=row["extensive_level"],
            ))
    return RawGroupTable(groups=tuple(rows))


def write_raw_group_table(table: RawGroupTable, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "direct_mean", "indirect_mean",
                         "adl_lo", "adl_hi", "rehab_level", "extensive_level"])
        for g in table.groups:
            writer.writerow([g.group_id, g.direct_mean, g.indirect_mean,
                             g.adl_lo, g.adl_hi, g.rehab_level, g.extensive_level])


def indirect_mean_from_proportion(direct_mean: float, proportion: float) -> float:
    """Convert an indirect staff-time proportion into mean minutes once, at
    table load: y2 = y1 * p / (1 - p)."""
    if not (0.0 <= proportion < 1.0):
        raise NeedError("proportion must be in [0, 1)")
    return direct_mean * proportion / (1.0 - proportion)


def default_raw_group_table() -> RawGroupTable:
    from importlib.resources import files
    return load_raw_group_table(files("nhplan.data").joinpath("raw_groups.csv"))


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeedCluster:
    cluster_id: int
    member_ids: tuple[str, ...]
    distribution: HypoExp


@dataclass(frozen=True)
class NeedGroupTable:
    clusters: tuple[NeedCluster, ...]
    classifier: "TreeNode"
    epsilon: float

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_for(self, adl: float, rehab_level: str, extensive_level: str) -> int:
        return classify(self.classifier, adl, REHAB_LEVELS.index(rehab_level),
                        EXTENSIVE_LEVELS.index(extensive_level))

    def distribution_for(self, cluster_id: int) -> HypoExp:
        return self.clusters[cluster_id - 1].distribution


def _pooled(groups: list[RawGroup], members: tuple[int, ...]) -> HypoExp:
    # cluster parameters: arithmetic mean of the member rate parameters
    r1 = float(np.mean([groups[i].distribution.rate1 for i in members]))
    r2 = float(np.mean([groups[i].distribution.rate2 for i in members]))
    return HypoExp(r1, r2)


def cluster_partition(table: RawGroupTable, epsilon: float) -> list[tuple[int, ...]]:
    """Complete-linkage agglomeration on pairwise JSD: merge while the closest
    pair of clusters is within epsilon, which yields the smallest partition on
    the merge path whose clusters all satisfy the within-cluster bound.
    Tie-breaks pick the pair with the lowest member group ids."""
    if epsilon <= 0:
        raise NeedError("epsilon must be positive")
    k = len(table.groups)
    if k == 0:
        raise NeedError("table has no raw groups")
    dist = np.zeros((k, k))
    dists = [g.distribution for g in table.groups]
    for i, j in combinations(range(k), 2):
        dist[i, j] = dist[j, i] = jsd(dists[i], dists[j])

    clusters: list[tuple[int, ...]] = [(i,) for i in range(k)]
    while len(clusters) > 1:
        best_key, best_pair = None, None
        for a, b in combinations(range(len(clusters)), 2):
            ca, cb = sorted((clusters[a], clusters[b]))
            d = max(dist[i, j] for i in ca for j in cb)
            key = (d, ca[0], cb[0])
            if best_key is None or key < best_key:
                best_key, best_pair = key, (a, b)
        if best_key[0] > epsilon:
            break
        a, b = best_pair
        merged = tuple(sorted(clusters[a] + clusters[b]))
        clusters = [c for idx, c in enumerate(clusters) if idx not in (a, b)]
        clusters.append(merged)
    return clusters


def cluster_groups(table: RawGroupTable, epsilon: float = 0.002) -> NeedGroupTable:
    """Cluster raw groups and build the identifying-variable classifier.
    Cluster ids are ordered by increasing fitted total mean staff-time."""
    members = cluster_partition(table, epsilon)
    groups = list(table.groups)
    fitted = [_pooled(groups, c) for c in members]
    order = np.argsort([h.mean for h in fitted], kind="stable")
    clusters = tuple(
        NeedCluster(cluster_id=rank + 1,
                    member_ids=tuple(groups[i].group_id for i in members[pos]),
                    distribution=fitted[pos])
        for rank, pos in enumerate(order)
    )
    tree = build_classifier(table, clusters)
    return NeedGroupTable(clusters=clusters, classifier=tree, epsilon=epsilon)


# ---------------------------------------------------------------------------
# Cramer-von Mises goodness of fit
# ---------------------------------------------------------------------------

def cvm_statistic(samples: np.ndarray, d: HypoExp) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    u = d.cdf(x)
    i = np.arange(1, n + 1)
    return float(1.0 / (12 * n) + np.sum((u - (2 * i - 1) / (2 * n)) ** 2))


def cvm_test(samples: np.ndarray, d: HypoExp, n_boot: int = 2000,
             seed: int = 0) -> tuple[float, float]:
    """Cramer-von Mises W^2 against the hypoexponential CDF with a parametric
    bootstrap p-value (the reference distribution is fully specified, so
    resamples are drawn straight from it)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 20:
        raise NeedError("need at least 20 samples")
    stat = cvm_statistic(samples, d)
    rng = np.random.default_rng(np.uint64(seed))
    boots = np.empty(n_boot)
    for b in range(n_boot):
        boots[b] = cvm_statistic(d.sample(samples.size, rng), d)
    p = (1.0 + np.sum(boots >= stat)) / (n_boot + 1.0)
    return stat, float(p)


# ---------------------------------------------------------------------------
# Classifier: Apriori association rules feeding a pruned Gini tree
# ---------------------------------------------------------------------------

FEATURES = ("adl", "rehab", "ext")


@dataclass(frozen=True)
class TreeNode:
    feature: str | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    def leaf_count(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.leaf_count() + self.right.leaf_count()


def classify(node: TreeNode, adl: float, rehab_idx: int, ext_idx: int) -> int:
    values = {"adl": adl, "rehab": rehab_idx, "ext": ext_idx}
    while not node.is_leaf:
        node = node.left if values[node.feature] <= node.threshold else node.right
    return node.label


def classify_resident(table: NeedGroupTable, record: ResidentRecord,
                      covariate_names: tuple[str, ...]) -> int:
    adl = record.covariate(covariate_names, "adl")
    return table.cluster_for(adl, record.rehab_level, record.extensive_care_level)


def _band_of(adl: int) -> int:
    for b, (lo, hi) in enumerate(ADL_BANDS):
        if lo <= adl <= hi:
            return b
    raise NeedError(f"adl {adl} out of range")


def mine_association_rules(transactions: list[tuple[frozenset, int]],
                           min_support: float = 0.01,
                           min_confidence: float = 0.9) -> list[tuple[frozenset, int]]:
    """Apriori over (signature item, cluster label) transactions. Returns the
    rules (itemset -> label) meeting the support and confidence thresholds."""
    n = len(transactions)
    items = sorted({item for t, _ in transactions for item in t})
    # frequent itemsets, level-wise
    frequent: list[frozenset] = []
    level = [frozenset([i]) for i in items]
    while level:
        counts = {s: 0 for s in level}
        for t, _ in transactions:
            for s in level:
                if s <= t:
                    counts[s] += 1
        kept = [s for s, c in counts.items() if c / n >= min_support]
        frequent.extend(kept)
        next_level = set()
        for a, b in combinations(kept, 2):
            u = a | b
            if len(u) == len(a) + 1:
                next_level.add(u)
        level = sorted(next_level, key=sorted)
    rules = []
    for s in frequent:
        covered = [label for t, label in transactions if s <= t]
        if not covered:
            continue
        top = max(set(covered), key=covered.count)
        if covered.count(top) / len(covered) >= min_confidence:
            rules.append((s, top))
    return rules


def _gini(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return 1.0 - float(np.sum(p * p))


def _grow_tree(X: np.ndarray, labels: np.ndarray, features: list[str]) -> TreeNode:
    if np.unique(labels).size == 1:
        return TreeNode(label=int(labels[0]))
    best = None
    for f_idx, fname in enumerate(FEATURES):
        if fname not in features:
            continue
        col = X[:, f_idx]
        for thr in np.unique(col)[:-1]:
            mask = col <= thr
            g = (mask.sum() * _gini(labels[mask])
                 + (~mask).sum() * _gini(labels[~mask])) / labels.size
            cand = (g, fname, float(thr))
            if best is None or cand < best:
                best = cand
    if best is None:
        # no admissible split: majority leaf
        vals, counts = np.unique(labels, return_counts=True)
        return TreeNode(label=int(vals[np.argmax(counts)]))
    _, fname, thr = best
    mask = X[:, FEATURES.index(fname)] <= thr
    return TreeNode(feature=fname, threshold=thr,
                    left=_grow_tree(X[mask], labels[mask], features),
                    right=_grow_tree(X[~mask], labels[~mask], features))


def _prune(node: TreeNode) -> TreeNode:
    """Merge sibling leaves that predict the same cluster."""
    if node.is_leaf:
        return node
    left, right = _prune(node.left), _prune(node.right)
    if left.is_leaf and right.is_leaf and left.label == right.label:
        return TreeNode(label=left.label)
    return TreeNode(feature=node.feature, threshold=node.threshold,
                    left=left, right=right)


def build_classifier(table: RawGroupTable, clusters: tuple[NeedCluster, ...]
                     ) -> TreeNode:
    """Association rules over the identifying variables propose the split
    features; a Gini tree grown on them is pruned without changing any
    signature's predicted cluster. The result reproduces the raw-group to
    cluster mapping exactly."""
    by_group = {}
    for c in clusters:
        for gid in c.member_ids:
            if gid in by_group:
                raise NeedError(f"group {gid} assigned to multiple clusters")
            by_group[gid] = c.cluster_id

    rows, labels, transactions = [], [], []
    for adl in range(17):
        for rehab_idx, rehab in enumerate(REHAB_LEVELS):
            for ext_idx, ext in enumerate(EXTENSIVE_LEVELS):
                group = table.lookup(adl, rehab, ext)
                label = by_group[group.group_id]
                rows.append((adl, rehab_idx, ext_idx))
                labels.append(label)
                transactions.append((frozenset({
                    f"band={_band_of(adl)}", f"rehab={rehab}", f"ext={ext}"}), label))

    rules = mine_association_rules(transactions)
    rule_features = set()
    for itemset, _ in rules:
        for item in itemset:
            key = item.split("=", 1)[0]
            rule_features.add("adl" if key == "band" else key)
    features = [f for f in FEATURES if f in rule_features] or list(FEATURES)

    X = np.asarray(rows, dtype=float)
    y = np.asarray(labels, dtype=int)
    tree = _prune(_grow_tree(X, y, features))
    for (adl, rehab_idx, ext_idx), label in zip(rows, labels):
        if classify(tree, adl, rehab_idx, ext_idx) != label:
            raise NeedError("classifier failed to reproduce the cluster mapping")
    return tree
