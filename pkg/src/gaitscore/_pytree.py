"""Pure NumPy tree kernels: CART growth and per-tree SHAP attribution.

This module is the reference implementation; gaitscore._ctree is a compiled
twin that must produce bit-identical trees. Keeping the two in lockstep
imposes a few rules on anything edited here:

* All randomness comes from the splitmix64 stream below; draws happen in
  node-preorder during growth and nowhere else.
* Prefix sums over sorted samples are sequential (np.cumsum /
  np.add.accumulate, never np.sum), matching the compiled scalar loops.
* Split-quality comparisons use exact float equality with the documented
  lexicographic tie-break (lowest feature index, then lowest threshold).
* Classification bookkeeping is pure int64 arithmetic until the final
  one-divide-per-side score, so it is exact in both backends.

Trees are emitted as flat parallel arrays: feature (int32, -1 at leaves),
threshold (f64, 0.0 at leaves), left/right child ids (int32, -1 at
leaves), n_node_samples (int64), impurity (f64) and value (f64 matrix:
per-class training counts for classifiers, the mean target for
regressors). Node ids are preorder, left subtree first.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_MASK64 = (1 << 64) - 1


class _Splitmix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def bounded(self, n: int) -> int:
        # multiply-shift keeps the draw free of modulo bias and cheap to
        # mirror in C (one 128-bit multiply)
        return (self.next_u64() * n) >> 64


def _seq_sum(x: np.ndarray) -> float:
    """Strictly left-to-right float sum (np.sum would pair-wise reorder)."""
    if len(x) == 0:
        return 0.0
    return float(np.add.accumulate(x)[-1])


class _TreeBuilder:
    def __init__(self, Xb, max_depth, min_samples_leaf, max_features, seed):
        self.Xb = Xb
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.max_features = max_features
        self.rng = _Splitmix64(seed)
        self.n_features = Xb.shape[1]
        self.perm = np.arange(self.n_features, dtype=np.int64)
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.n_node: list[int] = []
        self.impurity: list[float] = []
        self.value: list[np.ndarray] = []

    def _new_node(self) -> int:
        nid = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.n_node.append(0)
        self.impurity.append(0.0)
        self.value.append(None)
        return nid

    def _draw_features(self) -> np.ndarray:
        k = min(self.max_features, self.n_features)
        perm = self.perm
        perm[:] = np.arange(self.n_features)
        for i in range(k):
            j = i + self.rng.bounded(self.n_features - i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm[:k].copy()

    def _result(self):
        return {
            "feature": np.array(self.feature, dtype=np.int32),
            "threshold": np.array(self.threshold, dtype=np.float64),
            "left": np.array(self.left, dtype=np.int32),
            "right": np.array(self.right, dtype=np.int32),
            "n_node_samples": np.array(self.n_node, dtype=np.int64),
            "impurity": np.array(self.impurity, dtype=np.float64),
            "value": np.vstack(self.value),
        }


class _ClassifierBuilder(_TreeBuilder):
    def __init__(self, Xb, yb, n_classes, **kw):
        super().__init__(Xb, **kw)
        self.yb = yb
        self.n_classes = n_classes
        self.onehot = np.equal(
            yb[:, None], np.arange(n_classes, dtype=np.int64)[None, :]
        ).astype(np.int64)

    def grow(self, samples: np.ndarray, depth: int) -> int:
        nid = self._new_node()
        n = len(samples)
        counts = self.onehot[samples].sum(axis=0)
        sumsq = int((counts * counts).sum())
        nf = float(n)
        self.n_node[nid] = n
        self.impurity[nid] = 1.0 - sumsq / (nf * nf)
        self.value[nid] = counts.astype(np.float64)

        if (
            n < 2
            or n < 2 * self.min_leaf
            or (0 <= self.max_depth <= depth)
            or counts.max() == n
        ):
            return nid

        found, f, thr = self._best_split(samples, counts, sumsq)
        if not found:
            return nid

        vals = self.Xb[samples, f]
        mask = vals <= thr
        self.feature[nid] = f
        self.threshold[nid] = thr
        self.left[nid] = self.grow(samples[mask], depth + 1)
        self.right[nid] = self.grow(samples[~mask], depth + 1)
        return nid

    def _best_split(self, samples, counts, sumsq):
        n = len(samples)
        s_parent = sumsq / float(n)
        best_s = -np.inf
        best_f = -1
        best_thr = 0.0
        found = False
        nl = np.arange(1, n, dtype=np.int64)
        nr = n - nl
        for f in self._draw_features():
            vals = self.Xb[samples, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[0] == sv[-1]:
                continue
            cum = np.cumsum(self.onehot[samples][order], axis=0)
            sumsq_l = (cum[:-1] * cum[:-1]).sum(axis=1)
            cnt_r = counts[None, :] - cum[:-1]
            sumsq_r = (cnt_r * cnt_r).sum(axis=1)
            s = sumsq_l / nl + sumsq_r / nr
            valid = (sv[:-1] != sv[1:]) & (nl >= self.min_leaf) & (nr >= self.min_leaf) \
                & (s > s_parent)
            if not valid.any():
                continue
            s = np.where(valid, s, -np.inf)
            p = int(np.argmax(s))
            thr = 0.5 * (sv[p] + sv[p + 1])
            if thr == sv[p + 1]:
                thr = sv[p]
            sp = float(s[p])
            if sp > best_s or (
                sp == best_s and (f < best_f or (f == best_f and thr < best_thr))
            ):
                found = True
                best_s, best_f, best_thr = sp, int(f), float(thr)
        return found, best_f, best_thr


class _RegressorBuilder(_TreeBuilder):
    def __init__(self, Xb, yb, **kw):
        super().__init__(Xb, **kw)
        self.yb = yb

    def grow(self, samples: np.ndarray, depth: int) -> int:
        nid = self._new_node()
        n = len(samples)
        y = self.yb[samples]
        s = _seq_sum(y)
        sq = _seq_sum(y * y)
        nf = float(n)
        mean = s / nf
        imp = sq / nf - mean * mean
        if imp < 0.0:
            imp = 0.0
        self.n_node[nid] = n
        self.impurity[nid] = imp
        self.value[nid] = np.array([mean])

        if (
            n < 2
            or n < 2 * self.min_leaf
            or (0 <= self.max_depth <= depth)
            or float(y.min()) == float(y.max())
        ):
            return nid

        found, f, thr = self._best_split(samples, s)
        if not found:
            return nid

        vals = self.Xb[samples, f]
        mask = vals <= thr
        self.feature[nid] = f
        self.threshold[nid] = thr
        self.left[nid] = self.grow(samples[mask], depth + 1)
        self.right[nid] = self.grow(samples[~mask], depth + 1)
        return nid

    def _best_split(self, samples, node_sum):
        n = len(samples)
        s_parent = node_sum * node_sum / float(n)
        best_s = -np.inf
        best_f = -1
        best_thr = 0.0
        found = False
        nl = np.arange(1, n, dtype=np.float64)
        nr = float(n) - nl
        y = self.yb[samples]
        for f in self._draw_features():
            vals = self.Xb[samples, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[0] == sv[-1]:
                continue
            cs = np.cumsum(y[order])
            sl = cs[:-1]
            sr = float(cs[-1]) - sl
            s = sl * sl / nl + sr * sr / nr
            valid = (sv[:-1] != sv[1:]) & (nl >= self.min_leaf) & (nr >= self.min_leaf) \
                & (s > s_parent)
            if not valid.any():
                continue
            s = np.where(valid, s, -np.inf)
            p = int(np.argmax(s))
            thr = 0.5 * (sv[p] + sv[p + 1])
            if thr == sv[p + 1]:
                thr = sv[p]
            sp = float(s[p])
            if sp > best_s or (
                sp == best_s and (f < best_f or (f == best_f and thr < best_thr))
            ):
                found = True
                best_s, best_f, best_thr = sp, int(f), float(thr)
        return found, best_f, best_thr


def build_tree_classifier(X, y, n_classes, sample_idx, max_depth, min_samples_leaf,
                          max_features, seed):
    """Grow one CART classification tree on a bootstrap slice of (X, y).

    max_depth < 0 means unlimited. Splits maximize the Gini-equivalent
    score sum(count_k^2)/n over both children; only strict improvements
    over the parent are accepted.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    builder = _ClassifierBuilder(
        X[sample_idx], y[sample_idx], n_classes,
        max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        max_features=max_features, seed=seed,
    )
    builder.grow(np.arange(len(sample_idx), dtype=np.int64), 0)
    return builder._result()


def build_tree_regressor(X, y, sample_idx, max_depth, min_samples_leaf,
                         max_features, seed):
    """Grow one CART regression tree (variance-reduction splits)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    builder = _RegressorBuilder(
        X[sample_idx], y[sample_idx],
        max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        max_features=max_features, seed=seed,
    )
    builder.grow(np.arange(len(sample_idx), dtype=np.int64), 0)
    return builder._result()


# ---------------------------------------------------------------------------
# Path-dependent SHAP attribution for a single tree.
#
# The recursion walks every root-to-leaf path once, maintaining the "unique
# path" of features split on so far. Each path element carries the fraction
# of training samples that flow through when the feature is excluded (zero
# fraction, from node coverages), whether the explained point follows the
# branch (one fraction), and permutation weights that accumulate the
# Shapley kernel. At a leaf, unwinding each element yields that feature's
# weighted contribution.
# ---------------------------------------------------------------------------


def _max_depth_of(left, right) -> int:
    depth = np.zeros(len(left), dtype=np.int64)
    maxd = 0
    for i in range(len(left)):  # parents precede children in preorder
        for child in (left[i], right[i]):
            if child >= 0:
                depth[child] = depth[i] + 1
                if depth[child] > maxd:
                    maxd = int(depth[child])
    return maxd


def tree_shap(feature, threshold, left, right, coverage, leaf_value, x):
    """SHAP values of one tree's scalar output at point x.

    coverage holds per-node training-sample counts; leaf_value the scalar
    output per node (only leaves are read). Returns phi with one entry per
    feature of x; sum(phi) equals f(x) minus the coverage-weighted mean
    leaf value.
    """
    x = np.asarray(x, dtype=np.float64)
    phi = np.zeros(len(x))
    maxd = _max_depth_of(left, right)
    size = (maxd + 2) * (maxd + 3) // 2 + 4
    pd = np.zeros(size, dtype=np.int64)
    pz = np.zeros(size)
    po = np.zeros(size)
    pw = np.zeros(size)

    def extend(off, plen, zf, of, fi):
        pd[off + plen] = fi
        pz[off + plen] = zf
        po[off + plen] = of
        pw[off + plen] = 1.0 if plen == 0 else 0.0
        for i in range(plen - 1, -1, -1):
            pw[off + i + 1] += of * pw[off + i] * (i + 1) / (plen + 1)
            pw[off + i] = zf * pw[off + i] * (plen - i) / (plen + 1)

    def unwind(off, plen, i):
        L = plen - 1
        o_i = po[off + i]
        z_i = pz[off + i]
        nxt = pw[off + L]
        for j in range(L - 1, -1, -1):
            if o_i != 0.0:
                tmp = pw[off + j]
                pw[off + j] = nxt * (L + 1) / ((j + 1) * o_i)
                nxt = tmp - pw[off + j] * z_i * (L - j) / (L + 1)
            else:
                pw[off + j] = pw[off + j] * (L + 1) / (z_i * (L - j))
        for j in range(i, L):
            pd[off + j] = pd[off + j + 1]
            pz[off + j] = pz[off + j + 1]
            po[off + j] = po[off + j + 1]

    def unwound_sum(off, plen, i):
        L = plen - 1
        o_i = po[off + i]
        z_i = pz[off + i]
        nxt = pw[off + L]
        total = 0.0
        if o_i != 0.0:
            for j in range(L - 1, -1, -1):
                tmp = nxt / ((j + 1) * o_i)
                total += tmp
                nxt = pw[off + j] - tmp * z_i * (L - j)
        else:
            for j in range(L - 1, -1, -1):
                total += pw[off + j] / (z_i * (L - j))
        return total * (L + 1)

    def recurse(node, off, plen, zf, of, fi):
        noff = off + plen
        pd[noff:noff + plen] = pd[off:off + plen]
        pz[noff:noff + plen] = pz[off:off + plen]
        po[noff:noff + plen] = po[off:off + plen]
        pw[noff:noff + plen] = pw[off:off + plen]
        extend(noff, plen, zf, of, fi)
        plen += 1

        if left[node] < 0:
            v = leaf_value[node]
            for i in range(1, plen):
                w = unwound_sum(noff, plen, i)
                phi[pd[noff + i]] += w * (po[noff + i] - pz[noff + i]) * v
            return

        f = feature[node]
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        cov = coverage[node]
        hot_zf = coverage[hot] / cov
        cold_zf = coverage[cold] / cov

        iz = 1.0
        io = 1.0
        k = -1
        for i in range(plen):
            if pd[noff + i] == f:
                k = i
                break
        if k >= 0:
            iz = pz[noff + k]
            io = po[noff + k]
            unwind(noff, plen, k)
            plen -= 1

        recurse(hot, noff, plen, hot_zf * iz, io, f)
        recurse(cold, noff, plen, cold_zf * iz, 0.0, f)

    recurse(0, 0, 0, 1.0, 1.0, -1)
    return phi
