"""Binary decision tree stored as parallel slot arrays.

Nodes live at integer slots; pruning frees slots for reuse rather than
compacting, so row-to-leaf assignments stay valid across structure moves.
Split rules are numeric thresholds (x <= c goes left) or categorical subsets
(x in S goes left); every rule carries a missing-goes-left flag. The slot
arrays are kernel-ready (see `_kernels._fallback` for the layout contract);
`packed` exposes them plus the flattened categorical segments.
"""

import numpy as np

LEAF = -1
FREE = -2


class Tree:
    __slots__ = (
        "feature",
        "threshold",
        "missing_left",
        "left",
        "right",
        "leaf_value",
        "depth",
        "cat_subset",
        "_free",
        "_cat_pack",
    )

    def __init__(self, capacity=8):
        self.feature = np.full(capacity, FREE, dtype=np.int32)
        self.threshold = np.zeros(capacity, dtype=np.float64)
        self.missing_left = np.zeros(capacity, dtype=np.uint8)
        self.left = np.zeros(capacity, dtype=np.int32)
        self.right = np.zeros(capacity, dtype=np.int32)
        self.leaf_value = np.zeros(capacity, dtype=np.float64)
        self.depth = np.zeros(capacity, dtype=np.int32)
        self.cat_subset = [None] * capacity
        self.feature[0] = LEAF
        self._free = list(range(capacity - 1, 0, -1))
        self._cat_pack = None

    @property
    def n_slots(self):
        return self.feature.shape[0]

    def copy(self):
        t = Tree.__new__(Tree)
        t.feature = self.feature.copy()
        t.threshold = self.threshold.copy()
        t.missing_left = self.missing_left.copy()
        t.left = self.left.copy()
        t.right = self.right.copy()
        t.leaf_value = self.leaf_value.copy()
        t.depth = self.depth.copy()
        t.cat_subset = list(self.cat_subset)  # subsets are immutable
        t._free = list(self._free)
        t._cat_pack = self._cat_pack
        return t

    def leaves(self):
        return np.nonzero(self.feature == LEAF)[0]

    def internal_nodes(self):
        return np.nonzero(self.feature >= 0)[0]

    def prunable_nodes(self):
        """Internal nodes whose children are both leaves."""
        internal = self.internal_nodes()
        if internal.shape[0] == 0:
            return internal
        mask = (self.feature[self.left[internal]] == LEAF) & (
            self.feature[self.right[internal]] == LEAF
        )
        return internal[mask]

    @property
    def n_leaves(self):
        return int((self.feature == LEAF).sum())

    @property
    def is_stump(self):
        return self.feature[0] == LEAF

    def subtree_leaves(self, node):
        out = []
        stack = [int(node)]
        while stack:
            cur = stack.pop()
            if self.feature[cur] == LEAF:
                out.append(cur)
            else:
                stack.append(int(self.right[cur]))
                stack.append(int(self.left[cur]))
        return np.asarray(out, dtype=np.int32)

    def _alloc(self):
        if not self._free:
            old = self.n_slots
            new = old * 2
            for name in (
                "feature",
                "threshold",
                "missing_left",
                "left",
                "right",
                "leaf_value",
                "depth",
            ):
                arr = getattr(self, name)
                grown = np.zeros(new, dtype=arr.dtype)
                grown[:old] = arr
                setattr(self, name, grown)
            self.feature[old:] = FREE
            self.cat_subset += [None] * (new - old)
            self._free = list(range(new - 1, old - 1, -1))
        return self._free.pop()

    def _set_rule(self, node, feat, threshold, subset, missing_left):
        self.feature[node] = feat
        self.missing_left[node] = 1 if missing_left else 0
        if subset is not None:
            self.threshold[node] = 0.0
            self.cat_subset[node] = np.asarray(np.sort(subset), dtype=np.float64)
        else:
            self.threshold[node] = threshold
            self.cat_subset[node] = None
        self._cat_pack = None

    def grow(self, node, feat, threshold=None, subset=None, missing_left=False):
        """Split a leaf; returns the new (left, right) leaf ids."""
        assert self.feature[node] == LEAF
        l = self._alloc()
        r = self._alloc()
        for child in (l, r):
            self.feature[child] = LEAF
            self.leaf_value[child] = 0.0
            self.depth[child] = self.depth[node] + 1
            self.cat_subset[child] = None
        self.left[node] = l
        self.right[node] = r
        self._set_rule(node, feat, threshold, subset, missing_left)
        return l, r

    def prune(self, node):
        """Collapse a terminal split back into a leaf."""
        l, r = int(self.left[node]), int(self.right[node])
        assert self.feature[l] == LEAF and self.feature[r] == LEAF
        for child in (l, r):
            self.feature[child] = FREE
            self.cat_subset[child] = None
            self._free.append(child)
        self.feature[node] = LEAF
        self.leaf_value[node] = 0.0
        self.cat_subset[node] = None
        self._cat_pack = None

    def change_rule(self, node, feat, threshold=None, subset=None, missing_left=False):
        assert self.feature[node] >= 0
        self._set_rule(node, feat, threshold, subset, missing_left)

    def rule_of(self, node):
        """(feature, threshold, subset, missing_left) of an internal node."""
        return (
            int(self.feature[node]),
            float(self.threshold[node]),
            self.cat_subset[node],
            bool(self.missing_left[node]),
        )

    def _cat_arrays(self):
        if self._cat_pack is None:
            starts = np.full(self.n_slots, -1, dtype=np.int64)
            lens = np.zeros(self.n_slots, dtype=np.int32)
            chunks = []
            offset = 0
            for i, seg in enumerate(self.cat_subset):
                if seg is not None and self.feature[i] >= 0:
                    starts[i] = offset
                    lens[i] = seg.shape[0]
                    chunks.append(seg)
                    offset += seg.shape[0]
            codes = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.float64)
            self._cat_pack = (starts, lens, codes)
        return self._cat_pack

    def packed(self):
        """Kernel-ready arrays: route with start=0 (or any subtree node)."""
        cat_start, cat_len, cat_codes = self._cat_arrays()
        return (
            self.feature,
            self.threshold,
            self.missing_left,
            self.left,
            self.right,
            cat_start,
            cat_len,
            cat_codes,
        )

    def compact(self):
        """Copy live nodes into dense arrays with remapped child indices.

        Returns a dict of arrays in the packed layout plus the leaf values;
        used when snapshotting posterior draws.
        """
        live = np.nonzero(self.feature != FREE)[0]
        remap = np.full(self.n_slots, -1, dtype=np.int32)
        remap[live] = np.arange(live.shape[0], dtype=np.int32)
        feature = self.feature[live]
        left = np.where(feature >= 0, remap[self.left[live]], 0).astype(np.int32)
        right = np.where(feature >= 0, remap[self.right[live]], 0).astype(np.int32)
        cat_start, cat_len, cat_codes = self._cat_arrays()
        new_start = cat_start[live]
        keep = new_start >= 0
        # categorical segments are already contiguous in _cat_arrays order
        return {
            "feature": feature,
            "threshold": self.threshold[live],
            "missing_left": self.missing_left[live],
            "left": left,
            "right": right,
            "cat_start": np.where(keep, new_start, -1),
            "cat_len": cat_len[live],
            "cat_codes": cat_codes,
            "leaf_value": self.leaf_value[live],
            "root": int(remap[0]),
        }
