"""Disjoint-set (union-find) with path compression and union by size."""

from __future__ import annotations


class DisjointSet:
    """Union-find over arbitrary hashable items, created lazily on first touch."""

    def __init__(self):
        self._parent: dict = {}
        self._size: dict = {}

    def find(self, x):
        parent = self._parent
        if x not in parent:
            parent[x] = x
            self._size[x] = 1
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a, b) -> bool:
        """Merge the sets containing a and b; return True if they were distinct."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        return True

    def connected(self, a, b) -> bool:
        return self.find(a) == self.find(b)

    def components(self) -> dict:
        """Map each root to the list of items in its component (touched items only)."""
        comps: dict = {}
        for x in self._parent:
            comps.setdefault(self.find(x), []).append(x)
        return comps
