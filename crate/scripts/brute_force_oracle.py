#!/usr/bin/env python3
"""Brute-force oracle for the rank-weighted concept scoring worked examples.

Computes ranks by exhaustive pairwise comparison (no sorting) and sums scores
by enumerating every (image, concept) membership. Kept deliberately naive so it
shares no code path with the Rust engine.
"""
from fractions import Fraction as F


def ranks(ms, ids):
    # rank = 1 + number of images strictly "smaller" under (ms, id) ordering
    out = []
    for i in range(len(ms)):
        r = 1
        for j in range(len(ms)):
            if (ms[j], ids[j]) < (ms[i], ids[i]):
                r += 1
        out.append(r)
    return out


def scores(ms, ids, membership, concepts):
    r = ranks(ms, ids)
    cs = {}
    for c in concepts:
        total, count = F(0), 0
        for n in range(len(ms)):
            if c in membership[n]:
                total += r[n] * ms[n]
                count += 1
        cs[c] = total / count
    return cs


def probabilities(cs):
    s = sum(cs.values())
    return {k: v / s for k, v in cs.items()}


def global_example():
    ms = [F(1, 4), F(1), F(1, 2), F(3, 4)]
    ids = ["i1", "i2", "i3", "i4"]
    membership = [{"A"}, {"A"}, {"B"}, {"B"}]
    cs = scores(ms, ids, membership, ["A", "B"])
    p = probabilities(cs)
    print("global ranks", ranks(ms, ids))
    print("global CS", {k: float(v) for k, v in cs.items()})
    print("global P", {k: float(v) for k, v in p.items()})
    print("global biased@0.55", [k for k, v in p.items() if v > F(55, 100)])


def local_example():
    ms = [F(2, 10), F(4, 10), F(6, 10), F(8, 10)]
    ids = ["i1", "i2", "i3", "i4"]
    membership = [{"c1"}, {"c1", "c2"}, {"c2"}, {"c3"}]
    iou = {"c1": F(10, 100), "c2": F(5, 100), "c3": F(20, 100)}
    cs = scores(ms, ids, membership, ["c1", "c2", "c3"])
    scaled = {k: v * iou[k] for k, v in cs.items()}
    p = probabilities(scaled)
    k = 3
    print("local CS", {k: float(v) for k, v in cs.items()})
    print("local scaled", {k: float(v) for k, v in scaled.items()})
    print("local P", {c: repr(float(v)) for c, v in p.items()})
    print("local paired", [c for c, v in p.items() if v > F(3, 2) / k])


if __name__ == "__main__":
    global_example()
    local_example()
