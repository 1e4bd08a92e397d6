"""Brute-force reference implementations used as test oracles.

Written for clarity over speed: plain loops over Python numbers, no
sorting or cumulative sums shared with the package code.
"""

import math


def ap_bruteforce(scores, labels):
    """Average precision with stable tie-breaking (earlier input ranks higher)."""
    n = len(scores)
    rank = []
    for i in range(n):
        r = 1
        for j in range(n):
            if scores[j] > scores[i] or (scores[j] == scores[i] and j < i):
                r += 1
        rank.append(r)
    pos = [i for i in range(n) if labels[i] == "fake"]
    terms = []
    for i in pos:
        tp = sum(1 for j in pos if rank[j] <= rank[i])
        terms.append(tp / rank[i])
    return math.fsum(terms) / len(pos)


def two_afc_bruteforce(pairs):
    won = 0.0
    for real, fake in pairs:
        if fake > real:
            won += 1.0
        elif fake == real:
            won += 0.5
    return won / len(pairs)


def accuracy_bruteforce(scores, labels, threshold):
    def pct(idx):
        if not idx:
            return float("nan")
        ok = sum(1 for i in idx if (scores[i] > threshold) == (labels[i] == "fake"))
        return 100.0 * ok / len(idx)

    everyone = list(range(len(scores)))
    return (pct(everyone), pct([i for i in everyone if labels[i] == "real"]),
            pct([i for i in everyone if labels[i] == "fake"]))


def iou_bruteforce(pred, gt, tau):
    inter = union = 0
    for y in range(gt.shape[0]):
        for x in range(gt.shape[1]):
            a = math.hypot(gt[y, x, 0], gt[y, x, 1]) >= tau
            b = math.hypot(pred[y, x, 0], pred[y, x, 1]) >= tau
            inter += a and b
            union += a or b
    return 1.0 if union == 0 else inter / union
