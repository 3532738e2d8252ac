"""Direct, loop-based evaluations of the feature formulas used as test oracles."""

import math


def rmssd(iv):
    d = [b - a for a, b in zip(iv, iv[1:])]
    return math.sqrt(sum(x * x for x in d) / len(d))


def sdsd(iv):
    d = [b - a for a, b in zip(iv, iv[1:])]
    m = sum(d) / len(d)
    return math.sqrt(sum((x - m) ** 2 for x in d) / len(d))


def sdrr(iv):
    m = sum(iv) / len(iv)
    return math.sqrt(sum((x - m) ** 2 for x in iv) / len(iv))


def pnn(iv, x):
    d = [abs(b - a) for a, b in zip(iv, iv[1:])]
    return 100.0 * sum(1 for v in d if v > x) / len(d)


def relative_rr(iv):
    return [2.0 * (iv[i] - iv[i - 1]) / (iv[i] + iv[i - 1]) for i in range(1, len(iv))]


def alsc(r):
    return sum(math.sqrt(1.0 + (r[n] - r[n - 1]) ** 2) for n in range(1, len(r)))


def insc(r):
    return sum(abs(v) for v in r)


def apsc(r):
    return sum(v * v for v in r) / len(r)


def rmsc(r):
    return math.sqrt(apsc(r))
