"""Continued fractions, best rational approximations, CD bridges.

The expansion is computed either exactly (rational input, or a symbolic
quadratic irrational whose partial quotients are known in closed form) or
with mpmath at a configurable working precision.  Convergent denominators
are exact python ints throughout, so they can grow to thousands of digits;
the products beta_n are kept both as floats and in log domain because they
underflow quickly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import mpmath as mp

from .sl2 import pow_geq, pow_leq, safe_log_int

SYMBOLIC = ("golden", "sqrt2m1")


class PrecisionExhausted(Exception):
    """Gauss-map iteration ran out of significant digits."""


class SelectionFailed(Exception):
    """No CD-bridge subsequence satisfying the invariants was found."""


@dataclass
class CfExpansion:
    """Partial quotients a_k, convergents p_k/q_k, tails alpha_k, products beta_n.

    Index conventions: a[0] = 0 is a placeholder so that a[k] is the k-th
    partial quotient; p = [0, 1, ...], q = [1, a_1, ...].  beta[n] stores
    beta_n = prod_{l<=n} alpha_l = |q_n alpha - p_n| (float, may underflow)
    and log_beta[n] its natural log.
    """

    alpha: float
    a: list
    p: list
    q: list
    alpha_tail: list
    beta: list
    log_beta: list
    rational: bool = False
    label: Optional[str] = None
    _alpha_mp: object = field(default=None, repr=False)

    def depth(self) -> int:
        return len(self.q) - 1

    def alpha_mp(self, prec: int = 256):
        if self._alpha_mp is not None:
            return self._alpha_mp
        with mp.workprec(prec):
            if self.label == "golden":
                return (mp.sqrt(5) - 1) / 2
            if self.label == "sqrt2m1":
                return mp.sqrt(2) - 1
            return mp.mpf(self.alpha)

    def norm_dist(self, k: int, prec: int = 256) -> float:
        """||k*alpha||_Z at high precision."""
        with mp.workprec(prec):
            x = mp.frac(k * self.alpha_mp(prec))
            return float(min(x, 1 - x))

    def log_q(self) -> list:
        return [safe_log_int(qi) for qi in self.q]

    def to_json(self) -> str:
        rec = {
            "a": [int(x) for x in self.a],
            "p": [int(x) for x in self.p],
            "q": [int(x) for x in self.q],
            "log_beta": list(self.log_beta),
        }
        return json.dumps(rec)

    def check_invariants(self, n_limit: Optional[int] = None, exhaustive_q_cap: int = 10**4) -> dict:
        """Recurrence, best-approximation sandwich, beta identity.

        The ||q_n alpha|| sandwich is checked for n >= 1; at n = 0 it can
        fail legitimately when a_1 = 1, since beta_0 = alpha need not be the
        distance to the nearest integer.  n = 0 is covered by the exact
        identity beta_0 = alpha instead.
        """
        q, p, a = self.q, self.p, self.a
        upto = len(q) - 1 if n_limit is None else min(n_limit, len(q) - 1)
        rec_ok = all(
            q[k] == a[k] * q[k - 1] + q[k - 2] and p[k] == a[k] * p[k - 1] + p[k - 2]
            for k in range(2, upto + 1)
        )
        sandwich_ok = True
        beta_ok = abs(self.beta[0] - self.alpha) <= 1e-12
        for n in range(1, upto):
            dist = self.norm_dist(q[n])
            if not (1.0 / (q[n] + q[n + 1]) < dist <= (1 + 1e-12) / q[n + 1]):
                sandwich_ok = False
            if self.beta[n] > 0 and abs(self.beta[n] - dist) > 1e-9 * max(dist, 1e-300):
                beta_ok = False
        best_ok = self._check_best_approx(upto, exhaustive_q_cap)
        return {
            "recurrence": rec_ok,
            "sandwich": sandwich_ok,
            "beta_identity": beta_ok,
            "best_approx": best_ok,
        }

    def _check_best_approx(self, upto: int, q_cap: int) -> bool:
        """||k alpha|| >= ||q_{n-1} alpha|| for 1 <= k < q_n, exhaustively."""
        with mp.workprec(320):
            am = self.alpha_mp(320)
            ok = True
            for n in range(1, upto + 1):
                if self.q[n] > q_cap:
                    break
                floor = mp.frac(self.q[n - 1] * am)
                floor = min(floor, 1 - floor)
                x = mp.mpf(0)
                for _ in range(1, self.q[n]):
                    x = mp.frac(x + am)
                    if min(x, 1 - x) < floor * (1 - mp.mpf(1e-9)):
                        ok = False
                        break
                if not ok:
                    break
        return ok


def _convergents(a: list) -> tuple[list, list]:
    p = [0, 1]
    q = [1]
    if len(a) > 1:
        q.append(a[1])
    for k in range(2, len(a)):
        p.append(a[k] * p[k - 1] + p[k - 2])
        q.append(a[k] * q[k - 1] + q[k - 2])
    return p[: len(q)], q


def _expand_rational(frac: Fraction, n_max: int) -> CfExpansion:
    if not 0 < frac < 1:
        raise ValueError("alpha must lie in (0,1)")
    a = [0]
    tails = []
    x = frac
    while x != 0 and len(a) - 1 < n_max:
        inv = 1 / x
        ak = int(inv)
        a.append(ak)
        x = inv - ak
        tails.append(float(x))
    p, q = _convergents(a)
    beta, log_beta = [], []
    for n in range(len(q)):
        b = abs(q[n] * frac - p[n])
        beta.append(float(b))
        log_beta.append(
            -math.inf if b == 0 else safe_log_int(b.numerator) - safe_log_int(b.denominator)
        )
    return CfExpansion(float(frac), a, p, q, tails, beta, log_beta, rational=True)


def _expand_symbolic(label: str, n_max: int) -> CfExpansion:
    if label == "golden":
        quot, tail = 1, (math.sqrt(5) - 1) / 2
    elif label == "sqrt2m1":
        quot, tail = 2, math.sqrt(2) - 1
    else:
        raise ValueError(f"unknown symbolic frequency {label!r}")
    a = [0] + [quot] * n_max
    p, q = _convergents(a)
    # all Gauss-map tails equal alpha itself, so beta_n = alpha^(n+1) exactly
    log_tail = math.log1p(-1 + tail) if label != "golden" else math.log((math.sqrt(5) - 1) / 2)
    log_beta = [(n + 1) * log_tail for n in range(len(q))]
    beta = [math.exp(lb) if lb > -700 else 0.0 for lb in log_beta]
    return CfExpansion(tail, a, p, q, [tail] * n_max, beta, log_beta, label=label)


def expand(alpha, n_max: int = 40, prec: int = 256) -> CfExpansion:
    """Continued-fraction expansion of alpha in (0,1).

    `alpha` may be a float/mpf, a Fraction, a string "p/q" or a decimal
    string, or one of the symbolic tokens "golden", "sqrt2m1" (whose
    quotient streams are generated exactly to any depth).  Raises
    PrecisionExhausted if the Gauss-map tail drops below the working epsilon
    before n_max steps without terminating exactly.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if isinstance(alpha, str):
        tok = alpha.strip().lower()
        if tok in SYMBOLIC:
            return _expand_symbolic(tok, n_max)
        if "/" in tok:
            return _expand_rational(Fraction(tok), n_max)
        alpha = mp.mpf(alpha)
    if isinstance(alpha, Fraction):
        return _expand_rational(alpha, n_max)

    with mp.workprec(max(prec, 256)):
        x = mp.mpf(alpha)
        if not 0 < x < 1:
            raise ValueError("alpha must lie in (0,1)")
        eps = mp.mpf(2) ** (-mp.mp.prec + 16)
        a = [0]
        tails = []
        cur = x
        for _ in range(n_max):
            if cur == 0:
                break
            if cur < eps:
                raise PrecisionExhausted(
                    f"Gauss-map tail below working epsilon at step {len(a)}; "
                    f"raise prec above {mp.mp.prec} bits"
                )
            inv = 1 / cur
            ak = int(mp.floor(inv))
            cur = inv - ak
            a.append(ak)
            tails.append(float(cur))
        p, q = _convergents(a)
        beta, log_beta = [], []
        for n in range(len(q)):
            b = abs(q[n] * x - p[n])
            if b < eps and n < len(q) - 1:
                raise PrecisionExhausted(
                    f"beta_{n} below working epsilon before n_max; the input is "
                    f"rational at {mp.mp.prec} bits (use a 'p/q' string) or needs more prec"
                )
            beta.append(float(b))
            log_beta.append(float(mp.log(b)) if b > 0 else -math.inf)
        return CfExpansion(float(x), a, p, q, tails, beta, log_beta, _alpha_mp=x)


def is_cd_bridge(cf: CfExpansion, m: int, n: int, A: float, B: float, C: float) -> bool:
    """(q_m, q_n) forms a CD(A,B,C) bridge.

    Chain condition q_{i+1} <= q_i^A for m <= i <= n-1 plus the growth
    window q_m^B <= q_n <= q_m^C.  Requires 0 < A <= B <= C.
    """
    if not (0 < A <= B <= C):
        raise ValueError("need 0 < A <= B <= C")
    if not (0 <= m <= n < len(cf.q)):
        raise IndexError(f"bridge indices ({m},{n}) outside computed range")
    q = cf.q
    for i in range(m, n):
        if not pow_geq(q[i], A, q[i + 1]):
            return False
    return pow_leq(q[m], B, q[n]) and pow_geq(q[m], C, q[n])


@dataclass
class BridgeSelection:
    """Selected subsequence Q_k = q[idx[k]], with companion Qbar_k = q[idx[k]+1]."""

    cf: CfExpansion
    A: float
    idx: list
    exhausted: bool = False

    @property
    def Q(self) -> list:
        return [self.cf.q[i] for i in self.idx]

    @property
    def Qbar(self) -> list:
        return [self.cf.q[i + 1] for i in self.idx]

    @property
    def P(self) -> list:
        return [self.cf.p[i] for i in self.idx]

    def levels(self) -> int:
        return len(self.idx)

    def log_Qbar(self) -> list:
        return [safe_log_int(v) for v in self.Qbar]

    def check_invariants(self) -> dict:
        """Re-verify every claimed bridge and growth bound after the fact.

        With a finite expansion the forward half of the bridge disjunction at
        the last level may be unresolved; that is allowed only when the
        selection is flagged range-exhausted.
        """
        cf, A = self.cf, self.A
        q = cf.q
        idx = self.idx
        K = len(idx) - 1
        ok_q0 = q[idx[0]] == 1
        ok_growth = all(pow_geq(q[idx[k] + 1], A**4, q[idx[k + 1]]) for k in range(K))
        ok_lemma23 = all(pow_leq(q[idx[k] + 1], A, q[idx[k + 1] + 1]) for k in range(K))
        ok_dis = True
        pending = False
        for k in range(K + 1):
            if pow_leq(q[idx[k]], A, q[idx[k] + 1]):
                continue  # Qbar_k >= Q_k^A
            back = k >= 1 and is_cd_bridge(cf, idx[k - 1] + 1, idx[k], A, A, A**3)
            if not back:
                ok_dis = False
                continue
            if k < K:
                if not is_cd_bridge(cf, idx[k], idx[k + 1], A, A, A**3):
                    ok_dis = False
            else:
                pending = True  # forward bridge needs a deeper expansion
        if pending and not self.exhausted:
            ok_dis = False
        return {
            "Q0_is_1": ok_q0,
            "growth_cap": ok_growth,
            "disjunction": ok_dis,
            "qbar_growth": ok_lemma23,
            "pending_tail": pending,
        }

    def all_ok(self) -> bool:
        c = self.check_invariants()
        return c["Q0_is_1"] and c["growth_cap"] and c["disjunction"] and c["qbar_growth"]


def select_bridges(cf: CfExpansion, A: float = 25.0) -> BridgeSelection:
    """Greedy left-to-right CD-bridge selection with one-step backtracking.

    Starts at the last index with q = 1 and extends with the smallest
    admissible next denominator; admissibility is decided in log domain so
    that multi-thousand-digit convergents stay cheap.  Correctness is
    certified by `BridgeSelection.check_invariants`, not by construction.
    """
    if A < 1:
        raise ValueError("A must be >= 1")
    q = cf.q
    last = len(q) - 2  # need q[i+1] for Qbar
    if last < 0:
        raise SelectionFailed("expansion too shallow for any selection")
    lq = cf.log_q()
    tol = 1e-9

    def route1(i):  # q_{i+1} >= q_i^A
        return lq[i + 1] >= A * lq[i] - tol

    def chain_ok(i):  # q_{i+1} <= q_i^A
        return lq[i + 1] <= A * lq[i] + tol * max(1.0, A * lq[i])

    # first chain break at or after i
    nxt_break = [last + 1] * (last + 2)
    for i in range(last, -1, -1):
        nxt_break[i] = i if not chain_ok(i) else nxt_break[i + 1]

    def bridge(m, n):  # CD(A, A, A^3) in log domain
        if m > n:
            return False
        if nxt_break[m] < n:
            return False
        return (A * lq[m] - tol <= lq[n] + tol) and (lq[n] <= A**3 * lq[m] + tol * max(1.0, A**3 * lq[m]))

    n0 = max(i for i in range(last + 1) if q[i] == 1)
    idx = [n0]
    owes = [False]  # level k chose route 2 and still owes its forward bridge
    tried: list[set] = [set()]
    best: list = list(idx)
    pops = 0
    while pops < 200:
        k = len(idx) - 1
        cur = idx[k]
        found = None
        for m in range(cur + 1, last + 1):
            if lq[m] > (A**4) * lq[cur + 1] + tol * max(1.0, (A**4) * lq[cur + 1]):
                break  # growth cap, monotone in m
            if m in tried[k]:
                continue
            if owes[k] and not bridge(cur, m):
                continue
            if route1(m) or bridge(cur + 1, m):
                found = m
                break
        if found is None:
            if len(idx) > len(best):
                best = list(idx)  # longest selection so far; tail may stay pending
            if owes[k] and len(idx) > 1:
                # a shorter Q_k might leave room for its forward bridge in range
                bad = idx.pop()
                owes.pop()
                tried.pop()
                tried[-1].add(bad)
                pops += 1
                continue
            break
        idx.append(found)
        owes.append(not route1(found))
        tried.append(set())

    sel = BridgeSelection(cf, A, best, exhausted=True)
    if not sel.all_ok():
        raise SelectionFailed(
            f"greedy selection {idx} fails invariant check: {sel.check_invariants()}"
        )
    return sel


def check_diophantine(
    cf: CfExpansion,
    mode: str,
    K: int,
    v: float = 0.0,
    tau: float = 0.0,
    rho: float = 0.0,
    gamma: float = 0.0,
    prec: int = 256,
) -> dict:
    """Exhaustive Diophantine scan up to cutoff K.

    mode "frequency": ||k alpha|| > v |k|^-tau for 0 < |k| <= K.
    mode "rotation":  ||k alpha +- 2 rho|| >= gamma <k>^-tau for |k| <= K,
    <k> = max(1, |k|).  Returns the minimizing k and its margin.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    worst_k, worst_margin = None, math.inf
    holds = True
    with mp.workprec(prec):
        am = cf.alpha_mp(prec)
        if mode == "frequency":
            x = mp.mpf(0)
            for k in range(1, K + 1):
                x = mp.frac(x + am)
                dist = float(min(x, 1 - x))
                margin = dist - v / k**tau
                if margin < worst_margin:
                    worst_k, worst_margin = k, margin
                if margin <= 0:
                    holds = False
        elif mode == "rotation":
            if not 0 <= rho < 0.5:
                raise ValueError("rotation mode needs rho in [0, 1/2)")
            for k in range(0, K + 1):
                kk = max(1, k)
                for sgn in (1, -1):
                    x = mp.frac(k * am + sgn * 2 * rho)
                    dist = float(min(x, 1 - x))
                    margin = dist - gamma / kk**tau
                    if margin < worst_margin:
                        worst_k, worst_margin = k, margin
                    if margin < 0:
                        holds = False
                    if k == 0:
                        break  # both signs coincide at k = 0
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return {"holds": holds, "worst": (worst_k, worst_margin)}
