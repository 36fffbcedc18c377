"""Seeded inputs, the routing-attention invariant checks and the benchmark.

Library modules stay free of randomness; everything seeded lives here.
"""
from __future__ import annotations

import hashlib
import statistics
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bra import (
    BRAConfig,
    BRAParams,
    FlopReport,
    bra_forward,
    dense_attention_forward,
    flops,
    patchify,
    routed_attention,
    unpatchify,
)


def random_params(channels: int, seed: int, zero_lce: bool = False) -> BRAParams:
    """Uniform weights in [-0.1, 0.1] from a seeded generator."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(-0.1, 0.1, size=(channels, 3 * channels))
    lce = rng.uniform(-0.1, 0.1, size=(channels, 3, 3))
    return BRAParams(w_qkv=w, lce_kernels=np.zeros_like(lce) if zero_lce else lce)


def random_feature_map(height: int, width: int, channels: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(height, width, channels))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_oracle_equivalence(fault: bool = False, tol: float = 1e-9) -> CheckResult:
    """k = S^2 routing must reproduce dense attention."""
    worst = 0.0
    seed = 0
    for hw in (4, 8, 16):
        for c in (2, 4):
            for s in (1, 2, 4):
                if hw % s:
                    continue
                seed += 1
                params = random_params(c, seed, zero_lce=True)
                x = random_feature_map(hw, hw, c, 1000 + seed)
                cfg = BRAConfig(s=s, k=s * s)
                out, _ = bra_forward(x, cfg, params, _fault=fault)
                ref = dense_attention_forward(x, params, cfg.scale_qk)
                worst = max(worst, float(np.max(np.abs(out - ref))))
    return CheckResult("oracle_equivalence", worst <= tol, f"max |diff| = {worst:.3e}")


def sparsity_cases(n: int = 20):
    """Seeded (H, C, S, k) cases with k < S^2."""
    rng = np.random.default_rng(2024)
    shapes = [(8, 2, 2), (8, 4, 2), (8, 2, 4), (16, 2, 4), (16, 4, 2), (8, 4, 4)]
    for i in range(n):
        hw, c, s = shapes[i % len(shapes)]
        yield hw, c, s, int(rng.integers(1, s * s)), 500 + i


def check_sparsity_law(fault: bool = False, tol: float = 1e-12, delta: float = 1e-4,
                       n_cases: int = 20) -> CheckResult:
    """Perturbing a token outside a region's routed set leaves that region unchanged."""
    worst = 0.0
    checked = 0
    reroutes = 0
    for hw, c, s, k, seed in sparsity_cases(n_cases):
        params = random_params(c, seed)
        tokens = patchify(random_feature_map(hw, hw, c, seed + 7), s)
        base, trace, _, _ = routed_attention(tokens, params.w_qkv, k, _fault=fault)
        for j in range(s * s):
            for t in range(tokens.shape[1]):
                bumped = tokens.copy()
                bumped[j, t] += delta
                out, tr2, _, _ = routed_attention(bumped, params.w_qkv, k, _fault=fault)
                for r in range(s * s):
                    if j in trace.i_r[r]:
                        continue
                    if not np.array_equal(trace.i_r[r], tr2.i_r[r]):
                        reroutes += 1
                        continue
                    diff = np.abs(out[r] - base[r])
                    if r == j:
                        # the bumped token's own query is a legitimate dependency
                        diff = np.delete(diff, t, axis=0)
                    if diff.size:
                        worst = max(worst, float(diff.max()))
                        checked += 1
    ok = worst <= tol and reroutes == 0 and checked > 0
    return CheckResult("sparsity_law", ok,
                       f"{checked} region checks, {reroutes} reroutes, max |diff| = {worst:.3e}")


def check_permutation_equivariance(fault: bool = False, tol: float = 1e-12) -> CheckResult:
    """Shuffling tiles shuffles outputs, adjacency and routing the same way."""
    worst = 0.0
    routing_ok = True
    for seed, (hw, c, s, k) in enumerate([(8, 4, 2, 2), (8, 2, 4, 5), (16, 4, 4, 3)]):
        params = random_params(c, 300 + seed, zero_lce=True)
        cfg = BRAConfig(s=s, k=k)
        x = random_feature_map(hw, hw, c, 400 + seed)
        perm = np.random.default_rng(seed).permutation(s * s)
        inv = np.argsort(perm)
        x_p = unpatchify(patchify(x, s)[perm], s, hw, hw)
        out, tr = bra_forward(x, cfg, params, _fault=fault)
        out_p, tr_p = bra_forward(x_p, cfg, params, _fault=fault)
        expected = patchify(out, s)[perm]
        worst = max(worst, float(np.max(np.abs(patchify(out_p, s) - expected))))
        worst = max(worst, float(np.max(np.abs(tr_p.a_r - tr.a_r[np.ix_(perm, perm)]))))
        routing_ok &= bool(np.array_equal(tr_p.i_r, inv[tr.i_r[perm]]))
    return CheckResult("permutation_equivariance", worst <= tol and routing_ok,
                       f"max |diff| = {worst:.3e}, routing {'consistent' if routing_ok else 'MISMATCH'}")


def check_attention_rows(fault: bool = False, tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    for seed, (hw, c, s, k) in enumerate([(8, 4, 2, 1), (8, 2, 4, 7), (16, 4, 4, 16)]):
        params = random_params(c, 600 + seed)
        tokens = patchify(random_feature_map(hw, hw, c, 700 + seed), s)
        _, _, attn, _ = routed_attention(tokens, params.w_qkv, k, _fault=fault)
        worst = max(worst, float(np.max(np.abs(attn.sum(axis=-1) - 1.0))))
    return CheckResult("attention_rows", worst <= tol, f"max |row sum - 1| = {worst:.3e}")


def check_flop_ratio(fault: bool = False) -> CheckResult:
    bad = []
    for s in (1, 2, 4, 8):
        for k in range(1, s * s + 1):
            rep = flops(BRAConfig(s=s, k=k), 8 * s, 8 * s, 4)
            if rep.ratio * s * s != k:
                bad.append((s, k))
    return CheckResult("flop_ratio", not bad, "exact" if not bad else f"mismatch at {bad}")


CHECKS: list[Callable[..., CheckResult]] = [
    check_oracle_equivalence,
    check_sparsity_law,
    check_permutation_equivariance,
    check_attention_rows,
    check_flop_ratio,
]


def run_checks(fault: bool = False) -> list[CheckResult]:
    return [check(fault=fault) for check in CHECKS]


@dataclass
class BenchReport:
    height: int
    width: int
    channels: int
    s: int
    k: int
    macs: FlopReport
    output_sha256: str
    times: list[float]

    @property
    def ratio(self):
        return self.macs.ratio

    def deterministic_lines(self) -> list[str]:
        m = self.macs
        return [
            f"config: H={self.height} W={self.width} C={self.channels} S={self.s} k={self.k}",
            f"macs: qkv={m.qkv} pooling={m.pooling} adjacency={m.adjacency} "
            f"token_to_token={m.token_to_token} lce={m.lce} total={m.total}",
            f"dense_token_to_token: {m.dense_token_to_token}",
            f"ratio: {m.ratio} = {float(m.ratio):.6g}",
            f"output_sha256: {self.output_sha256}",
        ]

    def timing_line(self) -> str:
        mean = statistics.fmean(self.times) * 1e3
        std = statistics.pstdev(self.times) * 1e3 if len(self.times) > 1 else 0.0
        return f"timing: mean_ms={mean:.3f} std_ms={std:.3f} iters={len(self.times)}"


def bench(height: int, width: int, channels: int, s: int, k: int, iters: int = 5,
          seed: int = 0) -> BenchReport:
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    cfg = BRAConfig(s=s, k=k)
    cfg.check(height, width)
    params = random_params(channels, seed)
    x = random_feature_map(height, width, channels, seed + 1)
    times = []
    out = None
    for _ in range(iters):
        t0 = time.perf_counter()
        out, _ = bra_forward(x, cfg, params)
        times.append(time.perf_counter() - t0)
    digest = hashlib.sha256(np.ascontiguousarray(out).tobytes()).hexdigest()
    return BenchReport(height, width, channels, s, k, flops(cfg, height, width, channels),
                       digest, times)
