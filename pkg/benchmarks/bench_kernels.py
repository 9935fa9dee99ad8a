"""Compare the numpy and numba kernel lanes on representative workloads.

Run:  python3 benchmarks/bench_kernels.py [--repeats N] [--scale small|full]

Each kernel family is timed in both lanes on identical inputs (best of N
runs after a warm-up call so numba JIT compilation is excluded), and the
table reports the numpy/numba speedup.  The lanes must also agree
numerically; the script asserts allclose before printing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ksaqa import kernels
from ksaqa.kernels import adam_ops, crf, gru, transe_ops


def _time(fn, repeats: int) -> float:
    fn()  # warm-up (JIT compile / cache load)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _bench(name, fn, check, repeats):
    """Time ``fn`` in both lanes and verify ``check(out_numpy, out_numba)``."""
    rows = {}
    outs = {}
    for lane in ("numpy", "numba"):
        try:
            kernels.set_backend(lane)
        except ValueError:
            rows[lane] = None
            continue
        if kernels.active_backend() != lane:
            rows[lane] = None  # numba unavailable; auto fell back
            continue
        outs[lane] = fn()
        rows[lane] = _time(fn, repeats)
    kernels.set_backend("auto")
    if len(outs) == 2 and not check(outs["numpy"], outs["numba"]):
        raise AssertionError(f"{name}: lanes disagree")
    return name, rows.get("numpy"), rows.get("numba")


def _allclose(a, b):
    fa = a if isinstance(a, (list, tuple)) else (a,)
    fb = b if isinstance(b, (list, tuple)) else (b,)
    return all(np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in zip(fa, fb))


def build_benchmarks(scale: str):
    rng = np.random.default_rng(0)
    if scale == "full":
        m, d_in, h = 40, 500, 300
        n_tags, crf_m = 2, 36
        n_params = 2_000_000
        batch, dim, ne = 128, 300, 20_000
    else:
        m, d_in, h = 20, 64, 48
        n_tags, crf_m = 2, 20
        n_params = 200_000
        batch, dim, ne = 64, 50, 2_000

    benches = []

    x = rng.standard_normal((m, d_in))
    h0 = np.zeros(h)
    wx = rng.standard_normal((d_in, 3 * h)) * 0.1
    wh = rng.standard_normal((h, 3 * h)) * 0.1
    b = np.zeros(3 * h)
    benches.append(("gru_forward", lambda: gru.gru_forward(x, h0, wx, wh, b)[0],
                    _allclose))
    hs, zs, rs, ns, hwn = gru.gru_forward(x, h0, wx, wh, b)
    g = rng.standard_normal((m, h))
    benches.append(("gru_backward",
                    lambda: gru.gru_backward(g, x, wx, wh, hs, zs, rs, ns, hwn),
                    _allclose))

    em = rng.standard_normal((crf_m, n_tags))
    tr = rng.standard_normal((n_tags, n_tags))
    st = rng.standard_normal(n_tags)
    en = rng.standard_normal(n_tags)
    benches.append(("crf_logz", lambda: crf.crf_logz(em, tr, st, en)[0],
                    _allclose))
    logz, alpha = crf.crf_logz(em, tr, st, en)
    benches.append(("crf_marginals",
                    lambda: crf.crf_marginals(em, tr, st, en, alpha, logz),
                    _allclose))
    benches.append(("crf_viterbi", lambda: crf.crf_viterbi(em, tr, st, en),
                    lambda a, b2: np.array_equal(a, b2)))

    p = rng.standard_normal(n_params)
    gr = rng.standard_normal(n_params)
    mm = np.zeros(n_params)
    vv = np.zeros(n_params)

    def adam_run():
        pc, mc, vc = p.copy(), mm.copy(), vv.copy()
        adam_ops.adam_update(pc, gr, mc, vc, 1, 0.001, 0.9, 0.999, 1e-8)
        return pc

    benches.append(("adam_update", adam_run, _allclose))

    ent = rng.standard_normal((ne, dim))
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)
    rel = rng.standard_normal((20, dim))
    hh = rng.integers(0, ne, batch)
    rr = rng.integers(0, 20, batch)
    tt = rng.integers(0, ne, batch)
    nh = hh.copy()
    nt = rng.integers(0, ne, batch)
    valid = np.ones(batch, dtype=np.bool_)

    def transe_run():
        ec, rc = ent.copy(), rel.copy()
        loss = transe_ops.transe_batch(ec, rc, hh, rr, tt, nh, nt, valid,
                                       True, 0.01, 1.0)
        return loss, ec, rc

    benches.append(("transe_batch", transe_run, _allclose))
    return benches


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--scale", choices=("small", "full"), default="small")
    args = ap.parse_args()

    if not kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy lane will be timed")

    print(f"scale={args.scale}  repeats={args.repeats} (best run kept)")
    print(f"{'kernel':<14} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, fn, check in build_benchmarks(args.scale):
        name, t_np, t_nb = _bench(name, fn, check, args.repeats)
        np_ms = f"{t_np * 1e3:10.3f}" if t_np else "n/a"
        nb_ms = f"{t_nb * 1e3:10.3f}" if t_nb else "       n/a"
        speed = f"{t_np / t_nb:8.2f}x" if (t_np and t_nb) else "      n/a"
        print(f"{name:<14} {np_ms:>12} {nb_ms:>12} {speed:>9}")


if __name__ == "__main__":
    main()
