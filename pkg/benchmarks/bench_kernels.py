"""Compare the compiled kernels with the pure-Python fallbacks.

    python benchmarks/bench_kernels.py [--instances 40000] [--repeat 5]

Times the Part 21 tokenizer on one large generated file and the CSR
propagation ``Â·H`` on that file's graph, and checks both backends agree.
"""
import argparse
import statistics
import time

import numpy as np

from stepgraph import _fallback
from stepgraph.gnn.adjacency import normalize_adjacency
from stepgraph.graph import build_graph
from stepgraph.step import loads
from stepgraph.synthetic import StepBuilder, TEMPLATES, _product_header

try:
    from stepgraph import _speedups
except ImportError:
    _speedups = None


def big_step_file(min_instances, seed=0):
    rng = np.random.default_rng(seed)
    b = StepBuilder()
    _product_header(b, "bench")
    names = sorted(TEMPLATES)
    k = 0
    while b.next_id <= min_instances:
        TEMPLATES[names[k % len(names)]](b, rng)
        k += 1
    body = "\n".join(["ISO-10303-21;", "HEADER;", "FILE_SCHEMA(('AUTOMOTIVE_DESIGN'));", "ENDSEC;", "DATA;"]
                     + b.lines + ["ENDSEC;", "END-ISO-10303-21;", ""])
    return body.encode("ascii")


def bench(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instances", type=int, default=40000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--width", type=int, default=64, help="columns of H")
    args = ap.parse_args()

    data = big_step_file(args.instances)
    graph = build_graph(loads(data))
    adj = normalize_adjacency(graph)
    h = np.random.default_rng(1).standard_normal((graph.num_nodes, args.width))
    print(f"file: {len(data) / 1e6:.1f} MB, {graph.num_nodes} instances, {graph.num_edges} references, "
          f"{len(adj.data)} nonzeros in Â")

    backends = [("python", _fallback)]
    if _speedups is not None:
        backends.insert(0, ("compiled", _speedups))
    else:
        print("compiled extension not built; only the fallback is timed")

    results = {}
    for name, mod in backends:
        toks = mod.tokenize_bytes(data)
        prod = mod.csr_matmul(adj.indptr, adj.indices, adj.data, h)
        results[name] = (toks, prod)
        t_tok = bench(lambda: mod.tokenize_bytes(data), args.repeat)
        t_mm = bench(lambda: mod.csr_matmul(adj.indptr, adj.indices, adj.data, h), args.repeat)
        print(f"{name:>9}: tokenize {t_tok * 1e3:9.1f} ms ({len(data) / t_tok / 1e6:6.1f} MB/s)   "
              f"csr_matmul {t_mm * 1e3:8.2f} ms")
    if len(results) == 2:
        (ta, pa), (tb, pb) = results["compiled"], results["python"]
        print(f"tokens identical: {ta == tb}; products bit-identical: {np.array_equal(pa, pb)}")


if __name__ == "__main__":
    main()
