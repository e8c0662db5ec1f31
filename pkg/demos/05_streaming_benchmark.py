"""Why stream? Per-step cost of the incremental update is flat in path
length, while recomputing the signature from scratch grows linearly.

Run: python demos/05_streaming_benchmark.py
"""

from sigstream.bench import run_bench

report = run_bench(dims=4, depth=2, steps=10000, seed=0)
print("\n".join(report.lines()))
print()
ratio = report.stream_ratio
print(f"streaming per-step latency late/early ratio: {ratio:.2f} (flat ~ 1.0)")
print(f"batch recomputation slope: {report.batch_slope_us_per_step:.2f} us per extra step (> 0)")
