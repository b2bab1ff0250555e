"""
Latency against slice count
===========================

With a 100 ms rotation and 16 ms of full-scan inference, the whole-scan
detector answers at worst 116 ms after a measurement.  Slicing the rotation
shortens both the wait for data and the per-slice inference, until the fixed
per-slice overhead takes over.
"""

from streamdet.latency import LatencyModel, latency_report

model = LatencyModel(scan_period_ms=100.0, full_inference_ms=16.0, per_slice_overhead_ms=2.5)
rep = latency_report(model, [1, 2, 4, 8, 16, 32, 64, 128], with_state=True)

print(f"{'n':>4} {'worst ms':>9} {'mean ms':>8} {'peak FLOPS':>11} {'speedup':>8}")
for r in rep.rows:
    print(f"{r.n:4d} {r.worst_case_ms:9.2f} {r.expected_ms:8.2f} {r.flops_fraction:11.4f} {r.speedup:8.2f}")

# the returns diminish: past n=32 the 2.5 ms overhead is most of the latency
