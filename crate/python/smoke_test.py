#!/usr/bin/env python3
"""Smoke test for the isacsim_py extension module.

Builds nothing itself: expects `cargo build -p isacsim-py` (or --release) to
have produced the cdylib, stages it under an importable name, and exercises
the exposed surface end to end.

Run from the repository root:

    cargo build -p isacsim-py
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile


def stage_module() -> str:
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libisacsim_py.so", "libisacsim_py.dylib", "isacsim_py.dll")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("isacsim_py cdylib not found; run `cargo build -p isacsim-py` first")
    stage = tempfile.mkdtemp(prefix="isacsim-py-")
    suffix = ".pyd" if built.endswith(".dll") else ".so"
    shutil.copy2(built, os.path.join(stage, "isacsim_py" + suffix))
    return stage


sys.path.insert(0, stage_module())

import isacsim_py as isac  # noqa: E402


def check(name, condition, detail=""):
    status = "ok" if condition else "FAIL"
    print(f"  [{status}] {name} {detail}")
    if not condition:
        sys.exit(1)


print("isacsim_py smoke test")

# Array layer.
sv = isac.steering_vector(0.0, 0.0, 2, 2)
check("broadside 2x2 steering", all(abs(re - 0.5) < 1e-12 and abs(im) < 1e-12 for re, im in sv))
norm = math.sqrt(sum(re * re + im * im for re, im in isac.steering_vector(0.4, -0.1, 8, 8)))
check("steering vector unit norm", abs(norm - 1.0) < 1e-12, f"norm={norm:.12f}")
check("array gain 64x64", abs(isac.array_gain_factor(64, 64) - 64.0) < 1e-12)
check("aligned beam gain", abs(isac.beam_gain(0.3, -0.1, 0.3, -0.1, 8, 8) - 1.0) < 1e-9)

# NR layer.
num = isac.numerology(3)
check("mu=3 spacing", abs(num["subcarrier_spacing_hz"] - 120e3) < 1e-6)
oh, rs_red, train_red = isac.overhead_metrics("isac")
check("RS reduction 43.24%", abs(rs_red - 32.0 / 74.0) < 1e-4, f"rs={rs_red:.5f}")
check("training reduction 75%", abs(train_red - 0.75) < 1e-12)
tput = isac.throughput_mbps(4, 208, 8.929e-6, 0.0, 0.0)
check("throughput reference", abs(tput - 1118.2) < 0.2, f"tput={tput:.1f}")
check("frame plan JSON", '"scheme"' in isac.frame_plan_json("conventional", 3))

# Radar layer.
check("noise floor", abs(isac.thermal_noise_floor_dbm(300e6) + 89.23) < 0.01)
check("Qinv(0.01)", abs(isac.normal_tail_inv(0.01) - 2.3263) < 1e-3)
peak = isac.golden_section_max(lambda x: -((x - 0.37) ** 2), 0.0, 1.0, 1e-6)
check("golden-section peak", abs(peak - 0.37) < 1e-4, f"peak={peak:.6f}")
check("delay->range", abs(isac.delay_to_range(2 * 47.69 / 299792458.0) - 47.69) < 1e-9)

# Tracker.
tracker = isac.Tracker(0.5586, 47.17, 20.0)
out = tracker.step(0.5585, 47.16, 20.0, 1.1e-4)
check("tracker step keys", set(out) == {"posterior", "one_ahead", "two_ahead"})
az, rng_, spd, refl = tracker.state()
check("tracker state sane", abs(az - 0.5586) < 0.01 and abs(rng_ - 47.17) < 0.5)

# Protocol runs (short).
summary = isac.run_connected("isac", 20.0, 1, 400)
check(
    "connected summary",
    summary["slots"] == 400 and summary["rmse_azimuth"] < 0.05,
    f"rmse_az={summary['rmse_azimuth']:.4f} tput={summary['mean_throughput_mbps']:.1f}",
)
ia = isac.run_initial_access("isac", 25.0, 2)
check("initial access", ia["latency_ms"] >= 0.0 and ia["angle_error"] < 0.5,
      f"latency={ia['latency_ms']:.3f}ms err={ia['angle_error']:.4f}rad")
bfr = isac.run_bfr("isac", 20.0, 3, "sub6_fallback")
check(
    "bfr detection latency",
    bfr["detected"] and 1.5 <= bfr["detection_latency_ms"] <= 2.5,
    f"latency={bfr['detection_latency_ms']}ms",
)

print("all smoke checks passed")
