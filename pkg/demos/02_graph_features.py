"""How much do transaction-graph features add on top of profiles?

Compares profiles-only against degrees, GuiltyWalker and both, then prints
the recall gain over a few operating points.
"""
from amltriage.evaluation import feature_set_comparison
from amltriage.graph import WindowConfig
from amltriage.pipeline import Dataset, base_frame
from amltriage.synth import SynthConfig, synthesize
from amltriage.walker import WalkConfig

cfg = SynthConfig(seed=7, n_accounts=1500, n_days=70, n_rings=8, ring_span_days=25, ring_activity_days=8, background_rate=0.08)
ds = Dataset.from_transactions(synthesize(cfg)[0])
base, _ = base_frame(ds, seed=7)

report = feature_set_comparison(ds, base, seed=7, window=WindowConfig(60, 60), walk=WalkConfig(num_walks=50, max_hops=10, seed=7))
for key, value in sorted(report.metrics.items()):
    print(f"{key:45s} {value:.3f}")

print("\nrecall gain over profiles-only (p.p.)")
curves = report.delta_curves
print("fpr    " + "  ".join(f"{n:>10s}" for n in curves))
for i, fpr in enumerate(curves["gw"]["fpr"]):
    if round(fpr * 100) % 5 == 0:
        print(f"{fpr:.2f}   " + "  ".join(f"{100 * curves[n]['delta'][i]:10.1f}" for n in curves))
