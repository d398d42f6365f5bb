#!/usr/bin/env python3
# Offline planning walkthrough: co-activation statistics, NMF clustering,
# theme ordering, and budgeted combination selection on the bundled corpus.

import tempfile
from pathlib import Path

from agentaccel import build_coactivation, build_plan, fixtures, pipeline
from agentaccel.simulator import coverage_curve, coverage_saturation_budget, geometry_presets

workdir = Path(tempfile.mkdtemp(prefix="agentaccel-demo-"))
paths = fixtures.write_fixtures(workdir)
bundle = pipeline.load_bundle(
    paths["registry"], paths["train"], paths["test"], paths["examples"], paths["vocab"]
)
print(f"corpus: {len(bundle.registry)} tools, {len(bundle.train)} training samples")

matrix = build_coactivation(bundle.train, bundle.registry)
print("\nhow likely is tool_y given tool_x was activated?")
anchor = "get_zoom_link"
for other in ("get_email_address", "compose_new_email", "get_phone_number"):
    print(f"  P({other} | {anchor}) = {matrix.conditional(other, anchor):.2f}")

plan = build_plan(matrix, bundle.registry, bundle.examples, bundle.train,
                  budget=15, rank=8, seed=fixtures.DEFAULT_SEED)
print("\nclusters in their fixed prompt order (theme groups adjacent):")
for cluster in plan.clusters:
    print(f"  [{cluster.id}] {cluster.theme:9s} {', '.join(cluster.tool_ids)}")

print("\ncached cluster combinations, in greedy pick order:")
for combo in plan.cached_combinations:
    print(f"  {'-'.join(str(c) for c in combo)}")

sequences = [plan.activation_sequence(s.gt_tools) for s in bundle.train]
cluster_tokens = {c.id: len(c.example_tokens) for c in plan.clusters}
saturation = coverage_saturation_budget(sequences)
points = coverage_curve(sequences, cluster_tokens, range(saturation + 1),
                        geometry_presets()["7b-class"], static_prefix_tokens=2641)
print("\ncoverage vs cache budget (token-weighted) and storage cost:")
for p in points:
    bar = "#" * round(p.coverage_fraction * 40)
    print(f"  budget {p.budget:2d}  {p.coverage_fraction:6.1%}  {p.storage_bytes / 1e9:5.2f} GB  {bar}")
