#!/usr/bin/env python3
"""Generate the bundled 30-DAG IoT workload file.

Shapes follow the workload characterisation the experiments assume: each
DAG unrolls into 2-7 linear pipelines (shared two-task root, one long
analytics branch that forms the critical path, short side branches), task
base times come from 8 synthetic types spread over 10-60 base-seconds and
mapped to vertices with a centred Gaussian over the type index, and output
sizes are uniform in 500-1500 KB.

Run from the repo root:  python tools/gen_dags.py
"""

import json
import random
from pathlib import Path

SEED = 20240915
N_DAGS = 30
OUT = Path(__file__).resolve().parent.parent / "src" / "cofeesim" / "presets" / "dags_iot30.json"

# 8 task types, geometric spacing from 10 to 60 base-seconds (right-skewed
# mix: most IoT pipeline stages are light, a few are heavy analytics)
TYPE_TIMES = [round(10.0 * 6.0 ** (k / 7.0), 3) for k in range(8)]


def pick_type(rng):
    idx = round(rng.gauss(3.5, 1.0))
    return TYPE_TIMES[min(7, max(0, idx))]


def gen_dag(rng, dag_id):
    pipelines = rng.randint(2, 7)
    root_len = 2
    long_len = rng.randint(4, 6)
    tasks = {}
    edges = []
    counter = 0

    def new_task():
        nonlocal counter
        tid = f"t{counter:02d}"
        counter += 1
        tasks[tid] = {
            "base_time": pick_type(rng),
            "out_kb": rng.randint(500, 1500),
        }
        return tid

    root_chain = [new_task() for _ in range(root_len)]
    for a, b in zip(root_chain, root_chain[1:]):
        edges.append([a, b])
    fork = root_chain[-1]

    branch_lens = [long_len] + [rng.randint(1, 3) for _ in range(pipelines - 1)]
    for blen in branch_lens:
        prev = fork
        for _ in range(blen):
            t = new_task()
            edges.append([prev, t])
            prev = t

    return {"id": dag_id, "tasks": tasks, "edges": edges,
            "filter": {"kv": ["app", dag_id]}}


def main():
    rng = random.Random(SEED)
    dags = [gen_dag(rng, f"iot{i:02d}") for i in range(N_DAGS)]

    # quick characterisation printed for the record
    cps = []
    totals = []
    pipes = []
    for d in dags:
        succ = {}
        for a, b in d["edges"]:
            succ.setdefault(a, []).append(b)
        theta = {t: v["base_time"] for t, v in d["tasks"].items()}
        roots = set(theta) - {b for _, b in d["edges"]}
        (root,) = roots

        def longest(t):
            nxt = succ.get(t, [])
            return theta[t] + (max(longest(s) for s in nxt) if nxt else 0.0)

        def paths(t):
            nxt = succ.get(t, [])
            if not nxt:
                return [[t]]
            return [[t] + p for s in nxt for p in paths(s)]

        cps.append(longest(root))
        chains = paths(root)
        pipes.append(len(chains))
        totals.append(sum(theta[t] for c in chains for t in c))

    cps.sort()
    totals.sort()
    print(f"pipelines/DAG: min {min(pipes)} max {max(pipes)}")
    print(f"critical path: median {cps[len(cps)//2]:.1f}s  range {cps[0]:.1f}-{cps[-1]:.1f}")
    print(f"unrolled work: median {totals[len(totals)//2]:.1f}s  mean {sum(totals)/len(totals):.1f}")

    OUT.write_text(json.dumps({"dags": dags}, indent=1) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
