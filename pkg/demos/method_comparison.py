"""Score both collision formulations on a slice of the parallel-parking grid.

Three starts from the parallel-parking scenario, each driven to the curb
with both formulations. Completion times are scored against the
per-episode best, so a method is only penalized where the other one was
genuinely faster (or where it failed outright).
"""

import numpy as np

from polympc import make_scenarios, reference_times, run_batch, sct

scenario = make_scenarios()["parallel_parking"]
episodes = [0, 16, 33]

batches = {
    method: run_batch(scenario, method, episodes=episodes)
    for method in ("svm", "msde")
}
refs = reference_times(*[b.episodes for b in batches.values()])

print(f"scenario: {scenario.name}, starts: {episodes}")
print(f"{'method':>6s} {'success':>8s} {'score':>6s} {'avg ms':>7s}")
for method, batch in batches.items():
    score = sct(batch.episodes, refs)
    avg_ms = 1e3 * np.mean(np.concatenate([ep.solve_times for ep in batch.episodes]))
    print(f"{method:>6s} {batch.success_rate:8.2f} {score:6.3f} {avg_ms:7.1f}")

for idx, ref in zip(episodes, refs):
    per_method = {
        m: b.episodes[episodes.index(idx)].completion_time
        for m, b in batches.items()
    }
    times = ", ".join(f"{m} {t:.1f} s" for m, t in per_method.items())
    print(f"episode {idx}: {times}")
