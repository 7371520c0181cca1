"""Time the batched horizon evaluator: numba kernel against the numpy twin.

    python benchmarks/bench_kernels.py --batch 12 --horizon 3 --repeat 200

Both backends are imported side by side, so the env flag is not needed here.
"""
import argparse
import time

import numpy as np

from aris_empc import _kernels
from aris_empc.empc import _Evaluator
from aris_empc.flight import State
from aris_empc.scenario import ScenarioConfig


def _args(config, users, batch, horizon, seed):
    ev = _Evaluator(config, users)
    rng = np.random.default_rng(seed)
    controls = rng.normal(0.0, 2.0, (batch, horizon, 2))
    return (State.initial(config).as_vector(), controls, config.dt, ev.users_xy, config.altitude, ev.psi,
            ev.unit_phase, ev.coef, ev.bw_user, config.energy_c1, config.energy_c2, config.gravity,
            config.uav_mass)


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--batch", type=int, nargs="+", default=[1, 12, 64, 256])
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--repeat", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    config = ScenarioConfig()
    users = config.users()
    backends = [("numpy", _kernels.evaluate_batch_numpy)]
    if _kernels.evaluate_batch_numba is not None:
        backends.append(("numba", _kernels.evaluate_batch_numba))
    else:
        print("numba unavailable or disabled; timing numpy only")

    print(f"N={config.num_ris_elements} K={len(users)} horizon={args.horizon} repeat={args.repeat}")
    print(f"{'batch':>6} " + " ".join(f"{name + ' best':>13} {name + ' med':>13}" for name, _ in backends)
          + ("   speedup" if len(backends) == 2 else ""))
    for batch in args.batch:
        inputs = _args(config, users, batch, args.horizon, args.seed)
        results = [best_of(fn, inputs, args.repeat) for _, fn in backends]
        if len(backends) == 2:
            ref = _kernels.evaluate_batch_numpy(*inputs)
            got = _kernels.evaluate_batch_numba(*inputs)
            assert all(np.allclose(a, b, rtol=1e-11, atol=1e-9) for a, b in zip(ref, got)), "backends disagree"
        cells = " ".join(f"{b * 1e6:11.1f}us {m * 1e6:11.1f}us" for b, m in results)
        speed = f"  {results[0][0] / results[1][0]:7.2f}x" if len(results) == 2 else ""
        print(f"{batch:>6} {cells}{speed}")


if __name__ == "__main__":
    main()
