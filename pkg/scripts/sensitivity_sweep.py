"""Trade-cost and risk-aversion sweep for the regime MVO strategies.

    python scripts/sensitivity_sweep.py runs/synthetic/stage.pkl [--seed 1] [--years 20]

Reuses the regime stage pickled by synthetic_end_to_end.py (same seed and length)
and prints one metric row per setting.
"""

import argparse
import pickle

import pandas as pd

from regimealloc import allocation, backtest, pipeline, synthgen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("stage")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--years", type=float, default=20.0)
    ap.add_argument("--cost", type=float, default=0.0005)
    args = ap.parse_args()

    uni = synthgen.generate(synthgen.RegimeProcessSpec(T=int(round(args.years * 261)), seed=args.seed))
    with open(args.stage, "rb") as fh:
        stage = pickle.load(fh)["stage"]
    dates = stage.forecast_frame().index
    window = (dates[0], dates[-1])
    inputs = stage.regime_inputs()
    rows = {}
    for spec in allocation.sensitivity_strategies():
        rows[spec.name] = backtest.run(spec, uni.panel, inputs, window, args.cost).metrics.to_dict()
    print(pd.DataFrame(rows).T.round(4).to_string())


if __name__ == "__main__":
    main()
