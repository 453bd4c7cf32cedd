"""Write California Housing with random-forest predictions for the desk-scale check.

Output columns: the 8 features, MedHouseVal, and pred_<seed> for each seed.
Each forest is fit on the full data (n_estimators=200, max_depth=6,
random_state=seed); the engine only sees its outputs.

    python scripts/california_predictions.py data/california_housing_rf.csv
"""

import sys

from sklearn.datasets import fetch_california_housing
from sklearn.ensemble import RandomForestRegressor

SEEDS = [11, 13, 23, 29, 37, 43, 53, 59, 71, 83]


def main(out):
    frame = fetch_california_housing(as_frame=True).frame
    x = frame.drop(columns=["MedHouseVal"])
    y = frame["MedHouseVal"]
    for seed in SEEDS:
        forest = RandomForestRegressor(n_estimators=200, max_depth=6, random_state=seed, n_jobs=-1)
        frame[f"pred_{seed}"] = forest.fit(x, y).predict(x)
    frame.to_csv(out, index=False, float_format="%.17g")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/california_housing_rf.csv")
