# example.py
# A small example showing how to use the pose_boost library to train a
# boosted pose network on synthetic hand poses and score it.

import logging
import tempfile
from pathlib import Path

from pose_boost import PoseBoostError, evaluate_checkpoint, load_experiment, train_model

# --- Configuration ---
# You can enable logging to see training progress and dataset generation.
logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")

# Small enough to finish in a few seconds on a laptop CPU.
OVERRIDES = {
    "network": {"preset": "tiny", "stacks": 1, "boosting": "fb_plus"},
    "graph": {"name": "hand21", "variant": "bidirectional"},
    "training": {"epochs": 3, "batch_size": 4},
    "data": {"num_train": 16, "num_test": 8, "background": "flat"},
}


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        overrides = dict(OVERRIDES)
        overrides["data"] = {**OVERRIDES["data"], "train_dir": str(work / "train"), "test_dir": str(work / "test")}
        config = load_experiment(overrides=overrides)
        print(f"[*] Training {config.network.boosting} on {config.graph.name}\n")

        try:
            # Missing datasets are generated on first use.
            result = train_model(config, work / "run")
            report = evaluate_checkpoint(result.checkpoint, config.data.test_dir, [2.0, 4.0])
        except PoseBoostError as e:
            print(f"An error occurred: {e}")
            return

        print("\n--- TRAINING COMPLETE ---")
        print(f"Steps: {result.steps}  final loss: {result.final_loss:.5f}")
        for threshold, value in sorted(report.pck.items()):
            print(f"PCK@{threshold:g}: {value:.3f}")
        print(f"Mean error: {report.mean_error:.3f} px over {report.count} samples")


if __name__ == "__main__":
    main()
