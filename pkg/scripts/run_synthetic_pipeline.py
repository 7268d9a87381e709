"""End-to-end pipeline demo on synthetic data.

Generates a blob corpus, fits PCA + K-means, emits train and inference
conditioning features, exports the 2-D projection, and builds a small
fairness report from simulated transcripts. Everything goes through the
CLI entry point, so the artifacts match what the installed command
produces, byte for byte.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from acoustic_cohorts.cli import main as cli
from acoustic_cohorts.kmeans import load_assignments


def run(argv: list[str]) -> None:
    print("$ acoustic-cohorts " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def write_eval_systems(assignments: Path, out_dir: Path, seed: int) -> tuple[Path, Path]:
    """Simulated transcript pairs: cluster-conditioned system fixes one error
    on a seeded subset, so the report shows per-group relative differences."""
    ids, labels = load_assignments(str(assignments))
    rng = np.random.default_rng(seed)
    baseline, treatment = [], []
    for utt_id, label in zip(ids, labels):
        words = [f"word{j}" for j in rng.integers(0, 200, 6)]
        ref = " ".join(words)
        degraded = " ".join(words[:5] + ["mistake"])
        improved = rng.random() < 0.6
        groups = {"cluster": f"c{int(label)}", "length": "short" if len(ref) < 40 else "long"}
        baseline.append({"utt_id": utt_id, "ref": ref, "hyp": degraded, "groups": groups})
        treatment.append({"utt_id": utt_id, "ref": ref,
                          "hyp": ref if improved else degraded, "groups": groups})
    base_path, treat_path = out_dir / "baseline.jsonl", out_dir / "treatment.jsonl"
    base_path.write_text("".join(json.dumps(r) + "\n" for r in baseline))
    treat_path.write_text("".join(json.dumps(r) + "\n" for r in treatment))
    return base_path, treat_path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="artifacts/synthetic-demo")
    parser.add_argument("--clusters", type=int, default=5)
    parser.add_argument("--per-cluster", type=int, default=60)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = out / "corpus.jsonl"
    seed = str(args.seed)

    run(["synth", "generate", "--clusters", str(args.clusters),
         "--per-cluster", str(args.per_cluster), "--dim", str(args.dim),
         "--seed", seed, "--out", str(corpus)])
    run(["cluster", "fit", "--corpus", str(corpus), "--dim", str(args.dim),
         "--k", str(args.clusters), "--seed", seed, "--out-dir", str(out)])
    run(["features", "emit", "--emit-mode", "train",
         "--assignments", str(out / "assignments.csv"), "--k", str(args.clusters),
         "--seed", seed, "--out", str(out / "train_features.csv")])
    run(["features", "emit", "--emit-mode", "inference", "--corpus", str(corpus),
         "--k", str(args.clusters), "--out", str(out / "inference_features.csv")])
    run(["viz", "project", "--corpus", str(corpus), "--dim", str(args.dim),
         "--k", str(args.clusters), "--seed", seed,
         "--label-axis", "synthetic_truth", "--out", str(out / "projection.csv")])

    base_path, treat_path = write_eval_systems(out / "assignments.csv", out, args.seed)
    run(["eval", "report", "--baseline", str(base_path), "--treatment", str(treat_path),
         "--axes", "cluster", "--seed", seed, "--resamples", "500",
         "--out", str(out / "report.csv")])

    print(f"\nartifacts in {out}:")
    for path in sorted(out.iterdir()):
        print(f"  {path.name}")


if __name__ == "__main__":
    main()
