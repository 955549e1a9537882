"""End-to-end run on the clean synthetic benchmark.

Generates the benchmark, trains stages 2-4, and prints ZSL and GZSL
accuracies. Mirrors what `freqzsl synth` + `train` + `eval` do, without
touching disk.
"""
import argparse
import dataclasses
import time

from freqzsl import cli, pipeline, synthbench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--mode", choices=("piecewise", "learnable_only", "off"),
                    default="piecewise")
    args = ap.parse_args()

    cfg = dataclasses.replace(cli.tuned_synth_config(), seed=args.seed,
                              stage2_epochs=args.epochs, enhance_mode=args.mode)
    gen = synthbench.generate(cli.make_synth_config(cfg))
    oracle = synthbench.oracle_nearest_prototype(gen)
    print(f"oracle: overall {oracle.overall:.3f} seen {oracle.test_seen:.3f} "
          f"unseen {oracle.test_unseen:.3f}")

    t0 = time.perf_counter()
    model = cli.train_full(cfg, gen.dataset, gen.table, gen.split)
    zsl = pipeline.evaluate_zsl(model.vae, model.featurizer, model.unseen_clf,
                                gen.dataset.by_partition("test-unseen"))
    report = pipeline.evaluate_gzsl(model.vae, model.featurizer, model.gate,
                                    model.seen_clf, model.unseen_clf,
                                    gen.dataset.by_partition("test-seen"),
                                    gen.dataset.by_partition("test-unseen"))
    dt = time.perf_counter() - t0
    print(f"trained in {dt:.1f}s; final total loss "
          f"{model.loss_log[-1]['total']:.4f}")
    print(f"zsl unseen accuracy: {zsl:.4f}")
    print(f"gzsl: seen {report.seen_accuracy:.4f} unseen {report.unseen_accuracy:.4f} "
          f"harmonic {report.harmonic:.4f}")


if __name__ == "__main__":
    main()
