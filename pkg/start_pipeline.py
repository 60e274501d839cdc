#!/usr/bin/env python3
"""
Style Conditioned Recommendations - pipeline starter

Runs synth -> train -> train --no-condition -> train --no-label-prop -> eval
-> inject for several seeds as subprocesses of `python -m scr`, then checks
the desk-scale acceptance thresholds: SCR vs VAE-CF NDCG@20 over the seeds,
per-style text encoder AUC and its gap to logistic regression, and the
injection shift diagonal and presence increase. Exits 1 when any fails.
"""

import csv
import os
import subprocess
import sys

MIN_STYLE_AUC = 0.9
LR_AUC_SLACK = 0.02
MIN_PRESENCE_INCREASE = 0.5


def read_report(path: str) -> list:
    """Rows of a run TSV as dicts, skipping the manifest / seed lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines, delimiter="\t"))


def as_float(value: str):
    return None if value in ("", "NA") else float(value)


class PipelineRun:
    """Drives the stages of one multi-seed experiment."""

    def __init__(self, out_dir: str, seeds: list, quick: bool = False):
        self.script_dir = os.path.dirname(os.path.abspath(__file__))
        self.out_dir = os.path.abspath(out_dir)
        self.seeds = seeds
        self.quick = quick
        self.processes = {}  # {name: process}
        self.results = {}    # {seed: {metric: value}}

    def _start_process(self, name: str, args: list):
        """Start one `python -m scr` stage."""
        cmd = [sys.executable, "-m", "scr"] + args
        proc = subprocess.Popen(
            cmd,
            cwd=self.script_dir,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            bufsize=1
        )
        self.processes[name] = proc
        print(f"[PIPELINE] Started: {name}")
        return proc

    def _stop_process(self, name: str):
        if name in self.processes:
            proc = self.processes[name]
            if proc.poll() is None:
                proc.terminate()
                proc.wait(timeout=5)
            del self.processes[name]
            print(f"[PIPELINE] Stopped: {name}")

    def run_stage(self, name: str, args: list):
        """Run a stage to completion, echoing its output; exits on failure."""
        proc = self._start_process(name, args)
        for line in iter(proc.stdout.readline, ''):
            print(f"  {line.rstrip()}")
        code = proc.wait()
        del self.processes[name]
        if code != 0:
            print(f"[PIPELINE] {name} failed with exit code {code}")
            sys.exit(code)

    def _epochs(self) -> list:
        if self.quick:
            return ["--epochs-text", "10", "--epochs-vae", "10"]
        return []

    def run_seed(self, seed: int):
        base = os.path.join(self.out_dir, f"seed{seed}")
        data = os.path.join(base, "data")
        scr_run = os.path.join(base, "scr")
        cf_run = os.path.join(base, "vae-cf")
        no_lp_run = os.path.join(base, "scr-no-lp")
        data_flags = ["--clicks", os.path.join(data, "clicks.tsv"),
                      "--embeddings", os.path.join(data, "embeddings.tsv"),
                      "--labels", os.path.join(data, "labels.tsv")]
        common = ["--seed", str(seed)]

        print(f"\n[PIPELINE] Seed {seed}")
        self.run_stage(f"synth/{seed}", ["synth", "--out", data] + common)
        self.run_stage(f"train/{seed}", ["train", *data_flags, "--run-dir", scr_run,
                                         *self._epochs()] + common)
        self.run_stage(f"train-cf/{seed}", ["train", *data_flags, "--run-dir", cf_run,
                                            "--no-condition", *self._epochs()] + common)
        self.run_stage(f"train-no-lp/{seed}", ["train", *data_flags, "--run-dir", no_lp_run,
                                               "--no-label-prop", *self._epochs()] + common)
        self.run_stage(f"eval/{seed}", ["eval", "--run-dir", scr_run,
                                        "--ablation", cf_run, no_lp_run] + common)
        self.run_stage(f"inject/{seed}", ["inject", "--run-dir", scr_run, "--style", "all",
                                          "--max-users", "100"] + common)
        self.results[seed] = self.collect(scr_run)

    def collect(self, run_dir: str) -> dict:
        reports = os.path.join(run_dir, "reports")
        ranking = {row["model"]: float(row["ndcg@20"])
                   for row in read_report(os.path.join(reports, "ranking.tsv"))}
        result = {"ndcg_scr": ranking.get("scr"), "ndcg_cf": ranking.get("vae-cf"),
                  "ndcg_no_lp": ranking.get("scr-no-lp")}

        auc_path = os.path.join(reports, "style_auc.tsv")
        if os.path.exists(auc_path):
            rows = read_report(auc_path)
            enc = [v for v in (as_float(r["text_encoder"]) for r in rows) if v is not None]
            lr = [v for v in (as_float(r["logistic_regression"]) for r in rows) if v is not None]
            result["auc_min"] = min(enc) if enc else None
            result["auc_mean"] = sum(enc) / len(enc) if enc else None
            result["auc_lr"] = sum(lr) / len(lr) if lr else None

        shift = read_report(os.path.join(run_dir, "inject", "shift_matrix.tsv"))
        dominant = True
        for row in shift:
            style = row["injected"]
            values = {k: float(v) for k, v in row.items() if k != "injected"}
            dominant &= values[style] > 0 and values[style] >= max(values.values())
        result["diagonal_dominant"] = dominant

        presence = read_report(os.path.join(run_dir, "inject", "presence.tsv"))
        rel = [v for v in (as_float(r["relative_increase"]) for r in presence) if v is not None]
        result["presence_increase"] = sum(rel) / len(rel) if rel else None
        return result

    def failures(self) -> list:
        """Acceptance thresholds missed, as readable lines; empty when all hold."""
        failed = []
        scr = sum(r["ndcg_scr"] for r in self.results.values()) / len(self.results)
        cf = sum(r["ndcg_cf"] for r in self.results.values()) / len(self.results)
        if scr < cf:
            failed.append(f"mean NDCG@20 scr {scr:.4f} < vae-cf {cf:.4f}")
        for seed, r in self.results.items():
            if r.get("auc_min") is None:
                failed.append(f"seed {seed}: no style AUC was measured")
            else:
                if r["auc_min"] < MIN_STYLE_AUC:
                    failed.append(f"seed {seed}: lowest style AUC {r['auc_min']:.3f} < {MIN_STYLE_AUC}")
                if r["auc_lr"] is not None and r["auc_mean"] < r["auc_lr"] - LR_AUC_SLACK:
                    failed.append(f"seed {seed}: mean AUC {r['auc_mean']:.3f} trails LR "
                                  f"{r['auc_lr']:.3f} by more than {LR_AUC_SLACK}")
            if not r["diagonal_dominant"]:
                failed.append(f"seed {seed}: injection shift diagonal is not dominant")
            inc = r["presence_increase"]
            if inc is None or inc < MIN_PRESENCE_INCREASE:
                shown = "NA" if inc is None else f"{100.0 * inc:+.1f}%"
                failed.append(f"seed {seed}: presence increase {shown} "
                              f"< +{100.0 * MIN_PRESENCE_INCREASE:.0f}%")
        return failed

    def report(self) -> list:
        print("\n" + "=" * 60)
        print("         ACCEPTANCE SUMMARY")
        print("=" * 60)
        wins = 0
        for seed, r in self.results.items():
            better = r["ndcg_scr"] >= r["ndcg_cf"]
            wins += better
            auc = "NA" if r.get("auc_mean") is None else f"{r['auc_mean']:.3f}"
            lr = "NA" if r.get("auc_lr") is None else f"{r['auc_lr']:.3f}"
            inc = "NA" if r["presence_increase"] is None else f"{100.0 * r['presence_increase']:+.1f}%"
            no_lp = "NA" if r.get("ndcg_no_lp") is None else f"{r['ndcg_no_lp']:.4f}"
            print(f"[PIPELINE] seed {seed}: NDCG@20 scr {r['ndcg_scr']:.4f} vs vae-cf "
                  f"{r['ndcg_cf']:.4f} ({'ok' if better else 'worse'}), scr w/o LP {no_lp}; "
                  f"AUC {auc} (LR {lr}); diagonal dominant {r['diagonal_dominant']}; presence {inc}")
        scr = sum(r["ndcg_scr"] for r in self.results.values()) / len(self.results)
        cf = sum(r["ndcg_cf"] for r in self.results.values()) / len(self.results)
        print("-" * 60)
        print(f"[PIPELINE] mean NDCG@20 scr {scr:.4f} vs vae-cf {cf:.4f}; "
              f"scr at least as good on {wins}/{len(self.results)} seeds")
        failed = self.failures()
        for line in failed:
            print(f"[PIPELINE] FAILED: {line}")
        if not failed:
            print("[PIPELINE] All acceptance thresholds met")
        return failed

    def run(self) -> int:
        print("=" * 60)
        print("         STYLE CONDITIONED RECOMMENDATIONS PIPELINE")
        print("=" * 60)
        try:
            self.run_stage("grad-check", ["grad-check", "-q"])
            for seed in self.seeds:
                self.run_seed(seed)
            return 1 if self.report() else 0
        except KeyboardInterrupt:
            print("\n\n[PIPELINE] Stopping...")
            return 130
        finally:
            for name in list(self.processes.keys()):
                self._stop_process(name)


def main():
    import argparse

    parser = argparse.ArgumentParser(description='Style conditioned recommendations pipeline')
    parser.add_argument('--out', default='runs', help='Output directory')
    parser.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2], help='Seeds to run')
    parser.add_argument('--quick', action='store_true', help='Fewer training epochs')
    args = parser.parse_args()

    pipeline = PipelineRun(args.out, args.seeds, quick=args.quick)
    sys.exit(pipeline.run())


if __name__ == "__main__":
    main()
