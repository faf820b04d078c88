"""
Training on synthetic colour-cast domains
=========================================

Generates a blue-green cast domain X and a clean domain Y, trains the toy
preset for a while and evaluates the result on fresh cast images.

    python demos/toy_training.py [steps] [workdir]

The default 150 steps take about a minute; 500 steps removes nearly all of
the cast.
"""

import sys
import tempfile
from pathlib import Path

from uwcolor.config import toy_config
from uwcolor.data import make_toy_domains, scan_domains
from uwcolor.evaluate import evaluate_directory
from uwcolor.trainer import train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 150
work = Path(sys.argv[2]) if len(sys.argv) > 2 else Path(tempfile.mkdtemp(prefix="uwcolor_demo_"))

# Red is cut to 30% and green to 90%, roughly what a few metres of water does.
domains = make_toy_domains(work / "train", 64, 64, cast_gains=(0.3, 0.9, 1.0), seed=1)
held_out = make_toy_domains(work / "held_out", 16, 64, cast_gains=(0.3, 0.9, 1.0), seed=2)
print("channel means  X:", [round(v, 3) for v in domains["X"]], " Y:", [round(v, 3) for v in domains["Y"]])

cfg = toy_config(steps=steps, seed=0)
dataset = scan_domains(domains["dir_x"], domains["dir_y"], cfg.arch.image_size, seed=cfg.train.seed)


def progress(step, report):
    if step % 25 == 0:
        print(f"step {step:4d}  cycle {report.cyc:.3f}  ssim {report.ssim_fwd:.3f}  "
              f"G adv {report.adv_g_fwd:.3f}  D_Y {report.adv_d_y:.3f}")


result = train(cfg, dataset, out_dir=work / "run", callback=progress)
print("checkpoints:", [p.name for p in result.checkpoints])

summary = evaluate_directory(result.checkpoints[-1], held_out["dir_x"], report=work / "report.tsv",
                             strips_dir=work / "strips")
print(f"held-out gray-world deviation {summary.grayworld_in:.4f} -> {summary.grayworld_out:.4f}")
print(f"luminance SSIM {summary.ssim_lum:.3f}, cycle L1 {summary.cycle_l1:.4f}")
print("side-by-side strips in", work / "strips")
