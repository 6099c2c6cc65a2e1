#!/usr/bin/env python3
"""Smoke test for the chamsim_py extension module.

Builds the cdylib with cargo, stages it under an importable name, then
exercises every exposed entry point against known closed-form values.
Run from anywhere: python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

checks = 0


def check(label, ok, detail=""):
    global checks
    checks += 1
    print(f"{'PASS' if ok else 'FAIL'} {label}" + (f" ({detail})" if detail else ""))
    if not ok:
        sys.exit(1)


def stage_module(workdir: Path) -> None:
    subprocess.run(
        ["cargo", "build", "-p", "chamsim-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "debug" / "libchamsim_py.so"
    if not built.exists():  # macOS fallback
        built = ROOT / "target" / "debug" / "libchamsim_py.dylib"
    shutil.copy(built, workdir / "chamsim_py.so")
    sys.path.insert(0, str(workdir))


def main():
    workdir = Path(tempfile.mkdtemp(prefix="chamsim-py-"))
    stage_module(workdir)
    import chamsim_py as cp

    root2 = math.sqrt(2.0)
    a, a_alt, b, b_alt = cp.standard_angles()
    check(
        "standard angles",
        (a, a_alt, b, b_alt)
        == (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4),
    )

    # singlet correlations, both realizations
    for name, model in [
        ("functional", cp.SingletModel.functional()),
        ("outcome", cp.SingletModel.outcome()),
    ]:
        e = model.correlation(0.0, math.pi / 4)
        check(
            f"{name} correlation",
            abs(e - cp.quantum_reference(0.0, math.pi / 4)) <= 1e-9,
            f"E = {e:.12f}",
        )
        s = model.chsh(a, a_alt, b, b_alt)
        check(f"{name} CHSH", abs(abs(s) - 2 * root2) <= 1e-6, f"S = {s:.12f}")
        value, err = model.correlation_mc(0.0, math.pi / 4, 200_000, seed=4)
        check(
            f"{name} MC correlation",
            abs(value - cp.quantum_reference(0.0, math.pi / 4)) <= 3 * err,
            f"{value:.4f} +/- {err:.4f}",
        )

    check(
        "clean outcome model signals nothing",
        cp.SingletModel.outcome().no_signaling_defect(0.0, b, b_alt) <= 1e-12,
    )
    eps_defect = cp.SingletModel.perturbed_outcome(0.0, b, 0.01).no_signaling_defect(
        0.0, b, b_alt
    )
    check(
        "perturbed outcome model signals",
        abs(eps_defect - 0.01) <= 1e-12,
        f"defect = {eps_defect}",
    )

    # forward/backward OU solves
    ou = cp.Diffusion.ornstein_uhlenbeck(1.0, root2)
    mean, var, mass = ou.forward_moments(2.0, 0.25)
    check(
        "OU forward moments",
        abs(mean - 2 * math.exp(-1)) <= 1e-3
        and abs(var - (1 - 0.75 * math.exp(-2))) <= 1e-3
        and abs(mass - 1) <= 1e-6,
        f"mean {mean:.6f}, var {var:.6f}, mass {mass:.12f}",
    )
    classical = ou.classical_mean(2.0, 0.25)
    check(
        "OU classical mean via backward solve",
        abs(classical - 2 * math.exp(-1)) <= 1e-3,
        f"{classical:.6f}",
    )
    defect = ou.conjugation_defect("y^2", 2.0, 0.25)
    check("OU conjugation defect", defect <= 1e-3, f"{defect:.2e}")
    mc_mean, mc_var = ou.sample_moments(2.0, 0.25, paths=20_000, seed=5, dt=1e-2, threads=2)
    check(
        "OU path-sample moments",
        abs(mc_mean - 2 * math.exp(-1)) <= 0.05 and abs(mc_var - (1 - 0.75 * math.exp(-2))) <= 0.05,
        f"mean {mc_mean:.4f}, var {mc_var:.4f}",
    )

    # adaptive-measurement views of the singlet arms
    classical, observational, gap = cp.singlet_average_report(0.0, "alice")
    check(
        "singlet arm average report",
        gap <= 1e-9 and abs(classical - root2 / 4) <= 1e-3,
        f"classical {classical:.6f}, observational {observational:.6f}, gap {gap:.2e}",
    )
    (lo, hi), observed, coincide = cp.singlet_ranges(0.0)
    check(
        "singlet arm ranges",
        abs(lo + root2) <= 1e-3
        and abs(hi - root2) <= 1e-3
        and observed == [-1.0, 1.0]
        and not coincide,
        f"ontic [{lo:.6f}, {hi:.6f}], observed {observed}",
    )

    # detection loophole
    det = cp.Detection.default()
    s_sel = det.postselected_chsh(a, a_alt, b, b_alt)
    s_all = det.full_ensemble_chsh(a, a_alt, b, b_alt)
    check(
        "post-selected CHSH beats the Bell bound",
        abs(abs(s_sel) - 2 * root2) <= 1e-6,
        f"S = {s_sel:.12f}",
    )
    check("full-ensemble CHSH sits on the Bell bound", abs(s_all) == 2.0, f"S = {s_all}")
    rate = det.detection_rate(0.0, 0.0, "alice")
    check("alice detection rate 2/pi", abs(rate - 2 / math.pi) <= 1e-9, f"{rate:.12f}")
    lossy = det.fair_sampling_defect((0.0, b), (a_alt, b))
    fair = cp.Detection.no_loss().fair_sampling_defect((0.0, b), (a_alt, b))
    check(
        "fair-sampling dichotomy",
        fair <= 1e-12 and lossy > 0.1,
        f"no-loss {fair:.1e}, default {lossy:.4f}",
    )
    counts = det.run_events(0.0, b, pairs=100_000, seed=6, threads=2)
    coincidences = counts.n_pp + counts.n_pm + counts.n_mp + counts.n_mm
    covered = coincidences + counts.alice_singles + counts.bob_singles
    check(
        "event tallies cover every emission",
        counts.emitted == 100_000 and covered <= counts.emitted,
        f"coincidences {coincidences}, singles {counts.alice_singles}+{counts.bob_singles}",
    )
    check(
        "event estimate matches quadrature at 3 sigma",
        abs(counts.estimate - det.postselected_correlation(0.0, b)) <= 3 * counts.std_error,
        f"{counts.estimate:.4f} +/- {counts.std_error:.4f}",
    )

    # scenario runner round trip
    names = [name for name, _ in cp.list_scenarios()]
    check("seven scenarios listed", len(names) == 7 and "loophole" in names)
    results, manifest = cp.run_config(
        "[scenario]\nname = epr-chsh\n\n[output]\nprefix = smoke\n", str(workdir)
    )
    first = Path(results).read_text()
    check(
        "scenario run emits a self-describing table",
        first.startswith("#") and "abs_S" in first,
        results,
    )
    rerun_results, _ = cp.run_config(Path(manifest).read_text(), str(workdir / "rerun"))
    check(
        "manifest rerun is byte-identical",
        Path(rerun_results).read_text() == first,
    )

    bad = False
    try:
        cp.SingletModel.functional(grid_n=10)
    except ValueError:
        bad = True
    check("undersized grid raises ValueError", bad)

    print(f"all {checks} smoke checks passed")


if __name__ == "__main__":
    main()
