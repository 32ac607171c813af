#!/usr/bin/env python3
"""Smoke test of the levipod_py extension module.

Builds the cdylib with cargo, copies it next to this script under the
importable name, then runs a short coupled simulation in both full and
reduced modes and checks they agree.
"""

import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def build_extension() -> None:
    subprocess.run(
        ["cargo", "build", "-p", "levipod-py", "--release"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "liblevipod_py.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(built, Path(__file__).parent / f"levipod_py{suffix}")


def main() -> int:
    build_extension()
    sys.path.insert(0, str(Path(__file__).parent))
    import levipod_py as lp

    cfg = lp.Config()
    cfg.density = 14e-3
    cfg.periods = 1
    cfg.window = (1, 60)
    cfg.eps = 1e-8
    cfg.validate()
    print(cfg)

    mesh = lp.generate_mesh(cfg)
    print(f"mesh: {mesh.node_count} nodes, {mesh.tri_count} triangles, "
          f"{mesh.dof_count} dofs, min angle {mesh.min_angle_deg:.1f} deg")
    assert mesh.dof_count > 100

    full = lp.run(cfg)
    assert len(full) == 100
    assert full.y[-1] > cfg.initial_clearance, "plate should lift"

    cfg.mode = "rom-deform"
    rom = lp.run(cfg)
    err = lp.l2_relative_error(rom, full)
    print(f"reduced vs full displacement error: {err:.3e} "
          f"(max rank {max(rom.rank)})")
    assert err < 1e-3

    report = lp.compare(rom, full)
    assert report["l2_error"] == err
    assert report["max_rank"] == max(rom.rank)

    with tempfile.TemporaryDirectory() as tmp:
        csv = Path(tmp) / "trajectory.csv"
        full.write_csv(csv)
        again = lp.Trajectory.read_csv(csv)
        assert again.y == full.y, "CSV round trip must be exact"

        cfg_path = Path(tmp) / "smoke.cfg"
        cfg.save(cfg_path)
        back = lp.Config.load(cfg_path)
        assert back.mode == "rom-deform"
        assert back.window == (1, 60)

        mesh.write(Path(tmp) / "mesh.txt")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
