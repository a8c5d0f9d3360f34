"""Drive the command line from Python and inspect what it writes.

Every run directory carries the artifacts plus a manifest naming the
command, the config hash, and the wall time, so results can always be
traced back to the exact configuration text that produced them.
"""
import json
import tempfile
from pathlib import Path

from nfpelab.cli import main, shipped_configs


def run(argv):
    print("$ nfpelab " + " ".join(argv))
    code = main(argv)
    print(f"  (exit {code})")
    return code


def main_demo():
    cfgs = shipped_configs()
    print("shipped configurations:")
    for name, path in sorted(cfgs.items()):
        print(f"  {name:28s} {path.name}")

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "heat"
        run(["evolve", "--config", str(cfgs["heat_1d"]), "--out", str(out)])
        for p in sorted(out.iterdir()):
            print(f"  wrote {p.name} ({p.stat().st_size} bytes)")

        manifest = json.loads((out / "manifest.json").read_text())
        print(f"  config sha256: {manifest['config_sha256'][:16]}...")

        rate_out = Path(tmp) / "rate.json"
        run(["rate", "--run", str(out), "--window", "0.01,0.05",
             "--json", str(rate_out)])
        fit = json.loads(rate_out.read_text())
        print(f"  fitted slope {fit['slope']:+.4f} over {fit['n_points']} samples")

        run(["verify", "--suite", "appendix_algebra"])


if __name__ == "__main__":
    main_demo()
