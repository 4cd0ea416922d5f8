"""Regenerate the reduced-grid golden files used by the test suite."""

from pathlib import Path

from qgtlab import experiments as ex

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"

if __name__ == "__main__":
    for name in ("fig2", "fig3", "fig4"):
        result = ex.run_scenario(ex.load_scenario(name, reduced=True))
        for path in ex.write_outputs(result, GOLDEN / name, "csv"):
            print(path)
        (GOLDEN / name / "run_info.json").unlink()
