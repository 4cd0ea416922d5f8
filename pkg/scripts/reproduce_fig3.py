"""Write the fig3 dataset.  Usage: python scripts/reproduce_fig3.py [--out DIR] [--reduced] [...]"""

import sys

from qgtlab.cli import cli_main

if __name__ == "__main__":
    sys.exit(cli_main(["reproduce", "fig3", *sys.argv[1:]]))
