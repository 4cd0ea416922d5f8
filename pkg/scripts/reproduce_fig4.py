"""Write the fig4 dataset.  Usage: python scripts/reproduce_fig4.py [--out DIR] [--reduced] [...]"""

import sys

from qgtlab.cli import cli_main

if __name__ == "__main__":
    sys.exit(cli_main(["reproduce", "fig4", *sys.argv[1:]]))
