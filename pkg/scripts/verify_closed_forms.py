"""Run every verification suite of the command-line tool."""
import sys

from stein_queues.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify", "--suite", "all"] + sys.argv[1:]))
