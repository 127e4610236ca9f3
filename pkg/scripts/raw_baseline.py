"""Write flattened raw pixels of every patch in a manifest as a descriptor file."""
import sys

import numpy as np

from ckn.fileio import write_vectors
from ckn.synth import load_patches


def main():
    if len(sys.argv) != 3:
        sys.exit("usage: raw_baseline.py MANIFEST OUT")
    patches = load_patches(sys.argv[1])
    write_vectors(sys.argv[2], np.array([p.ravel() for p in patches]))


if __name__ == "__main__":
    main()
